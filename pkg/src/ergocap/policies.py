"""Causal coding/control policies.

A policy couples an encoder state machine (sees the current state, its
own memory and past channel outputs via feedback) with a controller
state machine (sees channel outputs only). The simulation driver calls
``encode`` then ``receive`` exactly once per step, so both sides evolve
on the same received-symbol stream; over a noiseless channel this makes
the emitted control sequence a function of the symbol history, hence at
most |alphabet|^T distinct control sequences by time T.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgument


class Policy:
    """Interface: reset(), encode(x) -> symbol, receive(q') -> control."""

    input_alphabet: int = 2

    def reset(self) -> None:
        raise NotImplementedError

    def encode(self, x) -> int:
        raise NotImplementedError

    def receive(self, qp: int):
        raise NotImplementedError


class NullPolicy(Policy):
    """Open-loop baseline: a fixed symbol and zero control."""

    def __init__(self, alphabet: int = 2, dim: int = 1):
        if alphabet < 1:
            raise InvalidArgument("alphabet size must be >= 1")
        self.input_alphabet = alphabet
        self.dim = dim

    def reset(self) -> None:
        pass

    def encode(self, x) -> int:
        return 0

    def receive(self, qp: int):
        return 0.0 if self.dim == 1 else np.zeros(self.dim)


class UniformQuantizerPolicy(Policy):
    """Memoryless quantized feedback on a fixed box.

    The encoder emits the cell index of x in a uniform partition of
    [low, high] with 2**bits cells per axis; cells are half-open
    [lo, hi) with the top cell closed, and states outside the box
    saturate to the boundary cell. The controller applies
    u = -nominal(cell center); ``nominal`` defaults to the identity and
    should be the model's zero-noise drift.
    """

    def __init__(self, low, high, bits: int, nominal: Optional[Callable] = None):
        if bits < 1:
            raise InvalidArgument("bits must be >= 1")
        self.low = np.atleast_1d(np.asarray(low, dtype=float))
        self.high = np.atleast_1d(np.asarray(high, dtype=float))
        if self.low.shape != self.high.shape or np.any(self.high <= self.low):
            raise InvalidArgument("quantizer box needs elementwise high > low")
        self.dim = self.low.shape[0]
        self.cells_per_axis = 2**bits
        self.input_alphabet = self.cells_per_axis**self.dim
        self.width = (self.high - self.low) / self.cells_per_axis
        self.nominal = nominal if nominal is not None else (lambda z: z)

    def reset(self) -> None:
        pass

    def cell_of(self, x) -> int:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.floor((x - self.low) / self.width).astype(np.int64)
        idx = np.clip(idx, 0, self.cells_per_axis - 1)
        flat = 0
        for i in range(self.dim):
            flat = flat * self.cells_per_axis + int(idx[i])
        return flat

    def center_of(self, symbol: int):
        idx = np.empty(self.dim, dtype=np.int64)
        for i in range(self.dim - 1, -1, -1):
            idx[i] = symbol % self.cells_per_axis
            symbol //= self.cells_per_axis
        center = self.low + (idx + 0.5) * self.width
        return float(center[0]) if self.dim == 1 else center

    def encode(self, x) -> int:
        return self.cell_of(x)

    def receive(self, qp: int):
        z = self.center_of(int(qp))
        u = self.nominal(z)
        return -float(u) if self.dim == 1 else -np.asarray(u, dtype=float)


class AdaptiveZoomPolicy(Policy):
    """Zooming quantizer around the origin for scalar loops.

    Symbol 0 signals escape (state outside the window); symbols
    1..2**bits - 1 index uniform cells of the window [-h, h]. The window
    shrinks by ``a * 2**(1 - bits) + margin`` on in-range symbols and
    doubles on escape, so for a linear plant of slope a the loop
    contracts whenever bits > log2(a) + 1. With bits == 1 the window has
    a single cell (in/out information only); the shrink factor drops to
    ``a / 2 + margin`` there, which still floors the window at the noise
    scale in the non-expansive case.

    The controller mirrors the window from received symbols; the encoder
    sees the same symbols through channel feedback, so both stay in sync
    even over a noisy channel.

    ``noise_amplitude`` sets a window floor at which the in-window
    condition is invariant (quantization error plus noise never exceeds
    the floor). Without it the window shrinks to ``min_halfwidth`` and,
    for expansion a >= 2, an escape can outrun the doubling window, so
    pass the noise scale whenever the plant is noisy.
    """

    def __init__(
        self,
        contraction: float,
        initial_bin: float,
        bits: int,
        nominal: Optional[Callable] = None,
        margin: float = 0.05,
        min_halfwidth: float = 1e-9,
        noise_amplitude: float = 0.0,
        trace: bool = False,
    ):
        if contraction <= 0:
            raise InvalidArgument("contraction must be positive")
        if bits < 1:
            raise InvalidArgument("bits must be >= 1 (need at least 2 symbols)")
        if initial_bin <= 0:
            raise InvalidArgument("initial_bin must be positive")
        self.a = float(contraction)
        self.bits = bits
        self.input_alphabet = 2**bits
        self.n_cells = 2**bits - 1
        if bits >= 2:
            self.shrink = self.a * 2.0 ** (1 - bits) + margin
        else:
            self.shrink = self.a / 2.0 + margin
        self.initial_bin = float(initial_bin)
        floor = min_halfwidth
        if noise_amplitude > 0.0 and self.a / self.n_cells < 1.0:
            # smallest window whose cell error + noise still fits inside it
            floor = max(floor, 1.2 * noise_amplitude / (1.0 - self.a / self.n_cells))
        self.min_halfwidth = floor
        self.nominal = nominal if nominal is not None else (lambda z: self.a * z)
        self.tracing = trace
        self.reset()

    def reset(self) -> None:
        self.h = max(self.initial_bin, self.min_halfwidth)
        self.trace: list = [] if self.tracing else None

    @property
    def window_halfwidth(self) -> float:
        return self.h

    def encode(self, x) -> int:
        x = float(x)
        if abs(x) > self.h:
            return 0
        cell = int((x + self.h) / (2.0 * self.h) * self.n_cells)
        if cell >= self.n_cells:  # x == h lands in the top cell
            cell = self.n_cells - 1
        return cell + 1

    def receive(self, qp: int):
        qp = int(qp)
        if qp == 0:
            u = 0.0
            self.h = min(self.h * 2.0, 1e12)
        else:
            z = -self.h + (qp - 0.5) * (2.0 * self.h / self.n_cells)
            u = -float(self.nominal(z))
            self.h = max(self.h * self.shrink, self.min_halfwidth)
        if self.tracing:
            self.trace.append(self.h)
        return u


def null_policy(alphabet: int = 2, dim: int = 1) -> NullPolicy:
    return NullPolicy(alphabet=alphabet, dim=dim)


def uniform_quantizer_policy(low, high, bits: int, nominal: Optional[Callable] = None) -> UniformQuantizerPolicy:
    return UniformQuantizerPolicy(low, high, bits, nominal=nominal)


def adaptive_zoom_policy(
    contraction: float,
    initial_bin: float,
    bits: int,
    nominal: Optional[Callable] = None,
    **kwargs,
) -> AdaptiveZoomPolicy:
    return AdaptiveZoomPolicy(contraction, initial_bin, bits, nominal=nominal, **kwargs)


def distinct_control_sequences(policy: Policy, alphabet: int, T: int) -> set:
    """Enumerate the controls a policy can emit over a noiseless channel.

    Feeds every symbol history of length T through the controller side
    and collects the distinct control sequences; the result can never
    exceed alphabet**T entries.
    """
    import itertools

    seqs = set()
    for hist in itertools.product(range(alphabet), repeat=T):
        policy.reset()
        u = tuple(tuple(np.atleast_1d(policy.receive(q)).tolist()) for q in hist)
        seqs.add(u)
    return seqs

"""Finite-alphabet channels, capacity, couplings and block codes.

Symbols are integers 0..|alphabet|-1. Capacity is computed by
alternating maximization (Blahut-Arimoto); for the noiseless kind it is
log2 of the alphabet size exactly, and feedback does not change it for
a memoryless channel.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidArgument

_ROW_TOL = 1e-12


@dataclass(frozen=True)
class ChannelModel:
    """Row-stochastic transition matrix P(q'|q) plus alphabet sizes."""

    matrix: np.ndarray
    kind: str = "dmc-with-feedback"  # "noiseless" | "dmc-with-feedback"
    name: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] < 2:
            raise InvalidArgument("transition matrix must be 2-D with >= 2 input symbols")
        if np.any(m < -_ROW_TOL):
            raise InvalidArgument("transition probabilities must be nonnegative")
        if np.max(np.abs(m.sum(axis=1) - 1.0)) > _ROW_TOL:
            raise InvalidArgument("each transition-matrix row must sum to 1")
        if self.kind == "noiseless":
            if m.shape[0] != m.shape[1] or not np.array_equal(m, np.eye(m.shape[0])):
                raise InvalidArgument("noiseless kind requires a square identity matrix")
        elif self.kind != "dmc-with-feedback":
            raise InvalidArgument(f"unknown channel kind '{self.kind}'")
        # row-wise cumulative sums for fast sampling
        object.__setattr__(self, "_cdf", np.cumsum(m, axis=1))

    @property
    def input_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def output_size(self) -> int:
        return self.matrix.shape[1]


def noiseless_channel(size: int) -> ChannelModel:
    if size < 2:
        raise InvalidArgument("alphabet size must be >= 2")
    return ChannelModel(np.eye(size), kind="noiseless", name=f"noiseless:{size}")


def bsc(p: float) -> ChannelModel:
    if not 0.0 <= p <= 1.0:
        raise InvalidArgument("crossover probability must lie in [0, 1]")
    return ChannelModel(np.array([[1 - p, p], [p, 1 - p]]), name=f"bsc:{p:g}")


def bec(p: float) -> ChannelModel:
    """Binary erasure channel; output symbol 2 is the erasure."""
    if not 0.0 <= p <= 1.0:
        raise InvalidArgument("erasure probability must lie in [0, 1]")
    return ChannelModel(np.array([[1 - p, 0.0, p], [0.0, 1 - p, p]]), name=f"bec:{p:g}")


def channel_preset(spec: str) -> ChannelModel:
    """Parse 'noiseless:K', 'bsc:p' or 'bec:p'."""
    try:
        kind, _, arg = spec.partition(":")
        if kind == "noiseless":
            return noiseless_channel(int(arg))
        if kind == "bsc":
            return bsc(float(arg))
        if kind == "bec":
            return bec(float(arg))
    except (ValueError, InvalidArgument) as exc:
        raise InvalidArgument(f"bad channel preset '{spec}': {exc}") from exc
    raise InvalidArgument(f"unknown channel preset '{spec}'")


def transmit(channel: ChannelModel, q: int, rng: Optional[np.random.Generator] = None) -> int:
    """Draw one output symbol from row q; memoryless across calls."""
    q = int(q)
    if not 0 <= q < channel.input_size:
        raise InvalidArgument(f"input symbol {q} not in alphabet of size {channel.input_size}")
    if channel.kind == "noiseless":
        return q
    if rng is None:
        raise InvalidArgument("a noisy channel needs a caller-supplied rng")
    return int(np.searchsorted(channel._cdf[q], rng.random(), side="right"))


# ---------------------------------------------------------------------------
# capacity (alternating maximization)
# ---------------------------------------------------------------------------

def _ba_step(P: np.ndarray, logP: np.ndarray, p: np.ndarray):
    """One alternating-maximization update; returns (p', lower, upper)."""
    qout = p @ P
    logq = np.where(qout > 0, np.log2(qout, where=qout > 0), 0.0)
    D = np.einsum("ij,ij->i", P, logP - logq[None, :])
    weights = p * np.exp2(D)
    lower = math.log2(weights.sum())
    upper = float(np.max(D))
    return weights / weights.sum(), lower, upper


def capacity_iterates(channel: ChannelModel, n_iter: int) -> list:
    """Lower-bound sequence of the capacity iteration (nondecreasing)."""
    P = channel.matrix
    logP = np.where(P > 0, np.log2(P, where=P > 0), 0.0)
    p = np.full(P.shape[0], 1.0 / P.shape[0])
    out = []
    for _ in range(n_iter):
        p, lower, _ = _ba_step(P, logP, p)
        out.append(lower)
    return out


def capacity(channel: ChannelModel, tol: float = 1e-9, max_iter: int = 100000) -> float:
    """Channel capacity in bits, within tol of sup_p I(input; output).

    The lower bound log2(sum_i p_i 2^{D_i}) is nondecreasing across
    iterations and the gap to the upper bound max_i D_i controls the
    stopping rule. Noiseless channels return log2 |alphabet| exactly.
    """
    if tol <= 0:
        raise InvalidArgument("tol must be positive")
    if channel.kind == "noiseless":
        return math.log2(channel.input_size)
    P = channel.matrix
    logP = np.where(P > 0, np.log2(P, where=P > 0), 0.0)
    p = np.full(P.shape[0], 1.0 / P.shape[0])
    lower = 0.0
    for _ in range(max_iter):
        p, lower, upper = _ba_step(P, logP, p)
        if upper - lower < tol:
            break
    return max(lower, 0.0)


# ---------------------------------------------------------------------------
# couplings and total variation
# ---------------------------------------------------------------------------

def _check_pmf(v, label: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise InvalidArgument(f"{label} must be a nonempty 1-D pmf")
    if np.any(v < -_ROW_TOL):
        raise InvalidArgument(f"{label} has negative mass")
    if abs(math.fsum(v.tolist()) - 1.0) > 1e-9:
        raise InvalidArgument(f"{label} must sum to 1")
    return v


def tv_distance(mu, nu) -> float:
    """Total variation sum_x |mu(x) - nu(x)| on a shared finite support."""
    mu = _check_pmf(mu, "mu")
    nu = _check_pmf(nu, "nu")
    if mu.shape != nu.shape:
        raise InvalidArgument("mu and nu must share a support")
    return math.fsum(np.abs(mu - nu).tolist())


@dataclass(frozen=True)
class CouplingPlan:
    """Joint table of (X, Y) with marginals mu, nu and maximal diagonal."""

    joint: np.ndarray
    mu: np.ndarray
    nu: np.ndarray

    @property
    def diagonal_mass(self) -> float:
        return math.fsum(np.diag(self.joint).tolist())

    @property
    def prob_mismatch(self) -> float:
        return 1.0 - self.diagonal_mass

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n (x, y) pairs from the joint table."""
        flat = self.joint.ravel()
        idx = rng.choice(flat.size, size=n, p=flat / flat.sum())
        return np.stack(np.unravel_index(idx, self.joint.shape), axis=1)


def maximal_coupling(mu, nu) -> CouplingPlan:
    """Coupling putting mass min(mu, nu) on the diagonal, so that
    P(X != Y) = 0.5 * sum |mu - nu| exactly; residuals are coupled
    product-wise off the diagonal (any arrangement would do).
    """
    mu = _check_pmf(mu, "mu")
    nu = _check_pmf(nu, "nu")
    if mu.shape != nu.shape:
        raise InvalidArgument("mu and nu must share a support")
    k = mu.size
    diag = np.minimum(mu, nu)
    joint = np.zeros((k, k))
    np.fill_diagonal(joint, diag)
    rem = 1.0 - math.fsum(diag.tolist())
    if rem > 0:
        a = np.maximum(mu - diag, 0.0)
        b = np.maximum(nu - diag, 0.0)
        joint += np.outer(a, b) / rem
    return CouplingPlan(joint=joint, mu=mu, nu=nu)


# ---------------------------------------------------------------------------
# block codes and error simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockCode:
    """An (M, n) code; the encoder may use channel feedback.

    ``encoder(message, output_prefix) -> symbol`` is called once per
    position with the outputs received so far (empty tuple first), which
    covers both plain table codes and feedback strategies.
    ``decoder(outputs) -> message`` must be total on output n-tuples.
    """

    n_messages: int
    block_length: int
    encoder: Callable[[int, tuple], int]
    decoder: Callable[[tuple], int]

    @property
    def rate(self) -> float:
        return math.log2(self.n_messages) / self.block_length


def table_code(codewords: Sequence[Sequence[int]], decoder: Callable[[tuple], int]) -> BlockCode:
    """Wrap an explicit codeword table (no feedback use)."""
    book = [tuple(int(s) for s in word) for word in codewords]
    n = len(book[0])
    if any(len(wd) != n for wd in book):
        raise InvalidArgument("all codewords must share the block length")
    return BlockCode(
        n_messages=len(book),
        block_length=n,
        encoder=lambda msg, prefix: book[msg][len(prefix)],
        decoder=decoder,
    )


def repetition_code(n: int) -> BlockCode:
    """Binary repetition code with majority decoding (ties decode to 0)."""
    if n < 1:
        raise InvalidArgument("block length must be >= 1")

    def decode(outputs: tuple) -> int:
        return 1 if sum(outputs) * 2 > n else 0

    return table_code([[0] * n, [1] * n], decode)


@dataclass(frozen=True)
class CodeErrorEstimate:
    avg_error: float
    max_error: float
    ci_halfwidth: float
    per_message_trials: np.ndarray
    per_message_errors: np.ndarray
    trials: int


def simulate_code_error(
    channel: ChannelModel,
    code: BlockCode,
    rng: np.random.Generator,
    trials: int,
    source: Optional[np.ndarray] = None,
) -> CodeErrorEstimate:
    """Monte-Carlo average and maximal decoding error with a binomial CI.

    The 95% normal-approximation CI is for the average error; feedback
    encoders see the output prefix exactly as a channel with feedback
    provides it.
    """
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    M = code.n_messages
    if source is None:
        source = np.full(M, 1.0 / M)
    else:
        source = _check_pmf(source, "source")
        if source.size != M:
            raise InvalidArgument("source pmf size must equal the message count")
    msg_draws = rng.choice(M, size=trials, p=source)
    per_trials = np.zeros(M, dtype=np.int64)
    per_errors = np.zeros(M, dtype=np.int64)
    for msg in msg_draws:
        prefix: tuple = ()
        for _ in range(code.block_length):
            s = code.encoder(int(msg), prefix)
            if not 0 <= s < channel.input_size:
                raise InvalidArgument(f"encoder emitted symbol {s} outside the channel alphabet")
            prefix = prefix + (transmit(channel, s, rng),)
        per_trials[msg] += 1
        if code.decoder(prefix) != msg:
            per_errors[msg] += 1
    n_err = int(per_errors.sum())
    avg = n_err / trials
    ci = 1.96 * math.sqrt(max(avg * (1 - avg), 1e-12) / trials)
    with np.errstate(invalid="ignore"):
        rates = np.where(per_trials > 0, per_errors / np.maximum(per_trials, 1), 0.0)
    return CodeErrorEstimate(
        avg_error=avg,
        max_error=float(np.max(rates)),
        ci_halfwidth=ci,
        per_message_trials=per_trials,
        per_message_errors=per_errors,
        trials=trials,
    )


def best_code_error(channel: ChannelModel, n_messages: int, block_length: int) -> float:
    """Exact minimal average error over all codebooks with ML decoding.

    Exhausts codeword multisets (messages are exchangeable and uniform),
    so it is only meant for tiny (M, n). The optimum decoder for a
    uniform source picks argmax_i P(y | x(i)).
    """
    P = channel.matrix
    n_in, n_out = P.shape
    words = list(itertools.product(range(n_in), repeat=block_length))
    outs = list(itertools.product(range(n_out), repeat=block_length))
    # P(y-block | x-block) for every word pair
    word_lik = np.empty((len(words), len(outs)))
    for i, wd in enumerate(words):
        for j, y in enumerate(outs):
            p = 1.0
            for s, o in zip(wd, y):
                p *= P[s, o]
            word_lik[i, j] = p
    best = 1.0
    for book in itertools.combinations_with_replacement(range(len(words)), n_messages):
        lik = word_lik[list(book)]
        success = lik.max(axis=0).sum() / n_messages
        best = min(best, 1.0 - success)
    return best

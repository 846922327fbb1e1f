"""Initial-state bin decoding across the channel (scalar systems).

Conditioning on one noise realization, the closed loop is viewed as a
code for the initial state: the control sequence observed at the
controller determines a feasible-initial-set midpoint, and bins of a
common width around the possible midpoints quantize the initial
support. The experiment measures how often the decoded bin index
disagrees with the true one and compares the empirical rate against
the budget alpha + half the initial mass of the ambiguous region.

Bin bookkeeping: bins are merged into a disjoint sub-collection by a
greedy left-to-right sweep that skips overlapping bins; each kept bin
is extended rightward by at most one bin width (stopping at the next
kept bin) and runs of L extended bins are joined into blocks. Decoding
inside the unextended region is unambiguous; inside the last extension
of a block the decoder flips a fair coin between the adjacent indices.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .bounds import cell_log_det_infimum
from .errors import InvalidArgument
from .occupation import PartitionSpec, accumulate
from .rng import substream
from .spanning import interval_estimate_AT
from .systems import (
    InitialDistribution,
    NoiseModel,
    SystemModel,
    run_closed_loop,
)

Interval = Tuple[float, float]


# ---------------------------------------------------------------------------
# interval-set arithmetic (finite unions of half-open intervals)
# ---------------------------------------------------------------------------

def merge_intervals(intervals: Sequence[Interval]) -> List[Interval]:
    out: List[Interval] = []
    for lo, hi in sorted((i for i in intervals if i[1] > i[0])):
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def intersect_sets(a: Sequence[Interval], b: Sequence[Interval]) -> List[Interval]:
    out = []
    for alo, ahi in a:
        for blo, bhi in b:
            lo, hi = max(alo, blo), min(ahi, bhi)
            if hi > lo:
                out.append((lo, hi))
    return merge_intervals(out)


def subtract_sets(a: Sequence[Interval], b: Sequence[Interval]) -> List[Interval]:
    result = list(merge_intervals(a))
    for blo, bhi in merge_intervals(b):
        nxt = []
        for lo, hi in result:
            if bhi <= lo or blo >= hi:
                nxt.append((lo, hi))
                continue
            if lo < blo:
                nxt.append((lo, blo))
            if bhi < hi:
                nxt.append((bhi, hi))
        result = nxt
    return result


def set_measure(intervals: Sequence[Interval]) -> float:
    return float(sum(hi - lo for lo, hi in intervals))


def initial_mass(init: InitialDistribution, intervals: Sequence[Interval], n_quad: int = 512) -> float:
    """pi_0 mass of an interval union by midpoint quadrature per piece."""
    total = 0.0
    for lo, hi in merge_intervals(intervals):
        xs = np.linspace(lo, hi, n_quad, endpoint=False) + (hi - lo) / (2 * n_quad)
        total += (hi - lo) / n_quad * sum(init.density(x) for x in xs)
    return min(total, 1.0)


# ---------------------------------------------------------------------------
# bin construction
# ---------------------------------------------------------------------------

@dataclass
class BinSystem:
    """Bins around candidate midpoints plus the derived block structure."""

    width: float                    # common bin width rho_T
    bins: List[Interval]            # one per midpoint, sorted
    kept: List[Interval]            # disjoint sub-collection C_i
    extended: List[Interval]        # D_i = C_i plus a bounded right extension
    block_of: List[int]             # D index -> block index
    n_blocks: int
    covered: List[Interval] = field(default_factory=list)        # M: union of bins
    ambiguous: List[Interval] = field(default_factory=list)      # M minus the unambiguous part

    def _owning_extended(self, x: float) -> int:
        los = [d[0] for d in self.extended]
        i = bisect_right(los, x) - 1
        return max(i, 0)

    def true_index(self, x: float) -> int:
        """Block index of the extended bin owning x (nearest-left in gaps)."""
        return self.block_of[self._owning_extended(x)]

    def decode(self, midpoint: float, rng: np.random.Generator) -> int:
        """Block index from an estimated midpoint.

        Inside the covered region the owning block is returned; outside
        it, a fair coin decides between the owning block and the next.
        """
        i = self.block_of[self._owning_extended(midpoint)]
        if any(lo <= midpoint <= hi for lo, hi in self.covered):
            return i
        if rng.random() < 0.5:
            return min(i + 1, self.n_blocks - 1)
        return i


def build_bins(midpoints: Sequence[float], width: float, block_size: int) -> BinSystem:
    """Greedy disjoint extraction, bounded extension and L-joining."""
    if width <= 0:
        raise InvalidArgument("bin width must be positive")
    if block_size < 1:
        raise InvalidArgument("block size L must be >= 1")
    if not midpoints:
        raise InvalidArgument("need at least one midpoint")
    bins = sorted((m - width / 2, m + width / 2) for m in midpoints)
    kept: List[Interval] = []
    for b in bins:
        if not kept or b[0] >= kept[-1][1]:
            kept.append(b)
    extended: List[Interval] = []
    for j, (lo, hi) in enumerate(kept):
        cap = hi + width
        if j + 1 < len(kept):
            cap = min(cap, kept[j + 1][0])
        extended.append((lo, max(cap, hi)))
    n2 = len(kept)
    n_blocks = n2 // block_size + 1
    block_of = [i // block_size for i in range(n2)]
    covered = merge_intervals(bins)
    dropped = []
    for j in range(n_blocks):
        last = min((j + 1) * block_size, n2) - 1
        if last < j * block_size:
            continue
        ext_lo, ext_hi = extended[last]
        kept_hi = kept[last][1]
        if ext_hi > kept_hi:
            dropped.append((kept_hi, ext_hi))
    ambiguous = intersect_sets(covered, dropped)
    return BinSystem(
        width=width,
        bins=bins,
        kept=kept,
        extended=extended,
        block_of=block_of,
        n_blocks=n_blocks,
        covered=covered,
        ambiguous=ambiguous,
    )


# ---------------------------------------------------------------------------
# the experiment
# ---------------------------------------------------------------------------

@dataclass
class DecoderParams:
    """Knobs of the bin-decoding experiment.

    ``b`` defaults to the half-width of the initial support;
    ``m_table`` (cell masses Q(B_k) nu(D_l)) is estimated from a pilot
    closed-loop ensemble when not supplied.
    """

    r: float = 0.05
    L: int = 8
    alpha: float = 0.1
    b: Optional[float] = None
    m_table: Optional[np.ndarray] = None
    n_pilot: int = 10
    pilot_horizon: Optional[int] = None


@dataclass
class DecoderReport:
    error_rate: Optional[float]
    ci_halfwidth: Optional[float]
    budget: Optional[float]
    bin_width: float
    n_bins: int
    n_disjoint: int
    n_blocks: int
    ambiguous_mass: float
    diameters: List[float]
    trials: int
    degenerate: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "error_rate": self.error_rate,
            "ci": self.ci_halfwidth,
            "budget": self.budget,
            "bin_width": self.bin_width,
            "n_bins": self.n_bins,
            "n_disjoint": self.n_disjoint,
            "n_blocks": self.n_blocks,
            "ambiguous_mass": self.ambiguous_mass,
            "trials": self.trials,
            "degenerate": self.degenerate,
            "note": self.note,
        }


def _pilot_m_table(model, noise, init, policy, channel, partition, T, seed, params) -> np.ndarray:
    from .systems import simulate  # local import keeps module load cheap

    horizon = params.pilot_horizon or max(50 * T, 1000)
    freqs = []
    for i in range(params.n_pilot):
        traj = simulate(model, noise, init, policy, channel, horizon, seed + 7919, path_index=i)
        occ = accumulate(traj, partition)
        freqs.append(occ.state_freq[: partition.n_state])
    q_hat = np.mean(freqs, axis=0)
    return np.outer(q_hat, noise.cell_probs)


def bin_decoder_experiment(
    model: SystemModel,
    noise: NoiseModel,
    init: InitialDistribution,
    policy,
    channel,
    partition: PartitionSpec,
    params: DecoderParams,
    T: int,
    trials: int,
    seed: int,
) -> DecoderReport:
    """Run the midpoint decoder against the true bin index.

    One noise realization is drawn and held fixed; each trial draws a
    fresh initial state, runs the closed loop, recovers the control
    sequence from the channel outputs and decodes the initial bin from
    the feasible-set midpoint. Requires a scalar model and a compact
    initial support with declared density bounds.
    """
    if model.dim != 1:
        raise InvalidArgument("the decoder experiment is scalar-only")
    if init.support is None or init.rho_min is None:
        raise InvalidArgument("initial distribution must declare a compact support and rho_min")
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    k_lo, k_hi = float(init.support[0]), float(init.support[1])
    b = params.b if params.b is not None else (k_hi - k_lo) / 2.0
    w = noise.sample(substream(seed, "decoder-noise"), T)
    m_table = params.m_table
    if m_table is None:
        m_table = _pilot_m_table(model, noise, init, policy, channel, partition, T, seed, params)
    m_table = np.asarray(m_table, dtype=float)

    # common bin width rho_T = 2b / prod c_{k,l}^{m_{k,l} (1-3r) T}
    rng_inf = substream(seed, "cell-inf")
    log2_prod = 0.0
    for k, box in enumerate(partition.state_cells):
        for l in range(partition.n_noise):
            if m_table[k, l] <= 0:
                continue
            c_log2 = cell_log_det_infimum(model, box, partition.noise, l, rng_inf)
            log2_prod += m_table[k, l] * (1.0 - 3.0 * params.r) * T * c_log2
    log2_width = math.log2(2.0 * b) - float(log2_prod)
    width = float(2.0 ** log2_width) if log2_width < 300 else math.inf
    if width > (k_hi - k_lo):
        return DecoderReport(
            error_rate=None, ci_halfwidth=None, budget=None,
            bin_width=width, n_bins=0, n_disjoint=0, n_blocks=0,
            ambiguous_mass=0.0, diameters=[], trials=0, degenerate=True,
            note="bin width exceeds the initial support; no contraction at this horizon",
        )

    # realized control sequences and their feasible-set midpoints
    rng_x0 = substream(seed, "decoder-x0")
    x0s = init.sample(rng_x0, trials)
    cache: dict = {}
    trial_keys = []
    for i in range(trials):
        rng_ch = substream(seed, "decoder-channel", i)
        traj = run_closed_loop(model, policy, channel, float(x0s[i]), w, rng_ch, seed=seed)
        u = np.asarray(traj.u, dtype=float)
        if u.shape[0] < T:
            u = np.concatenate([u, np.zeros(T - u.shape[0])])
        key = u.tobytes()
        trial_keys.append(key)
        if key not in cache:
            est = interval_estimate_AT(
                model, u, w, partition, params.r, m_table, T, (k_lo, k_hi)
            )
            cache[key] = est
    midpoints = [est.midpoint for est in cache.values() if est is not None]
    diameters = [est.diameter for est in cache.values() if est is not None]
    if not midpoints:
        return DecoderReport(
            error_rate=None, ci_halfwidth=None, budget=None,
            bin_width=width, n_bins=0, n_disjoint=0, n_blocks=0,
            ambiguous_mass=0.0, diameters=[], trials=trials, degenerate=True,
            note="every realized control sequence produced an empty feasible set",
        )
    bins = build_bins(midpoints, width, params.L)
    ambiguous_mass = initial_mass(init, bins.ambiguous)

    rng_tie = substream(seed, "decoder-tie")
    errors = 0
    for i in range(trials):
        est = cache[trial_keys[i]]
        y_true = bins.true_index(float(x0s[i]))
        if est is None:
            errors += 1  # undecodable trial counts as an error
            continue
        if bins.decode(est.midpoint, rng_tie) != y_true:
            errors += 1
    rate = errors / trials
    ci = 1.96 * math.sqrt(max(rate * (1 - rate), 1e-12) / trials)
    return DecoderReport(
        error_rate=rate,
        ci_halfwidth=ci,
        budget=0.5 * ambiguous_mass + params.alpha,
        bin_width=width,
        n_bins=len(bins.bins),
        n_disjoint=len(bins.kept),
        n_blocks=bins.n_blocks,
        ambiguous_mass=ambiguous_mass,
        diameters=diameters,
        trials=trials,
    )

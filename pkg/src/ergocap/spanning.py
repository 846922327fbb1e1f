"""Spanning sets, minimal covers and stabilization-entropy estimates.

A control sequence "covers" a scenario (an initial state plus a noise
realization) when the open-loop trajectory meets every per-cell
occupation-frequency threshold 1 - r_{k,l} simultaneously. The smallest
number of sequences covering a (1 - rho) fraction of scenarios is the
finite-sample stand-in for the minimal spanning-set cardinality s(T),
and the growth rate of log2 s(T) estimates the stabilization entropy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import InvalidArgument
from .occupation import PartitionSpec
from .rng import substream
from .systems import InitialDistribution, NoiseModel, SystemModel, run_closed_loop

_EPS = 1e-12
EXHAUSTIVE_CANDIDATE_CAP = 20
ENUMERATION_CAP = 4096


@dataclass(frozen=True)
class RateCollection:
    """Occupation-rate requirements r_{k,l} with the aggregate budget r.

    Feasibility means every entry lies in [0, 1], the aggregate
    1 - r = sum(1 - r_{k,l}) lies in [0, 1], and (when the table was
    derived from cell masses) the interior thresholds stay in (0, 1).
    ``suggested_eps`` carries the largest admissible eps when a derived
    table turned out infeasible.
    """

    table: np.ndarray  # (n_state, n_noise)
    eps: Optional[float] = None
    interior_ok: bool = True
    suggested_eps: Optional[float] = None

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        object.__setattr__(self, "table", t)
        if t.ndim != 2:
            raise InvalidArgument("rate table must be 2-D (state cells x noise cells)")

    @property
    def one_minus_r(self) -> float:
        return float(np.sum(1.0 - self.table))

    @property
    def r(self) -> float:
        return 1.0 - self.one_minus_r

    @property
    def feasible(self) -> bool:
        entries_ok = bool(np.all(self.table >= -_EPS) and np.all(self.table <= 1 + _EPS))
        return entries_ok and self.interior_ok and -_EPS <= self.one_minus_r <= 1 + _EPS


def uniform_rate(n_state: int, n_noise: int, slack: float) -> RateCollection:
    """Single-threshold collection: every cell must hold 1 - slack of the time.

    Only meaningful for small cell counts; feasibility requires
    n_state * n_noise * (1 - slack) <= 1, e.g. the one-cell case.
    """
    return RateCollection(np.full((n_state, n_noise), slack, dtype=float))


@dataclass(frozen=True)
class Scenario:
    """One realization omega: the initial state and a noise sequence."""

    x0: float
    w: np.ndarray


def draw_scenarios(
    noise: NoiseModel,
    init: InitialDistribution,
    T: int,
    count: int,
    seed: int,
) -> List[Scenario]:
    """Independent scenarios from named substreams (seed, "scenario", i)."""
    out = []
    for i in range(count):
        rng = substream(seed, "scenario", i)
        x0 = init.sample(rng, 1)[0]
        out.append(Scenario(x0=float(x0), w=noise.sample(rng, T)))
    return out


def grid_scenarios(low: float, high: float, count: int, T: int) -> List[Scenario]:
    """Deterministic noise-free scenarios on an initial-state grid."""
    xs = np.linspace(low, high, count)
    return [Scenario(x0=float(x), w=np.zeros(T)) for x in xs]


def open_loop_states(model: SystemModel, x0: float, u: np.ndarray, w: np.ndarray, T: int) -> np.ndarray:
    """States x_0..x_{T-1} of the open-loop system under fixed (u, w)."""
    xs = np.empty(T)
    x = float(x0)
    for t in range(T):
        xs[t] = x
        if t < T - 1:
            x = model.f(x, float(w[t])) + float(u[t])
            if not math.isfinite(x):
                xs[t + 1:] = np.inf
                return xs
    return xs


def spanning_check(
    u: np.ndarray,
    scenario: Scenario,
    partition: PartitionSpec,
    rates: RateCollection,
    T: int,
    model: SystemModel,
) -> bool:
    """True iff the joint occupation fractions meet 1 - r_{k,l} for all cells."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != T or scenario.w.shape[0] < T:
        raise InvalidArgument("control and noise sequences must cover the horizon")
    if rates.table.shape != (partition.n_state, partition.n_noise):
        raise InvalidArgument("rate table shape must match the partition")
    xs = open_loop_states(model, scenario.x0, u, scenario.w, T)
    sidx = partition.state_cell_index(xs)
    nidx = partition.noise.cell_index(scenario.w[:T])
    counts = np.zeros((partition.n_state + 1, partition.n_noise), dtype=np.int64)
    np.add.at(counts, (sidx, nidx), 1)
    frac = counts[: partition.n_state] / T
    return bool(np.all(frac >= 1.0 - rates.table - _EPS))


def harvest_candidates(
    model: SystemModel,
    policy,
    channel,
    scenarios: Sequence[Scenario],
    T: int,
    seed: int = 0,
) -> List[np.ndarray]:
    """Distinct control sequences the closed loop emits on the scenarios.

    This is the construction behind the policy-derived spanning sets:
    run the actual coding/control loop on each scenario's noise and
    deduplicate the resulting controls (byte-exact, order preserved).
    """
    seen = {}
    for i, sc in enumerate(scenarios):
        rng = substream(seed, "harvest", i)
        traj = run_closed_loop(model, policy, channel, sc.x0, sc.w[:T], rng, seed=seed)
        u = np.asarray(traj.u, dtype=float)
        if u.shape[0] < T:  # diverged early; pad with zeros to keep length T
            u = np.concatenate([u, np.zeros(T - u.shape[0])])
        seen.setdefault(u.tobytes(), u)
    return list(seen.values())


def enumerate_candidates(values: Sequence[float], T: int) -> List[np.ndarray]:
    """Full control grid values^T, capped at ENUMERATION_CAP sequences."""
    total = len(values) ** T
    if total > ENUMERATION_CAP:
        raise InvalidArgument(
            f"enumeration of {total} sequences exceeds the cap of {ENUMERATION_CAP}"
        )
    return [np.array(seq, dtype=float) for seq in itertools.product(values, repeat=T)]


@dataclass
class SpanningInstance:
    """Scenario set, candidate controls and the coverage matrix between them."""

    T: int
    rho: float
    scenarios: List[Scenario]
    candidates: List[np.ndarray]
    coverage: np.ndarray  # (n_candidates, n_scenarios) bool

    @property
    def target(self) -> int:
        """Scenarios that must be covered: ceil((1 - rho) * count)."""
        return int(math.ceil((1.0 - self.rho) * len(self.scenarios) - _EPS))


def build_instance(
    model: SystemModel,
    partition: PartitionSpec,
    rates: RateCollection,
    scenarios: Sequence[Scenario],
    candidates: Sequence[np.ndarray],
    T: int,
    rho: float,
) -> SpanningInstance:
    if not 0.0 <= rho < 1.0:
        raise InvalidArgument("rho must lie in [0, 1)")
    cover = np.zeros((len(candidates), len(scenarios)), dtype=bool)
    for ci, u in enumerate(candidates):
        for si, sc in enumerate(scenarios):
            cover[ci, si] = spanning_check(u, sc, partition, rates, T, model)
    return SpanningInstance(
        T=T, rho=rho, scenarios=list(scenarios), candidates=list(candidates), coverage=cover
    )


@dataclass
class SpanningResult:
    """Minimal-cover size with the method that produced it.

    ``size`` is exact for method "exhaustive", an upper bound for
    "greedy", and inf when no subset reaches the coverage target.
    """

    size: float
    indices: List[int]
    method: str

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.size)


def min_spanning(instance: SpanningInstance) -> SpanningResult:
    """Smallest candidate subset covering the scenario target.

    Exhaustive subset search up to EXHAUSTIVE_CANDIDATE_CAP candidates
    (bitmask-based), greedy set cover beyond that.
    """
    n_cand, n_scen = instance.coverage.shape
    target = instance.target
    if target == 0:
        return SpanningResult(size=0, indices=[], method="exhaustive")
    if n_cand == 0:
        return SpanningResult(size=math.inf, indices=[], method="infeasible")
    masks = []
    for ci in range(n_cand):
        bits = 0
        for si in np.nonzero(instance.coverage[ci])[0]:
            bits |= 1 << int(si)
        masks.append(bits)
    all_union = 0
    for b in masks:
        all_union |= b
    if all_union.bit_count() < target:
        return SpanningResult(size=math.inf, indices=[], method="infeasible")
    if n_cand <= EXHAUSTIVE_CANDIDATE_CAP:
        for size in range(1, n_cand + 1):
            for combo in itertools.combinations(range(n_cand), size):
                u = 0
                for ci in combo:
                    u |= masks[ci]
                if u.bit_count() >= target:
                    return SpanningResult(size=size, indices=list(combo), method="exhaustive")
        return SpanningResult(size=math.inf, indices=[], method="infeasible")
    chosen: List[int] = []
    covered = 0
    while covered.bit_count() < target:
        gains = [(masks[ci] | covered).bit_count() for ci in range(n_cand)]
        best = int(np.argmax(gains))
        if gains[best] == covered.bit_count():
            return SpanningResult(size=math.inf, indices=[], method="infeasible")
        chosen.append(best)
        covered |= masks[best]
    return SpanningResult(size=len(chosen), indices=chosen, method="greedy")


@dataclass
class EntropyEstimate:
    """Growth rate of log2 s(T): least-squares slope over the largest
    horizons plus the raw max of log2(s)/T as the limsup surrogate."""

    slope: float
    limsup_surrogate: float
    horizons: List[int]
    sizes: List[float]

    @property
    def infinite(self) -> bool:
        return math.isinf(self.slope)


def entropy_estimate(points: Sequence[tuple]) -> EntropyEstimate:
    """Fit h from (T, s) pairs; any infinite s makes the estimate infinite."""
    if len(points) < 3:
        raise InvalidArgument("need at least 3 horizons")
    pts = sorted((int(t), float(s)) for t, s in points)
    horizons = [t for t, _ in pts]
    sizes = [s for _, s in pts]
    if any(math.isinf(s) for s in sizes):
        return EntropyEstimate(math.inf, math.inf, horizons, sizes)
    if any(s < 1 for s in sizes):
        raise InvalidArgument("spanning sizes must be >= 1 for the log fit")
    k = max(3, (len(pts) + 1) // 2)
    tail = pts[-k:]
    ts = np.array([t for t, _ in tail], dtype=float)
    logs = np.array([math.log2(s) for _, s in tail])
    slope = float(np.polyfit(ts, logs, 1)[0])
    surrogate = max(math.log2(s) / t for t, s in pts)
    return EntropyEstimate(slope, surrogate, horizons, sizes)


# ---------------------------------------------------------------------------
# initial-state interval estimation (scalar contraction experiment)
# ---------------------------------------------------------------------------

@dataclass
class IntervalEstimate:
    """Grid approximation of the feasible initial-state set A_T(u, w)."""

    T: int
    u: np.ndarray
    w: np.ndarray
    resolution: int
    points: np.ndarray   # retained grid points
    hull: tuple          # (inf, sup)
    midpoint: float
    diameter: float


def _at_retained(
    model: SystemModel,
    u: np.ndarray,
    w: np.ndarray,
    partition: PartitionSpec,
    thresholds: np.ndarray,
    check_from: int,
    T: int,
    grid: np.ndarray,
    chunk: int = 1 << 16,
) -> np.ndarray:
    nidx = partition.noise.cell_index(w[:T])
    n, m = partition.n_state, partition.n_noise
    keep = []
    for start in range(0, grid.size, chunk):
        xs = grid[start:start + chunk].copy()
        g = xs.size
        counts = np.zeros((g, n, m), dtype=np.int32)
        alive = np.ones(g, dtype=bool)
        x = xs.copy()
        rows = np.arange(g)
        for t in range(T):
            sidx = partition.state_cell_index(x)
            inside = sidx < n
            counts[rows[inside], sidx[inside], nidx[t]] += 1
            N = t + 1
            if N >= check_from:
                need = thresholds * N - 1e-9
                alive &= np.all(counts >= need[None, :, :], axis=(1, 2))
            if t < T - 1:
                x = model.f(x, float(w[t])) + float(u[t])
        keep.append(xs[alive])
    return np.concatenate(keep) if keep else np.empty(0)


def interval_estimate_AT(
    model: SystemModel,
    u: np.ndarray,
    w: np.ndarray,
    partition: PartitionSpec,
    r: float,
    m_table: np.ndarray,
    T: int,
    support: tuple,
    initial_resolution: int = 1 << 10,
    resolution_cap: int = 1 << 20,
) -> Optional[IntervalEstimate]:
    """Initial states meeting the running-frequency conditions at every
    checkpoint N in {ceil(T(1-3r)), ..., T}; returns the retained grid
    points, their hull and midpoint, or None when the set is empty.

    The per-cell requirement at horizon N is a joint visit count of at
    least m_{k,l} * (1 - r) * N. The grid over the initial support is
    refined x2 until the hull diameter moves < 1% (and at least 8 points
    survive) or the resolution cap is hit. Scalar models only; the model
    map must broadcast over numpy arrays (all scalar built-ins do).
    """
    if model.dim != 1:
        raise InvalidArgument("interval estimation is defined for scalar models")
    if not 0 < r < 1:
        raise InvalidArgument("r must lie in (0, 1)")
    # For T < 1/(3r) the checkpoint range degenerates to {T}; the clamp
    # below just keeps the literal formula well-defined when 3r >= 1.
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if u.shape[0] < T or w.shape[0] < T:
        raise InvalidArgument("control and noise sequences must cover the horizon")
    m_table = np.asarray(m_table, dtype=float)
    if m_table.shape != (partition.n_state, partition.n_noise):
        raise InvalidArgument("m table shape must match the partition")
    lo, hi = float(support[0]), float(support[1])
    check_from = max(1, math.ceil(T * (1.0 - 3.0 * r) - 1e-12))
    thresholds = m_table * (1.0 - r)
    res = max(initial_resolution, 2)
    prev_diam = None
    best = None
    while res <= resolution_cap:
        grid = np.linspace(lo, hi, res)
        kept = _at_retained(model, u, w, partition, thresholds, check_from, T, grid)
        if kept.size:
            hull = (float(kept.min()), float(kept.max()))
            diam = hull[1] - hull[0]
            best = IntervalEstimate(
                T=T, u=u, w=w, resolution=res, points=kept,
                hull=hull, midpoint=0.5 * (hull[0] + hull[1]), diameter=diam,
            )
            if kept.size >= 8 and prev_diam is not None:
                if diam == prev_diam == 0.0 or (
                    prev_diam > 0 and abs(diam - prev_diam) / prev_diam < 0.01
                ):
                    return best
            prev_diam = diam
        res *= 2
    return best

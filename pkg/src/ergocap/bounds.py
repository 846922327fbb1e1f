"""Capacity lower bounds from empirical occupation measures.

The headline quantity is the double-averaged log-determinant
E[log2 |det Df_w(x)|] under the estimated state measure and the noise
law, estimated by Monte Carlo with a batch-means CI. Step-function
minorants over a cell partition and the single-set variant provide
cruder but deterministic lower bounds, and the verdict compares the
estimates against the channel capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgument
from .occupation import Box, PartitionSpec
from .spanning import RateCollection
from .systems import NoiseModel, SystemModel, Trajectory, log_det_jacobian

_EPS = 1e-12


@dataclass
class McBound:
    estimate: float
    ci_halfwidth: float
    n_pairs: int


def harvest_states(paths: Sequence[Trajectory], burn_in: float = 0.1) -> np.ndarray:
    """Pool post-burn-in states from an ensemble as draws from Q-hat.

    The first ``burn_in`` fraction of each path is discarded; early
    transients are not representative of the asymptotic mean.
    """
    if not paths:
        raise InvalidArgument("need at least one path")
    if not 0.0 <= burn_in < 1.0:
        raise InvalidArgument("burn_in must lie in [0, 1)")
    parts = []
    for p in paths:
        start = int(p.horizon * burn_in)
        parts.append(p.x[start:])
    return np.concatenate(parts)


def integrand_bound_mc(
    model: SystemModel,
    state_samples: np.ndarray,
    noise: NoiseModel,
    n_pairs: int,
    rng: np.random.Generator,
) -> McBound:
    """Monte-Carlo mean of log2 |det Df_w(x)| over independent (x, w) pairs.

    States are resampled from ``state_samples`` (the empirical
    asymptotic-mean draws), noise fresh from its law. The CI halfwidth
    comes from batch means over ~sqrt(n) blocks; it is exactly zero for
    constant-Jacobian models.
    """
    if n_pairs < 10:
        raise InvalidArgument("need at least 10 Monte-Carlo pairs")
    state_samples = np.asarray(state_samples, dtype=float)
    if state_samples.shape[0] == 0:
        raise InvalidArgument("state sample pool is empty")
    idx = rng.integers(0, state_samples.shape[0], size=n_pairs)
    xs = state_samples[idx]
    ws = noise.sample(rng, n_pairs)
    vals = np.empty(n_pairs)
    scalar = model.dim == 1
    for i in range(n_pairs):
        x = float(xs[i]) if scalar else xs[i]
        w = float(ws[i]) if scalar and model.noise_dim == 1 else ws[i]
        vals[i] = log_det_jacobian(model, x, w)
    n_batches = max(2, int(math.sqrt(n_pairs)))
    batches = np.array_split(vals, n_batches)
    means = np.array([b.mean() for b in batches])
    ci = 1.96 * means.std(ddof=1) / math.sqrt(n_batches)
    return McBound(estimate=float(vals.mean()), ci_halfwidth=float(ci), n_pairs=n_pairs)


def _grid_infimum(model: SystemModel, xs: np.ndarray, ws: np.ndarray) -> float:
    """Minimum of log2 |det Df_w(x)| over explicit point sets."""
    best = math.inf
    scalar = model.dim == 1
    for x_row in xs:
        x = float(x_row) if scalar and np.ndim(x_row) == 0 else (
            float(x_row[0]) if scalar else x_row)
        for w_row in ws:
            w = float(w_row) if scalar and model.noise_dim == 1 else w_row
            best = min(best, log_det_jacobian(model, x, w))
    return best


def cell_log_det_infimum(
    model: SystemModel,
    box: Box,
    noise: NoiseModel,
    noise_cell: int,
    rng: np.random.Generator,
    grid_points: int = 1024,
    noise_draws: int = 64,
) -> float:
    """Deterministic-grid minimum of log2 |det Df_w(x)| on a cell pair.

    One-sided: the grid minimum upper-bounds the true infimum, which is
    reported as such wherever it is used.
    """
    per_axis = grid_points if box.dim == 1 else min(grid_points, 64)
    axes = [np.linspace(box.lo[i], box.hi[i], per_axis + 1) for i in range(box.dim)]
    if box.dim == 1:
        grid = axes[0]
    else:
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.stack([m.ravel() for m in mesh], axis=1)
    ws = noise.sample_cell(noise_cell, rng, noise_draws)
    return _grid_infimum(model, grid, ws)


def partition_lower_bound(
    model: SystemModel,
    partition: PartitionSpec,
    q_hat: np.ndarray,
    nu_hat: np.ndarray,
    rng: np.random.Generator,
    lattice_points: int = 1024,
    noise_draws: int = 64,
    refine: bool = False,
) -> float:
    """Step-function minorant: sum of Q(B_k) nu(D_l) inf_cell log2 |det|.

    Cell infima are evaluated on one lattice over the partition hull
    that does not depend on the cell count (plus exact cell endpoints),
    so refining a lattice-aligned partition can only refine each
    infimum's point set downward and the bound is monotone under
    refinement. The lattice minimum still upper-bounds the true infimum
    (one-sided, reported as such). Cell pairs with zero empirical mass
    contribute nothing. Negative infima are kept; the bound may be
    nonpositive and then says nothing.
    """
    if partition.dim != 1:
        raise InvalidArgument("partition bounds are defined for scalar partitions")
    q_hat = np.asarray(q_hat, dtype=float)
    nu_hat = np.asarray(nu_hat, dtype=float)
    if q_hat.shape[0] != partition.n_state or nu_hat.shape[0] != partition.n_noise:
        raise InvalidArgument("mass vectors must match the partition cells")

    def evaluate(res: int, draws: int) -> float:
        hull_lo = min(float(c.lo[0]) for c in partition.state_cells)
        hull_hi = max(float(c.hi[0]) for c in partition.state_cells)
        lattice = np.linspace(hull_lo, hull_hi, res + 1)
        ws = [noise_draws_cache.setdefault(
            (l, draws), partition.noise.sample_cell(l, rng, draws))
            for l in range(partition.n_noise)]
        total = 0.0
        for k, box in enumerate(partition.state_cells):
            lo, hi = float(box.lo[0]), float(box.hi[0])
            pts = lattice[(lattice >= lo) & (lattice <= hi)]
            pts = np.union1d(pts, [lo, hi])
            infs = [
                _grid_infimum(model, pts, ws[l]) if q_hat[k] * nu_hat[l] > 0 else None
                for l in range(partition.n_noise)
            ]
            for l in range(partition.n_noise):
                mass = q_hat[k] * nu_hat[l]
                if mass > 0.0:
                    total += mass * infs[l]
        return total

    noise_draws_cache: dict = {}
    res, draws = lattice_points, noise_draws
    value = evaluate(res, draws)
    while refine and res <= 8192:
        res, draws = res * 2, draws * 2
        finer = evaluate(res, draws)
        if abs(finer - value) < 1e-3:
            return finer
        value = finer
    return value


def single_set_bound(
    model: SystemModel,
    box: Box,
    q_hat_b: float,
    noise: NoiseModel,
    rng: np.random.Generator,
    grid_points: int = 1024,
    noise_draws: int = 64,
) -> float:
    """Q(B) times the grid infimum of log2 |det Df_w(x)| over B (all noise)."""
    if q_hat_b < 0 or q_hat_b > 1 + _EPS:
        raise InvalidArgument("Q(B) must lie in [0, 1]")
    if q_hat_b == 0.0:
        return 0.0
    inf_val = min(
        cell_log_det_infimum(model, box, noise, l, rng, grid_points, noise_draws)
        for l in range(noise.n_cells)
    )
    return q_hat_b * inf_val


def rate_collection(
    partition: PartitionSpec,
    q_hat: np.ndarray,
    nu_hat: np.ndarray,
    eps: float,
) -> RateCollection:
    """Rate table r_{k,l} derived from empirical cell masses.

    For mass p = Q(B_k) nu(D_l): r = (1+eps)(1-p) when p in (0,1), 1
    when p = 0, and eps when p = 1. An infeasible eps is a diagnostic,
    not an error: the returned collection carries feasible=False and the
    largest admissible eps.
    """
    if eps <= 0:
        raise InvalidArgument("eps must be positive")
    q_hat = np.asarray(q_hat, dtype=float)
    nu_hat = np.asarray(nu_hat, dtype=float)
    mass = np.outer(q_hat, nu_hat)
    table = np.where(
        mass <= 0.0, 1.0, np.where(mass >= 1.0, eps, (1.0 + eps) * (1.0 - mass))
    )
    interior = (mass > 0.0) & (mass < 1.0)
    thresholds = 1.0 - table[interior]
    interior_ok = bool(np.all((thresholds > 0.0) & (thresholds < 1.0))) if interior.any() else True
    rc = RateCollection(table=table, eps=eps, interior_ok=interior_ok)
    if rc.feasible:
        return rc
    return RateCollection(
        table=table,
        eps=eps,
        interior_ok=interior_ok,
        suggested_eps=largest_feasible_eps(q_hat, nu_hat),
    )


def largest_feasible_eps(q_hat, nu_hat) -> float:
    """Largest eps keeping the rate collection inside the admissible set.

    Condition (i): 1 - r = sum(1 - r_{k,l}) in [0, 1]; condition (ii):
    1 - (1+eps)(1-p) in (0, 1) for every p in (0, 1). Returns 0 when no
    positive eps works.
    """
    mass = np.outer(np.asarray(q_hat, dtype=float), np.asarray(nu_hat, dtype=float)).ravel()
    interior = mass[(mass > 0.0) & (mass < 1.0)]
    n_one = int(np.sum(mass >= 1.0))
    bounds = [1.0]
    if interior.size:
        bounds.append(float(np.min(interior / (1.0 - interior))))
        s0 = float(np.sum(interior))
        denom = interior.size - s0 + n_one
        if denom > 0:
            bounds.append((s0 + n_one) / denom)
    return max(0.0, min(bounds) * (1.0 - 1e-9))


@dataclass
class BoundReport:
    """All bound estimates for one experiment, ready for a verdict."""

    mc_bound: float
    mc_ci: float
    partition_bound: float
    single_set_bound: float
    capacity: float
    diagnostic_pass: Optional[bool] = None
    sample_budget: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.capacity - self.mc_bound

    def to_dict(self) -> dict:
        return {
            "mc_bound": self.mc_bound,
            "mc_ci": self.mc_ci,
            "partition_bound": self.partition_bound,
            "single_set_bound": self.single_set_bound,
            "capacity": self.capacity,
            "margin": self.margin,
            "diagnostic_pass": self.diagnostic_pass,
            "sample_budget": self.sample_budget,
        }


CONSISTENT = "CONSISTENT"
VIOLATION_FLAG = "VIOLATION-FLAG"


def verdict(report: BoundReport) -> str:
    """Check the falsifiable prediction bound <= capacity.

    Requires a recorded ergodicity diagnostic (the bound is only claimed
    under it). Nonpositive bounds are vacuous, hence consistent. A flag
    is a report, never an exception: it can mean a failed diagnostic, an
    optimistic estimator, or a genuine counterexample.
    """
    if report.diagnostic_pass is None:
        raise InvalidArgument("verdict requires a recorded ergodicity diagnostic")
    if report.mc_bound <= 0.0:
        return CONSISTENT
    if report.mc_bound - report.mc_ci <= report.capacity:
        return CONSISTENT
    return VIOLATION_FLAG

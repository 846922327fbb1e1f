"""Empirical occupation measures and ergodicity diagnostics.

A trajectory visits disjoint state cells B_1..B_n and noise cells
D_1..D_m; the joint visit counts over a horizon give Cesàro frequencies
whose stabilization (per path) and agreement (across paths) are the
finite-horizon counterparts of an ergodic asymptotic mean. States
outside every declared cell land in an implicit overflow cell so mass
accounting stays total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import InvalidArgument
from .systems import NoiseModel, Trajectory

Z95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class Box:
    """Axis-aligned cell [lo, hi) per axis; closed on top when flagged."""

    lo: np.ndarray
    hi: np.ndarray
    closed_top: bool = False

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise InvalidArgument("box needs elementwise hi > lo")

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def contains(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        upper = (xs <= self.hi) if self.closed_top else (xs < self.hi)
        return np.all((xs >= self.lo) & upper, axis=1)

    def overlaps(self, other: "Box") -> bool:
        return bool(np.all(self.lo < other.hi) and np.all(other.lo < self.hi))


@dataclass(frozen=True)
class PartitionSpec:
    """Disjoint state cells plus the noise-cell structure of a NoiseModel."""

    state_cells: Sequence[Box]
    noise: NoiseModel

    def __post_init__(self):
        cells = tuple(self.state_cells)
        object.__setattr__(self, "state_cells", cells)
        if not cells:
            raise InvalidArgument("need at least one state cell")
        dim = cells[0].dim
        for i, a in enumerate(cells):
            if a.dim != dim:
                raise InvalidArgument("state cells must share a dimension")
            for b in cells[i + 1:]:
                if a.overlaps(b):
                    raise InvalidArgument(f"state cells overlap: {a} and {b}")

    @property
    def n_state(self) -> int:
        return len(self.state_cells)

    @property
    def n_noise(self) -> int:
        return self.noise.n_cells

    @property
    def dim(self) -> int:
        return self.state_cells[0].dim

    def state_cell_index(self, xs: np.ndarray) -> np.ndarray:
        """Indices 0..n-1 for declared cells, n for the overflow cell."""
        xs = np.asarray(xs, dtype=float)
        n_pts = xs.shape[0]
        idx = np.full(n_pts, self.n_state, dtype=np.int64)
        for k, cell in enumerate(self.state_cells):
            idx[cell.contains(xs)] = k
        return idx


def interval_partition(low: float, high: float, cells: int, noise: NoiseModel) -> PartitionSpec:
    """Equal-width interval cells on [low, high]; top cell closed."""
    if cells < 1:
        raise InvalidArgument("need at least one cell")
    edges = np.linspace(low, high, cells + 1)
    boxes = [
        Box(np.array([edges[k]]), np.array([edges[k + 1]]), closed_top=(k == cells - 1))
        for k in range(cells)
    ]
    return PartitionSpec(state_cells=boxes, noise=noise)


@dataclass
class OccupationMeasure:
    """Joint and marginal visit counts with a running Cesàro series.

    Row n_state of ``joint`` is the overflow cell; ``freq_series[c, k]``
    is the frequency of state cell k among the first ``checkpoints[c]``
    steps.
    """

    horizon: int
    joint: np.ndarray            # (n_state + 1, n_noise) integer counts
    checkpoints: np.ndarray      # increasing step counts, last == horizon
    freq_series: np.ndarray      # (len(checkpoints), n_state + 1)

    @property
    def state_counts(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    @property
    def noise_counts(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    @property
    def state_freq(self) -> np.ndarray:
        """Terminal Cesàro frequency per declared cell plus overflow."""
        return self.state_counts / self.horizon

    def merge(self, other: "OccupationMeasure") -> "OccupationMeasure":
        """Associative count merge (checkpoints of the left operand)."""
        if other.joint.shape != self.joint.shape:
            raise InvalidArgument("occupation tables must share cell structure")
        total = self.horizon + other.horizon
        joint = self.joint + other.joint
        ck = np.array([total])
        series = (joint.sum(axis=1) / total)[None, :]
        return OccupationMeasure(horizon=total, joint=joint, checkpoints=ck, freq_series=series)


def accumulate(traj: Trajectory, partition: PartitionSpec, n_checkpoints: int = 200) -> OccupationMeasure:
    """Exact joint counts of (x_t, w_t) cell visits over the trajectory."""
    xs = traj.x
    if (xs.ndim == 1 and partition.dim != 1) or (xs.ndim == 2 and xs.shape[1] != partition.dim):
        raise InvalidArgument("trajectory and partition dimensions disagree")
    T = traj.horizon
    sidx = partition.state_cell_index(xs)
    nidx = partition.noise.cell_index(traj.w)
    n, m = partition.n_state, partition.n_noise
    joint = np.zeros((n + 1, m), dtype=np.int64)
    np.add.at(joint, (sidx, nidx), 1)
    checkpoints = np.unique(np.linspace(1, T, num=min(T, n_checkpoints)).astype(np.int64))
    onehot_cum = np.zeros((len(checkpoints), n + 1))
    for k in range(n + 1):
        cum = np.cumsum(sidx == k)
        onehot_cum[:, k] = cum[checkpoints - 1] / checkpoints
    return OccupationMeasure(horizon=T, joint=joint, checkpoints=checkpoints, freq_series=onehot_cum)


@dataclass
class AmsEstimate:
    """Ensemble-and-time averaged cell masses with across-path CIs."""

    q_hat: np.ndarray            # (n_state,) declared-cell estimates
    ci_halfwidth: np.ndarray
    converged: bool
    per_path_freq: np.ndarray    # (paths, n_state)
    window_variation: np.ndarray  # (paths,) trailing Cesàro variation
    overflow_mass: float


def _trailing_variation(occ: OccupationMeasure, window: int) -> float:
    """Max |freq(t) - freq(T)| over checkpoints in the trailing window."""
    lo = occ.horizon - window
    mask = occ.checkpoints >= max(lo, 1)
    tail = occ.freq_series[mask]
    return float(np.max(np.abs(tail - occ.freq_series[-1][None, :])))


def ams_estimate(
    paths: Sequence[Trajectory],
    partition: PartitionSpec,
    tol: float = 0.02,
    window: Optional[int] = None,
) -> AmsEstimate:
    """Estimate the asymptotic-mean cell masses from an ensemble."""
    if len(paths) < 2:
        raise InvalidArgument("need at least two paths")
    T = paths[0].horizon
    if any(p.horizon != T for p in paths):
        raise InvalidArgument("paths must share a horizon")
    window = T // 2 if window is None else window
    occs = [accumulate(p, partition) for p in paths]
    n = partition.n_state
    per_path = np.array([occ.state_freq[:n] for occ in occs])
    variation = np.array([_trailing_variation(occ, window) for occ in occs])
    q_hat = per_path.mean(axis=0)
    sd = per_path.std(axis=0, ddof=1)
    ci = Z95 * sd / math.sqrt(len(paths))
    overflow = float(np.mean([occ.state_freq[n] for occ in occs]))
    return AmsEstimate(
        q_hat=q_hat,
        ci_halfwidth=ci,
        converged=bool(np.all(variation < tol)),
        per_path_freq=per_path,
        window_variation=variation,
        overflow_mass=overflow,
    )


@dataclass
class DiagnosticReport:
    """PASS/FAIL ergodicity verdict with the raw statistics behind it."""

    passed: bool
    dispersion: float
    max_variation: float
    tol: float
    window: int
    q_hat: np.ndarray
    ci_halfwidth: np.ndarray
    n_paths: int
    horizon: int
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "cells": list(range(len(self.q_hat))),
            "Q_hat": [float(v) for v in self.q_hat],
            "ci": [float(v) for v in self.ci_halfwidth],
            "pass": self.passed,
            "dispersion": self.dispersion,
            "max_variation": self.max_variation,
            "tol": self.tol,
            "window": self.window,
            "n_paths": self.n_paths,
            "horizon": self.horizon,
            "note": self.note,
        }


def ergodicity_diagnostic(
    paths: Sequence[Trajectory],
    partition: PartitionSpec,
    tol: float = 0.02,
    window: Optional[int] = None,
) -> DiagnosticReport:
    """PASS iff every path's Cesàro frequencies stabilize and the paths agree.

    (a) per-path: max over trailing-window checkpoints and cells of
        |freq(t) - freq(T)| < tol;
    (b) across paths: max over cells of the standard deviation of the
        terminal frequencies < tol.
    Both statistics are reported raw so callers can re-threshold.
    """
    if len(paths) < 10:
        raise InvalidArgument("ergodicity diagnostic needs >= 10 paths")
    T = paths[0].horizon
    window = T // 2 if window is None else int(window)
    if window < 1 or window > T:
        raise InvalidArgument("window must lie in [1, horizon]")
    est = ams_estimate(paths, partition, tol=tol, window=window)
    dispersion = float(np.max(est.per_path_freq.std(axis=0, ddof=1))) if est.per_path_freq.size else 0.0
    max_var = float(np.max(est.window_variation))
    return DiagnosticReport(
        passed=bool(max_var < tol and dispersion < tol),
        dispersion=dispersion,
        max_variation=max_var,
        tol=tol,
        window=window,
        q_hat=est.q_hat,
        ci_halfwidth=est.ci_halfwidth,
        n_paths=len(paths),
        horizon=T,
    )


def joint_independence_check(occ: OccupationMeasure) -> float:
    """Max |joint frequency - product of marginals| over all cell pairs."""
    T = occ.horizon
    joint = occ.joint / T
    prod = np.outer(occ.state_counts / T, occ.noise_counts / T)
    return float(np.max(np.abs(joint - prod)))


def write_frequency_csv(occ: OccupationMeasure, path) -> None:
    """Running Cesàro frequencies, one row per checkpoint."""
    n_cols = occ.freq_series.shape[1]
    header = ["t"] + [f"cell{k}" for k in range(n_cols - 1)] + ["overflow"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for c, t in enumerate(occ.checkpoints):
            row = [str(int(t))] + [repr(float(v)) for v in occ.freq_series[c]]
            fh.write(",".join(row) + "\n")

"""Experiment pipeline: simulate -> diagnose -> bound -> verdict, plus the
entropy and decoder experiments, with deterministic JSON/CSV artifacts.

Every report embeds the resolved config and master seed, which is
sufficient to replay the run byte-for-byte; nothing time- or
host-dependent is written.
"""

from __future__ import annotations

import json
import math
import os
from typing import Optional

import numpy as np

from . import bounds as bounds_mod
from .channels import capacity
from .config import ExperimentConfig, build_components
from .decoder import DecoderParams, bin_decoder_experiment
from .errors import InvalidArgument
from .occupation import Box, accumulate, ergodicity_diagnostic, write_frequency_csv
from .rng import substream
from .spanning import (
    Scenario,
    build_instance,
    draw_scenarios,
    enumerate_candidates,
    entropy_estimate,
    harvest_candidates,
    min_spanning,
    uniform_rate,
)
from .systems import simulate_ensemble, trajectory_to_csv

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATION = 2


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


class ExperimentRunner:
    """Executes the configured pipeline stages in canonical order."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Optional[str] = None, seed: Optional[int] = None):
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        self.out_dir = out_dir or cfg.output_dir
        (self.model, self.noise, self.init, self.policy,
         self.channel, self.partition) = build_components(cfg.raw)
        self.paths = None
        self.diagnostic = None
        self.bound_report = None
        self.verdict_value = None
        self.entropy_result = None
        self.decode_result = None

    # -- stages ---------------------------------------------------------

    def ensure_paths(self):
        if self.paths is None:
            self.paths = simulate_ensemble(
                self.model, self.noise, self.init, self.policy, self.channel,
                self.cfg.horizon, self.seed, self.cfg.n_paths,
            )
        return self.paths

    def ensure_diagnostic(self):
        if self.diagnostic is None:
            paths = self.ensure_paths()
            if any(p.diverged for p in paths):
                from .occupation import DiagnosticReport

                n = self.partition.n_state
                self.diagnostic = DiagnosticReport(
                    passed=False,
                    dispersion=math.inf,
                    max_variation=math.inf,
                    tol=self.cfg.tol,
                    window=self.cfg.window or self.cfg.horizon // 2,
                    q_hat=np.zeros(n),
                    ci_halfwidth=np.zeros(n),
                    n_paths=len(paths),
                    horizon=self.cfg.horizon,
                    note=f"{sum(p.diverged for p in paths)} paths hit the overflow guard",
                )
            else:
                self.diagnostic = ergodicity_diagnostic(
                    paths, self.partition, tol=self.cfg.tol, window=self.cfg.window,
                )
        return self.diagnostic

    def ensure_bound(self):
        if self.bound_report is not None:
            return self.bound_report
        paths = self.ensure_paths()
        diag = self.ensure_diagnostic()
        states = bounds_mod.harvest_states(paths, burn_in=self.cfg.burn_in)
        rng = substream(self.seed, "mc-bound")
        mc = bounds_mod.integrand_bound_mc(self.model, states, self.noise, self.cfg.mc_pairs, rng)
        q_hat = diag.q_hat
        nu_hat = self.noise.cell_probs
        part_bound = bounds_mod.partition_lower_bound(
            self.model, self.partition, q_hat, nu_hat, substream(self.seed, "cell-inf"),
        )
        hull = Box(
            np.min([c.lo for c in self.partition.state_cells], axis=0),
            np.max([c.hi for c in self.partition.state_cells], axis=0),
            closed_top=True,
        )
        single = bounds_mod.single_set_bound(
            self.model, hull, float(np.sum(q_hat)), self.noise,
            substream(self.seed, "single-inf"),
        )
        cap = capacity(self.channel, tol=1e-9)
        self.bound_report = bounds_mod.BoundReport(
            mc_bound=mc.estimate,
            mc_ci=mc.ci_halfwidth,
            partition_bound=part_bound,
            single_set_bound=single,
            capacity=cap,
            diagnostic_pass=diag.passed,
            sample_budget={
                "mc_pairs": mc.n_pairs,
                "paths": len(paths),
                "horizon": self.cfg.horizon,
                "burn_in": self.cfg.burn_in,
            },
        )
        return self.bound_report

    def ensure_verdict(self):
        if self.verdict_value is None:
            self.verdict_value = bounds_mod.verdict(self.ensure_bound())
        return self.verdict_value

    def run_entropy(self):
        spec = self.cfg.entropy
        if spec is None:
            raise InvalidArgument("entropy: config has no [entropy] section")
        horizons = [int(t) for t in spec["horizons"]]
        t_max = max(horizons)
        scenarios = draw_scenarios(self.noise, self.init, t_max, spec["scenarios"], self.seed)
        if spec["slack"] is not None:
            rates = uniform_rate(self.partition.n_state, self.partition.n_noise, spec["slack"])
        else:
            diag = self.ensure_diagnostic()
            rates = bounds_mod.rate_collection(
                self.partition, diag.q_hat, self.noise.cell_probs, spec["eps"]
            )
        rows = []
        finite_points = []
        for T in horizons:
            sliced = [Scenario(x0=s.x0, w=s.w[:T]) for s in scenarios]
            if spec["candidates"] == "grid":
                cands = enumerate_candidates([float(v) for v in spec["grid_values"]], T)
            else:
                cands = harvest_candidates(
                    self.model, self.policy, self.channel, sliced, T, seed=self.seed
                )
            inst = build_instance(
                self.model, self.partition, rates, sliced, cands, T, spec["rho"]
            )
            res = min_spanning(inst)
            per_step = math.log2(res.size) / T if res.feasible and res.size >= 1 else math.inf
            rows.append({
                "T": T,
                "s": res.size,
                "method": res.method,
                "log2_s_over_T": per_step,
                "candidates": len(cands),
            })
            if res.feasible:
                finite_points.append((T, max(res.size, 1)))
        summary = None
        if len(finite_points) >= 3:
            est = entropy_estimate(finite_points)
            summary = {
                "slope": est.slope,
                "limsup_surrogate": est.limsup_surrogate,
                "rate_feasible": rates.feasible,
            }
        self.entropy_result = {"rows": rows, "summary": summary}
        return self.entropy_result

    def run_decode(self):
        spec = self.cfg.decode
        if spec is None:
            raise InvalidArgument("decode: config has no [decode] section")
        m_table = None
        if self.diagnostic is not None:
            m_table = np.outer(self.diagnostic.q_hat, self.noise.cell_probs)
        params = DecoderParams(
            r=spec["r"], L=spec["L"], alpha=spec["alpha"], b=spec["b"], m_table=m_table,
        )
        report = bin_decoder_experiment(
            self.model, self.noise, self.init, self.policy, self.channel,
            self.partition, params, spec["horizon"], spec["trials"], self.seed,
        )
        self.decode_result = report
        return report

    # -- orchestration ----------------------------------------------------

    def run(self) -> int:
        os.makedirs(self.out_dir, exist_ok=True)
        stages = self.cfg.pipeline
        if "simulate" in stages:
            self.ensure_paths()
        if "diagnose" in stages:
            self.ensure_diagnostic()
        if "bound" in stages:
            self.ensure_bound()
        if "verdict" in stages:
            self.ensure_verdict()
        if "entropy" in stages:
            self.run_entropy()
        if "decode" in stages:
            self.run_decode()
        self.write_artifacts()
        if self.verdict_value == bounds_mod.VIOLATION_FLAG:
            return EXIT_VIOLATION
        return EXIT_OK

    def report_dict(self) -> dict:
        report = {
            "schema_version": "1",
            "seed": self.seed,
            "config": self.cfg.raw,
        }
        if self.paths is not None:
            report["paths"] = {
                "count": len(self.paths),
                "horizon": self.cfg.horizon,
                "diverged": [p.diverged for p in self.paths],
                "max_abs_state": [float(np.max(np.abs(p.x))) for p in self.paths],
            }
        report["diagnostic"] = self.diagnostic.to_dict() if self.diagnostic else None
        report["bound_report"] = self.bound_report.to_dict() if self.bound_report else None
        report["verdict"] = self.verdict_value
        report["entropy"] = self.entropy_result
        report["decode"] = self.decode_result.to_dict() if self.decode_result else None
        return report

    def write_artifacts(self) -> None:
        write_json(os.path.join(self.out_dir, "report.json"), self.report_dict())
        if self.paths:
            occ = accumulate(self.paths[0], self.partition)
            write_frequency_csv(occ, os.path.join(self.out_dir, "frequencies.csv"))
            if self.cfg.export_trajectories:
                for i, p in enumerate(self.paths):
                    trajectory_to_csv(p, os.path.join(self.out_dir, f"trajectory-{i}.csv"))
        if self.entropy_result is not None:
            path = os.path.join(self.out_dir, "entropy.csv")
            with open(path, "w") as fh:
                fh.write("T,s,method,log2_s_over_T\n")
                for row in self.entropy_result["rows"]:
                    fh.write(
                        f"{row['T']},{row['s']},{row['method']},{row['log2_s_over_T']!r}\n"
                    )
        if self.decode_result is not None:
            path = os.path.join(self.out_dir, "decode.csv")
            d = self.decode_result
            width = float(d.bin_width)
            err = None if d.error_rate is None else float(d.error_rate)
            budget = None if d.budget is None else float(d.budget)
            with open(path, "w") as fh:
                fh.write("T,bin_width,error_rate,budget\n")
                fh.write(f"{self.cfg.decode['horizon']},{width!r},{err!r},{budget!r}\n")

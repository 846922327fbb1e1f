"""Experiment configuration: TOML schema, validation and component building.

Configs are plain TOML with one section per component; every error names
the offending field path so a bad config fails fast and legibly. Seeds
must be explicit (no wall-clock defaults) so every run is replayable.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channels import ChannelModel, channel_preset
from .errors import InvalidArgument
from .occupation import PartitionSpec, interval_partition
from .policies import adaptive_zoom_policy, null_policy, uniform_quantizer_policy
from .systems import (
    cubic_model,
    doubling_map,
    gaussian_init,
    gaussian_noise,
    identity_model,
    linear_model,
    no_noise,
    triangular_model,
    uniform_init,
    uniform_noise,
)

PIPELINE_STAGES = ("simulate", "diagnose", "bound", "verdict", "entropy", "decode")


class ConfigError(InvalidArgument):
    """Schema violation carrying the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _section(raw: dict, name: str) -> dict:
    if name not in raw:
        raise ConfigError(name, "required section is missing")
    if not isinstance(raw[name], dict):
        raise ConfigError(name, "must be a section (TOML table)")
    return raw[name]


_REQUIRED = object()


def _get(sec: dict, path: str, key: str, kind, default=_REQUIRED):
    if key not in sec:
        if default is _REQUIRED:
            raise ConfigError(f"{path}.{key}", "required field is missing")
        return default
    val = sec[key]
    if kind is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, kind):
        raise ConfigError(f"{path}.{key}", f"expected {kind.__name__}, got {type(val).__name__}")
    return val


@dataclass
class ExperimentConfig:
    """Validated config plus the raw dict for byte-stable report embedding."""

    raw: dict
    seed: int
    output_dir: str
    pipeline: list
    horizon: int
    n_paths: int
    tol: float
    window: Optional[int]
    mc_pairs: int
    burn_in: float
    export_trajectories: bool
    entropy: Optional[dict] = None
    decode: Optional[dict] = None


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("<toml>", str(exc)) from exc
    return validate_config(raw)


def validate_config(raw: dict) -> ExperimentConfig:
    seed = _get(raw, "<root>", "seed", int)
    output_dir = _get(raw, "<root>", "output_dir", str, "out")
    for name in ("model", "noise", "init", "policy", "channel", "partition"):
        _section(raw, name)
    run = _section(raw, "run")
    pipeline = _get(run, "run", "pipeline", list, ["simulate", "diagnose", "bound", "verdict"])
    for stage in pipeline:
        if stage not in PIPELINE_STAGES:
            raise ConfigError("run.pipeline", f"unknown stage '{stage}'")
    horizon = _get(run, "run", "horizon", int)
    if horizon < 2:
        raise ConfigError("run.horizon", "must be >= 2")
    n_paths = _get(run, "run", "paths", int, 10)
    tol = _get(run, "run", "tol", float, 0.02)
    window = _get(run, "run", "window", int, None)
    if window is not None and window > horizon:
        raise ConfigError("run.window", "window exceeds the horizon")
    mc_pairs = _get(run, "run", "mc_pairs", int, 4000)
    if mc_pairs < 1000:
        raise ConfigError("run.mc_pairs", "must be >= 1000")
    burn_in = _get(run, "run", "burn_in", float, 0.1)
    export = _get(run, "run", "export_trajectories", bool, False)

    entropy = None
    if "entropy" in pipeline or "entropy" in raw:
        sec = _section(raw, "entropy")
        entropy = {
            "horizons": _get(sec, "entropy", "horizons", list),
            "scenarios": _get(sec, "entropy", "scenarios", int, 64),
            "rho": _get(sec, "entropy", "rho", float, 0.05),
            "eps": _get(sec, "entropy", "eps", float, 0.01),
            "candidates": _get(sec, "entropy", "candidates", str, "policy"),
            "grid_values": _get(sec, "entropy", "grid_values", list, []),
            "slack": _get(sec, "entropy", "slack", float, None),
        }
        if entropy["candidates"] not in ("policy", "grid"):
            raise ConfigError("entropy.candidates", "must be 'policy' or 'grid'")
        if entropy["candidates"] == "grid" and not entropy["grid_values"]:
            raise ConfigError("entropy.grid_values", "required for grid candidates")
        if len(entropy["horizons"]) < 3:
            raise ConfigError("entropy.horizons", "need at least 3 horizons")

    decode = None
    if "decode" in pipeline or "decode" in raw:
        sec = _section(raw, "decode")
        decode = {
            "r": _get(sec, "decode", "r", float, 0.05),
            "L": _get(sec, "decode", "L", int, 8),
            "alpha": _get(sec, "decode", "alpha", float, 0.1),
            "b": _get(sec, "decode", "b", float, None),
            "trials": _get(sec, "decode", "trials", int, 1000),
            "horizon": _get(sec, "decode", "horizon", int, 10),
        }

    # eagerly validate buildable components so errors surface before running
    build_components(raw)
    return ExperimentConfig(
        raw=raw,
        seed=seed,
        output_dir=output_dir,
        pipeline=list(pipeline),
        horizon=horizon,
        n_paths=n_paths,
        tol=tol,
        window=window,
        mc_pairs=mc_pairs,
        burn_in=burn_in,
        export_trajectories=export,
        entropy=entropy,
        decode=decode,
    )


def build_components(raw: dict):
    """Instantiate (model, noise, init, policy, channel, partition)."""
    msec = _section(raw, "model")
    name = _get(msec, "model", "name", str)
    if name == "linear":
        model = linear_model(_get(msec, "model", "a", float))
    elif name == "doubling":
        model = doubling_map()
    elif name == "cubic":
        model = cubic_model()
    elif name == "identity":
        model = identity_model()
    elif name == "triangular2d":
        model = triangular_model()
    else:
        raise ConfigError("model.name", f"unknown model preset '{name}'")

    nsec = _section(raw, "noise")
    kind = _get(nsec, "noise", "kind", str)
    if kind == "uniform":
        noise = uniform_noise(
            _get(nsec, "noise", "low", float),
            _get(nsec, "noise", "high", float),
            _get(nsec, "noise", "cells", int, 1),
        )
    elif kind == "none":
        noise = no_noise(dim=model.noise_dim)
    elif kind == "gaussian":
        noise = gaussian_noise(
            _get(nsec, "noise", "sigma", float),
            _get(nsec, "noise", "cells", int, 1),
        )
    else:
        raise ConfigError("noise.kind", f"unknown noise kind '{kind}'")

    isec = _section(raw, "init")
    kind = _get(isec, "init", "kind", str)
    if kind == "uniform":
        init = uniform_init(_get(isec, "init", "low", float), _get(isec, "init", "high", float))
    elif kind == "gaussian":
        init = gaussian_init(_get(isec, "init", "sigma", float), dim=model.dim)
    else:
        raise ConfigError("init.kind", f"unknown init kind '{kind}'")

    csec = _section(raw, "channel")
    if "preset" in csec:
        try:
            channel = channel_preset(_get(csec, "channel", "preset", str))
        except InvalidArgument as exc:
            raise ConfigError("channel.preset", str(exc)) from exc
    elif "matrix" in csec:
        try:
            channel = ChannelModel(
                np.array(_get(csec, "channel", "matrix", list), dtype=float),
                kind=_get(csec, "channel", "kind", str, "dmc-with-feedback"),
            )
        except InvalidArgument as exc:
            raise ConfigError("channel.matrix", str(exc)) from exc
    else:
        raise ConfigError("channel", "needs either 'preset' or 'matrix'")

    psec = _section(raw, "policy")
    kind = _get(psec, "policy", "kind", str)
    if kind == "zoom":
        policy = adaptive_zoom_policy(
            contraction=_get(psec, "policy", "contraction", float),
            initial_bin=_get(psec, "policy", "initial_bin", float, 1.0),
            bits=_get(psec, "policy", "bits", int),
            nominal=model.nominal,
            noise_amplitude=noise.amplitude,
        )
    elif kind == "quantizer":
        policy = uniform_quantizer_policy(
            _get(psec, "policy", "low", float),
            _get(psec, "policy", "high", float),
            _get(psec, "policy", "bits", int),
            nominal=model.nominal,
        )
    elif kind == "null":
        policy = null_policy(
            alphabet=_get(psec, "policy", "alphabet", int, channel.input_size),
            dim=model.dim,
        )
    else:
        raise ConfigError("policy.kind", f"unknown policy kind '{kind}'")
    if policy.input_alphabet != channel.input_size:
        raise ConfigError(
            "policy", f"policy alphabet {policy.input_alphabet} != channel alphabet {channel.input_size}"
        )

    tsec = _section(raw, "partition")
    if model.dim != 1:
        raise ConfigError("partition", "interval partitions support scalar models only")
    partition = interval_partition(
        _get(tsec, "partition", "low", float),
        _get(tsec, "partition", "high", float),
        _get(tsec, "partition", "cells", int),
        noise,
    )
    return model, noise, init, policy, channel, partition

"""Built-in experiment presets for the benchmark plant."""

from __future__ import annotations

from .errors import ConfigError
from .sim import SimConfig

_BASE = {"plant": "benchmark", "channel": {"kind": "bernoulli", "gamma": 0.8}, "horizon": 500, "trials": 500}

# b/d/f panels are the same runs viewed over t in [80, 500]
PRESETS = {
    "paper-fig1a": {"delta": 1.0, "mu": 0.8},
    "paper-fig1b": {"delta": 1.0, "mu": 0.8},
    "paper-fig1c": {"delta": 1.0, "mu": 0.95},
    "paper-fig1d": {"delta": 1.0, "mu": 0.95},
    "paper-fig1e": {"delta": 10.0, "mu": 0.8},
    "paper-fig1f": {"delta": 10.0, "mu": 0.8},
    "paper-fig2": {"delta": 10.0, "mu": 0.8, "estimators": ["rseio"], "p0_list": [0.1, 1.0, 10.0, 100.0]},
}


def preset_dict(name: str) -> dict:
    """JSON form of a preset (a fresh copy)."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    out = {**_BASE, "channel": dict(_BASE["channel"]), **PRESETS[name], "name": name}
    return {k: (list(v) if isinstance(v, list) else v) for k, v in out.items()}


def preset(name: str, **overrides) -> SimConfig:
    spec = preset_dict(name)
    spec.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig.from_dict(spec)

"""Experiment configuration dataclasses and the flat key-value config format.

A config file is plain text, one ``key = value`` per line, ``#`` comments.
Keys mirror :class:`ExperimentConfig`; per-algorithm budgets use a
``<algorithm>.<field>`` prefix and model hyperparameter overrides a
``prior.<name>`` prefix.  See the README for the full key table.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import DataError
from .models import MODEL_CLASSES

ALGORITHM_NAMES = ("pls", "plsa", "refilter", "refilter_ffbs", "mcmc")


@dataclass
class AlgorithmSpec:
    """Budgets for one algorithm run.

    ``n`` is the forward-filter particle count, ``m0`` the number of
    parameter draws / smoothing trajectories (defaults to ``n``), ``n0`` the
    per-draw conditional-filter particle count for refiltering (defaults to
    ``n``), ``iterations`` the MCMC length.
    """

    name: str
    n: int = 2000
    n0: int | None = None
    m0: int | None = None
    iterations: int = 5000
    a: float = 0.974
    forward: str = "storvik"

    def validate(self):
        if self.name not in ALGORITHM_NAMES:
            raise DataError(
                f"unknown algorithm '{self.name}' "
                f"(choose from {ALGORITHM_NAMES})"
            )
        for fname in ("n", "iterations"):
            if getattr(self, fname) <= 0:
                raise DataError(f"{self.name}.{fname} must be positive")
        for fname in ("n0", "m0"):
            val = getattr(self, fname)
            if val is not None and val <= 0:
                raise DataError(f"{self.name}.{fname} must be positive")
        if self.forward not in ("storvik", "liu_west"):
            raise DataError(f"{self.name}.forward must be storvik or liu_west")

    def label(self):
        parts = [self.name, f"n={self.n}"]
        if self.name in ("refilter", "refilter_ffbs", "pls", "plsa"):
            parts.append(f"m0={self.m0 or self.n}")
        if self.name == "refilter":
            parts.append(f"n0={self.n0 or self.n}")
        if self.name == "mcmc":
            parts = [self.name, f"iterations={self.iterations}"]
        return " ".join(parts)


@dataclass
class ExperimentConfig:
    """Everything a benchmark run needs; see the README for file keys."""

    model: str
    algorithms: list[AlgorithmSpec]
    t_steps: int = 100
    true_params: tuple | None = None
    replications: int = 50
    seed: int = 0
    out_dir: str | None = None
    reference: str = "auto"
    reference_iterations: int = 20000
    workers: int = 1
    budget_match: bool = False
    budget_tolerance: float = 0.15
    correlation_n: int = 0
    model_kwargs: dict = field(default_factory=dict)

    def validate(self):
        if self.model not in MODEL_CLASSES:
            raise DataError(f"unknown model '{self.model}'")
        if not self.algorithms:
            raise DataError("at least one algorithm is required")
        seen = set()
        for spec in self.algorithms:
            spec.validate()
            if spec.name in seen:
                raise DataError(f"algorithm '{spec.name}' listed twice")
            seen.add(spec.name)
        for fname in ("t_steps", "replications", "reference_iterations",
                      "workers"):
            if getattr(self, fname) <= 0:
                raise DataError(f"{fname} must be positive")
        if self.reference not in ("auto", "gibbs_ffbs", "single_site_mh"):
            raise DataError("reference must be auto, gibbs_ffbs or "
                            "single_site_mh")
        if self.true_params is not None:
            n_params = len(MODEL_CLASSES[self.model].param_blocks)
            if len(self.true_params) != n_params:
                raise DataError(
                    f"theta needs {n_params} values for model '{self.model}'"
                )
        return self


def parse_flat_config(text):
    """Parse ``key = value`` lines into a string mapping."""
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise DataError(f"config line {lineno}: empty key")
        mapping[key] = value.strip()
    return mapping


_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}

_TOP_KEYS = {
    "model": str,
    "t": int,
    "replications": int,
    "seed": int,
    "out": str,
    "reference": str,
    "reference_iterations": int,
    "workers": int,
    "budget_match": "bool",
    "budget_tolerance": float,
    "correlation_n": int,
    "theta": "floats",
    "algorithms": "names",
}

_ALGO_KEYS = {"n": int, "n0": int, "m0": int, "iterations": int, "a": float,
              "forward": str}


def _convert(key, kind, value):
    try:
        if kind == "bool":
            return _BOOL[value.lower()]
        if kind == "floats":
            return tuple(float(v) for v in value.split(","))
        if kind == "names":
            return [v.strip() for v in value.split(",") if v.strip()]
        return kind(value)
    except (ValueError, KeyError):
        raise DataError(f"config key '{key}': cannot parse '{value}'") from None


def experiment_config_from_mapping(mapping):
    """Build a validated :class:`ExperimentConfig` from flat config keys."""
    mapping = dict(mapping)
    top = {}
    algo_overrides = {}
    model_kwargs = {}
    for key, value in mapping.items():
        if key in _TOP_KEYS:
            top[key] = _convert(key, _TOP_KEYS[key], value)
        elif key.startswith("prior."):
            model_kwargs[key[len("prior."):]] = _convert(key, float, value)
        elif "." in key:
            algo, _, fname = key.partition(".")
            if algo not in ALGORITHM_NAMES or fname not in _ALGO_KEYS:
                raise DataError(f"unknown config key '{key}'")
            algo_overrides.setdefault(algo, {})[fname] = _convert(
                key, _ALGO_KEYS[fname], value
            )
        else:
            raise DataError(f"unknown config key '{key}'")
    if "model" not in top:
        raise DataError("config is missing required key 'model'")
    names = top.pop("algorithms", ["refilter"])
    algorithms = [AlgorithmSpec(name=n, **algo_overrides.get(n, {}))
                  for n in names]
    for name in algo_overrides:
        if name not in names:
            raise DataError(
                f"budgets given for '{name}' but it is not in 'algorithms'"
            )
    cfg = ExperimentConfig(
        model=top.pop("model"),
        algorithms=algorithms,
        t_steps=top.pop("t", 100),
        true_params=top.pop("theta", None),
        replications=top.pop("replications", 50),
        seed=top.pop("seed", 0),
        out_dir=top.pop("out", None),
        reference=top.pop("reference", "auto"),
        reference_iterations=top.pop("reference_iterations", 20000),
        workers=top.pop("workers", 1),
        budget_match=top.pop("budget_match", False),
        budget_tolerance=top.pop("budget_tolerance", 0.15),
        correlation_n=top.pop("correlation_n", 0),
        model_kwargs=model_kwargs,
    )
    return cfg.validate()


def load_experiment_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return experiment_config_from_mapping(parse_flat_config(fh.read()))

"""Experiment configuration: one JSON document, validated with field paths.

Example::

    {
      "model": {"family": "weibull", "shape": 2.0, "scale": [1, 20]},
      "loss": {"flavor": "binary", "defense_cost": 0.1},
      "cost": {"kind": "none"},
      "periods": {"min": 1, "max": 10, "step": 0.5},
      "policies": ["alg1", "alg1-aggressive", "tucb-side", "tucb"],
      "horizon": 10000, "trials": 100, "seed": 0, "nodes": 1
    }

A model parameter given as ``[lo, hi]`` is drawn uniformly per trial.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .attack_model import (AttackModel, FixedCost, LossSpec, NoCost, RandomCost,
                           model_from_dict)
from .policies import POLICY_NAMES

MODEL_PARAMS = {
    "weibull": ("scale", "shape"),
    "uniform": ("low", "high"),
    "exponential": ("rate",),
    "empirical": ("samples",),
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``"field.path: message"`` strings."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid config:\n  " + "\n  ".join(errors))


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_model(d, path: str, errors: list[str]) -> None:
    if not isinstance(d, dict):
        errors.append(f"{path}: expected an object")
        return
    family = d.get("family")
    n_before = len(errors)
    if family not in MODEL_PARAMS:
        errors.append(f"{path}.family: expected one of {sorted(MODEL_PARAMS)}, got {family!r}")
        return
    for name in MODEL_PARAMS[family]:
        v = d.get(name)
        p = f"{path}.{name}"
        if family == "empirical":
            if not (isinstance(v, list) and v and all(_is_num(s) and s >= 0 for s in v)):
                errors.append(f"{p}: expected a non-empty list of non-negative numbers")
        elif _is_num(v):
            if v < 0 or (v == 0 and name != "low"):
                errors.append(f"{p}: must be positive")
        elif isinstance(v, list) and len(v) == 2 and all(_is_num(s) for s in v):
            if not 0 <= v[0] <= v[1]:
                errors.append(f"{p}: range must satisfy 0 <= lo <= hi")
        else:
            errors.append(f"{p}: expected a number or a [lo, hi] range")
    if family == "uniform" and len(errors) == n_before:
        lo, hi = d["low"], d["high"]
        if _is_num(lo) and _is_num(hi) and hi <= lo:
            errors.append(f"{path}.high: must exceed low")


def draw_model(d: dict, rng: np.random.Generator) -> AttackModel:
    """Resolve ``[lo, hi]`` ranges with uniform draws, in parameter order."""
    out = {"family": d["family"]}
    for name in MODEL_PARAMS[d["family"]]:
        v = d[name]
        if d["family"] != "empirical" and isinstance(v, list):
            v = float(rng.uniform(v[0], v[1]))
        out[name] = v
    return model_from_dict(out)


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    model: dict
    flavor: str
    defense_cost: float
    x_max_norm: float | None
    cost: dict
    periods: tuple[float, ...] | None
    x_min: float
    x_max: float
    continuous: bool
    policies: tuple[str, ...]
    horizon: int
    trials: int
    seed: int
    nodes: int

    def trial_seed(self, trial: int) -> int:
        return self.seed + trial

    def trial_model(self, trial: int) -> AttackModel:
        rng = np.random.default_rng([self.trial_seed(trial), 0, 2])
        return draw_model(self.model, rng)

    def loss_spec(self, trial: int = 0) -> LossSpec:
        kind = self.cost["kind"]
        if kind == "none":
            cost = NoCost()
        elif kind == "fixed":
            cost = FixedCost(float(self.cost["x0"]))
        else:
            rng = np.random.default_rng([self.trial_seed(trial), 0, 3])
            cost = RandomCost(draw_model(self.cost["model"], rng))
        norm = self.x_max_norm if self.x_max_norm is not None else self.x_max
        return LossSpec(self.flavor, self.defense_cost,
                        norm if self.flavor == "linear" else None, cost)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return parse_config(apply_overrides(self.raw, **kw))


def apply_overrides(raw: dict, seed=None, trials=None, horizon=None, policies=None,
                    flavor=None) -> dict:
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw["seed"] = seed
    if trials is not None:
        raw["trials"] = trials
    if horizon is not None:
        raw["horizon"] = horizon
    if policies is not None:
        raw["policies"] = list(policies)
    if flavor is not None:
        raw.setdefault("loss", {})["flavor"] = flavor
    return raw


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a config document; raises :class:`ConfigError` listing every problem."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected a JSON object"])
    known = {"model", "loss", "cost", "periods", "policies", "horizon", "trials", "seed",
             "nodes", "description"}
    for k in raw:
        if k not in known:
            errors.append(f"{k}: unknown field")

    _check_model(raw.get("model"), "model", errors)

    loss = raw.get("loss", {})
    flavor, cd, norm = "binary", 0.1, None
    if not isinstance(loss, dict):
        errors.append("loss: expected an object")
    else:
        flavor = loss.get("flavor", "binary")
        if flavor not in ("binary", "linear"):
            errors.append(f"loss.flavor: expected 'binary' or 'linear', got {flavor!r}")
        cd = loss.get("defense_cost", 0.1)
        if not (_is_num(cd) and 0 <= cd < 1):
            errors.append("loss.defense_cost: expected a number in [0, 1)")
        norm = loss.get("x_max_norm")
        if norm is not None and not (_is_num(norm) and norm > 0):
            errors.append("loss.x_max_norm: expected a positive number")

    cost = raw.get("cost", {"kind": "none"})
    if not isinstance(cost, dict) or cost.get("kind") not in ("none", "fixed", "random"):
        errors.append("cost.kind: expected 'none', 'fixed' or 'random'")
        cost = {"kind": "none"}
    elif cost["kind"] == "fixed" and not (_is_num(cost.get("x0")) and cost["x0"] >= 0):
        errors.append("cost.x0: expected a non-negative number")
    elif cost["kind"] == "random":
        _check_model(cost.get("model"), "cost.model", errors)

    per = raw.get("periods")
    values, x_min, x_max, continuous = None, 1.0, 1.0, False
    if not isinstance(per, dict):
        errors.append("periods: expected an object")
    elif "values" in per:
        v = per["values"]
        if not (isinstance(v, list) and v and all(_is_num(s) and s > 0 for s in v)):
            errors.append("periods.values: expected a non-empty list of positive numbers")
        else:
            values = tuple(sorted(float(s) for s in v))
            x_min, x_max = values[0], values[-1]
    else:
        lo, hi = per.get("min"), per.get("max")
        if not (_is_num(lo) and lo > 0):
            errors.append("periods.min: expected a positive number")
        elif not (_is_num(hi) and hi >= lo):
            errors.append("periods.max: expected a number >= periods.min")
        else:
            x_min, x_max = float(lo), float(hi)
            continuous = bool(per.get("continuous", False))
            if not continuous:
                step = per.get("step")
                if not (_is_num(step) and step > 0):
                    errors.append("periods.step: expected a positive number (or continuous: true)")
                else:
                    count = int(round((x_max - x_min) / step)) + 1
                    values = tuple(float(x_min + k * step) for k in range(count)
                                   if x_min + k * step <= x_max + 1e-9)
            elif not x_max > x_min:
                errors.append("periods.max: continuous range needs max > min")

    if flavor == "linear":
        limit = norm if norm is not None else x_max
        if _is_num(limit) and x_max > limit:
            errors.append("loss.x_max_norm: must be >= the longest period")

    pols = raw.get("policies")
    if not (isinstance(pols, list) and pols):
        errors.append("policies: expected a non-empty list")
        pols = []
    for i, name in enumerate(pols):
        if name not in POLICY_NAMES:
            errors.append(f"policies[{i}]: unknown policy {name!r}")
        elif continuous and name != "alg2":
            errors.append(f"policies[{i}]: only 'alg2' runs on a continuous period range")
        elif not continuous and name == "alg2":
            errors.append(f"policies[{i}]: 'alg2' needs periods.continuous = true")

    def _int(key, lo, default=None):
        v = raw.get(key, default)
        if not (isinstance(v, int) and not isinstance(v, bool) and v >= lo):
            errors.append(f"{key}: expected an integer >= {lo}")
            return lo
        return v

    horizon = _int("horizon", 1)
    trials = _int("trials", 1)
    seed = _int("seed", 0, 0)
    nodes = _int("nodes", 1, 1)
    if continuous and horizon < 8:
        errors.append("horizon: a continuous period range needs horizon >= 8")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        raw=copy.deepcopy(raw), model=raw["model"], flavor=flavor, defense_cost=float(cd),
        x_max_norm=None if norm is None else float(norm), cost=cost, periods=values,
        x_min=x_min, x_max=x_max, continuous=continuous, policies=tuple(pols),
        horizon=horizon, trials=trials, seed=seed, nodes=nodes,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<root>: not valid JSON ({exc.msg} at line {exc.lineno})"]) from None
    return parse_config(raw)


def preset(name: str = "fig2") -> dict:
    """Raw dictionary of a shipped preset."""
    text = resources.files("flipit_timing.presets").joinpath(f"{name}.json").read_text()
    return json.loads(text)

"""Attack-time distributions and the defender's per-round loss.

An attack model describes the random time ``a`` an attacker needs to take over
the resource after a security update. A :class:`LossSpec` turns a defense
period ``x`` and an attack time into the defender's loss
``f((x - a)^+) + c_d``, optionally gated by an attack-cost threshold ``x0``
below which a myopic attacker does not bother to attack.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .quadrature import QuadratureError, adaptive_simpson

__all__ = [
    "AttackModel",
    "Weibull",
    "Uniform",
    "Exponential",
    "Empirical",
    "NoCost",
    "FixedCost",
    "RandomCost",
    "LossSpec",
    "QuadratureError",
    "sample_attack_time",
    "cdf",
    "round_loss",
    "expected_loss",
    "expected_losses",
    "model_from_dict",
]

QUAD_TOL = 1e-9
QUAD_MAX_SUBDIVISIONS = 10_000


class AttackModel(ABC):
    """Distribution of the attack time, supported on ``[0, inf)``."""

    kind: str = ""

    @abstractmethod
    def cdf(self, t):
        """P(a <= t), vectorized over ``t``."""

    def cdf_left(self, t):
        """P(a < t). Equal to :meth:`cdf` for continuous models."""
        return self.cdf(t)

    @abstractmethod
    def transform(self, u):
        """Map uniform draws on (0, 1] to attack times (inverse transform)."""

    def sample(self, rng: np.random.Generator, size=None):
        # 1 - random() lies in (0, 1], which keeps log-based transforms finite
        u = 1.0 - rng.random(size)
        return self.transform(u)

    def integrated_cdf(self, x) -> np.ndarray:
        """``E[(x - a)^+] = int_0^x F(u) du`` for each ``x``.

        The default integrates the CDF numerically; subclasses with a closed
        form override this. Points are processed in sorted order so each
        panel between consecutive points is integrated once.
        """
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        order = np.argsort(xs, kind="stable")
        out = np.empty_like(xs)
        acc = 0.0
        prev = 0.0
        # tolerance is split across panels so the cumulative error stays below QUAD_TOL
        per_panel = QUAD_TOL / max(1, xs.size)
        f = lambda u: float(self.cdf(u))  # noqa: E731
        for idx in order:
            xi = xs[idx]
            if xi <= 0.0:
                out[idx] = 0.0
                continue
            lo = max(prev, 0.0)
            if xi > lo:
                acc += adaptive_simpson(f, lo, xi, per_panel, QUAD_MAX_SUBDIVISIONS)
                prev = xi
            out[idx] = acc
        return out

    @abstractmethod
    def params(self) -> dict:
        """JSON-friendly parameter dictionary (round-trips through :func:`model_from_dict`)."""


@dataclass(frozen=True)
class Weibull(AttackModel):
    """Weibull attack time with ``F(a) = 1 - exp(-(a/scale)^shape)``."""

    scale: float
    shape: float
    kind: str = field(default="weibull", init=False, repr=False)

    def __post_init__(self):
        if not (self.scale > 0 and self.shape > 0):
            raise ValueError(f"Weibull needs scale > 0 and shape > 0, got {self}")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        z = np.power(np.clip(t, 0.0, None) / self.scale, self.shape)
        return np.where(t < 0, 0.0, -np.expm1(-z))

    def transform(self, u):
        return self.scale * np.power(-np.log(u), 1.0 / self.shape)

    def mean(self) -> float:
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)

    def params(self) -> dict:
        return {"family": "weibull", "scale": self.scale, "shape": self.shape}


@dataclass(frozen=True)
class Uniform(AttackModel):
    """Attack time uniform on ``[low, high]``."""

    low: float
    high: float
    kind: str = field(default="uniform", init=False, repr=False)

    def __post_init__(self):
        if not (self.low >= 0 and self.high > self.low):
            raise ValueError(f"Uniform needs 0 <= low < high, got {self}")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.clip((t - self.low) / (self.high - self.low), 0.0, 1.0)

    def transform(self, u):
        return self.low + u * (self.high - self.low)

    def integrated_cdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        width = self.high - self.low
        inside = (x - self.low) ** 2 / (2.0 * width)
        beyond = 0.5 * width + (x - self.high)
        return np.where(x <= self.low, 0.0, np.where(x <= self.high, inside, beyond))

    def params(self) -> dict:
        return {"family": "uniform", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class Exponential(AttackModel):
    """Exponential attack time with the given rate."""

    rate: float
    kind: str = field(default="exponential", init=False, repr=False)

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"Exponential needs rate > 0, got {self}")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < 0, 0.0, -np.expm1(-self.rate * np.clip(t, 0.0, None)))

    def transform(self, u):
        return -np.log(u) / self.rate

    def integrated_cdf(self, x) -> np.ndarray:
        x = np.clip(np.atleast_1d(np.asarray(x, dtype=float)), 0.0, None)
        return x + np.expm1(-self.rate * x) / self.rate

    def params(self) -> dict:
        return {"family": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Empirical(AttackModel):
    """Resampling distribution over logged attack times.

    The CDF is the right-continuous step function of the samples.
    """

    samples: tuple
    kind: str = field(default="empirical", init=False, repr=False)

    def __post_init__(self):
        s = tuple(sorted(float(v) for v in self.samples))
        if not s or s[0] < 0:
            raise ValueError("Empirical needs a non-empty list of non-negative samples")
        object.__setattr__(self, "samples", s)

    @property
    def _arr(self) -> np.ndarray:
        return np.asarray(self.samples)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.searchsorted(self._arr, t, side="right") / len(self.samples)

    def cdf_left(self, t):
        t = np.asarray(t, dtype=float)
        return np.searchsorted(self._arr, t, side="left") / len(self.samples)

    def transform(self, u):
        n = len(self.samples)
        idx = np.clip(np.ceil(np.asarray(u) * n).astype(int) - 1, 0, n - 1)
        return self._arr[idx]

    def integrated_cdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.clip(x[:, None] - self._arr[None, :], 0.0, None).mean(axis=1)

    def params(self) -> dict:
        return {"family": "empirical", "samples": list(self.samples)}


def model_from_dict(d: dict) -> AttackModel:
    """Build a model from ``{"family": ..., <params>}``."""
    family = d["family"]
    if family == "weibull":
        return Weibull(float(d["scale"]), float(d["shape"]))
    if family == "uniform":
        return Uniform(float(d["low"]), float(d["high"]))
    if family == "exponential":
        return Exponential(float(d["rate"]))
    if family == "empirical":
        return Empirical(tuple(d["samples"]))
    raise ValueError(f"unknown attack model family {family!r}")


# ---------------------------------------------------------------------------
# loss specification


@dataclass(frozen=True)
class NoCost:
    """The attacker always attacks right after each update."""


@dataclass(frozen=True)
class FixedCost:
    """No attack in rounds whose period is at most the fixed threshold ``x0``."""

    x0: float


@dataclass(frozen=True)
class RandomCost:
    """Threshold ``x0`` redrawn every round from ``threshold_model``."""

    threshold_model: AttackModel


CostVariant = Union[NoCost, FixedCost, RandomCost]


@dataclass(frozen=True)
class LossSpec:
    """Per-round loss ``f((x - a)^+) + c_d``.

    Parameters
    ----------
    flavor : {"binary", "linear"}
        ``binary``: ``f(s) = 1`` if ``s > 0``. ``linear``: ``f(s) = s / x_max_norm``.
    defense_cost : float
        Cost ``c_d`` of every security update, in ``[0, 1)``.
    x_max_norm : float, optional
        Normalizer of the linear flavor; periods above it are rejected.
    cost : NoCost, FixedCost or RandomCost
        Attack-cost variant. Under a cost variant the attacker skips rounds
        with ``x <= x0``.
    """

    flavor: str = "binary"
    defense_cost: float = 0.1
    x_max_norm: float | None = None
    cost: CostVariant = NoCost()

    def __post_init__(self):
        if self.flavor not in ("binary", "linear"):
            raise ValueError(f"flavor must be 'binary' or 'linear', got {self.flavor!r}")
        if not 0.0 <= self.defense_cost < 1.0:
            raise ValueError(f"defense_cost must lie in [0, 1), got {self.defense_cost}")
        if self.flavor == "linear" and not (self.x_max_norm and self.x_max_norm > 0):
            raise ValueError("linear flavor requires x_max_norm > 0")

    @property
    def has_cost(self) -> bool:
        return not isinstance(self.cost, NoCost)

    def without_cost(self) -> "LossSpec":
        """The loss shape the defender knows: same ``f`` and ``c_d``, no threshold."""
        return LossSpec(self.flavor, self.defense_cost, self.x_max_norm, NoCost())

    def f(self, s):
        s = np.asarray(s, dtype=float)
        if self.flavor == "binary":
            return (s > 0).astype(float)
        return np.clip(s, 0.0, None) / self.x_max_norm

    def check_period(self, x) -> None:
        x = np.asarray(x, dtype=float)
        if np.any(~(x > 0)):
            raise ValueError(f"defense period must be > 0, got {x}")
        if self.flavor == "linear" and np.any(x > self.x_max_norm):
            raise ValueError(
                f"linear loss needs period <= x_max_norm={self.x_max_norm}, got {x}"
            )


def sample_attack_time(model: AttackModel, rng: np.random.Generator) -> float:
    """Draw one attack time; deterministic given the generator state."""
    return float(model.sample(rng))


def cdf(model: AttackModel, t) -> float:
    """``F_a(t)``; zero for negative ``t``."""
    out = model.cdf(t)
    return float(out) if np.ndim(out) == 0 else out


def round_loss(spec: LossSpec, x, a, x0_realized=None):
    """Realized loss of playing period ``x`` against attack time ``a``.

    With a cost variant, ``x0_realized`` is the threshold in force for the
    round and the loss is just ``c_d`` when ``x <= x0_realized``. Accepts
    scalars or broadcastable arrays.
    """
    spec.check_period(x)
    if spec.has_cost != (x0_realized is not None):
        raise ValueError("x0_realized must be given exactly when a cost variant is active")
    x_arr = np.asarray(x, dtype=float)
    a_arr = np.asarray(a, dtype=float)
    loss = spec.f(x_arr - a_arr) + spec.defense_cost
    if x0_realized is not None:
        loss = np.where(x_arr <= np.asarray(x0_realized, dtype=float), spec.defense_cost, loss)
    return float(loss) if np.ndim(loss) == 0 else loss


def expected_losses(spec: LossSpec, model: AttackModel, xs) -> np.ndarray:
    """Vectorized ``l(x) = E_a[l(x, a)]`` over an array of periods."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    spec.check_period(xs)
    if spec.flavor == "binary":
        # ties x == a cost nothing, so only strictly earlier attacks count
        attack_part = np.asarray(model.cdf_left(xs), dtype=float)
    else:
        attack_part = model.integrated_cdf(xs) / spec.x_max_norm
    cd = spec.defense_cost
    cost = spec.cost
    if isinstance(cost, FixedCost):
        return np.where(xs <= cost.x0, cd, attack_part + cd)
    if isinstance(cost, RandomCost):
        p_attack = np.asarray(cost.threshold_model.cdf_left(xs), dtype=float)
        return cd + attack_part * p_attack
    return attack_part + cd


def expected_loss(spec: LossSpec, model: AttackModel, x: float) -> float:
    """Expected loss ``l(x)`` of a single defense period."""
    return float(expected_losses(spec, model, [x])[0])

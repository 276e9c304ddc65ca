"""Ground truth for evaluation: expected losses, the optimal period, gaps, regret.

Nothing in here is visible to a learner. The evaluator uses it to score plays
with expected (not realized) losses, and to evaluate the regret bounds.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .attack_model import AttackModel, LossSpec, NoCost, Uniform, expected_losses

__all__ = [
    "OracleTable",
    "RegretResult",
    "build_table",
    "continuous_optimum",
    "pseudo_regret",
    "lipschitz_constants",
    "clamped_log",
    "gamma_ratio",
    "side_ucb_bound",
    "discretized_bound",
    "fixed_cost_bound",
    "random_cost_bound",
    "attack_probabilities",
]


@dataclass(frozen=True)
class OracleTable:
    """Expected loss, time-average loss and gap for every arm.

    ``gaps[i] = l[i] - periods[i] * lambda_star`` is the per-play excess over
    the optimal periodic policy. For a discretized continuous period set the
    reference optimum may lie off the grid, in which case ``star_index`` is
    ``None`` and every gap can be positive.
    """

    periods: np.ndarray
    l: np.ndarray
    lam: np.ndarray
    x_star: float
    lambda_star: float
    gaps: np.ndarray
    star_index: int | None

    @property
    def K(self) -> int:
        return len(self.periods)

    @property
    def delta_min(self) -> float:
        pos = self.gaps[self.gaps > 0]
        return float(pos.min()) if pos.size else math.inf

    @property
    def delta_max(self) -> float:
        return float(self.gaps.max())

    def index_of(self, x) -> np.ndarray:
        """Arm indices of the given periods; raises ``KeyError`` for unknown ones."""
        lookup = {float(p): i for i, p in enumerate(self.periods)}
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        try:
            return np.fromiter((lookup[float(v)] for v in xs), dtype=np.int64, count=xs.size)
        except KeyError as exc:
            raise KeyError(f"period {exc.args[0]} is not an arm of this table") from None

    def to_csv(self, path_or_buf=None) -> str:
        buf = io.StringIO()
        buf.write("period,l,lambda,gap\n")
        for p, li, lam, g in zip(self.periods.tolist(), self.l.tolist(), self.lam.tolist(),
                                 self.gaps.tolist()):
            buf.write(f"{p!r},{li!r},{lam!r},{g!r}\n")
        text = buf.getvalue()
        if path_or_buf is not None:
            with open(path_or_buf, "w") as fh:
                fh.write(text)
        return text

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()[:16]


def continuous_optimum(spec: LossSpec, model: AttackModel, x_min: float, x_max: float,
                       grid: int = 2001) -> tuple[float, float]:
    """``(x*, lambda*)`` minimizing ``l(x)/x`` over the interval ``[x_min, x_max]``.

    A dense grid locates the basin, then a bounded scalar search polishes it.
    """
    xs = np.linspace(x_min, x_max, grid)
    lam = expected_losses(spec, model, xs) / xs
    k = int(np.argmin(lam))
    best_x, best_lam = float(xs[k]), float(lam[k])
    lo, hi = float(xs[max(k - 1, 0)]), float(xs[min(k + 1, grid - 1)])
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda v: float(expected_losses(spec, model, [v])[0] / v),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-10},
        )
        if res.success and res.fun < best_lam:
            best_x, best_lam = float(res.x), float(res.fun)
    return best_x, best_lam


def build_table(spec: LossSpec, model: AttackModel, periods,
                continuous: tuple[float, float] | None = None) -> OracleTable:
    """Evaluate every arm and locate the optimal period.

    Parameters
    ----------
    periods : sequence of float
        The arms; stored sorted ascending.
    continuous : (x_min, x_max), optional
        When the arms discretize a continuous interval, the optimum (and so
        the gaps) is taken over the whole interval instead of the arms.
    """
    p = np.sort(np.asarray(periods, dtype=float))
    if p.size == 0:
        raise ValueError("need at least one period")
    if p[0] <= 0:
        raise ValueError("periods must be positive")
    l = expected_losses(spec, model, p)
    lam = l / p
    k = int(np.argmin(lam))  # first minimum, i.e. the shortest period on ties
    x_star, lambda_star, star = float(p[k]), float(lam[k]), k
    if continuous is not None:
        cx, clam = continuous_optimum(spec, model, *continuous)
        if clam < lambda_star:
            x_star, lambda_star, star = cx, clam, None
    gaps = np.maximum(l - p * lambda_star, 0.0)
    if star is not None:
        gaps[star] = 0.0
    return OracleTable(p, l, lam, x_star, lambda_star, gaps, star)


@dataclass(frozen=True)
class RegretResult:
    total: float
    cumulative: np.ndarray
    by_gaps: float


def pseudo_regret(played, table: OracleTable) -> RegretResult:
    """Pseudo-regret ``sum_t l(x_t) - lambda* sum_t x_t`` of a play sequence.

    The total is also computed as ``sum_i gap_i n_i``; the two must agree to
    1e-9 (relative for large totals).
    """
    idx = table.index_of(played)
    if idx.size == 0:
        return RegretResult(0.0, np.zeros(0), 0.0)
    direct = math.fsum(table.l[idx]) - table.lambda_star * math.fsum(table.periods[idx])
    counts = np.bincount(idx, minlength=table.K)
    by_gaps = math.fsum(table.gaps * counts)
    if abs(direct - by_gaps) > 1e-9 * max(1.0, abs(by_gaps)):
        raise ArithmeticError(f"regret formulas disagree: {direct} vs {by_gaps}")
    cumulative = np.cumsum(table.gaps[idx])
    return RegretResult(by_gaps, cumulative, direct)


def lipschitz_constants(spec: LossSpec, model: AttackModel, x_min: float, x_max: float,
                        grid: int = 10_000) -> tuple[float, float]:
    """``(L, L')`` with ``L' = L * x_max * (x_max - x_min) / x_min``.

    Uniform attacks with binary loss have the exact constant ``1/(high - low)``;
    anything else falls back to the largest finite-difference slope of ``l``
    on an evenly spaced grid.
    """
    if (isinstance(model, Uniform) and spec.flavor == "binary"
            and isinstance(spec.cost, NoCost)):
        L = 1.0 / (model.high - model.low)
    else:
        xs = np.linspace(x_min, x_max, grid)
        l = expected_losses(spec, model, xs)
        L = float(np.max(np.abs(np.diff(l)) / np.diff(xs)))
    return L, L * x_max * (x_max - x_min) / x_min


# ---------------------------------------------------------------------------
# regret bounds


def clamped_log(v: float) -> float:
    """``log(max(e, v))``: never below one, matching the learner's stage schedule."""
    return math.log(max(math.e, v))


def gamma_ratio(x_min: float, x_max: float) -> float:
    return (1.0 + x_max / x_min) ** 2


def side_ucb_bound(table: OracleTable, T: int) -> float:
    """Regret bound of the side-observation improved-UCB learner on ``table``."""
    pos = table.gaps[table.gaps > 0]
    if pos.size == 0:
        return 0.0
    K = table.K
    gamma = gamma_ratio(table.periods[0], table.periods[-1])
    lead = 48.0 * gamma * clamped_log(T * (K + 1) * table.delta_max ** 2 / 4.0) / table.delta_min
    return lead + float(np.sum(pos + 48.0 / pos))


def discretized_bound(L_prime: float, n: int, T: int, x_min: float, x_max: float,
                      delta_max: float) -> float:
    """Regret bound of the discretized learner with ``n`` subintervals."""
    gamma = gamma_ratio(x_min, x_max)
    return (3.0 * L_prime * T / n
            + 48.0 * gamma * clamped_log(T * (n + 1)) / (L_prime / n)
            + 48.0 * n ** 2 / L_prime
            + n * delta_max)


def attack_probabilities(spec: LossSpec, model: AttackModel, periods, x0: float) -> np.ndarray:
    """Chance that playing each period reveals an attack under a fixed threshold."""
    p = np.asarray(periods, dtype=float)
    return np.where(p > x0, np.asarray(model.cdf_left(p), dtype=float), 0.0)


def fixed_cost_bound(table: OracleTable, T: int, x0: float, p_attack) -> float:
    """Regret bound of the fixed-attack-cost learner."""
    pos_mask = table.gaps > 0
    if not pos_mask.any():
        return 0.0
    K = table.K
    gamma = gamma_ratio(table.periods[0], table.periods[-1])
    total = side_ucb_bound(table, T)
    for x, d, p in zip(table.periods[pos_mask], table.gaps[pos_mask],
                       np.asarray(p_attack)[pos_mask]):
        b = 32.0 * gamma * clamped_log(T * (K + 1) * d * d / 4.0)
        if x <= x0:
            total += b / d
        else:
            total += min(b / d, d / p if p > 0 else math.inf)
    return total


def random_cost_bound(table: OracleTable, T: int) -> float:
    """Regret bound of the play-every-active-arm learner (random attack cost)."""
    pos = table.gaps[table.gaps > 0]
    if pos.size == 0:
        return 0.0
    K = table.K
    gamma = gamma_ratio(table.periods[0], table.periods[-1])
    logs = np.array([clamped_log(T * (K + 1) * d * d / 4.0) for d in pos])
    return float(np.sum(32.0 * gamma * logs / pos) + np.sum(pos + 48.0 / pos))

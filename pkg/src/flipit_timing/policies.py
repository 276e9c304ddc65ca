"""Learners for choosing defense periods.

All policies share one step interface so the harness can drive any of them:
``next_period()`` picks the period to play, ``planned_rounds()`` says how many
consecutive rounds the policy is willing to commit to that period without new
feedback (a batching hint; playing fewer is always allowed), and
``update(batch)`` consumes the feedback of the rounds actually played.

Stage-based learners (:class:`ImprovedUCBSide` and its variants) estimate the
optimal time-average loss and eliminate periods whose relative loss is
separated from the best by a confidence margin. :class:`TimeUCB` is the
per-round index baseline, with or without side observations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attack_model import LossSpec
from .game_env import RoundBatch, side_loss_matrix

__all__ = [
    "ArmStats",
    "StageRecord",
    "Policy",
    "ImprovedUCBSide",
    "ContinuousImprovedUCB",
    "FixedCostUCB",
    "RandomCostUCB",
    "TimeUCB",
    "alg1_stage_target",
    "alg1_confidence",
    "alg1_lambda_bar",
    "alg1_eliminate",
    "alg1_select",
    "alg2_arm_count",
    "alg2_periods",
    "make_policy",
    "POLICY_NAMES",
]


@dataclass
class ArmStats:
    """Sample count and loss total per arm, side observations included."""

    periods: np.ndarray
    n: np.ndarray = field(init=False)
    sums: np.ndarray = field(init=False)

    def __post_init__(self):
        self.periods = np.asarray(self.periods, dtype=float)
        self.n = np.zeros(len(self.periods), dtype=np.int64)
        self.sums = np.zeros(len(self.periods))

    @property
    def mean_loss(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.n > 0, self.sums / np.maximum(self.n, 1), np.nan)

    @property
    def time_avg(self) -> np.ndarray:
        return self.mean_loss / self.periods

    def add(self, values: np.ndarray) -> None:
        """Fold in a ``(K, n)`` matrix of losses, ``nan`` marking unknown entries.

        Sums accumulate strictly left to right, so feeding rounds one at a time
        or in one block gives bit-identical statistics.
        """
        known = ~np.isnan(values)
        v = np.where(known, values, 0.0)
        if v.shape[1] == 1:
            self.sums = self.sums + v[:, 0]
        else:
            self.sums = np.cumsum(np.concatenate([self.sums[:, None], v], axis=1), axis=1)[:, -1]
        self.n = self.n + known.sum(axis=1)

    def add_single(self, arm: int, losses: np.ndarray) -> None:
        s = self.sums[arm]
        for v in losses.tolist():
            s += v
        self.sums[arm] = s
        self.n[arm] += len(losses)


@dataclass(frozen=True)
class StageRecord:
    """Snapshot taken at the end of an elimination stage."""

    stage: int
    gap_guess: float
    gamma: float
    target: int
    confidence: float
    lambda_bar: float
    round: int
    active_before: np.ndarray
    counts: np.ndarray
    means: np.ndarray
    active_after: np.ndarray
    clamped: bool
    stage_plays: np.ndarray | None = None
    certified: np.ndarray | None = None


# ---------------------------------------------------------------------------
# stage arithmetic


def _log_term(gap_guess: float, T: int, K: int) -> tuple[float, bool]:
    arg = T * (K + 1) * gap_guess * gap_guess
    if arg <= math.e:
        return 1.0, True
    return math.log(arg), False


def alg1_stage_target(gap_guess: float, gamma: float, T: int, K: int) -> int:
    """Cumulative round count ``n_m`` to reach before the stage's elimination.

    The log argument is clamped at ``e`` so the target stays positive for
    tiny gap guesses.
    """
    lg, _ = _log_term(gap_guess, T, K)
    return math.ceil(2.0 * gamma * lg / (gap_guess * gap_guess))


def alg1_confidence(gap_guess: float, n_m: int, T: int, K: int) -> float:
    """Confidence radius ``c_m`` of a stage with target ``n_m``."""
    if n_m < 1:
        raise ValueError("n_m must be at least 1")
    lg, _ = _log_term(gap_guess, T, K)
    return math.sqrt(lg / (2.0 * n_m))


def alg1_lambda_bar(means, periods, c: float) -> tuple[float, int]:
    """Optimistic estimate ``min_i (mean_i / x_i + c / x_i)`` of the best rate.

    Returns the value and the (first, i.e. shortest) arm attaining it.
    """
    means = np.asarray(means, dtype=float)
    periods = np.asarray(periods, dtype=float)
    if np.isnan(means).any():
        raise ValueError("every active arm needs at least one sample")
    vals = means / periods + c / periods
    k = int(np.argmin(vals))
    return float(vals[k]), k


def alg1_eliminate(means, periods, lambda_bar: float, c: float, x1: float,
                   rule: str = "standard") -> np.ndarray:
    """Boolean mask of the arms that survive the stage.

    ``standard``: drop arm i when its relative loss ``mean_i - x_i*lambda_bar``
    reaches ``min_j [mean_j - x_j*lambda_bar + 2(1 + x_j/x1) c]``.
    ``aggressive``: drop when it reaches ``min_j (mean_j - x_j*lambda_bar) + 4c``.
    The arm with the smallest relative loss is kept if nothing else survives.
    """
    means = np.asarray(means, dtype=float)
    periods = np.asarray(periods, dtype=float)
    rel = means - periods * lambda_bar
    if rule == "standard":
        threshold = np.min(rel + 2.0 * (1.0 + periods / x1) * c)
    elif rule == "aggressive":
        threshold = np.min(rel) + 4.0 * c
    else:
        raise ValueError(f"unknown elimination rule {rule!r}")
    keep = rel < threshold
    if not keep.any():
        keep[int(np.argmin(rel))] = True
    return keep


def alg1_select(active_periods, certified=None) -> float:
    """Period to play: the longest active one, or with a certified set, the longest
    certified active one (the rest of the set is covered by its side observations)."""
    active_periods = np.asarray(active_periods, dtype=float)
    if certified is not None:
        cert = np.asarray(certified, dtype=bool)
        if cert.any():
            return float(active_periods[cert].max())
    return float(active_periods.max())


def alg2_arm_count(T: int) -> int:
    """Smallest integer ``n`` with ``n**3 >= T``."""
    n = max(1, round(T ** (1.0 / 3.0)))
    while n ** 3 < T:
        n += 1
    while n > 1 and (n - 1) ** 3 >= T:
        n -= 1
    return n


def alg2_periods(x_min: float, x_max: float, n: int) -> np.ndarray:
    """Right endpoints ``x_min + k (x_max - x_min)/n`` of ``n`` equal subintervals."""
    k = np.arange(1, n + 1)
    grid = x_min + k * (x_max - x_min) / n
    grid[-1] = x_max
    return grid


# ---------------------------------------------------------------------------
# policies


class Policy:
    """Step interface shared by every learner."""

    name = "policy"

    def next_period(self) -> float:
        raise NotImplementedError

    def planned_rounds(self) -> int:
        return 1

    def update(self, batch: RoundBatch) -> None:
        raise NotImplementedError


class _StagedBase(Policy):
    def __init__(self, periods, horizon: int, loss: LossSpec):
        p = np.sort(np.asarray(periods, dtype=float))
        if p.size == 0:
            raise ValueError("need at least one period")
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.periods = p
        self.K = len(p)
        self.T = int(horizon)
        self.loss = loss.without_cost()
        self.stats = ArmStats(p)
        self.active = np.arange(self.K)
        self.stage = 0
        self.gap_guess = 1.0
        self.clamped = False
        self.t = 0
        self.target = 0
        self.gamma = 0.0
        self.history: list[StageRecord] = []
        self._index = {float(x): i for i, x in enumerate(p)}

    def _stage_gamma(self) -> float:
        x1 = self.periods[self.active[0]]
        x2 = self.periods[self.active[-1]]
        return (1.0 + x2 / x1) ** 2

    def _start_stage(self) -> None:
        if len(self.active) == 1:
            self.target = self.T
            return
        self.gamma = self._stage_gamma()
        _, now_clamped = _log_term(self.gap_guess, self.T, self.K)
        self.target = alg1_stage_target(self.gap_guess, self.gamma, self.T, self.K)
        if self.clamped and self.target <= self.t:
            # gap guess no longer shrinks; keep playing instead of spinning empty stages
            self.target = self.T
        self.clamped = self.clamped or now_clamped

    def _stage_done(self) -> bool:
        raise NotImplementedError

    def _eliminate(self, extra: dict | None = None) -> None:
        act = self.active
        c = alg1_confidence(self.gap_guess, self.target, self.T, self.K)
        means = self.stats.mean_loss[act]
        xs = self.periods[act]
        lam_bar, _ = alg1_lambda_bar(means, xs, c)
        keep = alg1_eliminate(means, xs, lam_bar, c, xs[0], self.rule)
        self.history.append(StageRecord(
            stage=self.stage, gap_guess=self.gap_guess, gamma=self.gamma,
            target=self.target, confidence=c, lambda_bar=lam_bar, round=self.t,
            active_before=xs.copy(), counts=self.stats.n[act].copy(), means=means.copy(),
            active_after=xs[keep].copy(), clamped=self.clamped, **(extra or {}),
        ))
        self.active = act[keep]
        if not self.clamped:
            self.gap_guess /= 2.0
        self.stage += 1

    def _stage_extra(self) -> dict | None:
        return None

    def _advance(self) -> None:
        while len(self.active) > 1 and self.t < self.T and self._stage_done():
            self._eliminate(self._stage_extra())
            self._start_stage()


class ImprovedUCBSide(_StagedBase):
    """Improved UCB for time-associative bandits with side observations.

    Each stage plays the longest active period until the cumulative round
    count reaches ``n_m``. Because every active period is no longer than the
    one played, each round yields a loss sample for all of them. At the end of
    the stage the optimal rate is estimated optimistically and periods with a
    clearly worse relative loss are eliminated; the gap guess then halves.

    Parameters
    ----------
    periods : sequence of float
        Candidate defense periods.
    horizon : int
        Number of rounds ``T``.
    loss : LossSpec
        Loss shape; any cost threshold in it is ignored.
    rule : {"standard", "aggressive"}
        Elimination margin: the per-competitor margin ``2(1 + x_j/x_(1)) c``
        or the flat, tighter ``4c``.
    """

    def __init__(self, periods, horizon: int, loss: LossSpec, rule: str = "standard"):
        super().__init__(periods, horizon, loss)
        if rule not in ("standard", "aggressive"):
            raise ValueError(f"unknown elimination rule {rule!r}")
        self.rule = rule
        self.name = "alg1" if rule == "standard" else "alg1-aggressive"
        self.eliminated_at: dict[float, int] = {}
        self._start_stage()

    def next_period(self) -> float:
        return float(self.periods[self.active[-1]])

    def planned_rounds(self) -> int:
        return max(1, min(self.target, self.T) - self.t)

    def _stage_done(self) -> bool:
        return self.t >= self.target

    def _eliminate(self, extra=None) -> None:
        before = set(self.active.tolist())
        super()._eliminate(extra)
        for i in before - set(self.active.tolist()):
            self.eliminated_at[float(self.periods[i])] = self.history[-1].round

    def update(self, batch: RoundBatch) -> None:
        x = batch.period
        vals = side_loss_matrix(self.loss, self.periods, x, batch.attack, cost_active=False)
        # only shorter periods: longer ones are known only when an attack shows up
        vals[self.periods > x] = np.nan
        self.stats.add(vals)
        self.t += len(batch)
        self._advance()


class ContinuousImprovedUCB(ImprovedUCBSide):
    """Improved UCB on the right endpoints of ``n = ceil(T^(1/3))`` subintervals."""

    def __init__(self, x_min: float, x_max: float, horizon: int, loss: LossSpec,
                 n: int | None = None, rule: str = "standard"):
        if not 0 < x_min < x_max:
            raise ValueError("need 0 < x_min < x_max")
        self.n_intervals = alg2_arm_count(horizon) if n is None else int(n)
        self.x_min, self.x_max = x_min, x_max
        super().__init__(alg2_periods(x_min, x_max, self.n_intervals), horizon, loss, rule)
        self.name = "alg2"


class FixedCostUCB(_StagedBase):
    """Stage-based learner for an attacker with a fixed, hidden cost threshold.

    Side observations are trustworthy only for periods known to exceed the
    threshold. Those certified periods (the set ``Y``) are covered by playing
    the longest of them; every other active period is played on its own,
    balanced by sample count. An attack observed at period ``x`` certifies
    every active period ``>= x``.
    """

    name = "fixed-cost"
    rule = "standard"

    def __init__(self, periods, horizon: int, loss: LossSpec):
        super().__init__(periods, horizon, loss)
        self.certified = np.zeros(self.K, dtype=bool)
        self._start_stage()

    def _units(self):
        act = self.active
        cert = act[self.certified[act]]
        units = []
        if cert.size and self.stats.n[cert].min() < self.target:
            units.append((int(self.stats.n[cert].min()), float(self.periods[cert[-1]])))
        for i in act[~self.certified[act]]:
            if self.stats.n[i] < self.target:
                units.append((int(self.stats.n[i]), float(self.periods[i])))
        return units

    def next_period(self) -> float:
        if len(self.active) == 1:
            return float(self.periods[self.active[0]])
        units = self._units()
        if not units:
            return float(self.periods[self.active[-1]])
        return min(units)[1]

    def _stage_done(self) -> bool:
        return bool(np.all(self.stats.n[self.active] >= self.target))

    def _stage_extra(self) -> dict:
        return {"certified": self.periods[self.certified].copy()}

    def update(self, batch: RoundBatch) -> None:
        x = batch.period
        i = self._index[x]
        if self.certified[i]:
            vals = side_loss_matrix(self.loss, self.periods, x, batch.attack,
                                    certified=self.certified)
            vals[~self.certified | (self.periods > x)] = np.nan
            self.stats.add(vals)
        else:
            self.stats.add_single(i, batch.loss)
            if batch.observed.any():
                act = self.active
                self.certified[act[self.periods[act] >= x]] = True
        self.t += len(batch)
        self._advance()


class RandomCostUCB(_StagedBase):
    """Stage-based learner for a threshold redrawn every round.

    With no dependable side observations, every active period is played on its
    own (round-robin) until its sample count reaches the stage target; the
    ratio term uses the full period range throughout.
    """

    name = "random-cost"
    rule = "standard"

    def __init__(self, periods, horizon: int, loss: LossSpec):
        super().__init__(periods, horizon, loss)
        self._stage_start_counts = np.zeros(self.K, dtype=np.int64)
        self._start_stage()

    def _stage_gamma(self) -> float:
        return (1.0 + self.periods[-1] / self.periods[0]) ** 2

    def next_period(self) -> float:
        act = self.active
        if len(act) == 1:
            return float(self.periods[act[0]])
        counts = self.stats.n[act]
        return float(self.periods[act[int(np.argmin(counts))]])

    def _stage_done(self) -> bool:
        return bool(np.all(self.stats.n[self.active] >= self.target))

    def _stage_extra(self) -> dict:
        act = self.active
        plays = self.stats.n[act] - self._stage_start_counts[act]
        self._stage_start_counts = self.stats.n.copy()
        return {"stage_plays": plays}

    def update(self, batch: RoundBatch) -> None:
        self.stats.add_single(self._index[batch.period], batch.loss)
        self.t += len(batch)
        self._advance()


class TimeUCB(Policy):
    """Per-round lower-confidence index on the time-average loss.

    Plays ``argmin_i mean_i/x_i - sqrt(2 ln t / n_i)/x_i``. Without side
    observations each arm is first played once; with them, one play of the
    longest period seeds every arm, and later plays feed every period no
    longer than the one played.
    """

    def __init__(self, periods, horizon: int, loss: LossSpec, side: bool = False):
        self.periods = np.sort(np.asarray(periods, dtype=float))
        self.K = len(self.periods)
        self.T = int(horizon)
        self.loss = loss.without_cost()
        self.side = side
        self.name = "tucb-side" if side else "tucb"
        self.stats = ArmStats(self.periods)
        self.t = 0
        self._init_queue = [self.K - 1] if side else list(range(self.K))
        self._index = {float(x): i for i, x in enumerate(self.periods)}
        self._inv_x = 1.0 / self.periods

    def next_period(self) -> float:
        while self._init_queue:
            i = self._init_queue[0]
            if self.stats.n[i] == 0:
                return float(self.periods[i])
            self._init_queue.pop(0)
        n = self.stats.n
        width = np.sqrt(2.0 * math.log(max(self.t, 1)) / n)
        index = (self.stats.sums / n - width) * self._inv_x
        return float(self.periods[int(np.argmin(index))])

    def update(self, batch: RoundBatch) -> None:
        x = batch.period
        if self.side and len(batch) == 1:
            k = self._index[x] + 1  # arms 0..k-1 are no longer than x
            a = batch.attack[0]
            cd = self.loss.defense_cost
            vals = self.loss.f(self.periods[:k] - a) + cd if a == a else cd
            self.stats.sums[:k] = self.stats.sums[:k] + vals
            self.stats.n[:k] += 1
        elif self.side:
            vals = side_loss_matrix(self.loss, self.periods, x, batch.attack, cost_active=False)
            vals[self.periods > x] = np.nan
            self.stats.add(vals)
        else:
            self.stats.add_single(self._index[x], batch.loss)
        self.t += len(batch)


POLICY_NAMES = ("alg1", "alg1-aggressive", "alg2", "fixed-cost", "random-cost", "tucb", "tucb-side")


def make_policy(name: str, periods, horizon: int, loss: LossSpec,
                continuous: tuple[float, float] | None = None) -> Policy:
    """Instantiate a learner by its registry name."""
    if name == "alg1":
        return ImprovedUCBSide(periods, horizon, loss, "standard")
    if name == "alg1-aggressive":
        return ImprovedUCBSide(periods, horizon, loss, "aggressive")
    if name == "alg2":
        if continuous is None:
            raise ValueError("alg2 needs a continuous period range")
        return ContinuousImprovedUCB(continuous[0], continuous[1], horizon, loss)
    if name == "fixed-cost":
        return FixedCostUCB(periods, horizon, loss)
    if name == "random-cost":
        return RandomCostUCB(periods, horizon, loss)
    if name == "tucb":
        return TimeUCB(periods, horizon, loss, side=False)
    if name == "tucb-side":
        return TimeUCB(periods, horizon, loss, side=True)
    raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")

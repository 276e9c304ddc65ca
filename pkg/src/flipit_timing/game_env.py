"""FlipIt-variant round simulator with censored, delayed feedback.

Each round the defender commits to a period ``x``; the myopic attacker starts
immediately and needs a random time ``a``. At the end of the round the
defender learns ``a`` only if the attack succeeded inside the period
(``a < x``); otherwise the round is censored. Raw attack times are kept in a
sealed part of the trace for evaluators and tests, never handed to learners.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .attack_model import AttackModel, FixedCost, LossSpec, NoCost, RandomCost

CHUNK = 4096


@dataclass(frozen=True)
class FeedbackRecord:
    """What the defender learns when a round ends.

    ``attack`` is ``None`` for a censored round. ``x0_blocked`` marks rounds in
    which the attacker stayed idle because the period did not exceed the cost
    threshold; it is environment metadata and learners must not read it.
    """

    round: int
    node: int
    period: float
    attack: float | None
    loss: float
    x0_blocked: bool
    tau_start: float

    @property
    def observed(self) -> bool:
        return self.attack is not None

    @property
    def end_time(self) -> float:
        return self.tau_start + self.period


@dataclass
class RoundBatch:
    """Feedback of ``len(batch)`` consecutive rounds played with one period on one node."""

    node: int
    first_round: int
    period: float
    observed: np.ndarray
    attack: np.ndarray  # nan where censored
    loss: np.ndarray
    x0_blocked: np.ndarray
    tau_start: np.ndarray

    def __len__(self) -> int:
        return len(self.loss)

    def records(self) -> list[FeedbackRecord]:
        return [
            FeedbackRecord(
                round=self.first_round + k,
                node=self.node,
                period=self.period,
                attack=float(self.attack[k]) if self.observed[k] else None,
                loss=float(self.loss[k]),
                x0_blocked=bool(self.x0_blocked[k]),
                tau_start=float(self.tau_start[k]),
            )
            for k in range(len(self))
        ]


class _NodeStream:
    """Per-node attack-time (and threshold) draws, identical for every policy.

    Draws are buffered in chunks of uniforms; the t-th attack time depends only
    on the seed and t, never on how many rounds were requested at once.
    """

    def __init__(self, model: AttackModel, spec: LossSpec, seed: int, node: int):
        self.model = model
        self.attack_rng = np.random.default_rng([seed, node, 0])
        self.x0_model = spec.cost.threshold_model if isinstance(spec.cost, RandomCost) else None
        self.x0_rng = np.random.default_rng([seed, node, 1])
        self._a = np.empty(0)
        self._x0 = np.empty(0)
        self._pos = 0

    def _fill(self, n: int) -> None:
        if self._pos + n <= self._a.size:
            return
        extra = max(CHUNK, n)
        self._a = np.concatenate([self._a[self._pos:], self.model.sample(self.attack_rng, extra)])
        if self.x0_model is not None:
            self._x0 = np.concatenate([self._x0[self._pos:],
                                       self.x0_model.sample(self.x0_rng, extra)])
        self._pos = 0

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray | None]:
        self._fill(n)
        lo, self._pos = self._pos, self._pos + n
        x0 = None if self.x0_model is None else self._x0[lo:self._pos]
        return self._a[lo:self._pos], x0

    def take_one(self) -> tuple[float, float | None]:
        self._fill(1)
        k = self._pos
        self._pos += 1
        return float(self._a[k]), None if self.x0_model is None else float(self._x0[k])


class GameTrace:
    """Per-node history of played rounds, including the sealed attack draws."""

    COLUMNS = ("node", "round", "tau_start", "period", "observed", "attack_time_or_empty", "loss")

    def __init__(self, nodes: int, seed: int):
        self.seed = seed
        self.nodes = nodes
        self._cols = {
            s: {k: [] for k in ("period", "loss", "observed", "tau_start", "x0_blocked", "a", "x0")}
            for s in range(1, nodes + 1)
        }
        self._tau = {s: 0.0 for s in range(1, nodes + 1)}

    def _append(self, node, period, a, x0, loss, observed, blocked, taus, tau_end):
        c = self._cols[node]
        n = len(loss)
        c["period"].extend([period] * n)
        c["loss"].extend(loss.tolist())
        c["observed"].extend(observed.tolist())
        c["tau_start"].extend(taus.tolist())
        c["x0_blocked"].extend(blocked.tolist())
        c["a"].extend(a.tolist())
        c["x0"].extend([math.nan] * n if x0 is None else x0.tolist())
        self._tau[node] = tau_end

    def _append_one(self, node, period, a, x0, loss, observed, blocked, tau_start, tau_end):
        c = self._cols[node]
        c["period"].append(period)
        c["loss"].append(loss)
        c["observed"].append(observed)
        c["tau_start"].append(tau_start)
        c["x0_blocked"].append(blocked)
        c["a"].append(a)
        c["x0"].append(math.nan if x0 is None else x0)
        self._tau[node] = tau_end

    def n_rounds(self, node: int = 1) -> int:
        return len(self._cols[node]["loss"])

    def wall_time(self, node: int = 1) -> float:
        """Current time ``tau`` of the node: the sum of its played periods."""
        return self._tau[node]

    def column(self, name: str, node: int = 1) -> np.ndarray:
        return np.asarray(self._cols[node][name])

    def sealed_attacks(self, node: int = 1) -> np.ndarray:
        """Raw attack draws, including censored ones. Evaluator-only."""
        return np.asarray(self._cols[node]["a"])

    def sealed_thresholds(self, node: int = 1) -> np.ndarray:
        """Raw per-round thresholds (nan unless the cost is random). Evaluator-only."""
        return np.asarray(self._cols[node]["x0"])

    def records(self, node: int = 1) -> list[FeedbackRecord]:
        c = self._cols[node]
        return [
            FeedbackRecord(
                round=t + 1,
                node=node,
                period=c["period"][t],
                attack=c["a"][t] if c["observed"][t] else None,
                loss=c["loss"][t],
                x0_blocked=c["x0_blocked"][t],
                tau_start=c["tau_start"][t],
            )
            for t in range(len(c["loss"]))
        ]

    def all_records(self) -> list[FeedbackRecord]:
        recs = [r for s in range(1, self.nodes + 1) for r in self.records(s)]
        recs.sort(key=lambda r: (r.end_time, r.node, r.round))
        return recs

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for s in range(1, self.nodes + 1):
                for r in self.records(s):
                    w.writerow(
                        [r.node, r.round, repr(r.tau_start), repr(r.period), int(r.observed),
                         "" if r.attack is None else repr(r.attack), repr(r.loss)]
                    )

    def to_json(self, path) -> None:
        doc = {
            "seed": self.seed,
            "nodes": self.nodes,
            "rounds": [asdict(r) for s in range(1, self.nodes + 1) for r in self.records(s)],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)


class GameEnv:
    """Simulator for one trial.

    Parameters
    ----------
    spec : LossSpec
        True loss, including the attack-cost variant.
    model : AttackModel
        Attack-time distribution.
    seed : int
        Trial seed. Node ``s`` draws from streams keyed by ``(seed, s)``, so
        environments built with the same seed replay the same attacks.
    nodes : int
        Number of independently attacked resources.
    period_bounds : (float, float), optional
        Admissible ``[x_min, x_max]``; plays outside it are rejected.
    """

    def __init__(self, spec: LossSpec, model: AttackModel, seed: int, nodes: int = 1,
                 period_bounds: tuple[float, float] | None = None):
        if nodes < 1:
            raise ValueError("need at least one node")
        self.spec = spec
        self.model = model
        self.seed = seed
        self.nodes = nodes
        self.period_bounds = period_bounds
        self._streams = {s: _NodeStream(model, spec, seed, s) for s in range(1, nodes + 1)}
        self.trace = GameTrace(nodes, seed)

    def play(self, x: float, count: int = 1, node: int = 1) -> RoundBatch:
        """Play ``count`` consecutive rounds of period ``x`` on ``node``."""
        stream = self._streams.get(node)
        if stream is None:
            raise KeyError(f"unknown node id {node}")
        x = float(x)
        if self.period_bounds is not None:
            lo, hi = self.period_bounds
            if not lo <= x <= hi:
                raise ValueError(f"period {x} outside [{lo}, {hi}]")
        if not x > 0 or (self.spec.flavor == "linear" and x > self.spec.x_max_norm):
            self.spec.check_period(x)
        if count == 1:
            return self._play_one(stream, x, node)
        a, x0 = self._streams[node].take(count)
        cost = self.spec.cost
        if isinstance(cost, NoCost):
            attacked = np.ones(count, dtype=bool)
        elif isinstance(cost, FixedCost):
            attacked = np.full(count, x > cost.x0)
        else:
            attacked = x > x0
        observed = attacked & (a < x)
        loss = np.where(attacked, self.spec.f(x - a), 0.0) + self.spec.defense_cost
        tau0 = self.trace.wall_time(node)
        # sequential accumulation keeps tau identical to round-by-round play
        taus = np.cumsum(np.concatenate([[tau0], np.full(count, x)]))
        first = self.trace.n_rounds(node) + 1
        self.trace._append(node, x, a, x0, loss, observed, ~attacked, taus[:-1], float(taus[-1]))
        return RoundBatch(
            node=node,
            first_round=first,
            period=x,
            observed=observed,
            attack=np.where(observed, a, np.nan),
            loss=loss,
            x0_blocked=~attacked,
            tau_start=taus[:-1],
        )

    def _play_one(self, stream: _NodeStream, x: float, node: int) -> RoundBatch:
        # scalar path; must agree bit-for-bit with the vectorized one above
        a, x0 = stream.take_one()
        cost = self.spec.cost
        if isinstance(cost, NoCost):
            attacked = True
        elif isinstance(cost, FixedCost):
            attacked = x > cost.x0
        else:
            attacked = x > x0
        observed = attacked and a < x
        s = x - a
        if self.spec.flavor == "binary":
            f = 1.0 if s > 0 else 0.0
        else:
            f = (s if s > 0 else 0.0) / self.spec.x_max_norm
        loss = (f if attacked else 0.0) + self.spec.defense_cost
        tau0 = self.trace.wall_time(node)
        first = self.trace.n_rounds(node) + 1
        self.trace._append_one(node, x, a, x0, loss, observed, not attacked, tau0, tau0 + x)
        return RoundBatch(
            node=node, first_round=first, period=x,
            observed=np.array([observed]),
            attack=np.array([a if observed else math.nan]),
            loss=np.array([loss]),
            x0_blocked=np.array([not attacked]),
            tau_start=np.array([tau0]),
        )

    def play_round(self, node: int, x: float) -> FeedbackRecord:
        return self.play(x, 1, node).records()[0]


def side_loss_matrix(spec: LossSpec, periods, x: float, attack, certified=None,
                     cost_active: bool | None = None) -> np.ndarray:
    """Losses every period would have incurred in rounds played with period ``x``.

    Parameters
    ----------
    spec : LossSpec
        Loss shape (``f`` and ``c_d``).
    periods : array_like
        Candidate periods, shape ``(K,)``.
    x : float
        Period actually played.
    attack : array_like
        Observed attack times per round, ``nan`` where censored, shape ``(n,)``.
    certified : array_like of bool, optional
        Periods already known to exceed the cost threshold.
    cost_active : bool, optional
        Whether an attack-cost threshold may be hiding attacks; defaults to
        ``spec.has_cost or certified is not None``.

    Returns
    -------
    ndarray, shape ``(K, n)``
        Loss values, ``nan`` where the feedback does not determine them.
    """
    p = np.asarray(periods, dtype=float)[:, None]
    a = np.asarray(attack, dtype=float)[None, :]
    if cost_active is None:
        cost_active = spec.has_cost or certified is not None
    cd = spec.defense_cost
    observed = ~np.isnan(a)
    full = spec.f(p - np.where(observed, a, 0.0)) + cd
    out = np.where(p <= x, cd, np.nan) * np.ones_like(a)
    if not cost_active:
        return np.where(observed, full, out)
    # an attack at x certifies x0 < x for every period >= x
    known_attacked = p >= x
    if certified is not None:
        known_attacked = known_attacked | np.asarray(certified, dtype=bool)[:, None]
    obs_val = np.where(known_attacked, full, np.where(p <= a, cd, np.nan))
    return np.where(observed, obs_val, out)


def side_observations(record: FeedbackRecord, periods, spec: LossSpec, certified=None,
                      cost_active: bool | None = None) -> list[tuple[float, float | None]]:
    """Per-period losses deducible from one round's feedback (``None`` = unknown)."""
    periods = [float(p) for p in periods]
    if any(b < a for a, b in zip(periods, periods[1:])):
        raise ValueError("periods must be sorted ascending")
    attack = math.nan if record.attack is None else record.attack
    col = side_loss_matrix(spec, periods, record.period, [attack], certified, cost_active)[:, 0]
    return [(p, None if math.isnan(v) else float(v)) for p, v in zip(periods, col)]


def pooled_feedback(trace: GameTrace, before: float) -> list[FeedbackRecord]:
    """All records, across nodes, whose round ended at or before ``before``.

    Ordered by end time; ties go to the lower node id.
    """
    return [r for r in trace.all_records() if r.end_time <= before]

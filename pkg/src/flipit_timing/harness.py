"""Seeded multi-trial experiments, regret aggregation and bound reports.

Trial ``t`` uses seed ``base_seed + t``. Within a trial every policy faces the
same attack-time sequence (round ``k`` always draws the k-th attack of the
trial's stream), which pairs the policy comparison.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .attack_model import AttackModel, FixedCost, LossSpec, RandomCost
from .config import ExperimentConfig
from .game_env import GameEnv, RoundBatch
from .oracle import (OracleTable, attack_probabilities, build_table, gamma_ratio,
                     lipschitz_constants, pseudo_regret, random_cost_bound, side_ucb_bound,
                     discretized_bound, fixed_cost_bound)
from .policies import Policy, alg2_arm_count, alg2_periods, make_policy

__all__ = [
    "RegretTrace",
    "TrialResult",
    "ExperimentResult",
    "AggregateCurve",
    "drive",
    "run_trial",
    "run_experiment",
    "run_multinode",
    "aggregate",
    "checkpoints",
    "theorem_report",
    "write_outputs",
    "write_aggregate",
]

TRACE_COLUMNS = ("trial", "policy", "round", "period", "loss", "expected_loss", "cum_regret",
                 "node", "attack_time", "x0")


@dataclass
class RegretTrace:
    """Per-round record of one policy run.

    ``attack`` and ``x0`` are the sealed environment draws, kept for replay
    verification only.
    """

    policy: str
    trial: int
    seed: int
    periods: np.ndarray
    loss: np.ndarray
    expected_loss: np.ndarray
    cum_regret: np.ndarray
    node: np.ndarray
    attack: np.ndarray
    x0: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.periods)

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1]) if self.T else 0.0


@dataclass
class TrialResult:
    trial: int
    seed: int
    model: AttackModel
    spec: LossSpec
    table: OracleTable
    traces: dict[str, RegretTrace]
    policies: dict[str, Policy]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trials: list[TrialResult]

    def traces(self, policy: str | None = None) -> list[RegretTrace]:
        return [tr.traces[p] for tr in self.trials for p in tr.traces
                if policy is None or p == policy]

    def final_regrets(self, policy: str) -> np.ndarray:
        return np.array([tr.traces[policy].final_regret for tr in self.trials])


def trial_periods(config: ExperimentConfig) -> np.ndarray:
    if config.continuous:
        return alg2_periods(config.x_min, config.x_max, alg2_arm_count(config.horizon))
    return np.asarray(config.periods, dtype=float)


def trial_table(config: ExperimentConfig, spec: LossSpec, model: AttackModel) -> OracleTable:
    cont = (config.x_min, config.x_max) if config.continuous else None
    return build_table(spec, model, trial_periods(config), continuous=cont)


def _trace_metadata(table: OracleTable, spec: LossSpec, model: AttackModel, T: int) -> dict:
    meta = {
        "oracle_digest": table.digest(),
        "gamma": gamma_ratio(table.periods[0], table.periods[-1]),
        "delta_min": table.delta_min,
        "delta_max": table.delta_max,
        "x_star": table.x_star,
        "lambda_star": table.lambda_star,
    }
    if isinstance(spec.cost, FixedCost):
        K = table.K
        p = attack_probabilities(spec, model, table.periods, spec.cost.x0)
        b = [32.0 * meta["gamma"] * math.log(max(math.e, T * (K + 1) * d * d / 4.0))
             for d in table.gaps]
        meta["p_i"] = p.tolist()
        meta["B_i"] = b
    return meta


def drive(policy: Policy, env: GameEnv, T: int, batch: bool = True,
          on_update: Callable[[Policy, RoundBatch], None] | None = None) -> None:
    """Run ``policy`` for ``T`` rounds on node 1 of ``env``.

    With ``batch`` the policy's :meth:`~Policy.planned_rounds` hint is honored,
    which changes nothing but speed; without it every round is fed back
    individually.
    """
    t = 0
    while t < T:
        x = policy.next_period()
        count = min(policy.planned_rounds(), T - t) if batch else 1
        fb = env.play(x, count)
        policy.update(fb)
        if on_update is not None:
            on_update(policy, fb)
        t += count


def _make(config: ExperimentConfig, name: str, spec: LossSpec, periods) -> Policy:
    cont = (config.x_min, config.x_max) if config.continuous else None
    return make_policy(name, periods, config.horizon, spec, continuous=cont)


def _build_trace(name: str, trial: int, seed: int, env: GameEnv, table: OracleTable,
                 meta: dict, nodes: int = 1, order=None) -> RegretTrace:
    tr = env.trace
    cols = {k: [] for k in ("period", "loss", "node", "a", "x0")}
    for s in range(1, nodes + 1):
        cols["period"].append(tr.column("period", s))
        cols["loss"].append(tr.column("loss", s))
        cols["node"].append(np.full(tr.n_rounds(s), s))
        cols["a"].append(tr.sealed_attacks(s))
        cols["x0"].append(tr.sealed_thresholds(s))
    cols = {k: np.concatenate(v) for k, v in cols.items()}
    if order is not None:
        cols = {k: v[order] for k, v in cols.items()}
    reg = pseudo_regret(cols["period"], table)
    idx = table.index_of(cols["period"])
    return RegretTrace(
        policy=name, trial=trial, seed=seed, periods=cols["period"], loss=cols["loss"],
        expected_loss=table.l[idx], cum_regret=reg.cumulative, node=cols["node"],
        attack=cols["a"], x0=cols["x0"], metadata=meta,
    )


def run_trial(config: ExperimentConfig, trial: int, policies=None, batch: bool = True,
              on_update=None) -> TrialResult:
    """Run every policy of the config on one trial's instance and attack stream."""
    seed = config.trial_seed(trial)
    model = config.trial_model(trial)
    spec = config.loss_spec(trial)
    table = trial_table(config, spec, model)
    meta = _trace_metadata(table, spec, model, config.horizon)
    periods = trial_periods(config)
    bounds = (config.x_min, config.x_max)
    traces, pols = {}, {}
    for name in policies or config.policies:
        policy = _make(config, name, spec, periods)
        if config.nodes > 1:
            traces[name] = run_multinode(config, trial, name, policy=policy,
                                         spec=spec, model=model, table=table)
        else:
            env = GameEnv(spec, model, seed, period_bounds=bounds)
            drive(policy, env, config.horizon, batch=batch, on_update=on_update)
            traces[name] = _build_trace(name, trial, seed, env, table, dict(meta))
        pols[name] = policy
    return TrialResult(trial, seed, model, spec, table, traces, pols)


def run_multinode(config: ExperimentConfig, trial: int, policy_name: str,
                  policy: Policy | None = None, spec=None, model=None,
                  table=None) -> RegretTrace:
    """One shared policy defending ``config.nodes`` resources until ``horizon`` total rounds.

    Rounds are processed in order of their end time. Every feedback that has
    arrived by a node's decision time (ties included, lower node id first) is
    fed to the policy before that node picks its next period.
    """
    seed = config.trial_seed(trial)
    model = model or config.trial_model(trial)
    spec = spec or config.loss_spec(trial)
    table = table or trial_table(config, spec, model)
    policy = policy or _make(config, policy_name, spec, trial_periods(config))
    N, T = config.nodes, config.horizon
    env = GameEnv(spec, model, seed, nodes=N, period_bounds=(config.x_min, config.x_max))
    heap: list = []
    dispatched = 0
    dispatch_order: list[tuple[int, int]] = []  # (node, round) in decision order

    def dispatch(node: int) -> None:
        nonlocal dispatched
        fb = env.play(policy.next_period(), 1, node)
        dispatch_order.append((node, fb.first_round))
        heapq.heappush(heap, (float(fb.tau_start[0] + fb.period), node, fb))
        dispatched += 1

    for s in range(1, N + 1):
        if dispatched < T:
            dispatch(s)
    while heap:
        t_end = heap[0][0]
        ready = []
        while heap and heap[0][0] == t_end:
            ready.append(heapq.heappop(heap))
        ready.sort(key=lambda e: e[1])
        for _, _, fb in ready:
            policy.update(fb)
        for _, node, _ in ready:
            if dispatched < T:
                dispatch(node)

    # rows of the concatenated per-node columns, rearranged into decision order
    offsets = np.cumsum([0] + [env.trace.n_rounds(s) for s in range(1, N + 1)])
    order = np.array([offsets[s - 1] + r - 1 for s, r in dispatch_order], dtype=np.int64)
    meta = _trace_metadata(table, spec, model, T)
    meta["nodes"] = N
    meta["wall_time"] = [env.trace.wall_time(s) for s in range(1, N + 1)]
    return _build_trace(policy_name, trial, seed, env, table, meta, nodes=N, order=order)


def _run_trial_job(args):
    config, trial = args
    return run_trial(config, trial)


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Run all trials; results are ordered by trial index whatever ``jobs`` is."""
    tasks = [(config, t) for t in range(config.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial_job, tasks))
    else:
        results = [_run_trial_job(t) for t in tasks]
    return ExperimentResult(config, results)


# ---------------------------------------------------------------------------
# aggregation and reports


def checkpoints(T: int) -> list[int]:
    """Rounds ``{1, 2, 5} x 10^k`` up to ``T``, plus ``T`` itself."""
    pts = set()
    k = 0
    while 10 ** k <= T:
        for m in (1, 2, 5):
            if m * 10 ** k <= T:
                pts.add(m * 10 ** k)
        k += 1
    pts.add(T)
    return sorted(pts)


@dataclass(frozen=True)
class AggregateCurve:
    policy: str
    checkpoints: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    trials: int


def aggregate(traces) -> dict[str, AggregateCurve]:
    """Mean and standard error of cumulative pseudo-regret at log checkpoints, per policy."""
    traces = list(traces)
    if not traces:
        return {}
    horizons = {tr.T for tr in traces}
    if len(horizons) != 1:
        raise ValueError(f"traces have mismatched horizons {sorted(horizons)}")
    T = horizons.pop()
    pts = np.array(checkpoints(T))
    out = {}
    for name in dict.fromkeys(tr.policy for tr in traces):
        mat = np.array([tr.cum_regret[pts - 1] for tr in traces if tr.policy == name])
        n = mat.shape[0]
        mean = mat.mean(axis=0)
        se = mat.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
        out[name] = AggregateCurve(name, pts, mean, se, n)
    return out


def theorem_report(traces, table: OracleTable, spec: LossSpec, model: AttackModel,
                   T: int, continuous: tuple[float, float] | None = None) -> list[dict]:
    """Regret bound vs. measured mean regret for each policy run on one instance.

    Policies without a proven bound (the aggressive variant and the index
    baselines) are reported with ``bound = None``.
    """
    by_policy: dict[str, list[float]] = {}
    for tr in traces:
        by_policy.setdefault(tr.policy, []).append(tr.final_regret)
    rows = []
    for name, vals in by_policy.items():
        bound, label = None, None
        if name == "alg1":
            bound, label = side_ucb_bound(table, T), "side-ucb"
        elif name == "alg2":
            lo, hi = continuous if continuous else (table.periods[0], table.periods[-1])
            _, Lp = lipschitz_constants(spec, model, lo, hi)
            bound = discretized_bound(Lp, table.K, T, lo, hi, table.delta_max)
            label = "discretized"
        elif name == "fixed-cost" and isinstance(spec.cost, FixedCost):
            p = attack_probabilities(spec, model, table.periods, spec.cost.x0)
            bound, label = fixed_cost_bound(table, T, spec.cost.x0, p), "fixed-cost"
        elif name == "random-cost":
            bound, label = random_cost_bound(table, T), "random-cost"
        measured = float(np.mean(vals))
        rows.append({
            "policy": name, "bound_kind": label, "bound": bound, "measured_mean": measured,
            "trials": len(vals), "oracle_digest": table.digest(),
            "ok": True if bound is None else measured <= bound,
        })
    return rows


# ---------------------------------------------------------------------------
# output files


def write_traces_csv(path, traces) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for tr in traces:
            rows = zip(tr.periods.tolist(), tr.loss.tolist(), tr.expected_loss.tolist(),
                       tr.cum_regret.tolist(), tr.node.tolist(), tr.attack.tolist(),
                       tr.x0.tolist())
            for r, (x, lo, el, cr, nd, a, x0) in enumerate(rows, start=1):
                w.writerow([tr.trial, tr.policy, r, repr(x), repr(lo), repr(el), repr(cr), nd,
                            repr(a), "" if math.isnan(x0) else repr(x0)])


def write_aggregate(path, curves: dict[str, AggregateCurve]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("policy", "checkpoint", "mean", "stderr"))
        for name, c in curves.items():
            for pt, m, s in zip(c.checkpoints.tolist(), c.mean.tolist(), c.stderr.tolist()):
                w.writerow((name, pt, repr(m), repr(s)))


def manifest(result: ExperimentResult) -> dict:
    cfg = result.config
    return {
        "package_version": __version__,
        "config": cfg.raw,
        "trials": [
            {
                "trial": tr.trial,
                "seed": tr.seed,
                "model": tr.model.params(),
                "cost": _cost_params(tr.spec),
                "oracle_digest": tr.table.digest(),
                "x_star": tr.table.x_star,
                "lambda_star": tr.table.lambda_star,
            }
            for tr in result.trials
        ],
    }


def _cost_params(spec: LossSpec) -> dict:
    if isinstance(spec.cost, FixedCost):
        return {"kind": "fixed", "x0": spec.cost.x0}
    if isinstance(spec.cost, RandomCost):
        return {"kind": "random", "model": spec.cost.threshold_model.params()}
    return {"kind": "none"}


def write_manifest(path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_outputs(result: ExperimentResult, out_dir, traces: bool = True) -> list:
    """Write ``manifest.json``, ``aggregate.csv`` and (optionally) ``traces.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "manifest.json", out / "aggregate.csv"]
    write_manifest(files[0], manifest(result))
    write_aggregate(files[1], aggregate(result.traces()))
    if traces:
        files.append(out / "traces.csv")
        write_traces_csv(files[2], result.traces())
    return files

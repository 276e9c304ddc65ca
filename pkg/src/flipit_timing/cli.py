"""Command-line driver: ``flipit-timing <subcommand> ...``.

Exit codes
----------
0  success
1  a regret bound was violated (``theorem-check``)
2  invalid configuration or overrides; nothing is written
3  runtime failure
4  replay mismatch
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .attack_model import FixedCost, LossSpec, NoCost, RandomCost, model_from_dict, round_loss
from .config import ConfigError, ExperimentConfig, apply_overrides, load_config, parse_config, preset
from .harness import (aggregate, manifest, run_experiment, theorem_report, trial_table,
                      write_aggregate, write_manifest, write_outputs, write_traces_csv)

EXIT_OK, EXIT_BOUND, EXIT_CONFIG, EXIT_RUNTIME, EXIT_MISMATCH = 0, 1, 2, 3, 4


def _overrides(args) -> dict:
    pols = None
    if getattr(args, "policies", None):
        pols = [p.strip() for p in args.policies.split(",") if p.strip()]
    return dict(seed=args.seed, trials=args.trials, horizon=args.horizon, policies=pols)


def _config(args) -> ExperimentConfig:
    if args.config is None:
        raw = preset("fig2")
    else:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError([f"<file>: cannot read {args.config} ({exc.strerror})"]) from None
        except json.JSONDecodeError:
            return load_config(args.config)  # re-raised as a ConfigError with position
    return parse_config(apply_overrides(raw, **_overrides(args)))


def cmd_run(args) -> int:
    cfg = _config(args)
    result = run_experiment(cfg, jobs=args.jobs)
    files = write_outputs(result, args.out, traces=not args.no_traces)
    for f in files:
        print(f)
    return EXIT_OK


def cmd_reproduce_fig2(args) -> int:
    raw = apply_overrides(preset("fig2"), **_overrides(args))
    cfgs = {fl: parse_config(apply_overrides(raw, flavor=fl)) for fl in ("binary", "linear")}
    results = {fl: run_experiment(c, jobs=args.jobs) for fl, c in cfgs.items()}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fl, res in results.items():
        curves = aggregate(res.traces())
        write_aggregate(out / f"aggregate_{fl}.csv", curves)
        if args.keep_traces:
            write_traces_csv(out / f"traces_{fl}.csv", res.traces())
        print(f"{fl}: " + ", ".join(f"{p}={c.mean[-1]:.2f}" for p, c in curves.items()))
    write_manifest(out / "manifest.json", {"runs": {fl: manifest(r) for fl, r in results.items()}})
    return EXIT_OK


def cmd_oracle_dump(args) -> int:
    cfg = _config(args)
    if not 0 <= args.trial < cfg.trials:
        raise ConfigError([f"--trial: expected 0 <= trial < {cfg.trials}"])
    model = cfg.trial_model(args.trial)
    spec = cfg.loss_spec(args.trial)
    table = trial_table(cfg, spec, model)
    text = table.to_csv(args.out)
    if args.out is None:
        sys.stdout.write(text)
    print(f"# model {json.dumps(model.params())} x_star={table.x_star!r} "
          f"lambda_star={table.lambda_star!r} digest={table.digest()}", file=sys.stderr)
    return EXIT_OK


def cmd_theorem_check(args) -> int:
    cfg = _config(args)
    result = run_experiment(cfg, jobs=args.jobs)
    # trials sharing an oracle table are the same instance; average over them
    groups: dict[str, list] = defaultdict(list)
    for tr in result.trials:
        groups[tr.table.digest()].append(tr)
    cont = (cfg.x_min, cfg.x_max) if cfg.continuous else None
    rows = []
    for digest, trials in groups.items():
        first = trials[0]
        traces = [t for tr in trials for t in tr.traces.values()]
        rows += theorem_report(traces, first.table, first.spec, first.model, cfg.horizon, cont)
    cols = ("oracle_digest", "policy", "bound_kind", "bound", "measured_mean", "trials", "ok")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([r[c] for c in cols])
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([r[c] for c in cols])
    return EXIT_OK if all(r["ok"] for r in rows) else EXIT_BOUND


# ---------------------------------------------------------------------------
# replay


def _close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def _float(cell: str) -> float:
    return math.nan if cell == "" else float(cell)


def replay(trace_path, manifest_doc: dict) -> tuple[bool, str]:
    """Recompute every derived column of a trace CSV from its sealed draws.

    Returns ``(ok, message)``; the message names the first mismatching row.
    """
    cfg = parse_config(manifest_doc["config"])
    trials = {t["trial"]: t for t in manifest_doc["trials"]}
    cache: dict[int, tuple] = {}

    def instance(trial: int):
        if trial not in cache:
            info = trials[trial]
            model = model_from_dict(info["model"])
            base = cfg.loss_spec(trial)
            c = info["cost"]
            if c["kind"] == "fixed":
                cost = FixedCost(float(c["x0"]))
            elif c["kind"] == "random":
                cost = RandomCost(model_from_dict(c["model"]))
            else:
                cost = NoCost()
            spec = LossSpec(base.flavor, base.defense_cost, base.x_max_norm, cost)
            table = trial_table(cfg, spec, model)
            if table.digest() != info["oracle_digest"]:
                raise ValueError(f"oracle digest of trial {trial} does not match the manifest")
            cache[trial] = (spec, table)
        return cache[trial]

    running: dict[tuple[int, str], tuple[int, float]] = {}
    with open(trace_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for line, row in enumerate(reader, start=2):
            trial, policy = int(row["trial"]), row["policy"]
            where = f"line {line} (trial {trial}, policy {policy}, round {row['round']})"
            if trial not in trials:
                return False, f"mismatch at {where}: trial not in manifest"
            spec, table = instance(trial)
            x, a = float(row["period"]), float(row["attack_time"])
            if isinstance(spec.cost, FixedCost):
                x0 = spec.cost.x0
            elif isinstance(spec.cost, RandomCost):
                x0 = _float(row["x0"])
            else:
                x0 = None
            key = (trial, policy)
            rnd, cum = running.get(key, (0, 0.0))
            if int(row["round"]) != rnd + 1:
                return False, f"mismatch at {where}: expected round {rnd + 1}"
            try:
                k = int(table.index_of(x)[0])
            except KeyError:
                return False, f"mismatch at {where}: period {x!r} is not an arm"
            cum = cum + float(table.gaps[k])
            running[key] = (rnd + 1, cum)
            checks = (
                ("loss", float(round_loss(spec, x, a, x0)), 1e-12),
                ("expected_loss", float(table.l[k]), 1e-12),
                ("cum_regret", cum, 1e-9),
            )
            for col, want, tol in checks:
                got = float(row[col])
                if not _close(got, want, tol):
                    return False, (f"mismatch at {where}: {col} logged {got!r}, "
                                   f"recomputed {want!r}")
    return True, "verified"


def cmd_replay(args) -> int:
    trace = Path(args.trace)
    mpath = Path(args.manifest) if args.manifest else trace.with_name("manifest.json")
    with open(mpath) as fh:
        doc = json.load(fh)
    if "runs" in doc:
        run = args.run or trace.stem.rpartition("_")[2]
        if run not in doc["runs"]:
            raise ConfigError([f"--run: expected one of {sorted(doc['runs'])}"])
        doc = doc["runs"][run]
    ok, msg = replay(trace, doc)
    print(msg)
    return EXIT_OK if ok else EXIT_MISMATCH


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flipit-timing",
                                description="Defense-period learning experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--config", help="JSON config (default: the shipped fig2 preset)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--policies", help="comma-separated policy names")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--out", required=out_required)

    sp = sub.add_parser("run", help="run an experiment and write manifest/aggregate/traces")
    common(sp, out_required=True)
    sp.add_argument("--no-traces", action="store_true", help="skip the per-round CSV")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("reproduce-fig2", help="four-policy comparison, both loss flavors")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--policies")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--keep-traces", action="store_true")
    sp.set_defaults(func=cmd_reproduce_fig2)

    sp = sub.add_parser("oracle-dump", help="print the oracle table of one trial")
    common(sp)
    sp.add_argument("--trial", type=int, default=0)
    sp.set_defaults(func=cmd_oracle_dump)

    sp = sub.add_parser("theorem-check", help="compare measured regret with the bounds")
    common(sp)
    sp.set_defaults(func=cmd_theorem_check)

    sp = sub.add_parser("replay", help="verify a traces CSV against its sealed draws")
    sp.add_argument("trace")
    sp.add_argument("--manifest", help="default: manifest.json next to the trace")
    sp.add_argument("--run", help="flavor key when the manifest holds several runs")
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

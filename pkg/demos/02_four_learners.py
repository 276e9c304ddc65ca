"""Four learners on the 19-period Weibull setup.

Runs a handful of trials of the shipped preset and prints mean cumulative
pseudo-regret at a few checkpoints. The full 100-trial comparison is
``flipit-timing reproduce-fig2 --out <dir>``.
"""

from flipit_timing.config import apply_overrides, parse_config, preset
from flipit_timing.harness import aggregate, run_experiment

for flavor in ("binary", "linear"):
    cfg = parse_config(apply_overrides(preset("fig2"), trials=10, flavor=flavor))
    res = run_experiment(cfg)
    curves = aggregate(res.traces())

    print(f"\n{flavor} loss, {cfg.trials} trials, T={cfg.horizon}")
    pts = [100, 1000, 10_000]
    print("policy".ljust(18) + "".join(f"R({p})".rjust(12) for p in pts))
    for name, c in curves.items():
        row = [c.mean[list(c.checkpoints).index(p)] for p in pts]
        print(name.ljust(18) + "".join(f"{v:12.1f}" for v in row))

# The staged learner needs n_0 rounds before it may drop anything; with periods
# spanning a factor of ten that first stage is long.
trial = res.trials[0]
stage = trial.policies["alg1"].history[0]
print(f"\nfirst elimination after {stage.round} rounds, confidence {stage.confidence:.3f}")
print("periods kept:", stage.active_after.tolist())

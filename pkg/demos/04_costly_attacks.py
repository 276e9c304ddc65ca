"""Attackers that skip short periods.

A myopic attacker with a hidden cost only bothers when the period exceeds a
threshold x0. With a fixed x0 the learner certifies periods as it sees
attacks; with x0 redrawn every round it has to sample every period itself.
"""

import numpy as np

from flipit_timing.config import apply_overrides, parse_config, preset
from flipit_timing.harness import run_trial

raw = apply_overrides(preset("fig2"), horizon=5000, trials=1, policies=["fixed-cost"])
raw["cost"] = {"kind": "fixed", "x0": 3.2}
cfg = parse_config(raw)
res = run_trial(cfg, 0)
pol = res.policies["fixed-cost"]
tr = res.traces["fixed-cost"]
print(f"attack scale {res.model.scale:.2f}, best period {res.table.x_star}")
print("certified periods:", pol.periods[pol.certified].tolist())
vals, counts = np.unique(tr.periods, return_counts=True)
print("plays per period:", dict(zip(vals.tolist(), counts.tolist())))
print(f"regret after {tr.T} rounds: {tr.final_regret:.1f}")

raw["policies"] = ["random-cost"]
raw["cost"] = {"kind": "random", "model": {"family": "uniform", "low": 0.0, "high": 5.0}}
res = run_trial(parse_config(raw), 0)
pol = res.policies["random-cost"]
print("\nrandom threshold: samples per period", pol.stats.n.tolist())
print(f"regret after {cfg.horizon} rounds: {res.traces['random-cost'].final_regret:.1f}")

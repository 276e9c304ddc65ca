"""A few rounds of the defense game, seen from both sides."""

import numpy as np

from flipit_timing import GameEnv, LossSpec, Weibull, side_observations

# Attack times follow a Weibull law with scale 5 and shape 2.
# Every security update costs 0.1 and a compromise inside a period costs 1.
model = Weibull(5.0, 2.0)
spec = LossSpec("binary", defense_cost=0.1)
env = GameEnv(spec, model, seed=3)

# The defender picks a period, the attacker strikes a random time after each update.
# The defender only learns the attack time when it landed inside the period.
for x in (2.0, 6.0, 6.0, 9.5):
    rec = env.play_round(1, x)
    seen = f"attack at {rec.attack:.2f}" if rec.observed else "nothing seen"
    print(f"round {rec.round}: period {x:4.1f}  {seen:18s} loss {rec.loss:.1f}")

# The environment keeps the raw draws in a sealed column, for checking only.
print("sealed attack times:", np.round(env.trace.sealed_attacks(), 2))

# One round also tells us what shorter periods would have cost.
# Here x=6 was played; periods up to 6 get a value, the rest stay unknown
# unless the attack was observed.
periods = np.arange(1.0, 10.01, 1.0)
rec = env.trace.records()[1]
for p, v in side_observations(rec, periods, spec):
    print(f"  period {p:4.1f}: {'unknown' if v is None else f'{v:.1f}'}")

"""Learning when to apply security updates against stealthy attacks.

Bandit learners with side observations pick defense periods in a FlipIt-style
game whose attack-time distribution is unknown; an exact oracle scores them by
pseudo-regret against the best periodic defense.
"""

__version__ = "0.1.0"

from .attack_model import (Empirical, Exponential, FixedCost, LossSpec, NoCost, RandomCost,
                           Uniform, Weibull, cdf, expected_loss, expected_losses, round_loss,
                           sample_attack_time)
from .game_env import (FeedbackRecord, GameEnv, GameTrace, pooled_feedback,
                       side_observations)
from .oracle import OracleTable, build_table, lipschitz_constants, pseudo_regret
from .policies import (ContinuousImprovedUCB, FixedCostUCB, ImprovedUCBSide, RandomCostUCB,
                       TimeUCB, make_policy)

__all__ = [
    "Weibull", "Uniform", "Exponential", "Empirical", "LossSpec", "NoCost", "FixedCost",
    "RandomCost", "sample_attack_time", "cdf", "round_loss", "expected_loss",
    "expected_losses", "FeedbackRecord", "GameEnv", "GameTrace", "side_observations",
    "pooled_feedback", "OracleTable", "build_table", "pseudo_regret", "lipschitz_constants",
    "ImprovedUCBSide", "ContinuousImprovedUCB", "FixedCostUCB", "RandomCostUCB", "TimeUCB",
    "make_policy",
]

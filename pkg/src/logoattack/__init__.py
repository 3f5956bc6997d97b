"""Logo-style adversarial attacks on video classifiers, at desk scale."""
from .config import AttackConfig
from .goals import Goal, derive_seed
from .oracle import Oracle, QueryBudget, ToyClassifier
from .pipeline import attack, campaign, verify_bounds

__all__ = ["AttackConfig", "Goal", "derive_seed", "Oracle", "QueryBudget", "ToyClassifier",
           "attack", "campaign", "verify_bounds"]
__version__ = "0.1.0"

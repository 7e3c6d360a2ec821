"""Knowledge-base completion with lifted implication-rule injection.

Trains relation and entity-tuple embeddings by matrix factorization with a
Bayesian Personalized Ranking objective, and injects implication rules as
per-dimension ordering constraints between relation vectors, so the cost of
a rule is independent of the number of entity-tuples.
"""

__version__ = "0.1.0"

from .data import DatasetSplit, FactStore, Rule, Vocab, holdout_split, load_facts, load_rules
from .evaluation import evaluate, weighted_map
from .model import LossBreakdown, ModelConfig, ModelParams
from .trainer import AdamState, EpochStats, TrainOptions, TrainResult, train

__all__ = [
    "AdamState", "DatasetSplit", "EpochStats", "FactStore", "LossBreakdown",
    "ModelConfig", "ModelParams", "Rule", "TrainOptions", "TrainResult",
    "Vocab", "evaluate", "holdout_split", "load_facts", "load_rules", "train",
    "weighted_map",
    "__version__",
]

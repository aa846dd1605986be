"""Stereotypicality-based preference obfuscation for implicit-feedback data,
with a BPR-MF recommender and an attribute-inference attacker to measure the
accuracy/privacy trade-off."""

from .attacker import AttackConfig, AttackerModel, balanced_accuracy, run_attack_cv, train_attacker
from .dataset import (
    GroupPartition,
    InteractionDataset,
    SplitSpec,
    k_core_filter,
    kfold_user_split,
    load_interactions,
    load_user_attributes,
    split_per_user,
    to_preference_vectors,
)
from .harness import ExperimentConfig, SyntheticConfig, generate_synthetic, run_experiment
from .obfuscation import ObfuscationConfig, obfuscate_dataset
from .recommender import TrainConfig, evaluate_model, ndcg_at_k, train_bpr
from .stereotype import StereotypeTable, compute_gamma, compute_igi, compute_ister, user_score

__version__ = "0.1.0"

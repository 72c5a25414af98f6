"""Pivad training module."""

from .ablation import AblationReport, AblationRunner, AblationVariant, run_ablation, study_variants
from .checkpoint import load_checkpoint, load_teacher, save_checkpoint, save_teacher
from .grad_suite import GRAD_CASES, GradSuiteReport, run_grad_suite
from .metrics import average_precision, evaluate, roc_auc, score_videos
from .optim import Adam, AdamState, adam_step
from .trainer import PivadTrainer, TrainingLogWriter

__all__ = [
    "AblationReport",
    "AblationRunner",
    "AblationVariant",
    "run_ablation",
    "study_variants",
    "load_checkpoint",
    "load_teacher",
    "save_checkpoint",
    "save_teacher",
    "GRAD_CASES",
    "GradSuiteReport",
    "run_grad_suite",
    "average_precision",
    "evaluate",
    "roc_auc",
    "score_videos",
    "Adam",
    "AdamState",
    "adam_step",
    "PivadTrainer",
    "TrainingLogWriter",
]

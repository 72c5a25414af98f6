"""Pivad - detección de anomalías en video débilmente supervisada con inducción poli-modal."""

__version__ = "0.1.0"
__author__ = "Patricio Gerpe"
__email__ = "pj.patriciojulian@gmail.com"

# Import main classes for easy access
from .data import VideoRecord, generate_dataset, load_dataset
from .entities import PivadBaseRunner, PivadConfig, ScoreSeries
from .entities.entities import EvalReport, ModelConfig, TrainConfig
from .model import PiVadModel, param_count
from .training import PivadTrainer, evaluate

__all__ = [
    "VideoRecord",
    "generate_dataset",
    "load_dataset",
    "PivadBaseRunner",
    "PivadConfig",
    "ScoreSeries",
    "EvalReport",
    "ModelConfig",
    "TrainConfig",
    "PiVadModel",
    "param_count",
    "PivadTrainer",
    "evaluate",
]

"""Desk-scale multimodal fake-news detection with forgery-knowledge injection."""

from .autodiff import Tensor, grad_check, inference_mode
from .config import TrainConfig, load_config, parse_config
from .data import DomainStyle, ForgeryAnnotation, ImageTextPair, STYLES, VOCAB, generate_pair
from .detector import ForgeryDetector, build_detector
from .metrics import MetricsReport, acc, auc, eer

__version__ = "0.1.0"

__all__ = [
    "ForgeryDetector",
    "ForgeryAnnotation",
    "DomainStyle",
    "ImageTextPair",
    "MetricsReport",
    "STYLES",
    "Tensor",
    "TrainConfig",
    "VOCAB",
    "acc",
    "auc",
    "build_detector",
    "eer",
    "generate_pair",
    "grad_check",
    "inference_mode",
    "load_config",
    "parse_config",
]

"""Countermeasures: multi-interpreter detection and interpretation-robust training."""

from .detector import (
    DETECTOR_CLASSES,
    DetectorModel,
    StackedMapSample,
    detect,
    load_detector,
    save_detector,
    stack_maps,
    train_detector,
)
from .robust import (
    RobustTrainConfig,
    interpretation_discrepancy,
    interpretation_stability,
    pgd_untargeted,
    robust_accuracy,
    robust_train,
)

__all__ = [
    "DETECTOR_CLASSES",
    "DetectorModel",
    "RobustTrainConfig",
    "StackedMapSample",
    "detect",
    "interpretation_discrepancy",
    "interpretation_stability",
    "load_detector",
    "pgd_untargeted",
    "robust_accuracy",
    "robust_train",
    "save_detector",
    "stack_maps",
    "train_detector",
]

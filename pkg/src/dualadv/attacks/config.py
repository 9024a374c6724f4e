"""Attack configuration and result records."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from ..core import Image
from ..interpreters.common import AttributionMap

FRAMEWORKS = ("pgd", "cw", "stadv")
METHODS = ("adv2", "advedge", "advedge_plus")


@dataclass
class AttackConfig:
    """Knobs shared by all attack engines.

    ``lambda_int=None`` selects the dynamic schedule: start at 0.01 and
    double every 50 iterations for samples whose prediction loss sits below
    the success margin. ``rho_start=rho_end=0`` disables label smoothing.
    """

    framework: str = "pgd"
    method: str = "adv2"
    interpreter: str = "grad"
    epsilon: float = 0.031
    alpha: float = 1.0 / 255.0
    iterations: int = 300
    lambda_int: Optional[float] = None
    lambda_enc: float = 1.0
    cw_c: float = 5.0
    cw_lr: float = 0.01
    stadv_lambda_flow: float = 0.05
    stadv_kappa: float = -2.0
    stadv_lr: float = 0.01
    delta_bin: float = 0.1
    seed: int = 0
    rho_start: float = 0.4
    rho_end: float = 0.01
    relu_surrogate: str = "smoothed"
    confidence_threshold: float = 0.6
    binary_search_steps: int = 8
    binary_search_max_scale: float = 1.0
    mask_reset_period: int = 50
    mask_inner_steps: int = 2

    def __post_init__(self):
        if self.framework not in FRAMEWORKS:
            raise ValueError(f"framework must be one of {FRAMEWORKS}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.epsilon <= 0 or self.alpha <= 0:
            raise ValueError("epsilon and alpha must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be ≥ 1")
        if self.lambda_int is not None and self.lambda_int < 0:
            raise ValueError("lambda_int must be ≥ 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FlowField:
    """Per-pixel displacements (Δu along rows, Δv along columns)."""

    du: np.ndarray
    dv: np.ndarray

    def __post_init__(self):
        self.du = np.asarray(self.du, dtype=np.float64)
        self.dv = np.asarray(self.dv, dtype=np.float64)
        if self.du.shape != self.dv.shape or self.du.ndim != 2:
            raise ValueError("du and dv must be equal-shape H×W arrays")
        if not (np.isfinite(self.du).all() and np.isfinite(self.dv).all()):
            raise ValueError("flow values must be finite")


@dataclass
class AttackResult:
    """Outcome of one attack on one image."""

    x_adv: Image
    success: bool
    target_class: int
    confidence: float
    m_adv: Optional[AttributionMap]
    trace: list = field(default_factory=list)  # per-iteration (l_prd, l_int)
    wall_time_s: float = 0.0
    image_id: str = ""
    true_label: int = -1
    final_label: int = -1
    framework: str = ""
    method: str = ""
    interpreter: str = ""
    error: str = ""

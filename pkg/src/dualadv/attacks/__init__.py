"""Dual-objective attack engines (signed-gradient, L2-penalized, spatial)."""

from ..core import ClassifierHandle, Image
from .bilevel import attack_mask_bilevel
from .config import AttackConfig, AttackResult, FlowField
from .cw import attack_cw
from .engine import draw_targets, perturbation_gate
from .losses import adv_loss, rts_encoder_loss, smoothed_prediction_loss
from .pgd import attack_pgd
from .stadv import attack_stadv, flow_loss, warp

_ENGINES = {"pgd": attack_pgd, "cw": attack_cw, "stadv": attack_stadv}


def run_attack(
    handle: ClassifierHandle,
    interpreter,
    images: list[Image] | Image,
    cfg: AttackConfig,
    targets=None,
):
    """Dispatch to the engine named by ``cfg.framework``."""
    return _ENGINES[cfg.framework](handle, interpreter, images, cfg, targets=targets)


__all__ = [
    "AttackConfig",
    "AttackResult",
    "FlowField",
    "adv_loss",
    "attack_cw",
    "attack_mask_bilevel",
    "attack_pgd",
    "attack_stadv",
    "draw_targets",
    "flow_loss",
    "perturbation_gate",
    "rts_encoder_loss",
    "run_attack",
    "smoothed_prediction_loss",
    "warp",
]

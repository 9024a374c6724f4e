"""Attribution-map generators. All maps are H×W in [0, 1], min-max normalized."""

from .cam import CamInterpreter, cam_map
from .common import AttributionMap, blend, blur_reference, minmax_normalize_t, total_variation
from .gradmap import GradInterpreter, grad_map, smoothed_relu_grad
from .maskopt import MaskInterpreter, MaskSolveConfig, mask_map, solve_mask
from .rts import RtsInterpreter, RtsModel, load_rts, rts_map, rts_train, save_rts

INTERPRETER_NAMES = ("grad", "cam", "rts", "mask")


def get_interpreter(name: str, rts_model: RtsModel | None = None, mask_config: MaskSolveConfig | None = None):
    """Instantiate an interpreter by name; RTS needs its trained model."""
    if name == "grad":
        return GradInterpreter()
    if name == "cam":
        return CamInterpreter()
    if name == "rts":
        if rts_model is None:
            raise ValueError("rts interpreter requires a trained RtsModel")
        return RtsInterpreter(rts_model)
    if name == "mask":
        return MaskInterpreter(mask_config)
    raise ValueError(f"unknown interpreter {name!r}")


__all__ = [
    "AttributionMap",
    "CamInterpreter",
    "GradInterpreter",
    "INTERPRETER_NAMES",
    "MaskInterpreter",
    "MaskSolveConfig",
    "RtsInterpreter",
    "RtsModel",
    "blend",
    "blur_reference",
    "cam_map",
    "get_interpreter",
    "grad_map",
    "load_rts",
    "mask_map",
    "minmax_normalize_t",
    "rts_map",
    "rts_train",
    "save_rts",
    "smoothed_relu_grad",
    "solve_mask",
    "total_variation",
]

"""Class activation mapping from the GAP + linear head."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from ..core import ClassifierHandle, Image
from ..errors import ArchitectureUnsupported
from .common import AttributionMap, minmax_normalize_t


class CamInterpreter:
    """m_c(k,l) = Σ_i w_{i,c} a_i(k,l), bilinearly upsampled to input size."""

    name = "cam"

    def maps(
        self,
        handle: ClassifierHandle,
        x: torch.Tensor,
        y: torch.Tensor,
        create_graph: bool = False,
    ) -> torch.Tensor:
        _, feats = handle.forward_with_features(x)
        if feats.ndim != 4:
            raise ArchitectureUnsupported("feature tap must produce N×C×h×w activations")
        w = handle.head_weights()
        if w.shape[1] != feats.shape[1]:
            raise ArchitectureUnsupported(
                f"linear head has {w.shape[1]} inputs but feature tap has {feats.shape[1]} channels"
            )
        class_w = w[y]  # N×C
        low = torch.einsum("nchw,nc->nhw", feats, class_w)
        full = F.interpolate(
            low.unsqueeze(1), size=x.shape[2:], mode="bilinear", align_corners=False
        ).squeeze(1)
        return minmax_normalize_t(full)


def cam_map(model: ClassifierHandle, x: Image, y: int | None = None) -> AttributionMap:
    if y is None:
        y, _ = model.classify(x)
    t = model.to_batch([x])
    m = CamInterpreter().maps(model, t, torch.tensor([y]))
    return AttributionMap(m[0].detach().numpy(), interpreter="cam", source_image_id=getattr(x, "id", ""))

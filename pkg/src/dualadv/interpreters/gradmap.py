"""Gradient saliency: m = |∂f_y(x)/∂x|, channel-reduced and normalized."""

from __future__ import annotations

import numpy as np
import torch

from ..core import ClassifierHandle, Image
from ..errors import InvalidParameter
from .common import AttributionMap, minmax_normalize_t


def smoothed_relu_grad(z, tau: float):
    """Smoothed ReLU-gradient surrogate, evaluated elementwise.

    Returns 1 + z/√(z²+τ) for z < 0 and z/√(z²+τ) for z ≥ 0.
    """
    if tau <= 0:
        raise InvalidParameter("tau must be positive")
    z = np.asarray(z, dtype=np.float64)
    root = np.sqrt(z * z + tau)
    out = np.where(z < 0, 1 + z / root, z / root)
    return float(out) if out.ndim == 0 else out


class GradInterpreter:
    """Backprop saliency w.r.t. the class probability.

    Channel reduction takes the max absolute gradient per pixel. When used
    inside an attack the handle should be in ``smoothed`` or ``sigmoid``
    relu mode, otherwise differentiating through the map hits the all-zero
    ReLU Hessian.
    """

    name = "grad"

    def maps(
        self,
        handle: ClassifierHandle,
        x: torch.Tensor,
        y: torch.Tensor,
        create_graph: bool = False,
    ) -> torch.Tensor:
        x_var = x if (create_graph and x.requires_grad) else x.detach().requires_grad_(True)
        probs = handle.forward_probs(x_var)
        score = probs.gather(1, y.view(-1, 1)).sum()
        (g,) = torch.autograd.grad(score, x_var, create_graph=create_graph)
        m = g.abs().amax(dim=1)
        return minmax_normalize_t(m)


def grad_map(model: ClassifierHandle, x: Image, y: int | None = None) -> AttributionMap:
    """Attribution map of one image for class ``y`` (default: predicted class)."""
    if y is None:
        y, _ = model.classify(x)
    t = model.to_batch([x])
    m = GradInterpreter().maps(model, t, torch.tensor([y]))
    return AttributionMap(m[0].detach().numpy(), interpreter="grad", source_image_id=getattr(x, "id", ""))

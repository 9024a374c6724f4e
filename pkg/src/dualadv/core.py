"""Core types: images, norm balls, and the classifier handle.

The :class:`ClassifierHandle` is the single point of contact with the
autodiff backend (torch). Everything else in the library works with numpy
arrays in the [0, 1] pixel domain and goes through a handle whenever it
needs model outputs or input gradients. Any model-specific normalization
(mean/std) belongs inside the wrapped module, so callers always see raw
[0, 1] pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .errors import InputShapeError

Array = np.ndarray


@dataclass
class Image:
    """A single H×W×C image with unit-interval intensities."""

    pixels: Array
    id: str = ""
    true_label: int = -1

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3:
            raise InputShapeError(f"image must be H×W×C, got shape {px.shape}")
        h, w, c = px.shape
        if h <= 0 or w <= 0 or c not in (1, 3):
            raise InputShapeError(f"bad image dimensions {px.shape}; C must be 1 or 3")
        if px.min() < -1e-6 or px.max() > 1 + 1e-6:
            raise ValueError("pixel values must lie in [0, 1]")
        self.pixels = np.clip(px, 0.0, 1.0)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape


@dataclass
class NormBallSpec:
    """L∞ ball of radius ``epsilon`` around ``center``."""

    epsilon: float = 0.031
    center: Optional[Image] = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")


def project_linf(x_hat: Array, ball: NormBallSpec) -> Array:
    """Project onto the L∞ ball around the center, then clip to [0, 1].

    Total and idempotent; points already satisfying both constraints are
    returned unchanged.
    """
    center = ball.center.pixels if isinstance(ball.center, Image) else np.asarray(ball.center)
    x_hat = np.asarray(x_hat)
    if x_hat.shape != center.shape:
        raise InputShapeError(f"shape {x_hat.shape} vs ball center {center.shape}")
    # float64 bounds: float32 rounding of center±eps could leak outside the ball
    center = center.astype(np.float64)
    x_hat = x_hat.astype(np.float64)
    eps = float(ball.epsilon)
    out = np.minimum(np.maximum(x_hat, center - eps), center + eps)
    return np.clip(out, 0.0, 1.0)


def project_linf_t(x_hat: torch.Tensor, center: torch.Tensor, epsilon: float) -> torch.Tensor:
    """Torch twin of :func:`project_linf` used inside attack loops."""
    return torch.clamp(torch.minimum(torch.maximum(x_hat, center - epsilon), center + epsilon), 0.0, 1.0)


class ClassifierHandle:
    """Wraps a differentiable torch classifier behind an array interface.

    Parameters
    ----------
    module:
        A ``torch.nn.Module`` mapping N×C×H×W inputs in [0, 1] to logits.
    num_classes:
        Size of the label set.
    feature_tap:
        Dotted name of the submodule whose *output* feeds representation
        interpreters (the last convolutional activation for CAM).
    relu_mode:
        ``exact`` (plain ReLU gradients), ``smoothed`` (gradient surrogate
        1 + z/√(z²+τ) for z<0, z/√(z²+τ) for z≥0), or ``sigmoid``
        (gradient surrogate σ(z)). Only affects models built with
        :class:`dualadv.models.GatedActivation`.
    """

    def __init__(
        self,
        module: torch.nn.Module,
        num_classes: int,
        feature_tap: Optional[str] = None,
        relu_mode: str = "exact",
        tau: float = 1e-4,
        dtype: torch.dtype = torch.float32,
        input_shape: Optional[tuple[int, int, int]] = None,
        freeze: bool = True,
    ):
        # freeze=False leaves parameters trainable (robust training owns one
        # handle over a live module); attacks always use frozen handles.
        if dtype is not torch.float32:
            module = module.to(dtype)
        self.module = module.eval() if freeze else module
        if freeze:
            for p in self.module.parameters():
                p.requires_grad_(False)
        self.num_classes = num_classes
        self.feature_tap = feature_tap
        self.dtype = dtype
        self.input_shape = input_shape  # (H, W, C) if known
        self.tau = tau
        self.set_relu_mode(relu_mode, tau)

    # -- activation-gradient mode -------------------------------------------------

    def set_relu_mode(self, mode: str, tau: Optional[float] = None) -> None:
        if mode not in ("exact", "smoothed", "sigmoid"):
            raise ValueError(f"unknown relu_mode {mode!r}")
        self.relu_mode = mode
        if tau is not None:
            self.tau = tau
        from .models import GatedActivation

        for m in self.module.modules():
            if isinstance(m, GatedActivation):
                m.mode = mode
                m.tau = self.tau

    # -- array/tensor plumbing ----------------------------------------------------

    def to_batch(self, images: Sequence[Image] | Sequence[Array] | Array) -> torch.Tensor:
        """Stack images into an N×C×H×W tensor in the handle's dtype."""
        if isinstance(images, np.ndarray) and images.ndim == 4:
            arrs = list(images)
        else:
            arrs = [im.pixels if isinstance(im, Image) else np.asarray(im) for im in images]
        batch = np.stack([np.atleast_3d(a) for a in arrs]).transpose(0, 3, 1, 2)
        t = torch.as_tensor(batch.copy(), dtype=self.dtype)
        self._check_shape(t)
        return t

    def to_images(self, batch: torch.Tensor) -> list[Array]:
        return [b.detach().cpu().numpy().transpose(1, 2, 0) for b in batch]

    def _check_shape(self, t: torch.Tensor) -> None:
        if self.input_shape is not None:
            h, w, c = self.input_shape
            if tuple(t.shape[1:]) != (c, h, w):
                raise InputShapeError(
                    f"model expects {(c, h, w)} (C,H,W), got {tuple(t.shape[1:])}"
                )

    # -- forward passes -------------------------------------------------------------

    def forward_logits(self, x: torch.Tensor) -> torch.Tensor:
        self._check_shape(x)
        return self.module(x)

    def forward_probs(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.forward_logits(x), dim=1)

    def forward_with_features(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Return (logits, tapped feature maps); requires ``feature_tap``."""
        from .errors import ArchitectureUnsupported

        if self.feature_tap is None:
            raise ArchitectureUnsupported("no feature_tap configured on this handle")
        target = dict(self.module.named_modules()).get(self.feature_tap)
        if target is None:
            raise ArchitectureUnsupported(f"module has no submodule {self.feature_tap!r}")
        captured: list[torch.Tensor] = []
        hook = target.register_forward_hook(lambda _m, _i, out: captured.append(out))
        try:
            logits = self.forward_logits(x)
        finally:
            hook.remove()
        return logits, captured[-1]

    def head_weights(self) -> torch.Tensor:
        """Weights of the final linear layer (num_classes × channels)."""
        from .errors import ArchitectureUnsupported

        last_linear = None
        for m in self.module.modules():
            if isinstance(m, torch.nn.Linear):
                last_linear = m
        if last_linear is None:
            raise ArchitectureUnsupported("model has no linear head")
        return last_linear.weight

    # -- public ops -------------------------------------------------------------------

    def classify(self, x: Image | Array) -> tuple[int, Array]:
        """Predicted label and full probability vector for one image."""
        t = self.to_batch([x])
        with torch.no_grad():
            probs = self.forward_probs(t)[0]
        p = probs.cpu().numpy()
        return int(np.argmax(p)), p


def classify(model: ClassifierHandle, x: Image | Array) -> tuple[int, Array]:
    return model.classify(x)


# A loss spec is any callable (probs, x_tensor) -> scalar tensor. ``probs`` is
# the N×|Y| softmax output, ``x_tensor`` the N×C×H×W input (so pixel-space
# losses are expressible too).
LossSpec = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


def cross_entropy_spec(target: int) -> LossSpec:
    def spec(probs: torch.Tensor, _x: torch.Tensor) -> torch.Tensor:
        return -torch.log(torch.clamp(probs[:, target], min=1e-12)).sum()

    return spec


def input_gradient(model: ClassifierHandle, x: Image | Array, loss_spec: LossSpec) -> Array:
    """Gradient of a scalar loss of (probs, input) w.r.t. the input pixels.

    Returns an H×W×C array. Losses that do not depend on the input yield a
    zero gradient.
    """
    t = model.to_batch([x]).requires_grad_(True)
    probs = model.forward_probs(t)
    loss = loss_spec(probs, t)
    if not loss.requires_grad:  # loss constant in the input
        return np.zeros_like(t[0].detach().numpy().transpose(1, 2, 0))
    (g,) = torch.autograd.grad(loss, t, allow_unused=True)
    if g is None:
        g = torch.zeros_like(t)
    return g[0].detach().cpu().numpy().transpose(1, 2, 0)

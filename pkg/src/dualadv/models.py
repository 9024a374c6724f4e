"""Model zoo: gated activations, desk-scale CNN, small test models, persistence.

Models here keep their values identical to plain-ReLU networks; the
``smoothed``/``sigmoid`` modes only swap the activation *gradient* so that
attribution maps acquire usable second-order structure (a plain ReLU net has
an all-zero Hessian, which stalls any attack that differentiates through a
gradient-based map).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import ClassifierHandle


class _SmoothedGradReLU(torch.autograd.Function):
    """ReLU forward; backward multiplies by 1 + z/√(z²+τ) (z<0) or z/√(z²+τ) (z≥0)."""

    @staticmethod
    def forward(ctx, z, tau):
        ctx.save_for_backward(z)
        ctx.tau = tau
        return F.relu(z)

    @staticmethod
    def backward(ctx, grad_out):
        (z,) = ctx.saved_tensors
        root = torch.sqrt(z * z + ctx.tau)
        h = torch.where(z < 0, 1 + z / root, z / root)
        return grad_out * h, None


class _SigmoidGradReLU(torch.autograd.Function):
    """ReLU forward; backward multiplies by σ(z)."""

    @staticmethod
    def forward(ctx, z):
        ctx.save_for_backward(z)
        return F.relu(z)

    @staticmethod
    def backward(ctx, grad_out):
        (z,) = ctx.saved_tensors
        return grad_out * torch.sigmoid(z)


class GatedActivation(nn.Module):
    """ReLU whose backward pass is selectable at runtime via ``mode``."""

    def __init__(self, mode: str = "exact", tau: float = 1e-4):
        super().__init__()
        self.mode = mode
        self.tau = tau

    def forward(self, z):
        if self.mode == "exact":
            return F.relu(z)
        if self.mode == "smoothed":
            return _SmoothedGradReLU.apply(z, self.tau)
        if self.mode == "sigmoid":
            return _SigmoidGradReLU.apply(z)
        raise ValueError(f"unknown activation mode {self.mode!r}")


class SmallConvNet(nn.Module):
    """Desk-scale CNN with a GAP + linear head (CAM-compatible).

    conv(3→w) → act → conv(w→2w) → act → pool/2 → conv(2w→4w) → act → GAP → linear.
    """

    def __init__(self, num_classes: int = 10, in_channels: int = 3, width: int = 32):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, width, 3, padding=1)
        self.act1 = GatedActivation()
        self.conv2 = nn.Conv2d(width, 2 * width, 3, padding=1)
        self.act2 = GatedActivation()
        self.pool = nn.MaxPool2d(2)
        self.conv3 = nn.Conv2d(2 * width, 4 * width, 3, padding=1)
        self.act3 = GatedActivation()
        self.head = nn.Linear(4 * width, num_classes)

    def pyramid(self, x):
        """Early (full-res) and late (pooled) trunk activations."""
        f_early = self.act1(self.conv1(x))
        f_mid = self.pool(self.act2(self.conv2(f_early)))
        f_late = self.act3(self.conv3(f_mid))
        return f_early, f_late

    def trunk(self, x):
        return self.pyramid(x)[1]

    def embed(self, x):
        """GAP feature vector; used as the encoder embedding by RTS."""
        return self.trunk(x).mean(dim=(2, 3))

    def forward(self, x):
        return self.head(self.embed(x))


class TinyMLP(nn.Module):
    """Flatten → hidden layers → logits. ``tanh`` keeps it kink-free for FD checks."""

    def __init__(self, input_shape=(4, 4, 1), hidden=(16,), num_classes=3, activation="tanh"):
        super().__init__()
        h, w, c = input_shape
        dims = [h * w * c, *hidden]
        layers: list[nn.Module] = []
        for i in range(len(dims) - 1):
            layers.append(nn.Linear(dims[i], dims[i + 1]))
            layers.append(nn.Tanh() if activation == "tanh" else GatedActivation())
        layers.append(nn.Linear(dims[-1], num_classes))
        self.input_shape = input_shape
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x.flatten(1))


class LinearModel(nn.Module):
    """Single linear layer over flattened pixels (analytic-oracle model)."""

    def __init__(self, input_shape, num_classes, weights=None, bias=None):
        super().__init__()
        h, w, c = input_shape
        self.fc = nn.Linear(h * w * c, num_classes)
        if weights is not None:
            with torch.no_grad():
                self.fc.weight.copy_(torch.as_tensor(weights, dtype=self.fc.weight.dtype))
                self.fc.bias.copy_(
                    torch.zeros_like(self.fc.bias)
                    if bias is None
                    else torch.as_tensor(bias, dtype=self.fc.bias.dtype)
                )

    def forward(self, x):
        return self.fc(x.flatten(1))


ARCHITECTURES = {
    "small_convnet": SmallConvNet,
    "tiny_mlp": TinyMLP,
}


def make_handle(module: nn.Module, num_classes: int, input_shape, feature_tap=None, **kw) -> ClassifierHandle:
    return ClassifierHandle(module, num_classes, feature_tap=feature_tap, input_shape=input_shape, **kw)


def save_model(path: str | Path, module: nn.Module, arch: str, arch_kwargs: dict, meta: dict) -> None:
    """Persist a model plus the metadata needed to rebuild its handle."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {"arch": arch, "arch_kwargs": arch_kwargs, "state": module.state_dict(), "meta": meta},
        path,
    )


def load_model(path: str | Path, relu_mode: str = "exact") -> ClassifierHandle:
    """Load a model saved by :func:`save_model` and wrap it in a handle."""
    blob = torch.load(Path(path), map_location="cpu", weights_only=True)
    arch = blob["arch"]
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}")
    module = ARCHITECTURES[arch](**blob["arch_kwargs"])
    module.load_state_dict(blob["state"])
    meta = blob["meta"]
    return ClassifierHandle(
        module,
        num_classes=meta["num_classes"],
        feature_tap=meta.get("feature_tap"),
        input_shape=tuple(meta["input_shape"]),
        relu_mode=relu_mode,
    )


def train_classifier(
    module: nn.Module,
    images: np.ndarray,
    labels: np.ndarray,
    epochs: int = 12,
    batch_size: int = 64,
    lr: float = 1e-3,
    seed: int = 0,
    weight_decay: float = 0.0,
) -> list[float]:
    """Plain cross-entropy training loop; returns per-epoch mean losses."""
    torch.manual_seed(seed)
    module.train()
    x = torch.as_tensor(images.transpose(0, 3, 1, 2), dtype=torch.float32)
    y = torch.as_tensor(labels, dtype=torch.long)
    opt = torch.optim.Adam(module.parameters(), lr=lr, weight_decay=weight_decay)
    n = x.shape[0]
    losses = []
    g = torch.Generator().manual_seed(seed)
    for _ in range(epochs):
        perm = torch.randperm(n, generator=g)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            opt.zero_grad()
            loss = F.cross_entropy(module(x[idx]), y[idx])
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        losses.append(total / n)
    module.eval()
    return losses

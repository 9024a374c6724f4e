"""Trained real-time saliency: a masker network predicts the map in one pass.

The masker sits on top of the frozen classifier trunk and is trained to
produce masks that keep the class evidence (high confidence when blended
through Φ) while staying small and smooth; a destructor term pushes the
complement mask to erase the evidence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..core import ClassifierHandle, Image
from ..errors import ArchitectureUnsupported, TrainingDiverged
from .common import AttributionMap, blur_reference, minmax_normalize_t, total_variation_t


class MaskerNet(nn.Module):
    """Small skip-connected decoder from trunk features to a sigmoid mask."""

    def __init__(self, early_ch: int, late_ch: int):
        super().__init__()
        self.reduce_late = nn.Conv2d(late_ch, 32, 3, padding=1)
        self.reduce_early = nn.Conv2d(early_ch, 16, 3, padding=1)
        self.mix = nn.Conv2d(48, 16, 3, padding=1)
        self.out = nn.Conv2d(16, 1, 3, padding=1)

    def forward(self, f_early, f_late):
        a = F.relu(self.reduce_late(f_late))
        a = F.interpolate(a, size=f_early.shape[2:], mode="bilinear", align_corners=False)
        b = F.relu(self.reduce_early(f_early))
        m = F.relu(self.mix(torch.cat([a, b], dim=1)))
        return torch.sigmoid(self.out(m)).squeeze(1)


@dataclass
class RtsModel:
    """Frozen encoder (the classifier trunk) plus the trained masker."""

    handle: ClassifierHandle
    masker: MaskerNet
    lambdas: tuple[float, float, float, float] = (0.01, 1.0, 1.0, 2.0)
    blur_sigma: float | None = None
    class_prototypes: torch.Tensor | None = None  # num_classes × D
    loss_history: list = field(default_factory=list)

    def _pyramid(self, x: torch.Tensor):
        mod = self.handle.module
        if not hasattr(mod, "pyramid"):
            raise ArchitectureUnsupported("RTS needs a model exposing trunk feature pyramid")
        return mod.pyramid(x)

    def forward_mask(self, x: torch.Tensor) -> torch.Tensor:
        f_early, f_late = self._pyramid(x)
        return self.masker(f_early, f_late)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """Encoder embedding (GAP feature vector of the classifier trunk)."""
        return self.handle.module.embed(x)


def _phi(x: torch.Tensor, m: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
    m = m.unsqueeze(1)
    return x * m + r * (1.0 - m)


def rts_objective(
    rts: RtsModel, x: torch.Tensor, y: torch.Tensor, r: torch.Tensor
) -> torch.Tensor:
    """Per-sample training objective of the masker."""
    l1, l2, l3, l4 = rts.lambdas
    m = rts.forward_mask(x)
    p_keep = rts.handle.forward_probs(_phi(x, m, r)).gather(1, y.view(-1, 1)).squeeze(1)
    p_del = rts.handle.forward_probs(_phi(x, 1.0 - m, r)).gather(1, y.view(-1, 1)).squeeze(1)
    tv = total_variation_t(m)
    av = m.flatten(1).mean(dim=1)
    return l1 * tv + l2 * av - torch.log(torch.clamp(p_keep, min=1e-12)) + l3 * p_del**l4


def rts_train(
    handle: ClassifierHandle,
    images: np.ndarray,
    labels: np.ndarray,
    lambdas: tuple[float, float, float, float] = (0.01, 1.0, 1.0, 2.0),
    epochs: int = 8,
    batch_size: int = 64,
    lr: float = 1e-3,
    seed: int = 0,
    blur_sigma: float | None = None,
) -> RtsModel:
    """Fit the masker on a labeled image set; encoder stays frozen.

    Also records per-class mean encoder embeddings, used later as the
    class prototypes for the encoder loss during attacks.
    """
    torch.manual_seed(seed)
    x_all = torch.as_tensor(images.transpose(0, 3, 1, 2), dtype=torch.float32)
    y_all = torch.as_tensor(labels, dtype=torch.long)
    r_all = torch.as_tensor(
        np.stack([blur_reference(im, blur_sigma) for im in images]).transpose(0, 3, 1, 2),
        dtype=torch.float32,
    )

    with torch.no_grad():
        f_early, f_late = handle.module.pyramid(x_all[:2])
    rts = RtsModel(
        handle=handle,
        masker=MaskerNet(f_early.shape[1], f_late.shape[1]),
        lambdas=lambdas,
        blur_sigma=blur_sigma,
    )

    opt = torch.optim.Adam(rts.masker.parameters(), lr=lr)
    g = torch.Generator().manual_seed(seed)
    n = x_all.shape[0]
    for _ in range(epochs):
        perm = torch.randperm(n, generator=g)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            opt.zero_grad()
            loss = rts_objective(rts, x_all[idx], y_all[idx], r_all[idx]).mean()
            if not torch.isfinite(loss):
                raise TrainingDiverged("RTS masker loss became non-finite")
            loss.backward()
            opt.step()
            total += float(loss) * len(idx)
        rts.loss_history.append(total / n)

    rts.masker.eval()
    for p in rts.masker.parameters():
        p.requires_grad_(False)

    with torch.no_grad():
        emb = handle.module.embed(x_all)
    protos = torch.stack(
        [
            emb[y_all == c].mean(dim=0) if (y_all == c).any() else torch.full_like(emb[0], float("nan"))
            for c in range(handle.num_classes)
        ]
    )
    rts.class_prototypes = protos
    return rts


class RtsInterpreter:
    """Single-forward-pass map from a trained :class:`RtsModel`.

    The desk-scale masker is class-agnostic; the class argument is part of
    the common interface but does not condition the mask.
    """

    name = "rts"

    def __init__(self, rts: RtsModel):
        self.rts = rts

    def maps(self, handle, x, y, create_graph: bool = False) -> torch.Tensor:
        del handle, y
        return minmax_normalize_t(self.rts.forward_mask(x))


def rts_map(rts: RtsModel, x: Image, y: int | None = None) -> AttributionMap:
    t = rts.handle.to_batch([x])
    with torch.no_grad():
        m = RtsInterpreter(rts).maps(rts.handle, t, y)
    return AttributionMap(m[0].numpy(), interpreter="rts", source_image_id=getattr(x, "id", ""))


def save_rts(path: str | Path, rts: RtsModel) -> None:
    f_early_ch = rts.masker.reduce_early.weight.shape[1]
    f_late_ch = rts.masker.reduce_late.weight.shape[1]
    torch.save(
        {
            "masker_state": rts.masker.state_dict(),
            "early_ch": f_early_ch,
            "late_ch": f_late_ch,
            "lambdas": tuple(rts.lambdas),
            "blur_sigma": rts.blur_sigma,
            "prototypes": rts.class_prototypes,
        },
        Path(path),
    )


def load_rts(path: str | Path, handle: ClassifierHandle) -> RtsModel:
    blob = torch.load(Path(path), map_location="cpu", weights_only=True)
    masker = MaskerNet(blob["early_ch"], blob["late_ch"])
    masker.load_state_dict(blob["masker_state"])
    masker.eval()
    for p in masker.parameters():
        p.requires_grad_(False)
    return RtsModel(
        handle=handle,
        masker=masker,
        lambdas=tuple(blob["lambdas"]),
        blur_sigma=blob["blur_sigma"],
        class_prototypes=blob["prototypes"],
    )

"""Multi-interpreter adversarial detector.

Attribution maps from two (or three) interpreters are stacked into a
multi-channel sample; a small CNN backbone with a re-initialized input
convolution extracts features and a gradient-boosted ensemble of weak
learners does the benign/adversarial call. Only the input and output layers
of the backbone are trained; the trunk stays frozen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import joblib
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.ensemble import GradientBoostingClassifier

from ..core import ClassifierHandle
from ..errors import ShapeError, TrainingError
from ..interpreters.common import AttributionMap

DETECTOR_CLASSES = ("benign", "adversarial")


@dataclass
class StackedMapSample:
    """k×H×W stack of attribution maps; optionally a product third channel."""

    channels: np.ndarray
    label: int = -1  # 0 benign, 1 adversarial, -1 unknown
    interpreter_ids: list = field(default_factory=list)


def stack_maps(maps, with_product: bool = False, label: int = -1) -> StackedMapSample:
    """Stack ≥2 equal-shape maps channelwise; ``with_product`` appends their
    elementwise product as an extra channel."""
    values = [m.values if isinstance(m, AttributionMap) else np.asarray(m) for m in maps]
    if len(values) < 2:
        raise ShapeError("need at least two maps to stack")
    shape = values[0].shape
    if any(v.shape != shape for v in values):
        raise ShapeError("maps must share one shape")
    ids = [getattr(m, "interpreter", "") for m in maps]
    channels = list(values)
    if with_product:
        channels.append(values[0] * values[1])
    return StackedMapSample(
        channels=np.stack(channels).astype(np.float32), label=label, interpreter_ids=ids
    )


class _DetectorNet(nn.Module):
    """Fresh k-channel input conv + frozen trunk + fresh binary head."""

    def __init__(self, backbone: ClassifierHandle, in_channels: int):
        super().__init__()
        src = backbone.module
        self.conv1 = nn.Conv2d(in_channels, src.conv1.out_channels, 3, padding=1)
        self.conv2 = src.conv2
        self.conv3 = src.conv3
        self.pool = nn.MaxPool2d(2)
        self.head = nn.Linear(src.head.in_features, 2)
        for layer in (self.conv2, self.conv3):
            for p in layer.parameters():
                p.requires_grad_(False)

    def features(self, x):
        z = F.relu(self.conv1(x))
        z = self.pool(F.relu(self.conv2(z)))
        z = F.relu(self.conv3(z))
        return z.mean(dim=(2, 3))

    def forward(self, x):
        return self.head(self.features(x))


@dataclass
class DetectorModel:
    net: _DetectorNet
    head: GradientBoostingClassifier
    in_channels: int
    interpreter_ids: list
    held_out_accuracy: float = float("nan")


def _to_tensor(samples) -> torch.Tensor:
    return torch.as_tensor(np.stack([s.channels for s in samples]), dtype=torch.float32)


def train_detector(
    benign,
    adversarial,
    seed: int = 0,
    backbone: ClassifierHandle | None = None,
    epochs: int = 15,
    lr: float = 1e-3,
    holdout_frac: float = 0.2,
    n_estimators: int = 100,
    max_depth: int = 3,
    boost_lr: float = 0.1,
) -> DetectorModel:
    """Fit the detector on labeled stacked-map samples.

    The reported accuracy comes from a held-out split that never touches
    either training stage.
    """
    if len(benign) == 0 or len(adversarial) == 0:
        raise TrainingError("need both benign and adversarial samples")
    if backbone is None:
        raise TrainingError("a backbone classifier handle is required")
    samples = list(benign) + list(adversarial)
    labels = np.array([0] * len(benign) + [1] * len(adversarial))
    k = samples[0].channels.shape[0]
    if any(s.channels.shape != samples[0].channels.shape for s in samples):
        raise ShapeError("all stacked samples must share one shape")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    n_hold = max(1, int(holdout_frac * len(samples)))
    hold_idx, train_idx = order[:n_hold], order[n_hold:]
    if len(set(labels[train_idx])) < 2:
        raise TrainingError("training split is single-class")

    x = _to_tensor(samples)
    y = torch.as_tensor(labels, dtype=torch.long)

    torch.manual_seed(seed)
    net = _DetectorNet(backbone, k)
    trainable = [p for p in net.parameters() if p.requires_grad]
    opt = torch.optim.Adam(trainable, lr=lr)
    gen = torch.Generator().manual_seed(seed)
    for _ in range(epochs):
        perm = torch.as_tensor(train_idx)[torch.randperm(len(train_idx), generator=gen)]
        for start in range(0, len(perm), 64):
            idx = perm[start : start + 64]
            opt.zero_grad()
            loss = F.cross_entropy(net(x[idx]), y[idx])
            loss.backward()
            opt.step()
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)

    with torch.no_grad():
        feats = net.features(x).numpy()
    head = GradientBoostingClassifier(
        n_estimators=n_estimators, max_depth=max_depth, learning_rate=boost_lr, random_state=seed
    )
    head.fit(feats[train_idx], labels[train_idx])
    held_out = float(head.score(feats[hold_idx], labels[hold_idx]))

    return DetectorModel(
        net=net,
        head=head,
        in_channels=k,
        interpreter_ids=list(samples[0].interpreter_ids),
        held_out_accuracy=held_out,
    )


def detect(detector: DetectorModel, sample: StackedMapSample) -> tuple[int, float]:
    """Score one sample; returns (label, confidence) with 1 = adversarial."""
    if sample.channels.shape[0] != detector.in_channels:
        raise ShapeError(
            f"sample has {sample.channels.shape[0]} channels, detector expects {detector.in_channels}"
        )
    x = torch.as_tensor(sample.channels, dtype=torch.float32).unsqueeze(0)
    with torch.no_grad():
        feats = detector.net.features(x).numpy()
    proba = detector.head.predict_proba(feats)[0]
    label = int(np.argmax(proba))
    return label, float(proba[label])


def save_detector(path: str | Path, detector: DetectorModel) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    torch.save(detector.net.state_dict(), path / "net.pt")
    joblib.dump(detector.head, path / "head.joblib")
    meta = {
        "in_channels": detector.in_channels,
        "interpreter_ids": detector.interpreter_ids,
        "held_out_accuracy": detector.held_out_accuracy,
        "trunk_channels": [
            detector.net.conv1.out_channels,
            detector.net.conv3.out_channels,
        ],
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=2))


def load_detector(path: str | Path, backbone: ClassifierHandle) -> DetectorModel:
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    net = _DetectorNet(backbone, meta["in_channels"])
    net.load_state_dict(torch.load(path / "net.pt", weights_only=True))
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return DetectorModel(
        net=net,
        head=joblib.load(path / "head.joblib"),
        in_channels=meta["in_channels"],
        interpreter_ids=meta["interpreter_ids"],
        held_out_accuracy=meta["held_out_accuracy"],
    )

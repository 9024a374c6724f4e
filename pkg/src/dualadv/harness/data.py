"""Synthetic desk-scale dataset plus dataset loading and filtering.

Ten classes of 32×32 RGB images. Each class combines two kinds of evidence:
a low-contrast geometric pattern with jittered placement (spatially robust,
and what the Sobel gate latches onto) and a class-specific tiled
micro-texture at very low amplitude (perfectly predictive but erasable by
small L∞ perturbations). Normally trained models lean on the texture and
inherit its brittleness, which makes them attackable at the standard ε
while leaving robust shape evidence for adversarially trained models to
fall back on.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from ..core import ClassifierHandle, Image
from ..errors import InsufficientData
from ..models import SmallConvNet, make_handle, save_model, train_classifier

NUM_CLASSES = 10
IMAGE_SIZE = 32


def _grid(size):
    return np.meshgrid(np.arange(size), np.arange(size), indexing="ij")


def _pattern(cls: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Binary foreground mask for one class, with jittered geometry."""
    ii, jj = _grid(size)
    cy, cx = size // 2 + rng.integers(-3, 4), size // 2 + rng.integers(-3, 4)
    if cls == 0:  # filled disk
        rad = 5 + rng.integers(0, 3)
        return ((ii - cy) ** 2 + (jj - cx) ** 2 <= rad**2).astype(float)
    if cls == 1:  # two horizontal bars
        o = rng.integers(-2, 3)
        return (((ii - o) % 12 < 3) & (jj > 3) & (jj < size - 4)).astype(float)
    if cls == 2:  # vertical stripes
        o = rng.integers(0, 6)
        return (((jj + o) % 6) < 2).astype(float)
    if cls == 3:  # diagonal stripes
        o = rng.integers(0, 8)
        return (((ii + jj + o) % 8) < 3).astype(float)
    if cls == 4:  # plus sign
        t = 2 + rng.integers(0, 2)
        return ((np.abs(ii - cy) < t) | (np.abs(jj - cx) < t)).astype(float)
    if cls == 5:  # square ring
        r = 7 + rng.integers(0, 3)
        d = np.maximum(np.abs(ii - cy), np.abs(jj - cx))
        return ((d <= r) & (d >= r - 2)).astype(float)
    if cls == 6:  # filled triangle (half plane under jittered diagonal)
        o = rng.integers(-3, 4)
        return ((ii + o > jj) & (ii > 6) & (jj > 2)).astype(float)
    if cls == 7:  # coarse checkerboard
        o = rng.integers(0, 8)
        return ((((ii + o) // 8) + ((jj + o) // 8)) % 2).astype(float)
    if cls == 8:  # two small disks on the diagonal
        r = 3 + rng.integers(0, 2)
        d1 = (ii - 8 - rng.integers(-2, 3)) ** 2 + (jj - 8 - rng.integers(-2, 3)) ** 2
        d2 = (ii - 23 - rng.integers(-2, 3)) ** 2 + (jj - 23 - rng.integers(-2, 3)) ** 2
        return ((d1 <= r**2) | (d2 <= r**2)).astype(float)
    # cls == 9: thick L shape
    t = 3 + rng.integers(0, 2)
    return (((np.abs(jj - 8) < t) & (ii > 6)) | ((np.abs(ii - (size - 8)) < t) & (jj < size - 6))).astype(
        float
    )


TILE_PERIOD = 4


def _class_tile(cls: int, size: int) -> np.ndarray:
    """Fixed ±1 micro-texture for one class, tiled to full resolution."""
    base = np.random.default_rng(7000 + cls).choice([-1.0, 1.0], size=(TILE_PERIOD, TILE_PERIOD))
    reps = -(-size // TILE_PERIOD)
    return np.tile(base, (reps, reps))[:size, :size, None]


def render_sample(
    cls: int,
    size: int,
    rng: np.random.Generator,
    noise: float = 0.05,
    texture_amp: tuple[float, float] = (0.018, 0.030),
    contrast: tuple[float, float] = (0.05, 0.15),
    distractor: tuple[float, float] = (0.02, 0.06),
) -> np.ndarray:
    mask = _pattern(cls, size, rng)[:, :, None]
    other = int((cls + rng.integers(1, NUM_CLASSES)) % NUM_CLASSES)
    dmask = _pattern(other, size, rng)[:, :, None]
    background = rng.uniform(0.20, 0.50, size=3)
    direction = rng.uniform(*contrast, size=3)
    ddir = rng.uniform(*distractor, size=3)
    amp = rng.uniform(*texture_amp)
    img = (
        background[None, None, :]
        + mask * direction[None, None, :]
        + dmask * ddir[None, None, :]
        + amp * _class_tile(cls, size)
    )
    img = img + rng.normal(0.0, noise, size=(size, size, 3))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synthesize_dataset(
    out_dir: str | Path,
    n_train: int = 2400,
    n_test: int = 1000,
    seed: int = 0,
    size: int = IMAGE_SIZE,
    noise: float = 0.05,
) -> Path:
    """Write train/ and test/ splits of PNGs with labels.csv manifests."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    for split, count in (("train", n_train), ("test", n_test)):
        split_dir = out_dir / split
        split_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        for i in range(count):
            cls = int(rng.integers(0, NUM_CLASSES))
            img = render_sample(cls, size, rng, noise=noise)
            name = f"img_{i:05d}.png"
            PilImage.fromarray((img * 255).round().astype(np.uint8)).save(split_dir / name)
            rows.append((name, cls))
        with open(split_dir / "labels.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["filename", "label"])
            writer.writerows(rows)
    (out_dir / "meta.json").write_text(
        json.dumps(
            {
                "num_classes": NUM_CLASSES,
                "image_size": size,
                "seed": seed,
                "n_train": n_train,
                "n_test": n_test,
                "noise": noise,
            },
            indent=2,
        )
    )
    return out_dir


def load_split(split_dir: str | Path) -> list[Image]:
    """All images of one split, unfiltered, in manifest order."""
    split_dir = Path(split_dir)
    manifest = split_dir / "labels.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"no labels.csv in {split_dir}")
    images = []
    with open(manifest) as f:
        for row in csv.DictReader(f):
            arr = np.asarray(PilImage.open(split_dir / row["filename"]), dtype=np.float32) / 255.0
            images.append(Image(arr, id=Path(row["filename"]).stem, true_label=int(row["label"])))
    return images


def load_arrays(split_dir: str | Path) -> tuple[np.ndarray, np.ndarray]:
    images = load_split(split_dir)
    return np.stack([im.pixels for im in images]), np.array([im.true_label for im in images])


def load_dataset(path: str | Path, n: int, seed: int, model: ClassifierHandle) -> list[Image]:
    """n shuffled images that the model classifies correctly.

    Raises InsufficientData when the pool of correctly classified images is
    smaller than n.
    """
    if n == 0:
        return []
    pool = load_split(path)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    picked: list[Image] = []
    for idx in order:
        im = pool[idx]
        label, _ = model.classify(im)
        if label == im.true_label:
            picked.append(im)
            if len(picked) == n:
                return picked
    raise InsufficientData(
        f"only {len(picked)} of the requested {n} images are classified correctly"
    )


def train_desk_model(
    data_dir: str | Path,
    out_path: str | Path,
    seed: int = 0,
    epochs: int = 20,
    width: int = 32,
) -> tuple[ClassifierHandle, float]:
    """Train the small CNN on the train split; returns (handle, test accuracy)."""
    data_dir = Path(data_dir)
    x_train, y_train = load_arrays(data_dir / "train")
    x_test, y_test = load_arrays(data_dir / "test")
    size = x_train.shape[1]
    module = SmallConvNet(num_classes=NUM_CLASSES, in_channels=3, width=width)
    train_classifier(module, x_train, y_train, epochs=epochs, seed=seed)
    handle = make_handle(
        module, NUM_CLASSES, input_shape=(size, size, 3), feature_tap="act3"
    )
    import torch

    with torch.no_grad():
        preds = handle.forward_probs(handle.to_batch(list(x_test))).argmax(dim=1).numpy()
    acc = float((preds == y_test).mean())
    save_model(
        out_path,
        module,
        arch="small_convnet",
        arch_kwargs={"num_classes": NUM_CLASSES, "in_channels": 3, "width": width},
        meta={
            "num_classes": NUM_CLASSES,
            "input_shape": (size, size, 3),
            "feature_tap": "act3",
            "test_accuracy": acc,
            "seed": seed,
        },
    )
    return handle, acc

"""End-to-end detector construction: attack images, stack maps, fit."""

from __future__ import annotations

import numpy as np
import torch

from ..attacks import AttackConfig, run_attack
from ..core import ClassifierHandle
from ..defenses import DetectorModel, StackedMapSample, stack_maps, train_detector
from ..interpreters import get_interpreter
from ..models import load_model
from .data import load_dataset


def stacked_samples_for(
    handle: ClassifierHandle,
    interpreters,
    batch: torch.Tensor,
    labels: torch.Tensor,
    with_product: bool,
    label: int,
) -> list[StackedMapSample]:
    maps_per_interp = []
    for interp in interpreters:
        with torch.enable_grad():
            maps_per_interp.append(interp.maps(handle, batch, labels).detach().numpy())
    out = []
    for i in range(batch.shape[0]):
        out.append(
            stack_maps([m[i] for m in maps_per_interp], with_product=with_product, label=label)
        )
        out[-1].interpreter_ids = [interp.name for interp in interpreters]
    return out


def build_detector_from_attacks(
    model_path: str,
    data_dir: str,
    interpreter_names: list[str],
    with_product: bool = False,
    n: int = 400,
    framework: str = "pgd",
    method: str = "advedge",
    iterations: int = 200,
    seed: int = 0,
    batch_size: int = 64,
    handle: ClassifierHandle | None = None,
    images=None,
) -> DetectorModel:
    """Generate n benign + n adversarial stacked-map samples and fit a detector.

    The attack targets the first listed interpreter; maps from all listed
    interpreters are stacked per sample.
    """
    if handle is None:
        handle = load_model(model_path)
    if images is None:
        images = load_dataset(data_dir, n, seed, handle)
    interpreters = [get_interpreter(name) for name in interpreter_names]
    attack_cfg = AttackConfig(
        framework=framework,
        method=method,
        interpreter=interpreter_names[0],
        iterations=iterations,
        seed=seed,
    )

    benign: list[StackedMapSample] = []
    adversarial: list[StackedMapSample] = []
    for start in range(0, len(images), batch_size):
        chunk = images[start : start + batch_size]
        x0 = handle.to_batch(chunk)
        y0 = torch.as_tensor([im.true_label for im in chunk])
        benign.extend(stacked_samples_for(handle, interpreters, x0, y0, with_product, label=0))
        results = run_attack(handle, interpreters[0], chunk, attack_cfg)
        x_adv = handle.to_batch([r.x_adv for r in results])
        with torch.no_grad():
            y_adv = handle.forward_probs(x_adv).argmax(dim=1)
        adversarial.extend(
            stacked_samples_for(handle, interpreters, x_adv, y_adv, with_product, label=1)
        )

    return train_detector(benign, adversarial, seed=seed, backbone=handle)

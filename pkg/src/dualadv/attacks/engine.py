"""Shared attack machinery: target drawing, gates, schedules, result assembly."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from ..core import ClassifierHandle, Image
from ..edges import binarize_edges, sobel_edge_weights
from ..interpreters.common import AttributionMap
from .config import AttackConfig, AttackResult

SUCCESS_MARGIN = 0.693  # −log(0.5): prediction loss below this counts as "landed"


def draw_targets(y0: np.ndarray, num_classes: int, seed: int) -> np.ndarray:
    """Uniform random target ≠ current prediction, per image, seeded."""
    rng = np.random.default_rng(seed)
    offsets = rng.integers(1, num_classes, size=len(y0))
    return (y0 + offsets) % num_classes


def perturbation_gate(image: Image | np.ndarray, method: str, delta_bin: float) -> np.ndarray:
    """The H×W gate N_w: ones (adv2), 𝓔(x) (advedge) or 𝓔_δ(x) (advedge_plus)."""
    pixels = image.pixels if isinstance(image, Image) else np.asarray(image)
    if method == "adv2":
        return np.ones(pixels.shape[:2])
    edge = sobel_edge_weights(pixels)
    if method == "advedge":
        return edge.weights
    if method == "advedge_plus":
        return binarize_edges(edge, delta_bin).weights
    raise ValueError(f"unknown method {method!r}")


@dataclass
class BatchSetup:
    x0: torch.Tensor
    y0: torch.Tensor
    y_t: torch.Tensor
    gate: torch.Tensor  # N×1×H×W
    m_t: torch.Tensor | None
    ids: list


def prepare_batch(
    handle: ClassifierHandle,
    interpreter,
    images: list[Image],
    cfg: AttackConfig,
    targets: np.ndarray | None = None,
    use_maps: bool = True,
) -> BatchSetup:
    x0 = handle.to_batch(images)
    with torch.no_grad():
        y0 = handle.forward_probs(x0).argmax(dim=1)
    if targets is None:
        targets = draw_targets(y0.numpy(), handle.num_classes, cfg.seed)
    y_t = torch.as_tensor(np.asarray(targets), dtype=torch.long)
    gate = torch.as_tensor(
        np.stack([perturbation_gate(im, cfg.method, cfg.delta_bin) for im in images]),
        dtype=x0.dtype,
    ).unsqueeze(1)
    m_t = None
    if use_maps and interpreter is not None:
        with torch.enable_grad():
            m_t = interpreter.maps(handle, x0, y0).detach()
    ids = [getattr(im, "id", str(i)) for i, im in enumerate(images)]
    return BatchSetup(x0=x0, y0=y0, y_t=y_t, gate=gate, m_t=m_t, ids=ids)


class LambdaSchedule:
    """Per-sample interpretation-loss weight.

    Fixed when the config pins a value; otherwise starts at 0.01 and doubles
    every 50 iterations for samples whose prediction loss is already below
    the success margin.
    """

    def __init__(self, cfg: AttackConfig, n: int):
        self.fixed = cfg.lambda_int is not None
        start = cfg.lambda_int if self.fixed else 0.01
        self.lam = torch.full((n,), float(start))

    @property
    def active(self) -> bool:
        return bool((self.lam > 0).any())

    def update(self, iteration: int, l_prd: torch.Tensor) -> None:
        if self.fixed or (iteration + 1) % 50 != 0:
            return
        grow = l_prd.detach() < SUCCESS_MARGIN
        self.lam = torch.where(grow, self.lam * 2.0, self.lam)


def rho_at(cfg: AttackConfig, iteration: int) -> float:
    """Linear label-smoothing decay across the attack."""
    if cfg.iterations <= 1:
        return cfg.rho_end
    frac = iteration / (cfg.iterations - 1)
    return cfg.rho_start + (cfg.rho_end - cfg.rho_start) * frac


def finalize(
    handle: ClassifierHandle,
    interpreter,
    images: list[Image],
    setup: BatchSetup,
    x_hat: torch.Tensor,
    traces: list[list[tuple]],
    wall_time: float,
    cfg: AttackConfig,
) -> list[AttackResult]:
    """Score the final iterate and build one result per image."""
    x_hat = torch.clamp(x_hat.detach(), 0.0, 1.0)
    with torch.no_grad():
        probs = handle.forward_probs(x_hat)
    final_label = probs.argmax(dim=1)
    conf = probs.gather(1, setup.y_t.view(-1, 1)).squeeze(1)
    if interpreter is not None:
        with torch.enable_grad():
            m_adv = interpreter.maps(handle, x_hat, final_label).detach().cpu().numpy()
    else:
        m_adv = None
    per_image = wall_time / max(1, len(images))
    results = []
    for i, im in enumerate(images):
        amap = None
        if m_adv is not None:
            amap = AttributionMap(
                m_adv[i], interpreter=getattr(interpreter, "name", ""), source_image_id=im.id
            )
        results.append(
            AttackResult(
                x_adv=Image(
                    x_hat[i].cpu().numpy().transpose(1, 2, 0), id=im.id, true_label=im.true_label
                ),
                success=bool(final_label[i] == setup.y_t[i]),
                target_class=int(setup.y_t[i]),
                confidence=float(conf[i]),
                m_adv=amap,
                trace=traces[i],
                wall_time_s=per_image,
                image_id=im.id,
                true_label=im.true_label,
                final_label=int(final_label[i]),
                framework=cfg.framework,
                method=cfg.method,
                interpreter=cfg.interpreter,
            )
        )
    return results


class AttackTimer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0

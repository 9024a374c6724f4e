"""Perturbation-guided saliency: find the smallest mask whose deletion
kills the class score.

The mask lives on a coarse grid (upsampled bilinearly) and is optimized with
projected Adam on f_y(Φ(x; m)) + λ·mean(1−m). High values of the returned
saliency 1−m mark the informative regions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..core import ClassifierHandle, Image
from ..errors import SolveDiverged
from .common import AttributionMap, blur_reference, minmax_normalize_t


@dataclass
class MaskSolveConfig:
    lambda_sparsity: float = 4.0
    learning_rate: float = 0.15
    steps: int = 150
    blur_sigma: float | None = None
    mask_resolution: int | None = None  # default: H // 4, at least 4

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be ≥ 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def grid_size(self, h: int) -> int:
        return self.mask_resolution or max(4, h // 4)


def upsample_mask(grid: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Bilinear low-res grid (N×g×g) → full-res mask (N×H×W)."""
    return F.interpolate(grid.unsqueeze(1), size=size, mode="bilinear", align_corners=False).squeeze(1)


def mask_objective(
    handle: ClassifierHandle,
    x: torch.Tensor,
    y: torch.Tensor,
    m_full: torch.Tensor,
    r: torch.Tensor,
    lambda_sparsity: float,
) -> torch.Tensor:
    """Per-sample value of f_y(Φ(x;m)) + λ·mean(1−m)."""
    phi = x * m_full.unsqueeze(1) + r * (1.0 - m_full.unsqueeze(1))
    p = handle.forward_probs(phi).gather(1, y.view(-1, 1)).squeeze(1)
    sparsity = (1.0 - m_full).flatten(1).mean(dim=1)
    return p + lambda_sparsity * sparsity


def blur_batch(x: torch.Tensor, sigma: float | None) -> torch.Tensor:
    arr = x.detach().cpu().numpy().transpose(0, 2, 3, 1)
    blurred = np.stack([blur_reference(a, sigma) for a in arr]).transpose(0, 3, 1, 2)
    return torch.as_tensor(blurred, dtype=x.dtype)


class MaskSolveState:
    """Mask variable + its Adam state, reusable across bi-level iterations."""

    def __init__(self, handle: ClassifierHandle, x: torch.Tensor, y: torch.Tensor, cfg: MaskSolveConfig):
        self.handle = handle
        self.cfg = cfg
        self.y = y
        self.size = tuple(x.shape[2:])
        g = cfg.grid_size(self.size[0])
        self.grid = torch.ones(x.shape[0], g, g)
        self.r = blur_batch(x, cfg.blur_sigma)
        self.reset_optimizer()

    def reset_optimizer(self) -> None:
        self.grid = self.grid.detach().requires_grad_(True)
        self.opt = torch.optim.Adam([self.grid], lr=self.cfg.learning_rate)

    def full_mask(self, grid: torch.Tensor | None = None) -> torch.Tensor:
        return upsample_mask(self.grid if grid is None else grid, self.size)

    def objective(self, x: torch.Tensor, grid: torch.Tensor | None = None) -> torch.Tensor:
        return mask_objective(
            self.handle, x, self.y, self.full_mask(grid), self.r, self.cfg.lambda_sparsity
        )

    def step(self, x: torch.Tensor) -> torch.Tensor:
        """One projected Adam step on the mask objective; returns the values."""
        self.opt.zero_grad()
        obj = self.objective(x.detach())
        obj.sum().backward()
        self.opt.step()
        with torch.no_grad():
            self.grid.clamp_(0.0, 1.0)
        return obj.detach()


def solve_mask(
    handle: ClassifierHandle,
    x: torch.Tensor,
    y: torch.Tensor,
    cfg: MaskSolveConfig,
) -> dict:
    """Run the full mask optimization from the all-ones initialization.

    Keeps the best-objective iterate per sample so the returned mask never
    scores worse than the start.
    """
    state = MaskSolveState(handle, x, y, cfg)
    with torch.no_grad():
        best_obj = state.objective(x)
    best_grid = state.grid.detach().clone()
    init_obj = best_obj.clone()
    trace = [float(best_obj.mean())]
    for _ in range(cfg.steps):
        obj = state.step(x)
        if not torch.isfinite(obj).all():
            raise SolveDiverged("mask objective became non-finite")
        improved = obj < best_obj
        best_obj = torch.where(improved, obj, best_obj)
        best_grid[improved] = state.grid.detach()[improved]
        trace.append(float(obj.mean()))
    m_full = upsample_mask(best_grid, state.size)
    return {
        "grid": best_grid,
        "mask": m_full,
        "saliency": minmax_normalize_t(1.0 - m_full),
        "objective": best_obj,
        "initial_objective": init_obj,
        "trace": trace,
        "state": state,
    }


class MaskInterpreter:
    """Optimization-based interpreter; not differentiable through ``maps``."""

    name = "mask"

    def __init__(self, cfg: MaskSolveConfig | None = None):
        self.cfg = cfg or MaskSolveConfig()

    def maps(self, handle, x, y, create_graph: bool = False) -> torch.Tensor:
        if create_graph:
            raise ValueError("mask maps come from an inner solve; use the bi-level attack")
        return solve_mask(handle, x, y, self.cfg)["saliency"]


def mask_map(
    model: ClassifierHandle, x: Image, cfg: MaskSolveConfig | None = None, y: int | None = None
) -> AttributionMap:
    """Saliency map 1−m from the mask solve (high = informative)."""
    cfg = cfg or MaskSolveConfig()
    if y is None:
        y, _ = model.classify(x)
    t = model.to_batch([x])
    sal = solve_mask(model, t, torch.tensor([y]), cfg)["saliency"]
    return AttributionMap(sal[0].numpy(), interpreter="mask", source_image_id=getattr(x, "id", ""))

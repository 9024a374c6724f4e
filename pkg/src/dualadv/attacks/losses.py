"""Loss pieces shared by the attack engines."""

from __future__ import annotations

import numpy as np
import torch

from ..core import ClassifierHandle, Image
from ..errors import MissingClassPrototype
from ..interpreters.common import AttributionMap

PROB_FLOOR = 1e-12


def smoothed_cross_entropy_t(
    probs: torch.Tensor, y_t: torch.Tensor, target_mass: torch.Tensor | float
) -> torch.Tensor:
    """Per-sample cross-entropy against a smoothed one-hot label.

    The target class carries ``target_mass``; the remaining mass is spread
    uniformly over the other classes: y_c = (1 − q)/(|Y| − 1).
    """
    n, k = probs.shape
    if not torch.is_tensor(target_mass):
        target_mass = torch.full((n,), float(target_mass), dtype=probs.dtype)
    off = (1.0 - target_mass) / (k - 1)
    weights = off.view(-1, 1).expand(n, k).clone()
    weights.scatter_(1, y_t.view(-1, 1), target_mass.view(-1, 1))
    return -(weights * torch.log(torch.clamp(probs, min=PROB_FLOOR))).sum(dim=1)


def draw_target_mass(n: int, rho: float, gen: torch.Generator) -> torch.Tensor:
    """Sample per-image target mass from U(1−ρ, 1); ρ=0 returns exact ones."""
    if rho <= 0:
        return torch.ones(n)
    return 1.0 - rho * torch.rand(n, generator=gen)


def smoothed_prediction_loss(
    probs: np.ndarray, y_t: int, rho: float, rng: np.random.Generator | None = None
) -> float:
    """Label-smoothed cross-entropy for a single probability vector.

    With ρ=0 this is the standard one-hot cross-entropy −log f_{y_t}.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    probs = np.asarray(probs, dtype=np.float64)
    if rho == 0:
        q = 1.0
    else:
        rng = rng or np.random.default_rng()
        q = float(rng.uniform(1.0 - rho, 1.0))
    k = probs.shape[0]
    weights = np.full(k, (1.0 - q) / (k - 1))
    weights[y_t] = q
    return float(-(weights * np.log(np.clip(probs, PROB_FLOOR, None))).sum())


def interpretation_loss_t(m_adv: torch.Tensor, m_t: torch.Tensor) -> torch.Tensor:
    """Per-sample squared L2 distance between maps: ‖g(x̂;f) − m_t‖₂²."""
    return ((m_adv - m_t) ** 2).flatten(1).sum(dim=1)


def adv_loss(
    model: ClassifierHandle,
    interpreter,
    x_hat: Image,
    y_t: int,
    m_t: AttributionMap,
    lambda_int: float,
) -> float:
    """ℓ_prd + λ·ℓ_int at a single point, with ℓ_prd = −log f_{y_t}(x̂)."""
    t = model.to_batch([x_hat])
    with torch.no_grad():
        probs = model.forward_probs(t)
    l_prd = float(-torch.log(torch.clamp(probs[0, y_t], min=PROB_FLOOR)))
    if lambda_int == 0:
        return l_prd
    m_adv = interpreter.maps(model, t, torch.tensor([y_t]))
    target = torch.as_tensor(m_t.values, dtype=m_adv.dtype).unsqueeze(0)
    l_int = float(interpretation_loss_t(m_adv, target)[0])
    return l_prd + lambda_int * l_int


def embedding_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Squared L2 distance between embeddings (symmetric)."""
    return ((a - b) ** 2).flatten(1).sum(dim=1)


def rts_encoder_loss_t(rts, x_hat: torch.Tensor, y_t: torch.Tensor) -> torch.Tensor:
    if rts.class_prototypes is None:
        raise MissingClassPrototype("RTS model has no class prototypes")
    protos = rts.class_prototypes[y_t]
    if torch.isnan(protos).any():
        missing = sorted(set(int(c) for c in y_t[torch.isnan(protos).any(dim=1)]))
        raise MissingClassPrototype(f"no exemplars were seen for classes {missing}")
    return embedding_distance(rts.encode(x_hat), protos)


def rts_encoder_loss(rts, x_hat: Image, y_t: int) -> float:
    """Squared L2 between enc(x̂) and the mean class-y_t embedding."""
    t = rts.handle.to_batch([x_hat])
    with torch.no_grad():
        loss = rts_encoder_loss_t(rts, t, torch.tensor([y_t]))
    return float(loss[0])

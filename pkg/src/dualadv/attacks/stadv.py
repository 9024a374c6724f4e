"""Spatial attack: per-pixel flow fields deform the image instead of adding noise.

The adversarial image samples the benign one at displaced coordinates with
bilinear interpolation; the flow is optimized on a margin prediction loss
plus the interpretation loss and a neighborhood flow-smoothness penalty.
Gating multiplies the flow itself, so hard-gated pixels cannot move at all.
"""

from __future__ import annotations

import numpy as np
import torch

from ..core import ClassifierHandle, Image
from ..errors import AttackAborted
from .config import AttackConfig, AttackResult, FlowField
from .engine import AttackTimer, LambdaSchedule, finalize, prepare_batch
from .losses import interpretation_loss_t, rts_encoder_loss_t

FLOW_EPS = 1e-10


def warp_t(x: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Bilinear warp of N×C×H×W images by N×2×H×W flows (du rows, dv cols).

    Output pixel (u, v) samples the input at (u + du, v + dv), clamped to
    the image border; the four integer neighbors are blended with weights
    (1 − |Δu|)(1 − |Δv|).
    """
    n, c, h, w = x.shape
    uu = torch.arange(h, dtype=x.dtype).view(1, h, 1)
    vv = torch.arange(w, dtype=x.dtype).view(1, 1, w)
    src_u = torch.clamp(uu + flow[:, 0], 0.0, h - 1.0)
    src_v = torch.clamp(vv + flow[:, 1], 0.0, w - 1.0)
    u0 = torch.clamp(src_u.detach().floor(), 0.0, h - 1.0)
    v0 = torch.clamp(src_v.detach().floor(), 0.0, w - 1.0)
    u1 = torch.clamp(u0 + 1.0, max=h - 1.0)
    v1 = torch.clamp(v0 + 1.0, max=w - 1.0)
    wu1 = src_u - u0
    wu0 = 1.0 - wu1
    wv1 = src_v - v0
    wv0 = 1.0 - wv1

    flat = x.reshape(n, c, h * w)

    def sample(ui, vi):
        idx = (ui * w + vi).long().reshape(n, 1, h * w).expand(n, c, h * w)
        return flat.gather(2, idx).reshape(n, c, h, w)

    out = (
        sample(u0, v0) * (wu0 * wv0).unsqueeze(1)
        + sample(u0, v1) * (wu0 * wv1).unsqueeze(1)
        + sample(u1, v0) * (wu1 * wv0).unsqueeze(1)
        + sample(u1, v1) * (wu1 * wv1).unsqueeze(1)
    )
    return out


def flow_loss_t(flow: torch.Tensor) -> torch.Tensor:
    """Per-sample Σ_p Σ_{q∈N(p)} √(‖Δu_p−Δu_q‖² + ‖Δv_p−Δv_q‖² + ε).

    Every ordered neighbor pair contributes, so each unordered adjacency
    counts twice.
    """
    dh = flow[:, :, :, 1:] - flow[:, :, :, :-1]
    dv = flow[:, :, 1:, :] - flow[:, :, :-1, :]
    horiz = torch.sqrt((dh**2).sum(dim=1) + FLOW_EPS).flatten(1).sum(dim=1)
    vert = torch.sqrt((dv**2).sum(dim=1) + FLOW_EPS).flatten(1).sum(dim=1)
    return 2.0 * (horiz + vert)


def warp(x: Image | np.ndarray, flow: FlowField) -> np.ndarray:
    """Bilinear warp of a single H×W×C image (float64)."""
    pixels = x.pixels if isinstance(x, Image) else np.asarray(x)
    pixels = np.atleast_3d(pixels)
    t = torch.as_tensor(pixels.transpose(2, 0, 1)[None], dtype=torch.float64)
    f = torch.as_tensor(np.stack([flow.du, flow.dv])[None], dtype=torch.float64)
    return warp_t(t, f)[0].numpy().transpose(1, 2, 0)


def flow_loss(flow: FlowField) -> float:
    f = torch.as_tensor(np.stack([flow.du, flow.dv])[None], dtype=torch.float64)
    return float(flow_loss_t(f)[0])


def attack_stadv(
    handle: ClassifierHandle,
    interpreter,
    images: list[Image] | Image,
    cfg: AttackConfig,
    targets=None,
) -> list[AttackResult] | AttackResult:
    single = isinstance(images, Image)
    batch = [images] if single else list(images)
    if cfg.interpreter == "mask":
        from .bilevel import attack_mask_bilevel

        out = attack_mask_bilevel(handle, batch, cfg, targets=targets)
        return out[0] if single else out

    prior_mode = handle.relu_mode
    if getattr(interpreter, "name", "") == "grad":
        handle.set_relu_mode(cfg.relu_surrogate)
    try:
        setup = prepare_batch(handle, interpreter, batch, cfg, targets=targets)
        lam = LambdaSchedule(cfg, len(batch))
        torch.manual_seed(cfg.seed)
        flow = torch.zeros(len(batch), 2, *setup.x0.shape[2:], requires_grad=True)
        opt = torch.optim.Adam([flow], lr=cfg.stadv_lr)
        traces: list[list[tuple]] = [[] for _ in batch]
        x_hat = setup.x0.clone()
        with AttackTimer() as timer:
            for i in range(cfg.iterations):
                opt.zero_grad()
                gated = setup.gate * flow
                x_hat = warp_t(setup.x0, gated)
                logp = torch.log_softmax(handle.forward_logits(x_hat), dim=1)
                target_lp = logp.gather(1, setup.y_t.view(-1, 1)).squeeze(1)
                others = logp.scatter(1, setup.y_t.view(-1, 1), float("-inf"))
                margin = others.amax(dim=1) - target_lp
                l_prd = torch.clamp(margin, min=cfg.stadv_kappa)
                l_flow = flow_loss_t(gated)
                if lam.active and setup.m_t is not None:
                    m_adv = interpreter.maps(handle, x_hat, setup.y_t, create_graph=True)
                    l_int = interpretation_loss_t(m_adv, setup.m_t)
                else:
                    l_int = torch.zeros_like(l_prd)
                total = l_prd + lam.lam * l_int + cfg.stadv_lambda_flow * l_flow
                if getattr(interpreter, "name", "") == "rts" and cfg.lambda_enc > 0:
                    total = total + cfg.lambda_enc * rts_encoder_loss_t(
                        interpreter.rts, x_hat, setup.y_t
                    )
                if not torch.isfinite(total).all():
                    raise AttackAborted("non-finite attack loss", trace=traces)
                total.sum().backward()
                opt.step()
                for n in range(len(batch)):
                    traces[n].append((float(l_prd[n]), float(l_int[n])))
                lam.update(i, l_prd)
            with torch.no_grad():
                x_hat = warp_t(setup.x0, setup.gate * flow)
        results = finalize(handle, interpreter, batch, setup, x_hat, traces, timer.elapsed, cfg)
    finally:
        handle.set_relu_mode(prior_mode)
    return results[0] if single else results

"""Bi-level attack against the mask-optimization interpreter.

The interpreter itself is an inner optimization, so the attack alternates:
a few gradient steps refine the running mask on its own objective, then the
image moves against ℓ_adv evaluated at a one-step lookahead of the mask
(m − α·∇_m ℓ_map), which is what makes the interpretation loss
differentiable w.r.t. the image. Every ``mask_reset_period`` iterations the
running mask is replaced by a fresh full solve on the current iterate and
the mask optimizer moments are reset.

For the signed-gradient framework the image update is two-phase: a
prediction-loss step, then an interpretation-loss step whose size is the
largest (binary-searched) step that keeps the target-class confidence above
the configured threshold. The L2 and flow frameworks fold the lookahead
interpretation loss into their usual objective and take one optimizer step.
"""

from __future__ import annotations

import numpy as np
import torch

from ..core import ClassifierHandle, Image, project_linf_t
from ..errors import AttackAborted
from ..interpreters.maskopt import MaskSolveConfig, MaskSolveState, solve_mask, upsample_mask
from .config import AttackConfig, AttackResult
from .engine import AttackTimer, LambdaSchedule, finalize, prepare_batch, rho_at
from .losses import (
    PROB_FLOOR,
    draw_target_mass,
    rts_encoder_loss_t,
    smoothed_cross_entropy_t,
)
from .stadv import flow_loss_t, warp_t


def _target_confidence(handle, x_hat, y_t):
    with torch.no_grad():
        probs = handle.forward_probs(x_hat)
    return probs.gather(1, y_t.view(-1, 1)).squeeze(1)


def binary_search_step(
    handle: ClassifierHandle,
    x_hat: torch.Tensor,
    direction: torch.Tensor,
    x0: torch.Tensor,
    cfg: AttackConfig,
    y_t: torch.Tensor,
) -> torch.Tensor:
    """Largest per-sample step s ∈ [0, max] keeping f_{y_t} above the threshold.

    If even the zero step violates the threshold (current confidence already
    below it), the sample takes no interpretation step this iteration.
    """
    max_step = cfg.alpha * cfg.binary_search_max_scale
    ok0 = _target_confidence(handle, x_hat, y_t) >= cfg.confidence_threshold
    lo = torch.zeros(x_hat.shape[0])
    hi = torch.full((x_hat.shape[0],), max_step)
    for _ in range(cfg.binary_search_steps):
        mid = 0.5 * (lo + hi)
        cand = project_linf_t(x_hat - mid.view(-1, 1, 1, 1) * direction, x0, cfg.epsilon)
        ok = _target_confidence(handle, cand, y_t) >= cfg.confidence_threshold
        lo = torch.where(ok, mid, lo)
        hi = torch.where(ok, hi, mid)
    return lo * ok0


def _lookahead_int_grad(state: MaskSolveState, x_var: torch.Tensor, target_full: torch.Tensor):
    """ℓ_int at the mask lookahead, differentiable w.r.t. the image."""
    grid_var = state.grid.detach().requires_grad_(True)
    obj = state.objective(x_var, grid_var)
    (g_m,) = torch.autograd.grad(obj.sum(), grid_var, create_graph=True)
    lookahead = grid_var - state.cfg.learning_rate * g_m
    m_full = upsample_mask(lookahead, state.size)
    return ((m_full - target_full) ** 2).flatten(1).sum(dim=1)


def attack_mask_bilevel(
    handle: ClassifierHandle,
    images: list[Image] | Image,
    cfg: AttackConfig,
    mask_cfg: MaskSolveConfig | None = None,
    targets=None,
) -> list[AttackResult] | AttackResult:
    single = isinstance(images, Image)
    batch = [images] if single else list(images)
    mask_cfg = mask_cfg or MaskSolveConfig()

    from ..interpreters.maskopt import MaskInterpreter

    interp = MaskInterpreter(mask_cfg)
    prior_mode = handle.relu_mode
    handle.set_relu_mode(cfg.relu_surrogate)
    try:
        setup = prepare_batch(handle, None, batch, cfg, targets=targets, use_maps=False)
        benign = solve_mask(handle, setup.x0, setup.y0, mask_cfg)
        target_full = benign["mask"].detach()
        setup.m_t = target_full

        state = MaskSolveState(handle, setup.x0, setup.y_t, mask_cfg)
        state.grid = benign["grid"].clone()
        state.reset_optimizer()

        lam = LambdaSchedule(cfg, len(batch))
        gen = torch.Generator().manual_seed(cfg.seed)
        torch.manual_seed(cfg.seed)
        traces: list[list[tuple]] = [[] for _ in batch]
        x_hat = setup.x0.clone()

        if cfg.framework == "cw":
            w = torch.atanh((2.0 * setup.x0 - 1.0) * (1 - 1e-6)).requires_grad_(True)
            opt = torch.optim.Adam([w], lr=cfg.cw_lr)
        elif cfg.framework == "stadv":
            flow = torch.zeros(len(batch), 2, *setup.x0.shape[2:], requires_grad=True)
            opt = torch.optim.Adam([flow], lr=cfg.stadv_lr)

        with AttackTimer() as timer:
            for i in range(cfg.iterations):
                for _ in range(cfg.mask_inner_steps):
                    state.step(x_hat)

                if cfg.framework == "pgd":
                    x_var = x_hat.detach().requires_grad_(True)
                    probs = handle.forward_probs(x_var)
                    mass = draw_target_mass(len(batch), rho_at(cfg, i), gen)
                    l_prd = smoothed_cross_entropy_t(probs, setup.y_t, mass)
                    (g1,) = torch.autograd.grad(l_prd.sum(), x_var)
                    with torch.no_grad():
                        x_hat = project_linf_t(
                            x_hat - setup.gate * cfg.alpha * torch.sign(g1), setup.x0, cfg.epsilon
                        )
                    x_var = x_hat.detach().requires_grad_(True)
                    l_int = _lookahead_int_grad(state, x_var, target_full)
                    (g2,) = torch.autograd.grad(l_int.sum(), x_var)
                    direction = setup.gate * torch.sign(g2)
                    s = binary_search_step(handle, x_hat, direction, setup.x0, cfg, setup.y_t)
                    with torch.no_grad():
                        x_hat = project_linf_t(
                            x_hat - s.view(-1, 1, 1, 1) * direction, setup.x0, cfg.epsilon
                        )
                else:
                    opt.zero_grad()
                    if cfg.framework == "cw":
                        x_raw = 0.5 * (torch.tanh(w) + 1.0)
                        delta = setup.gate * (x_raw - setup.x0)
                        x_var = setup.x0 + delta
                        probs = handle.forward_probs(x_var)
                        p_t = probs.gather(1, setup.y_t.view(-1, 1)).squeeze(1)
                        l_prd = -torch.log(torch.clamp(p_t, min=PROB_FLOOR))
                        base = torch.sqrt((delta**2).flatten(1).sum(dim=1) + 1e-12) + cfg.cw_c * l_prd
                    else:
                        gated = setup.gate * flow
                        x_var = warp_t(setup.x0, gated)
                        logp = torch.log_softmax(handle.forward_logits(x_var), dim=1)
                        target_lp = logp.gather(1, setup.y_t.view(-1, 1)).squeeze(1)
                        others = logp.scatter(1, setup.y_t.view(-1, 1), float("-inf"))
                        l_prd = torch.clamp(others.amax(dim=1) - target_lp, min=cfg.stadv_kappa)
                        base = l_prd + cfg.stadv_lambda_flow * flow_loss_t(gated)
                    l_int = _lookahead_int_grad(state, x_var, target_full)
                    total = base + lam.lam * l_int
                    if not torch.isfinite(total).all():
                        raise AttackAborted("non-finite attack loss", trace=traces)
                    total.sum().backward()
                    opt.step()
                    with torch.no_grad():
                        if cfg.framework == "cw":
                            x_hat = setup.x0 + setup.gate * (0.5 * (torch.tanh(w) + 1.0) - setup.x0)
                        else:
                            x_hat = warp_t(setup.x0, setup.gate * flow)

                for n in range(len(batch)):
                    traces[n].append((float(l_prd[n]), float(l_int[n])))
                lam.update(i, l_prd)

                if (i + 1) % cfg.mask_reset_period == 0 and (i + 1) < cfg.iterations:
                    fresh = solve_mask(handle, x_hat.detach(), setup.y_t, mask_cfg)
                    state = fresh["state"]
                    state.grid = fresh["grid"].clone()
                    state.reset_optimizer()

        results = finalize(handle, interp, batch, setup, x_hat, traces, timer.elapsed, cfg)
    finally:
        handle.set_relu_mode(prior_mode)
    return results[0] if single else results

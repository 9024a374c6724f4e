"""Signed-gradient attack in the L∞ ball, with edge-gated updates.

Each step descends the combined loss ℓ_prd + λ·ℓ_int and projects back onto
the ε-ball around the benign image:

    x̂ ← Π( x̂ − N_w · α · sign(∇ ℓ_adv) )

with N_w ≡ 1 for the ungated baseline, the continuous Sobel weights for the
gated variant, and their binarization for the hard-gated variant.
"""

from __future__ import annotations

import torch

from ..core import ClassifierHandle, Image, project_linf_t
from ..errors import AttackAborted
from .config import AttackConfig, AttackResult
from .engine import AttackTimer, LambdaSchedule, finalize, prepare_batch, rho_at
from .losses import (
    draw_target_mass,
    interpretation_loss_t,
    rts_encoder_loss_t,
    smoothed_cross_entropy_t,
)


def attack_pgd(
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
        gen = torch.Generator().manual_seed(cfg.seed)
        x_hat = setup.x0.clone()
        traces: list[list[tuple]] = [[] for _ in batch]
        with AttackTimer() as timer:
            for i in range(cfg.iterations):
                x_var = x_hat.detach().requires_grad_(True)
                probs = handle.forward_probs(x_var)
                mass = draw_target_mass(len(batch), rho_at(cfg, i), gen)
                l_prd = smoothed_cross_entropy_t(probs, setup.y_t, mass)
                if lam.active and setup.m_t is not None:
                    m_adv = interpreter.maps(handle, x_var, setup.y_t, create_graph=True)
                    l_int = interpretation_loss_t(m_adv, setup.m_t)
                else:
                    l_int = torch.zeros_like(l_prd)
                total = l_prd + lam.lam * l_int
                if getattr(interpreter, "name", "") == "rts" and cfg.lambda_enc > 0:
                    total = total + cfg.lambda_enc * rts_encoder_loss_t(
                        interpreter.rts, x_var, setup.y_t
                    )
                if not torch.isfinite(total).all():
                    raise AttackAborted("non-finite attack loss", trace=traces)
                (g,) = torch.autograd.grad(total.sum(), x_var)
                with torch.no_grad():
                    step = setup.gate * cfg.alpha * torch.sign(g)
                    x_hat = project_linf_t(x_hat - step, setup.x0, cfg.epsilon)
                for n in range(len(batch)):
                    traces[n].append((float(l_prd[n]), float(l_int[n])))
                lam.update(i, l_prd)
        results = finalize(handle, interpreter, batch, setup, x_hat, traces, timer.elapsed, cfg)
    finally:
        handle.set_relu_mode(prior_mode)
    return results[0] if single else results

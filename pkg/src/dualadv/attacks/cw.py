"""L2-penalized attack: minimize ‖δ‖₂ + c·ℓ_prd + λ·ℓ_int.

The image is reparameterized through tanh so the optimizer is unconstrained;
the applied perturbation is gated elementwise by N_w before being added back
to the benign image, which keeps pixels in [0, 1] by convexity. A single
fixed constant c is used (no c-search) so iteration budgets stay comparable
across frameworks.
"""

from __future__ import annotations

import torch

from ..core import ClassifierHandle, Image
from ..errors import AttackAborted
from .config import AttackConfig, AttackResult
from .engine import AttackTimer, LambdaSchedule, finalize, prepare_batch
from .losses import PROB_FLOOR, interpretation_loss_t, rts_encoder_loss_t

ATANH_SCALE = 1.0 - 1e-6


def attack_cw(
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
        w = torch.atanh((2.0 * setup.x0 - 1.0) * ATANH_SCALE).requires_grad_(True)
        opt = torch.optim.Adam([w], lr=cfg.cw_lr)
        traces: list[list[tuple]] = [[] for _ in batch]
        x_hat = setup.x0.clone()
        with AttackTimer() as timer:
            for i in range(cfg.iterations):
                opt.zero_grad()
                x_raw = 0.5 * (torch.tanh(w) + 1.0)
                delta = setup.gate * (x_raw - setup.x0)
                x_hat = setup.x0 + delta
                probs = handle.forward_probs(x_hat)
                p_t = probs.gather(1, setup.y_t.view(-1, 1)).squeeze(1)
                l_prd = -torch.log(torch.clamp(p_t, min=PROB_FLOOR))
                l2 = torch.sqrt((delta**2).flatten(1).sum(dim=1) + 1e-12)
                if lam.active and setup.m_t is not None:
                    m_adv = interpreter.maps(handle, x_hat, setup.y_t, create_graph=True)
                    l_int = interpretation_loss_t(m_adv, setup.m_t)
                else:
                    l_int = torch.zeros_like(l_prd)
                total = l2 + cfg.cw_c * l_prd + lam.lam * l_int
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
                x_hat = setup.x0 + setup.gate * (0.5 * (torch.tanh(w) + 1.0) - setup.x0)
        results = finalize(handle, interpreter, batch, setup, x_hat, traces, timer.elapsed, cfg)
    finally:
        handle.set_relu_mode(prior_mode)
    return results[0] if single else results

"""Interpretation-based robust training.

Trains the classifier against the worst-case two-class interpretation
discrepancy inside a small L∞ ball:

    min_θ E[ CE(θ; x, y) + γ · D(x, x̂) ],   x̂ = argmax_{‖x̂−x‖∞≤ε} D(x, x̂)

where D averages the L1 gap between benign and perturbed maps for the true
class and a contrast class. The inner maximization runs a few steps of
signed-gradient ascent on D.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..core import ClassifierHandle, Image
from ..errors import TrainingDiverged
from ..interpreters import get_interpreter
from ..metrics import kendall_tau


@dataclass
class RobustTrainConfig:
    gamma: float = 1.0
    epsilon_train: float = 8.0 / 255.0
    inner_steps: int = 7
    interpreter: str = "cam"
    inner_alpha: float | None = None  # default: 2.5·ε/steps
    epochs: int = 12
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be ≥ 0")

    @property
    def step_size(self) -> float:
        if self.inner_alpha is not None:
            return self.inner_alpha
        return 2.5 * self.epsilon_train / max(1, self.inner_steps)


def discrepancy_t(
    handle: ClassifierHandle,
    interpreter,
    x: torch.Tensor,
    x_hat: torch.Tensor,
    y: torch.Tensor,
    y_t: torch.Tensor,
) -> torch.Tensor:
    """Per-sample (1/2)(‖g_y(x)−g_y(x̂)‖₁ + ‖g_{y_t}(x)−g_{y_t}(x̂)‖₁) / (H·W)."""
    d = torch.zeros(x.shape[0], dtype=x.dtype)
    for cls in (y, y_t):
        m_ben = interpreter.maps(handle, x, cls)
        m_adv = interpreter.maps(handle, x_hat, cls)
        d = d + 0.5 * (m_ben - m_adv).abs().flatten(1).mean(dim=1)
    return d


def interpretation_discrepancy(
    model: ClassifierHandle, interpreter, x: Image, x_hat: Image, y: int, y_t: int
) -> float:
    a = model.to_batch([x])
    b = model.to_batch([x_hat])
    with torch.enable_grad():
        d = discrepancy_t(model, interpreter, a, b, torch.tensor([y]), torch.tensor([y_t]))
    return float(d[0])


def _runner_up(logits: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    masked = logits.scatter(1, y.view(-1, 1), float("-inf"))
    return masked.argmax(dim=1)


def _worst_case(
    handle: ClassifierHandle,
    interpreter,
    x: torch.Tensor,
    y: torch.Tensor,
    y_t: torch.Tensor,
    cfg: RobustTrainConfig,
) -> torch.Tensor:
    """Signed-gradient ascent on the discrepancy inside the ε ball."""
    x_hat = x.clone()
    for _ in range(cfg.inner_steps):
        x_var = x_hat.detach().requires_grad_(True)
        d = discrepancy_t(handle, interpreter, x.detach(), x_var, y, y_t)
        (g,) = torch.autograd.grad(d.sum(), x_var)
        with torch.no_grad():
            x_hat = x_hat + cfg.step_size * torch.sign(g)
            x_hat = torch.clamp(
                torch.minimum(torch.maximum(x_hat, x - cfg.epsilon_train), x + cfg.epsilon_train),
                0.0,
                1.0,
            )
    return x_hat.detach()


def robust_train(
    module: torch.nn.Module,
    images: np.ndarray,
    labels: np.ndarray,
    cfg: RobustTrainConfig,
    feature_tap: str = "act3",
) -> list[float]:
    """Train the module in place; returns per-epoch mean classification losses.

    With γ=0 the inner attack is skipped entirely and the loop reduces to
    plain cross-entropy training (same RNG consumption, same trajectory).
    """
    torch.manual_seed(cfg.seed)
    num_classes = int(labels.max()) + 1
    handle = ClassifierHandle(
        module, num_classes=num_classes, feature_tap=feature_tap, freeze=False
    )
    interpreter = get_interpreter(cfg.interpreter)
    x_all = torch.as_tensor(images.transpose(0, 3, 1, 2), dtype=torch.float32)
    y_all = torch.as_tensor(labels, dtype=torch.long)
    opt = torch.optim.Adam(module.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(cfg.seed)
    n = x_all.shape[0]
    history = []
    for _ in range(cfg.epochs):
        perm = torch.randperm(n, generator=gen)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb, yb = x_all[idx], y_all[idx]
            if cfg.gamma > 0 and cfg.inner_steps > 0:
                with torch.no_grad():
                    y_t = _runner_up(handle.forward_logits(xb), yb)
                x_hat = _worst_case(handle, interpreter, xb, yb, y_t, cfg)
            opt.zero_grad()
            ce = F.cross_entropy(handle.forward_logits(xb), yb)
            loss = ce
            if cfg.gamma > 0 and cfg.inner_steps > 0:
                loss = loss + cfg.gamma * discrepancy_t(
                    handle, interpreter, xb, x_hat, yb, y_t
                ).mean()
            if not torch.isfinite(loss):
                raise TrainingDiverged("robust training loss became non-finite")
            loss.backward()
            opt.step()
            total += float(ce) * len(idx)
        history.append(total / n)
    module.eval()
    return history


def pgd_untargeted(
    handle: ClassifierHandle,
    x: torch.Tensor,
    y: torch.Tensor,
    epsilon: float,
    steps: int = 20,
    alpha: float | None = None,
) -> torch.Tensor:
    """Plain cross-entropy PGD used to probe robustness after training."""
    alpha = alpha or 2.5 * epsilon / steps
    x_hat = x.clone()
    for _ in range(steps):
        x_var = x_hat.detach().requires_grad_(True)
        loss = F.cross_entropy(handle.forward_logits(x_var), y)
        (g,) = torch.autograd.grad(loss, x_var)
        with torch.no_grad():
            x_hat = x_hat + alpha * torch.sign(g)
            x_hat = torch.clamp(
                torch.minimum(torch.maximum(x_hat, x - epsilon), x + epsilon), 0.0, 1.0
            )
    return x_hat.detach()


def robust_accuracy(
    handle: ClassifierHandle,
    images: np.ndarray,
    labels: np.ndarray,
    epsilon: float,
    steps: int = 20,
    batch_size: int = 128,
) -> float:
    x_all = torch.as_tensor(images.transpose(0, 3, 1, 2), dtype=torch.float32)
    y_all = torch.as_tensor(labels, dtype=torch.long)
    correct = 0
    for start in range(0, len(y_all), batch_size):
        xb, yb = x_all[start : start + batch_size], y_all[start : start + batch_size]
        x_hat = xb if epsilon == 0 else pgd_untargeted(handle, xb, yb, epsilon, steps)
        with torch.no_grad():
            pred = handle.forward_logits(x_hat).argmax(dim=1)
        correct += int((pred == yb).sum())
    return correct / len(y_all)


def interpretation_stability(
    handle: ClassifierHandle,
    interpreter,
    images: np.ndarray,
    labels: np.ndarray,
    epsilon: float,
    steps: int = 20,
    batch_size: int = 128,
) -> float:
    """Mean Kendall tau between benign and post-attack maps of the true class."""
    x_all = torch.as_tensor(images.transpose(0, 3, 1, 2), dtype=torch.float32)
    y_all = torch.as_tensor(labels, dtype=torch.long)
    taus = []
    for start in range(0, len(y_all), batch_size):
        xb, yb = x_all[start : start + batch_size], y_all[start : start + batch_size]
        x_hat = pgd_untargeted(handle, xb, yb, epsilon, steps)
        with torch.enable_grad():
            m_ben = interpreter.maps(handle, xb, yb).detach().numpy()
            m_adv = interpreter.maps(handle, x_hat, yb).detach().numpy()
        for a, b in zip(m_ben, m_adv):
            tau = kendall_tau(a, b)
            if tau is not None:
                taus.append(tau)
    return float(np.mean(taus)) if taus else float("nan")

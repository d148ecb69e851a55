"""Low-rank adapter mathematics over a frozen base matrix.

The adapted forward pass is ``h = W0 x + B (A x)``: the base matrix W0 stays
read-only while the rank-r pair (A, B) trains. B starts at zero so the
adapted model is exactly the base model at initialization; A starts Gaussian.
No alpha/r scaling is applied.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

ATTENTION_TARGETS = ("W_q", "W_k", "W_v", "W_o")


class LoraError(Exception):
    pass


class RankTooLarge(LoraError):
    pass


class ShapeMismatch(LoraError):
    pass


class Divergence(LoraError):
    pass


@dataclass
class LoraAdapter:
    """Trainable low-rank pair for one d x k base matrix."""

    A: np.ndarray  # (r, k)
    B: np.ndarray  # (d, r)
    d: int
    k: int
    r: int

    def __post_init__(self) -> None:
        if self.A.shape != (self.r, self.k) or self.B.shape != (self.d, self.r):
            raise ShapeMismatch(
                f"A{self.A.shape}/B{self.B.shape} inconsistent with d={self.d}, "
                f"k={self.k}, r={self.r}"
            )
        if not 1 <= self.r <= min(self.d, self.k):
            raise RankTooLarge(f"rank {self.r} outside [1, min({self.d}, {self.k})]")


def lora_init(d: int, k: int, r: int, seed: int = 0, sigma: float = 0.02) -> LoraAdapter:
    """Zero B, Gaussian(0, sigma^2) A, from a seeded generator."""
    if r < 1 or r > min(d, k):
        raise RankTooLarge(f"rank {r} outside [1, min({d}, {k})]")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    rng = np.random.default_rng(seed)
    A = rng.normal(0.0, sigma, size=(r, k))
    B = np.zeros((d, r))
    return LoraAdapter(A=A, B=B, d=d, k=k, r=r)


def lora_forward(W0: np.ndarray, adapter: LoraAdapter, x: np.ndarray) -> np.ndarray:
    """h = W0 x + B (A x), keeping the intermediate r-dimensional."""
    x = np.asarray(x)
    if W0.shape != (adapter.d, adapter.k):
        raise ShapeMismatch(f"W0 shape {W0.shape}, expected ({adapter.d}, {adapter.k})")
    if x.shape != (adapter.k,):
        raise ShapeMismatch(f"x shape {x.shape}, expected ({adapter.k},)")
    return W0 @ x + adapter.B @ (adapter.A @ x)


def lora_param_count(
    d_model: int,
    r: int,
    n_layers: int,
    targets: tuple[str, ...] = ATTENTION_TARGETS,
) -> int:
    """Trainable parameters when adapting square d_model projections: each
    target contributes r*(d_model + d_model) per layer."""
    if d_model < 1 or n_layers < 1 or r < 0:
        raise ValueError("d_model and n_layers must be positive, r >= 0")
    if not targets:
        raise ValueError("targets must be nonempty")
    unknown = set(targets) - set(ATTENTION_TARGETS)
    if unknown:
        raise ValueError(f"unknown targets {sorted(unknown)}")
    return n_layers * len(targets) * r * (d_model + d_model)


def _loss(W0: np.ndarray, A: np.ndarray, B: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    h = W0 @ x + B @ (A @ x)
    return 0.5 * float(np.sum((h - y) ** 2))


def analytic_gradients(
    W0: np.ndarray, adapter: LoraAdapter, x: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form adapter gradients of 0.5*||h - y||^2: the A gradient is
    the outer product of B^T(h-y) with x, the B gradient of (h-y) with Ax."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape != (adapter.d,):
        raise ShapeMismatch(f"y shape {y.shape}, expected ({adapter.d},)")
    residual = lora_forward(W0, adapter, x) - y
    grad_A = np.outer(adapter.B.T @ residual, x)  # (r, k)
    grad_B = np.outer(residual, adapter.A @ x)  # (d, r)
    return grad_A, grad_B


def grad_check(
    W0: np.ndarray,
    adapter: LoraAdapter,
    x: np.ndarray,
    y: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Compare analytic adapter gradients of 0.5*||h - y||^2 against central
    finite differences, entrywise; returns the max relative error."""
    if not 0 < eps <= 1e-3:
        raise ValueError("eps must be in (0, 1e-3]")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    grad_A, grad_B = analytic_gradients(W0, adapter, x, y)

    max_rel = 0.0
    for grad, M in ((grad_A, adapter.A), (grad_B, adapter.B)):
        it = np.nditer(M, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = M[idx]
            M[idx] = orig + eps
            up = _loss(W0, adapter.A, adapter.B, x, y)
            M[idx] = orig - eps
            down = _loss(W0, adapter.A, adapter.B, x, y)
            M[idx] = orig
            fd = (up - down) / (2 * eps)
            scale = max(abs(grad[idx]), abs(fd), 1e-8)
            max_rel = max(max_rel, abs(grad[idx] - fd) / scale)
    return max_rel


def matrix_digest(M: np.ndarray) -> str:
    """Content hash used to prove the base matrix never changes."""
    buf = np.ascontiguousarray(M, dtype=np.float64)
    return hashlib.sha256(buf.tobytes()).hexdigest()


def adapter_fit_toy(
    W0: np.ndarray,
    target_W: np.ndarray,
    r: int,
    steps: int = 500,
    lr: float = 0.01,
    seed: int = 0,
    sigma: float = 0.02,
) -> tuple[LoraAdapter, list[float]]:
    """Gradient descent on 0.5*||W0 + BA - target||_F^2, updating only the
    adapter. W0 is bit-identical before and after. Raises Divergence when
    the loss grows for 10 consecutive steps."""
    if lr <= 0:
        raise ValueError("lr must be > 0")
    if W0.shape != target_W.shape:
        raise ShapeMismatch(f"W0 {W0.shape} vs target {target_W.shape}")
    d, k = W0.shape
    adapter = lora_init(d, k, r, seed=seed, sigma=sigma)
    A, B = adapter.A, adapter.B
    losses: list[float] = []
    growth_streak = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            residual = W0 + B @ A - target_W
            loss = 0.5 * float(np.sum(residual**2))
            losses.append(loss)
            if len(losses) > 1 and (not np.isfinite(loss) or loss > losses[-2]):
                growth_streak += 1
                if growth_streak >= 10:
                    raise Divergence(f"loss grew for {growth_streak} consecutive steps")
            else:
                growth_streak = 0
            grad_A = B.T @ residual
            grad_B = residual @ A.T
            A -= lr * grad_A
            B -= lr * grad_B
    return LoraAdapter(A=A, B=B, d=d, k=k, r=r), losses

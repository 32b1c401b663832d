"""Training losses.

The multi-label strategy loss is binary cross-entropy on sigmoid
probabilities, averaged over classes and then over the batch so the
scale does not depend on the class count. Probabilities are clamped to
[eps, 1-eps] before the logs; eps is far below every test tolerance.
Focal loss is available behind a flag but off by default (it degraded
accuracy in the original experiments).
"""

from __future__ import annotations

import torch

from ..errors import ShapeError

CLAMP_EPS = 1e-7


def strategy_loss(probs: torch.Tensor, targets: torch.Tensor, eps: float = CLAMP_EPS) -> torch.Tensor:
    """Mean binary cross-entropy -[y log p + (1-y) log(1-p)].

    ``probs`` and ``targets`` are [num_classes] or [batch, num_classes];
    the mean runs over classes, then over the batch.
    """
    if probs.shape != targets.shape:
        raise ShapeError(f"probs {tuple(probs.shape)} vs targets {tuple(targets.shape)}")
    p = probs.clamp(eps, 1.0 - eps)
    bce = -(targets * torch.log(p) + (1.0 - targets) * torch.log1p(-p))
    return bce.mean()


def focal_loss(
    probs: torch.Tensor,
    targets: torch.Tensor,
    gamma: float = 2.0,
    eps: float = CLAMP_EPS,
) -> torch.Tensor:
    """Focal variant: down-weights easy examples by (1-p_t)^gamma."""
    if probs.shape != targets.shape:
        raise ShapeError(f"probs {tuple(probs.shape)} vs targets {tuple(targets.shape)}")
    p = probs.clamp(eps, 1.0 - eps)
    loss = -(
        targets * (1.0 - p) ** gamma * torch.log(p)
        + (1.0 - targets) * p**gamma * torch.log1p(-p)
    )
    return loss.mean()


def generation_loss(logits: torch.Tensor, targets: torch.Tensor, pad_id: int = 0) -> torch.Tensor:
    """Next-token cross-entropy under teacher forcing.

    ``logits`` is [batch, T, vocab] for the full target sequence
    (including the begin token); position t is scored against the gold
    token at t+1. Padding positions are ignored.
    """
    if logits.shape[:2] != targets.shape:
        raise ShapeError(f"logits {tuple(logits.shape)} vs targets {tuple(targets.shape)}")
    shifted_logits = logits[:, :-1].reshape(-1, logits.shape[-1])
    shifted_targets = targets[:, 1:].reshape(-1)
    return torch.nn.functional.cross_entropy(
        shifted_logits, shifted_targets, ignore_index=pad_id
    )


def multitask_loss(l_s: torch.Tensor, l_gen: torch.Tensor, lambda_gen: float = 1.0):
    """Joint objective: strategy loss plus weighted generation loss."""
    if lambda_gen < 0:
        raise ValueError("lambda_gen must be >= 0")
    return l_s + lambda_gen * l_gen

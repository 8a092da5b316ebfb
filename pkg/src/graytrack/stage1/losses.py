"""Boundary (BCE) and frame-count losses."""

from __future__ import annotations

import torch
import torch.nn.functional as F


def stage1_losses(logits: torch.Tensor, truth: torch.Tensor, lambda_count: float, mask=None):
    """``(L_boundary, L_count, L_total)`` averaged over windows.

    ``logits``/``truth`` are ``(L,)`` for one window or ``(B, L)`` for a batch;
    ``mask`` excludes padding.
    """
    if logits.shape != truth.shape:
        raise ValueError(f"shape mismatch {tuple(logits.shape)} vs {tuple(truth.shape)}")
    if logits.dim() == 1:
        logits, truth = logits[None], truth[None]
        mask = None if mask is None else mask[None]
    truth = truth.to(logits.dtype)
    w = torch.ones_like(logits) if mask is None else mask.to(logits.dtype)
    n = w.sum(dim=1).clamp_min(1.0)
    bce = F.binary_cross_entropy_with_logits(logits, truth, reduction="none")
    l_boundary = (bce * w).sum(dim=1) / n
    l_count = ((torch.sigmoid(logits) - truth) * w).sum(dim=1).abs()
    l_total = l_boundary + lambda_count * l_count
    return l_boundary.mean(), l_count.mean(), l_total.mean()

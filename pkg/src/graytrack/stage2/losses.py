"""Visibility, gated position and combined tracker losses."""

from __future__ import annotations

import torch
import torch.nn.functional as F


def stage2_losses(y_fov, p_hat, r, p_avg, tau: float, lambda_fov: float = 1.0,
                  lambda_pos: float = 1.0, fov_logit=None, weight=None):
    """Per-window ``(L_fov, L_pos, L_sum)`` as ``(B,)`` tensors.

    ``r`` is the visible fraction, ``p_avg`` the target position (ignored, and
    allowed to be NaN, where ``r < tau``).  Pass ``fov_logit`` instead of
    ``y_fov`` for a numerically stable BCE.  ``weight`` zeroes padded windows.
    """
    r = torch.as_tensor(r, dtype=p_hat.dtype)
    if fov_logit is not None:
        l_fov = F.binary_cross_entropy_with_logits(fov_logit, r, reduction="none")
    else:
        l_fov = F.binary_cross_entropy(y_fov, r, reduction="none")
    gate = r >= tau
    target = torch.where(gate[..., None], torch.as_tensor(p_avg, dtype=p_hat.dtype), p_hat.detach())
    sq = ((p_hat - target) ** 2).sum(dim=-1)
    l_pos = torch.where(gate, sq, torch.zeros_like(sq))
    l_sum = lambda_fov * l_fov + lambda_pos * l_pos
    if weight is not None:
        w = torch.as_tensor(weight, dtype=p_hat.dtype)
        l_fov, l_pos, l_sum = l_fov * w, l_pos * w, l_sum * w
    return l_fov, l_pos, l_sum

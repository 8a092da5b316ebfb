"""Packet-level transformer that scores every packet as a frame boundary."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from ..errors import InvalidConfig, ShapeError
from ..netem import PacketTrace

N_FEATURES = 2


@dataclass
class Stage1Config:
    window_len: int = 256
    stride: int = 128
    lambda_count: float = 0.1
    layers: int = 4
    embed_dim: int = 16
    ff_dim: int = 16
    heads: int = 1
    threshold: float = 0.5
    payload_bytes: int = 1400
    lr: float = 1e-3
    epochs: int = 8
    batch_size: int = 8
    # The count weight ramps linearly from 0 to lambda_count over these epochs.
    lambda_warmup_epochs: int = 3

    def __post_init__(self):
        if self.window_len < 1 or self.stride < 1:
            raise InvalidConfig("window_len and stride must be positive")
        if self.stride > self.window_len:
            raise InvalidConfig("stride must not exceed window_len")
        if self.embed_dim % self.heads:
            raise InvalidConfig("embed_dim must be divisible by heads")
        if self.lambda_count < 0:
            raise InvalidConfig("lambda_count must be >= 0")

    def to_dict(self):
        return asdict(self)


def packet_features(trace: PacketTrace, payload_bytes: int = 1400) -> np.ndarray:
    """``(N, 2)`` features: size / payload and ``log(1 + gap / 1 ms)`` of arrival gaps."""
    gaps = np.diff(trace.arrive_t, prepend=trace.arrive_t[:1]) if len(trace) else np.zeros(0)
    gaps = np.maximum(gaps, 0.0)
    return np.column_stack([trace.size / float(payload_bytes), np.log1p(gaps / 1e-3)])


def window_starts(n: int, window_len: int, stride: int) -> list[int]:
    """Starts of overlapping windows; the last one is right-padded if it runs past ``n``."""
    starts = [0]
    while starts[-1] + window_len < n:
        starts.append(starts[-1] + stride)
    return starts


def make_windows(feats: np.ndarray, window_len: int, stride: int, labels=None):
    """Cut features (and optional labels) into padded windows.

    Returns ``(x, mask, y, starts)`` with ``mask`` True on real packets.
    """
    n = len(feats)
    starts = window_starts(n, window_len, stride)
    x = np.zeros((len(starts), window_len, feats.shape[1]))
    mask = np.zeros((len(starts), window_len), dtype=bool)
    y = np.zeros((len(starts), window_len))
    for w, s in enumerate(starts):
        e = min(s + window_len, n)
        x[w, :e - s] = feats[s:e]
        mask[w, :e - s] = True
        if labels is not None:
            y[w, :e - s] = labels[s:e]
    return x, mask, y, starts


class BoundaryDetector(nn.Module):
    def __init__(self, cfg: Stage1Config):
        super().__init__()
        self.window_len = cfg.window_len
        d = cfg.embed_dim
        self.embed = nn.Linear(N_FEATURES, d)
        self.pos = nn.Embedding(cfg.window_len, d)
        layer = nn.TransformerEncoderLayer(d, cfg.heads, cfg.ff_dim, dropout=0.0,
                                           activation="gelu", batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, cfg.layers, enable_nested_tensor=False)
        self.head = nn.Sequential(nn.Linear(d, d), nn.GELU(), nn.Linear(d, 1))

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        """Logits ``(B, L)`` for features ``(B, L, 2)``; ``mask`` marks real packets."""
        if x.dim() == 2:
            x = x.unsqueeze(0)
            mask = None if mask is None else mask.unsqueeze(0)
        if x.shape[1] != self.window_len or x.shape[2] != N_FEATURES:
            raise ShapeError(f"expected windows of shape (*, {self.window_len}, {N_FEATURES}), "
                             f"got {tuple(x.shape)}")
        if mask is None:
            mask = torch.ones(x.shape[:2], dtype=torch.bool)
        h = self.embed(x) + self.pos.weight[None]
        # Fully padded windows would give NaN attention rows; let them attend to themselves.
        empty = ~mask.any(dim=1)
        pad = ~mask
        if empty.any():
            pad = pad.clone()
            pad[empty] = False
        h = self.encoder(h, src_key_padding_mask=pad)
        return self.head(h).squeeze(-1)


def stage1_forward(feats, model: BoundaryDetector, mask=None) -> torch.Tensor:
    """Logits for the real (unmasked) packets of one window."""
    x = torch.as_tensor(np.asarray(feats), dtype=next(model.parameters()).dtype)
    m = torch.ones(x.shape[0], dtype=torch.bool) if mask is None else torch.as_tensor(mask)
    logits = model(x, m)[0]
    return logits[m]

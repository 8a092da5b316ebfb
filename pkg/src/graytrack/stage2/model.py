"""Transformer tracker with a recurrent state token."""

from __future__ import annotations

import torch
from torch import nn

from ..errors import ShapeError
from .labels import Stage2Config

BLUE_FEATURES = 4


def _mlp_head(d: int, out: int) -> nn.Sequential:
    return nn.Sequential(nn.LayerNorm(d), nn.Linear(d, d), nn.GELU(), nn.Linear(d, out))


class TokenEncoder(nn.Module):
    """Embeds node tokens (plus one leading slot token) and runs the encoder stack."""

    def __init__(self, cfg: Stage2Config):
        super().__init__()
        d = cfg.embed_dim
        self.cfg = cfg
        self.gray_embed = nn.Linear(1, d)
        self.blue_embed = nn.Linear(BLUE_FEATURES, d)
        self.time_embed = nn.Embedding(cfg.T_in, d)
        self.node_embed = nn.Embedding(cfg.n_nodes, d)
        self.slot_embed = nn.Parameter(torch.zeros(d))
        layer = nn.TransformerEncoderLayer(d, cfg.heads, cfg.ff_dim, dropout=0.0,
                                           activation="gelu", batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, cfg.layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(d)

    def node_tokens(self, gray: torch.Tensor, blue: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        B = gray.shape[0]
        if gray.shape[1:] != (cfg.T_in, cfg.n_gray) or blue.shape[1:] != (cfg.T_in, cfg.n_blue, BLUE_FEATURES):
            raise ShapeError(f"expected gray (B, {cfg.T_in}, {cfg.n_gray}) and blue "
                             f"(B, {cfg.T_in}, {cfg.n_blue}, {BLUE_FEATURES}); got "
                             f"{tuple(gray.shape)} and {tuple(blue.shape)}")
        parts = []
        if cfg.n_gray:
            parts.append(self.gray_embed(gray.unsqueeze(-1)))  # (B, T, N_G, d)
        if cfg.n_blue:
            parts.append(self.blue_embed(blue))  # (B, T, N_B, d)
        tok = torch.cat(parts, dim=2)
        tok = tok + self.time_embed.weight[None, :, None, :] + self.node_embed.weight[None, None]
        return tok.reshape(B, cfg.T_in * cfg.n_nodes, -1)

    def forward(self, gray, blue, slot: torch.Tensor) -> torch.Tensor:
        """Encoder output at the slot position, ``(B, d)``."""
        tok = self.node_tokens(gray, blue)
        x = torch.cat([(slot + self.slot_embed).unsqueeze(1), tok], dim=1)
        return self.norm(self.encoder(x)[:, 0])


class Tracker(nn.Module):
    def __init__(self, cfg: Stage2Config):
        super().__init__()
        self.cfg = cfg
        self.body = TokenEncoder(cfg)
        self.fov_head = _mlp_head(cfg.embed_dim, 1)
        self.pos_head = _mlp_head(cfg.embed_dim, 2)

    def initial_state(self, batch: int = 1) -> torch.Tensor:
        p = next(self.parameters())
        return torch.zeros(batch, self.cfg.embed_dim, dtype=p.dtype)

    def head_parameters(self):
        return list(self.fov_head.parameters()) + list(self.pos_head.parameters())

    def forward(self, gray, blue, state):
        """Returns ``(fov_logit (B,), p_hat (B, 2), next_state (B, d))``.

        ``p_hat`` is in region-normalised coordinates.
        """
        h = self.body(gray, blue, state)
        return self.fov_head(h).squeeze(-1), self.pos_head(h), h


def tracker_forward(gray, blue, state, model: Tracker):
    """Single-window step: ``(y_fov, p_hat, next_state)`` with ``y_fov`` a probability."""
    logit, p_hat, nxt = model(gray, blue, state)
    return torch.sigmoid(logit), p_hat, nxt

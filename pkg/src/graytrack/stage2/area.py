"""Frame sizes → per-node silhouette area, and localisation from those areas."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from ..errors import DegenerateGeometry, DegenerateView, EmptyDataset, InvalidConfig, NoConvergence, ShapeError
from ..geometry import localize_from_areas

log = logging.getLogger(__name__)


@dataclass
class AreaConfig:
    context: int = 120  # frames of size history around each label span
    T_avg: int = 6
    layers: int = 2
    embed_dim: int = 32
    ff_dim: int = 64
    heads: int = 2
    lr: float = 1e-3
    epochs: int = 30
    batch_size: int = 64

    def __post_init__(self):
        if self.context < self.T_avg:
            raise InvalidConfig("context must cover the label span")
        if self.embed_dim % self.heads:
            raise InvalidConfig("embed_dim must be divisible by heads")

    def to_dict(self):
        return asdict(self)


def context_windows(values: np.ndarray, starts: np.ndarray, cfg: AreaConfig):
    """Cut ``(T, N)`` per-node series into ``(W, N, context)`` windows centred on
    ``[t_n, t_n + T_avg)``; returns ``(windows, mask)`` with zero padding at the edges."""
    T, N = values.shape
    off = (cfg.context - cfg.T_avg) // 2
    idx = np.asarray(starts)[:, None] - off + np.arange(cfg.context)[None, :]
    mask = (idx >= 0) & (idx < T)
    win = values[np.clip(idx, 0, max(T - 1, 0))] * mask[..., None]
    return np.transpose(win, (0, 2, 1)), np.broadcast_to(mask[:, None, :], win.shape[:1] + (N, cfg.context)).copy()


def span_mean(values: np.ndarray, starts: np.ndarray, T_avg: int) -> np.ndarray:
    """Mean of ``(T, N)`` values over ``[t_n, t_n + T_avg)`` per window → ``(W, N)``."""
    idx = np.asarray(starts)[:, None] + np.arange(T_avg)[None, :]
    return values[idx].mean(axis=1)


class AreaRegressor(nn.Module):
    """Encoder over one node's size history with a scalar readout per node."""

    def __init__(self, cfg: AreaConfig, n_nodes: int, area_scale: float = 1.0):
        super().__init__()
        d = cfg.embed_dim
        self.cfg = cfg
        self.n_nodes = n_nodes
        self.register_buffer("area_scale", torch.tensor(float(area_scale)))
        self.size_embed = nn.Linear(1, d)
        self.time_embed = nn.Embedding(cfg.context, d)
        self.node_embed = nn.Embedding(n_nodes, d)
        self.readout = nn.Parameter(torch.zeros(d))
        layer = nn.TransformerEncoderLayer(d, cfg.heads, cfg.ff_dim, dropout=0.0,
                                           activation="gelu", batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, cfg.layers, enable_nested_tensor=False)
        self.head = nn.Sequential(nn.LayerNorm(d), nn.Linear(d, d), nn.GELU(), nn.Linear(d, 1))

    def forward(self, sizes: torch.Tensor, mask: torch.Tensor, node: torch.Tensor) -> torch.Tensor:
        """``sizes``/``mask`` ``(B, context)``, ``node`` ``(B,)`` → area in scaled units ``(B,)``."""
        if sizes.dim() != 2 or sizes.shape[1] != self.cfg.context:
            raise ShapeError(f"expected (B, {self.cfg.context}) size windows, got {tuple(sizes.shape)}")
        tok = self.size_embed(sizes.unsqueeze(-1)) + self.time_embed.weight[None]
        lead = (self.readout + self.node_embed(node)).unsqueeze(1)
        x = torch.cat([lead, tok], dim=1)
        pad = torch.cat([torch.zeros_like(mask[:, :1]), ~mask], dim=1)
        return self.head(self.encoder(x, src_key_padding_mask=pad)[:, 0]).squeeze(-1)


@dataclass
class AreaSamples:
    sizes: np.ndarray  # (S, context) normalised sizes
    mask: np.ndarray
    node: np.ndarray
    target: np.ndarray  # (S,) area

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        if not parts:
            raise EmptyDataset("no area samples")
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                     ("sizes", "mask", "node", "target")))


def area_samples(sizes: np.ndarray, areas: np.ndarray | None, starts, cfg: AreaConfig) -> AreaSamples:
    """Flatten one scene: ``sizes`` ``(T, N)`` normalised, ``areas`` ``(T, N)`` or None."""
    win, mask = context_windows(sizes, starts, cfg)
    W, N, _ = win.shape
    target = span_mean(areas, starts, cfg.T_avg).reshape(-1) if areas is not None else np.zeros(W * N)
    return AreaSamples(win.reshape(W * N, cfg.context), mask.reshape(W * N, cfg.context),
                       np.tile(np.arange(N), W), target)


@dataclass
class AreaResult:
    model: AreaRegressor
    cfg: AreaConfig
    seed: int
    loss_curve: list = field(default_factory=list)


def train_area_regressor(samples: AreaSamples, cfg: AreaConfig, n_nodes: int, seed: int = 0,
                         epochs: int | None = None) -> AreaResult:
    if len(samples.target) == 0:
        raise EmptyDataset("no area samples")
    scale = float(max(samples.target.max(), 1e-12))
    torch.manual_seed(seed)
    model = AreaRegressor(cfg, n_nodes, scale)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(seed)
    x = torch.as_tensor(samples.sizes, dtype=torch.float32)
    m = torch.as_tensor(samples.mask)
    k = torch.as_tensor(samples.node, dtype=torch.long)
    y = torch.as_tensor(samples.target / scale, dtype=torch.float32)
    curve = []
    for epoch in range(cfg.epochs if epochs is None else epochs):
        order = torch.randperm(len(y), generator=gen)
        total = 0.0
        for b in range(0, len(order), cfg.batch_size):
            idx = order[b:b + cfg.batch_size]
            loss = ((model(x[idx], m[idx], k[idx]) - y[idx]) ** 2).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        curve.append(total / len(y))
        log.info("area epoch %d loss %.6g", epoch, curve[-1])
    model.eval()
    return AreaResult(model, cfg, seed, curve)


@torch.no_grad()
def area_from_frame_sizes(sizes: np.ndarray, starts, model: AreaRegressor) -> np.ndarray:
    """Per-window, per-node area estimates ``(W, N)`` from normalised sizes ``(T, N)``."""
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.ndim != 2 or sizes.shape[1] != model.n_nodes:
        raise ShapeError(f"expected (T, {model.n_nodes}) sizes, got {sizes.shape}")
    s = area_samples(sizes, None, starts, model.cfg)
    model.eval()
    out = model(torch.as_tensor(s.sizes, dtype=torch.float32), torch.as_tensor(s.mask),
                torch.as_tensor(s.node, dtype=torch.long))
    est = np.clip(out.double().numpy(), 0.0, None) * float(model.area_scale)
    return est.reshape(len(starts), sizes.shape[1])


def geometric_track(areas: np.ndarray, cams, r: float, z_known: float, region,
                    min_area: float = 0.0, init=None):
    """Localise every window from its per-node areas, warm-starting at the previous fix.

    Nodes with area ``<= min_area`` are treated as not seeing the target; windows
    with fewer than two such nodes, or where the solver fails, stay NaN.
    """
    areas = np.asarray(areas, dtype=np.float64)
    bounds = region.as_tuple()
    prev = np.array([*region.centroid, z_known]) if init is None else np.asarray(init, float)
    out = np.full((len(areas), 3), np.nan)
    for n, row in enumerate(areas):
        seen = [(k, a) for k, a in enumerate(row) if a > min_area]
        if len(seen) < 2:
            continue
        try:
            fix = localize_from_areas(seen, cams, r, z_known, prev, region=bounds, seed=n)
        except (NoConvergence, DegenerateGeometry, DegenerateView):
            continue
        out[n] = fix.position
        prev = fix.position
    return out

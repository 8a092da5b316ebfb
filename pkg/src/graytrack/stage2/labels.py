"""Tracker configuration, per-window labels and token streams."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..codec import CameraObservation, FrameSizeSequence
from ..errors import InvalidConfig, ShapeError, TrackTooShort
from ..scenesim import GroundTruthTrack


@dataclass
class Stage2Config:
    T_in: int = 20
    T_stride: int = 10
    T_avg: int = 6
    tau: float = 5.0 / 6.0
    f_detach: int = 4
    lambda_fov: float = 1.0
    lambda_pos: float = 1.0
    layers: int = 8
    embed_dim: int = 128
    ff_dim: int = 512
    heads: int = 4
    n_gray: int = 4
    n_blue: int = 0
    use_state: bool = True
    lr_encoder: float = 2e-5
    lr_heads: float = 1e-4
    epochs: int = 30
    batch_size: int = 8
    lr_schedule: str = "constant"  # or "cosine" (per-epoch decay to 0)

    def __post_init__(self):
        if min(self.T_in, self.T_stride, self.T_avg, self.f_detach) < 1:
            raise InvalidConfig("window sizes and f_detach must be positive")
        if self.T_avg > self.T_in or self.T_stride > self.T_in:
            raise InvalidConfig("T_avg and T_stride must not exceed T_in")
        if not 0 < self.tau <= 1:
            raise InvalidConfig("tau must lie in (0, 1]")
        if self.embed_dim % self.heads:
            raise InvalidConfig("embed_dim must be divisible by heads")
        if self.lr_schedule not in ("constant", "cosine"):
            raise InvalidConfig(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.n_gray < 0 or self.n_blue < 0 or self.n_gray + self.n_blue == 0:
            raise InvalidConfig("need at least one gray or blue node")

    @property
    def n_nodes(self) -> int:
        return self.n_gray + self.n_blue

    def to_dict(self):
        return asdict(self)


ENCODER_PRESETS = {
    "paper": dict(layers=8, embed_dim=128, ff_dim=512, heads=4),
    "desk": dict(layers=2, embed_dim=32, ff_dim=64, heads=2, lr_encoder=1e-3, lr_heads=1e-3),
}


def desk_config(**kw) -> Stage2Config:
    return Stage2Config(**{**ENCODER_PRESETS["desk"], **kw})


def window_starts(n_frames: int, T_in: int, T_stride: int) -> np.ndarray:
    """Start frames of every full input window."""
    if n_frames < T_in:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, n_frames - T_in + 1, T_stride, dtype=np.int64)


@dataclass
class TrackWindowLabel:
    r: float
    p_avg: np.ndarray | None


@dataclass
class WindowLabels:
    """Labels for all windows of one track; ``p_avg`` rows are NaN where absent."""

    starts: np.ndarray
    r: np.ndarray
    p_avg: np.ndarray

    def __len__(self):
        return len(self.r)

    def __getitem__(self, n) -> TrackWindowLabel:
        p = None if self.r[n] == 0 else self.p_avg[n].copy()
        return TrackWindowLabel(float(self.r[n]), p)


def make_labels(track: GroundTruthTrack, cfg: Stage2Config) -> WindowLabels:
    """Visible fraction and mean visible position over ``[t_n, t_n + T_avg)``."""
    if track.n_frames < cfg.T_in:
        raise TrackTooShort(f"track has {track.n_frames} frames, need {cfg.T_in}")
    starts = window_starts(track.n_frames, cfg.T_in, cfg.T_stride)
    vis = track.any_visible
    idx = starts[:, None] + np.arange(cfg.T_avg)[None, :]
    v = vis[idx]
    count = v.sum(axis=1)
    r = count / cfg.T_avg
    xy = track.positions[idx, :2]
    with np.errstate(invalid="ignore"):
        p = (xy * v[..., None]).sum(axis=1) / count[:, None]
    p[count == 0] = np.nan
    return WindowLabels(starts, r, p)


# --- tokens ------------------------------------------------------------------

@dataclass
class GrayNormalizer:
    """Per-node z-score of frame sizes, fitted on training sequences."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, size_matrices) -> "GrayNormalizer":
        stacked = np.concatenate([np.asarray(s, dtype=np.float64) for s in size_matrices], axis=0)
        if stacked.ndim != 2:
            raise ShapeError("expected (frames, nodes) size matrices")
        std = stacked.std(axis=0)
        return cls(stacked.mean(axis=0), np.where(std > 0, std, 1.0))

    def __call__(self, sizes) -> np.ndarray:
        return (np.asarray(sizes, dtype=np.float64) - self.mean) / self.std

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"]), np.asarray(d["std"]))


@dataclass
class TokenStream:
    """Per-frame node inputs: gray ``(T, N_G)`` normalised sizes, blue ``(T, N_B, 4)``."""

    gray: np.ndarray
    blue: np.ndarray

    def __post_init__(self):
        self.gray = np.asarray(self.gray, dtype=np.float64)
        self.blue = np.asarray(self.blue, dtype=np.float64)
        if self.gray.ndim != 2 or self.blue.ndim != 3 or self.blue.shape[2] != 4:
            raise ShapeError("gray must be (T, N_G) and blue (T, N_B, 4)")
        if len(self.gray) != len(self.blue):
            raise ShapeError("gray and blue streams differ in length")

    @property
    def n_frames(self) -> int:
        return len(self.gray)

    def windows(self, cfg: Stage2Config):
        """``(gray (W, T_in, N_G), blue (W, T_in, N_B, 4), starts)``."""
        if self.gray.shape[1] != cfg.n_gray or self.blue.shape[1] != cfg.n_blue:
            raise ShapeError(f"stream has {self.gray.shape[1]} gray / {self.blue.shape[1]} blue "
                             f"nodes, config expects {cfg.n_gray} / {cfg.n_blue}")
        starts = window_starts(self.n_frames, cfg.T_in, cfg.T_stride)
        idx = starts[:, None] + np.arange(cfg.T_in)[None, :]
        return self.gray[idx], self.blue[idx], starts


def frame_size_matrix(frames: list[FrameSizeSequence], nodes) -> np.ndarray:
    """Stack the chosen nodes' sizes into ``(T, len(nodes))``, truncating to the shortest."""
    if not nodes:
        return np.zeros((min((len(f) for f in frames), default=0), 0))
    n = min(len(frames[k]) for k in nodes)
    return np.column_stack([frames[k].sizes[:n] for k in nodes]).astype(np.float64)


def build_stream(frames: list[FrameSizeSequence], observations: list[CameraObservation],
                 gray_nodes, blue_nodes, normalizer: GrayNormalizer | None) -> TokenStream:
    sizes = frame_size_matrix(frames, list(gray_nodes))
    gray = normalizer(sizes) if normalizer is not None and sizes.shape[1] else sizes
    T = len(gray) if len(gray_nodes) else len(observations[blue_nodes[0]].blue)
    blue = np.stack([observations[k].blue[:T] for k in blue_nodes], axis=1) if blue_nodes \
        else np.zeros((T, 0, 4))
    return TokenStream(gray[:T], blue)

"""GOP-structured frame-size surrogate driven by silhouette innovation."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, InvariantError, ParseError, SchemaError
from .geometry import CameraModel, SilhouetteMask, SphereTarget, empty_mask, silhouette_mask
from .scenesim import GroundTruthTrack, frame_times


@dataclass(frozen=True)
class GopConfig:
    gop_length: int = 30

    def __post_init__(self):
        if int(self.gop_length) < 1:
            raise InvalidConfig("gop_length must be >= 1")

    def frame_types(self, n: int) -> np.ndarray:
        return np.where(np.arange(n) % self.gop_length == 0, "I", "P")


@dataclass(frozen=True)
class FrameSizeModelConfig:
    i_base_bytes: float = 20000.0
    i_area_coeff: float = 2.0
    p_base_bytes: float = 800.0
    p_innovation_coeff: float = 4.0
    noise_rel_std: float = 0.05
    min_frame_bytes: int = 200

    def __post_init__(self):
        for name in ("i_base_bytes", "i_area_coeff", "p_base_bytes", "p_innovation_coeff",
                     "noise_rel_std"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be >= 0")
        if int(self.min_frame_bytes) < 1:
            raise InvalidConfig("min_frame_bytes must be >= 1")


@dataclass
class FrameSizeSequence:
    """Per-frame byte counts; ``frame_types`` is None for reconstructed sequences."""

    sizes: np.ndarray
    t_s: np.ndarray
    frame_types: np.ndarray | None = None

    def __post_init__(self):
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        self.t_s = np.asarray(self.t_s, dtype=np.float64)
        if self.frame_types is not None:
            self.frame_types = np.asarray(self.frame_types, dtype="<U1")
            if len(self.frame_types) != len(self.sizes):
                raise InvalidConfig("frame_types length mismatch")
        if len(self.t_s) != len(self.sizes):
            raise InvalidConfig("timestamp length mismatch")

    def __len__(self):
        return len(self.sizes)

    @property
    def typed(self) -> bool:
        return self.frame_types is not None

    def __eq__(self, other):
        if not isinstance(other, FrameSizeSequence):
            return NotImplemented
        same_types = (self.frame_types is None and other.frame_types is None) or (
            self.frame_types is not None and other.frame_types is not None
            and np.array_equal(self.frame_types, other.frame_types))
        return same_types and np.array_equal(self.sizes, other.sizes) and np.array_equal(self.t_s, other.t_s)


# --- rendering ---------------------------------------------------------------

def _overlap(a: SilhouetteMask, b: SilhouetteMask) -> int:
    if a.count == 0 or b.count == 0:
        return 0
    r0, c0 = max(a.row0, b.row0), max(a.col0, b.col0)
    r1 = min(a.row0 + a.mask.shape[0], b.row0 + b.mask.shape[0])
    c1 = min(a.col0 + a.mask.shape[1], b.col0 + b.mask.shape[1])
    if r0 >= r1 or c0 >= c1:
        return 0
    sa = a.mask[r0 - a.row0:r1 - a.row0, c0 - a.col0:c1 - a.col0]
    sb = b.mask[r0 - b.row0:r1 - b.row0, c0 - b.col0:c1 - b.col0]
    return int(np.count_nonzero(sa & sb))


def xor_area(a: SilhouetteMask, b: SilhouetteMask) -> float:
    """Symmetric-difference area of two masks rendered on the same grid."""
    return (a.count + b.count - 2 * _overlap(a, b)) * a.cell_area


def _frame_mask(center, radius, cam, resolution) -> SilhouetteMask:
    pc = cam.to_camera(center)
    if pc[2] <= radius:
        return empty_mask(cam, resolution)
    return silhouette_mask(SphereTarget(center, radius), cam, resolution)


@dataclass
class CameraObservation:
    """What one camera sees of a track, frame by frame."""

    area: np.ndarray  # clipped silhouette area, image-plane units^2
    innovation: np.ndarray
    blue: np.ndarray  # (T, 4): visible flag, centroid_u / W, centroid_v / H, area / (W * H)


def observe(track: GroundTruthTrack, cam: CameraModel, cam_index: int = 0,
            resolution=None) -> CameraObservation:
    n = track.n_frames
    area = np.zeros(n)
    innovation = np.zeros(n)
    blue = np.zeros((n, 4))
    frame_area = 4.0 * cam.half_width * cam.half_height
    prev = None
    for t in range(n):
        m = _frame_mask(track.positions[t], track.radius, cam, resolution)
        area[t] = m.area
        innovation[t] = m.area if prev is None else xor_area(prev, m)
        if m.count:
            cu, cv = m.centroid()
            blue[t, 1] = (cu + cam.half_width) / (2 * cam.half_width)
            blue[t, 2] = (cv + cam.half_height) / (2 * cam.half_height)
            blue[t, 3] = m.area / frame_area
        blue[t, 0] = float(track.visible[t, cam_index]) if track.visible.shape[1] > cam_index else 0.0
        prev = m
    return CameraObservation(area, innovation, blue)


def innovation_signal(track: GroundTruthTrack, cam: CameraModel, resolution=None) -> np.ndarray:
    """Per-frame XOR area of consecutive silhouette masks (frame 0: its full area)."""
    return observe(track, cam, resolution=resolution).innovation


def encode_frame_sizes(innovation, silhouette_area, gop: GopConfig, model: FrameSizeModelConfig,
                       rng_seed, fps: float = 30.0) -> FrameSizeSequence:
    innovation = np.asarray(innovation, dtype=np.float64)
    silhouette_area = np.asarray(silhouette_area, dtype=np.float64)
    if innovation.shape != silhouette_area.shape:
        raise InvalidConfig("innovation and area must have equal length")
    n = len(innovation)
    types = gop.frame_types(n)
    is_i = types == "I"
    clean = np.where(is_i, model.i_base_bytes + model.i_area_coeff * silhouette_area,
                     model.p_base_bytes + model.p_innovation_coeff * innovation)
    rng = np.random.default_rng(rng_seed)
    noisy = clean * (1.0 + model.noise_rel_std * rng.standard_normal(n))
    sizes = np.maximum(np.rint(noisy), model.min_frame_bytes).astype(np.int64)
    return FrameSizeSequence(sizes, frame_times(n, fps), types)


# --- CSV ---------------------------------------------------------------------

FRAME_COLUMNS = ["frame_idx", "t_s", "size_bytes", "frame_type"]


def export_frame_sizes(seq: FrameSizeSequence, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(FRAME_COLUMNS) + "\n")
        types = seq.frame_types if seq.typed else [""] * len(seq)
        for i, (t, s, ft) in enumerate(zip(seq.t_s, seq.sizes, types)):
            fh.write(f"{i},{t:.9f},{s},{ft}\n")


def import_frame_sizes(path) -> FrameSizeSequence:
    """Parse a frame-size CSV.  Line numbers in errors count data rows from 1."""
    sizes, times, types = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError("empty file")
        missing = [c for c in FRAME_COLUMNS if c not in [h.strip() for h in header]]
        if missing:
            raise SchemaError(f"missing columns: {', '.join(missing)}")
        col = {h.strip(): i for i, h in enumerate(header)}
        for line, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                t = float(row[col["t_s"]])
                s = int(row[col["size_bytes"]])
                ft = row[col["frame_type"]].strip()
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line) from exc
            if s < 0:
                raise InvariantError("size_bytes must be non-negative", line)
            if ft not in ("I", "P", ""):
                raise ParseError(f"unknown frame_type {ft!r}", line)
            if times and t <= times[-1] and (ft or t < times[-1]):
                raise InvariantError("timestamps must increase", line)
            sizes.append(s)
            times.append(t)
            types.append(ft)
    typed = bool(types) and all(types)
    if any(types) and not typed:
        raise SchemaError("frame_type must be given for every row or for none")
    return FrameSizeSequence(np.array(sizes, dtype=np.int64), np.array(times),
                             np.array(types) if typed else None)


BLUE_COLUMNS = ["frame_idx", "visible", "centroid_u", "centroid_v", "area_frac"]


def export_blue_features(blue: np.ndarray, path) -> None:
    """Per-frame blue-node features ``(T, 4)`` as CSV."""
    blue = np.asarray(blue, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(BLUE_COLUMNS) + "\n")
        for i, (v, u, w, a) in enumerate(blue):
            fh.write(f"{i},{int(v)},{u:.9f},{w:.9f},{a:.12g}\n")


def import_blue_features(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != BLUE_COLUMNS:
            raise SchemaError(f"expected header {','.join(BLUE_COLUMNS)}")
        for line, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                rows.append([float(x) for x in row[1:5]])
                if len(row) != 5:
                    raise IndexError("expected 5 columns")
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line) from exc
            if rows[-1][0] not in (0.0, 1.0):
                raise ParseError("visible must be 0 or 1", line)
    return np.array(rows).reshape(-1, 4)

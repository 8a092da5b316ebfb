"""Constant-velocity sphere scenes, per-camera visibility and GPS-style label noise."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidConfig, InvariantError, ParseError, SchemaError
from .geometry import CameraModel, visible_mask


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle in the plane of motion (metres)."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise InvalidConfig(f"empty region {self}")

    @property
    def centroid(self) -> np.ndarray:
        return np.array([(self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2])

    @property
    def size(self) -> np.ndarray:
        return np.array([self.x_max - self.x_min, self.y_max - self.y_min])

    def as_tuple(self):
        return (self.x_min, self.x_max, self.y_min, self.y_max)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([rng.uniform(self.x_min, self.x_max), rng.uniform(self.y_min, self.y_max)])

    def normalize(self, xy):
        """Affine map of the region onto ``[-1, 1]^2``."""
        return 2.0 * (np.asarray(xy) - [self.x_min, self.y_min]) / self.size - 1.0

    def denormalize(self, uv):
        return (np.asarray(uv) + 1.0) / 2.0 * self.size + [self.x_min, self.y_min]


@dataclass
class ScenarioConfig:
    cameras: list
    region: Region
    z_known: float
    target_radius: float
    fps: float = 30.0
    duration_frames: int = 300
    seed: int = 0
    speed_range: tuple = (0.5, 2.0)
    # Frames prepended/appended along the direction of travel (occlusion-gap mode).
    pad_frames: int = 0
    # Tracks shorter than this are resampled from the same generator.
    min_frames: int = 1

    def __post_init__(self):
        if not self.cameras:
            raise InvalidConfig("scenario needs at least one camera")
        if not self.fps > 0:
            raise InvalidConfig("fps must be positive")
        if not self.target_radius > 0:
            raise InvalidConfig("target radius must be positive")
        if self.duration_frames < 1 or self.min_frames > self.duration_frames + 2 * self.pad_frames:
            raise InvalidConfig("duration_frames too small")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise InvalidConfig("speed range must satisfy 0 < lo <= hi")
        xs = np.linspace(self.region.x_min, self.region.x_max, 15)
        ys = np.linspace(self.region.y_min, self.region.y_max, 15)
        grid = np.array([[x, y, self.z_known] for x in xs for y in ys])
        for k, cam in enumerate(self.cameras):
            if not visible_mask(cam.to_camera(grid), self.target_radius, cam).any():
                raise InvalidConfig(f"camera {k} sees no point of the region")


@dataclass
class GroundTruthTrack:
    positions: np.ndarray  # (T, 3)
    visible: np.ndarray  # (T, n_cameras) bool
    fps: float
    radius: float

    @property
    def n_frames(self) -> int:
        return len(self.positions)

    @property
    def any_visible(self) -> np.ndarray:
        return self.visible.any(axis=1)

    @property
    def t_s(self) -> np.ndarray:
        return frame_times(self.n_frames, self.fps)

    def visible_bitmask(self) -> np.ndarray:
        weights = 1 << np.arange(self.visible.shape[1], dtype=np.int64)
        return (self.visible.astype(np.int64) * weights).sum(axis=1)


def frame_times(n: int, fps: float) -> np.ndarray:
    """Frame timestamps quantised to whole nanoseconds."""
    return np.rint(np.arange(n) / fps * 1e9) / 1e9


def kinematic_positions(p0, velocity, fps: float, n_frames: int, start: int = 0) -> np.ndarray:
    t = np.arange(start, start + n_frames, dtype=np.float64)[:, None] / fps
    return np.asarray(p0, dtype=np.float64) + t * np.asarray(velocity, dtype=np.float64)


def compute_visibility(positions: np.ndarray, cameras, radius: float) -> np.ndarray:
    cols = [visible_mask(cam.to_camera(positions), radius, cam) for cam in cameras]
    return np.column_stack(cols) if cols else np.zeros((len(positions), 0), bool)


def generate_trajectory(cfg: ScenarioConfig, rng_seed=None) -> GroundTruthTrack:
    """Sample one constant-velocity track between two random points of the region."""
    rng = np.random.default_rng(cfg.seed if rng_seed is None else rng_seed)
    lo, hi = cfg.speed_range
    max_core = cfg.duration_frames
    while True:
        start, end = cfg.region.sample(rng), cfg.region.sample(rng)
        speed = rng.uniform(lo, hi)
        dist = float(np.linalg.norm(end - start))
        n_move = int(math.floor(dist / speed * cfg.fps)) + 1
        n_core = min(n_move, max_core)
        if n_core + 2 * cfg.pad_frames >= cfg.min_frames:
            break
    direction = (end - start) / dist if dist > 0 else np.zeros(2)
    velocity = np.array([*(speed * direction), 0.0])
    p0 = np.array([start[0], start[1], cfg.z_known])
    positions = kinematic_positions(p0, velocity, cfg.fps, n_core + 2 * cfg.pad_frames,
                                    start=-cfg.pad_frames)
    positions[:, 2] = cfg.z_known
    visible = compute_visibility(positions, cfg.cameras, cfg.target_radius)
    return GroundTruthTrack(positions, visible, cfg.fps, cfg.target_radius)


# --- GPS noise ---------------------------------------------------------------

@dataclass(frozen=True)
class GpsNoiseConfig:
    sigma_h: float
    nu: float
    tau_gps: float
    dt: float | None = None  # None: one sample per frame (1/fps)

    def __post_init__(self):
        if not self.nu > 2:
            raise InvalidConfig("Student-t dof must exceed 2 for a finite variance")
        if self.sigma_h < 0 or not self.tau_gps > 0:
            raise InvalidConfig("sigma_h must be >= 0 and tau_gps > 0")
        if self.dt is not None and not self.dt > 0:
            raise InvalidConfig("dt must be positive")

    def phi(self, dt: float | None = None) -> float:
        return math.exp(-(dt if dt is not None else self.dt) / self.tau_gps)

    @property
    def sigma_e(self) -> float:
        """Per-coordinate stationary standard deviation."""
        return self.sigma_h / math.sqrt(2.0)


GPS_PRESETS = {
    "low": GpsNoiseConfig(0.64, 9, 60),
    "medium": GpsNoiseConfig(1.00, 5, 300),
    "high": GpsNoiseConfig(3.70, 5, 300),
}


def ar1_student_t(n: int, cfg: GpsNoiseConfig, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) error series with unit-variance-scaled Student-t drive."""
    phi = cfg.phi(dt)
    sigma_e = cfg.sigma_e
    t_scale = math.sqrt((cfg.nu - 2.0) / cfg.nu)
    sigma_eta = sigma_e * math.sqrt(1.0 - phi * phi)
    e0 = sigma_e * t_scale * rng.standard_t(cfg.nu)
    eta = sigma_eta * t_scale * rng.standard_t(cfg.nu, size=max(n - 1, 0))
    if n == 0:
        return np.zeros(0)
    # e[t+1] = phi * e[t] + eta[t]
    drive = np.concatenate([[e0], eta])
    return lfilter([1.0], [1.0, -phi], drive)


def apply_gps_noise(track: GroundTruthTrack, cfg: GpsNoiseConfig, rng_seed) -> GroundTruthTrack:
    if not cfg.nu > 2:
        raise InvalidConfig("Student-t dof must exceed 2")
    if cfg.sigma_h == 0:
        return replace(track, positions=track.positions.copy())
    dt = cfg.dt if cfg.dt is not None else 1.0 / track.fps
    rng = np.random.default_rng(rng_seed)
    ex = ar1_student_t(track.n_frames, cfg, dt, rng)
    ey = ar1_student_t(track.n_frames, cfg, dt, rng)
    noisy = track.positions.copy()
    noisy[:, 0] += ex
    noisy[:, 1] += ey
    return replace(track, positions=noisy)


# --- CSV ---------------------------------------------------------------------

TRACK_COLUMNS = ["frame_idx", "t_s", "x_m", "y_m", "z_m", "visible_mask"]


def write_track(track: GroundTruthTrack, path) -> None:
    mask = track.visible_bitmask()
    t = track.t_s
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRACK_COLUMNS) + "\n")
        for i, (x, y, z) in enumerate(track.positions):
            fh.write(f"{i},{t[i]:.9f},{x:.9f},{y:.9f},{z:.9f},{mask[i]}\n")


def gps_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name[:-len(".csv")] + ".gps.csv") if path.name.endswith(".csv") \
        else path.with_name(path.name + ".gps.csv")


def read_track(path, n_cameras: int, fps: float, radius: float) -> GroundTruthTrack:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRACK_COLUMNS:
            raise SchemaError(f"expected header {','.join(TRACK_COLUMNS)}")
        for line, row in enumerate(reader, start=1):
            try:
                rows.append((int(row[0]), float(row[1]), float(row[2]), float(row[3]),
                             float(row[4]), int(row[5])))
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line) from exc
            if rows[-1][0] != line - 1:
                raise InvariantError("frame_idx must count up from 0", line)
    if not rows:
        return GroundTruthTrack(np.zeros((0, 3)), np.zeros((0, n_cameras), bool), fps, radius)
    arr = np.array([r[2:5] for r in rows])
    masks = np.array([r[5] for r in rows], dtype=np.int64)
    visible = ((masks[:, None] >> np.arange(n_cameras)) & 1).astype(bool)
    return GroundTruthTrack(arr, visible, fps, radius)

"""Built-in camera rigs and scenario presets."""

from __future__ import annotations

import numpy as np

from .geometry import CameraModel
from .scenesim import Region, ScenarioConfig


def ring_rig(distance: float, height: float, aim_z: float, focal: float,
             width: int = 640, height_px: int = 480, n: int = 4, pixels_per_unit: float = 1.0):
    """``n`` cameras evenly spaced on a circle, all aimed at ``(0, 0, aim_z)``."""
    cams = []
    for k in range(n):
        ang = 2 * np.pi * k / n
        pos = (distance * np.cos(ang), distance * np.sin(ang), height)
        cams.append(CameraModel.look_at(pos, (0.0, 0.0, aim_z), focal, width, height_px,
                                        pixels_per_unit))
    return cams


def genesis_rig():
    """Close-range four-camera rig used for the localisation checks."""
    return ring_rig(6.0, 3.0, 0.5, focal=600.0)


def genesis_scenario(seed: int = 0, **kw) -> ScenarioConfig:
    kw.setdefault("duration_frames", 300)
    return ScenarioConfig(cameras=genesis_rig(), region=Region(-2, 2, -2, 2), z_known=0.5,
                          target_radius=0.5, seed=seed, **kw)


def intersection_rig(blue_focal: float | None = None):
    cams = ring_rig(12.0, 5.0, 1.0, focal=800.0, width=256, height_px=192)
    if blue_focal is not None:
        c = cams[0]
        cams[0] = CameraModel(c.rotation, c.center, blue_focal, c.image_width, c.image_height,
                              c.pixels_per_unit)
    return cams


def intersection_scenario(seed: int = 0, **kw) -> ScenarioConfig:
    """Four gray cameras around a crossing; tracks start and end outside every FoV."""
    kw.setdefault("duration_frames", 300)
    kw.setdefault("pad_frames", 45)
    kw.setdefault("min_frames", 120)
    return ScenarioConfig(cameras=intersection_rig(kw.pop("blue_focal", None)),
                          region=Region(-6, 6, -6, 6), z_known=1.0, target_radius=1.0,
                          seed=seed, **kw)


def fusion_scenario(seed: int = 0, **kw) -> ScenarioConfig:
    """Intersection rig whose first camera has a narrow field of view."""
    return intersection_scenario(seed, blue_focal=1600.0, **kw)


PRESETS = {
    "genesis": genesis_scenario,
    "intersection": intersection_scenario,
    "fusion": fusion_scenario,
}

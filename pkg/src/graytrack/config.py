"""Experiment configuration: one YAML document with units spelled out in the keys."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .codec import FrameSizeModelConfig, GopConfig
from .errors import InvalidConfig
from .geometry import CameraModel
from .netem import NetworkConfig
from .scenes import PRESETS
from .scenesim import GPS_PRESETS, GpsNoiseConfig, Region, ScenarioConfig
from .simulate import CodecSettings, derive_seed
from .stage1.model import Stage1Config
from .stage2.labels import ENCODER_PRESETS, Stage2Config

CODEC_PRESETS = {
    "default": FrameSizeModelConfig(),
    # Same shape as the default model at 8x the byte rate (a few Mbps per camera).
    "hd": FrameSizeModelConfig(160000, 16, 6400, 32),
}

# "off" cameras still define visibility labels but contribute no input stream.
NODE_ROLES = ("gray", "blue", "off")


@dataclass
class SplitConfig:
    train: float = 0.8
    test: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.train < 0 or self.test < 0 or abs(self.train + self.test - 1.0) > 1e-9:
            raise InvalidConfig("split fractions must be non-negative and sum to 1")


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig
    n_scenes: int
    codec: CodecSettings
    network: NetworkConfig
    gps: GpsNoiseConfig | None
    stage1: Stage1Config
    stage1_train_scenes: int
    stage1_train_bandwidths_bps: list
    stage1_seed: int
    stage2: Stage2Config
    stage2_seed: int
    split: SplitConfig
    node_roles: list
    codec_seed: int = 0
    gps_seed: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.n_scenes < 1:
            raise InvalidConfig("n_scenes must be at least 1")
        if len(self.node_roles) != len(self.scenario.cameras):
            raise InvalidConfig(f"{len(self.node_roles)} node roles for "
                                f"{len(self.scenario.cameras)} cameras")
        bad = [r for r in self.node_roles if r not in NODE_ROLES]
        if bad:
            raise InvalidConfig(f"unknown node roles {bad}")
        if not (self.gray_nodes or self.blue_nodes):
            raise InvalidConfig("need at least one gray or blue node")

    @property
    def gray_nodes(self) -> list[int]:
        return [k for k, r in enumerate(self.node_roles) if r == "gray"]

    @property
    def blue_nodes(self) -> list[int]:
        return [k for k, r in enumerate(self.node_roles) if r == "blue"]

    def split_scenes(self) -> tuple[list[int], list[int]]:
        """Deterministic train/test partition of ``range(n_scenes)``."""
        order = np.random.default_rng(derive_seed(self.split.seed, "split")).permutation(self.n_scenes)
        n_train = int(round(self.split.train * self.n_scenes))
        if self.split.test > 0 and n_train == self.n_scenes and self.n_scenes > 1:
            n_train -= 1
        return sorted(order[:n_train].tolist()), sorted(order[n_train:].tolist())


def _camera(entry: dict, i: int) -> CameraModel:
    try:
        pos = entry["position_m"]
        focal = float(entry["focal_px"])
        width, height = int(entry["width_px"]), int(entry["height_px"])
        if "look_at_m" in entry:
            return CameraModel.look_at(pos, entry["look_at_m"], focal, width, height)
        rot = entry["rotation_deg"]
        return CameraModel.from_ypr(pos, rot["yaw"], rot["pitch"], rot["roll"], focal, width, height)
    except KeyError as exc:
        raise InvalidConfig(f"camera {i} is missing {exc.args[0]!r}") from exc


def _coerce(value, default):
    # YAML 1.1 reads "50.0e6" as a string; follow the field's default type instead.
    if isinstance(default, bool) or isinstance(value, bool):
        return value
    if isinstance(default, float):
        return float(value)
    if isinstance(default, int) and not isinstance(value, float):
        return int(value)
    return value


def _fields(cls, section: dict, drop=()) -> dict:
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(section) - set(fields) - set(drop)
    if unknown:
        raise InvalidConfig(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    try:
        return {k: _coerce(v, fields[k].default) for k, v in section.items() if k in fields}
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"bad {cls.__name__} value: {exc}") from exc


def _scenario(sec: dict, seed: int) -> ScenarioConfig:
    sec = dict(sec)
    preset = sec.pop("preset", None)
    kw = {}
    for key, name in (("duration_frames", "duration_frames"), ("fps", "fps"),
                      ("pad_frames", "pad_frames"), ("min_frames", "min_frames")):
        if key in sec:
            kw[name] = sec.pop(key)
    if "speed_range_mps" in sec:
        kw["speed_range"] = tuple(sec.pop("speed_range_mps"))
    seed = sec.pop("seed", seed)
    sec.pop("n_scenes", None)
    if preset is not None:
        if preset not in PRESETS:
            raise InvalidConfig(f"unknown scenario preset {preset!r}")
        if sec:
            raise InvalidConfig(f"preset scenarios take no {sorted(sec)}")
        return PRESETS[preset](seed, **kw)
    try:
        cams = [_camera(c, i) for i, c in enumerate(sec.pop("cameras"))]
        region = Region(*sec.pop("region_m"))
        z_known = float(sec.pop("z_known_m"))
        radius = float(sec.pop("target_radius_m"))
    except KeyError as exc:
        raise InvalidConfig(f"scenario is missing {exc.args[0]!r}") from exc
    if sec:
        raise InvalidConfig(f"unknown scenario keys: {sorted(sec)}")
    return ScenarioConfig(cameras=cams, region=region, z_known=z_known, target_radius=radius,
                          seed=seed, **kw)


def _codec(sec: dict) -> CodecSettings:
    sec = dict(sec)
    preset = sec.pop("preset", "default")
    if preset not in CODEC_PRESETS:
        raise InvalidConfig(f"unknown codec preset {preset!r}")
    gop = GopConfig(int(sec.pop("gop_length", 30)))
    model = dataclasses.replace(CODEC_PRESETS[preset], **_fields(FrameSizeModelConfig, sec,
                                                                  drop=("resolution_px",)))
    return CodecSettings(gop, model, sec.get("resolution_px"))


def _gps(sec: dict | None) -> GpsNoiseConfig | None:
    if not sec:
        return None
    sec = dict(sec)
    preset = sec.pop("preset", None)
    if preset == "none":
        return None
    base = GPS_PRESETS[preset] if preset is not None else None
    if preset is not None and base is None:
        raise InvalidConfig(f"unknown gps preset {preset!r}")
    if base is None:
        return GpsNoiseConfig(**_fields(GpsNoiseConfig, sec))
    return dataclasses.replace(base, **_fields(GpsNoiseConfig, sec))


def from_dict(doc: dict, seed: int | None = None) -> ExperimentConfig:
    """Build and validate an experiment.  ``seed`` overrides the top-level seed."""
    if not isinstance(doc, dict):
        raise InvalidConfig("config must be a mapping")
    base = int(doc.get("seed", 0) if seed is None else seed)
    scen_doc = dict(doc.get("scenario") or {})
    n_scenes = int(scen_doc.get("n_scenes", 10))
    scenario = _scenario(scen_doc, derive_seed(base, "scenario-section"))

    net_doc = dict(doc.get("network") or {})
    net = NetworkConfig(**{**_fields(NetworkConfig, net_doc),
                           "seed": int(net_doc.get("seed", derive_seed(base, "network-section")))})

    s1_doc = dict(doc.get("stage1") or {})
    s1_extra = {k: s1_doc.pop(k) for k in ("n_train_scenes", "train_bandwidths_bps", "seed")
                if k in s1_doc}
    stage1 = Stage1Config(**_fields(Stage1Config, s1_doc))

    roles = list(doc.get("node_roles") or ["gray"] * len(scenario.cameras))
    s2_doc = dict(doc.get("stage2") or {})
    s2_seed = int(s2_doc.pop("seed", derive_seed(base, "stage2-section")))
    preset = s2_doc.pop("encoder_preset", "desk")
    if preset not in ENCODER_PRESETS:
        raise InvalidConfig(f"unknown encoder preset {preset!r}")
    s2_doc.setdefault("n_gray", roles.count("gray"))
    s2_doc.setdefault("n_blue", roles.count("blue"))
    stage2 = Stage2Config(**{**ENCODER_PRESETS[preset], **_fields(Stage2Config, s2_doc)})
    if (stage2.n_gray, stage2.n_blue) != (roles.count("gray"), roles.count("blue")):
        raise InvalidConfig("stage2 n_gray/n_blue disagree with node_roles")

    split_doc = dict(doc.get("split") or {})
    split_doc.setdefault("seed", derive_seed(base, "split-section"))
    codec_doc = dict(doc.get("codec") or {})
    codec_seed = int(codec_doc.pop("seed", derive_seed(base, "codec-section")))
    gps_doc = dict(doc.get("gps") or {"preset": "medium"})
    gps_seed = int(gps_doc.pop("seed", derive_seed(base, "gps-section")))
    return ExperimentConfig(
        scenario=scenario,
        n_scenes=n_scenes,
        codec=_codec(codec_doc),
        network=net,
        gps=_gps(gps_doc),
        stage1=stage1,
        stage1_train_scenes=int(s1_extra.get("n_train_scenes", 20)),
        stage1_train_bandwidths_bps=[float(b) for b in
                                     s1_extra.get("train_bandwidths_bps", [100e6, 50e6, 30e6, 10e6])],
        stage1_seed=int(s1_extra.get("seed", derive_seed(base, "stage1-section"))),
        stage2=stage2,
        stage2_seed=s2_seed,
        split=SplitConfig(**_fields(SplitConfig, split_doc)),
        node_roles=roles,
        codec_seed=codec_seed,
        gps_seed=gps_seed,
        seed=base,
    )


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc
    return from_dict(doc or {}, seed)

"""Scene → frame sizes → packet traces, with every random stream seeded by name."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .codec import (CameraObservation, FrameSizeModelConfig, FrameSizeSequence, GopConfig,
                    encode_frame_sizes, observe)
from .netem import NetworkConfig, PacketTrace, emulate, packetize
from .scenesim import GpsNoiseConfig, GroundTruthTrack, ScenarioConfig, apply_gps_noise, generate_trajectory


def derive_seed(base: int, stream: str, *keys: int) -> int:
    """Stable 63-bit seed for a named random stream."""
    entropy = [int(base) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stream.encode())] + [int(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(2, np.uint64)[0] >> np.uint64(1))


@dataclass
class CodecSettings:
    gop: GopConfig = field(default_factory=GopConfig)
    model: FrameSizeModelConfig = field(default_factory=FrameSizeModelConfig)
    resolution: int | None = None


@dataclass
class SceneData:
    index: int
    track: GroundTruthTrack
    labels_track: GroundTruthTrack
    observations: list[CameraObservation]
    frames: list[FrameSizeSequence]

    @property
    def n_nodes(self) -> int:
        return len(self.frames)


def simulate_scene(scenario: ScenarioConfig, index: int, codec: CodecSettings | None = None,
                   gps: GpsNoiseConfig | None = None, seed: int | None = None) -> SceneData:
    codec = codec or CodecSettings()
    base = scenario.seed if seed is None else seed
    track = generate_trajectory(scenario, derive_seed(base, "scenario", index))
    labels = track if gps is None else apply_gps_noise(track, gps, derive_seed(base, "gps", index))
    obs, frames = [], []
    for k, cam in enumerate(scenario.cameras):
        o = observe(track, cam, k, codec.resolution)
        obs.append(o)
        frames.append(encode_frame_sizes(o.innovation, o.area, codec.gop, codec.model,
                                         derive_seed(base, "codec", index, k), track.fps))
    return SceneData(index, track, labels, obs, frames)


def transmit(frames: FrameSizeSequence, net: NetworkConfig, scene_index: int, node: int) -> PacketTrace:
    pk = packetize(frames, net, node)
    return emulate(pk, net, derive_seed(net.seed, "network", scene_index, node,
                                        int(round(net.bandwidth_bps))))

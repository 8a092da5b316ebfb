import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graytrack.codec import (FrameSizeModelConfig, FrameSizeSequence, GopConfig, encode_frame_sizes,
                             export_blue_features, export_frame_sizes, import_blue_features,
                             import_frame_sizes, innovation_signal, observe, xor_area)
from graytrack.errors import InvalidConfig, InvariantError, ParseError, SchemaError
from graytrack.geometry import SphereTarget, silhouette_mask
from graytrack.scenes import genesis_scenario
from graytrack.scenesim import GroundTruthTrack, compute_visibility, generate_trajectory

NOISELESS = FrameSizeModelConfig(noise_rel_std=0.0)


def _track(positions, cfg):
    positions = np.asarray(positions, dtype=np.float64)
    return GroundTruthTrack(positions, compute_visibility(positions, cfg.cameras, cfg.target_radius),
                            cfg.fps, cfg.target_radius)


def test_static_target_has_no_innovation(genesis):
    tr = _track(np.tile([0.3, -0.2, 0.5], (10, 1)), genesis)
    inn = innovation_signal(tr, genesis.cameras[0])
    assert inn[0] > 0
    assert np.all(inn[1:] == 0)


def test_unseen_target_has_no_innovation(genesis):
    cam = genesis.cameras[0]
    behind = cam.center + 5 * (cam.center - np.array([0, 0, 0.5]))
    behind[2] = 0.5
    tr = _track([behind, behind + [0.1, 0, 0]], genesis)
    np.testing.assert_array_equal(innovation_signal(tr, cam), [0, 0])


def test_fast_motion_changes_more_pixels(genesis):
    cam = genesis.cameras[1]
    rng = np.random.default_rng(0)
    slow, fast = [], []
    for _ in range(100):
        p0 = np.array([*genesis.region.sample(rng), 0.5])
        d = rng.normal(size=2)
        d = np.array([*d / np.linalg.norm(d), 0.0])
        for speed, out in ((0.3, slow), (1.5, fast)):
            tr = _track([p0 + d * speed * t / 30 for t in range(6)], genesis)
            out.append(innovation_signal(tr, cam)[1:].mean())
    assert np.mean(fast) > np.mean(slow)


def test_xor_area_against_full_frame_masks(genesis, rng):
    cam = genesis.cameras[2]
    for _ in range(10):
        a = SphereTarget([*rng.uniform(-1, 1, 2), 0.5], 0.5)
        b = SphereTarget(a.center + [*rng.uniform(-0.2, 0.2, 2), 0], 0.5)
        ma, mb = silhouette_mask(a, cam), silhouette_mask(b, cam)
        full = []
        for m in (ma, mb):
            f = np.zeros(m.grid_shape, bool)
            f[m.row0:m.row0 + m.mask.shape[0], m.col0:m.col0 + m.mask.shape[1]] = m.mask
            full.append(f)
        assert xor_area(ma, mb) == pytest.approx(np.sum(full[0] ^ full[1]) * ma.cell_area)


def test_empty_scene_sizes_are_bases():
    n = 65
    seq = encode_frame_sizes(np.zeros(n), np.zeros(n), GopConfig(30), NOISELESS, 0)
    assert np.all(seq.sizes[seq.frame_types == "I"] == NOISELESS.i_base_bytes)
    assert np.all(seq.sizes[seq.frame_types == "P"] == NOISELESS.p_base_bytes)


def test_gop_positions():
    types = GopConfig(30).frame_types(90)
    np.testing.assert_array_equal(np.flatnonzero(types == "I"), [0, 30, 60])
    with pytest.raises(InvalidConfig):
        GopConfig(0)


@given(st.integers(1, 50), st.integers(1, 200))
def test_gop_periodicity(gop, n):
    types = GopConfig(gop).frame_types(n)
    np.testing.assert_array_equal(types == "I", np.arange(n) % gop == 0)


def test_p_frames_are_affine_in_innovation(genesis):
    tr = generate_trajectory(genesis, 3)
    obs = observe(tr, genesis.cameras[0])
    seq = encode_frame_sizes(obs.innovation, obs.area, GopConfig(30), NOISELESS, 0)
    p = seq.frame_types == "P"
    corr = np.corrcoef(seq.sizes[p], obs.innovation[p])[0, 1]
    assert corr == pytest.approx(1.0, abs=1e-9)


@given(st.lists(st.floats(0, 5000), min_size=2, max_size=40))
def test_noiseless_p_size_strictly_increasing(values):
    inn = np.asarray(values)
    seq = encode_frame_sizes(inn, np.zeros_like(inn), GopConfig(1000), NOISELESS, 0)
    order = np.argsort(inn[1:])
    sizes = seq.sizes[1:][order]
    # Integer rounding can tie values closer than half a byte apart in size.
    assert np.all(np.diff(sizes) >= 0)
    assert np.all(np.abs(seq.sizes[1:] - (NOISELESS.p_base_bytes
                                         + NOISELESS.p_innovation_coeff * inn[1:])) <= 0.5)


@given(st.integers(0, 2 ** 31), st.floats(0, 2.0))
def test_sizes_respect_floor(seed, noise):
    model = FrameSizeModelConfig(noise_rel_std=noise)
    inn = np.random.default_rng(seed).uniform(0, 1000, 100)
    seq = encode_frame_sizes(inn, inn, GopConfig(30), model, seed)
    assert np.all(seq.sizes >= model.min_frame_bytes)


def test_noiseless_encoding_is_deterministic():
    inn = np.linspace(0, 500, 40)
    a = encode_frame_sizes(inn, inn, GopConfig(10), NOISELESS, 1)
    b = encode_frame_sizes(inn, inn, GopConfig(10), NOISELESS, 2)
    assert a == b


def test_timestamps_increase():
    seq = encode_frame_sizes(np.zeros(100), np.zeros(100), GopConfig(30), FrameSizeModelConfig(), 0)
    assert np.all(np.diff(seq.t_s) > 0)
    assert seq.t_s[30] == pytest.approx(1.0)


# --- CSV -----------------------------------------------------------------------

def test_frame_csv_round_trip(tmp_path, genesis):
    tr = generate_trajectory(genesis, 11)
    obs = observe(tr, genesis.cameras[1])
    seq = encode_frame_sizes(obs.innovation, obs.area, GopConfig(30), FrameSizeModelConfig(), 5)
    export_frame_sizes(seq, tmp_path / "f.csv")
    assert import_frame_sizes(tmp_path / "f.csv") == seq


def test_frame_csv_three_lines(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("frame_idx,t_s,size_bytes,frame_type\n0,0.0,100,I\n1,0.1,50,P\n2,0.2,60,P\n")
    seq = import_frame_sizes(p)
    assert len(seq) == 3 and seq.typed


def test_frame_csv_decreasing_timestamp(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("frame_idx,t_s,size_bytes,frame_type\n0,0.5,100,I\n1,0.1,50,P\n")
    with pytest.raises(InvariantError) as err:
        import_frame_sizes(p)
    assert err.value.line == 2


def test_frame_csv_errors(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("frame_idx,t_s,size_bytes\n0,0,1\n")
    with pytest.raises(SchemaError):
        import_frame_sizes(p)
    p.write_text("frame_idx,t_s,size_bytes,frame_type\n0,0,abc,I\n")
    with pytest.raises(ParseError) as err:
        import_frame_sizes(p)
    assert err.value.line == 1
    p.write_text("frame_idx,t_s,size_bytes,frame_type\n0,0,10,B\n")
    with pytest.raises(ParseError):
        import_frame_sizes(p)


def test_untyped_reconstruction_round_trip(tmp_path):
    seq = FrameSizeSequence(np.array([5, 0, 9]), np.array([0.1, 0.1, 0.2]))
    export_frame_sizes(seq, tmp_path / "r.csv")
    back = import_frame_sizes(tmp_path / "r.csv")
    assert back == seq and not back.typed


def test_blue_features_round_trip(tmp_path, genesis):
    tr = generate_trajectory(genesis, 2)
    obs = observe(tr, genesis.cameras[0], 0)
    assert np.all((obs.blue[:, 1:3] >= 0) & (obs.blue[:, 1:3] <= 1))
    export_blue_features(obs.blue, tmp_path / "b.csv")
    np.testing.assert_allclose(import_blue_features(tmp_path / "b.csv"), obs.blue, atol=1e-9)

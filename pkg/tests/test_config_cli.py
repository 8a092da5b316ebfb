import math
import shutil
from pathlib import Path

import pytest
import yaml

from graytrack.cli import main
from graytrack.config import from_dict, load_config
from graytrack.errors import InvalidConfig
from graytrack.evaluation import read_report

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _doc(name="smoke.yaml"):
    return yaml.safe_load((CONFIGS / name).read_text())


def _write(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return path


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# --- config --------------------------------------------------------------------

def test_smoke_config_loads():
    cfg = load_config(CONFIGS / "smoke.yaml")
    assert cfg.network.bandwidth_bps == 50e6
    assert cfg.gray_nodes == [0, 1, 2, 3] and cfg.blue_nodes == []
    train, test = cfg.split_scenes()
    assert sorted(train + test) == list(range(cfg.n_scenes))
    assert not set(train) & set(test)


def test_zero_cameras_rejected_before_work(tmp_path, capsys):
    doc = _doc()
    doc["scenario"] = {"cameras": [], "region_m": [-5, 5, -5, 5], "z_known_m": 1.0,
                       "target_radius_m": 1.0, "n_scenes": 2}
    doc["node_roles"] = []
    with pytest.raises(InvalidConfig):
        from_dict(doc)
    out = tmp_path / "out"
    assert main(["pipeline", "--config", str(_write(tmp_path, doc)), "--out", str(out)]) == 2
    assert "[config]" in capsys.readouterr().err
    assert not out.exists()


def test_explicit_cameras(tmp_path):
    doc = _doc()
    doc["scenario"] = {
        "cameras": [{"position_m": [8, 0, 4], "look_at_m": [0, 0, 1], "focal_px": 500,
                     "width_px": 320, "height_px": 240},
                    {"position_m": [0, 8, 4], "rotation_deg": {"yaw": -90, "pitch": -20, "roll": 0},
                     "focal_px": 500, "width_px": 320, "height_px": 240}],
        "region_m": [-4, 4, -4, 4], "z_known_m": 1.0, "target_radius_m": 0.8, "n_scenes": 3}
    doc["node_roles"] = ["gray", "blue"]
    cfg = from_dict(doc)
    assert cfg.gray_nodes == [0] and cfg.blue_nodes == [1]
    assert cfg.stage2.n_gray == 1 and cfg.stage2.n_blue == 1


@pytest.mark.parametrize("patch", [
    {"network": {"bandwidth_bps": 1e6, "bogus": 1}},
    {"split": {"train": 0.7, "test": 0.7}},
    {"node_roles": ["gray", "red", "gray", "gray"]},
    {"node_roles": ["off", "off", "off", "off"]},
    {"node_roles": ["gray"]},
    {"codec": {"preset": "ultra"}},
    {"stage2": {"encoder_preset": "desk", "n_gray": 3}},
])
def test_invalid_configs(patch):
    doc = {**_doc(), **patch}
    with pytest.raises(InvalidConfig):
        from_dict(doc)


def test_seed_override_derives_section_seeds():
    a, b = from_dict(_doc()), from_dict(_doc(), seed=99)
    assert a.network.seed != b.network.seed and a.codec_seed != b.codec_seed
    doc = _doc()
    doc["network"]["seed"] = 5
    assert from_dict(doc, seed=99).network.seed == 5


def test_yaml_exponent_strings_are_numbers():
    doc = _doc()
    doc["network"]["bandwidth_bps"] = "30.0e6"
    assert from_dict(doc).network.bandwidth_bps == 30e6


# --- CLI -------------------------------------------------------------------------

def test_stage_verbs_are_deterministic(tmp_path):
    cfg = str(CONFIGS / "smoke.yaml")
    for run in ("a", "b"):
        for verb in ("gen", "encode", "netem"):
            assert main([verb, "--config", cfg, "--out", str(tmp_path / run)]) == 0
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a.keys() == b.keys() and a == b
    assert any(k.startswith("traces/") for k in a)


def test_seed_flag_changes_outputs(tmp_path):
    cfg = str(CONFIGS / "smoke.yaml")
    main(["gen", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["gen", "--config", cfg, "--seed", "8", "--out", str(tmp_path / "b")])
    assert _tree(tmp_path / "a") != _tree(tmp_path / "b")


def test_stage_error_names_stage_and_file(tmp_path, capsys):
    cfg = str(CONFIGS / "smoke.yaml")
    out = tmp_path / "out"
    assert main(["gen", "--config", cfg, "--out", str(out)]) == 0
    victim = out / "tracks" / "scene_0000.csv"
    victim.write_text("frame_idx,t_s\n0,0\n")
    assert main(["encode", "--config", cfg, "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "[encode]" in err and "scene_0000.csv" in err and "SchemaError" in err


def test_missing_input_is_stage_tagged(tmp_path, capsys):
    assert main(["extract", "--config", str(CONFIGS / "smoke.yaml"), "--out", str(tmp_path)]) == 2
    assert "[extract]" in capsys.readouterr().err


@pytest.fixture(scope="module")
def minimal_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("minimal")
    assert main(["pipeline", "--config", str(CONFIGS / "minimal.yaml"), "--out", str(out)]) == 0
    return out


def test_minimal_pipeline_fills_report(minimal_run):
    rep = read_report(minimal_run / "report.csv")
    summary = {m: v for (s, m), v in rep.items() if s == "ALL"}
    assert summary
    for m, v in summary.items():
        assert not math.isnan(v), m
        assert v >= 0, m
    for sub in ("tracks", "frames", "traces", "extract", "models", "predictions"):
        assert any((minimal_run / sub).iterdir()), sub


def test_compare_verb(minimal_run, tmp_path):
    rep = minimal_run / "report.csv"
    assert main(["compare", str(rep), str(rep), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "comparison.csv").read_text().splitlines()
    assert lines[1] == "scene_id,metric,a,b,delta,ratio"
    for line in lines[2:]:
        delta = line.split(",")[4]
        assert delta in ("0", "nan")


def test_compare_verb_key_mismatch(minimal_run, tmp_path, capsys):
    other = tmp_path / "other.csv"
    text = (minimal_run / "report.csv").read_text().replace("scene_", "clip_")
    other.write_text(text)
    assert main(["compare", str(minimal_run / "report.csv"), str(other), "--out", str(tmp_path)]) == 2
    assert "[compare]" in capsys.readouterr().err


def test_track_and_eval_rerun_in_place(minimal_run, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(minimal_run, out)
    cfg = str(CONFIGS / "minimal.yaml")
    assert main(["track", "--config", cfg, "--out", str(out)]) == 0
    assert main(["eval", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "report.csv").read_bytes() == (minimal_run / "report.csv").read_bytes()

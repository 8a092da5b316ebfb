import math

import numpy as np
import pytest

from graytrack.errors import AlignmentError, KeyMismatch, ParseError, SchemaError
from graytrack.evaluation import (EvaluationReport, compare_runs, eval_fov, eval_position,
                                  read_report, scene_metrics, write_comparison, write_report)


def test_fov_all_correct():
    assert eval_fov([0.9, 0.1], [1.0, 0.0], 5 / 6).all_pct == 0


def test_fov_one_in_four():
    err = eval_fov([0.9, 0.9, 0.1, 0.1], [1.0, 0.5, 0.0, 0.0], 5 / 6)
    assert err.all_pct == 25
    assert math.isnan(eval_fov([0.1], [0.0], 0.5).visible_pct)


def test_fov_visible_only_variant():
    err = eval_fov([0.1, 0.9, 0.1, 0.1], [1.0, 1.0, 0.0, 0.0], 0.5)
    assert err.visible_pct == 50 and err.all_pct == 25


def test_fov_random_predictions():
    rng = np.random.default_rng(0)
    r = np.repeat([0.0, 1.0], 5000)
    assert eval_fov(rng.uniform(size=10_000), r, 0.5).all_pct == pytest.approx(50, abs=2)


def test_fov_alignment():
    with pytest.raises(AlignmentError):
        eval_fov([0.5], [1.0, 0.0], 0.5)


def test_position_examples():
    p = np.array([[1.0, 2.0], [-3.0, 0.5]])
    assert eval_position(p, p).mean == 0
    assert eval_position([[3.0 + 1, 4.0 + 2]], [[1.0, 2.0]]).mean == 5


def test_position_missed_rate():
    p_hat = np.array([[0.0, 0.0], [np.nan, np.nan], [np.nan, np.nan]])
    p_avg = np.array([[1.0, 0.0], [1.0, 1.0], [np.nan, np.nan]])
    out = eval_position(p_hat, p_avg, [1.0, 1.0, 0.0], 5 / 6)
    assert out.n == 1 and out.mean == 1 and out.missed_rate == 0.5


def test_position_matches_bruteforce(rng):
    n = 500
    p_hat = rng.normal(0, 5, (n, 2))
    p_avg = rng.normal(0, 5, (n, 2))
    p_hat[rng.uniform(size=n) < 0.2] = np.nan
    p_avg[rng.uniform(size=n) < 0.2] = np.nan
    errs = []
    for a, b in zip(p_hat, p_avg):
        if not (math.isnan(a[0]) or math.isnan(b[0])):
            errs.append(math.hypot(a[0] - b[0], a[1] - b[1]))
    mean = sum(errs) / len(errs)
    std = math.sqrt(sum((e - mean) ** 2 for e in errs) / len(errs))
    out = eval_position(p_hat, p_avg)
    assert out.n == len(errs)
    assert out.mean == pytest.approx(mean, rel=1e-12, abs=1e-12)
    assert out.std == pytest.approx(std, rel=1e-12, abs=1e-12)


def _report(rng, n_scenes=3):
    rows = []
    for s in range(n_scenes):
        W = int(rng.integers(5, 30))
        r = rng.choice([0.0, 0.5, 1.0], W)
        y = rng.uniform(size=W)
        p_avg = np.where(r[:, None] > 0, rng.normal(size=(W, 2)), np.nan)
        p_hat = np.where(y[:, None] >= 5 / 6, rng.normal(size=(W, 2)), np.nan)
        rows.append(scene_metrics(f"scene_{s:04d}", y, r, p_hat, p_avg, 5 / 6, dtw=rng.uniform(),
                                  boundary_error=rng.uniform(0, 0.01)))
    return EvaluationReport(rows)


def test_weighted_fov_is_window_weighted(rng):
    rep = _report(rng)
    s = rep.summary()
    total = sum(r.n_windows for r in rep.rows)
    expected = sum(r.fov_error_pct * r.n_windows for r in rep.rows) / total
    assert s["weighted_fov_error_pct"] == pytest.approx(expected, rel=1e-12)
    for k, v in s.items():
        assert math.isnan(v) or v >= 0, k


def test_report_round_trip_and_self_compare(tmp_path, rng):
    rep = _report(rng)
    write_report(rep, tmp_path / "r.csv")
    doc = read_report(tmp_path / "r.csv")
    assert doc[("ALL", "n_windows")] == sum(r.n_windows for r in rep.rows)
    comp = compare_runs(doc, doc)
    for _, _, a, b, delta, _ in comp.rows:
        assert delta == 0 or (math.isnan(a) and math.isnan(b))
    write_comparison(comp, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().startswith("# delta = b - a")


def test_compare_sign_convention():
    a = {("ALL", "dtw_mean"): 10.0}
    b = {("ALL", "dtw_mean"): 1.0}
    row = compare_runs(a, b).get("ALL", "dtw_mean")
    assert row[4] == -9.0 and row[5] == 10.0


def test_compare_key_mismatch():
    with pytest.raises(KeyMismatch):
        compare_runs({("a", "m"): 1.0}, {("b", "m"): 1.0})


def test_report_reader_errors(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("scene,metric\n")
    with pytest.raises(SchemaError):
        read_report(p)
    p.write_text("scene_id,metric,value\nALL,dtw_mean,oops\n")
    with pytest.raises(ParseError):
        read_report(p)

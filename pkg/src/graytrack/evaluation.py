"""Window-level metrics, report files and run comparison."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, KeyMismatch, ParseError, SchemaError


@dataclass
class FovError:
    all_pct: float
    visible_pct: float
    n_windows: int
    n_errors: int


def eval_fov(y_fov, r, tau: float) -> FovError:
    """Misclassified share of windows, with class = (score >= tau)."""
    y_fov = np.asarray(y_fov, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if y_fov.shape != r.shape:
        raise AlignmentError(f"{len(y_fov)} predictions for {len(r)} labels")
    pred = y_fov >= tau
    true = r >= tau
    wrong = pred != true
    n = len(wrong)
    all_pct = 100.0 * wrong.mean() if n else math.nan
    vis_pct = 100.0 * wrong[true].mean() if true.any() else math.nan
    return FovError(all_pct, vis_pct, n, int(wrong.sum()))


@dataclass
class PositionError:
    mean: float
    std: float
    n: int
    missed_rate: float
    errors: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


def eval_position(p_hat, p_avg, r=None, tau: float | None = None) -> PositionError:
    """L2 error over windows where both a prediction and a label position exist.

    With ``r`` and ``tau`` given, ``missed_rate`` is the share of windows with
    ``r >= tau`` that received no prediction.
    """
    p_hat = np.asarray(p_hat, dtype=np.float64).reshape(-1, 2)
    p_avg = np.asarray(p_avg, dtype=np.float64).reshape(-1, 2)
    if p_hat.shape != p_avg.shape:
        raise AlignmentError(f"{len(p_hat)} predictions for {len(p_avg)} labels")
    both = ~np.isnan(p_hat[:, 0]) & ~np.isnan(p_avg[:, 0])
    err = np.linalg.norm(p_hat[both] - p_avg[both], axis=1)
    missed = math.nan
    if r is not None and tau is not None:
        vis = np.asarray(r) >= tau
        missed = float(np.isnan(p_hat[vis, 0]).mean()) if vis.any() else math.nan
    if err.size == 0:
        return PositionError(math.nan, math.nan, 0, missed, err)
    return PositionError(float(err.mean()), float(err.std()), int(err.size), missed, err)


# --- reports -----------------------------------------------------------------

SCENE_METRICS = ["n_windows", "fov_error_pct", "fov_error_visible_pct", "pos_error_mean_m",
                 "pos_error_std_m", "n_pos", "missed_track_rate", "dtw", "boundary_error"]
ALL = "ALL"


@dataclass
class SceneMetrics:
    scene_id: str
    n_windows: int = 0
    fov_error_pct: float = math.nan
    fov_error_visible_pct: float = math.nan
    pos_error_mean_m: float = math.nan
    pos_error_std_m: float = math.nan
    n_pos: int = 0
    missed_track_rate: float = math.nan
    dtw: float = math.nan
    boundary_error: float = math.nan
    fov_errors: int = 0
    pos_errors: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


def scene_metrics(scene_id, y_fov, r, p_hat, p_avg, tau, dtw=math.nan,
                  boundary_error=math.nan) -> SceneMetrics:
    fov = eval_fov(y_fov, r, tau)
    pos = eval_position(p_hat, p_avg, r, tau)
    return SceneMetrics(str(scene_id), fov.n_windows, fov.all_pct, fov.visible_pct, pos.mean,
                        pos.std, pos.n, pos.missed_rate, dtw, boundary_error, fov.n_errors,
                        pos.errors)


def _nanmean(x):
    x = np.asarray(x, dtype=np.float64)
    x = x[~np.isnan(x)]
    return float(x.mean()) if x.size else math.nan


def _nanstd(x):
    x = np.asarray(x, dtype=np.float64)
    x = x[~np.isnan(x)]
    return float(x.std()) if x.size else math.nan


@dataclass
class EvaluationReport:
    rows: list

    def summary(self) -> dict:
        fov = [r.fov_error_pct for r in self.rows]
        n_win = sum(r.n_windows for r in self.rows)
        pos = np.concatenate([r.pos_errors for r in self.rows]) if self.rows else np.zeros(0)
        return {
            "fov_error_pct_mean": _nanmean(fov),
            "fov_error_pct_std": _nanstd(fov),
            "fov_error_visible_pct_mean": _nanmean([r.fov_error_visible_pct for r in self.rows]),
            "weighted_fov_error_pct": 100.0 * sum(r.fov_errors for r in self.rows) / n_win
            if n_win else math.nan,
            "pos_error_m_mean": float(pos.mean()) if pos.size else math.nan,
            "pos_error_m_std": float(pos.std()) if pos.size else math.nan,
            "missed_track_rate_mean": _nanmean([r.missed_track_rate for r in self.rows]),
            "dtw_mean": _nanmean([r.dtw for r in self.rows]),
            "boundary_error_mean": _nanmean([r.boundary_error for r in self.rows]),
            "n_windows": float(n_win),
        }


def _fmt(v) -> str:
    v = float(v)
    return "nan" if math.isnan(v) else f"{v:.12g}"


def write_report(report: EvaluationReport, path) -> None:
    """Long format ``scene_id,metric,value``; the ``ALL`` rows hold the aggregates."""
    with open(path, "w", newline="") as fh:
        fh.write("scene_id,metric,value\n")
        for row in report.rows:
            for m in SCENE_METRICS:
                fh.write(f"{row.scene_id},{m},{_fmt(getattr(row, m))}\n")
        for m, v in report.summary().items():
            fh.write(f"{ALL},{m},{_fmt(v)}\n")


def read_report(path) -> dict:
    """``{(scene_id, metric): value}`` from a report file."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["scene_id", "metric", "value"]:
            raise SchemaError("expected header scene_id,metric,value")
        for line, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                out[(row[0], row[1])] = float(row[2])
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line) from exc
    return out


@dataclass
class Comparison:
    """``delta = b - a`` and ``ratio = a / b`` per (scene, metric)."""

    rows: list  # (scene_id, metric, a, b, delta, ratio)

    def get(self, scene_id, metric):
        for row in self.rows:
            if row[0] == scene_id and row[1] == metric:
                return row
        raise KeyError((scene_id, metric))


def compare_runs(report_a: dict, report_b: dict) -> Comparison:
    scenes_a = {k[0] for k in report_a}
    scenes_b = {k[0] for k in report_b}
    if scenes_a != scenes_b:
        raise KeyMismatch(f"scene ids differ: {sorted(scenes_a ^ scenes_b)[:5]}")
    rows = []
    for key in sorted(report_a.keys() & report_b.keys()):
        a, b = report_a[key], report_b[key]
        ratio = a / b if b != 0 else (math.nan if a == 0 else math.inf)
        rows.append((key[0], key[1], a, b, b - a, ratio))
    return Comparison(rows)


def write_comparison(comp: Comparison, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# delta = b - a (negative: b is lower); ratio = a / b (>1: b is lower)\n")
        fh.write("scene_id,metric,a,b,delta,ratio\n")
        for sid, m, a, b, d, r in comp.rows:
            fh.write(f"{sid},{m},{_fmt(a)},{_fmt(b)},{_fmt(d)},{_fmt(r)}\n")

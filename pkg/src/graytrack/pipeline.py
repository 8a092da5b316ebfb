"""Stage-by-stage experiment driver.

Every stage reads the previous stage's files from the output directory and
writes its own, so each CLI verb can run on its own and a full run leaves every
intermediate on disk.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .codec import (FrameSizeSequence, encode_frame_sizes, export_blue_features, export_frame_sizes,
                    import_blue_features, import_frame_sizes, observe)
from .config import ExperimentConfig
from .errors import GraytrackError, StageError, TrackTooShort
from .evaluation import (EvaluationReport, compare_runs, read_report, scene_metrics, write_comparison,
                         write_report)
from .netem import PacketTrace, emulate, export_trace, import_trace, packetize
from .scenesim import (GroundTruthTrack, apply_gps_noise, generate_trajectory, gps_path, read_track,
                       write_track)
from .simulate import derive_seed
from .stage1 import (BoundaryDetector, Stage1Config, boundary_error, dtw_distance,
                     reconstruct_frame_sizes, stage1_infer, stage1_train)
from .stage2 import (GrayNormalizer, Stage2Config, TokenStream, Tracker, make_labels, make_sequence,
                     read_predictions, stage2_infer, stage2_train, unlabeled_sequence,
                     write_predictions)

log = logging.getLogger(__name__)

STAGES = ("gen", "encode", "netem", "train-stage1", "extract", "train-stage2", "track", "eval")
EVAL_STREAM = "scene"
STAGE1_STREAM = "stage1-scene"


@dataclasses.dataclass(frozen=True)
class Layout:
    root: Path

    def _file(self, sub: str, name: str) -> Path:
        d = self.root / sub
        d.mkdir(parents=True, exist_ok=True)
        return d / name

    def track(self, sid) -> Path:
        return self._file("tracks", f"{sid}.csv")

    def frames(self, sid, k) -> Path:
        return self._file("frames", f"{sid}_node{k}.csv")

    def blue(self, sid, k) -> Path:
        return self._file("blue", f"{sid}_node{k}.csv")

    def trace(self, sid, k, bandwidth_bps=None) -> Path:
        tag = "" if bandwidth_bps is None else f"_bw{int(round(bandwidth_bps))}"
        return self._file("traces", f"{sid}_node{k}{tag}.csv")

    def extracted_trace(self, sid, k) -> Path:
        return self._file("extract", f"{sid}_node{k}.pkts.csv")

    def extracted_frames(self, sid, k) -> Path:
        return self._file("extract", f"{sid}_node{k}.frames.csv")

    def model(self, kind) -> Path:
        return self._file("models", f"{kind}.pt")

    def predictions(self, sid) -> Path:
        return self._file("predictions", f"{sid}.csv")

    @property
    def report(self) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        return self.root / "report.csv"


def scene_id(index: int) -> str:
    return f"scene_{index:04d}"


def stage1_scene_id(index: int) -> str:
    return f"stage1_{index:04d}"


def _all_scenes(cfg: ExperimentConfig):
    """``(scene id, seed stream, index)`` for evaluation and Stage-1 training scenes."""
    out = [(scene_id(i), EVAL_STREAM, i) for i in range(cfg.n_scenes)]
    if cfg.gray_nodes:
        out += [(stage1_scene_id(i), STAGE1_STREAM, i) for i in range(cfg.stage1_train_scenes)]
    return out


def _with_path(fn, path, *args):
    """Call ``fn(path, *args)`` and tag any failure with the file it concerned."""
    try:
        return fn(path, *args)
    except (GraytrackError, OSError, ValueError) as exc:
        exc.path = str(path)
        raise


def _stage(name):
    def wrap(fn):
        @functools.wraps(fn)
        def run(cfg, layout, *args, **kw):
            try:
                return fn(cfg, layout, *args, **kw)
            except StageError:
                raise
            except (GraytrackError, OSError, ValueError, KeyError, RuntimeError) as exc:
                raise StageError(name, f"{type(exc).__name__}: {exc}",
                                 getattr(exc, "path", None)) from exc
        run.stage = name
        return run
    return wrap


def _read_track(cfg: ExperimentConfig, path) -> GroundTruthTrack:
    sc = cfg.scenario
    return _with_path(read_track, path, len(sc.cameras), sc.fps, sc.target_radius)


def _label_track(cfg: ExperimentConfig, layout: Layout, sid) -> GroundTruthTrack:
    noisy = gps_path(layout.track(sid))
    return _read_track(cfg, noisy if noisy.exists() else layout.track(sid))


def align_sizes(seq: FrameSizeSequence, n: int) -> np.ndarray:
    """First ``n`` sizes of a reconstructed sequence, zero-padded if it is shorter."""
    out = np.zeros(n)
    k = min(n, len(seq))
    out[:k] = seq.sizes[:k]
    return out


# --- stages ------------------------------------------------------------------

@_stage("gen")
def stage_gen(cfg: ExperimentConfig, layout: Layout) -> None:
    for sid, stream, i in _all_scenes(cfg):
        track = generate_trajectory(cfg.scenario, derive_seed(cfg.scenario.seed, stream, i))
        write_track(track, layout.track(sid))
        if cfg.gps is not None and stream == EVAL_STREAM:
            noisy = apply_gps_noise(track, cfg.gps, derive_seed(cfg.gps_seed, stream, i))
            write_track(noisy, gps_path(layout.track(sid)))


@_stage("encode")
def stage_encode(cfg: ExperimentConfig, layout: Layout) -> None:
    codec = cfg.codec
    for sid, stream, i in _all_scenes(cfg):
        track = _read_track(cfg, layout.track(sid))
        for k, cam in enumerate(cfg.scenario.cameras):
            obs = observe(track, cam, k, codec.resolution)
            frames = encode_frame_sizes(obs.innovation, obs.area, codec.gop, codec.model,
                                        derive_seed(cfg.codec_seed, stream, i, k), track.fps)
            export_frame_sizes(frames, layout.frames(sid, k))
            if stream == EVAL_STREAM and k in cfg.blue_nodes:
                export_blue_features(obs.blue, layout.blue(sid, k))


def _send(frames, net, stream, i, k) -> PacketTrace:
    seed = derive_seed(net.seed, stream, i, k, int(round(net.bandwidth_bps)))
    return emulate(packetize(frames, net, k), net, seed)


@_stage("netem")
def stage_netem(cfg: ExperimentConfig, layout: Layout) -> None:
    for sid, stream, i in _all_scenes(cfg):
        for k in cfg.gray_nodes if stream == EVAL_STREAM else range(len(cfg.scenario.cameras)):
            frames = _with_path(import_frame_sizes, layout.frames(sid, k))
            if stream == EVAL_STREAM:
                export_trace(_send(frames, cfg.network, stream, i, k), layout.trace(sid, k))
                continue
            for bw in cfg.stage1_train_bandwidths_bps:
                net = dataclasses.replace(cfg.network, bandwidth_bps=bw)
                export_trace(_send(frames, net, stream, i, k), layout.trace(sid, k, bw))


@_stage("train-stage1")
def stage_train_stage1(cfg: ExperimentConfig, layout: Layout) -> None:
    if not cfg.gray_nodes:
        log.info("no gray nodes; skipping Stage-1 training")
        return
    traces = [_with_path(import_trace, layout.trace(stage1_scene_id(i), k, bw))
              for i in range(cfg.stage1_train_scenes)
              for k in range(len(cfg.scenario.cameras))
              for bw in cfg.stage1_train_bandwidths_bps]
    res = stage1_train(traces, cfg.stage1, seed=cfg.stage1_seed)
    save_checkpoint(layout.model("stage1"), "stage1", res.model, cfg.stage1.to_dict(),
                    cfg.stage1_seed, {"loss_curve": [float(v) for v in res.loss_curve]})


def load_stage1(path) -> tuple[BoundaryDetector, Stage1Config]:
    ckpt = _with_path(load_checkpoint, path, "stage1")
    s1 = Stage1Config(**ckpt["config"])
    model = BoundaryDetector(s1)
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model, s1


@_stage("extract")
def stage_extract(cfg: ExperimentConfig, layout: Layout) -> None:
    if not cfg.gray_nodes:
        return
    model, s1 = load_stage1(layout.model("stage1"))
    for i in range(cfg.n_scenes):
        sid = scene_id(i)
        for k in cfg.gray_nodes:
            trace = _with_path(import_trace, layout.trace(sid, k)).unlabeled()
            flags = stage1_infer(trace, model, s1).label.astype(bool)
            # The trace ends on a frame boundary whatever the detector says.
            flags[-1] = True
            fidx = np.concatenate([[0], np.cumsum(flags[:-1])]).astype(np.int64)
            export_trace(dataclasses.replace(trace, frame_idx=fidx, last_pkt=flags),
                         layout.extracted_trace(sid, k))
            export_frame_sizes(reconstruct_frame_sizes(trace, flags), layout.extracted_frames(sid, k))


def _stream(cfg: ExperimentConfig, layout: Layout, sid, n_frames: int,
            normalizer: GrayNormalizer | None) -> TokenStream:
    gray = np.column_stack([align_sizes(_with_path(import_frame_sizes, layout.extracted_frames(sid, k)),
                                        n_frames) for k in cfg.gray_nodes]) \
        if cfg.gray_nodes else np.zeros((n_frames, 0))
    if normalizer is not None and gray.shape[1]:
        gray = normalizer(gray)
    blue = np.stack([_with_path(import_blue_features, layout.blue(sid, k))[:n_frames]
                     for k in cfg.blue_nodes], axis=1) if cfg.blue_nodes else np.zeros((n_frames, 0, 4))
    return TokenStream(gray, blue)


@_stage("train-stage2")
def stage_train_stage2(cfg: ExperimentConfig, layout: Layout) -> None:
    train_ids, _ = cfg.split_scenes()
    tracks = {i: _label_track(cfg, layout, scene_id(i)) for i in train_ids}
    raw = {i: _stream(cfg, layout, scene_id(i), tracks[i].n_frames, None) for i in train_ids}
    normalizer = GrayNormalizer.fit([raw[i].gray for i in train_ids]) if cfg.gray_nodes else None
    seqs = []
    for i in train_ids:
        try:
            labels = make_labels(tracks[i], cfg.stage2)
        except TrackTooShort:
            continue
        stream = TokenStream(normalizer(raw[i].gray) if normalizer else raw[i].gray, raw[i].blue)
        seqs.append(make_sequence(stream, labels, cfg.scenario.region, cfg.stage2))
    res = stage2_train(seqs, cfg.stage2, seed=cfg.stage2_seed)
    extra = {"region": list(cfg.scenario.region.as_tuple()),
             "loss_curve": [float(v) for v in res.loss_curve]}
    if normalizer is not None:
        extra["normalizer"] = normalizer.to_dict()
    save_checkpoint(layout.model("stage2"), "stage2", res.model, cfg.stage2.to_dict(),
                    cfg.stage2_seed, extra)


def load_stage2(path) -> tuple[Tracker, Stage2Config, GrayNormalizer | None]:
    ckpt = _with_path(load_checkpoint, path, "stage2")
    s2 = Stage2Config(**ckpt["config"])
    model = Tracker(s2)
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    norm = ckpt["extra"].get("normalizer")
    return model, s2, GrayNormalizer.from_dict(norm) if norm is not None else None


@_stage("track")
def stage_track(cfg: ExperimentConfig, layout: Layout) -> None:
    model, s2, normalizer = load_stage2(layout.model("stage2"))
    _, test_ids = cfg.split_scenes()
    region = cfg.scenario.region
    for i in test_ids:
        sid = scene_id(i)
        track = _read_track(cfg, layout.track(sid))
        stream = _stream(cfg, layout, sid, track.n_frames, normalizer)
        seq = unlabeled_sequence(stream, s2)
        write_predictions(stage2_infer(seq, model, s2, region), layout.predictions(sid),
                          cfg.scenario.fps)


@_stage("eval")
def stage_eval(cfg: ExperimentConfig, layout: Layout) -> EvaluationReport:
    _, test_ids = cfg.split_scenes()
    rows = []
    for i in test_ids:
        sid = scene_id(i)
        track = _read_track(cfg, layout.track(sid))
        labels = make_labels(track, cfg.stage2) if track.n_frames >= cfg.stage2.T_in else None
        pred = _with_path(read_predictions, layout.predictions(sid), cfg.scenario.fps)
        n = len(pred)
        r = labels.r[:n] if labels is not None else np.zeros(0)
        p_avg = labels.p_avg[:n] if labels is not None else np.zeros((0, 2))
        dtw, berr = [], []
        for k in cfg.gray_nodes:
            truth = _with_path(import_frame_sizes, layout.frames(sid, k))
            est = _with_path(import_frame_sizes, layout.extracted_frames(sid, k))
            dtw.append(dtw_distance(est.sizes, truth.sizes))
            sent = _with_path(import_trace, layout.trace(sid, k))
            got = _with_path(import_trace, layout.extracted_trace(sid, k))
            berr.append(boundary_error(got.last_pkt, sent.last_pkt))
        rows.append(scene_metrics(sid, pred.y_fov, r, pred.position, p_avg, cfg.stage2.tau,
                                  float(np.mean(dtw)) if dtw else np.nan,
                                  float(np.mean(berr)) if berr else np.nan))
    report = EvaluationReport(rows)
    write_report(report, layout.report)
    return report


STAGE_FUNCS = {
    "gen": stage_gen,
    "encode": stage_encode,
    "netem": stage_netem,
    "train-stage1": stage_train_stage1,
    "extract": stage_extract,
    "train-stage2": stage_train_stage2,
    "track": stage_track,
    "eval": stage_eval,
}


def run_stage(name: str, cfg: ExperimentConfig, out) -> object:
    return STAGE_FUNCS[name](cfg, Layout(Path(out)))


def run_pipeline(cfg: ExperimentConfig, out) -> EvaluationReport:
    layout = Layout(Path(out))
    result = None
    for name in STAGES:
        log.info("stage %s", name)
        result = STAGE_FUNCS[name](cfg, layout)
    return result


def compare_reports(path_a, path_b, out_path) -> None:
    try:
        comp = compare_runs(_with_path(read_report, path_a), _with_path(read_report, path_b))
        write_comparison(comp, out_path)
    except (GraytrackError, OSError, ValueError) as exc:
        raise StageError("compare", f"{type(exc).__name__}: {exc}", getattr(exc, "path", None)) from exc

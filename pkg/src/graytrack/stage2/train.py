"""Truncated-BPTT training and stateful sequential inference for the tracker."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from ..errors import EmptyDataset, InvariantError, ParseError, SchemaError
from ..scenesim import Region
from .labels import Stage2Config, TokenStream, WindowLabels
from .losses import stage2_losses
from .model import Tracker

log = logging.getLogger(__name__)


@dataclass
class Stage2Sequence:
    """Windows of one scene with region-normalised targets."""

    gray: np.ndarray  # (W, T_in, N_G)
    blue: np.ndarray  # (W, T_in, N_B, 4)
    r: np.ndarray  # (W,)
    p: np.ndarray  # (W, 2), NaN where no visible frame
    starts: np.ndarray

    def __len__(self):
        return len(self.r)


def make_sequence(stream: TokenStream, labels: WindowLabels, region: Region,
                  cfg: Stage2Config) -> Stage2Sequence:
    gray, blue, starts = stream.windows(cfg)
    w = min(len(starts), len(labels))
    return Stage2Sequence(gray[:w], blue[:w], labels.r[:w].copy(),
                          region.normalize(labels.p_avg[:w]), starts[:w])


def unlabeled_sequence(stream: TokenStream, cfg: Stage2Config) -> Stage2Sequence:
    """Windows of a stream with no targets, for inference."""
    gray, blue, starts = stream.windows(cfg)
    n = len(starts)
    return Stage2Sequence(gray, blue, np.zeros(n), np.full((n, 2), np.nan), starts)


@dataclass
class Batch:
    gray: torch.Tensor  # (B, W, T_in, N_G)
    blue: torch.Tensor
    r: torch.Tensor  # (B, W)
    p: torch.Tensor  # (B, W, 2)
    valid: torch.Tensor  # (B, W) bool

    @property
    def n_windows(self) -> int:
        return self.r.shape[1]


def collate(seqs, dtype=torch.float32) -> Batch:
    W = max(len(s) for s in seqs)
    B = len(seqs)
    g0, b0 = seqs[0].gray, seqs[0].blue
    gray = np.zeros((B, W) + g0.shape[1:])
    blue = np.zeros((B, W) + b0.shape[1:])
    r = np.zeros((B, W))
    p = np.zeros((B, W, 2))
    valid = np.zeros((B, W), dtype=bool)
    for i, s in enumerate(seqs):
        n = len(s)
        gray[i, :n], blue[i, :n], r[i, :n] = s.gray, s.blue, s.r
        p[i, :n] = np.nan_to_num(s.p)
        valid[i, :n] = True
    t = lambda a: torch.as_tensor(a, dtype=dtype)
    return Batch(t(gray), t(blue), t(r), t(p), torch.as_tensor(valid))


def window_loss(model: Tracker, batch: Batch, n: int, state: torch.Tensor, cfg: Stage2Config):
    """Mean ``L_sum`` over valid sequences at window ``n`` and the emitted state."""
    inp = state if cfg.use_state else torch.zeros_like(state)
    logit, p_hat, nxt = model(batch.gray[:, n], batch.blue[:, n], inp)
    valid = batch.valid[:, n]
    _, _, l_sum = stage2_losses(None, p_hat, batch.r[:, n], batch.p[:, n], cfg.tau,
                                cfg.lambda_fov, cfg.lambda_pos, fov_logit=logit, weight=valid)
    return l_sum.sum() / valid.sum().clamp_min(1), nxt


def cumulative_loss(model: Tracker, batch: Batch, cfg: Stage2Config, state: torch.Tensor,
                    lo: int, hi: int):
    """Sum of window losses over ``[lo, hi)`` carrying the state; returns ``(L_cs, state)``."""
    total = torch.zeros((), dtype=state.dtype)
    for n in range(lo, hi):
        l, state = window_loss(model, batch, n, state, cfg)
        total = total + l
    return total, state


def make_optimizer(model: Tracker, cfg: Stage2Config) -> torch.optim.Optimizer:
    heads = {id(p) for p in model.head_parameters()}
    body = [p for p in model.parameters() if id(p) not in heads]
    return torch.optim.Adam([{"params": body, "lr": cfg.lr_encoder},
                             {"params": model.head_parameters(), "lr": cfg.lr_heads}])


def train_batch(model: Tracker, batch: Batch, cfg: Stage2Config, opt) -> float:
    """One pass over a batch: update every ``f_detach`` windows, then cut the graph."""
    state = model.initial_state(batch.r.shape[0])
    total = 0.0
    for lo in range(0, batch.n_windows, cfg.f_detach):
        hi = min(lo + cfg.f_detach, batch.n_windows)
        l_cs, state = cumulative_loss(model, batch, cfg, state, lo, hi)
        opt.zero_grad()
        l_cs.backward()
        opt.step()
        state = state.detach()
        total += l_cs.item()
    return total


@dataclass
class Stage2Result:
    model: Tracker
    cfg: Stage2Config
    seed: int
    loss_curve: list = field(default_factory=list)


def stage2_train(sequences, cfg: Stage2Config, seed: int = 0, epochs: int | None = None,
                 dtype=torch.float32) -> Stage2Result:
    seqs = [s for s in sequences if len(s)]
    if not seqs:
        raise EmptyDataset("no training windows")
    torch.manual_seed(seed)
    model = Tracker(cfg).to(dtype)
    opt = make_optimizer(model, cfg)
    gen = torch.Generator().manual_seed(seed)
    n_windows = sum(len(s) for s in seqs)
    n_epochs = cfg.epochs if epochs is None else epochs
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, n_epochs) \
        if cfg.lr_schedule == "cosine" else None
    curve = []
    for epoch in range(n_epochs):
        order = torch.randperm(len(seqs), generator=gen).tolist()
        total = 0.0
        for b in range(0, len(order), cfg.batch_size):
            part = [seqs[i] for i in order[b:b + cfg.batch_size]]
            batch = collate(part, dtype)
            total += train_batch(model, batch, cfg, opt) * len(part)
        curve.append(total / n_windows)
        if sched is not None:
            sched.step()
        log.info("stage2 epoch %d loss %.6f", epoch, curve[-1])
    model.eval()
    return Stage2Result(model, cfg, seed, curve)


@dataclass
class TrackPredictions:
    starts: np.ndarray
    y_fov: np.ndarray
    position: np.ndarray  # (W, 2) metres, NaN where suppressed

    @property
    def tracked(self) -> np.ndarray:
        return ~np.isnan(self.position[:, 0])

    def __len__(self):
        return len(self.y_fov)


@torch.no_grad()
def stage2_infer(seq: Stage2Sequence, model: Tracker, cfg: Stage2Config, region: Region,
                 hook: Callable | None = None) -> TrackPredictions:
    """Run windows in order carrying the state; drop positions when ``y_fov < tau``.

    ``hook(n, state_in, state_out)`` is called after every window.
    """
    model.eval()
    dtype = next(model.parameters()).dtype
    state = model.initial_state(1)
    y = np.zeros(len(seq))
    pos = np.full((len(seq), 2), np.nan)
    for n in range(len(seq)):
        g = torch.as_tensor(seq.gray[n:n + 1], dtype=dtype)
        b = torch.as_tensor(seq.blue[n:n + 1], dtype=dtype)
        inp = state if cfg.use_state else torch.zeros_like(state)
        logit, p_hat, nxt = model(g, b, inp)
        y[n] = float(torch.sigmoid(logit)[0])
        if y[n] >= cfg.tau:
            pos[n] = region.denormalize(p_hat[0].double().numpy())
        if hook is not None:
            hook(n, inp.clone(), nxt.clone())
        state = nxt
    return TrackPredictions(seq.starts.copy(), y, pos)


PREDICTION_COLUMNS = ["window_idx", "t_start_s", "y_fov", "x_m", "y_m", "tracked"]


def write_predictions(pred: TrackPredictions, path, fps: float) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(PREDICTION_COLUMNS) + "\n")
        for n, (s, y, p) in enumerate(zip(pred.starts, pred.y_fov, pred.position)):
            xy = ",,," if np.isnan(p[0]) else f",{p[0]:.9f},{p[1]:.9f},"
            fh.write(f"{n},{s / fps:.9f},{y:.12g}{xy}{int(not np.isnan(p[0]))}\n")


def read_predictions(path, fps: float) -> TrackPredictions:
    starts, ys, pos = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PREDICTION_COLUMNS:
            raise SchemaError(f"expected header {','.join(PREDICTION_COLUMNS)}")
        for line, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                if len(row) != len(PREDICTION_COLUMNS):
                    raise ValueError(f"expected {len(PREDICTION_COLUMNS)} columns")
                tracked = int(row[5])
                xy = (float(row[3]), float(row[4])) if tracked else (np.nan, np.nan)
                starts.append(int(round(float(row[1]) * fps)))
                ys.append(float(row[2]))
            except ValueError as exc:
                raise ParseError(str(exc), line) from exc
            if not tracked and (row[3] or row[4]):
                raise InvariantError("untracked windows must leave x_m/y_m empty", line)
            pos.append(xy)
    return TrackPredictions(np.array(starts, dtype=np.int64), np.array(ys),
                            np.array(pos, dtype=np.float64).reshape(-1, 2))

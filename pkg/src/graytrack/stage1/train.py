"""Windowed training and overlap-averaged inference for the boundary detector."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from ..errors import EmptySequence, NoLabels
from ..netem import PacketTrace
from .losses import stage1_losses
from .model import BoundaryDetector, Stage1Config, make_windows, packet_features

log = logging.getLogger(__name__)


@dataclass
class Stage1Result:
    model: BoundaryDetector
    cfg: Stage1Config
    seed: int
    loss_curve: list = field(default_factory=list)


@dataclass
class BoundaryPrediction:
    prob: np.ndarray
    label: np.ndarray


def _training_windows(traces, cfg: Stage1Config):
    xs, ms, ys = [], [], []
    for tr in traces:
        if not tr.labeled:
            raise NoLabels("training traces must carry last_pkt labels")
        if len(tr) == 0:
            continue
        x, m, y, _ = make_windows(packet_features(tr, cfg.payload_bytes), cfg.window_len,
                                  cfg.stride, tr.last_pkt.astype(np.float64))
        xs.append(x)
        ms.append(m)
        ys.append(y)
    if not xs:
        raise EmptySequence("no packets to train on")
    return np.concatenate(xs), np.concatenate(ms), np.concatenate(ys)


def stage1_train(traces, cfg: Stage1Config, seed: int = 0, epochs: int | None = None,
                 dtype=torch.float32) -> Stage1Result:
    """Adam on mini-batches of overlapping windows; one update per batch."""
    traces = list(traces)
    if not traces:
        raise EmptySequence("no training traces")
    x, m, y = _training_windows(traces, cfg)
    torch.manual_seed(seed)
    model = BoundaryDetector(cfg).to(dtype)
    # Start at the empirical boundary rate so the count term does not swamp BCE early on.
    rate = float(np.clip(y[m].mean(), 1e-4, 1 - 1e-4))
    with torch.no_grad():
        model.head[-1].bias.fill_(float(np.log(rate / (1 - rate))))
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(seed)
    xt = torch.as_tensor(x, dtype=dtype)
    mt = torch.as_tensor(m)
    yt = torch.as_tensor(y, dtype=dtype)
    curve = []
    for epoch in range(cfg.epochs if epochs is None else epochs):
        lam = cfg.lambda_count * min(1.0, epoch / cfg.lambda_warmup_epochs) \
            if cfg.lambda_warmup_epochs > 0 else cfg.lambda_count
        order = torch.randperm(len(xt), generator=gen)
        total = 0.0
        for b in range(0, len(order), cfg.batch_size):
            idx = order[b:b + cfg.batch_size]
            logits = model(xt[idx], mt[idx])
            _, _, loss = stage1_losses(logits, yt[idx], lam, mt[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        curve.append(total / len(xt))
        log.info("stage1 epoch %d loss %.6f", epoch, curve[-1])
    model.eval()
    return Stage1Result(model, cfg, seed, curve)


@torch.no_grad()
def window_probabilities(trace: PacketTrace, model: BoundaryDetector, cfg: Stage1Config):
    """Per-window sigmoid outputs, masks and start offsets."""
    x, m, _, starts = make_windows(packet_features(trace, cfg.payload_bytes), cfg.window_len,
                                   cfg.stride)
    dtype = next(model.parameters()).dtype
    probs = torch.sigmoid(model(torch.as_tensor(x, dtype=dtype), torch.as_tensor(m))).numpy()
    return probs.astype(np.float64), m, starts


def average_windows(probs, masks, starts, n: int, threshold: float = 0.5) -> BoundaryPrediction:
    """Accumulate window outputs per packet and divide by how many windows saw it."""
    acc = np.zeros(n)
    count = np.zeros(n)
    for p, m, s in zip(probs, masks, starts):
        k = int(m.sum())
        acc[s:s + k] += p[:k]
        count[s:s + k] += 1
    prob = acc / np.maximum(count, 1)
    return BoundaryPrediction(prob, (prob >= threshold).astype(np.int64))


def stage1_infer(trace: PacketTrace, model: BoundaryDetector, cfg: Stage1Config) -> BoundaryPrediction:
    if len(trace) == 0:
        raise EmptySequence("trace is empty")
    model.eval()
    probs, masks, starts = window_probabilities(trace, model, cfg)
    return average_windows(probs, masks, starts, len(trace), cfg.threshold)

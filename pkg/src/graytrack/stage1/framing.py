"""Frame-size reconstruction from packet traces and the boundary/DTW metrics."""

from __future__ import annotations

import numpy as np

from ..codec import FrameSizeSequence
from ..errors import AlignmentError, EmptySequence
from ..netem import PacketTrace


def timewindow_grouping(trace: PacketTrace, window_s: float = 1.0 / 30.0) -> FrameSizeSequence:
    """Sum arrived bytes in fixed bins of ``window_s`` starting at the first arrival.

    Empty bins are kept as zero-byte frames; each bin is stamped with its start.
    """
    if len(trace) == 0:
        raise EmptySequence("trace is empty")
    if not window_s > 0:
        raise ValueError("window_s must be positive")
    rel = trace.arrive_t - trace.arrive_t[0]
    # Bin on integer nanoseconds so float noise cannot move a packet across an edge.
    rel_ns = np.rint(rel * 1e9).astype(np.int64)
    width_ns = window_s * 1e9
    # Edges live on the same rounded nanosecond grid as the timestamps.
    n_edges = int(np.floor(rel_ns[-1] / width_ns)) + 3
    edges = np.rint(np.arange(n_edges) * width_ns).astype(np.int64)
    bins = np.searchsorted(edges, rel_ns, side="right") - 1
    sizes = np.bincount(bins, weights=trace.size).astype(np.int64)
    t = trace.arrive_t[0] + np.arange(len(sizes)) * window_s
    return FrameSizeSequence(sizes, t)


def reconstruct_frame_sizes(trace: PacketTrace, boundaries) -> FrameSizeSequence:
    """Sum packets between consecutive boundaries, boundary packet included.

    Bytes after the last boundary form one extra trailing frame.
    """
    b = np.asarray(boundaries).astype(bool)
    if len(b) != len(trace):
        raise AlignmentError(f"{len(b)} boundary flags for {len(trace)} packets")
    if len(trace) == 0:
        return FrameSizeSequence(np.zeros(0, np.int64), np.zeros(0))
    ends = np.flatnonzero(b)
    if ends.size == 0 or ends[-1] != len(trace) - 1:
        ends = np.append(ends, len(trace) - 1)
    csum = np.concatenate([[0], np.cumsum(trace.size)])
    sizes = csum[ends + 1] - csum[np.concatenate([[0], ends[:-1] + 1])]
    return FrameSizeSequence(sizes, trace.arrive_t[ends])


def boundary_error(pred, truth) -> float:
    """Fraction of packets whose boundary flag is wrong."""
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if pred.shape != truth.shape:
        raise AlignmentError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise EmptySequence("no packets")
    return float(np.mean(pred != truth))


def dtw_raw(a, b) -> float:
    """Unnormalised DTW with ``|a_i - b_j|`` cost, filled one anti-diagonal at a time."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise EmptySequence("DTW needs non-empty sequences")
    cost = np.abs(a[:, None] - b[None, :])
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for s in range(2, n + m + 1):
        i = np.arange(max(1, s - m), min(n, s - 1) + 1)
        j = s - i
        best = np.minimum(np.minimum(acc[i - 1, j], acc[i, j - 1]), acc[i - 1, j - 1])
        acc[i, j] = cost[i - 1, j - 1] + best
    return float(acc[n, m])


def dtw_distance(pred, truth) -> float:
    """DTW between size sequences after z-scoring both with the truth statistics,
    divided by the truth length."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if len(pred) == 0 or len(truth) == 0:
        raise EmptySequence("DTW needs non-empty sequences")
    mu = truth.mean()
    sd = truth.std()
    sd = sd if sd > 0 else 1.0
    return dtw_raw((pred - mu) / sd, (truth - mu) / sd) / len(truth)

"""Packetisation and a single-queue link model (rate limit, delay, jitter, no reordering)."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .codec import FrameSizeSequence
from .errors import InvalidConfig, InvariantError, ParseError, SchemaError


def quantize_ns(t: np.ndarray) -> np.ndarray:
    """Round to whole nanoseconds so 9-decimal CSV round trips are exact."""
    return np.rint(np.asarray(t, dtype=np.float64) * 1e9) / 1e9


@dataclass(frozen=True)
class NetworkConfig:
    bandwidth_bps: float = 50e6
    delay_s: float = 0.020
    jitter_s: float = 0.005
    payload_bytes: int = 1400
    seed: int = 0

    def __post_init__(self):
        if not self.bandwidth_bps > 0:
            raise InvalidConfig("bandwidth_bps must be positive")
        if self.delay_s < 0 or self.jitter_s < 0:
            raise InvalidConfig("delay_s and jitter_s must be non-negative")
        if int(self.payload_bytes) < 1:
            raise InvalidConfig("payload_bytes must be >= 1")


@dataclass
class PacketTrace:
    send_t: np.ndarray
    arrive_t: np.ndarray
    size: np.ndarray
    node_id: np.ndarray
    frame_idx: np.ndarray | None = None
    last_pkt: np.ndarray | None = None

    def __post_init__(self):
        self.send_t = np.asarray(self.send_t, dtype=np.float64)
        self.arrive_t = np.asarray(self.arrive_t, dtype=np.float64)
        self.size = np.asarray(self.size, dtype=np.int64)
        n = len(self.size)
        self.node_id = np.broadcast_to(np.asarray(self.node_id, dtype=np.int64), (n,)).copy()
        if (self.frame_idx is None) != (self.last_pkt is None):
            raise InvalidConfig("frame_idx and last_pkt must be given together")
        if self.frame_idx is not None:
            self.frame_idx = np.asarray(self.frame_idx, dtype=np.int64)
            self.last_pkt = np.asarray(self.last_pkt, dtype=bool)

    def __len__(self):
        return len(self.size)

    @property
    def labeled(self) -> bool:
        return self.frame_idx is not None

    def unlabeled(self) -> "PacketTrace":
        return PacketTrace(self.send_t, self.arrive_t, self.size, self.node_id)

    def __eq__(self, other):
        if not isinstance(other, PacketTrace):
            return NotImplemented
        if self.labeled != other.labeled:
            return False
        fields = ["send_t", "arrive_t", "size", "node_id"]
        if self.labeled:
            fields += ["frame_idx", "last_pkt"]
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in fields)


def packetize(frames: FrameSizeSequence, cfg: NetworkConfig, node_id: int = 0) -> PacketTrace:
    """Split every frame into full payloads plus a remainder, all sent at the frame time.

    Zero-byte frames produce no packets.
    """
    sizes = frames.sizes
    payload = int(cfg.payload_bytes)
    counts = -(-sizes // payload)
    total = int(counts.sum())
    frame_idx = np.repeat(np.arange(len(sizes)), counts)
    ends = np.cumsum(counts)
    pos_in_frame = np.arange(total) - np.repeat(ends - counts, counts)
    last = pos_in_frame == np.repeat(counts - 1, counts)
    pkt = np.full(total, payload, dtype=np.int64)
    pkt[last] = sizes[counts > 0] - (counts[counts > 0] - 1) * payload
    send = np.repeat(quantize_ns(frames.t_s), counts)
    return PacketTrace(send, send.copy(), pkt, node_id, frame_idx, last)


def serialization_schedule(send_t: np.ndarray, size: np.ndarray, bandwidth_bps: float) -> np.ndarray:
    """Departure times of a FIFO link: ``d_k = max(s_k, d_{k-1}) + tx_k``.

    Unrolled as ``d_k = C_k + max_{j<=k}(s_j - C_{j-1})`` with ``C`` the
    cumulative transmission time.
    """
    tx = np.asarray(size, dtype=np.float64) * 8.0 / bandwidth_bps
    cum = np.cumsum(tx)
    prev = cum - tx
    return cum + np.maximum.accumulate(np.asarray(send_t, dtype=np.float64) - prev)


def emulate(trace: PacketTrace, cfg: NetworkConfig, seed=None) -> PacketTrace:
    if len(trace) and np.any(np.diff(trace.send_t) < 0):
        raise InvariantError("send times must be non-decreasing")
    depart = serialization_schedule(trace.send_t, trace.size, cfg.bandwidth_bps)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    jitter = rng.uniform(-cfg.jitter_s, cfg.jitter_s, len(trace)) if cfg.jitter_s > 0 else 0.0
    # A packet never arrives before it has left the queue, whatever the jitter draw.
    raw = np.maximum(depart + cfg.delay_s + jitter, depart)
    arrive = np.maximum.accumulate(quantize_ns(raw)) if len(trace) else raw
    return PacketTrace(trace.send_t, arrive, trace.size, trace.node_id, trace.frame_idx,
                       trace.last_pkt)


# --- CSV ---------------------------------------------------------------------

BASE_COLUMNS = ["send_t_s", "arrive_t_s", "size_bytes", "node_id"]
LABEL_COLUMNS = ["frame_idx", "last_pkt"]


def export_trace(trace: PacketTrace, path, labeled: bool = True) -> None:
    labeled = labeled and trace.labeled
    cols = BASE_COLUMNS + (LABEL_COLUMNS if labeled else [])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(len(trace)):
            row = f"{trace.send_t[k]:.9f},{trace.arrive_t[k]:.9f},{trace.size[k]},{trace.node_id[k]}"
            if labeled:
                row += f",{trace.frame_idx[k]},{int(trace.last_pkt[k])}"
            fh.write(row + "\n")


def import_trace(path) -> PacketTrace:
    """Read a packet CSV.  Line numbers in errors count data rows from 1."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError("empty file")
        header = [h.strip() for h in header]
        missing = [c for c in BASE_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"missing columns: {', '.join(missing)}")
        has_labels = [c in header for c in LABEL_COLUMNS]
        if any(has_labels) and not all(has_labels):
            raise SchemaError("frame_idx and last_pkt must appear together")
        labeled = all(has_labels)
        col = {h: i for i, h in enumerate(header)}
        send, arrive, size, node, fidx, last = [], [], [], [], [], []
        for line, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                s, a = float(row[col["send_t_s"]]), float(row[col["arrive_t_s"]])
                b, nid = int(row[col["size_bytes"]]), int(row[col["node_id"]])
                if labeled:
                    fi, lp = int(row[col["frame_idx"]]), int(row[col["last_pkt"]])
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line) from exc
            if b < 1:
                raise InvariantError("size_bytes must be positive", line)
            if a < s:
                raise InvariantError("arrive_t_s precedes send_t_s", line)
            if arrive and a < arrive[-1]:
                raise InvariantError("arrival times must be non-decreasing", line)
            if labeled:
                if lp not in (0, 1):
                    raise ParseError("last_pkt must be 0 or 1", line)
                if fidx and fi != fidx[-1] and not last[-1]:
                    raise InvariantError(f"frame {fidx[-1]} has no last packet", line)
                if fidx and fi == fidx[-1] and last[-1]:
                    raise InvariantError(f"frame {fi} continues after its last packet", line)
                if fidx and fi < fidx[-1]:
                    raise InvariantError("frame_idx must be non-decreasing", line)
                fidx.append(fi)
                last.append(bool(lp))
            send.append(s)
            arrive.append(a)
            size.append(b)
            node.append(nid)
    if labeled and last and not last[-1]:
        raise InvariantError(f"frame {fidx[-1]} has no last packet", len(last))
    return PacketTrace(np.array(send), np.array(arrive), np.array(size, dtype=np.int64),
                       np.array(node, dtype=np.int64),
                       np.array(fidx, dtype=np.int64) if labeled else None,
                       np.array(last, dtype=bool) if labeled else None)

"""Per-link QoS metrics from port counters and delay probes.

Residual bandwidth, packet loss, packet error rate, and link delay are
derived from synthetic port-counter and probe samples; distance comes
from AP deployment coordinates. A snapshot holds the directed per-edge
metrics for one instant and can be max-min normalized per channel.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

CHANNELS = ("bw", "delay", "loss", "err", "dist")

# Link capacity default (Mbps). The top of the configured bandwidth
# range is used when no explicit capacity is given.
DEFAULT_BW_MAX = 40.0


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class PortCounterSample:
    """One reading of a port's cumulative counters.

    tx_*/rx_* are cumulative since port-up; t_dur is seconds since port-up.
    """

    tx_p: int
    rx_p: int
    tx_b: int
    rx_b: int
    tx_err: int
    rx_err: int
    t_dur: float

    def __post_init__(self):
        for name in ("tx_p", "rx_p", "tx_b", "rx_b", "tx_err", "rx_err", "t_dur"):
            if getattr(self, name) < 0:
                raise MetricError(f"counter {name} must be nonnegative")


@dataclass(frozen=True)
class DelayProbe:
    """Propagation and controller round-trip times for one link (ms)."""

    t_fwd: float
    t_re: float
    rtt1: float
    rtt2: float

    def __post_init__(self):
        for name in ("t_fwd", "t_re", "rtt1", "rtt2"):
            if getattr(self, name) < 0:
                raise MetricError(f"probe field {name} must be nonnegative")


@dataclass(frozen=True)
class EdgeMetrics:
    """Metrics of one directed edge: residual bw (Mbps), delay (ms),
    loss/err fractions, distance (m)."""

    bw: float
    delay: float
    loss: float
    err: float
    dist: float

    def __post_init__(self):
        for name in ("bw", "delay", "loss", "err", "dist"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.bw < 0 or self.delay < 0 or self.dist < 0:
            raise MetricError("bw, delay and dist must be nonnegative")
        if not (0.0 <= self.loss <= 1.0) or not (0.0 <= self.err <= 1.0):
            raise MetricError("loss and err must lie in [0, 1]")

    def value(self, channel):
        return getattr(self, channel)


def _clamp01(x):
    return min(1.0, max(0.0, x))


def compute_bandwidth(s1, s2, bw_max):
    """Used and residual bandwidth (Mbps) from two successive samples.

    Byte counters convert to Mbps via *8/1e6; the byte delta is taken as
    |later - earlier| over a positive time delta, and the residual
    bandwidth is clamped into [0, bw_max].
    """
    dt = s2.t_dur - s1.t_dur
    if dt <= 0:
        raise MetricError(f"non-increasing sample times: {s1.t_dur} -> {s2.t_dur}")
    dbytes = abs((s2.tx_b + s2.rx_b) - (s1.tx_b + s1.rx_b))
    ubw = 8e-6 * dbytes / dt
    bw = min(bw_max, max(0.0, bw_max - ubw))
    return ubw, bw


def compute_loss(tx, rx):
    """Loss fraction on a directed link: sender tx_p vs receiver rx_p."""
    if tx.tx_p <= 0:
        raise MetricError("loss undefined: sender transmitted no packets")
    return _clamp01((tx.tx_p - rx.rx_p) / tx.tx_p)


def compute_err(sender, receiver):
    """Error fraction: erroneous packets over packets seen at both ends."""
    denom = sender.tx_p + receiver.rx_p
    if denom <= 0:
        raise MetricError("err undefined: no packets at either end")
    return _clamp01((sender.tx_err + receiver.rx_err) / denom)


def compute_delay(p):
    """Link delay (ms) from LLDP propagation and controller RTTs.

    Probe noise can push the raw value negative; the result clamps to 0.
    """
    return max(0.0, (p.t_fwd + p.t_re - p.rtt1 - p.rtt2) / 2.0)


def distance(a, b):
    """Euclidean distance between two AP deployment coordinates."""
    return math.dist(a, b)


class MetricSnapshot:
    """Directed per-edge metrics for one instant.

    Keys are directed node pairs (u, v); a snapshot covering a topology
    holds both directions of every undirected edge.
    """

    def __init__(self, metrics):
        self._metrics = dict(metrics)

    def __contains__(self, edge):
        return edge in self._metrics

    def __len__(self):
        return len(self._metrics)

    def __getitem__(self, edge):
        try:
            return self._metrics[edge]
        except KeyError:
            raise MetricError(f"no metrics for directed edge {edge}") from None

    def get(self, edge):
        return self._metrics.get(edge)

    def edges(self):
        return self._metrics.keys()

    def items(self):
        return self._metrics.items()

    def missing_edges(self, net):
        """Directed topology edges not covered by this snapshot."""
        missing = []
        for u, v in sorted(net.edges):
            for e in ((u, v), (v, u)):
                if e not in self._metrics:
                    missing.append(e)
        return missing

    def covers(self, net):
        return not self.missing_edges(net)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "v", "bw", "delay", "loss", "err", "dist"])
            for (u, v), m in sorted(self._metrics.items()):
                w.writerow([u, v, repr(m.bw), repr(m.delay), repr(m.loss),
                            repr(m.err), repr(m.dist)])

    def to_json(self, path):
        rows = [{"u": u, "v": v, "bw": m.bw, "delay": m.delay, "loss": m.loss,
                 "err": m.err, "dist": m.dist}
                for (u, v), m in sorted(self._metrics.items())]
        with open(path, "w") as fh:
            json.dump({"edges": rows}, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        metrics = {}
        for row in data["edges"]:
            metrics[(row["u"], row["v"])] = EdgeMetrics(
                bw=row["bw"], delay=row["delay"], loss=row["loss"],
                err=row["err"], dist=row["dist"])
        return cls(metrics)


class NormalizedSnapshot(MetricSnapshot):
    """Snapshot after per-channel max-min normalization.

    ``bounds[channel] = (lo, hi)`` records the scaling used, permitting
    the inverse mapping back to raw units.
    """

    def __init__(self, metrics, bounds):
        super().__init__(metrics)
        self.bounds = dict(bounds)

    def denormalize(self, edge):
        """Raw-unit EdgeMetrics for one directed edge."""
        m = self[edge]
        raw = {}
        for c in CHANNELS:
            lo, hi = self.bounds[c]
            raw[c] = lo + m.value(c) * (hi - lo)
        return EdgeMetrics(**raw)

    def channel_matrices(self, n):
        """(5, n, n) array of the metric channels; non-edges carry 0."""
        mats = np.zeros((len(CHANNELS), n, n))
        for (u, v), m in self._metrics.items():
            for ci, c in enumerate(CHANNELS):
                mats[ci, u, v] = m.value(c)
        mats.setflags(write=False)
        return mats


def normalize(snap):
    """Max-min normalize every channel across all directed edges.

    A degenerate channel (max == min) maps to 0 everywhere.
    """
    if len(snap) == 0:
        raise MetricError("cannot normalize an empty snapshot")
    bounds = {}
    for c in CHANNELS:
        vals = [m.value(c) for m in dict(snap.items()).values()]
        bounds[c] = (min(vals), max(vals))
    out = {}
    for edge, m in snap.items():
        scaled = {}
        for c in CHANNELS:
            lo, hi = bounds[c]
            scaled[c] = 0.0 if hi == lo else (m.value(c) - lo) / (hi - lo)
        out[edge] = EdgeMetrics(**scaled)
    return NormalizedSnapshot(out, bounds)

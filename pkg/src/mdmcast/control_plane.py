"""Simulated multi-controller control plane.

Local controllers turn per-domain counter traces into metric snapshots
and publish them to a root store through a JSON message contract; the
root controller owns inter-domain edge metrics and merges everything
into the global view. Installed trees compile to per-node flow tables,
and group management grafts/prunes member paths.

Message contract (one JSON object per message):
  {"msg_type": ..., "domain": int, "seq": int, "payload": {...}}
  msg_type        payload
  topology_sync   {"nodes": [int], "edges": [[u, v]]}
  metrics_sync    {"edges": [{"u", "v", "bw", "delay", "loss", "err", "dist"}]}
  tree_install    {"group_id": int, "tree": <tree JSON>}
  group_update    {"group_id": int, "node": int, "event": "add" | "leave"}
`domain` 0 is the root controller (it publishes inter-domain metrics).
`seq` is strictly increasing per (domain, msg_type); stale sequence
numbers are discarded, so replays and reordering cannot corrupt state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .baselines import dijkstra, edge_weights, shortest_path
from .link_metrics import (DelayProbe, EdgeMetrics, MetricSnapshot,
                           PortCounterSample, compute_bandwidth, compute_delay,
                           compute_err, compute_loss, distance)
from .multicast import MulticastError, tree_from_edges, tree_paths, validate

MSG_TYPES = ("topology_sync", "metrics_sync", "tree_install", "group_update")
ROOT_DOMAIN = 0


class ControlPlaneError(ValueError):
    pass


@dataclass(frozen=True)
class CcmMessage:
    msg_type: str
    domain: int
    seq: int
    payload: dict

    def __post_init__(self):
        if self.msg_type not in MSG_TYPES:
            raise ControlPlaneError(f"unknown msg_type {self.msg_type!r}")
        if self.domain < 0:
            raise ControlPlaneError("domain must be >= 0")
        if self.seq < 1:
            raise ControlPlaneError("seq must be >= 1")
        _validate_payload(self.msg_type, self.payload)

    def to_json_dict(self):
        return {"msg_type": self.msg_type, "domain": self.domain,
                "seq": self.seq, "payload": self.payload}

    @classmethod
    def from_json_dict(cls, data):
        try:
            return cls(data["msg_type"], data["domain"], data["seq"],
                       data["payload"])
        except KeyError as exc:
            raise ControlPlaneError(f"message missing field {exc}") from exc


_METRIC_FIELDS = ("bw", "delay", "loss", "err", "dist")


def _validate_payload(msg_type, payload):
    if not isinstance(payload, dict):
        raise ControlPlaneError("payload must be an object")
    if msg_type == "metrics_sync":
        edges = payload.get("edges")
        if not isinstance(edges, list):
            raise ControlPlaneError("metrics_sync payload needs an edge list")
        for row in edges:
            missing = [k for k in ("u", "v", *_METRIC_FIELDS) if k not in row]
            if missing:
                raise ControlPlaneError(
                    f"metrics_sync edge record missing {missing}")
    elif msg_type == "topology_sync":
        if "nodes" not in payload or "edges" not in payload:
            raise ControlPlaneError("topology_sync needs 'nodes' and 'edges'")
    elif msg_type == "tree_install":
        if "group_id" not in payload or "tree" not in payload:
            raise ControlPlaneError("tree_install needs 'group_id' and 'tree'")
    elif msg_type == "group_update":
        if payload.get("event") not in ("add", "leave"):
            raise ControlPlaneError("group_update event must be add|leave")
        if "node" not in payload or "group_id" not in payload:
            raise ControlPlaneError("group_update needs 'node' and 'group_id'")


class RootStore:
    """Root controller state: last-writer-wins by sequence number."""

    def __init__(self):
        self._last_seq = {}
        self._metrics = {}
        self._topology = {}
        self._trees = {}
        self._group_events = []

    def apply(self, msg):
        """Apply one message; returns False when stale (seq already seen)."""
        key = (msg.domain, msg.msg_type)
        if msg.seq <= self._last_seq.get(key, 0):
            return False
        self._last_seq[key] = msg.seq
        if msg.msg_type == "metrics_sync":
            edges = {}
            for row in msg.payload["edges"]:
                edges[(row["u"], row["v"])] = EdgeMetrics(
                    bw=row["bw"], delay=row["delay"], loss=row["loss"],
                    err=row["err"], dist=row["dist"])
            self._metrics[msg.domain] = edges
        elif msg.msg_type == "topology_sync":
            self._topology[msg.domain] = msg.payload
        elif msg.msg_type == "tree_install":
            self._trees[msg.payload["group_id"]] = msg.payload["tree"]
        elif msg.msg_type == "group_update":
            self._group_events.append(dict(msg.payload))
        return True

    def metrics_view(self):
        merged = {}
        for d in sorted(self._metrics):
            merged.update(self._metrics[d])
        return merged

    def global_snapshot(self, net):
        """Merged MetricSnapshot; raises listing any uncovered edge."""
        snap = MetricSnapshot(self.metrics_view())
        missing = snap.missing_edges(net)
        if missing:
            raise ControlPlaneError(
                f"global view incomplete, missing directed edges: {missing}")
        return snap

    def installed_tree(self, group_id):
        return self._trees.get(group_id)


def sync_to_root(messages, net=None):
    """Fold messages into a fresh root store (idempotent, order-robust).

    Returns the store; pass `net` to also get the merged global snapshot
    as (store, snapshot).
    """
    store = RootStore()
    for msg in messages:
        store.apply(msg)
    if net is None:
        return store
    return store, store.global_snapshot(net)


# Counter traces: JSON lines with either port-counter samples or probes.
#   {"kind": "port", "u", "v", "t_dur", "tx_p", "rx_p", "tx_b", "rx_b",
#    "tx_err", "rx_err"}
#   {"kind": "probe", "u", "v", "t_fwd", "t_re", "rtt1", "rtt2"}

def write_trace(records, path):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def read_trace(path):
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def synthesize_trace(net, snap, bw_max, interval=1.0, packets=200_000):
    """Counter/probe records that reproduce `snap` through the metric math.

    Inverse of collection: byte deltas encode used bandwidth, packet
    deltas encode loss, error counters encode error rate, and probe
    times encode delay. Quantization to integer counters keeps results
    within ~1e-5 of the source snapshot.
    """
    records = []
    for (u, v), m in sorted(snap.items()):
        ubw = max(0.0, bw_max - m.bw)
        dbytes = round(ubw * interval / 8e-6)
        rx_p = round(packets * (1.0 - m.loss))
        err_total = round(m.err * (packets + rx_p))
        records.append({"kind": "port", "u": u, "v": v, "sample": 0,
                        "t_dur": 100.0, "tx_p": 0, "rx_p": 0, "tx_b": 0,
                        "rx_b": 0, "tx_err": 0, "rx_err": 0})
        records.append({"kind": "port", "u": u, "v": v, "sample": 1,
                        "t_dur": 100.0 + interval, "tx_p": packets,
                        "rx_p": 0, "tx_b": dbytes, "rx_b": 0,
                        "tx_err": err_total, "rx_err": 0,
                        "_rx_p_for_reverse": rx_p})
    # second pass: receiver-side counters live on the reverse port record
    by_key = {(r["u"], r["v"], r["sample"]): r for r in records}
    for (u, v), m in sorted(snap.items()):
        if (v, u, 1) in by_key:
            by_key[(v, u, 1)]["rx_p"] = by_key[(u, v, 1)]["_rx_p_for_reverse"]
    for rec in records:
        rec.pop("_rx_p_for_reverse", None)
    for u, v in {(r["u"], r["v"]) for r in records}:
        if u < v:
            m = snap[(u, v)]
            records.append({"kind": "probe", "u": u, "v": v,
                            "t_fwd": m.delay + 2.0, "t_re": m.delay + 2.0,
                            "rtt1": 2.0, "rtt2": 2.0})
    return records


def _index_trace(records):
    ports = {}
    probes = {}
    for rec in records:
        if rec.get("kind") == "port":
            ports.setdefault((rec["u"], rec["v"]), []).append(rec)
        elif rec.get("kind") == "probe":
            key = tuple(sorted((rec["u"], rec["v"])))
            probes[key] = rec
    for samples in ports.values():
        samples.sort(key=lambda r: r["t_dur"])
    return ports, probes


def _sample_from(rec):
    return PortCounterSample(rec["tx_p"], rec["rx_p"], rec["tx_b"],
                             rec["rx_b"], rec["tx_err"], rec["rx_err"],
                             rec["t_dur"])


def _edge_metrics_from_trace(net, ports, probes, u, v, bw_max):
    fwd = ports.get((u, v))
    rev = ports.get((v, u))
    probe = probes.get(tuple(sorted((u, v))))
    missing = []
    if not fwd or len(fwd) < 2:
        missing.append(f"port samples for {(u, v)}")
    if not rev or len(rev) < 2:
        missing.append(f"port samples for {(v, u)}")
    if probe is None:
        missing.append(f"delay probe for {tuple(sorted((u, v)))}")
    if missing:
        raise ControlPlaneError("trace incomplete: " + "; ".join(missing))
    s1, s2 = _sample_from(fwd[-2]), _sample_from(fwd[-1])
    r2 = _sample_from(rev[-1])
    _, bw = compute_bandwidth(s1, s2, bw_max)
    loss = compute_loss(s2, r2)
    err = compute_err(s2, r2)
    delay = compute_delay(DelayProbe(probe["t_fwd"], probe["t_re"],
                                     probe["rtt1"], probe["rtt2"]))
    dist = distance(net.coords[u], net.coords[v])
    return EdgeMetrics(bw=bw, delay=delay, loss=loss, err=err, dist=dist)


def collect_domain_snapshot(net, part, domain, records, bw_max):
    """Per-domain snapshot from a counter trace (intra edges only)."""
    ports, probes = _index_trace(records)
    metrics = {}
    missing = []
    for u, v in sorted(part.intra_edges(domain)):
        for a, b in ((u, v), (v, u)):
            try:
                metrics[(a, b)] = _edge_metrics_from_trace(
                    net, ports, probes, a, b, bw_max)
            except ControlPlaneError as exc:
                missing.append(str(exc))
    if missing:
        raise ControlPlaneError(
            f"domain N_{domain} trace incomplete: " + " | ".join(missing))
    return MetricSnapshot(metrics)


def collect_inter_snapshot(net, part, records, bw_max):
    """Root-owned inter-domain edge metrics from a counter trace."""
    ports, probes = _index_trace(records)
    metrics = {}
    for u, v in sorted(part.inter_edges):
        for a, b in ((u, v), (v, u)):
            metrics[(a, b)] = _edge_metrics_from_trace(
                net, ports, probes, a, b, bw_max)
    return MetricSnapshot(metrics)


def domain_sync_messages(net, part, records, bw_max, seq=1):
    """metrics_sync messages for every local controller plus the root."""
    msgs = []
    for d in range(1, part.m + 1):
        snap = collect_domain_snapshot(net, part, d, records, bw_max)
        msgs.append(metrics_message(d, seq, snap))
    inter = collect_inter_snapshot(net, part, records, bw_max)
    msgs.append(metrics_message(ROOT_DOMAIN, seq, inter))
    return msgs


def metrics_message(domain, seq, snap):
    rows = [{"u": u, "v": v, "bw": m.bw, "delay": m.delay, "loss": m.loss,
             "err": m.err, "dist": m.dist}
            for (u, v), m in sorted(snap.items())]
    return CcmMessage("metrics_sync", domain, seq, {"edges": rows})


def locate_group_domains(group, part):
    """Source domain plus the destination map per domain."""
    by_domain = {}
    for d in group.dests:
        by_domain.setdefault(part.domain_of(d), set()).add(d)
    return part.domain_of(group.src), by_domain


def install_tree(tree, group, part, group_id):
    """Compile a validated tree into per-node flow entries.

    Every in-tree node gets one entry: in-neighbor is its tree parent
    (none at the source), out-neighbors its tree children. Leaf
    destinations end up with delivery-only entries (empty out list).
    """
    problems = validate(tree, group, part)
    if problems:
        raise ControlPlaneError(
            "refusing to install invalid tree: "
            + "; ".join(str(p) for p in problems))
    parent, order = tree_paths(group.src, tree.flat_edges)
    children = {v: [] for v in order}
    for v in order:
        if parent[v] is not None:
            children[parent[v]].append(v)
    tables = {}
    for v in order:
        tables[v] = [{"group": group_id, "in": parent[v],
                      "out": sorted(children[v])}]
    return tables


def simulate_delivery(tables, group_id, src):
    """Follow out-neighbors from the source; returns the visited node set."""
    visited = set()
    stack = [src]
    while stack:
        v = stack.pop()
        if v in visited:
            continue
        visited.add(v)
        for entry in tables.get(v, ()):
            if entry["group"] == group_id:
                stack.extend(entry["out"])
    return visited


def flow_delta(old_tables, new_tables):
    """Per-node install/update/remove sets between two table maps."""
    delta = {"install": {}, "remove": []}
    for v, entries in new_tables.items():
        if old_tables.get(v) != entries:
            delta["install"][v] = entries
    for v in old_tables:
        if v not in new_tables:
            delta["remove"].append(v)
    delta["remove"].sort()
    return delta


def mgm_join(net, part, tree, group, v, snap, weights, group_id=0):
    """Graft the cheapest path from v onto the tree and mark v online.

    Returns (tree', group', flow delta). `snap` must be normalized; the
    graft minimizes the composite edge weight.
    """
    if v == group.src:
        raise ControlPlaneError("source node cannot join its own group")
    if v in group.online:
        raise ControlPlaneError(f"{v} is already an online member")
    if v not in net.adj:
        raise ControlPlaneError(f"unknown node {v}")
    old_tables = install_tree(tree, group, part, group_id)
    tree_nodes = set(tree.nodes()) | {group.src}
    group2 = group.with_member(v, online=True)
    if v in tree_nodes:
        new_tree = tree
    else:
        dist, parents = dijkstra(edge_weights(snap, weights), v)
        best = None
        for t in sorted(tree_nodes):
            d = dist.get(t)
            if d is not None and d != float("inf"):
                if best is None or d < best[0]:
                    best = (d, t)
        if best is None:
            raise ControlPlaneError(f"{v} cannot reach the tree")
        path = shortest_path(parents, v, best[1])
        new_edges = set(tree.flat_edges)
        new_edges.update(tuple(sorted(e)) for e in zip(path[:-1], path[1:]))
        new_tree = tree_from_edges(group.src, new_edges, part)
    new_tables = install_tree(new_tree, group2, part, group_id)
    return new_tree, group2, flow_delta(old_tables, new_tables)


def mgm_leave(net, part, tree, group, v, group_id=0):
    """Mark v offline and prune its now-dangling branch.

    Pruning walks from v toward the tree and stops at the first branch
    point, the source, or another online destination. Returns
    (tree', group', flow delta).
    """
    if v not in group.dests or v not in group.online:
        raise ControlPlaneError(f"{v} is not an online member")
    old_tables = install_tree(tree, group, part, group_id)
    group2 = group.with_offline(v)
    edges = set(tree.flat_edges)
    adj = {}
    for a, b in edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    keep = set(group2.online) | {group.src}
    cur = v
    while cur not in keep and len(adj.get(cur, ())) == 1:
        nxt = next(iter(adj[cur]))
        edges.discard(tuple(sorted((cur, nxt))))
        adj[nxt].discard(cur)
        adj.pop(cur)
        cur = nxt
    new_tree = tree_from_edges(group.src, edges, part)
    new_tables = install_tree(new_tree, group2, part, group_id)
    return new_tree, group2, flow_delta(old_tables, new_tables)

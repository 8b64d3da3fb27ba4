"""Multi-domain network model and synthetic topology generation.

Nodes are dense 0-based ids; domains are 1-based (N_1..N_m). Edges are
stored undirected for connectivity; per-edge metrics are directed and
live in snapshots. The generator lays domains out as well-separated
coordinate clusters and rescales inter-domain link metrics until the
inter/intra cost separation assumption holds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import baselines
from .link_metrics import EdgeMetrics, MetricSnapshot, distance, normalize
from .multicast import DEFAULT_WEIGHTS, single_edge_cost


class TopologyError(ValueError):
    pass


def _canon(u, v):
    return (u, v) if u <= v else (v, u)


class Network:
    """Connected undirected graph with per-node 2-D coordinates (meters)."""

    def __init__(self, nodes, edges, coords):
        self.nodes = sorted(nodes)
        if self.nodes != list(range(len(self.nodes))):
            raise TopologyError("node ids must be dense integers 0..N-1")
        self.edges = frozenset(_canon(u, v) for u, v in edges)
        for u, v in self.edges:
            if u == v:
                raise TopologyError(f"self-loop on node {u}")
            if u not in coords or v not in coords:
                raise TopologyError(f"edge {(u, v)} references unknown node")
        missing = [v for v in self.nodes if v not in coords]
        if missing:
            raise TopologyError(f"nodes without coordinates: {missing}")
        self.coords = {v: (float(coords[v][0]), float(coords[v][1]))
                       for v in self.nodes}
        self.adj = {v: [] for v in self.nodes}
        for u, v in sorted(self.edges):
            self.adj[u].append(v)
            self.adj[v].append(u)
        for v in self.adj:
            self.adj[v].sort()
        if self.nodes and not self._connected(self.nodes):
            raise TopologyError("network graph is disconnected")

    @property
    def n(self):
        return len(self.nodes)

    def _connected(self, nodes, allowed=None):
        nodes = list(nodes)
        if not nodes:
            return True
        allowed = set(nodes) if allowed is None else set(allowed)
        seen = {nodes[0]}
        stack = [nodes[0]]
        while stack:
            u = stack.pop()
            for v in self.adj[u]:
                if v in allowed and v not in seen:
                    seen.add(v)
                    stack.append(v)
        return set(nodes) <= seen

    def edge_distance(self, u, v):
        return distance(self.coords[u], self.coords[v])


class DomainPartition:
    """Assignment of every node to one of m connected control domains."""

    def __init__(self, net, assignment):
        missing = [v for v in net.nodes if v not in assignment]
        if missing:
            raise TopologyError(f"unassigned node: {missing[0]}")
        unknown = sorted(set(assignment) - set(net.nodes))
        if unknown:
            raise TopologyError(f"assignment references unknown node {unknown[0]}")
        self.assignment = {v: int(assignment[v]) for v in net.nodes}
        domains = sorted(set(self.assignment.values()))
        if domains != list(range(1, len(domains) + 1)):
            raise TopologyError(f"domain ids must be 1..m, got {domains}")
        self.m = len(domains)
        self.net = net

        members = {d: [] for d in domains}
        for v in net.nodes:
            members[self.assignment[v]].append(v)
        self.members = {d: tuple(sorted(vs)) for d, vs in members.items()}
        for d, vs in self.members.items():
            if not net._connected(vs, allowed=vs):
                raise TopologyError(f"domain N_{d} induces a disconnected subgraph")

        inter = set()
        bnd = {d: set() for d in domains}
        for u, v in net.edges:
            du, dv = self.assignment[u], self.assignment[v]
            if du != dv:
                inter.add(_canon(u, v))
                bnd[du].add(u)
                bnd[dv].add(v)
        self.inter_edges = frozenset(inter)
        self.bnd = {d: frozenset(s) for d, s in bnd.items()}

    def intra_edges(self, d):
        return frozenset(e for e in self.net.edges
                         if e not in self.inter_edges
                         and self.assignment[e[0]] == d)

    def domain_of(self, v):
        try:
            return self.assignment[v]
        except KeyError:
            raise TopologyError(f"unknown node {v}") from None


def domain_of(p, v):
    return p.domain_of(v)


def dests_in_domain(p, group, d):
    """Group destinations whose domain is d (empty set permitted)."""
    return {v for v in group.dests if p.domain_of(v) == d}


@dataclass(frozen=True)
class TopoGenParams:
    n_domains: int = 4
    nodes_per_domain: int = 7
    intra_degree: float = 5.0
    inter_links_per_adjacent_pair: int = 2
    bw_range: tuple = (5.0, 40.0)
    delay_range: tuple = (1.0, 10.0)
    dist_range: tuple = (30.0, 120.0)
    loss_range: tuple = (0.0, 0.05)
    err_range: tuple = (0.0, 0.02)
    bw_max: float = 40.0
    seed: int = 0

    def __post_init__(self):
        if self.n_domains < 1 or self.nodes_per_domain < 1:
            raise TopologyError("domain and node counts must be positive")
        if self.inter_links_per_adjacent_pair < 1 and self.n_domains > 1:
            raise TopologyError("adjacent domains need at least one inter link")
        for name in ("bw_range", "delay_range", "dist_range", "loss_range",
                     "err_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise TopologyError(f"invalid {name}: ({lo}, {hi})")
        if not (0 < self.bw_range[0] and self.bw_range[1] <= self.bw_max):
            raise TopologyError("bw_range must lie in (0, bw_max]")


# Topology file schema: {"nodes": [{"id", "x", "y", "domain"}], "edges": [[u, v]]}

def load_topology(path):
    """Load and validate a topology JSON file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict) or "nodes" not in data or "edges" not in data:
        raise TopologyError(f"{path}: topology file needs 'nodes' and 'edges'")
    coords = {}
    assignment = {}
    ids = []
    for row in data["nodes"]:
        if "id" not in row:
            raise TopologyError("node record without 'id'")
        v = int(row["id"])
        ids.append(v)
        if "x" not in row or "y" not in row:
            raise TopologyError(f"node {v} missing coordinates")
        coords[v] = (row["x"], row["y"])
        if row.get("domain") is None:
            raise TopologyError(f"unassigned node: {v} has no domain")
        assignment[v] = int(row["domain"])
    edges = [(int(u), int(v)) for u, v in data["edges"]]
    net = Network(ids, edges, coords)
    part = DomainPartition(net, assignment)
    return net, part


def save_topology(net, part, path):
    data = {
        "nodes": [{"id": v, "x": net.coords[v][0], "y": net.coords[v][1],
                   "domain": part.assignment[v]} for v in net.nodes],
        "edges": sorted([list(e) for e in net.edges]),
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class Hypothesis2Report:
    passed: bool
    min_inter_cost: float
    max_intra_cost: float
    violations: tuple

    def __bool__(self):
        return self.passed


def check_hypothesis2(net, p, snap, w):
    """Cost-separation check between inter-domain links and intra paths.

    Passes iff the cheapest inter-domain single-edge cost exceeds the
    most expensive min-cost path between any two nodes of one domain.
    `snap` must be a NormalizedSnapshot covering all edges.
    """
    inter_costs = {}
    for u, v in sorted(p.inter_edges):
        for e in ((u, v), (v, u)):
            inter_costs[e] = single_edge_cost(snap[e], w)

    max_intra = 0.0
    worst_pair = None
    for d in range(1, p.m + 1):
        intra = p.intra_edges(d)
        weights = {}
        for u, v in intra:
            weights[(u, v)] = single_edge_cost(snap[(u, v)], w)
            weights[(v, u)] = single_edge_cost(snap[(v, u)], w)
        members = p.members[d]
        if len(members) < 2 or not weights:
            continue
        for s in members:
            dist, _ = baselines.dijkstra(weights, s)
            for t in members:
                if t == s:
                    continue
                c = dist.get(t, math.inf)
                if not math.isinf(c) and c > max_intra:
                    max_intra = c
                    worst_pair = (d, s, t)

    if not inter_costs:
        return Hypothesis2Report(True, math.inf, max_intra, ())

    min_inter = min(inter_costs.values())
    violations = tuple(
        {"inter_edge": list(e), "inter_cost": c,
         "intra_bound": max_intra, "worst_intra_pair": worst_pair}
        for e, c in sorted(inter_costs.items()) if c <= max_intra)
    return Hypothesis2Report(min_inter > max_intra, min_inter, max_intra, violations)


def _place_domain_nodes(rng, center, count, dist_range):
    """Points in a disk of radius dmax/2 around center, pairwise >= dmin apart."""
    dmin, dmax = dist_range
    radius = dmax / 2.0
    pts = []
    attempts = 0
    while len(pts) < count:
        attempts += 1
        if attempts > 20000:
            raise TopologyError(
                f"cannot place {count} nodes {dmin} m apart in a {radius} m disk")
        r = radius * math.sqrt(rng.uniform(0, 1))
        a = rng.uniform(0, 2 * math.pi)
        pt = (center[0] + r * math.cos(a), center[1] + r * math.sin(a))
        if all(distance(pt, q) >= dmin for q in pts):
            pts.append(pt)
    return pts


def _random_connected_edges(rng, nodes, target_edges):
    """Random spanning tree plus extra random edges, deterministic per rng."""
    nodes = list(nodes)
    edges = set()
    for i in range(1, len(nodes)):
        j = int(rng.integers(0, i))
        edges.add(_canon(nodes[i], nodes[j]))
    candidates = [_canon(u, v) for i, u in enumerate(nodes)
                  for v in nodes[i + 1:] if _canon(u, v) not in edges]
    rng.shuffle(candidates)
    for e in candidates:
        if len(edges) >= target_edges:
            break
        edges.add(e)
    return edges


def draw_metrics(net, p, params, rng, h2_weights=DEFAULT_WEIGHTS,
                 max_doublings=12, max_attempts=8):
    """Directed metric snapshot with uniform draws and inter-edge rescaling.

    Intra-domain metrics stay inside the configured ranges; inter-domain
    delay is multiplied, bandwidth divided, and loss/err pushed toward
    their range maxima by a doubling scale factor until
    check_hypothesis2 passes. Distance always comes from node
    coordinates (clusters keep inter links long). If the doubling
    saturates (an intra path drew too many poor edges) the base draw is
    retried, still deterministically from the same stream.
    """
    for _ in range(max_attempts):
        base = {}
        for u, v in sorted(net.edges):
            # one shared-medium capacity and one propagation delay per
            # link; loss/err are per direction
            bw = rng.uniform(*params.bw_range)
            d = rng.uniform(*params.delay_range)
            dist_m = net.edge_distance(u, v)
            for a, b in ((u, v), (v, u)):
                base[(a, b)] = dict(
                    bw=bw,
                    delay=d,
                    loss=rng.uniform(*params.loss_range),
                    err=rng.uniform(*params.err_range),
                    dist=dist_m,
                )
        scale = 1.0
        for _ in range(max_doublings + 1):
            metrics = {}
            for e, m in base.items():
                vals = dict(m)
                if _canon(*e) in p.inter_edges:
                    vals["delay"] = m["delay"] * scale
                    vals["bw"] = m["bw"] / scale
                    vals["loss"] = min(params.loss_range[1], m["loss"] * scale)
                    vals["err"] = min(params.err_range[1], m["err"] * scale)
                metrics[e] = EdgeMetrics(**vals)
            snap = MetricSnapshot(metrics)
            if check_hypothesis2(net, p, normalize(snap), h2_weights).passed:
                return snap
            scale *= 2.0
    raise TopologyError(
        "could not satisfy the inter/intra cost separation; parameters infeasible")


def perturb_metrics(net, p, params, base, rng, h2_weights=DEFAULT_WEIGHTS,
                    max_attempts=8):
    """Snapshot of the same network at another instant.

    Link capacities are fixed by the base snapshot; background traffic
    scales the residual bandwidth per directed edge, delay jitters
    multiplicatively, and loss/err wander around their base values.
    Distance is geometry and never changes. Retries deterministically
    until the inter/intra cost separation holds, falling back to a
    fresh draw.
    """
    for _ in range(max_attempts):
        metrics = {}
        for e, m in sorted(base.items()):
            bw = m.bw * rng.uniform(0.55, 1.0)
            delay = m.delay * rng.uniform(0.9, 1.1)
            loss = min(1.0, max(0.0, m.loss * rng.uniform(0.5, 1.5)))
            err = min(1.0, max(0.0, m.err * rng.uniform(0.5, 1.5)))
            metrics[e] = EdgeMetrics(bw=bw, delay=delay, loss=loss, err=err,
                                     dist=m.dist)
        snap = MetricSnapshot(metrics)
        if check_hypothesis2(net, p, normalize(snap), h2_weights).passed:
            return snap
    return draw_metrics(net, p, params, rng, h2_weights)


def generate_random(params, h2_weights=DEFAULT_WEIGHTS):
    """Random multi-domain network, partition and metric snapshot.

    Deterministic for a fixed seed. Domains are coordinate clusters on a
    circle; adjacent domains (ring order) are linked by the configured
    number of boundary edges.
    """
    rng = np.random.default_rng(params.seed)
    m = params.n_domains
    npd = params.nodes_per_domain
    cluster_sep = 3.0 * params.dist_range[1] * max(1.0, m / 2.0)

    coords = {}
    assignment = {}
    edges = set()
    for d in range(1, m + 1):
        angle = 2 * math.pi * (d - 1) / m
        center = (cluster_sep * math.cos(angle), cluster_sep * math.sin(angle))
        base = (d - 1) * npd
        nodes = list(range(base, base + npd))
        pts = _place_domain_nodes(rng, center, npd, params.dist_range)
        for v, pt in zip(nodes, pts):
            coords[v] = pt
            assignment[v] = d
        target = max(npd - 1, round(npd * params.intra_degree / 2.0))
        edges |= _random_connected_edges(rng, nodes, target)

    if m > 1:
        pairs = [(d, d % m + 1) for d in range(1, m + 1)] if m > 2 else [(1, 2)]
        for da, db in pairs:
            va = [v for v in sorted(assignment) if assignment[v] == da]
            vb = [v for v in sorted(assignment) if assignment[v] == db]
            used = set()
            for _ in range(params.inter_links_per_adjacent_pair):
                for _attempt in range(200):
                    u = int(va[int(rng.integers(0, len(va)))])
                    v = int(vb[int(rng.integers(0, len(vb)))])
                    if _canon(u, v) not in used and _canon(u, v) not in edges:
                        used.add(_canon(u, v))
                        edges.add(_canon(u, v))
                        break
                else:
                    raise TopologyError(
                        f"cannot draw distinct inter links between N_{da} and N_{db}")

    net = Network(sorted(coords), edges, coords)
    part = DomainPartition(net, assignment)
    snap = draw_metrics(net, part, params, rng, h2_weights)
    return net, part, snap

"""Cross-domain multicast tree model and composite cost functions.

A cross-domain tree is the union of an inter-domain tree (boundary-node
edges linking domains) and one intra-domain tree per traversed domain.
Costs aggregate normalized per-edge metrics along source→destination
paths: bottleneck bandwidth, summed delay, complement-product loss and
error rates, and mean AP distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MulticastError(ValueError):
    pass


@dataclass(frozen=True)
class CostWeights:
    """Nonnegative weights for bandwidth, delay, loss, err and distance."""

    bw: float = 0.7
    delay: float = 0.3
    loss: float = 0.1
    err: float = 0.1
    dist: float = 0.1

    def __post_init__(self):
        vals = self.as_tuple()
        if any(v < 0 for v in vals):
            raise MulticastError("cost weights must be nonnegative")
        if all(v == 0 for v in vals):
            raise MulticastError("cost weights must not all be zero")

    def as_tuple(self):
        return (self.bw, self.delay, self.loss, self.err, self.dist)

    @property
    def total(self):
        return sum(self.as_tuple())


DEFAULT_WEIGHTS = CostWeights()


class MulticastGroup:
    """Multicast source plus destination set with per-member online flags."""

    def __init__(self, src, dests, online=None):
        dests = tuple(sorted(set(dests)))
        if not dests:
            raise MulticastError("destination set must be nonempty")
        if src in dests:
            raise MulticastError(f"source {src} cannot be a destination")
        self.src = src
        self.dests = dests
        self.online = frozenset(dests if online is None else online)
        if not self.online <= set(dests):
            raise MulticastError("online flags refer to non-members")

    def online_dests(self):
        return tuple(d for d in self.dests if d in self.online)

    def with_member(self, v, online=True):
        """New group with v added (or re-flagged) as a destination."""
        if v == self.src:
            raise MulticastError("source cannot join as a destination")
        dests = set(self.dests) | {v}
        flags = set(self.online)
        (flags.add if online else flags.discard)(v)
        return MulticastGroup(self.src, dests, flags)

    def with_offline(self, v):
        if v not in self.dests:
            raise MulticastError(f"{v} is not a group member")
        return MulticastGroup(self.src, self.dests, self.online - {v})

    def __repr__(self):
        return f"MulticastGroup(src={self.src}, dests={self.dests}, online={sorted(self.online)})"


def _canon(u, v):
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True)
class PathMetrics:
    bw: float
    delay: float
    loss: float
    err: float
    dist: float


@dataclass(frozen=True)
class InterdomainTree:
    """Boundary-node edge set linking domains (domain-level tree)."""

    edges: frozenset

    @staticmethod
    def of(edges):
        return InterdomainTree(frozenset(_canon(u, v) for u, v in edges))


@dataclass(frozen=True)
class IntradomainTree:
    """Edges inside one domain, grown from a root (entry BN or source)."""

    domain: int
    root: int
    edges: frozenset

    @staticmethod
    def of(domain, root, edges):
        return IntradomainTree(domain, root, frozenset(_canon(u, v) for u, v in edges))

    def nodes(self):
        out = {self.root}
        for u, v in self.edges:
            out.add(u)
            out.add(v)
        return out


@dataclass(frozen=True)
class CrossDomainTree:
    inter: InterdomainTree
    intra: tuple

    @property
    def flat_edges(self):
        out = set(self.inter.edges)
        for t in self.intra:
            out |= t.edges
        return frozenset(out)

    def nodes(self):
        out = set()
        for t in self.intra:
            out |= t.nodes()
        for u, v in self.inter.edges:
            out.add(u)
            out.add(v)
        return out

    def intra_for(self, domain):
        for t in self.intra:
            if t.domain == domain:
                return t
        return None

    def to_json_dict(self, group):
        return {
            "src": group.src,
            "dests": list(group.dests),
            "online": sorted(group.online),
            "inter_edges": sorted([list(e) for e in self.inter.edges]),
            "intra": [
                {"domain": t.domain, "root": t.root,
                 "edges": sorted([list(e) for e in t.edges])}
                for t in sorted(self.intra, key=lambda t: t.domain)
            ],
        }


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str

    def __str__(self):
        return f"{self.code}: {self.detail}"


def _adjacency(edges):
    adj = {}
    for u, v in edges:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    return adj


def aggregate_edge_metrics(directed_edges, snap):
    """Eq.-style aggregation over a directed edge sequence.

    Bottleneck bw, summed delay, complement-product loss/err, mean dist.
    """
    directed_edges = list(directed_edges)
    if not directed_edges:
        raise MulticastError("cannot aggregate an empty edge sequence")
    ms = [snap[e] for e in directed_edges]
    keep_loss = 1.0
    keep_err = 1.0
    for m in ms:
        keep_loss *= 1.0 - m.loss
        keep_err *= 1.0 - m.err
    return PathMetrics(
        bw=min(m.bw for m in ms),
        delay=sum(m.delay for m in ms),
        loss=1.0 - keep_loss,
        err=1.0 - keep_err,
        dist=float(np.mean([m.dist for m in ms])),
    )


def path_metrics(path, snap):
    """Aggregate metrics along a node path (directed src→leaf order)."""
    if len(path) < 2:
        raise MulticastError("path needs at least one edge")
    return aggregate_edge_metrics(zip(path[:-1], path[1:]), snap)


def path_cost(m, w):
    """Composite path construction cost from aggregated metrics."""
    return (w.bw * (1.0 - m.bw) + w.delay * m.delay + w.loss * m.loss
            + w.err * m.err + w.dist * m.dist)


def single_edge_cost(em, w):
    """Composite cost of one directed edge's (normalized) metrics."""
    return (w.bw * (1.0 - em.bw) + w.delay * em.delay + w.loss * em.loss
            + w.err * em.err + w.dist * em.dist)


def tree_paths(src, edges):
    """Parent map and reach order of the edge set explored from src.

    BFS with sorted neighbor order; deterministic. Returns (parent, order)
    where parent[src] is None and unreached nodes are absent.
    """
    adj = _adjacency(edges)
    parent = {src: None}
    order = [src]
    frontier = [src]
    while frontier:
        nxt = []
        for u in frontier:
            for v in sorted(adj.get(u, ())):
                if v not in parent:
                    parent[v] = u
                    order.append(v)
                    nxt.append(v)
        frontier = nxt
    return parent, order

def path_from_parent(parent, v):
    path = [v]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def extract_paths(t, g):
    """Unique tree path from the source to each online destination."""
    parent, _ = tree_paths(g.src, t.flat_edges)
    out = {}
    for d in g.online_dests():
        if d == g.src:
            continue
        if d not in parent:
            raise MulticastError(f"destination {d} unreachable in tree")
        out[d] = path_from_parent(parent, d)
    return out


def tree_cost_endtoend(t, g, snap, w):
    """Sum of composite path costs over all online destinations."""
    total = 0.0
    for path in extract_paths(t, g).values():
        total += path_cost(path_metrics(path, snap), w)
    return total


def domain_tree(inter_edges, p, src_domain):
    """Domain-level structure of an inter-domain edge set.

    Roots the domain graph at src_domain and returns a dict with, per
    reached domain: its parent domain, the inter edge oriented
    parent→child that enters it, the entry BN, and its exit BNs (tails
    of edges toward child domains). Raises on domain-level cycles or
    edges detached from the source domain's component.
    """
    dom_adj = {}
    for u, v in inter_edges:
        du, dv = p.domain_of(u), p.domain_of(v)
        if du == dv:
            raise MulticastError(f"edge {(u, v)} does not cross domains")
        dom_adj.setdefault(du, []).append((dv, (u, v)))
        dom_adj.setdefault(dv, []).append((du, (v, u)))

    info = {src_domain: {"parent": None, "edge": None, "entry": None, "exits": []}}
    frontier = [src_domain]
    seen_edges = set()
    while frontier:
        nxt = []
        for d in frontier:
            for d2, (tail, head) in sorted(dom_adj.get(d, ())):
                if _canon(tail, head) in seen_edges:
                    continue
                seen_edges.add(_canon(tail, head))
                if d2 in info:
                    raise MulticastError(
                        f"inter-domain edges form a domain-level cycle at N_{d2}")
                info[d2] = {"parent": d, "edge": (tail, head), "entry": head,
                            "exits": []}
                info[d]["exits"].append(tail)
                nxt.append(d2)
        frontier = nxt
    if len(seen_edges) != len(set(_canon(u, v) for u, v in inter_edges)):
        raise MulticastError(
            "inter-domain edges detached from the source domain's component")
    for d in info:
        info[d]["exits"] = sorted(info[d]["exits"])
    return info


def _split_edges(flat, p):
    inter = set()
    by_domain = {}
    for u, v in flat:
        du, dv = p.domain_of(u), p.domain_of(v)
        if du != dv:
            inter.add(_canon(u, v))
        else:
            by_domain.setdefault(du, set()).add(_canon(u, v))
    return inter, by_domain


def decompose(t, p):
    """Split a tree into crossing edges and per-domain trees.

    Inverse of compose on valid trees (roots recorded on the input are
    kept); forest-shaped per-domain remnants are still represented so
    invalid constructions can be diagnosed.
    """
    if isinstance(t, CrossDomainTree):
        flat = t.flat_edges
        roots = {it.domain: it.root for it in t.intra}
    else:
        flat = frozenset(_canon(u, v) for u, v in t)
        roots = {}
    inter, by_domain = _split_edges(flat, p)
    bn_domains = {}
    for u, v in sorted(inter):
        bn_domains.setdefault(p.domain_of(u), set()).add(u)
        bn_domains.setdefault(p.domain_of(v), set()).add(v)
    intra = []
    for d in sorted(set(by_domain) | set(roots) | set(bn_domains)):
        edges = by_domain.get(d, frozenset())
        if d in roots:
            root = roots[d]
        elif edges:
            root = min(x for e in edges for x in e)
        else:
            root = min(bn_domains[d])
        intra.append(IntradomainTree.of(d, root, edges))
    return InterdomainTree.of(inter), tuple(intra)


def tree_from_edges(src, edges, p):
    """Build a CrossDomainTree from a flat edge set rooted at src.

    Per-domain roots are the first nodes reached from src; domains whose
    edges are unreachable root at their smallest incident node.
    """
    edges = frozenset(_canon(u, v) for u, v in edges)
    inter, by_domain = _split_edges(edges, p)
    parent, order = tree_paths(src, edges)
    reach_rank = {v: i for i, v in enumerate(order)}
    domain_nodes = {}
    for d, es in by_domain.items():
        domain_nodes[d] = {x for e in es for x in e}
    for u, v in sorted(inter):
        domain_nodes.setdefault(p.domain_of(u), set()).add(u)
        domain_nodes.setdefault(p.domain_of(v), set()).add(v)
    domain_nodes.setdefault(p.domain_of(src), set()).add(src)
    intra = []
    for d in sorted(domain_nodes):
        nodes = domain_nodes[d]
        reached = [v for v in nodes if v in reach_rank]
        root = min(reached, key=lambda v: reach_rank[v]) if reached else min(nodes)
        intra.append(IntradomainTree.of(d, root, by_domain.get(d, frozenset())))
    return CrossDomainTree(InterdomainTree.of(inter),
                           tuple(sorted(intra, key=lambda t: t.domain)))


def compose(ti, ts):
    """Union of an inter-domain tree and intra-domain trees.

    Boundary nodes referenced by the inter tree must appear in the
    matching domain tree (its root counts). Validity is not asserted
    here; run validate separately.
    """
    by_domain = {}
    for t in ts:
        if t.domain in by_domain:
            raise MulticastError(f"duplicate intra-domain tree for N_{t.domain}")
        by_domain[t.domain] = t
    node_domain = {}
    for t in ts:
        for v in t.nodes():
            node_domain[v] = t.domain
    for u, v in sorted(ti.edges):
        for bn in (u, v):
            if bn not in node_domain:
                raise MulticastError(
                    f"boundary node {bn} of inter edge {(u, v)} missing from "
                    f"every intra-domain tree")
    return CrossDomainTree(ti, tuple(sorted(ts, key=lambda t: t.domain)))


def interdomain_paths(t, g, p):
    """Ordered domain sequence traversed by each destination's path."""
    out = {}
    for d, path in extract_paths(t, g).items():
        seq = []
        for v in path:
            dom = p.domain_of(v)
            if not seq or seq[-1] != dom:
                seq.append(dom)
        out[d] = tuple(seq)
    return out


def _count_components(edges):
    """Connected components induced by an edge set (isolated nodes ignored)."""
    parent = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        parent.setdefault(u, u)
        parent.setdefault(v, v)
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    return len({find(x) for x in parent})


def validate(t, g, p):
    """Check a candidate tree; returns a list of violations (empty = ok).

    Structural checks: the flat edge set is acyclic and connected from
    the source, and covers every online destination. Domain-sequence
    checks (no repeated domain on any path; same-domain destinations
    share one domain path; at most one component per domain) run only
    when the structure is sound, since domain paths are ill-defined on
    cyclic or disconnected edge sets.
    """
    flat = t.flat_edges
    violations = []

    nodes = set()
    comp = {}

    def find(x):
        while comp[x] != x:
            comp[x] = comp[comp[x]]
            x = comp[x]
        return x

    cyclic = False
    for u, v in sorted(flat):
        nodes.add(u)
        nodes.add(v)
        comp.setdefault(u, u)
        comp.setdefault(v, v)
        ru, rv = find(u), find(v)
        if ru == rv:
            cyclic = True
            violations.append(Violation("cycle", f"edge {(u, v)} closes a cycle"))
        else:
            comp[ru] = rv

    parent, order = tree_paths(g.src, flat)
    unreachable = sorted(nodes - set(order))
    if unreachable:
        violations.append(Violation(
            "disconnected", f"nodes unreachable from source: {unreachable}"))

    missing = [d for d in g.online_dests() if d != g.src and d not in parent]
    if missing:
        violations.append(Violation(
            "coverage", f"online destinations not covered: {missing}"))

    structurally_ok = not cyclic and not unreachable
    if structurally_ok:
        seqs = {}
        for d in g.online_dests():
            if d == g.src or d not in parent:
                continue
            path = path_from_parent(parent, d)
            seq = []
            for v in path:
                dom = p.domain_of(v)
                if not seq or seq[-1] != dom:
                    seq.append(dom)
            seqs[d] = tuple(seq)
            if len(set(seq)) != len(seq):
                violations.append(Violation(
                    "t1_repeat", f"path to {d} re-enters a domain: {seq}"))
        by_dom = {}
        for d, seq in seqs.items():
            by_dom.setdefault(p.domain_of(d), []).append((d, seq))
        for dom, pairs in sorted(by_dom.items()):
            distinct = {seq for _, seq in pairs}
            if len(distinct) > 1:
                violations.append(Violation(
                    "t1_mismatch",
                    f"destinations {[d for d, _ in pairs]} in N_{dom} use "
                    f"different domain paths: {sorted(distinct)}"))
        by_domain = _split_edges(flat, p)[1]
        for dom, edges in sorted(by_domain.items()):
            ncomp = _count_components(edges)
            if ncomp > 1:
                violations.append(Violation(
                    "t2_forest", f"domain N_{dom} holds {ncomp} disjoint tree parts"))
    return violations


def tree_cost_decomposed(t, g, p, snap, w):
    """Per-domain costs, inter-domain cost, and their total.

    Each domain cost sums root→target path costs inside that domain's
    tree, where targets are the domain's online destinations plus its
    exit boundary nodes. The inter-domain cost is computed the same way
    over boundary-node edges, per destination domain.
    """
    src_dom = p.domain_of(g.src)
    info = domain_tree(t.inter.edges, p, src_dom)

    per_domain = {}
    for intra in t.intra:
        d = intra.domain
        dinfo = info.get(d)
        targets = set(v for v in g.online_dests() if p.domain_of(v) == d)
        if dinfo is not None:
            targets |= set(dinfo["exits"])
        targets.discard(intra.root)
        cost = 0.0
        if targets:
            parent, _ = tree_paths(intra.root, intra.edges)
            for k in sorted(targets):
                if k not in parent:
                    raise MulticastError(
                        f"target {k} unreachable inside domain N_{d} tree")
                cost += path_cost(path_metrics(path_from_parent(parent, k), snap), w)
        per_domain[d] = cost

    dest_domains = sorted({p.domain_of(v) for v in g.online_dests()} - {src_dom})
    c_int = 0.0
    for dd in dest_domains:
        if dd not in info:
            raise MulticastError(f"destination domain N_{dd} not linked by inter tree")
        seq = []
        cur = dd
        while info[cur]["parent"] is not None:
            seq.append(info[cur]["edge"])
            cur = info[cur]["parent"]
        seq.reverse()
        c_int += path_cost(aggregate_edge_metrics(seq, snap), w)

    total = sum(per_domain.values()) + c_int
    return per_domain, c_int, total

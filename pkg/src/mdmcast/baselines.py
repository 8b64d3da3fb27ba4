"""Classic multicast solvers on the flat weighted graph.

Dijkstra shortest paths, the KMB metric-closure/MST approximation, the
selective-closest-terminal-first heuristic, and an exact Steiner oracle
for small instances. All operate on the composite single-edge weights
and use fixed tie-breaking (lowest node id, lexicographic edges) so runs
are reproducible.
"""

from __future__ import annotations

import heapq
import itertools
import math

from .multicast import single_edge_cost

EXACT_NODE_LIMIT = 16


class BaselineError(ValueError):
    pass


def edge_weights(snap, w):
    """Composite scalar weight for every directed edge of a snapshot."""
    return {e: single_edge_cost(m, w) for e, m in snap.items()}


def symmetrize(weights):
    """Undirected weights: average of the two directions.

    Classic Steiner algorithms assume undirected weights; an edge seen
    in one direction only keeps that direction's weight.
    """
    out = {}
    for (u, v), wt in weights.items():
        key = (u, v) if u <= v else (v, u)
        if key in out:
            out[key] = (out[key] + wt) / 2.0
        else:
            out[key] = wt
    return out


def _undirected_adjacency(sym_weights):
    adj = {}
    for (u, v), wt in sym_weights.items():
        adj.setdefault(u, {})[v] = wt
        adj.setdefault(v, {})[u] = wt
    return {u: dict(sorted(nb.items())) for u, nb in sorted(adj.items())}


def dijkstra(weights, src):
    """Single-source shortest paths on directed nonnegative weights.

    Returns (dist, parent); unreachable nodes carry dist = inf. Ties
    break toward the smaller node id, then the smaller predecessor.
    """
    adj = {}
    nodes = set()
    for (u, v), wt in weights.items():
        if wt < 0:
            raise BaselineError(f"negative weight on edge {(u, v)}")
        adj.setdefault(u, []).append((v, wt))
        nodes.add(u)
        nodes.add(v)
    if src not in nodes:
        raise BaselineError(f"source {src} not in graph")
    for u in adj:
        adj[u].sort()
    dist = {v: math.inf for v in nodes}
    parent = {v: None for v in nodes}
    dist[src] = 0.0
    heap = [(0.0, src)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, wt in adj.get(u, ()):
            alt = d + wt
            if alt < dist[v]:
                dist[v] = alt
                parent[v] = u
                heapq.heappush(heap, (alt, v))
            elif alt == dist[v] and parent[v] is not None and u < parent[v]:
                parent[v] = u
    return dist, parent


def shortest_path(parent, src, v):
    path = [v]
    while path[-1] != src:
        prev = parent[path[-1]]
        if prev is None:
            raise BaselineError(f"{v} unreachable from {src}")
        path.append(prev)
    path.reverse()
    return path


def _multi_source_dijkstra(adj, sources):
    dist = {}
    parent = {}
    heap = []
    for s in sorted(sources):
        dist[s] = 0.0
        parent[s] = None
        heap.append((0.0, s))
    heapq.heapify(heap)
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, wt in adj.get(u, {}).items():
            alt = d + wt
            if v not in dist or alt < dist[v]:
                dist[v] = alt
                parent[v] = u
                heapq.heappush(heap, (alt, v))
            elif alt == dist[v] and parent[v] is not None and u < parent[v]:
                parent[v] = u
    return dist, parent


def _kruskal_mst(nodes, edges):
    """MST over (w, u, v) edges; returns edge set or None if disconnected."""
    comp = {v: v for v in nodes}

    def find(x):
        while comp[x] != x:
            comp[x] = comp[comp[x]]
            x = comp[x]
        return x

    mst = set()
    for wt, u, v in sorted(edges):
        ru, rv = find(u), find(v)
        if ru != rv:
            comp[ru] = rv
            mst.add((u, v) if u <= v else (v, u))
    roots = {find(v) for v in nodes}
    if len(roots) > 1:
        return None
    return mst


def _prune_leaves(edges, keep):
    """Repeatedly drop leaf nodes outside `keep` (with their edge)."""
    edges = set(edges)
    changed = True
    while changed:
        changed = False
        deg = {}
        for u, v in edges:
            deg[u] = deg.get(u, 0) + 1
            deg[v] = deg.get(v, 0) + 1
        for u, v in sorted(edges):
            for leaf in (u, v):
                if deg.get(leaf, 0) == 1 and leaf not in keep:
                    edges.discard((u, v))
                    changed = True
                    break
            if changed:
                break
    return frozenset(edges)


def kmb(weights, terminals):
    """KMB Steiner approximation (metric closure → MST → expand → MST → prune).

    Guarantees total weight within 2x of optimal. Weights are
    symmetrized; `terminals` is the multicast node set M.
    """
    terminals = sorted(set(terminals))
    if len(terminals) < 2:
        return frozenset()
    sym = symmetrize(weights)
    adj = _undirected_adjacency(sym)
    sp = {}
    closure = []
    for t in terminals:
        dist, parent = _multi_source_dijkstra(adj, [t])
        sp[t] = (dist, parent)
        for t2 in terminals:
            if t2 > t:
                if t2 not in dist:
                    raise BaselineError(f"terminals {t} and {t2} are disconnected")
                closure.append((dist[t2], t, t2))
    closure_mst = _kruskal_mst(terminals, closure)
    if closure_mst is None:
        raise BaselineError("terminal metric closure is disconnected")

    expanded = set()
    for u, v in sorted(closure_mst):
        _, parent = sp[u]
        path = [v]
        while path[-1] != u:
            path.append(parent[path[-1]])
        for a, b in zip(path[:-1], path[1:]):
            expanded.add((a, b) if a <= b else (b, a))

    exp_nodes = {x for e in expanded for x in e}
    exp_edges = [(sym[e], *e) for e in sorted(expanded)]
    mst = _kruskal_mst(exp_nodes, exp_edges)
    return _prune_leaves(mst, set(terminals))


def sctf(weights, terminals, src):
    """Grow a tree from src, always grafting the closest unconnected terminal."""
    terminals = sorted(set(terminals))
    if src not in terminals:
        raise BaselineError("source must be part of the terminal set")
    sym = symmetrize(weights)
    adj = _undirected_adjacency(sym)
    tree_nodes = {src}
    remaining = [t for t in terminals if t != src]
    edges = set()
    while remaining:
        dist, parent = _multi_source_dijkstra(adj, tree_nodes)
        best = None
        for t in remaining:
            d = dist.get(t, math.inf)
            if best is None or d < best[0] or (d == best[0] and t < best[1]):
                best = (d, t)
        if math.isinf(best[0]):
            raise BaselineError(f"terminal {best[1]} unreachable from tree")
        t = best[1]
        path = [t]
        while parent[path[-1]] is not None:
            path.append(parent[path[-1]])
        for a, b in zip(path[:-1], path[1:]):
            edges.add((a, b) if a <= b else (b, a))
        tree_nodes.update(path)
        remaining.remove(t)
    return frozenset(edges)


def exact_steiner(weights, terminals):
    """Minimum-weight tree spanning the terminals, by exhaustive search.

    Enumerates Steiner-node subsets and takes the MST of each induced
    subgraph; globally optimal. Guarded to small graphs.
    """
    terminals = sorted(set(terminals))
    sym = symmetrize(weights)
    nodes = sorted({x for e in sym for x in e})
    if len(nodes) > EXACT_NODE_LIMIT:
        raise BaselineError(
            f"instance too large for exact search: {len(nodes)} > {EXACT_NODE_LIMIT}")
    missing = [t for t in terminals if t not in nodes]
    if missing:
        raise BaselineError(f"terminals not in graph: {missing}")
    if len(terminals) < 2:
        return frozenset()
    steiner_pool = [v for v in nodes if v not in terminals]
    best = None
    for r in range(len(steiner_pool) + 1):
        for extra in itertools.combinations(steiner_pool, r):
            cand = set(terminals) | set(extra)
            edges = [(wt, u, v) for (u, v), wt in sorted(sym.items())
                     if u in cand and v in cand]
            mst = _kruskal_mst(cand, edges)
            if mst is None:
                continue
            cost = sum(sym[e] for e in mst)
            key = (cost, tuple(sorted(mst)))
            if best is None or key < best[0]:
                best = (key, mst)
    if best is None:
        raise BaselineError("terminals are disconnected")
    return frozenset(best[1])


def tree_weight(edges, weights):
    """Total symmetrized weight of an undirected tree edge set."""
    sym = symmetrize(weights)
    return sum(sym[(u, v) if u <= v else (v, u)] for u, v in edges)


def spans(edges, terminals):
    """True if the edge set is a single tree containing all terminals."""
    terminals = set(terminals)
    if not edges:
        return len(terminals) <= 1
    nodes = {x for e in edges for x in e}
    if not terminals <= nodes:
        return False
    if len(edges) != len(nodes) - 1:
        return False
    adj = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    start = next(iter(nodes))
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen == nodes

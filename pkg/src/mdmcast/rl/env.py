"""Tree-construction environments and the multichannel state tensor.

Both environments expose the full N x N state: five normalized metric
channels plus a tree-state matrix. The inter-domain environment picks
boundary-node edges; the intra-domain environment picks next-hop nodes
inside one domain. Invalid and cycle-forming actions leave the state
untouched and only return their penalty.
"""

from __future__ import annotations

import numpy as np

from ..multicast import aggregate_edge_metrics, single_edge_cost

ROLE_SOURCE = 1.0
ROLE_TARGET_REACHED = 0.75
ROLE_TARGET = 0.5
ROLE_IN_TREE = 0.25


class EnvError(RuntimeError):
    pass


class StateRef:
    """One observation: shared metric channels plus an owned tree matrix."""

    __slots__ = ("channels", "m_t", "_flat")

    def __init__(self, channels, m_t):
        if channels.shape[1:] != m_t.shape or channels.shape[0] != 5:
            raise EnvError(
                f"channel/tree shape mismatch: {channels.shape} vs {m_t.shape}")
        self.channels = channels
        self.m_t = m_t
        self._flat = {}

    @property
    def n(self):
        return self.m_t.shape[0]

    def tensor(self):
        return build_state(self.channels, self.m_t)

    def flat(self, dtype=np.float64):
        key = np.dtype(dtype).name
        if key not in self._flat:
            self._flat[key] = np.concatenate(
                [np.asarray(self.channels).ravel(),
                 self.m_t.ravel()]).astype(dtype, copy=False)
        return self._flat[key]


def build_state(channels, m_t):
    """Stack the 5 metric channels with the tree matrix into (6, N, N)."""
    channels = np.asarray(channels)
    m_t = np.asarray(m_t)
    if channels.shape[0] != 5 or channels.shape[1:] != m_t.shape:
        raise EnvError(
            f"cannot stack channels {channels.shape} with mask {m_t.shape}")
    out = np.empty((6,) + m_t.shape, dtype=channels.dtype)
    out[:5] = channels
    out[5] = m_t
    return out


def tree_mask(n, edges, roles):
    """Tree-state matrix: symmetric 1s for edges, role marks on the diagonal."""
    m = np.zeros((n, n))
    for u, v in edges:
        m[u, v] = 1.0
        m[v, u] = 1.0
    for v, role in roles.items():
        m[v, v] = role
    return m


def reward_part(em, w):
    """Single-step reward for one added edge (normalized metrics)."""
    return (w.bw * em.bw + w.delay * (1.0 - em.delay) + w.loss * (1.0 - em.loss)
            + w.err * (1.0 - em.err) + w.dist * (1.0 - em.dist))


def reward_end(directed_edges, snap, w):
    """Completion reward over a whole source→target edge sequence."""
    m = aggregate_edge_metrics(directed_edges, snap)
    return (w.bw * m.bw + w.delay * (1.0 - m.delay) + w.loss * (1.0 - m.loss)
            + w.err * (1.0 - m.err) + w.dist * (1.0 - m.dist))


class _EnvBase:
    def __init__(self, snap, channels, n):
        self._snap = snap
        self._channels = (snap.channel_matrices(n) if channels is None
                          else channels)
        self._state = None
        self.steps = 0
        self.done = False
        self.failed = False

    def state(self):
        return self._state

    def _refresh(self, roles, edges):
        self._state = StateRef(self._channels,
                               tree_mask(self._channels.shape[1], edges, roles))


class InterdomainEnv(_EnvBase):
    """Grow the boundary-edge tree until every destination domain connects.

    Actions index the fixed, sorted list of inter-domain edges. A valid
    action extends the connected domain component by one new domain; an
    edge between two already-connected domains is a loop; anything else
    is invalid.
    """

    def __init__(self, net, part, snap, group, weights, part_scale=0.1,
                 r_loop=-0.5, r_hell=-0.7, t_max=None, channels=None):
        super().__init__(snap, channels, net.n)
        self.net = net
        self.part = part
        self.group = group
        self.w = weights
        self.part_scale = part_scale
        self.r_loop = r_loop
        self.r_hell = r_hell
        self.actions = sorted(part.inter_edges)
        if not self.actions and part.m > 1:
            raise EnvError("no inter-domain edges to act on")
        self.t_max = t_max if t_max is not None else 4 * max(1, len(self.actions))
        self.src_domain = part.domain_of(group.src)
        self.dest_domains = frozenset(part.domain_of(d)
                                      for d in group.online_dests())
        self.reset()

    @property
    def action_count(self):
        return len(self.actions)

    def reset(self):
        self.connected = {self.src_domain}
        self.chosen = []
        self.parent_edge = {}
        self.steps = 0
        self.failed = False
        self.done = self.dest_domains <= self.connected
        self._rebuild_state()
        return self._state

    def _rebuild_state(self):
        roles = {}
        for d in self.group.online_dests():
            dom = self.part.domain_of(d)
            roles[d] = (ROLE_TARGET_REACHED if dom in self.connected
                        else ROLE_TARGET)
        for u, v in self.chosen:
            for x in (u, v):
                roles.setdefault(x, ROLE_IN_TREE)
        roles[self.group.src] = ROLE_SOURCE
        self._refresh(roles, self.chosen)

    def valid_actions(self):
        out = []
        for i, (u, v) in enumerate(self.actions):
            du, dv = self.part.domain_of(u), self.part.domain_of(v)
            if (du in self.connected) != (dv in self.connected):
                out.append(i)
        return out

    def _path_edges_to(self, dom):
        seq = []
        cur = dom
        while cur != self.src_domain:
            tail, head = self.parent_edge[cur]
            seq.append((tail, head))
            cur = self.part.domain_of(tail)
        seq.reverse()
        return seq

    def step(self, a):
        if self.done:
            raise EnvError("episode already finished")
        if not 0 <= a < len(self.actions):
            raise EnvError(f"action index {a} out of range")
        u, v = self.actions[a]
        du, dv = self.part.domain_of(u), self.part.domain_of(v)
        in_u, in_v = du in self.connected, dv in self.connected
        info = {"valid": False, "completed": False, "failed": False}
        if in_u and in_v:
            r = self.r_loop
        elif not in_u and not in_v:
            r = self.r_hell
        else:
            tail, head = (u, v) if in_u else (v, u)
            new_dom = self.part.domain_of(head)
            self.chosen.append((tail, head))
            self.parent_edge[new_dom] = (tail, head)
            self.connected.add(new_dom)
            r = self.part_scale * reward_part(self._snap[(tail, head)], self.w)
            if new_dom in self.dest_domains:
                r += reward_end(self._path_edges_to(new_dom), self._snap, self.w)
            info["valid"] = True
            self._rebuild_state()
        self.steps += 1
        if self.dest_domains <= self.connected:
            self.done = True
            info["completed"] = True
        elif self.steps >= self.t_max:
            self.done = True
            self.failed = True
            info["failed"] = True
        return self._state, r, self.done, info

    def chosen_edges(self):
        """Inter edges added so far, canonical undirected form."""
        return [tuple(sorted(e)) for e in self.chosen]


class IntradomainEnv(_EnvBase):
    """Grow one domain's tree from its root toward every target node.

    Actions index the domain's sorted node list. Choosing a node adjacent
    to the tree grafts it through its cheapest in-domain connecting edge;
    an in-tree node is a loop; a detached node is invalid.
    """

    def __init__(self, net, part, snap, domain, root, targets, weights,
                 part_scale=0.1, r_loop=-0.5, r_hell=-0.7, t_max=None,
                 channels=None):
        super().__init__(snap, channels, net.n)
        self.net = net
        self.part = part
        self.domain = domain
        self.root = root
        self.targets = frozenset(targets)
        self.w = weights
        self.part_scale = part_scale
        self.r_loop = r_loop
        self.r_hell = r_hell
        self.actions = list(part.members[domain])
        self.t_max = t_max if t_max is not None else 4 * len(self.actions)
        if part.domain_of(root) != domain:
            raise EnvError(f"root {root} is not in domain N_{domain}")
        bad = [t for t in self.targets if part.domain_of(t) != domain]
        if bad:
            raise EnvError(f"targets outside domain N_{domain}: {bad}")
        self._adj = {v: [u for u in net.adj[v] if part.domain_of(u) == domain]
                     for v in self.actions}
        self._edge_cost = {}
        for v in self.actions:
            for u in self._adj[v]:
                self._edge_cost[(u, v)] = single_edge_cost(snap[(u, v)], weights)
        self.reset()

    @property
    def action_count(self):
        return len(self.actions)

    def reset(self):
        self.tree_nodes = {self.root}
        self.edges = []
        self.parent = {self.root: None}
        self.reached = self.targets & {self.root}
        self.steps = 0
        self.failed = False
        self.done = self.targets <= self.reached
        self._rebuild_state()
        return self._state

    def _rebuild_state(self):
        roles = {}
        for t in self.targets:
            roles[t] = ROLE_TARGET_REACHED if t in self.reached else ROLE_TARGET
        for v in self.tree_nodes:
            roles.setdefault(v, ROLE_IN_TREE)
        roles[self.root] = ROLE_SOURCE
        self._refresh(roles, self.edges)

    def valid_actions(self):
        out = []
        for i, v in enumerate(self.actions):
            if v not in self.tree_nodes and any(
                    u in self.tree_nodes for u in self._adj[v]):
                out.append(i)
        return out

    def step(self, a):
        if self.done:
            raise EnvError("episode already finished")
        if not 0 <= a < len(self.actions):
            raise EnvError(f"action index {a} out of range")
        node = self.actions[a]
        info = {"valid": False, "completed": False, "failed": False}
        if node in self.tree_nodes:
            r = self.r_loop
        else:
            attach = [(self._edge_cost[(u, node)], u)
                      for u in self._adj[node] if u in self.tree_nodes]
            if not attach:
                r = self.r_hell
            else:
                _, u = min(attach)
                self.tree_nodes.add(node)
                self.edges.append((u, node))
                self.parent[node] = u
                r = self.part_scale * reward_part(self._snap[(u, node)], self.w)
                if node in self.targets:
                    self.reached = self.reached | {node}
                    path = [node]
                    while self.parent[path[-1]] is not None:
                        path.append(self.parent[path[-1]])
                    path.reverse()
                    r += reward_end(list(zip(path[:-1], path[1:])),
                                    self._snap, self.w)
                info["valid"] = True
                self._rebuild_state()
        self.steps += 1
        if self.targets <= self.reached:
            self.done = True
            info["completed"] = True
        elif self.steps >= self.t_max:
            self.done = True
            self.failed = True
            info["failed"] = True
        return self._state, r, self.done, info

    def tree_edges(self):
        return [tuple(sorted(e)) for e in self.edges]

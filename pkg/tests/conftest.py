"""Shared fixtures: a hand-built 4-domain scenario and snapshot helpers."""

import pytest

from mdmcast.link_metrics import CHANNELS, EdgeMetrics, NormalizedSnapshot
from mdmcast.multicast import (CrossDomainTree, InterdomainTree,
                               IntradomainTree, MulticastGroup)
from mdmcast.topology import DomainPartition, Network

# Node roles in the 4-domain example scenario (ids are dense, domains 1..4):
#   N1: SRC, VN1 (plain node), D1, B11, B13, VN2
#   N2: B21, B24, D2
#   N3: B31, B32, D3, D4
#   N4: B41, B42, D5, D6
SRC, VN1, D1, B11, B13, VN2 = 0, 1, 2, 3, 4, 5
B21, B24, D2 = 6, 7, 8
B31, B32, D3, D4 = 9, 10, 11, 12
B41, B42, D5, D6 = 13, 14, 15, 16

FIG_TREE_T1 = {(SRC, B11), (SRC, VN1), (VN1, D1), (D1, B13)}
FIG_TREE_T2 = {(B21, B24), (B21, D2)}
FIG_TREE_T3 = {(B31, B32), (B32, D3), (B31, D4)}
FIG_TREE_T4 = {(B41, D5), (B41, B42), (B42, D6)}
FIG_P_INT = {(B11, B21), (B13, B31), (B24, B41)}

FIG_ASSIGNMENT = {
    SRC: 1, VN1: 1, D1: 1, B11: 1, B13: 1, VN2: 1,
    B21: 2, B24: 2, D2: 2,
    B31: 3, B32: 3, D3: 3, D4: 3,
    B41: 4, B42: 4, D5: 4, D6: 4,
}

# Extra links beyond the tree so routing has alternatives; (D4, B42) is a
# second inter-domain edge between N3 and N4.
FIG_EXTRA_EDGES = {(VN2, SRC), (VN2, VN1), (B11, B13), (B24, D2),
                   (D3, D4), (D5, D6), (D4, B42)}


def _fig_coords():
    centers = {1: (0, 0), 2: (500, 0), 3: (0, 500), 4: (500, 500)}
    coords = {}
    offsets = [(0, 0), (40, 0), (0, 40), (40, 40), (80, 0), (0, 80)]
    by_domain = {}
    for v, d in FIG_ASSIGNMENT.items():
        by_domain.setdefault(d, []).append(v)
    for d, vs in by_domain.items():
        cx, cy = centers[d]
        for i, v in enumerate(sorted(vs)):
            ox, oy = offsets[i]
            coords[v] = (cx + ox, cy + oy)
    return coords


@pytest.fixture(scope="session")
def fig_net():
    edges = (FIG_TREE_T1 | FIG_TREE_T2 | FIG_TREE_T3 | FIG_TREE_T4
             | FIG_P_INT | FIG_EXTRA_EDGES)
    return Network(range(17), edges, _fig_coords())


@pytest.fixture(scope="session")
def fig_part(fig_net):
    return DomainPartition(fig_net, FIG_ASSIGNMENT)


@pytest.fixture(scope="session")
def fig_group():
    return MulticastGroup(SRC, [D1, D2, D3, D4, D5, D6])


@pytest.fixture()
def fig_tree():
    return CrossDomainTree(
        InterdomainTree.of(FIG_P_INT),
        (
            IntradomainTree.of(1, SRC, FIG_TREE_T1),
            IntradomainTree.of(2, B21, FIG_TREE_T2),
            IntradomainTree.of(3, B31, FIG_TREE_T3),
            IntradomainTree.of(4, B41, FIG_TREE_T4),
        ),
    )


def norm_snap(net, default=(0.8, 0.2, 0.0, 0.0, 0.5), overrides=None):
    """NormalizedSnapshot with fixed per-edge values and unit bounds.

    `default`/override values are (bw, delay, loss, err, dist) in
    normalized units; both directions of each edge get the same values
    unless a directed override is given.
    """
    overrides = overrides or {}
    metrics = {}
    for u, v in net.edges:
        for e in ((u, v), (v, u)):
            vals = overrides.get(e, default)
            metrics[e] = EdgeMetrics(**dict(zip(CHANNELS, vals)))
    bounds = {c: (0.0, 1.0) for c in CHANNELS}
    return NormalizedSnapshot(metrics, bounds)

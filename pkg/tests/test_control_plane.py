"""CCM store semantics, trace collection, flow tables, group management."""

import itertools

import numpy as np
import pytest

from mdmcast import control_plane as cp
from mdmcast.control_plane import (CcmMessage, ControlPlaneError, RootStore,
                                   collect_domain_snapshot,
                                   collect_inter_snapshot,
                                   domain_sync_messages, flow_delta,
                                   install_tree, locate_group_domains,
                                   metrics_message, mgm_join, mgm_leave,
                                   read_trace, simulate_delivery, sync_to_root,
                                   synthesize_trace, write_trace)
from mdmcast.link_metrics import normalize
from mdmcast.multicast import (CostWeights, MulticastGroup, tree_from_edges,
                               validate)
from mdmcast.topology import TopoGenParams, generate_random

from conftest import (B11, B13, B21, B31, D1, D2, D3, D5, SRC, VN1, VN2,
                      norm_snap)

W = CostWeights()


@pytest.fixture(scope="module")
def gen_instance():
    params = TopoGenParams(n_domains=3, nodes_per_domain=5, seed=21)
    net, part, snap = generate_random(params)
    return net, part, snap, params


class TestMessages:
    def test_message_validation(self):
        with pytest.raises(ControlPlaneError):
            CcmMessage("bogus", 1, 1, {})
        with pytest.raises(ControlPlaneError):
            CcmMessage("metrics_sync", 1, 0, {"edges": []})
        with pytest.raises(ControlPlaneError):
            CcmMessage("metrics_sync", 1, 1, {"edges": [{"u": 0}]})
        with pytest.raises(ControlPlaneError):
            CcmMessage("group_update", 1, 1, {"node": 0, "group_id": 1,
                                              "event": "explode"})

    def test_json_round_trip(self):
        msg = CcmMessage("group_update", 2, 7,
                         {"group_id": 1, "node": 4, "event": "add"})
        assert CcmMessage.from_json_dict(msg.to_json_dict()) == msg


class TestRootStore:
    def test_union_of_domain_syncs(self, gen_instance):
        net, part, snap, params = gen_instance
        trace = synthesize_trace(net, snap, params.bw_max)
        msgs = domain_sync_messages(net, part, trace, params.bw_max)
        store, merged = sync_to_root(msgs, net)
        assert merged.covers(net)

    def test_duplicate_replay_idempotent(self, gen_instance):
        net, part, snap, params = gen_instance
        trace = synthesize_trace(net, snap, params.bw_max)
        msgs = domain_sync_messages(net, part, trace, params.bw_max)
        s1 = sync_to_root(msgs)
        s2 = sync_to_root(msgs + msgs)
        assert s1.metrics_view() == s2.metrics_view()
        store = RootStore()
        assert store.apply(msgs[0]) is True
        assert store.apply(msgs[0]) is False

    def test_stale_seq_never_overwrites(self, gen_instance):
        net, part, snap, params = gen_instance
        trace = synthesize_trace(net, snap, params.bw_max)
        snap1 = collect_domain_snapshot(net, part, 1, trace, params.bw_max)
        newer = metrics_message(1, 5, snap1)
        # an "older" snapshot with visibly different metrics
        older_rows = [dict(r, bw=0.0) for r in newer.payload["edges"]]
        older = CcmMessage("metrics_sync", 1, 3, {"edges": older_rows})
        for order in itertools.permutations([older, newer]):
            store = sync_to_root(order)
            view = store.metrics_view()
            key = (older_rows[0]["u"], older_rows[0]["v"])
            assert view[key].bw == newer.payload["edges"][0]["bw"]

    def test_permutation_invariance(self, gen_instance):
        net, part, snap, params = gen_instance
        trace = synthesize_trace(net, snap, params.bw_max)
        msgs = domain_sync_messages(net, part, trace, params.bw_max)
        rng = np.random.default_rng(3)
        base = sync_to_root(msgs).metrics_view()
        for _ in range(5):
            perm = list(msgs)
            rng.shuffle(perm)
            assert sync_to_root(perm).metrics_view() == base

    def test_incomplete_view_lists_missing(self, gen_instance):
        net, part, snap, params = gen_instance
        trace = synthesize_trace(net, snap, params.bw_max)
        msgs = domain_sync_messages(net, part, trace, params.bw_max)[:-1]
        store = sync_to_root(msgs)
        with pytest.raises(ControlPlaneError, match="missing"):
            store.global_snapshot(net)


class TestCollection:
    def test_round_trip_reproduces_snapshot(self, gen_instance):
        net, part, snap, params = gen_instance
        trace = synthesize_trace(net, snap, params.bw_max)
        _, merged = sync_to_root(
            domain_sync_messages(net, part, trace, params.bw_max), net)
        for e, m in snap.items():
            got = merged[e]
            assert got.bw == pytest.approx(m.bw, abs=1e-5)
            assert got.delay == pytest.approx(m.delay, abs=1e-9)
            assert got.loss == pytest.approx(m.loss, abs=1e-5)
            assert got.err == pytest.approx(m.err, abs=1e-5)
            assert got.dist == pytest.approx(m.dist, abs=1e-9)

    def test_idle_counters_leave_full_capacity(self, gen_instance, fig_net,
                                               fig_part):
        snap = norm_snap(fig_net)  # only used for edge iteration
        records = []
        for (u, v) in list(snap.edges()):
            records.append({"kind": "port", "u": u, "v": v, "sample": 0,
                            "t_dur": 1.0, "tx_p": 10, "rx_p": 10, "tx_b": 0,
                            "rx_b": 0, "tx_err": 0, "rx_err": 0})
            records.append({"kind": "port", "u": u, "v": v, "sample": 1,
                            "t_dur": 2.0, "tx_p": 20, "rx_p": 20, "tx_b": 0,
                            "rx_b": 0, "tx_err": 0, "rx_err": 0})
            if u < v:
                records.append({"kind": "probe", "u": u, "v": v, "t_fwd": 3.0,
                                "t_re": 3.0, "rtt1": 2.0, "rtt2": 2.0})
        got = collect_domain_snapshot(fig_net, fig_part, 1, records, 40.0)
        for _, m in got.items():
            assert m.bw == 40.0

    def test_empty_trace_lists_edges(self, fig_net, fig_part):
        with pytest.raises(ControlPlaneError, match="incomplete"):
            collect_domain_snapshot(fig_net, fig_part, 1, [], 40.0)

    def test_trace_file_round_trip(self, gen_instance, tmp_path):
        net, part, snap, params = gen_instance
        trace = synthesize_trace(net, snap, params.bw_max)
        path = tmp_path / "trace.jsonl"
        write_trace(trace, path)
        assert read_trace(path) == trace


class TestLocate:
    def test_fig_group(self, fig_part, fig_group):
        src_dom, by_domain = locate_group_domains(fig_group, fig_part)
        assert src_dom == 1
        assert by_domain == {1: {D1}, 2: {D2}, 3: {D3, 12}, 4: {D5, 16}}

    def test_single_domain_group(self, fig_part):
        src_dom, by_domain = locate_group_domains(
            MulticastGroup(SRC, [D1]), fig_part)
        assert src_dom == 1 and set(by_domain) == {1}


class TestFlowTables:
    def test_chain_entry(self, fig_part):
        g = MulticastGroup(SRC, [D1])
        t = tree_from_edges(SRC, [(SRC, VN1), (VN1, D1)], fig_part)
        tables = install_tree(t, g, fig_part, group_id=9)
        assert tables[VN1] == [{"group": 9, "in": SRC, "out": [D1]}]
        assert tables[SRC] == [{"group": 9, "in": None, "out": [VN1]}]
        assert tables[D1] == [{"group": 9, "in": VN1, "out": []}]

    def test_star_root_fanout(self, fig_part):
        g = MulticastGroup(SRC, [VN1, VN2, B11])
        t = tree_from_edges(SRC, [(SRC, VN1), (SRC, VN2), (SRC, B11)],
                            fig_part)
        tables = install_tree(t, g, fig_part, group_id=1)
        assert tables[SRC][0]["out"] == sorted([VN1, VN2, B11])

    def test_fig_tree_entry_count(self, fig_tree, fig_group, fig_part):
        tables = install_tree(fig_tree, fig_group, fig_part, group_id=0)
        assert len(tables) == len(fig_tree.nodes())

    def test_invalid_tree_rejected(self, fig_part):
        g = MulticastGroup(SRC, [D2])
        t = tree_from_edges(SRC, [(SRC, VN1)], fig_part)
        with pytest.raises(ControlPlaneError):
            install_tree(t, g, fig_part, group_id=0)

    def test_delivery_simulation(self, fig_tree, fig_group, fig_part):
        tables = install_tree(fig_tree, fig_group, fig_part, group_id=0)
        visited = simulate_delivery(tables, 0, SRC)
        assert set(fig_group.online) <= visited
        assert visited == fig_tree.nodes()


class TestMgm:
    def setup_tree(self, fig_net, fig_part):
        group = MulticastGroup(SRC, [D1, D2])
        edges = [(SRC, VN1), (VN1, D1), (SRC, B11), (B11, B21), (B21, D2)]
        tree = tree_from_edges(SRC, edges, fig_part)
        snap = norm_snap(fig_net)
        return tree, group, snap

    def test_adjacent_join_single_edge(self, fig_net, fig_part):
        tree, group, snap = self.setup_tree(fig_net, fig_part)
        t2, g2, delta = mgm_join(fig_net, fig_part, tree, group, VN2, snap, W)
        assert VN2 in g2.online
        new_edges = t2.flat_edges - tree.flat_edges
        assert len(new_edges) == 1
        assert validate(t2, g2, fig_part) == []
        assert delta["install"]

    def test_join_existing_steiner_node(self, fig_net, fig_part):
        tree, group, snap = self.setup_tree(fig_net, fig_part)
        t2, g2, delta = mgm_join(fig_net, fig_part, tree, group, VN1, snap, W)
        assert t2.flat_edges == tree.flat_edges
        assert VN1 in g2.online
        assert delta == {"install": {}, "remove": []}

    def test_join_cost_increase_equals_graft_cost(self, fig_net, fig_part):
        from mdmcast.baselines import edge_weights
        tree, group, snap = self.setup_tree(fig_net, fig_part)
        w_map = edge_weights(snap, W)
        t2, _, _ = mgm_join(fig_net, fig_part, tree, group, D3, snap, W)
        graft = t2.flat_edges - tree.flat_edges
        graft_cost = sum(min(w_map[e], w_map[(e[1], e[0])]) for e in graft)
        # identical per-direction weights in this snapshot
        total_before = sum(w_map[e] for e in tree.flat_edges)
        total_after = sum(w_map[e] for e in t2.flat_edges)
        assert total_after - total_before == pytest.approx(graft_cost)

    def test_join_rejections(self, fig_net, fig_part):
        tree, group, snap = self.setup_tree(fig_net, fig_part)
        with pytest.raises(ControlPlaneError):
            mgm_join(fig_net, fig_part, tree, group, D1, snap, W)
        with pytest.raises(ControlPlaneError):
            mgm_join(fig_net, fig_part, tree, group, SRC, snap, W)

    def test_leaf_leave_prunes_branch(self, fig_net, fig_part):
        tree, group, snap = self.setup_tree(fig_net, fig_part)
        t2, g2, delta = mgm_leave(fig_net, fig_part, tree, group, D2)
        assert D2 not in g2.online
        # the whole private branch SRC-B11-B21-D2 is gone
        assert t2.flat_edges == frozenset({(SRC, VN1), (VN1, D1)})
        assert D2 not in delta["install"]
        assert B11 in delta["remove"] and B21 in delta["remove"]

    def test_transit_destination_leave_keeps_edges(self, fig_net, fig_part):
        group = MulticastGroup(SRC, [VN1, D1])
        tree = tree_from_edges(SRC, [(SRC, VN1), (VN1, D1)], fig_part)
        t2, g2, delta = mgm_leave(fig_net, fig_part, tree, group, VN1)
        assert t2.flat_edges == tree.flat_edges
        assert VN1 not in g2.online
        assert delta == {"install": {}, "remove": []}

    def test_join_then_leave_round_trip(self, fig_net, fig_part):
        tree, group, snap = self.setup_tree(fig_net, fig_part)
        t2, g2, _ = mgm_join(fig_net, fig_part, tree, group, D3, snap, W)
        t3, g3, _ = mgm_leave(fig_net, fig_part, t2, g2, D3)
        assert t3.flat_edges == tree.flat_edges
        assert g3.online == group.online

    def test_leave_rejections(self, fig_net, fig_part):
        tree, group, snap = self.setup_tree(fig_net, fig_part)
        with pytest.raises(ControlPlaneError):
            mgm_leave(fig_net, fig_part, tree, group, VN2)

    def test_random_sequences_stay_valid(self, gen_instance):
        net, part, snap_raw, params = gen_instance
        snap = normalize(snap_raw)
        rng = np.random.default_rng(77)
        for trial in range(10):
            group = MulticastGroup(0, [net.n - 1])
            tree = None
            from mdmcast.rl.training import EpisodeContext, Hyperparams, \
                build_agents, greedy_rollout
            hp = Hyperparams(hidden=(16, 16), seed=trial)
            agents = build_agents(net, part, hp)
            tree = greedy_rollout(
                EpisodeContext(net, part, group, W, snap), agents, hp)
            assert tree is not None
            for _ in range(8):
                candidates_join = sorted(set(net.nodes) - set(group.online)
                                         - {group.src})
                candidates_leave = sorted(group.online)
                if rng.random() < 0.5 and candidates_join:
                    v = int(candidates_join[rng.integers(0, len(candidates_join))])
                    tree, group, _ = mgm_join(net, part, tree, group, v,
                                              snap, W)
                elif len(candidates_leave) > 1:
                    v = int(candidates_leave[rng.integers(0, len(candidates_leave))])
                    tree, group, _ = mgm_leave(net, part, tree, group, v)
                else:
                    continue
                assert validate(tree, group, part) == []
                tables = install_tree(tree, group, part, group_id=1)
                visited = simulate_delivery(tables, 1, group.src)
                assert set(group.online) <= visited

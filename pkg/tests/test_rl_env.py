"""Environment step semantics, rewards, masking and state tensors."""

import numpy as np
import pytest

from mdmcast.multicast import CostWeights, MulticastGroup
from mdmcast.rl.env import (ROLE_IN_TREE, ROLE_SOURCE, ROLE_TARGET,
                            ROLE_TARGET_REACHED, InterdomainEnv,
                            IntradomainEnv, build_state, reward_end,
                            reward_part, tree_mask)
from mdmcast.link_metrics import EdgeMetrics

from conftest import (B11, B13, B21, B24, B31, B41, D1, D2, D3, D4, D5, D6,
                      SRC, VN1, norm_snap)

W = CostWeights()


@pytest.fixture()
def snap(fig_net):
    return norm_snap(fig_net, default=(0.8, 0.2, 0.0, 0.0, 0.5))


class TestStateTensor:
    def test_channels_equal_snapshot_matrices(self, fig_net, snap):
        channels = snap.channel_matrices(fig_net.n)
        state = build_state(channels, np.zeros((fig_net.n, fig_net.n)))
        for u, v in fig_net.edges:
            assert state[0, u, v] == snap[(u, v)].bw
            assert state[1, u, v] == snap[(u, v)].delay
            assert state[4, v, u] == snap[(v, u)].dist
        # non-edges carry zero
        assert state[0, SRC, D6] == 0.0

    def test_empty_tree_mask_has_only_diagonal_roles(self):
        m = tree_mask(5, [], {0: ROLE_SOURCE, 3: ROLE_TARGET})
        off_diag = m - np.diag(np.diag(m))
        assert not off_diag.any()
        assert m[0, 0] == ROLE_SOURCE and m[3, 3] == ROLE_TARGET

    def test_adding_edge_flips_exactly_two_cells(self):
        roles = {0: ROLE_SOURCE, 4: ROLE_TARGET}
        before = tree_mask(6, [(0, 2)], roles)
        after = tree_mask(6, [(0, 2), (2, 3)], roles)
        diff = np.argwhere(before != after)
        assert sorted(map(tuple, diff)) == [(2, 3), (3, 2)]
        assert after[2, 3] == 1.0 and after[3, 2] == 1.0

    def test_build_state_shape_mismatch(self):
        with pytest.raises(Exception):
            build_state(np.zeros((5, 4, 4)), np.zeros((3, 3)))


class TestRewardFunctions:
    def test_perfect_edge_sums_weights(self):
        em = EdgeMetrics(bw=1, delay=0, loss=0, err=0, dist=0)
        assert reward_part(em, W) == pytest.approx(1.3, abs=1e-9)

    def test_completion_reward_worked_value(self, fig_net):
        snap = norm_snap(fig_net, default=(0.8, 0.1, 0.0, 0.0, 0.2))
        r = reward_end([(VN1, D1)], snap, W)
        assert r == pytest.approx(1.11, abs=1e-9)


class TestInterdomainEnv:
    def make(self, fig_net, fig_part, snap, dests, **kw):
        group = MulticastGroup(SRC, dests)
        return InterdomainEnv(fig_net, fig_part, snap, group, W, **kw)

    def test_action_list_is_sorted_inter_edges(self, fig_net, fig_part, snap):
        env = self.make(fig_net, fig_part, snap, [D2])
        assert env.actions == sorted(fig_part.inter_edges)
        assert env.actions == [(3, 6), (4, 9), (7, 13), (12, 14)]

    def test_perfect_edge_reward_scaled(self, fig_net, fig_part):
        # N3 is not a destination domain here, so  (4, 9) earns only the
        # scaled single-step reward 0.1 * 1.3
        snap = norm_snap(fig_net, default=(1.0, 0.0, 0.0, 0.0, 0.0))
        env = self.make(fig_net, fig_part, snap, [D2], part_scale=0.1)
        a = env.actions.index((4, 9))
        _, r, done, info = env.step(a)
        assert info["valid"] and not done
        assert r == pytest.approx(0.13, abs=1e-9)

    def test_loop_penalty(self, fig_net, fig_part, snap):
        env = self.make(fig_net, fig_part, snap, [D2, D3])
        env.step(env.actions.index((4, 9)))     # connect N3
        s_before = env.state().m_t.copy()
        _, r, _, info = env.step(env.actions.index((4, 9)))
        assert r == -0.5 and not info["valid"]
        assert np.array_equal(env.state().m_t, s_before)

    def test_invalid_penalty(self, fig_net, fig_part, snap):
        env = self.make(fig_net, fig_part, snap, [D2, D5])
        s_before = env.state().m_t.copy()
        _, r, _, info = env.step(env.actions.index((7, 13)))  # N2 not connected
        assert r == -0.7 and not info["valid"]
        assert np.array_equal(env.state().m_t, s_before)

    def test_completion_reward_added_for_destination_domain(self, fig_net,
                                                            fig_part):
        snap = norm_snap(fig_net, default=(1.0, 0.0, 0.0, 0.0, 0.0))
        env = self.make(fig_net, fig_part, snap, [D2])
        _, r, done, info = env.step(env.actions.index((3, 6)))
        assert done and info["completed"]
        # scaled step reward plus the full path completion reward
        assert r == pytest.approx(0.1 * 1.3 + 1.3, abs=1e-9)

    def test_multihop_completion_aggregates_path(self, fig_net, fig_part):
        overrides = {
            (3, 6): (0.8, 0.1, 0.0, 0.0, 0.2), (6, 3): (0.8, 0.1, 0.0, 0.0, 0.2),
            (7, 13): (0.5, 0.3, 0.0, 0.0, 0.4), (13, 7): (0.5, 0.3, 0.0, 0.0, 0.4),
        }
        snap = norm_snap(fig_net, default=(1.0, 0.0, 0.0, 0.0, 0.0),
                         overrides=overrides)
        env = self.make(fig_net, fig_part, snap, [D5])
        env.step(env.actions.index((3, 6)))
        _, r, done, _ = env.step(env.actions.index((7, 13)))
        assert done
        # path N1->N2->N4: bw min .5, delay sum .4, dist mean .3
        expected_end = 0.7 * 0.5 + 0.3 * 0.6 + 0.1 + 0.1 + 0.1 * 0.7
        expected_part = 0.1 * reward_part(snap[(7, 13)], W)
        assert r == pytest.approx(expected_part + expected_end, abs=1e-9)

    def test_valid_action_mask(self, fig_net, fig_part, snap):
        env = self.make(fig_net, fig_part, snap, [D5])
        assert env.valid_actions() == [0, 1]  # (3,6) and (4,9) touch N1
        env.step(0)
        assert env.valid_actions() == [1, 2]  # now N2 frontier opens (7,13)

    def test_done_at_reset_when_dests_local(self, fig_net, fig_part, snap):
        env = self.make(fig_net, fig_part, snap, [D1, VN1])
        assert env.done and not env.failed

    def test_step_cap_fails_episode(self, fig_net, fig_part, snap):
        env = self.make(fig_net, fig_part, snap, [D5], t_max=2)
        env.step(env.actions.index((12, 14)))   # invalid, burns a step
        _, _, done, info = env.step(env.actions.index((12, 14)))
        assert done and info["failed"] and env.failed

    def test_role_marks(self, fig_net, fig_part, snap):
        env = self.make(fig_net, fig_part, snap, [D2, D3])
        m = env.state().m_t
        assert m[SRC, SRC] == ROLE_SOURCE
        assert m[D2, D2] == ROLE_TARGET
        env.step(env.actions.index((3, 6)))
        m = env.state().m_t
        assert m[D2, D2] == ROLE_TARGET_REACHED
        assert m[B11, B11] == ROLE_IN_TREE
        assert m[3, 6] == 1.0 and m[6, 3] == 1.0


class TestIntradomainEnv:
    def make(self, fig_net, fig_part, snap, domain, root, targets, **kw):
        return IntradomainEnv(fig_net, fig_part, snap, domain, root,
                              targets, W, **kw)

    def test_actions_are_domain_nodes(self, fig_net, fig_part, snap):
        env = self.make(fig_net, fig_part, snap, 3, B31, {D3})
        assert env.actions == [B31, 10, D3, D4]

    def test_reach_target_combines_rewards(self, fig_net, fig_part):
        snap = norm_snap(fig_net, default=(0.8, 0.1, 0.0, 0.0, 0.2))
        env = self.make(fig_net, fig_part, snap, 1, VN1, {D1})
        a = env.actions.index(D1)
        _, r, done, info = env.step(a)
        assert done and info["completed"]
        expected = 0.1 * reward_part(snap[(VN1, D1)], W) + 1.11
        assert r == pytest.approx(expected, abs=1e-9)

    def test_in_tree_node_is_loop(self, fig_net, fig_part, snap):
        env = self.make(fig_net, fig_part, snap, 1, SRC, {D1})
        env.step(env.actions.index(VN1))
        before = env.state().m_t.copy()
        _, r, _, info = env.step(env.actions.index(VN1))
        assert r == -0.5 and not info["valid"]
        assert np.array_equal(env.state().m_t, before)

    def test_detached_node_is_invalid(self, fig_net, fig_part, snap):
        env = self.make(fig_net, fig_part, snap, 1, SRC, {D1})
        _, r, _, info = env.step(env.actions.index(B13))  # B13 not adjacent to SRC
        assert r == -0.7 and not info["valid"]

    def test_min_weight_connecting_edge_chosen(self, fig_net, fig_part):
        # D1 is reachable from both VN1 (cheap) and B13 (expensive)
        overrides = {
            (VN1, D1): (1.0, 0.0, 0.0, 0.0, 0.0), (D1, VN1): (1.0, 0.0, 0.0, 0.0, 0.0),
            (B13, D1): (0.0, 1.0, 1.0, 1.0, 1.0), (D1, B13): (0.0, 1.0, 1.0, 1.0, 1.0),
        }
        snap = norm_snap(fig_net, overrides=overrides)
        env = self.make(fig_net, fig_part, snap, 1, SRC, {D1})
        env.step(env.actions.index(VN1))
        env.step(env.actions.index(B13))
        env.step(env.actions.index(D1))
        assert (VN1, D1) in {tuple(sorted(e)) for e in env.edges}

    def test_actions_restricted_to_domain_edges(self, fig_net, fig_part, snap):
        # B21 is adjacent to B11 only through an inter edge; from domain 2's
        # view the env must not offer cross-domain attachment
        env = self.make(fig_net, fig_part, snap, 2, B21, {D2})
        assert set(env.valid_actions()) == {env.actions.index(B24),
                                            env.actions.index(D2)}

    def test_done_at_reset_when_root_is_only_target(self, fig_net, fig_part,
                                                    snap):
        env = self.make(fig_net, fig_part, snap, 2, B21, {B21})
        assert env.done and env.tree_edges() == []

    def test_step_cap(self, fig_net, fig_part, snap):
        env = self.make(fig_net, fig_part, snap, 1, SRC, {D1}, t_max=1)
        _, _, done, info = env.step(env.actions.index(B13))
        assert done and info["failed"]

    def test_target_outside_domain_rejected(self, fig_net, fig_part, snap):
        with pytest.raises(Exception):
            self.make(fig_net, fig_part, snap, 2, B21, {D3})

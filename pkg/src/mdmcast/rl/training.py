"""Episode orchestration and the hybrid offline/online trainer.

One inter-domain agent builds the boundary-edge tree; once it completes,
per-domain agents grow their trees toward the synchronized boundary
nodes and local destinations. Training interleaves replayed batches
from each agent's own buffer with on-policy updates after every step.
Agents are fully decentralized: each owns its parameters, buffer and
RNG stream, so no gradient or sample crosses agents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..baselines import edge_weights, symmetrize
from ..multicast import (InterdomainTree, IntradomainTree, compose,
                         domain_tree, validate)
from .agent import Agent, AgentError, actor_update, critic_update
from .buffer import Transition
from .env import InterdomainEnv, IntradomainEnv


@dataclass(frozen=True)
class Hyperparams:
    """Training knobs; defaults follow the evaluated configuration."""

    beta: tuple = (0.7, 0.3, 0.1, 0.1, 0.1)
    alpha1: float = 1e-4          # actor learning rate
    alpha2: float = 3e-4          # critic learning rate
    gamma: float = 0.9
    batch_size: int = 32          # offline batch size k
    n_update: int = 10            # online updates per environment step
    episodes: int = 2000
    r_loop: float = -0.5
    r_hell: float = -0.7
    part_scale: float = 0.1       # single-step reward scale (end:part = 1:0.1)
    t_max: int | None = None      # None: 4 x action-scope size
    prefill_episodes: int = 50
    offline_every: int = 16       # env steps between replayed batches
    offline_init_batches: int = 25
    hidden: tuple = (256, 256)
    buffer_capacity: int = 2048
    valid_bias: float = 0.8       # prefill probability of sampling a valid action
    dtype: str = "float64"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if len(self.beta) != 5 or any(b < 0 for b in self.beta):
            raise ValueError("beta must be five nonnegative weights")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype).type


@dataclass
class EpisodeContext:
    """Everything one episode needs for a fixed snapshot."""

    net: object
    part: object
    group: object
    weights: object
    snap: object
    channels: object = None
    sym_w: dict = None

    def __post_init__(self):
        if self.channels is None:
            self.channels = self.snap.channel_matrices(self.net.n)
        if self.sym_w is None:
            self.sym_w = symmetrize(edge_weights(self.snap, self.weights))

    def tree_weight(self, tree):
        return sum(self.sym_w[e] for e in tree.flat_edges)


def build_agents(net, part, hp):
    """One inter-domain agent plus one agent per domain, isolated seeds."""
    state_dim = 6 * net.n * net.n
    seeds = np.random.SeedSequence(hp.seed).spawn(part.m + 1)
    agents = {}
    if part.inter_edges:
        agents["inter"] = Agent(
            "inter", "inter", state_dim, len(part.inter_edges), hp.hidden,
            seeds[0], hp.buffer_capacity, hp.alpha1, hp.alpha2, hp.gamma,
            hp.batch_size, dtype=hp.np_dtype)
    for d in range(1, part.m + 1):
        agents[f"intra_{d}"] = Agent(
            f"intra_{d}", "intra", state_dim, len(part.members[d]), hp.hidden,
            seeds[d], hp.buffer_capacity, hp.alpha1, hp.alpha2, hp.gamma,
            hp.batch_size, dtype=hp.np_dtype, domain=d)
    return agents


def offline_training(buffer, actor, critic, hp, rng, n_batches=1):
    """Functional replay training: per-transition critic + actor updates.

    Samples `n_batches` batches of size k without replacement within each
    batch and returns the updated (actor, critic) pair.
    """
    for _ in range(n_batches):
        for tr in buffer.sample(hp.batch_size, rng):
            critic, psi, _ = critic_update(
                critic, tr.s.flat(), tr.r, tr.s_next.flat(), tr.done,
                hp.gamma, hp.alpha2)
            actor = actor_update(actor, tr.s.flat(), tr.a, psi, hp.alpha1)
    return actor, critic


def intra_assignments(part, group, inter_edges):
    """Per-domain (root, targets) derived from a completed inter tree.

    The source domain roots at the source; every other reached domain
    roots at its entry boundary node. Targets are the domain's online
    destinations plus its exit boundary nodes.
    """
    src_dom = part.domain_of(group.src)
    info = domain_tree(inter_edges, part, src_dom)
    online = set(group.online_dests())
    out = {}
    for d, dinfo in sorted(info.items()):
        root = group.src if d == src_dom else dinfo["entry"]
        targets = {v for v in online if part.domain_of(v) == d}
        targets |= set(dinfo["exits"])
        targets.discard(root)
        out[d] = (root, frozenset(targets))
    return out


def _run_env(env, agent, hp, train, greedy, offline_enabled):
    """Drive one environment to completion with one agent.

    Online updates run after every non-final step; a replayed batch runs
    every `offline_every` steps once the buffer can fill one.
    """
    total_r = 0.0
    steps = 0
    s = env.state()
    while not env.done:
        if greedy:
            a = agent.sample_action(s, greedy=True, valid=env.valid_actions())
        else:
            a = agent.sample_action(s)
        s2, r, done, info = env.step(a)
        total_r += r
        steps += 1
        if train:
            agent.buffer.add(Transition(s, a, r, s2, done))
            if (offline_enabled and len(agent.buffer) >= hp.batch_size
                    and steps % hp.offline_every == 0):
                agent.offline_train(1)
        if done:
            break
        if train:
            tr = Transition(s, a, r, s2, False)
            for _ in range(hp.n_update):
                agent.online_update(tr)
        s = s2
    return total_r, steps


def _random_policy_step(env, rng, valid_bias):
    valid = env.valid_actions()
    if valid and rng.random() < valid_bias:
        return int(valid[rng.integers(0, len(valid))])
    return int(rng.integers(0, env.action_count))


def _prefill_env(env, agent, rng, valid_bias):
    s = env.state()
    while not env.done:
        a = _random_policy_step(env, rng, valid_bias)
        s2, r, done, _ = env.step(a)
        agent.buffer.add(Transition(s, a, r, s2, done))
        s = s2


@dataclass
class EpisodeResult:
    tree: object = None
    valid: bool = False
    cost: float = float("nan")
    rewards: dict = field(default_factory=dict)
    steps: dict = field(default_factory=dict)
    failed: bool = False


def run_episode(ctx, agents, hp, train=True, greedy=False,
                offline_enabled=True):
    """One full two-stage construction episode (Algorithm-style loop)."""
    res = EpisodeResult()
    inter_env = InterdomainEnv(
        ctx.net, ctx.part, ctx.snap, ctx.group, ctx.weights,
        part_scale=hp.part_scale, r_loop=hp.r_loop, r_hell=hp.r_hell,
        t_max=hp.t_max, channels=ctx.channels)
    if not inter_env.done:
        agent = agents["inter"]
        r, n = _run_env(inter_env, agent, hp, train, greedy, offline_enabled)
        res.rewards["inter"] = r
        res.steps["inter"] = n
    if inter_env.failed:
        res.failed = True
        return res

    assignments = intra_assignments(ctx.part, ctx.group,
                                    inter_env.chosen_edges())
    intra_trees = []
    any_failed = False
    for d, (root, targets) in sorted(assignments.items()):
        env = IntradomainEnv(
            ctx.net, ctx.part, ctx.snap, d, root, targets, ctx.weights,
            part_scale=hp.part_scale, r_loop=hp.r_loop, r_hell=hp.r_hell,
            t_max=hp.t_max, channels=ctx.channels)
        if not env.done:
            agent = agents[f"intra_{d}"]
            r, n = _run_env(env, agent, hp, train, greedy, offline_enabled)
            res.rewards[f"intra_{d}"] = r
            res.steps[f"intra_{d}"] = n
        if env.failed:
            any_failed = True
        intra_trees.append(IntradomainTree.of(d, root, env.tree_edges()))
    if any_failed:
        res.failed = True
        return res

    tree = compose(InterdomainTree.of(inter_env.chosen_edges()),
                   tuple(intra_trees))
    res.tree = tree
    res.valid = validate(tree, ctx.group, ctx.part) == []
    res.cost = ctx.tree_weight(tree)
    return res


def prefill_episode(ctx, agents, hp):
    """Random-rollout episode that only fills buffers (no updates)."""
    inter_env = InterdomainEnv(
        ctx.net, ctx.part, ctx.snap, ctx.group, ctx.weights,
        part_scale=hp.part_scale, r_loop=hp.r_loop, r_hell=hp.r_hell,
        t_max=hp.t_max, channels=ctx.channels)
    if not inter_env.done:
        _prefill_env(inter_env, agents["inter"], agents["inter"].rng,
                     hp.valid_bias)
    if inter_env.failed:
        return
    for d, (root, targets) in sorted(
            intra_assignments(ctx.part, ctx.group,
                              inter_env.chosen_edges()).items()):
        env = IntradomainEnv(
            ctx.net, ctx.part, ctx.snap, d, root, targets, ctx.weights,
            part_scale=hp.part_scale, r_loop=hp.r_loop, r_hell=hp.r_hell,
            t_max=hp.t_max, channels=ctx.channels)
        if not env.done:
            agent = agents[f"intra_{d}"]
            _prefill_env(env, agent, agent.rng, hp.valid_bias)


def greedy_rollout(ctx, agents, hp=None):
    """Deterministic evaluation rollout with invalid actions masked.

    Returns the composed tree, or None when any stage hits its step cap.
    """
    hp = hp or Hyperparams()
    res = run_episode(ctx, agents, hp, train=False, greedy=True)
    return res.tree


@dataclass
class TrainResult:
    agents: dict
    curves: list
    episode_rewards: list
    hp: object


def train(net, part, group, weights, hp, snapshots, hybrid=True,
          agents=None, log_every=None, log=print):
    """Hybrid offline/online training over a snapshot schedule.

    Phase 1 (hybrid only): random rollouts fill every agent's buffer,
    then replayed batches establish initial policies. Phase 2 runs
    training episodes, one snapshot per episode round-robin, with
    replayed batches interleaved into the step loop. Pure-online mode
    (hybrid=False) skips every replay path. Deterministic per seed.
    """
    if hp.episodes < 0:
        raise ValueError("episode count must be nonnegative")
    ctxs = [EpisodeContext(net, part, group, weights, snap)
            for snap in snapshots]
    if not ctxs:
        raise ValueError("at least one training snapshot is required")
    if agents is None:
        agents = build_agents(net, part, hp)

    if hybrid and hp.episodes > 0:
        for e in range(hp.prefill_episodes):
            prefill_episode(ctxs[e % len(ctxs)], agents, hp)
        for name in sorted(agents):
            agent = agents[name]
            if len(agent.buffer) >= hp.batch_size:
                agent.offline_train(hp.offline_init_batches)

    curves = []
    episode_rewards = []
    for ep in range(hp.episodes):
        ctx = ctxs[ep % len(ctxs)]
        res = run_episode(ctx, agents, hp, train=True,
                          offline_enabled=hybrid)
        for name in sorted(res.rewards):
            curves.append({
                "episode": ep,
                "agent_id": name,
                "total_reward": res.rewards[name],
                "steps": res.steps[name],
                "valid_tree": int(res.valid),
                "tree_cost": res.cost,
            })
        episode_rewards.append(sum(res.rewards.values()))
        for agent in agents.values():
            agent.assert_finite()
        if log_every and (ep + 1) % log_every == 0:
            recent = episode_rewards[-log_every:]
            log(f"episode {ep + 1}/{hp.episodes} "
                f"mean_reward={np.mean(recent):+.3f} valid={res.valid}")
    return TrainResult(agents, curves, episode_rewards, hp)


def agents_to_checkpoint(agents):
    """JSON-ready checkpoint: layer shapes plus row-major values per agent."""
    payload = {"version": 1, "agents": []}
    for name in sorted(agents):
        a = agents[name]
        a.assert_finite()
        payload["agents"].append({
            "id": a.id,
            "kind": a.kind,
            "domain": a.domain,
            "action_count": a.action_count,
            "actor_sizes": list(a.actor.sizes),
            "critic_sizes": list(a.critic.sizes),
            "actor_values": [float(x) for x in a.actor.flat_values()],
            "critic_values": [float(x) for x in a.critic.flat_values()],
        })
    return payload


def agents_from_checkpoint(payload, hp):
    """Rebuild evaluation-ready agents from a checkpoint dict."""
    from .nets import MLPParams

    if payload.get("version") != 1:
        raise AgentError(f"unsupported checkpoint version {payload.get('version')}")
    agents = {}
    for rec in payload["agents"]:
        sizes = rec["actor_sizes"]
        agent = Agent(rec["id"], rec["kind"], sizes[0], rec["action_count"],
                      tuple(sizes[1:-1]), np.random.SeedSequence(0),
                      hp.buffer_capacity, hp.alpha1, hp.alpha2, hp.gamma,
                      hp.batch_size, dtype=hp.np_dtype, domain=rec["domain"])
        agent.actor = MLPParams.from_flat(sizes, rec["actor_values"],
                                          dtype=hp.np_dtype)
        agent.critic = MLPParams.from_flat(rec["critic_sizes"],
                                           rec["critic_values"],
                                           dtype=hp.np_dtype)
        agents[rec["id"]] = agent
    return agents

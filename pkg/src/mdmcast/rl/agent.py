"""Actor-critic updates and the per-agent container.

Updates follow the per-transition form: the critic descends the squared
TD residual with the TD target held constant, the actor ascends the
residual-weighted log-policy gradient. Each agent owns its parameters,
replay buffer and RNG stream; nothing is shared between agents.
"""

from __future__ import annotations

import numpy as np

from .buffer import ReplayBuffer
from .nets import (actor_forward, actor_log_prob_grad, critic_forward,
                   critic_value_grad, init_mlp, mlp_backward_update,
                   mlp_forward, softmax)


class AgentError(RuntimeError):
    pass


def td_residual(r, v_next, v_now, gamma):
    """One-step TD residual; pass v_next = 0 for terminal transitions."""
    if not 0.0 <= gamma <= 1.0:
        raise AgentError(f"discount {gamma} outside [0, 1]")
    return r + gamma * v_next - v_now


def critic_update(omega, x, r, x_next, done, gamma, alpha2):
    """Functional critic step; returns (omega', psi, loss)."""
    v_now, grads = critic_value_grad(omega, x)
    v_next = 0.0 if done else critic_forward(omega, x_next)
    psi = td_residual(r, v_next, v_now, gamma)
    if not np.isfinite(psi):
        raise AgentError("non-finite TD residual")
    out = omega.copy()
    out.add_scaled(grads, alpha2 * psi)
    return out, psi, 0.5 * psi * psi


def actor_update(theta, x, action, psi, alpha1):
    """Functional policy-gradient step; returns theta'."""
    _, grads = actor_log_prob_grad(theta, x, action)
    out = theta.copy()
    out.add_scaled(grads, alpha1 * psi)
    return out


class Agent:
    """One decision maker: policy, value net, buffer and RNG stream."""

    def __init__(self, agent_id, kind, state_dim, action_count, hidden,
                 seed_seq, buffer_capacity, alpha1, alpha2, gamma,
                 batch_size, dtype=np.float64, domain=None):
        if kind not in ("inter", "intra"):
            raise AgentError(f"unknown agent kind {kind!r}")
        self.id = agent_id
        self.kind = kind
        self.domain = domain
        self.action_count = action_count
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.gamma = gamma
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed_seq)
        sizes = (state_dim, *hidden)
        self.actor = init_mlp((*sizes, action_count), self.rng, dtype=dtype)
        self.critic = init_mlp((*sizes, 1), self.rng, dtype=dtype)
        self.buffer = ReplayBuffer(buffer_capacity)
        self.updates = 0
        self._ones1 = np.ones(1, dtype=dtype)

    def policy(self, state):
        return actor_forward(self.actor, state.flat(self.actor.dtype))

    def value(self, state):
        return critic_forward(self.critic, state.flat(self.critic.dtype))

    def sample_action(self, state, greedy=False, valid=None):
        """Sample from the policy, or argmax over valid actions if greedy.

        Training-time sampling covers the full action list (penalties
        teach validity); greedy evaluation masks invalid actions and
        breaks ties toward the lowest index.
        """
        probs = self.policy(state)
        if greedy:
            if valid is None:
                valid = range(len(probs))
            valid = list(valid)
            if not valid:
                raise AgentError("no valid actions to evaluate greedily")
            best = valid[0]
            for i in valid[1:]:
                if probs[i] > probs[best]:
                    best = i
            return best
        p = probs / probs.sum()
        return int(self.rng.choice(len(p), p=p))

    def _apply_updates(self, tr):
        """One fused critic + actor step on a single transition."""
        x = tr.s.flat(self.critic.dtype)
        out_c, inputs_c = mlp_forward(self.critic, x)
        v_now = float(out_c[0])
        v_next = (0.0 if tr.done
                  else critic_forward(self.critic, tr.s_next.flat(self.critic.dtype)))
        psi = td_residual(tr.r, v_next, v_now, self.gamma)
        if not np.isfinite(psi):
            raise AgentError(f"agent {self.id}: non-finite TD residual")
        mlp_backward_update(self.critic, inputs_c, self._ones1,
                            self.alpha2 * psi)
        logits, inputs_a = mlp_forward(self.actor, x)
        probs = softmax(logits)
        dlogits = -probs
        dlogits[tr.a] += 1.0
        mlp_backward_update(self.actor, inputs_a, dlogits, self.alpha1 * psi)
        self.updates += 1
        return psi

    def online_update(self, tr):
        return self._apply_updates(tr)

    def offline_train(self, n_batches=1):
        """Per-transition updates over sampled batches (no env interaction)."""
        for _ in range(n_batches):
            for tr in self.buffer.sample(self.batch_size, self.rng):
                self._apply_updates(tr)

    def assert_finite(self):
        if not (self.actor.is_finite() and self.critic.is_finite()):
            raise AgentError(f"agent {self.id}: non-finite parameters")

"""Two-tier actor-critic tree construction: environments, nets, training."""

from .agent import Agent, AgentError, actor_update, critic_update, td_residual
from .buffer import ReplayBuffer, Transition
from .env import (InterdomainEnv, IntradomainEnv, StateRef, build_state,
                  tree_mask)
from .nets import MLPParams, actor_forward, critic_forward, init_mlp
from .training import (EpisodeContext, Hyperparams, build_agents,
                       greedy_rollout, offline_training, run_episode, train)

__all__ = [
    "Agent", "AgentError", "EpisodeContext", "Hyperparams", "InterdomainEnv",
    "IntradomainEnv", "MLPParams", "ReplayBuffer", "StateRef", "Transition",
    "actor_forward", "actor_update", "build_agents", "build_state",
    "critic_forward", "critic_update", "greedy_rollout", "init_mlp",
    "offline_training", "run_episode", "td_residual", "train", "tree_mask",
]

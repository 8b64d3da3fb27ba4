"""Multi-domain SDWN multicast routing lab.

Builds multi-domain network models, computes per-link QoS metrics from
port counters and delay probes, constructs cross-domain multicast trees
with classic Steiner heuristics, an exact oracle, and a two-tier
actor-critic method, and compares them under a common cost model.
"""

__version__ = "0.1.0"

"""Experiment configuration, metric reporting and algorithm comparison.

Reports evaluate trees on raw (de-normalized) units so they read in
Mbps/ms/meters, while construction costs stay in normalized composite
units. Every run is reproducible: snapshots derive from the config seed
and all outputs are written without timestamps.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .link_metrics import MetricSnapshot, normalize
from .multicast import (CostWeights, MulticastGroup, extract_paths,
                        path_metrics, tree_from_edges, validate)
from .rl.training import (EpisodeContext, Hyperparams, agents_from_checkpoint,
                          agents_to_checkpoint, build_agents, greedy_rollout,
                          train)
from .topology import (TopoGenParams, TopologyError, draw_metrics,
                       generate_random, load_topology, perturb_metrics,
                       save_topology)

ALGORITHMS = ("macdmr", "kmb", "sctf", "exact")

REPORT_COLUMNS = ("snapshot_id", "algorithm", "bw_mbps", "delay_ms", "loss",
                  "err", "len", "dist_m", "cost", "valid")


class ConfigError(ValueError):
    pass


def _expect(cond, where, msg):
    if not cond:
        raise ConfigError(f"config field '{where}': {msg}")


@dataclass
class ExperimentConfig:
    topology_file: str | None
    gen_params: TopoGenParams
    group_src: int
    group_dests: tuple
    weights: CostWeights
    hp: Hyperparams
    snapshots_train: int
    snapshots_eval: int
    snapshot_seed: int
    algorithms: tuple
    out_dir: str
    checkpoint: str | None
    hybrid: bool

    @classmethod
    def from_dict(cls, data, base_dir="."):
        _expect(isinstance(data, dict), "<root>", "must be a JSON object")
        topo = data.get("topology", {})
        _expect(isinstance(topo, dict), "topology", "must be an object")
        topo_file = topo.get("file")
        gen_fields = topo.get("generate", {})
        _expect(topo_file is None or isinstance(topo_file, str),
                "topology.file", "must be a path string")
        try:
            gen_params = TopoGenParams(**{k: tuple(v) if isinstance(v, list)
                                          else v for k, v in gen_fields.items()})
        except TypeError as exc:
            raise ConfigError(f"config field 'topology.generate': {exc}") from exc
        except TopologyError as exc:
            raise ConfigError(f"config field 'topology.generate': {exc}") from exc

        group = data.get("group")
        _expect(isinstance(group, dict), "group", "required object")
        _expect(isinstance(group.get("src"), int), "group.src",
                "must be a node id")
        dests = group.get("dests")
        _expect(isinstance(dests, list) and dests, "group.dests",
                "must be a nonempty list of node ids")

        wl = data.get("weights", [0.7, 0.3, 0.1, 0.1, 0.1])
        _expect(isinstance(wl, list) and len(wl) == 5, "weights",
                "must be five numbers")
        weights = CostWeights(*wl)

        try:
            hp = Hyperparams(**data.get("hyperparams", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config field 'hyperparams': {exc}") from exc

        snaps = data.get("snapshots", {})
        train_n = snaps.get("train", 1)
        eval_n = snaps.get("eval", 1)
        _expect(isinstance(train_n, int) and train_n >= 1, "snapshots.train",
                "must be >= 1")
        _expect(isinstance(eval_n, int) and eval_n >= 1, "snapshots.eval",
                "must be >= 1")

        algos = tuple(data.get("algorithms", ["kmb", "sctf"]))
        _expect(len(algos) >= 1, "algorithms", "need at least one algorithm")
        for a in algos:
            _expect(a in ALGORITHMS, "algorithms",
                    f"unknown algorithm {a!r} (choose from {ALGORITHMS})")

        ckpt = data.get("checkpoint")
        if ckpt is not None:
            ckpt = os.path.join(base_dir, ckpt)
        return cls(
            topology_file=(os.path.join(base_dir, topo_file)
                           if topo_file else None),
            gen_params=gen_params,
            group_src=group["src"],
            group_dests=tuple(dests),
            weights=weights,
            hp=hp,
            snapshots_train=train_n,
            snapshots_eval=eval_n,
            snapshot_seed=snaps.get("seed", gen_params.seed),
            algorithms=algos,
            out_dir=os.path.join(base_dir, data.get("out_dir", "out")),
            checkpoint=ckpt,
            hybrid=bool(data.get("hybrid", True)),
        )

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=os.path.dirname(path) or ".")

    def load_instance(self):
        """(net, part, group): from file when given, else generated."""
        if self.topology_file:
            net, part = load_topology(self.topology_file)
        else:
            net, part, _ = generate_random(self.gen_params)
        group = MulticastGroup(self.group_src, self.group_dests)
        for v in (self.group_src, *self.group_dests):
            if v not in net.adj:
                raise ConfigError(f"config field 'group': node {v} not in topology")
        return net, part, group


def snapshot_rng(base_seed, kind, index):
    """Deterministic per-snapshot RNG; kind 0 = train, 1 = eval, 2 = base."""
    return np.random.default_rng(np.random.SeedSequence((base_seed, kind, index)))


def make_snapshots(net, part, cfg, kind, count):
    """Snapshot schedule: one base state plus per-instant traffic noise.

    The base snapshot fixes link capacities; each scheduled snapshot
    perturbs residual bandwidth, delay and loss/err around it, modeling
    the same network observed at different intervals.
    """
    kind_id = {"train": 0, "eval": 1}[kind]
    base = draw_metrics(net, part, cfg.gen_params,
                        snapshot_rng(cfg.snapshot_seed, 2, 0),
                        h2_weights=cfg.weights)
    out = []
    for i in range(count):
        rng = snapshot_rng(cfg.snapshot_seed, kind_id, i)
        out.append(perturb_metrics(net, part, cfg.gen_params, base, rng,
                                   h2_weights=cfg.weights))
    return out


def evaluate_tree(tree, group, raw_snap, weights):
    """Raw-unit metric row for one tree: per-path averages plus size.

    Bottleneck bandwidth, summed delay, compounded loss/err and mean AP
    distance average over the source→destination paths; `cost` is the
    tree's total composite edge weight on the normalized snapshot.
    """
    row = {c: "" for c in ("bw_mbps", "delay_ms", "loss", "err", "len",
                           "dist_m", "cost")}
    row["valid"] = 0
    try:
        paths = extract_paths(tree, group)
    except Exception:
        return row
    pms = [path_metrics(p, raw_snap) for p in paths.values()]
    if pms:
        row["bw_mbps"] = float(np.mean([m.bw for m in pms]))
        row["delay_ms"] = float(np.mean([m.delay for m in pms]))
        row["loss"] = float(np.mean([m.loss for m in pms]))
        row["err"] = float(np.mean([m.err for m in pms]))
        row["dist_m"] = float(np.mean([m.dist for m in pms]))
    row["len"] = len(tree.flat_edges)
    sym = baselines.symmetrize(baselines.edge_weights(normalize(raw_snap),
                                                      weights))
    row["cost"] = float(sum(sym[e] for e in tree.flat_edges))
    return row


def _run_algorithm(name, ctx, raw_snap, agents):
    """Tree for one algorithm on one snapshot (None on failure)."""
    net, part, group = ctx.net, ctx.part, ctx.group
    terminals = sorted({group.src, *group.online_dests()})
    if name == "macdmr":
        if agents is None:
            raise ConfigError("macdmr requested but no checkpoint/agents given")
        return greedy_rollout(ctx, agents)
    weights = baselines.edge_weights(ctx.snap, ctx.weights)
    if name == "kmb":
        edges = baselines.kmb(weights, terminals)
    elif name == "sctf":
        edges = baselines.sctf(weights, terminals, src=group.src)
    elif name == "exact":
        edges = baselines.exact_steiner(weights, terminals)
    else:
        raise ConfigError(f"unknown algorithm {name!r}")
    return tree_from_edges(group.src, edges, part)


def compare(cfg, agents=None, log=print):
    """Run every configured algorithm over the eval snapshots.

    Writes report.csv and summary.json under cfg.out_dir and returns the
    row list. Per-row failures are recorded and the run continues.
    """
    net, part, group = cfg.load_instance()
    if "macdmr" in cfg.algorithms and agents is None:
        if not cfg.checkpoint:
            raise ConfigError(
                "config field 'checkpoint': required when comparing macdmr")
        with open(cfg.checkpoint) as fh:
            agents = agents_from_checkpoint(json.load(fh), cfg.hp)
    raw_snaps = make_snapshots(net, part, cfg, "eval", cfg.snapshots_eval)
    rows = []
    for sid, raw in enumerate(raw_snaps):
        snap = normalize(raw)
        ctx = EpisodeContext(net, part, group, cfg.weights, snap)
        for name in cfg.algorithms:
            row = {"snapshot_id": sid, "algorithm": name}
            try:
                tree = _run_algorithm(name, ctx, raw, agents)
            except baselines.BaselineError as exc:
                log(f"snapshot {sid}: {name} failed: {exc}")
                tree = None
            if tree is None:
                row.update({c: "" for c in REPORT_COLUMNS[2:-1]})
                row["valid"] = 0
            else:
                row.update(evaluate_tree(tree, group, raw, cfg.weights))
                row["valid"] = int(validate(tree, group, part) == [])
            rows.append(row)
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_report_csv(rows, os.path.join(cfg.out_dir, "report.csv"))
    summary = summarize(rows)
    with open(os.path.join(cfg.out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return rows


def write_report_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def read_report_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = dict(rec)
            for c in ("bw_mbps", "delay_ms", "loss", "err", "dist_m", "cost"):
                row[c] = float(row[c]) if row[c] else None
            row["snapshot_id"] = int(row["snapshot_id"])
            row["len"] = int(row["len"]) if row["len"] else None
            row["valid"] = int(row["valid"])
            rows.append(row)
    return rows


def summarize(rows):
    """Per-algorithm means over rows that produced a tree."""
    by_algo = {}
    for row in rows:
        by_algo.setdefault(row["algorithm"], []).append(row)
    out = {"algorithms": {}, "rows": len(rows)}
    for name, rs in sorted(by_algo.items()):
        ok = [r for r in rs if r["valid"] and r["bw_mbps"] != ""]
        agg = {"rows": len(rs), "valid": len(ok)}
        if ok:
            for c in ("bw_mbps", "delay_ms", "loss", "err", "len", "dist_m",
                      "cost"):
                agg[c] = float(np.mean([float(r[c]) for r in ok]))
        out["algorithms"][name] = agg
    # internal consistency: averages must recompute exactly from rows
    return out


def train_experiment(cfg, log=print):
    """Train agents per config; writes checkpoint + learning curve."""
    net, part, group = cfg.load_instance()
    snaps = [normalize(s) for s in
             make_snapshots(net, part, cfg, "train", cfg.snapshots_train)]
    result = train(net, part, group, cfg.weights, cfg.hp, snaps,
                   hybrid=cfg.hybrid, log_every=max(1, cfg.hp.episodes // 10),
                   log=log)
    os.makedirs(cfg.out_dir, exist_ok=True)
    ckpt_path = os.path.join(cfg.out_dir, "checkpoint.json")
    with open(ckpt_path, "w") as fh:
        json.dump(agents_to_checkpoint(result.agents), fh, sort_keys=True)
        fh.write("\n")
    curve_path = os.path.join(cfg.out_dir, "learning_curve.csv")
    with open(curve_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "agent_id", "total_reward", "steps",
                    "valid_tree", "tree_cost"])
        for row in result.curves:
            w.writerow([row["episode"], row["agent_id"],
                        _fmt(row["total_reward"]), row["steps"],
                        row["valid_tree"],
                        "" if math.isnan(row["tree_cost"])
                        else _fmt(row["tree_cost"])])
    return result, ckpt_path


def eval_experiment(cfg, log=print):
    """Greedy-rollout evaluation of a trained checkpoint."""
    if not cfg.checkpoint:
        raise ConfigError("config field 'checkpoint': required for eval")
    sub = ExperimentConfig(**{**cfg.__dict__, "algorithms": ("macdmr",)})
    return compare(sub, log=log)

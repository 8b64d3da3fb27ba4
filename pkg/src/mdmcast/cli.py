"""Command-line entry point.

Subcommands: gen-topo, train, eval, compare, group, replay. Exit codes:
0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import control_plane as cp
from . import harness
from .harness import ConfigError, ExperimentConfig
from .link_metrics import normalize
from .multicast import tree_from_edges, validate
from .topology import TopologyError, generate_random, save_topology


def build_parser():
    p = argparse.ArgumentParser(
        prog="mdmcast",
        description="Multi-domain multicast routing lab")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", required=True, help="experiment JSON file")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
        sp.add_argument("--out", default=None, help="override the output dir")

    sp = sub.add_parser("gen-topo", help="generate and save a topology")
    add_common(sp)

    sp = sub.add_parser("train", help="train the two-tier agents")
    add_common(sp)

    sp = sub.add_parser("eval", help="greedy-rollout evaluation of a checkpoint")
    add_common(sp)

    sp = sub.add_parser("compare", help="run configured algorithms and report")
    add_common(sp)

    sp = sub.add_parser("group", help="simulate member join/leave events")
    add_common(sp)
    sp.add_argument("--events", required=True,
                    help="JSON list of {node, event} records")

    sp = sub.add_parser("replay", help="replay a CCM message trace")
    add_common(sp)
    sp.add_argument("--trace", required=True, help="JSONL message trace")
    return p


def _load_config(args):
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg.hp = harness.Hyperparams(**{**cfg.hp.__dict__, "seed": args.seed})
        cfg.gen_params = harness.TopoGenParams(
            **{**cfg.gen_params.__dict__, "seed": args.seed})
        cfg.snapshot_seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def cmd_gen_topo(cfg, args):
    net, part, snap = generate_random(cfg.gen_params)
    os.makedirs(cfg.out_dir, exist_ok=True)
    topo_path = os.path.join(cfg.out_dir, "topology.json")
    save_topology(net, part, topo_path)
    snap.to_csv(os.path.join(cfg.out_dir, "base_snapshot.csv"))
    print(f"wrote {topo_path} ({net.n} nodes, {len(net.edges)} edges, "
          f"{part.m} domains)")
    return 0


def cmd_train(cfg, args):
    result, ckpt = harness.train_experiment(cfg)
    print(f"trained {len(result.agents)} agents over {cfg.hp.episodes} "
          f"episodes; checkpoint at {ckpt}")
    return 0


def cmd_eval(cfg, args):
    rows = harness.eval_experiment(cfg)
    ok = sum(r["valid"] for r in rows)
    print(f"evaluated {len(rows)} snapshots: {ok} valid trees; "
          f"report in {cfg.out_dir}")
    return 0


def cmd_compare(cfg, args):
    rows = harness.compare(cfg)
    print(f"compared {sorted(set(r['algorithm'] for r in rows))} over "
          f"{cfg.snapshots_eval} snapshots; report in {cfg.out_dir}")
    return 0


def cmd_group(cfg, args):
    with open(args.events) as fh:
        events = json.load(fh)
    if not isinstance(events, list):
        raise ConfigError("events file must hold a JSON list")
    net, part, group = cfg.load_instance()
    raw = harness.make_snapshots(net, part, cfg, "eval", 1)[0]
    snap = normalize(raw)
    weights = cfg.weights
    terminals = sorted({group.src, *group.dests})
    from .baselines import edge_weights, kmb
    tree = tree_from_edges(group.src, kmb(edge_weights(snap, weights),
                                          terminals), part)
    os.makedirs(cfg.out_dir, exist_ok=True)
    log_rows = []
    for i, ev in enumerate(events):
        node, kind = ev.get("node"), ev.get("event")
        if kind == "add":
            tree, group, delta = cp.mgm_join(net, part, tree, group, node,
                                             snap, weights)
        elif kind == "leave":
            tree, group, delta = cp.mgm_leave(net, part, tree, group, node)
        else:
            raise ConfigError(f"events[{i}].event must be add|leave")
        log_rows.append({
            "event": kind, "node": node,
            "valid": validate(tree, group, part) == [],
            "online": sorted(group.online),
            "edges": len(tree.flat_edges),
            "changed": sorted(delta["install"]),
            "removed": delta["remove"],
        })
    with open(os.path.join(cfg.out_dir, "group_events.json"), "w") as fh:
        json.dump(log_rows, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(cfg.out_dir, "final_tree.json"), "w") as fh:
        json.dump(tree.to_json_dict(group), fh, indent=1, sort_keys=True)
        fh.write("\n")
    tables = cp.install_tree(tree, group, part, group_id=0)
    with open(os.path.join(cfg.out_dir, "flow_tables.json"), "w") as fh:
        json.dump({str(k): v for k, v in sorted(tables.items())}, fh,
                  indent=1, sort_keys=True)
        fh.write("\n")
    print(f"applied {len(events)} events; outputs in {cfg.out_dir}")
    return 0


def cmd_replay(cfg, args):
    net, part, _ = cfg.load_instance()
    msgs = [cp.CcmMessage.from_json_dict(rec)
            for rec in cp.read_trace(args.trace)]
    store, snap = cp.sync_to_root(msgs, net)
    os.makedirs(cfg.out_dir, exist_ok=True)
    out = os.path.join(cfg.out_dir, "replayed_snapshot.csv")
    snap.to_csv(out)
    print(f"replayed {len(msgs)} messages into {out}")
    return 0


COMMANDS = {
    "gen-topo": cmd_gen_topo,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "group": cmd_group,
    "replay": cmd_replay,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, TopologyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

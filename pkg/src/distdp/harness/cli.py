"""Command line entry point: ``run``, ``analyze``, ``verify`` and ``gen``.

Exit codes: 0 success, 1 verification failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from ..depgraph import DisconnectedGraph, shard_mdp
from ..instances import TopologySpec, gen_fed_tree, gen_thm1_pair, gen_thm2_family, gen_topology_mdp
from ..mdp import ContractViolation
from .analyze import analyze, load_dataset, preset_dataset, render
from .config import ALGORITHMS, ExperimentConfig
from .runner import cmd_run
from .verify import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def preset_names() -> list[str]:
    root = resources.files("distdp.harness") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> ExperimentConfig:
    path = resources.files("distdp.harness") / "presets" / f"{name}.yaml"
    if not path.is_file():
        raise ContractViolation(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return ExperimentConfig.from_yaml(path.read_text())


def _csv(kind):
    return lambda text: [kind(x) for x in text.split(",") if x.strip()]


# config field -> (flag, type)
OVERRIDES = {
    "name": ("--name", str),
    "topologies": ("--topologies", _csv(str)),
    "M": ("--M", int),
    "algorithms": ("--algorithms", _csv(str)),
    "gamma": ("--gamma", float),
    "epsilon": ("--epsilon", float),
    "delta": ("--delta", float),
    "noise_mode": ("--noise-mode", str),
    "D": ("--D", int),
    "schedule": ("--schedule", str),
    "B": ("--B", int),
    "value_width": ("--value-width", int),
    "seeds": ("--seeds", _csv(int)),
    "budget": ("--budget", int),
    "workers": ("--workers", int),
    "output_dir": ("--output-dir", str),
    "states_per_machine": ("--states-per-machine", int),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="distdp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="execute an experiment sweep")
    src = run.add_mutually_exclusive_group()
    src.add_argument("--config", help="YAML experiment file")
    src.add_argument("--preset", help="bundled preset name")
    run.add_argument("--list-presets", action="store_true")
    run.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    run.add_argument("--quiet", action="store_true")
    for field_name, (flag, kind) in OVERRIDES.items():
        run.add_argument(flag, dest=f"o_{field_name}", type=kind, default=None,
                         help=f"override {field_name}" + (f" ({', '.join(ALGORITHMS)})"
                                                           if field_name == "algorithms" else ""))

    an = sub.add_parser("analyze", help="report graph quantities and predicted round budgets")
    an.add_argument("--mdp", help="MDP JSON file")
    an.add_argument("--partition", help="state-to-machine file, one 'state machine' pair per line")
    an.add_argument("--topology", choices=["ring", "grid", "star", "expander", "path", "tree"])
    an.add_argument("--M", type=int, default=64)
    an.add_argument("--seed", type=int, default=0)
    an.add_argument("--gamma", type=float, default=0.95)
    an.add_argument("--epsilon", type=float, default=0.01)
    an.add_argument("--D", type=int, default=1)
    an.add_argument("--json", action="store_true")

    ver = sub.add_parser("verify", help="run verifier suites at small scale")
    ver.add_argument("suite", choices=list(SUITES) + ["all"])

    gen = sub.add_parser("gen", help="write instance files (MDP JSON plus partition)")
    gen.add_argument("kind", choices=["topology", "chain_pair", "path_family", "fed_tree"])
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--topology", default="ring")
    gen.add_argument("--M", type=int, default=16)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--gamma", type=float, default=0.95)
    gen.add_argument("--L", type=int, default=4)
    gen.add_argument("--m", type=int, default=4)
    gen.add_argument("--bits", default=None, help="bit vector such as 1011 (default: all zeros)")
    gen.add_argument("--depth", type=int, default=2)
    gen.add_argument("--branching", type=int, default=2)
    return ap


def _resolve_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    elif args.preset:
        cfg = load_preset(args.preset)
    else:
        cfg = ExperimentConfig()
    doc = cfg.to_dict()
    for field_name in OVERRIDES:
        val = getattr(args, f"o_{field_name}")
        if val is None:
            continue
        if field_name == "states_per_machine":
            doc["instance"]["states_per_machine"] = val
        else:
            doc[field_name] = val
    return ExperimentConfig.from_dict(doc)


def _write_instance(out: Path, stem: str, mdp, ownership) -> None:
    (out / f"{stem}.mdp.json").write_text(mdp.to_json())
    (out / f"{stem}.partition").write_text(shard_mdp(mdp, ownership).partition_text())
    print(f"wrote {out / stem}.mdp.json and {out / stem}.partition")


def _gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "topology":
        spec = TopologySpec(args.topology, args.M, seed=args.seed)
        mdp, data = gen_topology_mdp(spec, gamma=args.gamma, seed=args.seed)
        _write_instance(out, f"{args.topology}_M{args.M}_seed{args.seed}", mdp, data.ownership)
        return EXIT_OK
    if args.kind == "chain_pair":
        inst = gen_thm1_pair(args.L, args.gamma)
        for label in inst.labels():
            _write_instance(out, f"chain_L{args.L}_member{label}", inst.members[label], inst.ownership)
        return EXIT_OK
    bits = None
    if args.bits is not None:
        bits = [int(c) for c in args.bits]
    if args.kind == "path_family":
        inst = gen_thm2_family(args.L, args.m, args.gamma, bits or [0] * args.m)
        stem = f"path_L{args.L}_m{args.m}"
    else:
        inst = gen_fed_tree(args.depth, args.branching, args.m, args.gamma, bits or [0] * args.m)
        stem = f"tree_d{args.depth}_b{args.branching}_m{args.m}"
    (label,) = inst.labels()
    _write_instance(out, f"{stem}_bits{''.join(map(str, label))}", inst.members[label], inst.ownership)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "run":
            if args.list_presets:
                print("\n".join(preset_names()))
                return EXIT_OK
            cfg = _resolve_config(args)
            if args.dump_config:
                print(cfg.to_yaml(), end="")
                return EXIT_OK
            cmd_run(cfg, quiet=args.quiet)
            return EXIT_OK
        if args.cmd == "analyze":
            if args.mdp or args.partition:
                if not (args.mdp and args.partition):
                    raise ContractViolation("--mdp and --partition must be given together")
                mdp, data = load_dataset(args.mdp, args.partition)
                gamma = mdp.gamma
            elif args.topology:
                data = preset_dataset(args.topology, args.M, args.gamma, args.seed)
                gamma = args.gamma
            else:
                raise ContractViolation("give --mdp/--partition or --topology")
            rep = analyze(data, gamma, args.epsilon, args.D)
            print(json.dumps(rep, indent=2) if args.json else render(rep), end="")
            return EXIT_OK
        if args.cmd == "verify":
            checks = run_suite(args.suite)
            for c in checks:
                print(c.line())
            failed = [c for c in checks if not c.passed]
            print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
            return EXIT_FAIL if failed else EXIT_OK
        return _gen(args)
    except DisconnectedGraph as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractViolation, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

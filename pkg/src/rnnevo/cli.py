"""Command-line entry point: evolve, transfer, inspect and synth-data."""

from __future__ import annotations

import argparse
import json
import math
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__, backend
from .data import (DataError, SynthSpec, default_split_sizes, load_dir, load_synth_spec,
                   normalize, read_manifest, split, synthesize, write_dir, write_manifest)
from .evolution import EvolveConfig, run, run_from_scratch, write_convergence_csv
from .genome import (EmptyNetworkError, GenomeError, count_vestigial, load, network_stats, save,
                     validate)
from .trainer import TrainConfig
from .transfer import STRATEGIES, WEIGHT_INITS, TransferSpec, adapt


class CliError(Exception):
    pass


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="directory of per-series CSV files")
    p.add_argument("--input-params", help="input manifest (default: DATA/inputs.txt)")
    p.add_argument("--output-params", help="output manifest (default: DATA/outputs.txt)")
    p.add_argument("--out", required=True, help="run directory to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--n-train", type=int, help="leading series used for training")
    p.add_argument("--n-valid", type=int, help="trailing series used for validation")
    p.add_argument("--backend", choices=("cython", "python"), help="kernel override")

    e = p.add_argument_group("evolution")
    e.add_argument("--max-genomes", type=int, default=4000)
    e.add_argument("--islands", type=int, default=4)
    e.add_argument("--capacity", type=int, default=10)
    e.add_argument("--mutation-rate", type=float, default=0.70)
    e.add_argument("--intra-rate", type=float, default=0.20)
    e.add_argument("--inter-rate", type=float, default=0.10)
    e.add_argument("--min-skip", type=int, default=1)
    e.add_argument("--max-skip", type=int, default=10)

    t = p.add_argument_group("training")
    t.add_argument("--epochs", type=int, default=4)
    t.add_argument("--lr", type=float, default=0.001)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--clip", type=float, default=1.0)
    t.add_argument("--boost", type=float, default=0.05)
    t.add_argument("--update", choices=("sequence", "batch"), default="sequence")
    t.add_argument("--offset", type=int, default=1, help="prediction horizon in steps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rnnevo", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="evolve RNNs from minimal seed genomes")
    _add_run_args(p)

    p = sub.add_parser("transfer", help="adapt a trained genome to new data and evolve from it")
    _add_run_args(p)
    p.add_argument("--seed-genome", required=True)
    p.add_argument("--strategy", nargs="+", default=["nastl"],
                   help=f"one or more of {', '.join(STRATEGIES)}, or 'all'")
    p.add_argument("--weight-init", nargs="+", default=["epigenetic"],
                   help=f"one or more of {', '.join(WEIGHT_INITS)}, or 'all'")

    p = sub.add_parser("inspect", help="summarize a genome file")
    p.add_argument("genome")
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("synth-data", help="write a synthetic multi-series task")
    p.add_argument("--out", required=True)
    p.add_argument("--spec", help="JSON task spec; other generator flags are ignored")
    p.add_argument("--channels", help="comma-separated channel names")
    p.add_argument("--inputs", help="comma-separated inputs for inputs.txt (default: all)")
    p.add_argument("--outputs", help="comma-separated outputs for outputs.txt")
    p.add_argument("--n-series", type=int, default=12)
    p.add_argument("--length", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--physics-seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--coupling", type=float, default=0.4)
    return parser


# -- helpers ----------------------------------------------------------------

def _csv_list(s: str | None) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()] if s else []


def _expand(values: list[str], allowed: tuple[str, ...], flag: str) -> list[str]:
    if values == ["all"]:
        return list(allowed)
    bad = [v for v in values if v not in allowed]
    if bad:
        raise CliError(f"{flag}: unknown value(s) {bad}; choose from {', '.join(allowed)} or all")
    return list(dict.fromkeys(values))


def _configs(args) -> tuple[EvolveConfig, TrainConfig]:
    try:
        evo = EvolveConfig(n_islands=args.islands, island_capacity=args.capacity,
                           mutation_rate=args.mutation_rate,
                           intra_island_crossover_rate=args.intra_rate,
                           inter_island_crossover_rate=args.inter_rate,
                           max_genomes=args.max_genomes, min_time_skip=args.min_skip,
                           max_time_skip=args.max_skip, seed=args.seed)
        train = TrainConfig(epochs=args.epochs, learning_rate=args.lr, momentum=args.momentum,
                            clip_threshold=args.clip, boost_threshold=args.boost,
                            update=args.update, target_offset=args.offset, backend=args.backend)
    except ValueError as exc:
        raise CliError(f"invalid configuration: {exc}") from None
    if args.workers < 1:
        raise CliError("--workers must be >= 1")
    return evo, train


def _load_task(args):
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        raise CliError(f"data directory not found: {data_dir}")
    in_path = Path(args.input_params) if args.input_params else data_dir / "inputs.txt"
    out_path = Path(args.output_params) if args.output_params else data_dir / "outputs.txt"
    for path in (in_path, out_path):
        if not path.is_file():
            raise CliError(f"parameter manifest not found: {path}")
    inputs, outputs = read_manifest(in_path), read_manifest(out_path)
    if not inputs or not outputs:
        raise CliError("input and output manifests must each name at least one parameter")
    channels = list(dict.fromkeys(inputs + outputs))
    ts = load_dir(data_dir, channels)
    if args.n_train is None and args.n_valid is None:
        n_train, n_valid = default_split_sizes(len(ts))
    else:
        n_valid = args.n_valid if args.n_valid is not None else len(ts) - args.n_train
        n_train = args.n_train if args.n_train is not None else len(ts) - n_valid
    train, valid = split(ts, n_train, n_valid)
    train, valid, bounds = normalize(train, valid)
    return inputs, outputs, train, valid, {
        "data": str(data_dir), "input_params": inputs, "output_params": outputs,
        "n_train": n_train, "n_valid": n_valid, "train_series": train.names,
        "valid_series": valid.names, "bounds": bounds,
    }


def _write_config(out: Path, command: str, args, evo: EvolveConfig, train: TrainConfig,
                  task: dict, extra: dict | None = None) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "backend": backend.get_backend(train.backend).NAME,
        "seed": args.seed,
        "workers": args.workers,
        "evolution": vars(evo) | {"mutation_ops": dict(evo.mutation_ops)},
        "training": vars(train),
        "task": task,
    }
    if extra:
        doc.update(extra)
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")


def _finish(out: Path, result) -> None:
    write_convergence_csv(result.log, out / "convergence.csv")
    if result.best is not None:
        save(result.best, out / "best_genome.json")


# -- commands ---------------------------------------------------------------

def cmd_evolve(args) -> int:
    evo, train_cfg = _configs(args)
    inputs, outputs, train, valid, task = _load_task(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(out, "evolve", args, evo, train_cfg, task)
    result = run_from_scratch(evo, train, valid, inputs, outputs, train_cfg, workers=args.workers)
    _finish(out, result)
    print(f"{out}: {len(result.log)} genomes, best validation MSE "
          f"{result.best.fitness if result.best else math.inf:.6g}")
    return 0


def _load_genome(path: Path):
    if not path.is_file():
        raise CliError(f"genome file not found: {path}")
    try:
        return validate(load(path))
    except GenomeError as exc:
        raise CliError(f"{path}: {exc}") from None


def cmd_transfer(args) -> int:
    evo, train_cfg = _configs(args)
    strategies = _expand(args.strategy, STRATEGIES, "--strategy")
    inits = _expand(args.weight_init, WEIGHT_INITS, "--weight-init")
    seed_path = Path(args.seed_genome)
    source = _load_genome(seed_path)
    inputs, outputs, train, valid, task = _load_task(args)
    out = Path(args.out)
    arms = [(s, w) for s in strategies for w in inits]
    for strategy, weight_init in arms:
        run_dir = out if len(arms) == 1 else out / f"{strategy}_{weight_init}"
        run_dir.mkdir(parents=True, exist_ok=True)
        spec = TransferSpec(inputs, outputs, strategy, weight_init, args.seed)
        adapted, report = adapt(source, spec, np.random.default_rng([args.seed, 2]))
        validate(adapted)
        save(adapted, run_dir / "adapted_genome.json")
        (run_dir / "surgery_report.txt").write_text(report.to_text(), encoding="utf-8")
        _write_config(run_dir, "transfer", args, evo, train_cfg, task, {
            "transfer": {"seed_genome": str(seed_path), "strategy": strategy,
                         "weight_init": weight_init}})
        result = run(evo, train, valid, train_cfg, seeds=[adapted], workers=args.workers)
        _finish(run_dir, result)
        print(f"{run_dir}: {spec.label}, {len(result.log)} genomes, best validation MSE "
              f"{result.best.fitness if result.best else math.inf:.6g}")
    return 0


def inspect_summary(genome) -> dict:
    kinds = Counter(n.kind for n in genome.nodes.values())
    enabled_nodes = Counter(n.kind for n in genome.nodes.values() if n.enabled)
    cells = Counter(n.cell_type for n in genome.hidden_nodes())
    edges = list(genome.edges.values())
    v_nodes, v_edges = count_vestigial(genome)
    try:
        stats = vars(network_stats(genome))
    except EmptyNetworkError:
        stats = None
    return {
        "nodes": len(genome.nodes),
        "nodes_by_kind": dict(sorted(kinds.items())),
        "enabled_nodes_by_kind": dict(sorted(enabled_nodes.items())),
        "hidden_cell_types": dict(sorted(cells.items())),
        "edges": len(edges),
        "edges_enabled": sum(e.enabled for e in edges),
        "edges_disabled": sum(not e.enabled for e in edges),
        "edges_recurrent": sum(e.recurrent for e in edges),
        "vestigial_nodes": v_nodes,
        "vestigial_edges": v_edges,
        "stats": stats,
        "fitness": genome.fitness,
        "inputs": list(genome.input_params),
        "outputs": list(genome.output_params),
    }


def cmd_inspect(args) -> int:
    s = inspect_summary(_load_genome(Path(args.genome)))
    if args.json:
        print(json.dumps(s, indent=2, default=str))
        return 0
    print(f"nodes: {s['nodes']} " + " ".join(f"{k}={v}" for k, v in s["nodes_by_kind"].items()))
    print("enabled nodes: " + " ".join(f"{k}={v}" for k, v in s["enabled_nodes_by_kind"].items()))
    if s["hidden_cell_types"]:
        print("hidden cells: " + " ".join(f"{k}={v}" for k, v in s["hidden_cell_types"].items()))
    print(f"edges: {s['edges']} enabled={s['edges_enabled']} disabled={s['edges_disabled']} "
          f"recurrent={s['edges_recurrent']}")
    print(f"vestigial: nodes={s['vestigial_nodes']} edges={s['vestigial_edges']}")
    if s["stats"]:
        print(" ".join(f"{k}={v:.6g}" for k, v in s["stats"].items()))
    print(f"fitness: {s['fitness']}")
    return 0


def cmd_synth(args) -> int:
    if args.spec:
        try:
            spec = load_synth_spec(args.spec)
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise CliError(f"cannot read synthetic spec {args.spec}: {exc}") from None
    else:
        channels = _csv_list(args.channels)
        if not channels:
            raise CliError("give --channels or --spec")
        spec = SynthSpec(channels, n_series=args.n_series, length=args.length, seed=args.seed,
                         physics_seed=args.physics_seed, noise=args.noise, coupling=args.coupling)
    if spec.n_series < 1 or spec.length < 2:
        raise CliError("need at least one series of length >= 2")
    inputs = _csv_list(args.inputs) or list(spec.channels)
    outputs = _csv_list(args.outputs)
    unknown = [c for c in inputs + outputs if c not in spec.channels]
    if unknown:
        raise CliError(f"manifest names {unknown} are not generated channels")
    ts = synthesize(spec)
    out = Path(args.out)
    write_dir(ts, out)
    write_manifest(out / "inputs.txt", inputs)
    if outputs:
        write_manifest(out / "outputs.txt", outputs)
    (out / "synth_spec.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n",
                                         encoding="utf-8")
    print(f"{out}: {len(ts)} series x {spec.length} steps, {len(spec.channels)} channels")
    return 0


COMMANDS = {"evolve": cmd_evolve, "transfer": cmd_transfer, "inspect": cmd_inspect,
            "synth-data": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (CliError, DataError, GenomeError, KeyError, ValueError, OSError) as exc:
        print(f"rnnevo {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Adapt a trained seed genome to a target task with different inputs and outputs.

The seed's statistics are captured first, unused inputs/outputs are removed
and any structure left without an input-to-output path is disabled (kept for
later re-enabling). Nodes for the target's new parameters are then added and
wired in one of three ways:

* ``astl``: each new input feeds every output, each new output reads every input.
* ``nastl``: each new input feeds ``max(1, N(mu_o, sigma_o))`` randomly chosen
  enabled hidden or output nodes; each new output reads ``max(1, N(mu_i, sigma_i))``
  randomly chosen enabled hidden or input nodes.
* ``astl_plus_nastl``: the union of both patterns.

New weights are either U(-0.5, 0.5) or drawn from N(mu_w, sigma_w) of the seed
("epigenetic").
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .genome import (INPUT, OUTPUT, Genome, GenomeError, IdCounter, NetworkStats,
                     Node, count_vestigial, mark_reachability, network_stats)

STRATEGIES = ("astl", "nastl", "astl_plus_nastl")
WEIGHT_INITS = ("uniform", "epigenetic")


class AdaptationError(GenomeError):
    """The seed genome cannot be adapted as requested."""


@dataclass
class TransferSpec:
    target_input_params: list[str]
    target_output_params: list[str]
    strategy: str = "nastl"
    weight_init: str = "epigenetic"
    seed: int = 0

    def __post_init__(self):
        if not self.target_input_params or not self.target_output_params:
            raise AdaptationError("target input and output lists must be non-empty")
        if self.strategy not in STRATEGIES:
            raise AdaptationError(f"unknown strategy {self.strategy!r}")
        if self.weight_init not in WEIGHT_INITS:
            raise AdaptationError(f"unknown weight init {self.weight_init!r}")

    @property
    def label(self) -> str:
        return self.strategy + ("+epi" if self.weight_init == "epigenetic" else "")


@dataclass
class SurgeryReport:
    strategy: str = ""
    weight_init: str = ""
    inputs_removed: list[str] = field(default_factory=list)
    outputs_removed: list[str] = field(default_factory=list)
    inputs_added: list[str] = field(default_factory=list)
    outputs_added: list[str] = field(default_factory=list)
    nodes_disabled: int = 0
    edges_disabled: int = 0
    edges_added: int = 0
    vestigial_nodes: int = 0
    vestigial_edges: int = 0
    # connection pattern size chosen per new node, by wiring rule
    astl_connections: dict[str, int] = field(default_factory=dict)
    nastl_input_connections: dict[str, int] = field(default_factory=dict)
    nastl_output_connections: dict[str, int] = field(default_factory=dict)
    stats: NetworkStats | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        s = self.stats
        lines = [
            f"strategy: {self.strategy}",
            f"weight_init: {self.weight_init}",
            f"inputs_added: {len(self.inputs_added)}",
            f"inputs_removed: {len(self.inputs_removed)}",
            f"outputs_added: {len(self.outputs_added)}",
            f"outputs_removed: {len(self.outputs_removed)}",
            f"hidden_nodes_disabled: {self.nodes_disabled}",
            f"edges_disabled: {self.edges_disabled}",
            f"edges_added: {self.edges_added}",
            f"vestigial_nodes: {self.vestigial_nodes}",
            f"vestigial_edges: {self.vestigial_edges}",
        ]
        if s is not None:
            lines += [f"mu_w: {s.mu_w!r}", f"sigma_w: {s.sigma_w!r}",
                      f"mu_o: {s.mu_o!r}", f"sigma_o: {s.sigma_o!r}",
                      f"mu_i: {s.mu_i!r}", f"sigma_i: {s.sigma_i!r}"]
        for title, names in (("added input", self.inputs_added),
                             ("removed input", self.inputs_removed),
                             ("added output", self.outputs_added),
                             ("removed output", self.outputs_removed)):
            lines += [f"{title}: {n}" for n in names]
        return "\n".join(lines) + "\n"


def sample_connection_count(mu: float, sigma: float, rng: np.random.Generator) -> int:
    """max(1, N(mu, sigma)) with the draw rounded half away from zero."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    x = float(rng.normal(mu, sigma)) if sigma > 0 else float(mu)
    k = int(math.copysign(math.floor(abs(x) + 0.5), x))
    return max(1, k)


def epigenetic_weight(stats: NetworkStats, rng: np.random.Generator) -> float:
    if stats.sigma_w == 0:
        return stats.mu_w
    return float(rng.normal(stats.mu_w, stats.sigma_w))


def _weight_sampler(spec: TransferSpec, stats: NetworkStats, rng) -> Callable[[], float]:
    if spec.weight_init == "epigenetic":
        return lambda: epigenetic_weight(stats, rng)
    return lambda: float(rng.uniform(-0.5, 0.5))


def remove_unused(genome: Genome, target_inputs: list[str], target_outputs: list[str],
                  report: SurgeryReport | None = None) -> Genome:
    """Delete inputs/outputs the target lacks, then disable vestigial hidden nodes and edges.

    Works in place and returns the genome. Hidden structure is only ever
    disabled, never deleted.
    """
    report = report if report is not None else SurgeryReport()
    keep_in, keep_out = set(target_inputs), set(target_outputs)
    for n in sorted(genome.nodes.values(), key=lambda n: n.id):
        if n.kind == INPUT and n.param_name not in keep_in:
            report.inputs_removed.append(n.param_name)
            genome.remove_node(n.id)
        elif n.kind == OUTPUT and n.param_name not in keep_out:
            report.outputs_removed.append(n.param_name)
            genome.remove_node(n.id)
    genome.input_params = [p for p in genome.input_params if p in keep_in]
    genome.output_params = [p for p in genome.output_params if p in keep_out]

    mark_reachability(genome)
    for n in genome.hidden_nodes():
        if n.enabled and not (n.forward_reachable and n.backward_reachable):
            n.enabled = False
            report.nodes_disabled += 1
    for e in sorted(genome.edges.values(), key=lambda e: e.id):
        if e.enabled and not (e.forward_reachable and e.backward_reachable):
            e.enabled = False
            report.edges_disabled += 1
    return genome


def add_new_io(genome: Genome, spec: TransferSpec, ids: IdCounter,
               bias: Callable[[], float]) -> tuple[list[Node], list[Node]]:
    """Create nodes for target parameters the genome lacks; returns (new inputs, new outputs)."""
    new_in, new_out = [], []
    have_in = {n.param_name for n in genome.nodes.values() if n.kind == INPUT}
    have_out = {n.param_name for n in genome.nodes.values() if n.kind == OUTPUT}
    for p in spec.target_input_params:
        if p not in have_in:
            new_in.append(genome.add_node(Node(ids.node(), INPUT, "simple", p, 0.0)))
    for p in spec.target_output_params:
        if p not in have_out:
            new_out.append(genome.add_node(Node(ids.node(), OUTPUT, "simple", p, 1.0,
                                                weights=[float(bias())])))
    genome.input_params = list(spec.target_input_params)
    genome.output_params = list(spec.target_output_params)
    return new_in, new_out


def _connect(genome: Genome, ids: IdCounter, source: Node, target: Node,
             weight: Callable[[], float], report: SurgeryReport, keys: set) -> None:
    # keys mirrors genome.enabled_keys(); duplicates are skipped, not re-weighted
    key = (source.id, target.id, False, 0)
    if key in keys:
        return
    genome.add_edge(ids.edge(), source.id, target.id, weight(), check_duplicate=False)
    keys.add(key)
    report.edges_added += 1


def astl_connect(genome: Genome, new_inputs: list[Node], new_outputs: list[Node],
                 ids: IdCounter, weight: Callable[[], float], report: SurgeryReport) -> Genome:
    outputs = genome.output_nodes()
    inputs = genome.input_nodes()
    keys = genome.enabled_keys()
    for i in new_inputs:
        for o in outputs:
            _connect(genome, ids, i, o, weight, report, keys)
        report.astl_connections[i.param_name] = len(outputs)
    for o in new_outputs:
        for i in inputs:
            _connect(genome, ids, i, o, weight, report, keys)
        report.astl_connections[o.param_name] = len(inputs)
    return genome


def _ids_for(genome: Genome, ids: IdCounter | None) -> IdCounter:
    return ids if ids is not None else IdCounter.after(genome)


def nastl_connect_inputs(genome: Genome, spec: TransferSpec, stats: NetworkStats,
                         rng: np.random.Generator, new_inputs: list[Node] | None = None,
                         ids: IdCounter | None = None,
                         report: SurgeryReport | None = None) -> Genome:
    """Wire each new input to a fan-out-sized random set of enabled hidden and output nodes.

    ``stats`` must describe the seed before any surgery. When ``new_inputs`` is
    None, nodes are created for target inputs the genome lacks.
    """
    ids = _ids_for(genome, ids)
    report = report if report is not None else SurgeryReport()
    weight = _weight_sampler(spec, stats, rng)
    if new_inputs is None:
        have = {n.param_name for n in genome.nodes.values() if n.kind == INPUT}
        new_inputs = [genome.add_node(Node(ids.node(), INPUT, "simple", p, 0.0))
                      for p in spec.target_input_params if p not in have]
        genome.input_params = list(spec.target_input_params)
    keys = genome.enabled_keys()
    # only edges are added below, so the candidate pool is fixed
    pool = [n for n in genome.hidden_nodes() if n.enabled] + genome.output_nodes()
    if new_inputs and not pool:
        raise AdaptationError("no enabled hidden or output nodes to connect a new input to")
    for i in new_inputs:
        k = min(sample_connection_count(stats.mu_o, stats.sigma_o, rng), len(pool))
        order = rng.permutation(len(pool))
        for j in order[:k]:
            _connect(genome, ids, i, pool[int(j)], weight, report, keys)
        report.nastl_input_connections[i.param_name] = k
    return genome


def nastl_connect_outputs(genome: Genome, spec: TransferSpec, stats: NetworkStats,
                          rng: np.random.Generator, new_outputs: list[Node] | None = None,
                          ids: IdCounter | None = None,
                          report: SurgeryReport | None = None) -> Genome:
    """Wire each new output from a fan-in-sized random set of enabled hidden and input nodes."""
    ids = _ids_for(genome, ids)
    report = report if report is not None else SurgeryReport()
    weight = _weight_sampler(spec, stats, rng)
    if new_outputs is None:
        have = {n.param_name for n in genome.nodes.values() if n.kind == OUTPUT}
        new_outputs = [genome.add_node(Node(ids.node(), OUTPUT, "simple", p, 1.0,
                                            weights=[weight()]))
                       for p in spec.target_output_params if p not in have]
        genome.output_params = list(spec.target_output_params)
    keys = genome.enabled_keys()
    pool = [n for n in genome.hidden_nodes() if n.enabled] + genome.input_nodes()
    if new_outputs and not pool:
        raise AdaptationError("no enabled hidden or input nodes to connect a new output from")
    for o in new_outputs:
        k = min(sample_connection_count(stats.mu_i, stats.sigma_i, rng), len(pool))
        order = rng.permutation(len(pool))
        for j in order[:k]:
            _connect(genome, ids, pool[int(j)], o, weight, report, keys)
        report.nastl_output_connections[o.param_name] = k
    return genome


def adapt(genome: Genome, spec: TransferSpec, rng: np.random.Generator | None = None,
          stats_recorder: Callable[[NetworkStats], None] | None = None) -> tuple[Genome, SurgeryReport]:
    """Adapt a copy of ``genome`` to ``spec``'s parameters; returns (genome, report)."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    g = genome.copy()
    stats = network_stats(g)
    if stats_recorder:
        stats_recorder(stats)
    report = SurgeryReport(spec.strategy, spec.weight_init, stats=stats)
    ids = IdCounter.after(g)
    weight = _weight_sampler(spec, stats, rng)

    remove_unused(g, spec.target_input_params, spec.target_output_params, report)
    new_in, new_out = add_new_io(g, spec, ids, weight)
    report.inputs_added = [n.param_name for n in new_in]
    report.outputs_added = [n.param_name for n in new_out]

    if spec.strategy in ("astl", "astl_plus_nastl"):
        astl_connect(g, new_in, new_out, ids, weight, report)
    if spec.strategy in ("nastl", "astl_plus_nastl"):
        nastl_connect_inputs(g, spec, stats, rng, new_in, ids, report)
        nastl_connect_outputs(g, spec, stats, rng, new_out, ids, report)

    report.vestigial_nodes, report.vestigial_edges = count_vestigial(g)
    g.fitness = None
    g.metadata = {"operator": "transfer", "parents": [genome.metadata.get("genome_id")],
                  "transfer": spec.label}
    return g, report


def astl_adapt(genome: Genome, spec: TransferSpec, rng: np.random.Generator) -> Genome:
    """Plain ASTL surgery regardless of ``spec.strategy``."""
    s = TransferSpec(spec.target_input_params, spec.target_output_params, "astl",
                     spec.weight_init, spec.seed)
    return adapt(genome, s, rng)[0]


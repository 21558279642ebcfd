"""Graph-encoded RNN genomes.

A genome is a set of typed nodes joined by weighted edges. Feedforward edges
always point from lower to higher depth, which keeps the feedforward subgraph
acyclic without any cycle search at mutation time. Recurrent edges may join any
pair of nodes and read their source from ``time_skip`` steps in the past.

Node and edge ids double as innovation numbers: two genomes that share an id
share the structural element, which is what crossover aligns on.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

FORMAT_VERSION = 1

INPUT, OUTPUT, HIDDEN = "input", "output", "hidden"
NODE_KINDS = (INPUT, OUTPUT, HIDDEN)

CELL_TYPES = ("simple", "delta_rnn", "gru", "lstm", "mgu", "ugrnn")

# Parameters held by the node itself (bias and internal cell weights).
# Input nodes pass their sensor value straight through and hold none.
CELL_PARAM_COUNT = {
    "simple": 1,
    "delta_rnn": 6,
    "gru": 9,
    "lstm": 12,
    "mgu": 6,
    "ugrnn": 6,
}

MAX_TIME_SKIP = 10


class GenomeError(ValueError):
    """Raised for structurally invalid genomes or bad construction arguments."""


class GenomeParseError(GenomeError):
    """Raised when a serialized genome cannot be decoded."""


class EmptyNetworkError(GenomeError):
    """Raised when statistics are requested from a genome with no enabled weights."""


@dataclass
class Node:
    id: int
    kind: str
    cell_type: str = "simple"
    param_name: str | None = None
    depth: float = 0.5
    enabled: bool = True
    weights: list[float] = field(default_factory=list)
    forward_reachable: bool = False
    backward_reachable: bool = False

    def copy(self) -> Node:
        return Node(self.id, self.kind, self.cell_type, self.param_name, self.depth,
                    self.enabled, list(self.weights), self.forward_reachable,
                    self.backward_reachable)


@dataclass
class Edge:
    id: int
    source: int
    target: int
    weight: float
    recurrent: bool = False
    time_skip: int = 0
    enabled: bool = True
    forward_reachable: bool = False
    backward_reachable: bool = False

    @property
    def key(self) -> tuple[int, int, bool, int]:
        return (self.source, self.target, self.recurrent, self.time_skip)

    def copy(self) -> Edge:
        return Edge(self.id, self.source, self.target, self.weight, self.recurrent,
                    self.time_skip, self.enabled, self.forward_reachable,
                    self.backward_reachable)


@dataclass
class NetworkStats:
    mu_w: float
    sigma_w: float
    mu_o: float
    sigma_o: float
    mu_i: float
    sigma_i: float


class IdCounter:
    """Hands out node and edge ids that are unique across a whole run."""

    def __init__(self, next_node: int = 0, next_edge: int = 0):
        self._node = next_node
        self._edge = next_edge

    @classmethod
    def after(cls, *genomes: Genome) -> IdCounter:
        n = max((g.max_node_id() for g in genomes), default=-1)
        e = max((g.max_edge_id() for g in genomes), default=-1)
        return cls(n + 1, e + 1)

    def node(self) -> int:
        self._node += 1
        return self._node - 1

    def edge(self) -> int:
        self._edge += 1
        return self._edge - 1

    def reserve(self, genome: Genome) -> None:
        self._node = max(self._node, genome.max_node_id() + 1)
        self._edge = max(self._edge, genome.max_edge_id() + 1)


@dataclass
class Genome:
    nodes: dict[int, Node]
    edges: dict[int, Edge]
    input_params: list[str]
    output_params: list[str]
    fitness: float | None = None
    metadata: dict = field(default_factory=dict)

    def copy(self) -> Genome:
        return Genome(
            {k: n.copy() for k, n in self.nodes.items()},
            {k: e.copy() for k, e in self.edges.items()},
            list(self.input_params),
            list(self.output_params),
            self.fitness,
            json.loads(json.dumps(self.metadata)),
        )

    # -- lookups -----------------------------------------------------------
    def input_nodes(self) -> list[Node]:
        by_param = {n.param_name: n for n in self.nodes.values() if n.kind == INPUT}
        return [by_param[p] for p in self.input_params if p in by_param]

    def output_nodes(self) -> list[Node]:
        by_param = {n.param_name: n for n in self.nodes.values() if n.kind == OUTPUT}
        return [by_param[p] for p in self.output_params if p in by_param]

    def hidden_nodes(self) -> list[Node]:
        return sorted((n for n in self.nodes.values() if n.kind == HIDDEN), key=lambda n: n.id)

    def input_for(self, param: str) -> Node | None:
        for n in self.nodes.values():
            if n.kind == INPUT and n.param_name == param:
                return n
        return None

    def output_for(self, param: str) -> Node | None:
        for n in self.nodes.values():
            if n.kind == OUTPUT and n.param_name == param:
                return n
        return None

    def max_node_id(self) -> int:
        return max(self.nodes, default=-1)

    def max_edge_id(self) -> int:
        return max(self.edges, default=-1)

    def is_active(self, e: Edge) -> bool:
        """An edge takes part in evaluation only if it and both endpoints are enabled."""
        return (e.enabled and self.nodes[e.source].enabled
                and self.nodes[e.target].enabled)

    def enabled_keys(self) -> set[tuple[int, int, bool, int]]:
        return {e.key for e in self.edges.values() if e.enabled}

    def has_enabled_edge(self, source: int, target: int, recurrent: bool = False,
                         time_skip: int = 0) -> bool:
        key = (source, target, recurrent, time_skip)
        return any(e.key == key and e.enabled for e in self.edges.values())

    # -- construction ------------------------------------------------------
    def add_node(self, node: Node) -> Node:
        if node.id in self.nodes:
            raise GenomeError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node
        return node

    def add_edge(self, edge_id: int, source: int, target: int, weight: float,
                 recurrent: bool = False, time_skip: int = 0,
                 check_duplicate: bool = True) -> Edge | None:
        """Add an edge unless an enabled edge with the same key already exists.

        Returns the new edge, or None when it would be a duplicate. Callers that
        track enabled keys themselves may pass ``check_duplicate=False``.
        """
        if not recurrent:
            time_skip = 0
            if self.nodes[source].depth >= self.nodes[target].depth:
                raise GenomeError(f"feedforward edge {source}->{target} violates depth order")
        elif not 1 <= time_skip <= MAX_TIME_SKIP:
            raise GenomeError(f"time_skip {time_skip} outside [1, {MAX_TIME_SKIP}]")
        if self.nodes[target].kind == INPUT:
            raise GenomeError("input nodes take no incoming edges")
        if check_duplicate and self.has_enabled_edge(source, target, recurrent, time_skip):
            return None
        if edge_id in self.edges:
            raise GenomeError(f"duplicate edge id {edge_id}")
        e = Edge(edge_id, source, target, float(weight), recurrent, time_skip)
        self.edges[edge_id] = e
        return e

    def remove_node(self, node_id: int) -> None:
        """Delete a node together with every edge touching it."""
        del self.nodes[node_id]
        for eid in [eid for eid, e in self.edges.items()
                    if e.source == node_id or e.target == node_id]:
            del self.edges[eid]


def build_minimal_genome(input_params: list[str], output_params: list[str],
                         rng: np.random.Generator) -> Genome:
    """Inputs wired straight to outputs, no hidden nodes, U(-0.5, 0.5) weights."""
    if not input_params or not output_params:
        raise GenomeError("input and output parameter lists must be non-empty")
    if len(set(input_params)) != len(input_params) or len(set(output_params)) != len(output_params):
        raise GenomeError("parameter names must be unique")
    g = Genome({}, {}, list(input_params), list(output_params))
    nid = 0
    for p in input_params:
        g.add_node(Node(nid, INPUT, "simple", p, 0.0))
        nid += 1
    for p in output_params:
        g.add_node(Node(nid, OUTPUT, "simple", p, 1.0,
                        weights=[float(rng.uniform(-0.5, 0.5))]))
        nid += 1
    eid = 0
    for i in g.input_nodes():
        for o in g.output_nodes():
            g.add_edge(eid, i.id, o.id, float(rng.uniform(-0.5, 0.5)))
            eid += 1
    return g


# -- reachability ----------------------------------------------------------

def _active_adjacency(genome: Genome):
    fwd: dict[int, list[Edge]] = {nid: [] for nid in genome.nodes}
    bwd: dict[int, list[Edge]] = {nid: [] for nid in genome.nodes}
    for e in genome.edges.values():
        if genome.is_active(e):
            fwd[e.source].append(e)
            bwd[e.target].append(e)
    return fwd, bwd


def mark_reachability(genome: Genome) -> Genome:
    """Set forward/backward reachability flags on every node and edge.

    Recurrent edges count as ordinary arcs. Disabled elements are never flagged.
    """
    fwd, bwd = _active_adjacency(genome)
    for n in genome.nodes.values():
        n.forward_reachable = n.backward_reachable = False
    for e in genome.edges.values():
        e.forward_reachable = e.backward_reachable = False

    queue = deque(n.id for n in genome.nodes.values() if n.kind == INPUT and n.enabled)
    for nid in queue:
        genome.nodes[nid].forward_reachable = True
    while queue:
        nid = queue.popleft()
        for e in fwd[nid]:
            e.forward_reachable = True
            t = genome.nodes[e.target]
            if not t.forward_reachable:
                t.forward_reachable = True
                queue.append(t.id)

    queue = deque(n.id for n in genome.nodes.values() if n.kind == OUTPUT and n.enabled)
    for nid in queue:
        genome.nodes[nid].backward_reachable = True
    while queue:
        nid = queue.popleft()
        for e in bwd[nid]:
            e.backward_reachable = True
            s = genome.nodes[e.source]
            if not s.backward_reachable:
                s.backward_reachable = True
                queue.append(s.id)
    return genome


def count_vestigial(genome: Genome) -> tuple[int, int]:
    """Hidden nodes and edges lacking a full input-to-output path, enabled or not."""
    mark_reachability(genome)
    nodes = sum(1 for n in genome.hidden_nodes()
                if not (n.forward_reachable and n.backward_reachable))
    edges = sum(1 for e in genome.edges.values()
                if not (e.forward_reachable and e.backward_reachable))
    return nodes, edges


# -- statistics ------------------------------------------------------------

def enabled_weights(genome: Genome) -> np.ndarray:
    vals = [e.weight for e in genome.edges.values() if e.enabled]
    for n in genome.nodes.values():
        if n.enabled:
            vals.extend(n.weights)
    return np.asarray(vals, dtype=float)


def weight_statistics(genome: Genome) -> tuple[float, float]:
    """Mean and population std over enabled edge weights and enabled node parameters."""
    w = enabled_weights(genome)
    if w.size == 0:
        raise EmptyNetworkError("genome has no enabled weights")
    return float(w.mean()), float(w.std())


def fan_statistics(genome: Genome) -> tuple[float, float, float, float]:
    """(mu_o, sigma_o, mu_i, sigma_i) over enabled nodes, counting all enabled edges.

    Fan-out is taken over input and hidden nodes, fan-in over output and hidden
    nodes. Recurrent edges are counted alongside feedforward ones.
    """
    out_deg = {nid: 0 for nid in genome.nodes}
    in_deg = {nid: 0 for nid in genome.nodes}
    for e in genome.edges.values():
        if e.enabled:
            out_deg[e.source] += 1
            in_deg[e.target] += 1
    fo = [out_deg[n.id] for n in genome.nodes.values() if n.enabled and n.kind != OUTPUT]
    fi = [in_deg[n.id] for n in genome.nodes.values() if n.enabled and n.kind != INPUT]
    fo_a = np.asarray(fo, dtype=float) if fo else np.zeros(1)
    fi_a = np.asarray(fi, dtype=float) if fi else np.zeros(1)
    return float(fo_a.mean()), float(fo_a.std()), float(fi_a.mean()), float(fi_a.std())


def network_stats(genome: Genome) -> NetworkStats:
    mu_w, sigma_w = weight_statistics(genome)
    return NetworkStats(mu_w, sigma_w, *fan_statistics(genome))


# -- validation ------------------------------------------------------------

def feedforward_is_acyclic(genome: Genome) -> bool:
    """Kahn's algorithm over enabled feedforward edges; ignores depth entirely."""
    indeg = {nid: 0 for nid in genome.nodes}
    succ: dict[int, list[int]] = {nid: [] for nid in genome.nodes}
    for e in genome.edges.values():
        if e.enabled and not e.recurrent:
            indeg[e.target] += 1
            succ[e.source].append(e.target)
    queue = deque(nid for nid, d in indeg.items() if d == 0)
    seen = 0
    while queue:
        nid = queue.popleft()
        seen += 1
        for t in succ[nid]:
            indeg[t] -= 1
            if indeg[t] == 0:
                queue.append(t)
    return seen == len(genome.nodes)


def check_genome(genome: Genome) -> list[str]:
    """Return a list of invariant violations (empty when the genome is valid)."""
    problems = []
    for kind, params in ((INPUT, genome.input_params), (OUTPUT, genome.output_params)):
        bound = [n.param_name for n in genome.nodes.values() if n.kind == kind]
        if sorted(bound) != sorted(params) or len(set(params)) != len(params):
            problems.append(f"{kind} nodes {sorted(bound)} do not match params {sorted(params)}")
    for n in genome.nodes.values():
        if n.kind not in NODE_KINDS:
            problems.append(f"node {n.id}: unknown kind {n.kind}")
            continue
        if n.cell_type not in CELL_TYPES:
            problems.append(f"node {n.id}: unknown cell type {n.cell_type}")
            continue
        if n.kind == INPUT:
            if n.depth != 0.0 or n.weights or n.cell_type != "simple":
                problems.append(f"input node {n.id} malformed")
        elif n.kind == OUTPUT:
            if n.depth != 1.0 or n.cell_type != "simple":
                problems.append(f"output node {n.id} malformed")
        elif not 0.0 < n.depth < 1.0:
            problems.append(f"hidden node {n.id} depth {n.depth} outside (0, 1)")
        if n.kind != INPUT and len(n.weights) != CELL_PARAM_COUNT[n.cell_type]:
            problems.append(f"node {n.id}: {len(n.weights)} weights for {n.cell_type}")
    keys = set()
    for e in genome.edges.values():
        if e.source not in genome.nodes or e.target not in genome.nodes:
            problems.append(f"edge {e.id} references a missing node")
            continue
        s, t = genome.nodes[e.source], genome.nodes[e.target]
        if t.kind == INPUT:
            problems.append(f"edge {e.id} enters input node {t.id}")
        if e.recurrent:
            if not 1 <= e.time_skip <= MAX_TIME_SKIP:
                problems.append(f"edge {e.id} time_skip {e.time_skip}")
        else:
            if s.depth >= t.depth:
                problems.append(f"feedforward edge {e.id} violates depth order")
            if s.kind == OUTPUT:
                problems.append(f"feedforward edge {e.id} leaves output node")
        if e.enabled:
            if e.key in keys:
                problems.append(f"duplicate enabled edge {e.key}")
            keys.add(e.key)
        if not math.isfinite(e.weight):
            problems.append(f"edge {e.id} weight not finite")
    if not feedforward_is_acyclic(genome):
        problems.append("enabled feedforward subgraph has a cycle")
    if genome.fitness is not None and not genome.fitness >= 0:
        problems.append(f"fitness {genome.fitness} negative or NaN")
    return problems


def validate(genome: Genome) -> Genome:
    problems = check_genome(genome)
    if problems:
        raise GenomeError("; ".join(problems))
    return genome


# -- serialization ---------------------------------------------------------

def _fitness_out(f: float | None):
    if f is None:
        return None
    return "inf" if math.isinf(f) else f


def to_dict(genome: Genome) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "input_params": list(genome.input_params),
        "output_params": list(genome.output_params),
        "nodes": [
            {"id": n.id, "kind": n.kind, "cell_type": n.cell_type,
             "param_name": n.param_name, "depth": n.depth, "enabled": n.enabled,
             "weights": list(n.weights), "forward_reachable": n.forward_reachable,
             "backward_reachable": n.backward_reachable}
            for n in sorted(genome.nodes.values(), key=lambda n: n.id)
        ],
        "edges": [
            {"id": e.id, "source": e.source, "target": e.target, "weight": e.weight,
             "recurrent": e.recurrent, "time_skip": e.time_skip, "enabled": e.enabled,
             "forward_reachable": e.forward_reachable,
             "backward_reachable": e.backward_reachable}
            for e in sorted(genome.edges.values(), key=lambda e: e.id)
        ],
        "fitness": _fitness_out(genome.fitness),
        "metadata": genome.metadata,
    }


def serialize(genome: Genome) -> bytes:
    # float repr is the shortest string that round-trips to the same double
    return json.dumps(to_dict(genome), indent=1, allow_nan=False).encode("utf-8")


def from_dict(d: dict) -> Genome:
    where = "top level"
    try:
        if d.get("format_version") != FORMAT_VERSION:
            raise GenomeParseError(f"unsupported format_version {d.get('format_version')!r}")
        nodes = {}
        for i, nd in enumerate(d["nodes"]):
            where = f"nodes[{i}]"
            n = Node(int(nd["id"]), nd["kind"], nd["cell_type"], nd["param_name"],
                     float(nd["depth"]), bool(nd["enabled"]),
                     [float(w) for w in nd["weights"]],
                     bool(nd.get("forward_reachable", False)),
                     bool(nd.get("backward_reachable", False)))
            if n.id in nodes:
                raise GenomeParseError(f"{where}: duplicate node id {n.id}")
            nodes[n.id] = n
        edges = {}
        for i, ed in enumerate(d["edges"]):
            where = f"edges[{i}]"
            e = Edge(int(ed["id"]), int(ed["source"]), int(ed["target"]), float(ed["weight"]),
                     bool(ed["recurrent"]), int(ed["time_skip"]), bool(ed["enabled"]),
                     bool(ed.get("forward_reachable", False)),
                     bool(ed.get("backward_reachable", False)))
            if e.id in edges:
                raise GenomeParseError(f"{where}: duplicate edge id {e.id}")
            edges[e.id] = e
        where = "top level"
        fit = d["fitness"]
        fitness = None if fit is None else (math.inf if fit == "inf" else float(fit))
        return Genome(nodes, edges, list(d["input_params"]), list(d["output_params"]),
                      fitness, dict(d.get("metadata") or {}))
    except GenomeParseError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise GenomeParseError(f"{where}: {exc.__class__.__name__}: {exc}") from exc


def deserialize(data: bytes | str) -> Genome:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise GenomeParseError(f"byte {exc.start}: not UTF-8") from exc
    try:
        d = json.loads(data)
    except json.JSONDecodeError as exc:
        raise GenomeParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(d, dict):
        raise GenomeParseError("top level: expected an object")
    return from_dict(d)


def save(genome: Genome, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(genome))


def load(path) -> Genome:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def structurally_equal(a: Genome, b: Genome, flags: bool = True) -> bool:
    """Bit-exact comparison of structure, weights, ids and (optionally) reachability flags.

    Fitness and metadata are not structure and are ignored.
    """
    da, db = to_dict(a), to_dict(b)
    for d in (da, db):
        d.pop("fitness")
        d.pop("metadata")
    if not flags:
        for d in (da, db):
            for item in d["nodes"] + d["edges"]:
                item.pop("forward_reachable")
                item.pop("backward_reachable")
    return da == db


def sorted_edges(edges: Iterable[Edge]) -> list[Edge]:
    return sorted(edges, key=lambda e: e.id)


def random_genome(rng: np.random.Generator, n_inputs: int = 3, n_outputs: int = 2,
                  n_hidden: int = 5, edge_prob: float = 0.4, recurrent_prob: float = 0.15,
                  max_skip: int = MAX_TIME_SKIP, cell_types=CELL_TYPES,
                  disabled_prob: float = 0.0, weight_scale: float = 1.0) -> Genome:
    """Random valid genome for property tests and benchmarks.

    Every candidate feedforward pair (by depth) is wired with ``edge_prob`` and
    every non-input target receives a recurrent edge from each node with
    ``recurrent_prob``.
    """
    ins = [f"in{i}" for i in range(n_inputs)]
    outs = [f"out{i}" for i in range(n_outputs)]
    g = Genome({}, {}, ins, outs)
    nid = 0
    for p in ins:
        g.add_node(Node(nid, INPUT, "simple", p, 0.0))
        nid += 1
    for p in outs:
        g.add_node(Node(nid, OUTPUT, "simple", p, 1.0,
                        weights=[float(rng.normal(0, weight_scale))]))
        nid += 1
    for _ in range(n_hidden):
        ct = str(rng.choice(cell_types))
        g.add_node(Node(nid, HIDDEN, ct, None, float(rng.uniform(0.01, 0.99)),
                        weights=list(rng.normal(0, weight_scale, CELL_PARAM_COUNT[ct]))))
        nid += 1
    nodes = sorted(g.nodes.values(), key=lambda n: n.id)
    eid = 0
    for s in nodes:
        for t in nodes:
            if t.kind == INPUT:
                continue
            if s.depth < t.depth and s.kind != OUTPUT and rng.random() < edge_prob:
                g.add_edge(eid, s.id, t.id, float(rng.normal(0, weight_scale)))
                eid += 1
            if rng.random() < recurrent_prob:
                g.add_edge(eid, s.id, t.id, float(rng.normal(0, weight_scale)), True,
                           int(rng.integers(1, max_skip + 1)))
                eid += 1
    if disabled_prob:
        for e in g.edges.values():
            e.enabled = bool(rng.random() >= disabled_prob)
        for n in g.hidden_nodes():
            n.enabled = bool(rng.random() >= disabled_prob)
    return g

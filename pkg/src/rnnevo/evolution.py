"""Island-model memetic evolution of RNN genomes.

A single coordinator owns the islands. It hands out candidates island by
island in round-robin order, workers train them, and finished genomes are
inserted back into the island they came from, evicting the worst member when
the island overflows.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cells import init_cell_weights
from .genome import (CELL_TYPES, HIDDEN, INPUT, OUTPUT, Genome, GenomeError, IdCounter,
                     Node, build_minimal_genome, weight_statistics)
from .trainer import TrainConfig, sgd_train

log = logging.getLogger(__name__)

MUTATION_OPS = (
    "add_edge", "add_recurrent_edge", "enable_edge", "disable_edge", "split_edge",
    "add_node", "enable_node", "disable_node", "split_node", "merge_node", "clone",
)


def default_mutation_ops() -> dict[str, float]:
    return {op: 0.1 for op in MUTATION_OPS if op != "split_edge"}


@dataclass
class EvolveConfig:
    n_islands: int = 4
    island_capacity: int = 10
    mutation_rate: float = 0.70
    intra_island_crossover_rate: float = 0.20
    inter_island_crossover_rate: float = 0.10
    mutation_ops: dict[str, float] = field(default_factory=default_mutation_ops)
    max_genomes: int = 4000
    min_time_skip: int = 1
    max_time_skip: int = 10
    seed: int = 0
    crossover_blend: str = "lamarckian"   # or "average"
    parent_selection: str = "uniform"     # or "tournament"

    def __post_init__(self):
        rates = (self.mutation_rate, self.intra_island_crossover_rate,
                 self.inter_island_crossover_rate)
        if min(rates) < 0 or not math.isclose(sum(rates), 1.0, abs_tol=1e-9):
            raise ValueError(f"generation rates {rates} must be non-negative and sum to 1")
        unknown = set(self.mutation_ops) - set(MUTATION_OPS)
        if unknown:
            raise ValueError(f"unknown mutation ops {sorted(unknown)}")
        w = [v for v in self.mutation_ops.values()]
        if not w or min(w) < 0 or not math.isclose(sum(w), 1.0, abs_tol=1e-9):
            raise ValueError("mutation op weights must be non-negative and sum to 1")
        if self.n_islands < 1 or self.island_capacity < 2:
            raise ValueError("need at least one island with capacity >= 2")
        if not 1 <= self.min_time_skip <= self.max_time_skip <= 10:
            raise ValueError("time skip range must lie within [1, 10]")
        if self.crossover_blend not in ("lamarckian", "average"):
            raise ValueError(f"unknown crossover blend {self.crossover_blend!r}")
        if self.parent_selection not in ("uniform", "tournament"):
            raise ValueError(f"unknown parent selection {self.parent_selection!r}")


# -- mutation ----------------------------------------------------------------

class _Mutator:
    """Applies one structural operator to a child copy of the parent."""

    def __init__(self, child: Genome, config: EvolveConfig, rng: np.random.Generator,
                 ids: IdCounter, forget_bias_boost: float):
        self.g = child
        self.config = config
        self.rng = rng
        self.ids = ids
        self.boost = forget_bias_boost
        self.mu, self.sigma = weight_statistics(child)

    def weight(self) -> float:
        # new weights mirror the parent's own weight distribution
        return float(self.rng.normal(self.mu, self.sigma))

    def new_hidden(self, depth: float, cell_type: str | None = None) -> Node:
        ct = cell_type or str(self.rng.choice(CELL_TYPES))
        node = Node(self.ids.node(), HIDDEN, ct, None, depth,
                    weights=init_cell_weights(ct, self.weight, self.boost))
        return self.g.add_node(node)

    def pick(self, items):
        return items[int(self.rng.integers(len(items)))]

    def enabled_nodes(self):
        return sorted((n for n in self.g.nodes.values() if n.enabled), key=lambda n: n.id)

    def incident(self, nid: int):
        return sorted((e for e in self.g.edges.values()
                       if e.enabled and (e.source == nid or e.target == nid)),
                      key=lambda e: e.id)

    # each op returns False when it cannot apply to this genome
    def add_edge(self) -> bool:
        nodes = self.enabled_nodes()
        existing = self.g.enabled_keys()
        pairs = [(s, t) for s in nodes if s.kind != OUTPUT for t in nodes
                 if t.kind != INPUT and s.depth < t.depth
                 and (s.id, t.id, False, 0) not in existing]
        if not pairs:
            return False
        s, t = self.pick(pairs)
        self.g.add_edge(self.ids.edge(), s.id, t.id, self.weight())
        return True

    def add_recurrent_edge(self) -> bool:
        nodes = self.enabled_nodes()
        targets = [n for n in nodes if n.kind != INPUT]
        existing = self.g.enabled_keys()
        lo, hi = self.config.min_time_skip, self.config.max_time_skip
        for _ in range(32):
            s, t = self.pick(nodes), self.pick(targets)
            skip = int(self.rng.integers(lo, hi + 1))
            if (s.id, t.id, True, skip) not in existing:
                self.g.add_edge(self.ids.edge(), s.id, t.id, self.weight(), True, skip)
                return True
        return False

    def enable_edge(self) -> bool:
        existing = self.g.enabled_keys()
        cands = sorted((e for e in self.g.edges.values()
                        if not e.enabled and e.key not in existing), key=lambda e: e.id)
        if not cands:
            return False
        self.pick(cands).enabled = True
        return True

    def disable_edge(self) -> bool:
        cands = sorted((e for e in self.g.edges.values() if e.enabled), key=lambda e: e.id)
        if len(cands) < 2:
            return False
        self.pick(cands).enabled = False
        return True

    def split_edge(self) -> bool:
        cands = sorted((e for e in self.g.edges.values()
                        if not e.recurrent and self.g.is_active(e)), key=lambda e: e.id)
        if not cands:
            return False
        e = self.pick(cands)
        s, t = self.g.nodes[e.source], self.g.nodes[e.target]
        e.enabled = False
        node = self.new_hidden((s.depth + t.depth) / 2.0)
        self.g.add_edge(self.ids.edge(), s.id, node.id, self.weight())
        self.g.add_edge(self.ids.edge(), node.id, t.id, self.weight())
        return True

    def add_node(self) -> bool:
        depth = float(self.rng.uniform(0.0, 1.0))
        while not 0.0 < depth < 1.0:
            depth = float(self.rng.uniform(0.0, 1.0))
        nodes = self.enabled_nodes()
        below = [n for n in nodes if n.kind != OUTPUT and n.depth < depth]
        above = [n for n in nodes if n.kind != INPUT and n.depth > depth]
        if not below or not above:
            return False
        node = self.new_hidden(depth)
        for pool, incoming in ((below, True), (above, False)):
            k = min(len(pool), int(self.rng.integers(1, 3)))
            for i in self.rng.choice(len(pool), size=k, replace=False):
                other = pool[int(i)]
                if incoming:
                    self.g.add_edge(self.ids.edge(), other.id, node.id, self.weight())
                else:
                    self.g.add_edge(self.ids.edge(), node.id, other.id, self.weight())
        return True

    def enable_node(self) -> bool:
        cands = [n for n in self.g.hidden_nodes() if not n.enabled]
        if not cands:
            return False
        self.pick(cands).enabled = True
        return True

    def disable_node(self) -> bool:
        cands = [n for n in self.g.hidden_nodes() if n.enabled]
        if not cands:
            return False
        self.pick(cands).enabled = False
        return True

    def _copy_edge(self, e, source: int, target: int, weight: float | None = None):
        if not e.recurrent and self.g.nodes[source].depth >= self.g.nodes[target].depth:
            return None
        return self.g.add_edge(self.ids.edge(), source, target,
                               e.weight if weight is None else weight, e.recurrent, e.time_skip)

    def split_node(self) -> bool:
        """Replace a hidden node by two copies that share out its edges at random."""
        cands = []
        for n in self.g.hidden_nodes():
            if not n.enabled:
                continue
            inc = self.incident(n.id)
            if any(e.target == n.id for e in inc) and any(e.source == n.id for e in inc):
                cands.append(n)
        if not cands:
            return False
        n = self.pick(cands)
        edges = self.incident(n.id)
        n.enabled = False
        for e in edges:
            e.enabled = False
        halves = [self.g.add_node(Node(self.ids.node(), HIDDEN, n.cell_type, None, n.depth,
                                       weights=list(n.weights))) for _ in range(2)]
        for e in edges:
            h = halves[int(self.rng.integers(2))]
            src = h.id if e.source == n.id else e.source
            tgt = h.id if e.target == n.id else e.target
            self._copy_edge(e, src, tgt)
        incoming = [e for e in edges if e.target == n.id and e.source != n.id]
        outgoing = [e for e in edges if e.source == n.id and e.target != n.id]
        for h in halves:
            mine = [e for e in self.g.edges.values() if e.enabled and e.source != e.target
                    and (e.source == h.id or e.target == h.id)]
            if incoming and not any(e.target == h.id for e in mine):
                e = self.pick(incoming)
                self._copy_edge(e, e.source, h.id, self.weight())
            if outgoing and not any(e.source == h.id for e in mine):
                e = self.pick(outgoing)
                self._copy_edge(e, h.id, e.target, self.weight())
        return True

    def merge_node(self) -> bool:
        """Fold two hidden nodes into one at their mean depth, unioning their edges.

        Feedforward edges that would break depth order after the move are dropped.
        """
        cands = [n for n in self.g.hidden_nodes() if n.enabled]
        if len(cands) < 2:
            return False
        i, j = self.rng.choice(len(cands), size=2, replace=False)
        a, b = cands[int(i)], cands[int(j)]
        keep = a if self.rng.random() < 0.5 else b
        node = self.g.add_node(Node(self.ids.node(), HIDDEN, keep.cell_type, None,
                                    (a.depth + b.depth) / 2.0, weights=list(keep.weights)))
        edges = sorted({e.id: e for e in self.incident(a.id) + self.incident(b.id)}.values(),
                       key=lambda e: e.id)
        for n in (a, b):
            n.enabled = False
        for e in edges:
            e.enabled = False
        for e in edges:
            src = node.id if e.source in (a.id, b.id) else e.source
            tgt = node.id if e.target in (a.id, b.id) else e.target
            if src == tgt and not e.recurrent:
                continue
            self._copy_edge(e, src, tgt)
        return True

    def clone(self) -> bool:
        return True

    def perturb(self) -> None:
        scale = self.sigma / 10.0
        for e in self.g.edges.values():
            e.weight += float(self.rng.normal(0.0, scale))
        for n in self.g.nodes.values():
            n.weights = [w + float(self.rng.normal(0.0, scale)) for w in n.weights]


def mutate(parent: Genome, config: EvolveConfig, rng: np.random.Generator,
           ids: IdCounter | None = None, forget_bias_boost: float = 1.0) -> Genome:
    """Child of ``parent`` with exactly one mutation operator applied.

    Inapplicable operators are redrawn up to ten times; if none applies the
    child's weights are perturbed by N(0, sigma_w / 10) instead.
    """
    ids = ids or IdCounter.after(parent)
    child = parent.copy()
    child.fitness = None
    m = _Mutator(child, config, rng, ids, forget_bias_boost)
    ops = list(config.mutation_ops)
    probs = np.array([config.mutation_ops[o] for o in ops], dtype=float)
    probs /= probs.sum()
    applied = None
    for _ in range(11):
        op = ops[int(rng.choice(len(ops), p=probs))]
        if getattr(m, op)():
            applied = op
            break
    if applied is None:
        m.perturb()
        applied = "perturb"
    child.metadata = {"operator": applied, "parents": [parent.metadata.get("genome_id")]}
    return child


# -- crossover -----------------------------------------------------------------

def _blend(p1: float, p2: float, rng: np.random.Generator, mode: str) -> float:
    if p1 == p2:
        return p1
    if mode == "average":
        return (p1 + p2) / 2.0
    r = float(rng.uniform(-0.5, 1.5))
    return p1 + r * (p2 - p1)


def crossover(primary_parent: Genome, secondary_parent: Genome, rng: np.random.Generator,
              blend: str = "lamarckian") -> Genome:
    """Recombine two genomes aligned on node and edge ids.

    The fitter parent's structure is kept whole; shared elements get blended
    weights; each enabled edge found only in the other parent is carried over
    (with any missing endpoint) with probability 0.5.
    """
    if (primary_parent.input_params != secondary_parent.input_params
            or primary_parent.output_params != secondary_parent.output_params):
        raise GenomeError("crossover parents have different input/output parameters")
    better, worse = primary_parent, secondary_parent
    fb = math.inf if better.fitness is None else better.fitness
    fw = math.inf if worse.fitness is None else worse.fitness
    if fw < fb:
        better, worse = worse, better

    child = better.copy()
    child.fitness = None
    for nid in sorted(child.nodes):
        if nid in worse.nodes and child.nodes[nid].cell_type == worse.nodes[nid].cell_type:
            n = child.nodes[nid]
            n.weights = [_blend(a, b, rng, blend) for a, b in zip(n.weights, worse.nodes[nid].weights)]
    for eid in sorted(child.edges):
        if eid in worse.edges:
            e = child.edges[eid]
            e.weight = _blend(e.weight, worse.edges[eid].weight, rng, blend)

    for eid in sorted(worse.edges):
        e = worse.edges[eid]
        if eid in child.edges or not e.enabled or rng.random() >= 0.5:
            continue
        missing = [nid for nid in (e.source, e.target) if nid not in child.nodes]
        if any(worse.nodes[nid].kind != HIDDEN for nid in missing):
            continue
        for nid in missing:
            n = worse.nodes[nid].copy()
            n.enabled = True
            child.nodes[nid] = n
        ne = e.copy()
        if ne.key in child.enabled_keys():
            continue
        s, t = child.nodes[ne.source], child.nodes[ne.target]
        if not ne.recurrent and (s.depth >= t.depth or s.kind == OUTPUT):
            ne.enabled = False
        child.edges[eid] = ne
    child.metadata = {"operator": "crossover",
                      "parents": [better.metadata.get("genome_id"),
                                  worse.metadata.get("genome_id")]}
    return child


# -- islands and engine state ------------------------------------------------------

@dataclass
class Island:
    id: int
    capacity: int
    population: list[Genome] = field(default_factory=list)

    @property
    def filled(self) -> bool:
        return len(self.population) >= self.capacity

    def best(self) -> Genome:
        return min(self.population, key=lambda g: g.fitness)


@dataclass
class LogRow:
    inserted_count: int
    best_validation_mse: float
    island_id: int
    genome_id: int


@dataclass
class Candidate:
    genome: Genome
    island_id: int
    kind: str            # seed | mutation | intra_crossover | inter_crossover
    train_seed: int
    all_islands_full: bool


@dataclass
class EngineState:
    islands: list[Island]
    seeds: list[Genome]
    ids: IdCounter
    cursor: int = 0
    generated: int = 0
    inserted: int = 0
    best: Genome | None = None
    log: list[LogRow] = field(default_factory=list)
    seed_dispatched: list[bool] = field(default_factory=list)
    selections: list[tuple[str, bool]] = field(default_factory=list)
    forget_bias_boost: float = 1.0

    @property
    def best_fitness(self) -> float:
        return math.inf if self.best is None else self.best.fitness


def new_state(config: EvolveConfig, seeds: list[Genome], forget_bias_boost: float = 1.0) -> EngineState:
    if len(seeds) == 1:
        seeds = seeds * config.n_islands
    if len(seeds) != config.n_islands:
        raise ValueError(f"need 1 or {config.n_islands} seed genomes, got {len(seeds)}")
    return EngineState(
        [Island(i, config.island_capacity) for i in range(config.n_islands)],
        [s.copy() for s in seeds], IdCounter.after(*seeds),
        seed_dispatched=[False] * config.n_islands,
        forget_bias_boost=forget_bias_boost,
    )


def _select_parent(island: Island, config: EvolveConfig, rng: np.random.Generator) -> Genome:
    pop = island.population
    if config.parent_selection == "tournament" and len(pop) > 1:
        i, j = rng.choice(len(pop), size=2, replace=False)
        return min(pop[int(i)], pop[int(j)], key=lambda g: g.fitness)
    return pop[int(rng.integers(len(pop)))]


def generate_candidate(state: EngineState, config: EvolveConfig,
                       rng: np.random.Generator) -> Candidate | None:
    """Next genome to train, taken round-robin over islands; None once the budget is spent."""
    if state.generated >= config.max_genomes:
        return None
    island = state.islands[state.cursor]
    state.cursor = (state.cursor + 1) % len(state.islands)
    all_full = all(i.filled for i in state.islands)

    if not island.population:
        if not state.seed_dispatched[island.id]:
            state.seed_dispatched[island.id] = True
            child, kind = state.seeds[island.id].copy(), "seed"
            child.metadata = {"operator": "seed", "parents": []}
        else:
            child, kind = mutate(state.seeds[island.id], config, rng, state.ids,
                                 state.forget_bias_boost), "mutation"
    elif not island.filled:
        child = mutate(_select_parent(island, config, rng), config, rng, state.ids,
                       state.forget_bias_boost)
        kind = "mutation"
    else:
        if all_full:
            p = [config.mutation_rate, config.intra_island_crossover_rate,
                 config.inter_island_crossover_rate]
        else:
            # inter-island crossover waits until every island is full
            p = [config.mutation_rate, 1.0 - config.mutation_rate, 0.0]
        r = rng.random()
        if r < p[0]:
            kind = "mutation"
        elif r < p[0] + p[1]:
            kind = "intra_crossover"
        else:
            kind = "inter_crossover"
        if kind == "mutation":
            child = mutate(_select_parent(island, config, rng), config, rng, state.ids,
                           state.forget_bias_boost)
        elif kind == "intra_crossover":
            i, j = rng.choice(len(island.population), size=2, replace=False)
            child = crossover(island.population[int(i)], island.population[int(j)], rng,
                              config.crossover_blend)
        else:
            others = [k for k in range(len(state.islands)) if k != island.id]
            other = state.islands[others[int(rng.integers(len(others)))]]
            child = crossover(_select_parent(island, config, rng), other.best(), rng,
                              config.crossover_blend)
        state.selections.append((kind, all_full))

    state.ids.reserve(child)
    child.fitness = None
    child.metadata["genome_id"] = state.generated
    child.metadata["island"] = island.id
    state.generated += 1
    seed = int(rng.integers(2**63 - 1))
    return Candidate(child, island.id, kind, seed, all_full)


def insert_result(state: EngineState, genome: Genome, island_id: int) -> str:
    """Insert a trained genome; returns inserted, inserted_with_eviction or rejected."""
    if not 0 <= island_id < len(state.islands):
        raise KeyError(f"unknown island id {island_id}")
    if genome.fitness is None:
        raise ValueError("genome must be trained before insertion")
    island = state.islands[island_id]
    island.population.append(genome)
    outcome = "inserted"
    if len(island.population) > island.capacity:
        # on ties the most recent arrival goes
        worst = max(range(len(island.population)),
                    key=lambda k: (island.population[k].fitness, k))
        evicted = island.population.pop(worst)
        outcome = "rejected" if evicted is genome else "inserted_with_eviction"
    if outcome != "rejected" and genome.fitness < state.best_fitness:
        state.best = genome
    state.inserted += 1
    state.log.append(LogRow(state.inserted, state.best_fitness, island_id,
                            int(genome.metadata.get("genome_id", -1))))
    return outcome


# -- driver ----------------------------------------------------------------------

@dataclass
class RunResult:
    best: Genome
    log: list[LogRow]
    state: EngineState


def _train(candidate: Candidate, train, valid, train_config: TrainConfig) -> Genome:
    trained, _ = sgd_train(candidate.genome, train, valid, train_config,
                           np.random.default_rng(candidate.train_seed))
    return trained


def run(config: EvolveConfig, train, valid, train_config: TrainConfig | None = None,
        seeds: list[Genome] | None = None, workers: int = 1,
        on_insert: Callable[[EngineState, LogRow], None] | None = None) -> RunResult:
    """Evolve until ``config.max_genomes`` candidates have been trained and inserted.

    ``seeds`` holds one genome for every island, or a single genome shared by
    all of them. With ``workers == 1`` the run is reproducible from ``config.seed``.
    """
    train_config = train_config or TrainConfig()
    rng = np.random.default_rng(config.seed)
    if not seeds:
        raise ValueError("run needs at least one seed genome")
    for s in seeds:
        for p in s.input_params + s.output_params:
            for ts in (train, valid):
                ts.column(p)
    state = new_state(config, seeds, train_config.forget_bias_boost)

    def record(genome, island_id):
        insert_result(state, genome, island_id)
        if on_insert:
            on_insert(state, state.log[-1])

    if workers <= 1:
        while (cand := generate_candidate(state, config, rng)) is not None:
            record(_train(cand, train, valid, train_config), cand.island_id)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pending = {}
            while True:
                while len(pending) < workers:
                    cand = generate_candidate(state, config, rng)
                    if cand is None:
                        break
                    pending[pool.submit(_train, cand, train, valid, train_config)] = cand
                if not pending:
                    break
                done, _ = wait(pending, return_when=FIRST_COMPLETED)
                for fut in sorted(done, key=lambda f: pending[f].genome.metadata["genome_id"]):
                    cand = pending.pop(fut)
                    record(fut.result(), cand.island_id)
    return RunResult(state.best, state.log, state)


def run_from_scratch(config: EvolveConfig, train, valid, input_params: list[str],
                     output_params: list[str], train_config: TrainConfig | None = None,
                     workers: int = 1, **kw) -> RunResult:
    seed = build_minimal_genome(input_params, output_params,
                                np.random.default_rng([config.seed, 1]))
    return run(config, train, valid, train_config, [seed], workers, **kw)


def write_convergence_csv(rows: list[LogRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["inserted_count", "best_validation_mse", "island_id", "genome_id"])
        for r in rows:
            w.writerow([r.inserted_count, repr(float(r.best_validation_mse)), r.island_id,
                        r.genome_id])

import csv
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rnnevo.evolution import (MUTATION_OPS, EvolveConfig, crossover, default_mutation_ops,
                              generate_candidate, insert_result, mutate, new_state, run,
                              run_from_scratch, write_convergence_csv)
from rnnevo.genome import (IdCounter, build_minimal_genome, check_genome, random_genome,
                           serialize, structurally_equal)
from rnnevo.trainer import TrainConfig, sgd_train


def _parent(seed=0):
    """A genome on which every mutation operator can apply."""
    rng = np.random.default_rng(seed)
    g = random_genome(rng, 3, 2, 6, edge_prob=0.3, recurrent_prob=0.05)
    edges = sorted(g.edges.values(), key=lambda e: e.id)
    edges[0].enabled = edges[3].enabled = False
    g.hidden_nodes()[0].enabled = False
    g.fitness = 0.1
    return g


def _only(op):
    return EvolveConfig(mutation_ops={op: 1.0})


def _fake_fit(g, value):
    g = g.copy()
    g.fitness = value
    return g


# -- config ---------------------------------------------------------------------------

def test_default_config_matches_published_settings():
    c = EvolveConfig()
    assert (c.n_islands, c.island_capacity) == (4, 10)
    assert (c.mutation_rate, c.intra_island_crossover_rate, c.inter_island_crossover_rate) \
        == (0.7, 0.2, 0.1)
    assert len(MUTATION_OPS) == 11 and "split_edge" not in c.mutation_ops
    assert len(c.mutation_ops) == 10 and set(c.mutation_ops.values()) == {0.1}
    assert (c.min_time_skip, c.max_time_skip) == (1, 10)


@pytest.mark.parametrize("kw", [dict(mutation_rate=0.8), dict(mutation_ops={"add_edge": 0.5}),
                                dict(mutation_ops={"teleport": 1.0}), dict(max_time_skip=11),
                                dict(island_capacity=1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        EvolveConfig(**kw)


# -- mutation -------------------------------------------------------------------------

def test_add_node_on_minimal_genome():
    rng = np.random.default_rng(0)
    g = build_minimal_genome(["a", "b", "c"], ["y", "z"], rng)
    child = mutate(g, _only("add_node"), rng)
    assert child.metadata["operator"] == "add_node"
    assert len(child.nodes) == len(g.nodes) + 1
    new = [n for n in child.nodes.values() if n.id not in g.nodes][0]
    for e in child.edges.values():
        if new.id in (e.source, e.target) and not e.recurrent:
            assert child.nodes[e.source].depth < child.nodes[e.target].depth
    assert check_genome(child) == [] and child.fitness is None


def test_add_recurrent_edge_adds_exactly_one():
    rng = np.random.default_rng(1)
    g = build_minimal_genome(["a", "b"], ["y"], rng)
    for _ in range(20):
        child = mutate(g, _only("add_recurrent_edge"), rng)
        new = [e for e in child.edges.values() if e.id not in g.edges]
        assert len(new) == 1 and new[0].recurrent and 1 <= new[0].time_skip <= 10


def test_split_edge_disables_and_inserts_midpoint_node():
    rng = np.random.default_rng(2)
    g = build_minimal_genome(["a"], ["y"], rng)
    child = mutate(g, _only("split_edge"), rng)
    assert not child.edges[0].enabled
    (new,) = [n for n in child.nodes.values() if n.id not in g.nodes]
    assert new.depth == 0.5


def test_new_weights_follow_parent_distribution():
    rng = np.random.default_rng(3)
    g = build_minimal_genome(["a"], ["y"], rng)
    g.edges[0].weight, g.nodes[1].weights = 0.5, [-0.5]     # mu 0, sigma 0.5
    draws = []
    for _ in range(3000):
        child = mutate(g, _only("add_recurrent_edge"), rng)
        draws += [e.weight for e in child.edges.values() if e.id not in g.edges]
    assert abs(np.mean(draws)) < 3 * 0.5 / math.sqrt(len(draws))
    assert abs(np.std(draws) - 0.5) < 0.03


def test_operator_frequencies_are_uniform():
    rng = np.random.default_rng(4)
    parent = _parent()
    counts = Counter(mutate(parent, EvolveConfig(), rng).metadata["operator"]
                     for _ in range(1000))
    assert set(counts) == set(default_mutation_ops())
    sd = math.sqrt(1000 * 0.1 * 0.9)
    for op, n in counts.items():
        assert abs(n - 100) <= 3 * sd, op


def test_inapplicable_operator_falls_back_to_perturbation():
    rng = np.random.default_rng(5)
    g = build_minimal_genome(["a", "b"], ["y"], rng)       # nothing disabled to enable
    child = mutate(g, _only("enable_edge"), rng)
    assert child.metadata["operator"] == "perturb"
    assert set(child.nodes) == set(g.nodes)
    assert {i: (e.key, e.enabled) for i, e in child.edges.items()} == \
           {i: (e.key, e.enabled) for i, e in g.edges.items()}
    assert [e.weight for e in child.edges.values()] != [e.weight for e in g.edges.values()]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), steps=st.integers(1, 15))
def test_mutation_chains_stay_valid(seed, steps):
    rng = np.random.default_rng(seed)
    g = build_minimal_genome(["a", "b", "c"], ["y", "z"], rng)
    ids = IdCounter.after(g)
    for _ in range(steps):
        g = mutate(g, EvolveConfig(mutation_ops={op: 1 / 11 for op in MUTATION_OPS}), rng, ids)
        assert check_genome(g) == []


# -- crossover ------------------------------------------------------------------------

def test_crossover_with_itself_is_identity():
    rng = np.random.default_rng(6)
    g = _parent()
    child = crossover(g, g, rng)
    assert structurally_equal(child, g)
    assert all(child.edges[i].weight == e.weight for i, e in g.edges.items())


@pytest.mark.parametrize("blend,lo,hi", [("average", 0.0, 1.0), ("lamarckian", -0.5, 1.5)])
def test_shared_edges_blend(blend, lo, hi):
    rng = np.random.default_rng(7)
    a = build_minimal_genome(["a", "b"], ["y"], rng)
    b = build_minimal_genome(["a", "b"], ["y"], rng)
    a.fitness, b.fitness = 0.1, 0.2
    for _ in range(50):
        child = crossover(a, b, rng, blend)
        for i in a.edges:
            p1, p2 = a.edges[i].weight, b.edges[i].weight
            r = (child.edges[i].weight - p1) / (p2 - p1)
            assert lo - 1e-9 <= r <= hi + 1e-9


def test_crossover_children_are_valid():
    rng = np.random.default_rng(8)
    base = build_minimal_genome(["a", "b", "c"], ["y", "z"], rng)
    ids = IdCounter.after(base)
    pool = [base]
    for _ in range(40):
        child = mutate(pool[int(rng.integers(len(pool)))], EvolveConfig(), rng, ids)
        child.fitness = float(rng.uniform(0, 1))
        pool.append(child)
    pool[0].fitness = 0.5
    for _ in range(100):
        i, j = rng.choice(len(pool), 2, replace=False)
        c = crossover(pool[i], pool[j], rng)
        assert check_genome(c) == [] and c.fitness is None
        better = pool[i] if pool[i].fitness <= pool[j].fitness else pool[j]
        for e in better.edges.values():
            if e.enabled:
                assert e.id in c.edges


def test_crossover_rejects_mismatched_params():
    rng = np.random.default_rng(9)
    a = build_minimal_genome(["a"], ["y"], rng)
    b = build_minimal_genome(["b"], ["y"], rng)
    a.fitness = b.fitness = 1.0
    with pytest.raises(ValueError):
        crossover(a, b, rng)


# -- engine bookkeeping -----------------------------------------------------------------

def test_first_calls_hand_out_seeds_round_robin():
    cfg = EvolveConfig(max_genomes=6)
    seed = build_minimal_genome(["a"], ["y"], np.random.default_rng(0))
    state, rng = new_state(cfg, [seed]), np.random.default_rng(0)
    cands = [generate_candidate(state, cfg, rng) for _ in range(4)]
    assert [c.island_id for c in cands] == [0, 1, 2, 3]
    assert all(c.kind == "seed" and structurally_equal(c.genome, seed) for c in cands)
    # seeds still in training: the island mutates its seed instead
    assert generate_candidate(state, cfg, rng).kind == "mutation"
    generate_candidate(state, cfg, rng)
    assert generate_candidate(state, cfg, rng) is None


def test_insert_outcomes():
    cfg = EvolveConfig(max_genomes=100)
    seed = build_minimal_genome(["a"], ["y"], np.random.default_rng(0))
    state = new_state(cfg, [seed])
    for k in range(9):
        assert insert_result(state, _fake_fit(seed, 0.5 + k), 0) == "inserted"
    assert insert_result(state, _fake_fit(seed, 0.4), 0) == "inserted"
    island = state.islands[0]
    assert len(island.population) == 10
    before = [g.fitness for g in island.population]
    assert insert_result(state, _fake_fit(seed, 99.0), 0) == "rejected"
    assert [g.fitness for g in island.population] == before
    assert insert_result(state, _fake_fit(seed, 0.1), 0) == "inserted_with_eviction"
    assert 8.5 not in [g.fitness for g in island.population]
    assert state.best_fitness == 0.1 and state.inserted == 12
    with pytest.raises(KeyError):
        insert_result(state, _fake_fit(seed, 0.1), 7)


def _full_state(cfg, fill_all=True):
    rng = np.random.default_rng(10)
    base = build_minimal_genome(["a", "b"], ["y"], rng)
    state = new_state(cfg, [base])
    ids = state.ids
    for island in state.islands[: None if fill_all else 1]:
        for _ in range(cfg.island_capacity):
            child = mutate(base, cfg, rng, ids)
            child.fitness = float(rng.uniform(0, 1))
            island.population.append(child)
    state.seed_dispatched = [True] * cfg.n_islands
    return state


def test_selection_rates_once_all_full():
    cfg = EvolveConfig(max_genomes=10**6)
    state, rng = _full_state(cfg), np.random.default_rng(11)
    for _ in range(10_000):
        generate_candidate(state, cfg, rng)
    counts = Counter(k for k, full in state.selections)
    for kind, p in (("mutation", .7), ("intra_crossover", .2), ("inter_crossover", .1)):
        assert abs(counts[kind] / 10_000 - p) <= 0.02


def test_no_inter_island_crossover_before_all_full():
    cfg = EvolveConfig(max_genomes=10**6)
    state, rng = _full_state(cfg, fill_all=False), np.random.default_rng(12)
    for _ in range(4000):
        c = generate_candidate(state, cfg, rng)
        if c.island_id != 0:
            state.islands[c.island_id].population.clear()  # keep the others unfilled
    counts = Counter(k for k, _ in state.selections)
    assert counts["inter_crossover"] == 0
    assert abs(counts["mutation"] / sum(counts.values()) - 0.7) <= 0.03


# -- full runs --------------------------------------------------------------------------

def test_budget_of_four_gives_four_rows(small_task):
    train, valid, ins, outs = small_task
    res = run_from_scratch(EvolveConfig(max_genomes=4), train, valid, ins, outs,
                           TrainConfig(epochs=1))
    assert [r.inserted_count for r in res.log] == [1, 2, 3, 4]
    best = [r.best_validation_mse for r in res.log]
    assert all(b <= a for a, b in zip(best, best[1:]))


def test_run_is_reproducible_and_beats_the_minimal_genome(small_task):
    train, valid, ins, outs = small_task
    cfg = EvolveConfig(max_genomes=200, seed=3)
    a = run_from_scratch(cfg, train, valid, ins, outs)
    b = run_from_scratch(cfg, train, valid, ins, outs)
    assert serialize(a.best) == serialize(b.best)
    assert [(r.best_validation_mse, r.genome_id) for r in a.log] == \
           [(r.best_validation_mse, r.genome_id) for r in b.log]
    seed = build_minimal_genome(ins, outs, np.random.default_rng([3, 1]))
    _, alone = sgd_train(seed, train, valid)
    assert a.best.fitness < alone.validation_mse


def test_parallel_workers_respect_invariants(small_task):
    train, valid, ins, outs = small_task
    cfg = EvolveConfig(max_genomes=80, seed=1)
    seen = []

    def check(state, row):
        assert all(len(i.population) <= i.capacity for i in state.islands)
        seen.append(row.best_validation_mse)

    res = run_from_scratch(cfg, train, valid, ins, outs, workers=3, on_insert=check)
    assert len(res.log) == 80 and all(b <= a for a, b in zip(seen, seen[1:]))


def test_per_island_seeds_and_schema_check(small_task):
    train, valid, ins, outs = small_task
    rng = np.random.default_rng(0)
    seeds = [build_minimal_genome(ins, outs, rng) for _ in range(4)]
    res = run(EvolveConfig(max_genomes=8), train, valid, TrainConfig(epochs=1), seeds)
    assert len(res.log) == 8
    bad = build_minimal_genome(["nope"], outs, rng)
    with pytest.raises(Exception, match="nope"):
        run(EvolveConfig(max_genomes=4), train, valid, seeds=[bad])


def test_convergence_csv(tmp_path, small_task):
    train, valid, ins, outs = small_task
    res = run_from_scratch(EvolveConfig(max_genomes=5), train, valid, ins, outs,
                           TrainConfig(epochs=1))
    write_convergence_csv(res.log, tmp_path / "c.csv")
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["inserted_count", "best_validation_mse", "island_id", "genome_id"]
    assert len(rows) == 6

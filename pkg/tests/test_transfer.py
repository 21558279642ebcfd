import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats as sps

from rnnevo.airframes import manifest, surgery_counts
from rnnevo.genome import (HIDDEN, INPUT, OUTPUT, Genome, NetworkStats, Node,
                           build_minimal_genome, check_genome,
                           mark_reachability, network_stats, random_genome, structurally_equal)
from rnnevo.transfer import (STRATEGIES, WEIGHT_INITS, AdaptationError, SurgeryReport,
                             TransferSpec, adapt, astl_adapt, epigenetic_weight,
                             nastl_connect_inputs, nastl_connect_outputs, remove_unused,
                             sample_connection_count)

from conftest import prune_oracle


def _fan(g):
    fo, fi = Counter(), Counter()
    for e in g.edges.values():
        if e.enabled:
            fo[e.source] += 1
            fi[e.target] += 1
    return fo, fi


def _stats(mu_o=1.0, sigma_o=0.0, mu_i=1.0, sigma_i=0.0, mu_w=0.0, sigma_w=0.1):
    return NetworkStats(mu_w, sigma_w, mu_o, sigma_o, mu_i, sigma_i)


def _hidden_rich(n_hidden=6, seed=0):
    """Two inputs, one output and a layer of hidden nodes, all fully reachable."""
    g = Genome({}, {}, ["a", "b"], ["y"])
    g.add_node(Node(0, INPUT, "simple", "a", 0.0))
    g.add_node(Node(1, INPUT, "simple", "b", 0.0))
    g.add_node(Node(2, OUTPUT, "simple", "y", 1.0, weights=[0.1]))
    eid = 0
    for k in range(n_hidden):
        g.add_node(Node(3 + k, HIDDEN, "simple", None, 0.5, weights=[0.0]))
        for s, t in ((k % 2, 3 + k), (3 + k, 2)):
            g.add_edge(eid, s, t, 0.2)
            eid += 1
    return g


# -- remove_unused -------------------------------------------------------------------

def test_airframe_removal_counts():
    si, so = manifest("C172")
    ti, to = manifest("PA28")
    g = build_minimal_genome(si, so, np.random.default_rng(0))
    r = SurgeryReport()
    out = remove_unused(g, ti, to, r)
    assert (len(r.inputs_removed), len(r.outputs_removed)) == (8, 3)
    assert sorted(out.input_params) == sorted(ti) and out.output_params == to


def test_orphaned_chain_is_disabled_not_deleted():
    g = Genome({}, {}, ["a", "b"], ["y"])
    g.add_node(Node(0, INPUT, "simple", "a", 0.0))
    g.add_node(Node(1, INPUT, "simple", "b", 0.0))
    g.add_node(Node(2, OUTPUT, "simple", "y", 1.0, weights=[0.0]))
    g.add_node(Node(3, HIDDEN, "gru", None, 0.3, weights=[0.1] * 9))
    g.add_node(Node(4, HIDDEN, "simple", None, 0.6, weights=[0.1]))
    for eid, (s, t) in enumerate([(0, 3), (3, 4), (4, 2), (1, 2)]):
        g.add_edge(eid, s, t, 0.5)
    r = SurgeryReport()
    out = remove_unused(g, ["b"], ["y"], r)
    assert 3 in out.nodes and 4 in out.nodes
    assert not out.nodes[3].enabled and not out.nodes[4].enabled
    assert not out.edges[1].enabled and not out.edges[2].enabled and out.edges[3].enabled
    assert (r.nodes_disabled, r.edges_disabled) == (2, 2)


def test_remove_unused_matches_oracle():
    rng = np.random.default_rng(21)
    for _ in range(50):
        g = random_genome(rng, 4, 3, int(rng.integers(0, 12)), edge_prob=0.25,
                          recurrent_prob=0.05, disabled_prob=0.1)
        keep_in = [p for p in g.input_params if rng.random() < 0.5]
        keep_out = [p for p in g.output_params if rng.random() < 0.5]
        present, nodes, edges = prune_oracle(g, keep_in, keep_out)
        out = remove_unused(g.copy(), keep_in, keep_out)
        assert set(out.nodes) == present
        assert {i for i, n in out.nodes.items() if n.enabled} == nodes
        assert {i for i, e in out.edges.items() if e.enabled} == edges


def test_removing_everything_leaves_disabled_genome():
    g = random_genome(np.random.default_rng(0), 2, 2, 4)
    out = remove_unused(g, [], [])
    assert not out.input_params and not any(n.enabled for n in out.hidden_nodes())
    assert not any(e.enabled for e in out.edges.values())


# -- ASTL ----------------------------------------------------------------------------------

def test_astl_pa28_to_c172():
    si, so = manifest("PA28")
    ti, to = manifest("C172")
    g = build_minimal_genome(si, so, np.random.default_rng(1))
    a, r = adapt(g, TransferSpec(ti, to, "astl", "uniform"), np.random.default_rng(1))
    assert (len(r.inputs_added), len(r.inputs_removed),
            len(r.outputs_added), len(r.outputs_removed)) == (8, 0, 3, 0)
    fo, fi = _fan(a)
    for p in r.inputs_added:
        assert fo[a.input_for(p).id] == len(to)
    for p in r.outputs_added:
        assert fi[a.output_for(p).id] == len(ti)


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_identical_params_are_a_fixpoint(strategy):
    g = _hidden_rich()
    g.fitness = 0.3
    a, r = adapt(g, TransferSpec(g.input_params, g.output_params, strategy),
                 np.random.default_rng(0))
    assert structurally_equal(a, mark_reachability(g.copy()))
    assert r.edges_added == 0 and not (r.inputs_added or r.outputs_added)


def test_fixpoint_fails_only_through_vestigial_structure():
    rng = np.random.default_rng(2)
    for _ in range(20):
        g = random_genome(rng, 3, 2, 6, edge_prob=0.3)
        a, r = adapt(g, TransferSpec(g.input_params, g.output_params, "nastl"), rng)
        same = structurally_equal(a, mark_reachability(g.copy()))
        assert same == (r.nodes_disabled == 0 and r.edges_disabled == 0)


def test_uniform_new_weights():
    g = _hidden_rich()
    ins = g.input_params + [f"n{k}" for k in range(10_000)]
    a = astl_adapt(g, TransferSpec(ins, g.output_params, weight_init="uniform"),
                   np.random.default_rng(3))
    w = np.array([e.weight for i, e in a.edges.items() if i not in g.edges])
    assert w.size == 10_000 and w.min() >= -0.5 and w.max() <= 0.5
    assert abs(w.mean()) < 3 * math.sqrt(1 / 12) / 100


# -- N-ASTL ----------------------------------------------------------------------------------

def _spec_with_new(g, n_in=0, n_out=0):
    return TransferSpec(g.input_params + [f"ni{k}" for k in range(n_in)],
                        g.output_params + [f"no{k}" for k in range(n_out)])


def test_degenerate_fan_out_is_exact():
    g = _hidden_rich()
    spec = _spec_with_new(g, n_in=20)
    out = nastl_connect_inputs(g, spec, _stats(mu_o=3.0), np.random.default_rng(0))
    fo, _ = _fan(out)
    assert all(fo[out.input_for(f"ni{k}").id] == 3 for k in range(20))


def test_negative_mean_clamps_to_one_edge():
    g = _hidden_rich()
    spec = _spec_with_new(g, n_in=5)
    out = nastl_connect_inputs(g, spec, _stats(mu_o=-2.0), np.random.default_rng(0))
    fo, _ = _fan(out)
    assert all(fo[out.input_for(f"ni{k}").id] == 1 for k in range(5))


def _rounded_gaussian_mean(mu, sigma):
    """E[max(1, round_half_away(N(mu, sigma)))] from the normal CDF."""
    ks = np.arange(math.floor(mu - 12 * sigma) - 1, math.ceil(mu + 12 * sigma) + 2)
    # for k >= 1, round_half_away(x) == k  <=>  k - 0.5 <= x < k + 0.5
    p = sps.norm.cdf(ks + 0.5, mu, sigma) - sps.norm.cdf(ks - 0.5, mu, sigma)
    p_le_one = sps.norm.cdf(1.5, mu, sigma)
    return p_le_one * 1 + float(np.sum(ks[ks >= 2] * p[ks >= 2]))


def test_fan_out_sample_mean_matches_oracle():
    g = _hidden_rich(n_hidden=12)
    spec = _spec_with_new(g, n_in=10_000)
    r = SurgeryReport()
    out = nastl_connect_inputs(g, spec, _stats(mu_o=4.0, sigma_o=1.0),
                               np.random.default_rng(4), report=r)
    fo, _ = _fan(out)
    ks = np.array([fo[out.input_for(f"ni{k}").id] for k in range(10_000)])
    assert 3.85 <= ks.mean() <= 4.15
    assert abs(ks.mean() - _rounded_gaussian_mean(4.0, 1.0)) <= 0.05
    assert ks.min() >= 1
    assert list(r.nastl_input_connections.values()) == ks.tolist()


def test_degenerate_fan_in_is_exact():
    g = _hidden_rich()
    spec = _spec_with_new(g, n_out=7)
    out = nastl_connect_outputs(g, spec, _stats(mu_i=2.0), np.random.default_rng(0))
    _, fi = _fan(out)
    assert all(fi[out.output_for(f"no{k}").id] == 2 for k in range(7))


def test_fan_in_clamped_to_pool():
    g = build_minimal_genome(["a"], ["y"], np.random.default_rng(0))
    spec = _spec_with_new(g, n_out=3)
    out = nastl_connect_outputs(g, spec, _stats(mu_i=5.0), np.random.default_rng(0))
    _, fi = _fan(out)
    assert all(fi[out.output_for(f"no{k}").id] == 1 for k in range(3))


def test_empty_pools_raise():
    lonely = Genome({0: Node(0, INPUT, "simple", "a", 0.0)}, {}, ["a"], [])
    with pytest.raises(AdaptationError):
        nastl_connect_inputs(lonely, TransferSpec(["a", "b"], ["y"]), _stats(),
                             np.random.default_rng(0))
    sink = Genome({0: Node(0, OUTPUT, "simple", "y", 1.0, weights=[0.0])}, {}, [], ["y"])
    with pytest.raises(AdaptationError):
        nastl_connect_outputs(sink, TransferSpec(["a"], ["y", "z"]), _stats(),
                              np.random.default_rng(0))


def test_pa28_to_pa44_wires_every_new_node():
    si, so = manifest("PA28")
    ti, to = manifest("PA44")
    g = build_minimal_genome(si, so, np.random.default_rng(5))
    a, r = adapt(g, TransferSpec(ti, to, "nastl"), np.random.default_rng(5))
    added_in, removed_in, added_out, removed_out = surgery_counts("PA28", "PA44")
    assert (len(r.inputs_added), len(r.outputs_added)) == (added_in, added_out)
    fo, fi = _fan(a)
    assert all(fo[a.input_for(p).id] >= 1 for p in r.inputs_added)
    assert all(fi[a.output_for(p).id] >= 1 for p in r.outputs_added)


# -- counts and weights --------------------------------------------------------------------------

@pytest.mark.parametrize("mu,sigma,expect", [(2.4, 0.0, 2), (2.5, 0.0, 3), (3.5, 0.0, 4),
                                             (-5.0, 0.001, 1), (0.2, 0.0, 1)])
def test_sample_connection_count_examples(mu, sigma, expect):
    assert sample_connection_count(mu, sigma, np.random.default_rng(0)) == expect


def test_sample_connection_count_distribution():
    rng = np.random.default_rng(6)
    k = np.array([sample_connection_count(5.0, 1.0, rng) for _ in range(10_000)])
    assert abs(k.mean() - _rounded_gaussian_mean(5.0, 1.0)) <= 0.1
    with pytest.raises(ValueError):
        sample_connection_count(1.0, -1.0, rng)


def test_epigenetic_weight_examples():
    rng = np.random.default_rng(7)
    assert epigenetic_weight(_stats(mu_w=0.3, sigma_w=0.0), rng) == 0.3
    w = np.array([epigenetic_weight(_stats(mu_w=0.1, sigma_w=0.2), rng) for _ in range(10_000)])
    assert 0.094 <= w.mean() <= 0.106 and 0.19 <= w.std() <= 0.21
    g = Genome({}, {}, ["a"], ["y"])
    g.add_node(Node(0, INPUT, "simple", "a", 0.0))
    g.add_node(Node(1, OUTPUT, "simple", "y", 1.0, weights=[-1.0]))
    g.add_edge(0, 0, 1, 1.0)
    s = network_stats(g)
    assert (s.mu_w, s.sigma_w) == (0.0, 1.0)


def test_epigenetic_weights_pass_location_test():
    g = _hidden_rich()
    s = network_stats(g)
    ins = g.input_params + [f"n{k}" for k in range(10_000)]
    a, _ = adapt(g, TransferSpec(ins, g.output_params, "astl", "epigenetic"),
                 np.random.default_rng(8))
    drawn = np.array([e.weight for i, e in a.edges.items() if i not in g.edges])
    reference = np.random.default_rng(99).normal(s.mu_w, s.sigma_w, drawn.size)
    assert sps.ttest_ind(drawn, reference, equal_var=False).pvalue > 0.01


# -- orchestrator -------------------------------------------------------------------------------

def test_c172_to_pa44_combined():
    si, so = manifest("C172")
    ti, to = manifest("PA44")
    g = build_minimal_genome(si, so, np.random.default_rng(9))
    a, r = adapt(g, TransferSpec(ti, to, "astl_plus_nastl"), np.random.default_rng(9))
    assert (len(r.inputs_added), len(r.inputs_removed), len(r.outputs_added),
            len(r.outputs_removed)) == surgery_counts("C172", "PA44")
    assert check_genome(a) == []


def test_stats_are_captured_before_surgery():
    g = random_genome(np.random.default_rng(10), 3, 2, 5)
    seen = []
    spec = TransferSpec(g.input_params[:1] + ["q"], g.output_params + ["z"], "nastl")
    _, r = adapt(g, spec, np.random.default_rng(10), stats_recorder=seen.append)
    assert seen == [network_stats(g)] and r.stats == seen[0]


def test_adapted_genomes_have_no_enabled_dead_structure():
    rng = np.random.default_rng(11)
    for trial in range(100):
        g = random_genome(rng, 4, 3, int(rng.integers(1, 8)), edge_prob=0.3,
                          recurrent_prob=0.1, disabled_prob=0.05)
        ins = [p for p in g.input_params if rng.random() < 0.7] + ["x1", "x2"]
        outs = [p for p in g.output_params if rng.random() < 0.7] + ["z1"]
        spec = TransferSpec(ins, outs, STRATEGIES[trial % 3], WEIGHT_INITS[trial % 2])
        a, _ = adapt(g, spec, rng)
        mark_reachability(a)
        for n in a.hidden_nodes():
            assert not n.enabled or (n.forward_reachable and n.backward_reachable)
        for e in a.edges.values():
            if a.is_active(e):
                assert e.forward_reachable and e.backward_reachable
        assert check_genome(a) == []
        # surgery never invents hidden nodes
        assert all(n.id in g.nodes for n in a.hidden_nodes())


def test_source_genome_untouched():
    g = random_genome(np.random.default_rng(12), 3, 2, 5)
    before = g.copy()
    adapt(g, TransferSpec(["in0", "new"], ["out1", "z"], "astl_plus_nastl"))
    assert structurally_equal(g, before)


def test_spec_validation_and_report_text():
    with pytest.raises(AdaptationError):
        TransferSpec([], ["y"])
    with pytest.raises(AdaptationError):
        TransferSpec(["a"], ["y"], strategy="random")
    with pytest.raises(AdaptationError):
        TransferSpec(["a"], ["y"], weight_init="zeros")
    g = build_minimal_genome(["a", "b"], ["y"], np.random.default_rng(0))
    _, r = adapt(g, TransferSpec(["a", "c"], ["y", "z"], "nastl", "uniform"))
    text = r.to_text()
    for line in ("inputs_added: 1", "inputs_removed: 1", "outputs_added: 1",
                 "outputs_removed: 0", "mu_w:", "added input: c", "removed input: b"):
        assert line in text
    assert TransferSpec(["a"], ["y"], "astl", "epigenetic").label == "astl+epi"

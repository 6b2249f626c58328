import math

import pytest

from conftest import flow, graph_from, repeat_pair
from depwalk.errors import ConfigError
from depwalk.flows import Proto
from depwalk.graph import (CommGraph, SamplerConfig, read_graph_jsonl,
                           reservoir_sample_edges, select_top_addresses,
                           write_graph_jsonl)

INTERNAL = ("10.0.0.0/16",)


def cfg(**kwargs):
    defaults = dict(n_internal=10, m_external=10, k_edges=100, internal_prefixes=INTERNAL)
    defaults.update(kwargs)
    return SamplerConfig(**defaults)


def test_config_validation_lists_problems():
    with pytest.raises(ConfigError) as err:
        SamplerConfig(n_internal=-1, m_external=0, k_edges=0, internal_prefixes=("bogus",))
    message = str(err.value)
    assert "n_internal" in message and "k_edges" in message and "bogus" in message


def test_top_addresses_by_flow_count():
    flows = (repeat_pair("10.0.0.1", "10.0.0.2", 3, 0, 1)      # A in 5, B in 3 (+2 below)
             + repeat_pair("10.0.0.1", "10.0.0.3", 2, 0, 1))   # C in 1... A:5 B:3 C:2
    picked = select_top_addresses(flows, cfg(n_internal=2, m_external=0))
    assert picked == {"10.0.0.1", "10.0.0.2"}


def test_top_addresses_zero_requested():
    flows = repeat_pair("10.0.0.1", "10.0.0.2", 3, 0, 1)
    assert select_top_addresses(flows, cfg(n_internal=0, m_external=0)) == set()


def test_tie_broken_lexicographically():
    flows = (repeat_pair("10.0.0.4", "10.0.8.8", 2, 0, 1)
             + repeat_pair("10.0.0.2", "10.0.9.9", 2, 0, 1))
    picked = select_top_addresses(flows, cfg(n_internal=1, m_external=0))
    assert picked == {"10.0.0.2"}


def test_internal_external_partition():
    flows = repeat_pair("10.0.0.1", "192.168.5.5", 4, 0, 1)
    picked = select_top_addresses(flows, cfg(n_internal=5, m_external=5))
    assert picked == {"10.0.0.1", "192.168.5.5"}
    only_internal = select_top_addresses(flows, cfg(n_internal=5, m_external=0))
    assert only_internal == {"10.0.0.1"}


def test_fewer_available_than_requested_warns(caplog):
    flows = repeat_pair("10.0.0.1", "10.0.0.2", 1, 0, 1)
    with caplog.at_level("WARNING"):
        picked = select_top_addresses(flows, cfg(n_internal=10, m_external=0))
    assert picked == {"10.0.0.1", "10.0.0.2"}
    assert any("available" in rec.message for rec in caplog.records)


def test_scanner_exclusion_flag():
    scanner = [flow("10.0.0.9", f"10.0.7.{i}", 0, 1) for i in range(1, 21)]
    answered = repeat_pair("10.0.0.1", "10.0.0.2", 5, 0, 1) + repeat_pair("10.0.0.2", "10.0.0.1", 5, 0, 1)
    flows = scanner + answered
    with_guard = select_top_addresses(flows, cfg(n_internal=1, m_external=0, exclude_scanners=True))
    assert with_guard == {"10.0.0.1"}
    without = select_top_addresses(flows, cfg(n_internal=1, m_external=0))
    assert without == {"10.0.0.9"}


def test_reservoir_keeps_everything_when_larger_than_stream():
    flows = repeat_pair("10.0.0.1", "10.0.0.2", 5, 0, 1, spread=10)
    g = reservoir_sample_edges(flows, {"10.0.0.1", "10.0.0.2"}, cfg(k_edges=10))
    assert g.n_edges == 5
    assert g.pair_flow_count("10.0.0.1", "10.0.0.2") == 5


def test_reservoir_eligibility_filter():
    eligible = repeat_pair("10.0.0.1", "10.0.0.2", 5, 0, 1)
    outside = repeat_pair("10.0.0.1", "10.0.99.99", 5, 0, 1)
    g = reservoir_sample_edges(eligible + outside, {"10.0.0.1", "10.0.0.2"}, cfg(k_edges=100))
    assert g.n_edges == 5
    assert "10.0.99.99" not in g.vertices


def test_reservoir_empty_eligible_warns(caplog):
    flows = repeat_pair("10.0.5.5", "10.0.6.6", 3, 0, 1)
    with caplog.at_level("WARNING"):
        g = reservoir_sample_edges(flows, {"10.0.0.1", "10.0.0.2"}, cfg())
    assert g.n_edges == 0 and len(g.vertices) == 2


def test_reservoir_size_invariant(rng):
    flows = [flow("10.0.0.1", "10.0.0.2", i, i + 1) for i in range(500)]
    for k in (1, 7, 100, 499, 500, 600):
        g = reservoir_sample_edges(flows, {"10.0.0.1", "10.0.0.2"}, cfg(k_edges=k, rng_seed=rng.randrange(2**32)))
        assert g.n_edges == min(k, len(flows))


def test_reservoir_pair_fraction_across_seeds():
    # 9,000 flows on pair P and 1,000 on pair Q; with k=1,000 the retained
    # P-fraction must stay near 0.9 on average across 50 seeds.
    flows = ([flow("10.0.0.1", "10.0.0.2", i, i + 1) for i in range(9000)]
             + [flow("10.0.0.3", "10.0.0.4", i, i + 1) for i in range(1000)])
    selected = {"10.0.0.1", "10.0.0.2", "10.0.0.3", "10.0.0.4"}
    fractions = []
    for seed in range(50):
        g = reservoir_sample_edges(flows, selected, cfg(k_edges=1000, rng_seed=seed))
        fractions.append(g.pair_flow_count("10.0.0.1", "10.0.0.2") / 1000)
    mean = sum(fractions) / len(fractions)
    assert abs(mean - 0.9) <= 0.03


def test_reservoir_per_flow_binomial_bound():
    # every flow's retention frequency within 4 sigma of k/N (binomial model)
    n_flows, k, runs = 200, 50, 400
    flows = [flow("10.0.0.1", "10.0.0.2", i, i + 1) for i in range(n_flows)]
    selected = {"10.0.0.1", "10.0.0.2"}
    counts = [0] * n_flows
    for seed in range(runs):
        g = reservoir_sample_edges(flows, selected, cfg(k_edges=k, rng_seed=seed))
        for inst in g.edge_instances("10.0.0.1", "10.0.0.2"):
            counts[inst.t_start] += 1
    p = k / n_flows
    bound = 4 * math.sqrt(p * (1 - p) / runs)
    for c in counts:
        assert abs(c / runs - p) <= bound


def test_reservoir_determinism():
    flows = [flow("10.0.0.1", "10.0.0.2", i, i + 1) for i in range(300)]
    selected = {"10.0.0.1", "10.0.0.2"}
    a = reservoir_sample_edges(flows, selected, cfg(k_edges=50, rng_seed=9))
    b = reservoir_sample_edges(flows, selected, cfg(k_edges=50, rng_seed=9))
    c = reservoir_sample_edges(flows, selected, cfg(k_edges=50, rng_seed=10))
    assert a == b
    assert a != c


def test_pair_flow_count_semantics():
    flows = repeat_pair("10.0.0.1", "10.0.0.2", 3, 0, 1, spread=5)
    g = graph_from(flows)
    assert g.pair_flow_count("10.0.0.1", "10.0.0.2") == 3
    assert g.pair_flow_count("10.0.0.2", "10.0.0.1") == 0
    g2 = graph_from(flows + [flow("10.0.0.1", "10.0.0.2", 100, 101)])
    assert g2.pair_flow_count("10.0.0.1", "10.0.0.2") == 4


def test_graph_neighbors_and_edges():
    flows = [flow("10.0.0.1", "10.0.0.2", 0, 1), flow("10.0.0.1", "10.0.0.3", 0, 1),
             flow("10.0.0.2", "10.0.0.3", 0, 1)]
    g = graph_from(flows)
    assert g.out_neighbors("10.0.0.1") == ("10.0.0.2", "10.0.0.3")
    assert g.in_neighbors("10.0.0.3") == ("10.0.0.1", "10.0.0.2")
    assert g.out_degree("10.0.0.3") == 0
    assert g.has_edge("10.0.0.2", "10.0.0.3") and not g.has_edge("10.0.0.3", "10.0.0.2")


def test_graph_rejects_foreign_endpoints():
    with pytest.raises(ValueError):
        CommGraph.from_flows(["10.0.0.1"], [flow("10.0.0.1", "10.0.0.2", 0, 1)])


def test_graph_jsonl_round_trip(tmp_path):
    flows = (repeat_pair("10.0.0.1", "10.0.0.2", 3, 0, 9, spread=3)
             + [flow("10.0.0.2", "10.0.0.1", 5, 6, sport=443, dport=50000, proto=Proto.UDP)])
    g = CommGraph.from_flows(["10.0.0.1", "10.0.0.2", "10.0.0.9"], flows)
    path = tmp_path / "graph.jsonl"
    write_graph_jsonl(g, path)
    assert read_graph_jsonl(path) == g

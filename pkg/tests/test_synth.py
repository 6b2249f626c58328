import pytest

from depwalk.errors import ConfigError
from depwalk.flows import Proto
from depwalk.oracle import DepKind, DependencyRecord, OracleConfig, enumerate_all, enumerate_rr
from depwalk.synth import ScenarioConfig, generate
from depwalk.walks import cond_lr_open, cond_rev_return, cond_rr_open


def scenario(**kwargs):
    defaults = dict(n_clients=1, n_web=1, n_db=1, n_dns=1, session_rate=1.0,
                    duration=20.0, lr_web_db=True, rr_dns_web=False,
                    noise_flows=0, epsilon_ms=1000, rng_seed=3)
    defaults.update(kwargs)
    return ScenarioConfig(**defaults)


def test_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(duration=0)
    with pytest.raises(ConfigError):
        ScenarioConfig(n_clients=300)
    with pytest.raises(ConfigError):
        ScenarioConfig(latency_ms=(0, 5))


def test_lr_scenario_yields_td_and_both_dd():
    flows, truth = generate(scenario(duration=20.0))  # 20 sessions, one client
    records = enumerate_all(flows, OracleConfig(n_t_dd=10, n_t_rr=10, epsilon=1000))
    kinds = {(r.kind, r.src, r.dst) for r in records}
    assert (DepKind.DD, "10.0.0.1", "10.0.1.1") in kinds
    assert (DepKind.DD, "10.0.1.1", "10.0.2.1") in kinds
    assert (DepKind.TD, "10.0.0.1", "10.0.2.1") in kinds


def test_all_plants_off_zero_noise_is_empty():
    flows, truth = generate(scenario(lr_web_db=False, rr_dns_web=False))
    assert flows == [] and truth == []


def test_rr_not_found_when_epsilon_below_gap():
    flows, _ = generate(scenario(lr_web_db=False, rr_dns_web=True, duration=20.0))
    rr, _ = enumerate_rr(flows, OracleConfig(n_t_dd=10, n_t_rr=10, epsilon=0))
    assert rr == []
    rr, _ = enumerate_rr(flows, OracleConfig(n_t_dd=10, n_t_rr=10, epsilon=1000))
    assert rr == [DependencyRecord(DepKind.RR, "10.0.1.1", "10.0.3.1", 20)]


def test_planted_truth_subset_of_oracle_output():
    cfg = scenario(n_clients=4, n_web=2, n_db=1, n_dns=1, rr_dns_web=True,
                   session_rate=4.0, duration=12.0, noise_flows=25)
    flows, truth = generate(cfg)
    oracle_cfg = OracleConfig(n_t_dd=5, n_t_rr=5, epsilon=1000)
    found = {(r.kind, r.src, r.dst, r.via): r.witness_count
             for r in enumerate_all(flows, oracle_cfg)}
    for rec in truth:
        threshold = oracle_cfg.n_t_rr if rec.kind in (DepKind.RR, DepKind.RR3) else oracle_cfg.n_t_dd
        if rec.witness_count < threshold:
            continue
        key = (rec.kind, rec.src, rec.dst, rec.via)
        assert key in found, key
        assert found[key] >= rec.witness_count


def test_planted_flows_satisfy_their_conditions():
    cfg = scenario(rr_dns_web=True, duration=15.0)
    flows, _ = generate(cfg)
    assert len(flows) % 4 == 0
    for i in range(0, len(flows), 4):
        dns_req, dns_rep, web, db = flows[i:i + 4]
        assert cond_rev_return(dns_req, dns_rep, cfg.epsilon_ms)
        assert cond_rr_open(dns_req, web, cfg.epsilon_ms)
        assert cond_lr_open(web, db)


def test_noise_uses_disjoint_addresses():
    flows, _ = generate(scenario(noise_flows=50))
    noise = [f for f in flows if f.src_ip.startswith("172.16.")]
    assert len(noise) == 50
    planted = [f for f in flows if not f.src_ip.startswith("172.16.")]
    planted_addrs = {f.src_ip for f in planted} | {f.dst_ip for f in planted}
    noise_addrs = {f.src_ip for f in noise} | {f.dst_ip for f in noise}
    assert planted_addrs.isdisjoint(noise_addrs)
    for f in noise:
        assert f.proto in (Proto.TCP, Proto.UDP)
        assert f.t_start <= f.t_end


def test_generation_deterministic():
    cfg = scenario(rr_dns_web=True, noise_flows=30)
    assert generate(cfg) == generate(cfg)
    assert generate(cfg) != generate(scenario(rr_dns_web=True, noise_flows=30, rng_seed=4))

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from erasure_ic import gf2
from erasure_ic.channel import ChannelTrace, sample_channel_trace
from erasure_ic.converse import outer_bound_check
from erasure_ic.errors import InfeasiblePair
from erasure_ic.experiments import simulate, wilson_interval
from erasure_ic.protocol import (
    COMMON,
    DELIVERED,
    OVERHEARD,
    ProtocolConfig,
    ReceiverSide,
    Transmitter,
    build_coded_matrices,
    combine_phase2,
    decode,
    default_multicast_budget,
    draw_messages,
    replay_phase1,
    run_phase1,
    run_trial,
    run_trials,
    run_two_multicast,
    slack_unit,
    trial_seed,
)
from erasure_ic.region import solve_joint_distribution


def test_slack_unit():
    assert slack_unit(1000) == 100
    assert slack_unit(1000, "exact") == 100
    assert slack_unit(2000) == 159  # ceil(158.74)
    assert slack_unit(500) == 63
    with pytest.raises(ValueError):
        slack_unit(2000, "exact")


def test_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(m=100, p=0.0, rho=0.0)
    with pytest.raises(InfeasiblePair):
        ProtocolConfig(m=100, p=0.3, rho=-1.0)
    with pytest.raises(ValueError):
        ProtocolConfig(m=100, p=0.5, rho=-1.0, phase1_rule="printed-text")
    with pytest.raises(ValueError):
        ProtocolConfig(m=100, p=0.5, rho=0.0, payload_policy="greedy")
    with pytest.raises(ValueError):
        ProtocolConfig(m=2000, p=0.5, rho=0.0, slack_rounding="exact")
    with pytest.raises(ValueError):
        ProtocolConfig(m=0, p=0.5, rho=0.0)


def test_plan_anticorrelated_point():
    plan = ProtocolConfig(m=1000, p=0.5, rho=-1.0).plan()
    assert plan.n_common == 0 and plan.qtilde_rows == 0 and plan.phase2_slots == 0
    assert plan.branch == "p2p"
    assert plan.phase1_slots == 1000  # departures are certain when p00 = 0
    # (500 + O(m^(2/3))) / p slots of point-to-point traffic
    assert 1000 <= plan.phase3_slots <= 1000 + 2 * plan.delta
    assert plan.theory_slots == pytest.approx(2000)


def test_plan_independent_point():
    plan = ProtocolConfig(m=900, p=0.5, rho=0.0).plan()
    assert plan.branch == "none" and plan.phase3_slots == 0
    assert plan.n_common == plan.n_overheard
    assert plan.qtilde_rows == plan.n_common + plan.delta
    assert plan.theory_slots == pytest.approx(2000)
    assert abs(plan.total_slots - 2000) <= 3 * plan.delta


def test_plan_printed_rule_is_longer():
    a = ProtocolConfig(m=1000, p=0.5, rho=0.0).plan()
    b = ProtocolConfig(m=1000, p=0.5, rho=0.0, phase1_rule="printed-text").plan()
    assert b.phase1_slots == math.ceil(1000 / 0.25 + 100)
    assert b.phase1_slots > a.phase1_slots


@pytest.mark.parametrize("rho", [0.5, 1.0])
def test_budget_matched_caps_total(rho):
    cfg = ProtocolConfig(m=1000, p=0.5, rho=rho, payload_policy="budget-matched")
    plan = cfg.plan()
    assert plan.branch == "multicast"
    assert plan.total_slots <= math.ceil(plan.theory_slots + cfg.budget_slack * plan.delta)
    literal = replace(cfg, payload_policy="paper-literal").plan()
    assert literal.total_slots > plan.total_slots


def test_transmitter_conservation_and_replay():
    cfg = ProtocolConfig(m=300, p=0.5, rho=0.3, seed=5)
    plan = cfg.plan()
    msgs = draw_messages(cfg)
    mats = build_coded_matrices(plan, 1)
    trace = sample_channel_trace(plan.dist, plan.phase1_slots, np.random.default_rng(1))
    tx = Transmitter(1, msgs[0], plan, mats)
    d, c = trace.local(1)
    for t in range(len(trace)):
        tx.send()
        tx.feedback(int(d[t]), int(c[t]))
        assert tx.conservation_holds()
    _, status, departure = replay_phase1(trace, cfg.m)
    assert np.array_equal(status[0], tx.status)
    assert np.array_equal(departure[0], tx.departure)


def test_ledger_matches_transmitters():
    cfg = ProtocolConfig(m=400, p=0.5, rho=0.0, seed=3)
    ph1 = run_phase1(cfg)
    for i, tx in enumerate(ph1.transmitters):
        assert list(ph1.ledger.common[i]) == tx.common
        assert list(ph1.ledger.overheard[i]) == tx.overheard
        assert np.array_equal(ph1.ledger.status[i], tx.status)
        assert ph1.ledger.queue_size_at(i + 1, 0) == cfg.m
        assert ph1.ledger.queue_size_at(i + 1, ph1.ledger.m * 10) == len(tx.queue)


def test_status_matches_delayed_pair():
    cfg = ProtocolConfig(m=200, p=0.5, rho=0.5, seed=9)
    ph1 = run_phase1(cfg)
    trace = ph1.logs[0].trace
    for i in range(2):
        d, c = trace.local(i + 1)
        dep = ph1.ledger.departure[i]
        st = ph1.ledger.status[i]
        for bit in np.flatnonzero(dep >= 0):
            t = dep[bit]
            expect = {(1, 0): DELIVERED, (1, 1): COMMON, (0, 1): OVERHEARD}[(int(d[t]), int(c[t]))]
            assert st[bit] == expect


def test_dead_channel_raises_type_one():
    cfg = ProtocolConfig(m=8, p=0.5, rho=0.0)
    slots = cfg.plan().phase1_slots
    trace = ChannelTrace(np.zeros((slots, 4), dtype=np.uint8))
    ph1 = run_phase1(cfg, trace=trace)
    assert ph1.flags.type_one and ph1.flags.halted


def test_single_bit_delivered_in_phase_one():
    cfg = ProtocolConfig(m=1, p=0.5, rho=0.0, seed=1)
    plan = cfg.plan()
    pairs1 = [[1, 0]] + [[0, 0]] * (plan.phase1_slots - 1)
    pairs2 = [[1, 0]] + [[0, 0]] * (plan.phase1_slots - 1)
    trace = ChannelTrace.from_pairs(pairs1, pairs2)
    msgs = draw_messages(cfg)
    mats = (build_coded_matrices(plan, 1), build_coded_matrices(plan, 2))
    ph1 = run_phase1(cfg, messages=msgs, trace=trace, matrices=mats)
    for rx in (1, 2):
        res = decode([ph1.logs[rx - 1]], mats, plan, rx)
        assert res.success
        assert res.estimate[0] == msgs[rx - 1][0]


def test_erasure_free_channel_needs_retransmission():
    cfg = ProtocolConfig(m=8, p=1.0, rho=1.0, seed=2)
    plan = cfg.plan()
    msgs = draw_messages(cfg)
    mats = (build_coded_matrices(plan, 1), build_coded_matrices(plan, 2))
    ph1 = run_phase1(cfg, messages=msgs, matrices=mats)
    # phase 1 alone: every observation is X1 xor X2, so nothing is pinned down
    assert not decode([ph1.logs[0]], mats, plan, 1).success
    res = run_trial(cfg)
    assert res.success and res.phase_slots[2] > 0


def test_phase2_rows_align_with_transmitted_symbols():
    cfg = ProtocolConfig(m=600, p=0.5, rho=0.0, seed=4)
    plan = cfg.plan()
    msgs = draw_messages(cfg)
    mats = (build_coded_matrices(plan, 1), build_coded_matrices(plan, 2))
    ph1 = run_phase1(cfg, messages=msgs, matrices=mats)
    for tx in (1, 2):
        forms = combine_phase2(ph1.ledger, mats[tx - 1], plan, tx)
        assert forms.rows == plan.qtilde_rows
        t = ph1.transmitters[tx - 1]
        v1, v2 = t._coded_values()
        k = plan.qtilde_rows
        assert np.array_equal(gf2.mat_vec(forms, msgs[tx - 1]), v1[:k] ^ v2[:k])


@pytest.mark.parametrize("rho, phase", [(0.0, 2), (-0.5, 3), (0.5, 3)])
def test_receiver_forms_reproduce_transmitter_symbols(rho, phase):
    cfg = ProtocolConfig(m=500, p=0.5, rho=rho, seed=8)
    plan = cfg.plan()
    msgs = draw_messages(cfg)
    mats = (build_coded_matrices(plan, 1), build_coded_matrices(plan, 2))
    ph1 = run_phase1(cfg, messages=msgs, matrices=mats)
    side = ReceiverSide(plan, ph1.logs[0].trace, mats)
    f1, f2 = side.slot_forms(phase)
    x = np.zeros(side.n_unknowns, dtype=np.uint8)
    x[: cfg.m] = msgs[0]
    x[side.n_unknowns - cfg.m:] = msgs[1]
    packed = gf2.pack_bits(x)
    got1 = (np.bitwise_count(f1 & packed).sum(axis=1) & 1).astype(np.uint8)
    got2 = (np.bitwise_count(f2 & packed).sum(axis=1) & 1).astype(np.uint8)
    t1, t2 = ph1.transmitters
    want = (t1.phase2_symbols(), t2.phase2_symbols()) if phase == 2 else (t1.phase3_symbols(), t2.phase3_symbols())
    assert np.array_equal(got1, want[0]) and np.array_equal(got2, want[1])


def test_trial_is_deterministic():
    cfg = ProtocolConfig(m=300, p=0.5, rho=-0.5, seed=77)
    a, b = run_trial(cfg), run_trial(cfg)
    assert a == b


def test_trial_seeds_and_parallel_pool():
    assert trial_seed(1, 2) == trial_seed(1, 2) != trial_seed(1, 3)
    cfg = ProtocolConfig(m=120, p=0.5, rho=0.0, seed=3)
    serial = run_trials(cfg, 4)
    pooled = run_trials(cfg, 4, workers=2)
    assert [r.rates for r in serial] == [r.rates for r in pooled]
    with pytest.raises(ValueError):
        run_trials(cfg, 0)


@pytest.mark.parametrize("rho, policy", [(-1.0, "paper-literal"), (0.0, "paper-literal"), (1.0, "budget-matched")])
def test_successful_decodes_are_exact_and_inside_region(rho, policy):
    cfg = ProtocolConfig(m=500, p=0.5, rho=rho, seed=21, payload_policy=policy)
    results = run_trials(cfg, 6)
    assert sum(r.success for r in results) >= 5
    for r in results:
        assert not any(r.wrong)
        if r.success:
            assert outer_bound_check(r.rates, cfg.p, cfg.rho).inside


def test_two_multicast_empty_payload():
    log = run_two_multicast((np.zeros(0, np.uint8), np.zeros(0, np.uint8)), solve_joint_distribution(0.5, 0.0))
    assert log.success and log.slots == 0


@pytest.mark.parametrize("k1, k2", [(40, 0), (40, 40), (25, 60)])
def test_two_multicast_erasure_free_needs_joint_rank(k1, k2):
    # p = 1: each slot adds one XOR equation over the k1 + k2 joint bits
    rng = np.random.default_rng(k1 * 100 + k2)
    dist = solve_joint_distribution(1.0, 1.0)
    payloads = (rng.integers(0, 2, k1, dtype=np.uint8), rng.integers(0, 2, k2, dtype=np.uint8))
    log = run_two_multicast(payloads, dist, budget=2 * (k1 + k2) + 40, rng=rng)
    assert log.success
    assert k1 + k2 <= log.slots <= k1 + k2 + 12


def test_two_multicast_rate_pair():
    dist = solve_joint_distribution(0.5, 0.0)
    rng = np.random.default_rng(3)
    k = 300
    ok = 0
    for _ in range(50):
        payloads = (rng.integers(0, 2, k, dtype=np.uint8), rng.integers(0, 2, k, dtype=np.uint8))
        log = run_two_multicast(payloads, dist, rng=rng)
        ok += log.success and log.slots <= 800 + 5 * k ** (2 / 3)
    assert ok >= 49
    assert default_multicast_budget(k, k, 0.5) == math.ceil(800 + 5 * k ** (2 / 3))


def test_two_multicast_budget_exhaustion_is_a_flag():
    dist = solve_joint_distribution(0.5, 0.0)
    rng = np.random.default_rng(0)
    log = run_two_multicast((np.ones(50, np.uint8), np.ones(50, np.uint8)), dist, budget=60, rng=rng)
    assert not log.success and log.slots == 60


def test_summary_reports_soundness():
    s = simulate(ProtocolConfig(m=200, p=0.5, rho=0.0, seed=1), 4)
    assert s.wrong_decodes == 0 and s.outside_region == 0
    assert s.ok  # targets are only attached from m = 2000 on
    assert set(s.row()) >= {"err_I", "decode_fail", "mean_slots"}


def test_wilson_interval():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0.03 < hi < 0.04
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi

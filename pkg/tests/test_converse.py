from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from erasure_ic.converse import (
    EncoderTable,
    all_single_slot_encoders,
    check_identity,
    check_lemma,
    conditional_entropy,
    copy_encoder,
    enumerate_entropy,
    lemma_grid,
    outer_bound_check,
    phase1_encoder,
    random_encoder,
    search_lemma,
    silent_encoder,
)
from erasure_ic.errors import BudgetExceeded
from erasure_ic.region import feasible_set, solve_joint_distribution


# ------------------------------------------------------------------ oracle
# Plain-loop enumeration that shares nothing with the package code.


def _joint(p, rho):
    q = 1 - p
    p11 = p * q * rho + p * p
    p10 = p - p11
    return {(0, 0): 1 - p11 - 2 * p10, (0, 1): p10, (1, 0): p10, (1, 1): p11}


def _h(counter):
    tot = sum(counter.values())
    return -sum(c / tot * math.log2(c / tot) for c in counter.values() if c)


def oracle_entropies(enc1, enc2, n, m1, m2, p, rho):
    law = _joint(p, rho)
    h1 = h2 = 0.0
    slots = list(itertools.product((0, 1), repeat=4))  # g11, g12, g21, g22
    for hist in itertools.product(slots, repeat=n):
        pr = 1.0
        for g11, g12, g21, g22 in hist:
            pr *= law[(g11, g12)] * law[(g22, g21)]
        if pr == 0:
            continue
        for w2 in range(2 ** m2):
            c1, c2 = {}, {}
            for w1 in range(2 ** m1):
                y1, y2 = [], []
                for t, (g11, g12, g21, g22) in enumerate(hist):
                    x1 = enc1(w1, t, [(a, b) for a, b, _, _ in hist[:t]])
                    x2 = enc2(w2, t, [(d, c) for _, _, c, d in hist[:t]])
                    y1.append(g11 * x1 ^ g21 * x2)
                    y2.append(g12 * x1 ^ g22 * x2)
                c1[tuple(y1)] = c1.get(tuple(y1), 0) + 1
                c2[tuple(y2)] = c2.get(tuple(y2), 0) + 1
            h1 += pr / 2 ** m2 * _h(c1)
            h2 += pr / 2 ** m2 * _h(c2)
    return h2, h1


def _table_fn(enc: EncoderTable, i: int):
    def f(w, t, local_hist):
        idx = 0
        for d, c in local_hist:
            idx = idx * 4 + 2 * d + c
        return int(enc.tables[i][t][w, idx])

    return f


# ------------------------------------------------------------------- values


def test_uncoded_single_slot():
    enc = EncoderTable(1, (1, 1), ((np.array([[0], [1]], np.uint8),), (np.array([[0], [1]], np.uint8),)))
    for rho in (-1.0, 0.0, 0.5, 1.0):
        r = enumerate_entropy(enc, solve_joint_distribution(0.5, rho))
        assert (r.h2, r.h1) == pytest.approx((0.5, 0.5), abs=1e-12)
    assert check_lemma(enc, solve_joint_distribution(0.5, 0.0)) == pytest.approx(1 / 6, abs=1e-12)


def test_silent_encoder():
    r = enumerate_entropy(silent_encoder(2), solve_joint_distribution(0.5, 0.0))
    assert r.h1 == 0.0 and r.h2 == 0.0 and r.margin == 0.0


def test_copy_encoder_frozen_oracle():
    # 0.75 = 1 - Pr(the relevant link is off in both slots), from the loop oracle
    r = enumerate_entropy(copy_encoder(2), solve_joint_distribution(0.5, 0.5))
    assert (r.h2, r.h1) == pytest.approx((0.75, 0.75), abs=1e-12)
    assert r.margin == pytest.approx(0.75 - 0.75 / 1.25, abs=1e-12)


def test_queue_encoder_frozen_oracle():
    r = enumerate_entropy(phase1_encoder(3, (2, 2)), solve_joint_distribution(0.75, 0.0))
    assert (r.h2, r.h1) == pytest.approx((1.5908203125, 1.5908203125), abs=1e-12)
    r = enumerate_entropy(phase1_encoder(2, (2, 2)), solve_joint_distribution(0.5, 0.5))
    assert (r.h2, r.h1) == pytest.approx((1.0, 1.0), abs=1e-12)


@pytest.mark.parametrize("p, rho", [(0.5, 0.5), (0.25, 1.0), (0.75, 0.0), (0.5, -0.5)])
def test_random_tables_match_loop_oracle(p, rho):
    rng = np.random.default_rng(int(p * 100 + rho * 10 + 50))
    for m in ((1, 1), (2, 1), (1, 2)):
        enc = random_encoder(2, m, rng)
        got = enumerate_entropy(enc, solve_joint_distribution(p, rho))
        want = oracle_entropies(_table_fn(enc, 0), _table_fn(enc, 1), 2, m[0], m[1], p, rho)
        assert (got.h2, got.h1) == pytest.approx(want, abs=1e-12)


def test_full_csi_table_matches_oracle():
    rng = np.random.default_rng(8)
    enc = random_encoder(2, (1, 1), rng, full_csi=True)

    # the slot-2 column is the full first-slot state 8*G11 + 4*G12 + 2*G21 + G22
    law = _joint(0.5, 0.5)
    h1 = h2 = 0.0
    slots = list(itertools.product((0, 1), repeat=4))
    for hist in itertools.product(slots, repeat=2):
        pr = np.prod([law[(a, b)] * law[(d, c)] for a, b, c, d in hist])
        idx = 8 * hist[0][0] + 4 * hist[0][1] + 2 * hist[0][2] + hist[0][3]
        for w2 in range(2):
            c1, c2 = {}, {}
            for w1 in range(2):
                xs1 = [int(enc.tables[0][0][w1, 0]), int(enc.tables[0][1][w1, idx])]
                xs2 = [int(enc.tables[1][0][w2, 0]), int(enc.tables[1][1][w2, idx])]
                y1 = tuple(g[0] * a ^ g[2] * b for g, a, b in zip(hist, xs1, xs2))
                y2 = tuple(g[1] * a ^ g[3] * b for g, a, b in zip(hist, xs1, xs2))
                c1[y1] = c1.get(y1, 0) + 1
                c2[y2] = c2.get(y2, 0) + 1
            h1 += pr / 2 * _h(c1)
            h2 += pr / 2 * _h(c2)
    got = enumerate_entropy(enc, solve_joint_distribution(0.5, 0.5))
    assert (got.h2, got.h1) == pytest.approx((h2, h1), abs=1e-12)


def test_entropy_bounds_and_conditioning():
    rng = np.random.default_rng(1)
    for k in range(40):
        enc = random_encoder(2, ((1, 1), (2, 2))[k % 2], rng, full_csi=bool(k % 3 == 0))
        dist = solve_joint_distribution(0.5, 0.0)
        r = enumerate_entropy(enc, dist)
        assert 0 <= r.h1 <= enc.n + 1e-12 and 0 <= r.h2 <= enc.n + 1e-12
        for rx in (1, 2):
            assert conditional_entropy(enc, dist, rx, given_w2=True) <= conditional_entropy(enc, dist, rx, given_w2=False) + 1e-12


def test_budget_enforced():
    with pytest.raises(BudgetExceeded):
        enumerate_entropy(silent_encoder(5), solve_joint_distribution(0.5, 0.0))
    with pytest.raises(BudgetExceeded):
        enumerate_entropy(silent_encoder(1, (3, 2)), solve_joint_distribution(0.5, 0.0))


def test_table_shape_validation():
    with pytest.raises(ValueError):
        EncoderTable(2, (1, 1), ((np.zeros((2, 1), np.uint8),), (np.zeros((2, 1), np.uint8),)))


def test_single_slot_enumeration_count():
    assert len(all_single_slot_encoders((1, 1))) == 16
    assert len(all_single_slot_encoders((2, 1))) == 64


def test_lemma_margin_nonnegative_small_search():
    res = search_lemma(random_tables=300, seed=4)
    assert res.counterexamples == []
    assert res.min_margin >= -1e-9
    assert len(res.per_point) == len(lemma_grid()) == 10


def test_lemma_requires_positive_p():
    with pytest.raises(ValueError):
        check_lemma(copy_encoder(1), solve_joint_distribution(0.0, 0.0))


@pytest.mark.parametrize("p, rho", [(0.5, 0.0), (0.5, 1.0), (1.0, 1.0), (0.0, 0.0), (0.5, -1.0)])
def test_identity_points(p, rho):
    assert check_identity(p, rho) < 1e-15


def test_identity_grid():
    worst = 0.0
    for rho in np.linspace(-1, 1, 9):
        s = feasible_set(rho)
        for p in np.linspace(s.lo, s.hi, 50):
            worst = max(worst, check_identity(float(p), float(rho)))
    assert worst < 1e-12


def test_outer_bound_examples():
    v = outer_bound_check((0.5, 0.5), 0.5, -1.0)
    assert v.inside
    assert abs(v.slack["R1+bR2"]) < 1e-12 and abs(v.slack["R2+bR1"]) < 1e-12
    v = outer_bound_check((0.45, 0.45), 0.5, 0.0)
    assert v.inside and abs(v.slack["R1+bR2"]) < 1e-12
    v = outer_bound_check((0.5, 0.5), 0.5, 1.0)
    assert not v.inside and v.slack["R1+bR2"] == pytest.approx(-0.25)

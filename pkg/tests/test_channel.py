from __future__ import annotations

import numpy as np
import pytest

from erasure_ic.channel import ChannelTrace, PacketStatus, classify_packet, sample_channel_trace
from erasure_ic.region import solve_joint_distribution

POINTS = [(0.5, 0.0), (0.5, -1.0), (0.5, 0.5), (0.25, 1.0), (0.5, -0.5), (0.75, 0.3)]
SLOTS = 100_000


def _within_sigma(count: int, n: int, prob: float, k: float = 4.0) -> bool:
    sd = np.sqrt(n * prob * (1 - prob))
    return abs(count - n * prob) <= k * sd + 1e-9


@pytest.mark.parametrize("p, rho", POINTS)
def test_cell_frequencies(p, rho):
    dist = solve_joint_distribution(p, rho)
    tr = sample_channel_trace(dist, SLOTS, np.random.default_rng(123))
    for tx in (1, 2):
        direct, cross = tr.local(tx)
        idx = 2 * direct.astype(int) + cross
        counts = np.bincount(idx, minlength=4)
        for cell, prob in enumerate(dist.cells):
            assert _within_sigma(int(counts[cell]), SLOTS, float(prob)), (tx, cell, counts[cell], prob)


def test_transmitters_are_independent():
    dist = solve_joint_distribution(0.5, 0.5)
    tr = sample_channel_trace(dist, SLOTS, np.random.default_rng(7))
    g11, g22 = tr.g[:, 0].astype(bool), tr.g[:, 3].astype(bool)
    assert _within_sigma(int(np.sum(g11 & g22)), SLOTS, 0.25)
    g12, g21 = tr.g[:, 1].astype(bool), tr.g[:, 2].astype(bool)
    assert _within_sigma(int(np.sum(g12 & g21)), SLOTS, 0.25)


def test_sampling_is_reproducible():
    dist = solve_joint_distribution(0.5, 0.0)
    a = sample_channel_trace(dist, 500, np.random.default_rng(5))
    b = sample_channel_trace(dist, 500, np.random.default_rng(5))
    assert np.array_equal(a.g, b.g)
    assert len(sample_channel_trace(dist, 0, np.random.default_rng(5))) == 0


def test_views_and_from_pairs():
    tr = ChannelTrace.from_pairs([[1, 0], [0, 1]], [[0, 1], [1, 1]])
    assert tr.g.tolist() == [[1, 0, 1, 0], [0, 1, 1, 1]]
    d, c = tr.local(2)
    assert d.tolist() == [0, 1] and c.tolist() == [1, 1]
    own, intf = tr.into_rx(1)
    assert own.tolist() == [1, 0] and intf.tolist() == [1, 1]
    own, intf = tr.into_rx(2)
    assert own.tolist() == [0, 1] and intf.tolist() == [0, 1]
    assert len(tr.slice(1, 2)) == 1


@pytest.mark.parametrize("direct, cross, status", [
    (1, 0, PacketStatus.DELIVERED),
    (1, 1, PacketStatus.COMMON),
    (0, 1, PacketStatus.OVERHEARD),
    (0, 0, PacketStatus.STAY),
])
def test_classify(direct, cross, status):
    assert classify_packet(direct, cross) is status

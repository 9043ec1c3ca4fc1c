"""Correlated Bernoulli link gains and per-packet status updates."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .region import JointLinkDistribution

# column order of ChannelTrace.g
G11, G12, G21, G22 = 0, 1, 2, 3


@dataclass(frozen=True)
class ChannelTrace:
    """Per-slot gains ``g[t] = (G11, G12, G21, G22)`` as ``uint8``."""

    g: np.ndarray

    def __len__(self) -> int:
        return self.g.shape[0]

    def local(self, tx: int) -> tuple[np.ndarray, np.ndarray]:
        """(direct, cross) gain sequences seen by transmitter ``tx`` (1 or 2)."""
        if tx == 1:
            return self.g[:, G11], self.g[:, G12]
        return self.g[:, G22], self.g[:, G21]

    def into_rx(self, rx: int) -> tuple[np.ndarray, np.ndarray]:
        """(own-link, interference-link) gains arriving at receiver ``rx``."""
        if rx == 1:
            return self.g[:, G11], self.g[:, G21]
        return self.g[:, G22], self.g[:, G12]

    def slice(self, start: int, stop: int) -> ChannelTrace:
        return ChannelTrace(self.g[start:stop])

    @classmethod
    def from_pairs(cls, tx1: np.ndarray, tx2: np.ndarray) -> ChannelTrace:
        """Build from ``(direct, cross)`` columns of each transmitter."""
        tx1 = np.asarray(tx1, dtype=np.uint8).reshape(-1, 2)
        tx2 = np.asarray(tx2, dtype=np.uint8).reshape(-1, 2)
        g = np.column_stack([tx1[:, 0], tx1[:, 1], tx2[:, 1], tx2[:, 0]])
        return cls(np.ascontiguousarray(g, dtype=np.uint8))


def sample_channel_trace(dist: JointLinkDistribution, slots: int, rng: np.random.Generator) -> ChannelTrace:
    """I.i.d. slots; the two transmitters' pairs are independent draws from ``dist``."""
    if slots == 0:
        return ChannelTrace(np.zeros((0, 4), dtype=np.uint8))
    cells = dist.cells / dist.cells.sum()
    idx = rng.choice(4, size=(slots, 2), p=cells)
    direct = (idx >> 1).astype(np.uint8)
    cross = (idx & 1).astype(np.uint8)
    g = np.column_stack([direct[:, 0], cross[:, 0], cross[:, 1], direct[:, 1]])
    return ChannelTrace(np.ascontiguousarray(g))


class PacketStatus(Enum):
    STAY = "Q_i->i"
    DELIVERED = "Q_i->F"
    COMMON = "Q_i,1"
    OVERHEARD = "Q_i,2"


def classify_packet(g_direct: int, g_cross: int) -> PacketStatus:
    """Queue a just-sent bit moves to, given the gains in its slot."""
    if g_direct and g_cross:
        return PacketStatus.COMMON
    if g_direct:
        return PacketStatus.DELIVERED
    if g_cross:
        return PacketStatus.OVERHEARD
    return PacketStatus.STAY

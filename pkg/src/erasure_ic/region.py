"""Closed-form capacity region of the two-user erasure IC with delayed,
spatially correlated CSIT.

Everything here is a pure function of ``(p, rho)`` in double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateP, DomainError, EmptyGrid, InfeasiblePair

TOL = 1e-12


@dataclass(frozen=True)
class FeasibleInterval:
    lo: float
    hi: float

    def __contains__(self, p: float) -> bool:
        return self.lo - TOL <= p <= self.hi + TOL

    @property
    def is_singleton(self) -> bool:
        return self.hi - self.lo <= TOL


@dataclass(frozen=True)
class JointLinkDistribution:
    """Law of one transmitter's (direct, cross) gain pair.

    ``p_ij = Pr(G_direct = i, G_cross = j)``. Both transmitters share it.
    """

    p: float
    rho: float
    p00: float
    p01: float
    p10: float
    p11: float

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def cells(self) -> np.ndarray:
        """Cell probabilities indexed by ``2 * direct + cross``."""
        return np.array([self.p00, self.p01, self.p10, self.p11])

    @property
    def departure_prob(self) -> float:
        """Probability that at least one outgoing link is on."""
        return 1.0 - self.p00


@dataclass(frozen=True)
class HalfPlane:
    """Constraint ``a * R1 + b * R2 <= c``."""

    a: float
    b: float
    c: float
    label: str = ""

    def slack(self, r1: float, r2: float) -> float:
        return self.c - (self.a * r1 + self.b * r2)


@dataclass(frozen=True)
class CapacityRegion:
    p: float
    rho: float
    beta: float | None
    constraints: tuple[HalfPlane, ...] = field(default_factory=tuple)

    @property
    def is_degenerate(self) -> bool:
        return self.beta is None

    def contains(self, r1: float, r2: float, tol: float = TOL) -> bool:
        if r1 < -tol or r2 < -tol:
            return False
        return all(h.slack(r1, r2) >= -tol for h in self.constraints)

    def corners(self) -> list[tuple[float, float]]:
        """Boundary vertices in the open quadrant plus the two axis corners,
        ordered from the ``(p, 0)`` side to the ``(0, p)`` side.

        The symmetric point ``(r, r)`` is always listed, even when it sits in
        the middle of a flat edge (``beta == 1``).
        """
        if self.is_degenerate:
            return [(0.0, 0.0)]
        lines = list(self.constraints) + [
            HalfPlane(1.0, 0.0, 0.0, "R1>=0"),
            HalfPlane(0.0, 1.0, 0.0, "R2>=0"),
        ]
        pts: list[tuple[float, float]] = []
        for h, g in combinations(lines, 2):
            det = h.a * g.b - h.b * g.a
            if abs(det) < TOL:
                continue
            x = (h.c * g.b - h.b * g.c) / det
            y = (h.a * g.c - h.c * g.a) / det
            if self.contains(x, y, tol=1e-10):
                pts.append((max(x, 0.0) + 0.0, max(y, 0.0) + 0.0))  # + 0.0 drops -0.0
        r = max_symmetric_rate(self.p, self.rho)
        pts.append((r, r))
        pts = [pt for pt in pts if pt[0] > TOL or pt[1] > TOL]
        pts.sort(key=lambda pt: math.atan2(pt[1], pt[0]))
        out: list[tuple[float, float]] = []
        for pt in pts:
            if not out or math.dist(pt, out[-1]) > 1e-10:
                out.append(pt)
        return out


def _check_rho(rho: float) -> None:
    if not (-1.0 <= rho <= 1.0) or math.isnan(rho):
        raise DomainError(f"correlation {rho!r} outside [-1, 1]")


def feasible_set(rho: float) -> FeasibleInterval:
    """Interval of link probabilities compatible with correlation ``rho``."""
    _check_rho(rho)
    if rho == 1.0:
        return FeasibleInterval(0.0, 1.0)
    lo = max(0.0, -rho / (1.0 - rho))
    hi = min(1.0, 1.0 / (1.0 - rho))
    return FeasibleInterval(lo, hi)


def _check_pair(p: float, rho: float) -> None:
    _check_rho(rho)
    if not (0.0 <= p <= 1.0) or p not in feasible_set(rho):
        raise InfeasiblePair(f"p={p!r} is not feasible for rho={rho!r} (S_rho={feasible_set(rho)})")


def solve_joint_distribution(p: float, rho: float) -> JointLinkDistribution:
    _check_pair(p, rho)
    q = 1.0 - p
    p11 = p * q * rho + p * p
    p10 = p - p11
    p01 = p - p11
    p00 = 1.0 - p11 - p10 - p01
    # Round-off at the edges of S_rho can leave cells at -1e-17.
    cells = [0.0 if -TOL < v < 0.0 else v for v in (p00, p01, p10, p11)]
    if any(v < 0.0 or v > 1.0 for v in cells):
        raise InfeasiblePair(f"joint law for p={p}, rho={rho} leaves [0, 1]: {cells}")
    return JointLinkDistribution(p, rho, *cells)


def beta(p: float, rho: float) -> float:
    _check_pair(p, rho)
    if p == 0.0:
        raise DegenerateP("beta is undefined at p = 0; the region is the origin")
    # (2p - p q rho - p^2) / p with p cancelled, which stays accurate for tiny p
    return 2.0 - (1.0 - p) * rho - p


def capacity_region(p: float, rho: float) -> CapacityRegion:
    _check_pair(p, rho)
    if p == 0.0:
        return CapacityRegion(p, rho, None, (
            HalfPlane(1.0, 0.0, 0.0, "R1<=p"),
            HalfPlane(0.0, 1.0, 0.0, "R2<=p"),
        ))
    b = beta(p, rho)
    q = 1.0 - p
    c = b * (1.0 - q * q)
    return CapacityRegion(p, rho, b, (
        HalfPlane(1.0, 0.0, p, "R1<=p"),
        HalfPlane(0.0, 1.0, p, "R2<=p"),
        HalfPlane(1.0, b, c, "R1+bR2"),
        HalfPlane(b, 1.0, c, "R2+bR1"),
    ))


def max_symmetric_rate(p: float, rho: float) -> float:
    _check_pair(p, rho)
    if p == 0.0:
        return 0.0
    b = beta(p, rho)
    q = 1.0 - p
    return min(p, b * (1.0 - q * q) / (1.0 + b))


def total_time_factor(p: float, rho: float) -> float:
    """Slots per message bit needed at the symmetric point:
    ``max{1/p, (1 + beta) / (beta (1 - q^2))}``."""
    b = beta(p, rho)
    q = 1.0 - p
    return max(1.0 / p, (1.0 + b) / (b * (1.0 - q * q)))


def boundary_polyline(region: CapacityRegion, resolution: int = 2) -> list[tuple[float, float]]:
    """Outer boundary from ``(p, 0)`` to ``(0, p)``.

    All corners are kept; extra points are spread by arc length until at
    least ``resolution`` points are emitted.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    corners = region.corners()
    if len(corners) == 1:
        return corners
    seg = [math.dist(a, b) for a, b in zip(corners, corners[1:])]
    total = sum(seg)
    extra = max(resolution - len(corners), 0)
    # largest-remainder split of the extra points across segments
    quota = [extra * length / total if total > 0 else 0.0 for length in seg]
    counts = [int(math.floor(x)) for x in quota]
    order = sorted(range(len(seg)), key=lambda i: quota[i] - counts[i], reverse=True)
    for i in order[: extra - sum(counts)]:
        counts[i] += 1
    out = [corners[0]]
    for (a, b), k in zip(zip(corners, corners[1:]), counts):
        for j in range(1, k + 1):
            t = j / (k + 1)
            out.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
        out.append(b)
    return out


@dataclass(frozen=True)
class SumRateCurve:
    rho: float
    points: tuple[tuple[float, float], ...]
    skipped: tuple[float, ...] = ()


def sum_rate_curve(rho: float, p_grid: Iterable[float]) -> SumRateCurve:
    _check_rho(rho)
    s = feasible_set(rho)
    pts, skipped = [], []
    for p in p_grid:
        p = float(p)
        if 0.0 <= p <= 1.0 and p in s:
            # Snap to the interval so endpoints never trip the feasibility check.
            p = min(max(p, s.lo), s.hi)
            pts.append((p, 2.0 * max_symmetric_rate(p, rho)))
        else:
            skipped.append(p)
    if not pts:
        raise EmptyGrid(f"no feasible p in grid for rho={rho}")
    return SumRateCurve(rho, tuple(pts), tuple(skipped))


def feasible_grid(rho: float, step: float = 0.05) -> list[float]:
    """Multiples of ``step`` inside S_rho, plus both interval endpoints."""
    s = feasible_set(rho)
    n = int(round(1.0 / step))
    vals = {round(k * step, 12) for k in range(n + 1) if k * step in s}
    vals.update({s.lo, s.hi})
    return sorted(v for v in vals if s.lo <= v <= s.hi)


def fig1_regions(p: float = 0.5, rhos: Sequence[float] = (-1.0, 0.0, 1.0)) -> dict[float, CapacityRegion]:
    """Regions for the nested comparison at fixed ``p``.

    At ``p = 0.5`` the ``rho = 1`` region equals the no-CSIT region and the
    ``rho = -1`` region equals the instantaneous-CSIT one.
    """
    return {rho: capacity_region(p, rho) for rho in rhos}

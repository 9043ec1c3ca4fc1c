"""Exact small-blocklength entropies for the genie-aided outer bound.

An encoder is a lookup table per transmitter and slot, addressed by the own
message and the delayed channel history. Everything is enumerated exactly:
messages are uniform, slots are independent, and the two transmitters' link
pairs are independent draws from the same joint law.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded
from .region import (
    JointLinkDistribution,
    beta,
    capacity_region,
    solve_joint_distribution,
)

MAX_BLOCKLENGTH = 4
MAX_MESSAGE_BITS = 4

# A slot's full state packs (G11, G12, G21, G22) as 8*G11 + 4*G12 + 2*G21 + G22.
_STATES = np.arange(16)
_G11 = (_STATES >> 3) & 1
_G12 = (_STATES >> 2) & 1
_G21 = (_STATES >> 1) & 1
_G22 = _STATES & 1
# local digit of each transmitter: 2 * direct + cross
_LOCAL = (2 * _G11 + _G12, 2 * _G22 + _G21)


@dataclass(frozen=True)
class EncoderTable:
    """``tables[i][t]`` has shape ``(2**m_i, H_t)``.

    With local CSI ``H_t = 4**t`` and the column is the base-4 number of the
    transmitter's own (direct, cross) digits so far, oldest digit most
    significant. With ``full_csi`` the history covers all four gains and
    ``H_t = 16**t``.
    """

    n: int
    m: tuple[int, int]
    tables: tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...]]
    full_csi: bool = False
    name: str = ""

    def __post_init__(self):
        base = 16 if self.full_csi else 4
        for i in range(2):
            if len(self.tables[i]) != self.n:
                raise ValueError(f"transmitter {i + 1} has {len(self.tables[i])} slots, expected {self.n}")
            for t, tab in enumerate(self.tables[i]):
                if tab.shape != (2 ** self.m[i], base ** t):
                    raise ValueError(f"table {i + 1},{t} has shape {tab.shape}, expected {(2 ** self.m[i], base ** t)}")

    def describe(self) -> dict:
        return {
            "n": self.n,
            "m": list(self.m),
            "full_csi": self.full_csi,
            "name": self.name,
            "tables": [[tab.astype(int).tolist() for tab in per_tx] for per_tx in self.tables],
        }


def _check_budget(n: int, m: tuple[int, int]) -> None:
    if n < 1 or n > MAX_BLOCKLENGTH or min(m) < 0 or sum(m) > MAX_MESSAGE_BITS:
        raise BudgetExceeded(
            f"exact enumeration supports 1 <= n <= {MAX_BLOCKLENGTH} and m1 + m2 <= {MAX_MESSAGE_BITS}; got n={n}, m={m}"
        )


def silent_encoder(n: int, m: tuple[int, int] = (1, 1)) -> EncoderTable:
    tabs = tuple(tuple(np.zeros((2 ** m[i], 4 ** t), dtype=np.uint8) for t in range(n)) for i in range(2))
    return EncoderTable(n, m, tabs, name="silent")


def copy_encoder(n: int) -> EncoderTable:
    """One message bit per transmitter, repeated in every slot."""
    tabs = tuple(tuple(np.repeat(np.array([[0], [1]], dtype=np.uint8), 4 ** t, axis=1) for t in range(n)) for _ in range(2))
    return EncoderTable(n, (1, 1), tabs, name="copy")


def phase1_encoder(n: int, m: tuple[int, int]) -> EncoderTable:
    """Head-of-queue retransmission driven by the own delayed link pair.

    A bit leaves the queue once either outgoing link was on in its slot;
    the transmitter sends zeros after the queue is empty.
    """
    tabs = []
    for i in range(2):
        per = []
        for t in range(n):
            hist = np.arange(4 ** t)
            # a digit d leaves the queue iff d != 0
            sent = np.zeros(hist.size, dtype=np.int64)
            h = hist.copy()
            for _ in range(t):
                sent += (h % 4) != 0
                h //= 4
            msgs = np.arange(2 ** m[i])[:, None]
            bit = (msgs >> np.minimum(sent, max(m[i] - 1, 0))[None, :]) & 1
            per.append(np.where(sent[None, :] < m[i], bit, 0).astype(np.uint8))
        tabs.append(tuple(per))
    return EncoderTable(n, m, tuple(tabs), name="phase1")


def random_encoder(n: int, m: tuple[int, int], rng: np.random.Generator, full_csi: bool = False) -> EncoderTable:
    base = 16 if full_csi else 4
    tabs = tuple(
        tuple(rng.integers(0, 2, size=(2 ** m[i], base ** t), dtype=np.uint8) for t in range(n)) for i in range(2)
    )
    return EncoderTable(n, m, tabs, full_csi=full_csi, name="random")


def all_single_slot_encoders(m: tuple[int, int] = (1, 1)) -> list[EncoderTable]:
    """Every deterministic encoder pair at blocklength 1 (no history yet)."""
    maps = [
        [np.array(bits, dtype=np.uint8)[:, None] for bits in itertools.product((0, 1), repeat=2 ** m[i])]
        for i in range(2)
    ]
    return [EncoderTable(1, m, ((a,), (b,)), name="exhaustive") for a in maps[0] for b in maps[1]]


# ------------------------------------------------------------------ entropy


@dataclass(frozen=True)
class _Histories:
    """All ``16**n`` channel histories and, per slot, their history indices."""

    n: int
    states: np.ndarray  # (NG, n) full slot states
    local_idx: tuple[list[np.ndarray], list[np.ndarray]]
    full_idx: list[np.ndarray]


_HIST_CACHE: dict[int, _Histories] = {}


def _histories(n: int) -> _Histories:
    if n not in _HIST_CACHE:
        grid = np.array(list(itertools.product(range(16), repeat=n)), dtype=np.int64).reshape(-1, n)
        local = ([], [])
        full = []
        for t in range(n):
            for i in range(2):
                idx = np.zeros(grid.shape[0], dtype=np.int64)
                for s in range(t):
                    idx = idx * 4 + _LOCAL[i][grid[:, s]]
                local[i].append(idx)
            idx = np.zeros(grid.shape[0], dtype=np.int64)
            for s in range(t):
                idx = idx * 16 + grid[:, s]
            full.append(idx)
        _HIST_CACHE[n] = _Histories(n, grid, local, full)
    return _HIST_CACHE[n]


def history_probabilities(n: int, dist: JointLinkDistribution) -> np.ndarray:
    """Probability of every full channel history, in ``_histories`` order."""
    cells = dist.cells
    slot = cells[2 * _G11 + _G12] * cells[2 * _G22 + _G21]
    h = _histories(n)
    return np.prod(slot[h.states], axis=1)


def _outputs(enc: EncoderTable) -> tuple[np.ndarray, np.ndarray]:
    """Received sequences as integers, shape ``(M2, NG, M1)`` for each receiver."""
    h = _histories(enc.n)
    m1, m2 = 2 ** enc.m[0], 2 ** enc.m[1]
    y1 = np.zeros((m2, h.states.shape[0], m1), dtype=np.int64)
    y2 = np.zeros_like(y1)
    for t in range(enc.n):
        idx = (h.full_idx[t], h.full_idx[t]) if enc.full_csi else (h.local_idx[0][t], h.local_idx[1][t])
        x1 = enc.tables[0][t][:, idx[0]].T.astype(np.int64)  # (NG, M1)
        x2 = enc.tables[1][t][:, idx[1]].astype(np.int64)  # (M2, NG)
        s = h.states[:, t]
        a1 = (_G11[s][:, None] * x1)[None, :, :] ^ (_G21[s][None, :] * x2)[:, :, None]
        a2 = (_G12[s][:, None] * x1)[None, :, :] ^ (_G22[s][None, :] * x2)[:, :, None]
        y1 = (y1 << 1) | a1
        y2 = (y2 << 1) | a2
    return y1, y2


def _row_entropy(values: np.ndarray) -> np.ndarray:
    """Entropy in bits of the uniform distribution over the last axis' entries."""
    k = values.shape[-1]
    # each entry weighs 1/k and sits in a class of size c, so H = -mean(log2(c / k))
    c = (values[..., :, None] == values[..., None, :]).sum(axis=-1)
    return -np.log2(c / k).mean(axis=-1)


def _cond_entropy_rows(y: np.ndarray, given_w2: bool) -> np.ndarray:
    """Per-history entropy ``H(Y | G = g [, W2])`` averaged over ``W2``."""
    if given_w2:
        return _row_entropy(y).mean(axis=0)
    # W2 is uniform and independent of W1: pool all (w2, w1) pairs
    m2, ng, m1 = y.shape
    pooled = np.transpose(y, (1, 0, 2)).reshape(ng, m2 * m1)
    return _row_entropy(pooled)


@dataclass(frozen=True)
class EntropyReport:
    h2: float  # H(Y2^n | W2, G^n)
    h1: float  # H(Y1^n | W2, G^n)
    beta: float
    n: int

    @property
    def margin(self) -> float:
        return self.h2 - self.h1 / self.beta


@dataclass(frozen=True)
class EntropyProfile:
    """Per-history conditional entropies of one encoder, reusable across laws."""

    n: int
    h2_rows: np.ndarray
    h1_rows: np.ndarray

    def report(self, dist: JointLinkDistribution) -> EntropyReport:
        w = history_probabilities(self.n, dist)
        b = beta(dist.p, dist.rho)
        return EntropyReport(float(w @ self.h2_rows), float(w @ self.h1_rows), b, self.n)


def entropy_profile(enc: EncoderTable) -> EntropyProfile:
    _check_budget(enc.n, enc.m)
    y1, y2 = _outputs(enc)
    return EntropyProfile(enc.n, _cond_entropy_rows(y2, True), _cond_entropy_rows(y1, True))


def enumerate_entropy(enc: EncoderTable, dist: JointLinkDistribution) -> EntropyReport:
    """Exact ``H(Y2^n | W2, G^n)`` and ``H(Y1^n | W2, G^n)`` in bits."""
    if dist.p == 0.0:
        _check_budget(enc.n, enc.m)
        # every link is off, so both outputs are constant
        return EntropyReport(0.0, 0.0, float("nan"), enc.n)
    return entropy_profile(enc).report(dist)


def conditional_entropy(enc: EncoderTable, dist: JointLinkDistribution, rx: int, given_w2: bool = True) -> float:
    """``H(Y_rx^n | G^n)``, optionally also conditioned on ``W2``."""
    _check_budget(enc.n, enc.m)
    y = _outputs(enc)[rx - 1]
    return float(history_probabilities(enc.n, dist) @ _cond_entropy_rows(y, given_w2))


def check_lemma(enc: EncoderTable, dist: JointLinkDistribution) -> float:
    """``H(Y2^n|W2,G^n) - H(Y1^n|W2,G^n) / beta``; nonnegative if the lemma holds."""
    if dist.p == 0.0:
        raise ValueError("the entropy inequality assumes p != 0")
    return enumerate_entropy(enc, dist).margin


def check_identity(p: float, rho: float) -> float:
    """``|p * beta - (1 - p00)|``: the per-letter weight is the chance that
    a transmitter has at least one outgoing link on."""
    dist = solve_joint_distribution(p, rho)
    pb = p * beta(p, rho) if p != 0.0 else 2 * p - p * (1 - p) * rho - p * p
    return abs(pb - dist.departure_prob)


@dataclass(frozen=True)
class OuterBoundVerdict:
    inside: bool
    slack: dict[str, float] = field(default_factory=dict)


def outer_bound_check(rate_point: tuple[float, float], p: float, rho: float, tol: float = 1e-9) -> OuterBoundVerdict:
    r1, r2 = rate_point
    region = capacity_region(p, rho)
    slack = {h.label: h.slack(r1, r2) for h in region.constraints}
    inside = all(v >= -tol for v in slack.values()) and r1 >= -tol and r2 >= -tol
    return OuterBoundVerdict(inside, slack)


# ------------------------------------------------------------ search drivers


LEMMA_GRID = tuple(
    (p, rho) for p in (0.25, 0.5, 0.75) for rho in (-0.5, 0.0, 0.5, 1.0)
)


def lemma_grid() -> list[JointLinkDistribution]:
    """Feasible points of the default falsification grid."""
    out = []
    for p, rho in LEMMA_GRID:
        try:
            out.append(solve_joint_distribution(p, rho))
        except ValueError:
            continue
    return out


@dataclass
class LemmaSearch:
    encoders: int = 0
    evaluations: int = 0
    min_margin: float = float("inf")
    worst: tuple[EncoderTable, JointLinkDistribution] | None = None
    per_point: dict[tuple[float, float], float] = field(default_factory=dict)
    counterexamples: list[tuple[EncoderTable, JointLinkDistribution, float]] = field(default_factory=list)

    def add(self, enc: EncoderTable, dists: list[JointLinkDistribution], tol: float) -> None:
        prof = entropy_profile(enc)
        self.encoders += 1
        for d in dists:
            margin = prof.report(d).margin
            self.evaluations += 1
            key = (d.p, d.rho)
            self.per_point[key] = min(self.per_point.get(key, float("inf")), margin)
            if margin < self.min_margin:
                self.min_margin, self.worst = margin, (enc, d)
            if margin < -tol:
                self.counterexamples.append((enc, d, margin))


def search_lemma(
    dists: list[JointLinkDistribution] | None = None,
    random_tables: int = 10_000,
    seed: int = 0,
    n_random: int = 2,
    tol: float = 1e-9,
) -> LemmaSearch:
    """Exhaustive single-slot encoders, seeded random tables (local and full
    delayed CSI alternately) and the queue encoder, over ``dists``."""
    dists = lemma_grid() if dists is None else dists
    res = LemmaSearch()
    for m in ((1, 1), (1, 2), (2, 1), (2, 2)):
        for enc in all_single_slot_encoders(m):
            res.add(enc, dists, tol)
    for n in (1, 2, 3):
        res.add(phase1_encoder(n, (2, 2) if n < 3 else (1, 2)), dists, tol)
    rng = np.random.default_rng(seed)
    shapes = ((1, 1), (1, 2), (2, 1), (2, 2))
    for k in range(random_tables):
        res.add(random_encoder(n_random, shapes[k % 4], rng, full_csi=bool(k % 2)), dists, tol)
    return res

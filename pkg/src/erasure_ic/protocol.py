"""Three-phase retransmission protocol at the maximum symmetric rate point.

Transmitters act only on their own message, the delayed gains of their two
outgoing links and seeds shared with the receivers. Receivers see every gain
instantly, replay the transmitters' queue bookkeeping from it, and decode with
a generic rank-based solver over all message bits.

Variable layout for every receiver-side equation system: bit ``j`` of
transmitter 1 is unknown ``j``; bit ``j`` of transmitter 2 is unknown
``tx2_offset(m) + j`` where the offset is ``m`` rounded up to whole 64-bit words.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from collections import deque

import numpy as np

from . import gf2
from .channel import ChannelTrace, PacketStatus, classify_packet, sample_channel_trace
from .gf2 import BitMatrix, EquationSystem
from .region import JointLinkDistribution, beta, max_symmetric_rate, solve_joint_distribution, total_time_factor

PAYLOAD_POLICIES = ("paper-literal", "budget-matched")
PHASE1_RULES = ("inverse-departure", "printed-text")
SLACK_ROUNDING = ("ceil", "exact")

# status codes stored in ledgers
STAY, DELIVERED, COMMON, OVERHEARD = 0, 1, 2, 3
_STATUS_CODE = {
    PacketStatus.STAY: STAY,
    PacketStatus.DELIVERED: DELIVERED,
    PacketStatus.COMMON: COMMON,
    PacketStatus.OVERHEARD: OVERHEARD,
}

# SeedSequence spawn keys; both ends of the link derive identical streams.
_KEY_MESSAGE = 1
_KEY_CHANNEL = 2
_KEY_MATRICES = 3
_KEY_COMBOS = 4


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def exact_cube_root(m: int) -> int | None:
    r = round(m ** (1.0 / 3.0))
    for c in (r - 1, r, r + 1):
        if c > 0 and c ** 3 == m:
            return c
    return None


def slack_unit(m: int, rounding: str = "ceil") -> int:
    """Integer ``m^(2/3)``; ``"exact"`` insists on a perfect cube ``m``."""
    c = exact_cube_root(m)
    if c is not None:
        return c * c
    if rounding == "exact":
        raise ValueError(f"m={m} has non-integer m^(2/3); pick a perfect cube or slack_rounding='ceil'")
    d = max(1, int(round(m ** (2.0 / 3.0))))
    while d ** 3 < m * m:
        d += 1
    while d > 1 and (d - 1) ** 3 >= m * m:
        d -= 1
    return d


def tx2_offset(m: int) -> int:
    return gf2.nwords(m) * 64


@dataclass(frozen=True)
class ProtocolConfig:
    m: int
    p: float
    rho: float
    seed: int = 0
    payload_policy: str = "paper-literal"
    phase1_rule: str = "inverse-departure"
    slack_rounding: str = "ceil"
    # multiples of the slack unit m^(2/3)
    pad_slack: float = 2.0
    phase1_slack: float = 1.0
    phase2_slack: float = 0.55
    phase3_slack: float = 1.0
    budget_slack: float = 2.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.payload_policy not in PAYLOAD_POLICIES:
            raise ValueError(f"payload_policy must be one of {PAYLOAD_POLICIES}")
        if self.phase1_rule not in PHASE1_RULES:
            raise ValueError(f"phase1_rule must be one of {PHASE1_RULES}")
        if self.slack_rounding not in SLACK_ROUNDING:
            raise ValueError(f"slack_rounding must be one of {SLACK_ROUNDING}")
        dist = solve_joint_distribution(self.p, self.rho)
        if self.p == 0.0:
            raise ValueError("p = 0 carries no information; nothing to simulate")
        if self.phase1_rule == "printed-text" and dist.p00 == 0.0:
            raise ValueError("printed-text phase-1 duration 1/p00 is unbounded when p00 = 0")
        slack_unit(self.m, self.slack_rounding)

    @property
    def delta(self) -> int:
        return slack_unit(self.m, self.slack_rounding)

    def plan(self) -> ProtocolPlan:
        return ProtocolPlan.from_config(self)


@dataclass(frozen=True)
class ProtocolPlan:
    """Everything both ends can compute before the first slot."""

    config: ProtocolConfig
    dist: JointLinkDistribution
    delta: int
    phase1_slots: int
    expected_common: float
    expected_overheard: float
    n_common: int
    n_overheard: int
    qtilde_rows: int
    phase2_slots: int
    branch: str  # "multicast", "p2p" or "none"
    phase3_rows: tuple[int, int]
    phase3_slots: int
    theory_slots: float

    @classmethod
    def from_config(cls, cfg: ProtocolConfig) -> ProtocolPlan:
        dist = solve_joint_distribution(cfg.p, cfg.rho)
        m, d = cfg.m, cfg.delta
        p, q = cfg.p, 1.0 - cfg.p
        mc = 1.0 - q * q
        depart = dist.departure_prob
        # The drain time has standard deviation sqrt(m p00) / (1 - p00); the slack
        # keeps that shape so the type-I margin does not depend on (p, rho).
        spread = math.sqrt(dist.p00) / depart
        if cfg.phase1_rule == "inverse-departure":
            t1 = math.ceil(m / depart + cfg.phase1_slack * spread * d)
        else:
            t1 = math.ceil(m / dist.p00 + cfg.phase1_slack * d)
        e1 = dist.p11 * m / depart
        e2 = dist.p01 * m / depart
        # A class of probability zero is empty with certainty and needs no padding.
        n1 = math.ceil(e1 + cfg.pad_slack * d) if dist.p11 > 0 else 0
        n2 = math.ceil(e2 + cfg.pad_slack * d) if dist.p01 > 0 else 0
        low = min(n1, n2)
        k = low + d if low > 0 else 0
        # Airtime follows the expected payload; the extra slots scale with the
        # square root of that payload, which is how its fluctuations scale.
        def extra(load: float, s: float) -> float:
            return s * d * math.sqrt(load / m)

        low_e = min(e1, e2)
        t2 = math.ceil(2.0 * (low_e + extra(low_e, cfg.phase2_slack)) / mc) if k > 0 else 0
        left = abs(e1 - e2)
        if n2 < n1:
            branch, rows = "multicast", (k, n1 + 2 * d)
            t3 = math.ceil(2.0 * (left + extra(left, cfg.phase3_slack)) / mc)
        elif n2 > n1:
            branch, rows = "p2p", (k, n2 + 2 * d)
            t3 = math.ceil((left + extra(left, cfg.phase3_slack)) / p)
        else:
            branch, rows, t3 = "none", (0, 0), 0
        theory = total_time_factor(p, cfg.rho) * m
        if cfg.payload_policy == "budget-matched":
            cap = math.ceil(theory + cfg.budget_slack * d)
            t2 = min(t2, max(cap - t1, 0))
            if branch != "none":
                t3 = max(cap - t1 - t2, 0)
        return cls(cfg, dist, d, t1, e1, e2, n1, n2, k, t2, branch, rows, t3, theory)

    @property
    def total_slots(self) -> int:
        return self.phase1_slots + self.phase2_slots + self.phase3_slots

    def coded_shape(self, which: int) -> tuple[int, int]:
        n = self.n_common if which == 1 else self.n_overheard
        return n + 2 * self.delta, n


# ------------------------------------------------------------------ matrices


@dataclass(frozen=True)
class CodedMatrices:
    """Random matrices of one transmitter, shared with both receivers.

    ``c_common`` and ``c_overheard`` code the padded queues; ``a2``/``a3``
    hold the per-slot combination coefficients of phases 2 and 3.
    """

    c_common: BitMatrix
    c_overheard: BitMatrix
    a2: BitMatrix
    a3: BitMatrix


def build_coded_matrices(plan: ProtocolPlan, tx: int) -> CodedMatrices:
    seed = plan.config.seed
    mats = _stream(seed, _KEY_MATRICES, tx)
    combos = _stream(seed, _KEY_COMBOS, tx)
    c1 = gf2.random_matrix(*plan.coded_shape(1), mats)
    c2 = gf2.random_matrix(*plan.coded_shape(2), mats)
    a2 = gf2.random_matrix(plan.phase2_slots, plan.qtilde_rows, combos)
    r0, r1 = plan.phase3_rows
    a3 = gf2.random_matrix(plan.phase3_slots, r1 - r0, combos)
    return CodedMatrices(c1, c2, a2, a3)


# --------------------------------------------------------------- transmitter


class Transmitter:
    """One transmitter's state machine.

    The constructor and every method only receive the own message, the own
    delayed ``(direct, cross)`` gains and the shared plan/matrices, so the
    locality of channel knowledge is enforced by the interface.
    """

    def __init__(self, index: int, message: np.ndarray, plan: ProtocolPlan, matrices: CodedMatrices):
        self.index = index
        self.message = np.asarray(message, dtype=np.uint8)
        self.plan = plan
        self.matrices = matrices
        self.queue: deque[int] = deque(range(plan.config.m))
        self.status = np.full(plan.config.m, STAY, dtype=np.int8)
        self.departure = np.full(plan.config.m, -1, dtype=np.int64)
        self.common: list[int] = []
        self.overheard: list[int] = []
        self.delivered: list[int] = []
        self._in_flight: int | None = None
        self._slot = 0

    # phase 1 ---------------------------------------------------------------
    def send(self) -> int | None:
        """Bit put on the air this slot, or ``None`` when silent."""
        self._in_flight = self.queue[0] if self.queue else None
        return None if self._in_flight is None else int(self.message[self._in_flight])

    def feedback(self, g_direct: int, g_cross: int) -> None:
        """Delayed gains of the slot just finished."""
        bit = self._in_flight
        if bit is not None:
            status = classify_packet(g_direct, g_cross)
            if status is not PacketStatus.STAY:
                self.queue.popleft()
                self.status[bit] = _STATUS_CODE[status]
                self.departure[bit] = self._slot
                {
                    PacketStatus.DELIVERED: self.delivered,
                    PacketStatus.COMMON: self.common,
                    PacketStatus.OVERHEARD: self.overheard,
                }[status].append(bit)
        self._in_flight = None
        self._slot += 1

    def conservation_holds(self) -> bool:
        return len(self.queue) + len(self.common) + len(self.overheard) + len(self.delivered) == self.plan.config.m

    def type_one(self) -> bool:
        return len(self.queue) > 0

    def type_two(self) -> bool:
        return len(self.common) > self.plan.n_common or len(self.overheard) > self.plan.n_overheard

    # phases 2 and 3 --------------------------------------------------------
    def _coded_values(self) -> tuple[np.ndarray, np.ndarray]:
        """``C_common Q_common`` and ``C_overheard Q_overheard`` with zero padding."""
        q1 = np.zeros(self.plan.n_common, dtype=np.uint8)
        q2 = np.zeros(self.plan.n_overheard, dtype=np.uint8)
        q1[: len(self.common)] = self.message[self.common]
        q2[: len(self.overheard)] = self.message[self.overheard]
        return gf2.mat_vec(self.matrices.c_common, q1), gf2.mat_vec(self.matrices.c_overheard, q2)

    def phase2_symbols(self) -> np.ndarray:
        k = self.plan.qtilde_rows
        v1, v2 = self._coded_values()
        qtilde = v1[:k] ^ v2[:k]
        return gf2.mat_vec(self.matrices.a2, qtilde)

    def phase3_symbols(self) -> np.ndarray:
        v1, v2 = self._coded_values()
        r0, r1 = self.plan.phase3_rows
        src = v1 if self.plan.branch == "multicast" else v2
        return gf2.mat_vec(self.matrices.a3, src[r0:r1])


# ---------------------------------------------------------- phase-1 outcome


@dataclass
class PacketLedger:
    """Per-transmitter queue bookkeeping at the end of phase 1.

    Arrays are indexed ``[tx - 1]``. ``known[tx - 1][j]`` counts the real bits
    of ``Q_tx,j`` the other receiver heard free of interference, plus the
    zero padding (public, hence known to everyone).
    """

    m: int
    status: list[np.ndarray]
    departure: list[np.ndarray]
    common: list[np.ndarray]
    overheard: list[np.ndarray]
    n_common: int
    n_overheard: int
    known: list[tuple[int, int]] = field(default_factory=list)

    @property
    def counts(self) -> list[tuple[int, int]]:
        return [(len(c), len(o)) for c, o in zip(self.common, self.overheard)]

    def queue_size_at(self, tx: int, slot: int) -> int:
        """Bits still in the initial queue after ``slot`` slots."""
        dep = self.departure[tx - 1]
        return int(np.sum((dep < 0) | (dep >= slot)))


@dataclass(frozen=True)
class ReceiverLog:
    """What a receiver records in one phase: the full gains and its bit."""

    phase: int
    trace: ChannelTrace
    y: np.ndarray


@dataclass(frozen=True)
class ErrorFlags:
    type_one: bool = False
    type_two: bool = False
    type_three: bool = False

    @property
    def halted(self) -> bool:
        return self.type_one or self.type_two


def replay_phase1(trace: ChannelTrace, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Receiver-side reconstruction of both queues from the full gains.

    Returns ``(sent, status, departure)`` per transmitter stacked on axis 0:
    ``sent[i, t]`` is the bit index on air (-1 when silent).
    """
    T = len(trace)
    sent = np.full((2, T), -1, dtype=np.int64)
    status = np.full((2, m), STAY, dtype=np.int8)
    departure = np.full((2, m), -1, dtype=np.int64)
    for i, tx in enumerate((1, 2)):
        direct, cross = trace.local(tx)
        leaves = (direct | cross).astype(np.int64)
        head = np.cumsum(leaves) - leaves
        active = head < m
        sent[i, active] = head[active]
        go = np.flatnonzero(active & (leaves == 1))
        bits = head[go]
        departure[i, bits] = go
        status[i, bits] = np.where(direct[go] & cross[go], COMMON, np.where(direct[go], DELIVERED, OVERHEARD))
    return sent, status, departure


def _ledger_from_replay(plan: ProtocolPlan, trace: ChannelTrace) -> PacketLedger:
    m = plan.config.m
    sent, status, departure = replay_phase1(trace, m)
    common, overheard, known = [], [], []
    for i, tx in enumerate((1, 2)):
        order = np.argsort(departure[i], kind="stable")
        order = order[departure[i][order] >= 0]
        c = order[status[i][order] == COMMON]
        o = order[status[i][order] == OVERHEARD]
        common.append(c)
        overheard.append(o)
        # other receiver's own direct link at the departure slot, and whether its own transmitter was on air
        other = 2 - i
        own_gain, _ = trace.into_rx(other)
        other_active = sent[other - 1] >= 0
        counts = []
        for bits, n in ((c, plan.n_common), (o, plan.n_overheard)):
            slots = departure[i][bits]
            clean = int(np.sum(~(own_gain[slots].astype(bool) & other_active[slots])))
            counts.append(clean + max(n - bits.size, 0))
        known.append(tuple(counts))
    return PacketLedger(m, list(status), list(departure), common, overheard, plan.n_common, plan.n_overheard, known)


def _phase_y(trace: ChannelTrace, x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = trace.g
    y1 = (g[:, 0] & x1) ^ (g[:, 2] & x2)
    y2 = (g[:, 3] & x2) ^ (g[:, 1] & x1)
    return y1.astype(np.uint8), y2.astype(np.uint8)


@dataclass
class Phase1Result:
    ledger: PacketLedger
    logs: tuple[ReceiverLog, ReceiverLog]
    flags: ErrorFlags
    transmitters: tuple[Transmitter, Transmitter]


def draw_messages(config: ProtocolConfig) -> tuple[np.ndarray, np.ndarray]:
    rng1 = _stream(config.seed, _KEY_MESSAGE, 1)
    rng2 = _stream(config.seed, _KEY_MESSAGE, 2)
    return (rng1.integers(0, 2, config.m, dtype=np.uint8), rng2.integers(0, 2, config.m, dtype=np.uint8))


def run_phase1(
    config: ProtocolConfig,
    rng: np.random.Generator | None = None,
    messages: tuple[np.ndarray, np.ndarray] | None = None,
    trace: ChannelTrace | None = None,
    matrices: tuple[CodedMatrices, CodedMatrices] | None = None,
) -> Phase1Result:
    """Queue draining with delayed local feedback; never raises on protocol errors.

    ``trace`` overrides channel sampling (for hand-built scenarios); it must
    cover at least the phase-1 duration.
    """
    plan = config.plan()
    if messages is None:
        messages = draw_messages(config)
    if trace is None:
        rng = rng if rng is not None else _stream(config.seed, _KEY_CHANNEL, 1)
        trace = sample_channel_trace(plan.dist, plan.phase1_slots, rng)
    else:
        trace = trace.slice(0, plan.phase1_slots)
    if matrices is None:
        matrices = (build_coded_matrices(plan, 1), build_coded_matrices(plan, 2))
    txs = (Transmitter(1, messages[0], plan, matrices[0]), Transmitter(2, messages[1], plan, matrices[1]))
    T = len(trace)
    x = np.zeros((2, T), dtype=np.uint8)
    d1, c1 = trace.local(1)
    d2, c2 = trace.local(2)
    for t in range(T):
        for i, tx in enumerate(txs):
            b = tx.send()
            x[i, t] = 0 if b is None else b
        txs[0].feedback(int(d1[t]), int(c1[t]))
        txs[1].feedback(int(d2[t]), int(c2[t]))
    y1, y2 = _phase_y(trace, x[0], x[1])
    logs = (ReceiverLog(1, trace, y1), ReceiverLog(1, trace, y2))
    ledger = _ledger_from_replay(plan, trace)
    q = 1.0 - config.p
    d = plan.delta
    type3 = any(
        k < q * n - d
        for known in ledger.known
        for k, n in zip(known, (plan.n_common, plan.n_overheard))
    )
    flags = ErrorFlags(
        type_one=any(tx.type_one() for tx in txs),
        type_two=any(tx.type_two() for tx in txs),
        type_three=type3,
    )
    return Phase1Result(ledger, logs, flags, txs)


# ----------------------------------------------------------- two-multicast


@dataclass
class MulticastLog:
    slots: int
    success: bool
    rank_trace: tuple[np.ndarray, np.ndarray]
    trace: ChannelTrace
    y: tuple[np.ndarray, np.ndarray]
    combos: tuple[BitMatrix, BitMatrix]


def default_multicast_budget(k1: int, k2: int, p: float, slack: float = 5.0) -> int:
    q = 1.0 - p
    k = max(k1, k2)
    return math.ceil(2.0 * k / (1.0 - q * q) + slack * k ** (2.0 / 3.0))


def run_two_multicast(
    payloads: tuple[np.ndarray, np.ndarray],
    dist: JointLinkDistribution,
    budget: int | None = None,
    rng: np.random.Generator | None = None,
    combos: tuple[BitMatrix, BitMatrix] | None = None,
    stop_on_success: bool = True,
) -> MulticastLog:
    """Both transmitters stream fresh random combinations of their payload.

    Each receiver keeps every non-erased observation as an equation over the
    joint ``k1 + k2`` payload bits; success means both reach full joint rank.
    ``combos`` lets a caller supply the shared combination coefficients.
    """
    b1, b2 = (np.asarray(b, dtype=np.uint8) for b in payloads)
    k1, k2 = b1.size, b2.size
    rng = rng if rng is not None else np.random.default_rng()
    if budget is None:
        budget = default_multicast_budget(k1, k2, dist.p)
    if k1 + k2 == 0:
        empty = ChannelTrace(np.zeros((0, 4), dtype=np.uint8))
        z = np.zeros(0, dtype=np.int64)
        return MulticastLog(0, True, (z, z), empty, (z.astype(np.uint8),) * 2,
                            (gf2.BitMatrix.zeros(0, 0), gf2.BitMatrix.zeros(0, 0)))
    if combos is None:
        combos = (gf2.random_matrix(budget, k1, rng), gf2.random_matrix(budget, k2, rng))
    trace = sample_channel_trace(dist, budget, rng)
    x1 = gf2.mat_vec(combos[0], b1) if k1 else np.zeros(budget, np.uint8)
    x2 =gf2.mat_vec(combos[1], b2) if k2 else np.zeros(budget, np.uint8)
    y = _phase_y(trace, x1, x2)
    joint = _join(combos[0].to_dense(), combos[1].to_dense())
    ranks = []
    for rx in (1, 2):
        own, other = trace.into_rx(rx)
        g_tx1, g_tx2 = (own, other) if rx == 1 else (other, own)
        rows = joint * np.column_stack([np.repeat(g_tx1[:, None], k1, 1), np.repeat(g_tx2[:, None], k2, 1)])
        prof = np.zeros(budget, dtype=np.int64)
        live = np.flatnonzero(rows.any(axis=1))
        if live.size:
            prof_live = gf2.rank_profile(gf2.pack_bits(rows[live]), k1 + k2)
            prof[live] = prof_live
            prof = np.maximum.accumulate(prof)
        ranks.append(prof)
    full = k1 + k2
    done = [np.flatnonzero(r >= full) for r in ranks]
    success = all(d.size for d in done)
    slots = max(int(d[0]) + 1 for d in done) if success else budget
    if not stop_on_success:
        slots = budget
    return MulticastLog(slots, success, tuple(ranks), trace.slice(0, slots),
                        (y[0][:slots], y[1][:slots]), combos)


def _join(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.concatenate([a.reshape(a.shape[0], -1), b.reshape(b.shape[0], -1)], axis=1)


# ----------------------------------------------------- phases 2 and 3, decode


def combine_phase2(ledger: PacketLedger, matrices: CodedMatrices, plan: ProtocolPlan, tx: int) -> BitMatrix:
    """Rows of the combined stream as linear forms over the transmitter's ``m`` bits.

    Row ``r`` is row ``r`` of ``C_common Q_common`` XOR row ``r`` of
    ``C_overheard Q_overheard``; only the first ``min(n1, n2) + m^(2/3)`` rows
    are kept, and none when either queue is empty by construction.
    """
    k = plan.qtilde_rows
    r1 = _coded_forms(matrices.c_common, ledger.common[tx - 1], plan.config.m, k)
    r2 = _coded_forms(matrices.c_overheard, ledger.overheard[tx - 1], plan.config.m, k)
    return BitMatrix(k, plan.config.m, r1 ^ r2)


def _coded_forms(c: BitMatrix, bits: np.ndarray, m: int, rows: int | slice) -> np.ndarray:
    """Packed linear forms (over message bits) of selected rows of ``C Q``."""
    sel = slice(0, rows) if isinstance(rows, int) else rows
    dense = c.to_dense()[sel]
    out = np.zeros((dense.shape[0], m), dtype=np.uint8)
    real = min(bits.size, c.cols)
    if real:
        out[:, bits[:real]] = dense[:, :real]
    return gf2.pack_bits(out)


def phase3_forms(ledger: PacketLedger, matrices: CodedMatrices, plan: ProtocolPlan, tx: int) -> BitMatrix:
    r0, r1 = plan.phase3_rows
    if plan.branch == "multicast":
        data = _coded_forms(matrices.c_common, ledger.common[tx - 1], plan.config.m, slice(r0, r1))
    elif plan.branch == "p2p":
        data = _coded_forms(matrices.c_overheard, ledger.overheard[tx - 1], plan.config.m, slice(r0, r1))
    else:
        data = np.zeros((0, gf2.nwords(plan.config.m)), dtype=np.uint64)
    return BitMatrix(r1 - r0, plan.config.m, data)


@dataclass
class PhaseLog:
    phase: int
    slots: int
    logs: tuple[ReceiverLog, ReceiverLog]


def _run_coded_phase(phase: int, plan: ProtocolPlan, txs, rng: np.random.Generator) -> PhaseLog:
    slots = plan.phase2_slots if phase == 2 else plan.phase3_slots
    trace = sample_channel_trace(plan.dist, slots, rng)
    if slots == 0:
        z = np.zeros(0, dtype=np.uint8)
        return PhaseLog(phase, 0, (ReceiverLog(phase, trace, z), ReceiverLog(phase, trace, z)))
    sym = [tx.phase2_symbols() if phase == 2 else tx.phase3_symbols() for tx in txs]
    y1, y2 = _phase_y(trace, sym[0], sym[1])
    return PhaseLog(phase, slots, (ReceiverLog(phase, trace, y1), ReceiverLog(phase, trace, y2)))


def run_phase2(plan: ProtocolPlan, txs, rng: np.random.Generator | None = None) -> PhaseLog:
    """Two-multicast of the combined streams for a fixed number of slots."""
    rng = rng if rng is not None else _stream(plan.config.seed, _KEY_CHANNEL, 2)
    return _run_coded_phase(2, plan, txs, rng)


def run_phase3(plan: ProtocolPlan, txs, rng: np.random.Generator | None = None) -> PhaseLog:
    """Leftover coded rows: two-multicast when the common queue is longer,
    simultaneous rate-``p`` point-to-point streams when the overheard one is."""
    rng = rng if rng is not None else _stream(plan.config.seed, _KEY_CHANNEL, 3)
    return _run_coded_phase(3, plan, txs, rng)


@dataclass
class DecodeResult:
    rx: int
    success: bool
    estimate: np.ndarray  # int8, -1 where undetermined
    determined: int
    equations: int


def _place(forms: np.ndarray, m: int, tx: int) -> np.ndarray:
    """Move packed per-transmitter forms into the joint unknown layout."""
    w = gf2.nwords(m)
    out = np.zeros((forms.shape[0], 2 * w), dtype=np.uint64)
    if tx == 1:
        out[:, :w] = forms
    else:
        out[:, w:] = forms
    return out


class ReceiverSide:
    """Receiver-side reconstruction shared by both receivers.

    Everything here derives from the full channel gains plus the shared
    matrices, never from transmitter state.
    """

    def __init__(self, plan: ProtocolPlan, phase1_trace: ChannelTrace, matrices: tuple[CodedMatrices, CodedMatrices]):
        self.plan = plan
        self.m = plan.config.m
        self.n_unknowns = tx2_offset(self.m) + self.m
        self.matrices = matrices
        self.ledger = _ledger_from_replay(plan, phase1_trace)
        self.sent, _, _ = replay_phase1(phase1_trace, self.m)
        self._forms: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def slot_forms(self, phase: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-slot transmitted linear forms of both transmitters (joint layout)."""
        if phase not in self._forms:
            out = []
            for tx in (1, 2):
                mats = self.matrices[tx - 1]
                if phase == 2:
                    rows = combine_phase2(self.ledger, mats, self.plan, tx)
                    combo = mats.a2
                else:
                    rows = phase3_forms(self.ledger, mats, self.plan, tx)
                    combo = mats.a3
                out.append(_place(gf2.matmul(combo, rows).data, self.m, tx))
            self._forms[phase] = (out[0], out[1])
        return self._forms[phase]

    def phase1_equations(self, log: ReceiverLog, rx: int) -> tuple[np.ndarray, np.ndarray]:
        own, other = log.trace.into_rx(rx)
        tx_own, tx_other = rx, 3 - rx
        s_own = self.sent[tx_own - 1]
        s_other = self.sent[tx_other - 1]
        use_own = own.astype(bool) & (s_own >= 0)
        use_other = other.astype(bool) & (s_other >= 0)
        keep = np.flatnonzero(use_own | use_other)
        rows = np.zeros((keep.size, gf2.nwords(self.n_unknowns)), dtype=np.uint64)
        base = {1: 0, 2: tx2_offset(self.m)}
        for tx, use, s in ((tx_own, use_own, s_own), (tx_other, use_other, s_other)):
            idx = np.flatnonzero(use[keep])
            var = base[tx] + s[keep[idx]]
            np.bitwise_or.at(rows, (idx, var >> 6), np.left_shift(np.uint64(1), (var & 63).astype(np.uint64)))
        return rows, log.y[keep]

    def coded_equations(self, log: ReceiverLog, rx: int) -> tuple[np.ndarray, np.ndarray]:
        if len(log.trace) == 0:
            return np.zeros((0, gf2.nwords(self.n_unknowns)), dtype=np.uint64), np.zeros(0, np.uint8)
        f1, f2 = self.slot_forms(log.phase)
        own, other = log.trace.into_rx(rx)
        g1, g2 = (own, other) if rx == 1 else (other, own)
        rows = f1 * g1[:, None].astype(np.uint64) ^ f2 * g2[:, None].astype(np.uint64)
        keep = np.flatnonzero(rows.any(axis=1))
        return rows[keep], log.y[keep]

    def decode(self, logs: list[ReceiverLog], rx: int) -> DecodeResult:
        parts = []
        for log in logs:
            parts.append(self.phase1_equations(log, rx) if log.phase == 1 else self.coded_equations(log, rx))
        coeffs = np.vstack([c for c, _ in parts])
        rhs = np.concatenate([r for _, r in parts]).astype(np.uint8)
        system = EquationSystem(self.n_unknowns, coeffs, rhs)
        values = gf2.solve_determined(system)
        base = 0 if rx == 1 else tx2_offset(self.m)
        own = values[base: base + self.m]
        ok = bool(np.all(own >= 0))
        return DecodeResult(rx, ok, own.copy(), int(np.sum(own >= 0)), len(system))


def decode(logs: list[ReceiverLog], matrices: tuple[CodedMatrices, CodedMatrices], plan: ProtocolPlan, rx: int) -> DecodeResult:
    phase1 = next(log for log in logs if log.phase == 1)
    return ReceiverSide(plan, phase1.trace, matrices).decode(logs, rx)


# ------------------------------------------------------------------ trials


@dataclass
class TrialResult:
    config: ProtocolConfig
    phase_slots: tuple[int, int, int]
    flags: ErrorFlags
    decoded: tuple[bool, bool]
    wrong: tuple[bool, bool]
    rates: tuple[float, float]
    theory_rate: float
    theory_slots: float

    @property
    def total_slots(self) -> int:
        return sum(self.phase_slots)

    @property
    def success(self) -> bool:
        return not self.flags.halted and all(self.decoded) and not any(self.wrong)

    @property
    def decode_failure(self) -> bool:
        """Protocol ran to completion but a receiver could not decode."""
        return not self.flags.halted and not all(self.decoded)


def run_trial(config: ProtocolConfig) -> TrialResult:
    plan = config.plan()
    messages = draw_messages(config)
    matrices = (build_coded_matrices(plan, 1), build_coded_matrices(plan, 2))
    ph1 = run_phase1(config, messages=messages, matrices=matrices)
    theory_rate = max_symmetric_rate(config.p, config.rho)
    if ph1.flags.halted:
        return TrialResult(config, (plan.phase1_slots, 0, 0), ph1.flags, (False, False), (False, False),
                           (0.0, 0.0), theory_rate, plan.theory_slots)
    ph2 = run_phase2(plan, ph1.transmitters)
    ph3 = run_phase3(plan, ph1.transmitters)
    side = ReceiverSide(plan, ph1.logs[0].trace, matrices)
    decoded, wrong = [], []
    for rx in (1, 2):
        logs = [ph1.logs[rx - 1], ph2.logs[rx - 1], ph3.logs[rx - 1]]
        res = side.decode(logs, rx)
        decoded.append(res.success)
        wrong.append(res.success and not np.array_equal(res.estimate, messages[rx - 1].astype(np.int8)))
    slots = (plan.phase1_slots, ph2.slots, ph3.slots)
    total = sum(slots)
    ok = all(decoded) and not any(wrong)
    rates = (config.m / total, config.m / total) if ok else (0.0, 0.0)
    return TrialResult(config, slots, ph1.flags, tuple(decoded), tuple(wrong), rates, theory_rate, plan.theory_slots)


def trial_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1, np.uint64)[0] >> np.uint64(1))


def run_trials(config: ProtocolConfig, trials: int, workers: int = 1) -> list[TrialResult]:
    """Independent trials with per-trial seeds derived from ``config.seed``."""
    if trials < 1:
        raise ValueError("trial count must be >= 1")
    configs = [replace(config, seed=trial_seed(config.seed, i)) for i in range(trials)]
    if workers <= 1:
        return [run_trial(c) for c in configs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_trial, configs))

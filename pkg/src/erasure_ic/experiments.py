"""Aggregation of protocol trials and the target checks attached to them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .converse import outer_bound_check
from .protocol import ProtocolConfig, TrialResult, run_trials, slack_unit
from .region import beta, max_symmetric_rate


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    limit: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.6g} (limit {self.limit:.6g})"


@dataclass
class SimulationSummary:
    config: ProtocolConfig
    trials: int
    successes: int
    mean_rate1: float
    mean_rate2: float
    theory_rate: float
    mean_slots: float
    theory_slots: float
    err_one: float
    err_two: float
    err_three: float
    decode_fail: float
    wrong_decodes: int
    outside_region: int
    within_budget: int
    phase_slots: tuple[float, float, float]
    checks: list[Check] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def row(self) -> dict:
        c = self.config
        return {
            "p": c.p,
            "rho": c.rho,
            "m": c.m,
            "trials": self.trials,
            "policy": c.payload_policy,
            "mean_rate1": self.mean_rate1,
            "mean_rate2": self.mean_rate2,
            "theory_rate": self.theory_rate,
            "mean_slots": self.mean_slots,
            "theory_slots": self.theory_slots,
            "err_I": self.err_one,
            "err_II": self.err_two,
            "err_III": self.err_three,
            "decode_fail": self.decode_fail,
        }


def _mean(xs) -> float:
    xs = list(xs)
    return float(np.mean(xs)) if xs else math.nan


def summarize(config: ProtocolConfig, results: list[TrialResult]) -> SimulationSummary:
    """Rates and slot counts are averaged over successful trials only."""
    n = len(results)
    ok = [r for r in results if r.success]
    delta = slack_unit(config.m, config.slack_rounding)
    budget = config.plan().theory_slots + 8 * delta
    outside = sum(not outer_bound_check(r.rates, config.p, config.rho).inside for r in ok)
    s = SimulationSummary(
        config=config,
        trials=n,
        successes=len(ok),
        mean_rate1=_mean(r.rates[0] for r in ok),
        mean_rate2=_mean(r.rates[1] for r in ok),
        theory_rate=max_symmetric_rate(config.p, config.rho),
        mean_slots=_mean(r.total_slots for r in ok),
        theory_slots=config.plan().theory_slots,
        err_one=sum(r.flags.type_one for r in results) / n,
        err_two=sum(r.flags.type_two for r in results) / n,
        err_three=sum(r.flags.type_three for r in results) / n,
        decode_fail=sum(r.decode_failure for r in results) / n,
        wrong_decodes=sum(any(r.wrong) for r in results),
        outside_region=outside,
        within_budget=sum(r.total_slots <= budget for r in ok),
        phase_slots=tuple(_mean(r.phase_slots[k] for r in ok) for k in range(3)),
    )
    s.checks = target_checks(s)
    return s


def simulate(config: ProtocolConfig, trials: int, workers: int = 1) -> SimulationSummary:
    return summarize(config, run_trials(config, trials, workers))


def _close(a: float, b: float) -> bool:
    return abs(a - b) < 1e-12


def target_checks(s: SimulationSummary) -> list[Check]:
    """Soundness checks for every point, plus the quantitative targets of the
    reference operating points at ``p = 0.5``.

    The targets are stated for ``m = 2000`` and only tighten as ``m`` grows,
    so they are skipped for shorter messages.
    """
    c = s.config
    m = c.m
    d = slack_unit(m, c.slack_rounding)
    out = [
        Check("wrong decodes", s.wrong_decodes == 0, s.wrong_decodes, 0),
        Check("rate points outside region", s.outside_region == 0, s.outside_region, 0),
    ]
    if not _close(c.p, 0.5) or m < 2000:
        return out
    literal = c.payload_policy == "paper-literal"
    if literal and _close(c.rho, -1.0):
        out += [
            Check("decode success", s.success_rate >= 0.98, s.success_rate, 0.98),
            Check("mean slots", s.mean_slots <= 2 * m + 8 * d, s.mean_slots, 2 * m + 8 * d),
            Check("mean per-user rate", s.mean_rate1 >= 0.465 and s.mean_rate2 >= 0.465, min(s.mean_rate1, s.mean_rate2), 0.465),
        ]
    elif literal and _close(c.rho, 0.0):
        target = 20 * m / 9
        out += [
            Check("mean per-user rate", min(s.mean_rate1, s.mean_rate2) >= 0.40, min(s.mean_rate1, s.mean_rate2), 0.40),
            Check("mean slots rel. error", abs(s.mean_slots / target - 1) <= 0.08, abs(s.mean_slots / target - 1), 0.08),
        ]
        for name, v in (("type I", s.err_one), ("type II", s.err_two), ("type III", s.err_three), ("decode failure", s.decode_fail)):
            out.append(Check(f"{name} frequency", v <= 0.02, v, 0.02))
    elif literal and _close(c.rho, -0.5):
        target = 44 * m / 21
        out.append(Check("mean slots rel. error", abs(s.mean_slots / target - 1) <= 0.08, abs(s.mean_slots / target - 1), 0.08))
    elif not literal and (_close(c.rho, 0.5) or _close(c.rho, 1.0)):
        frac = s.within_budget / s.trials
        theory_sum = 2 * s.theory_rate
        got = s.mean_rate1 + s.mean_rate2
        out += [
            Check("decode success within budget", frac >= 0.95, frac, 0.95),
            Check("sum-rate rel. error", abs(got / theory_sum - 1) <= 0.10, abs(got / theory_sum - 1), 0.10),
        ]
    return out


def theory_summary(p: float, rho: float) -> dict:
    return {"beta": beta(p, rho), "max_symmetric_rate": max_symmetric_rate(p, rho)}


def wilson_interval(k: int, n: int, z: float = 1.959964) -> tuple[float, float]:
    """95% score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    ph = k / n
    den = 1 + z * z / n
    mid = (ph + z * z / (2 * n)) / den
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)

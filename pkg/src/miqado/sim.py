"""Scenario engine and stabilization metrics.

Replays liquidation events under three regimes:

* fsl_only: every event is liquidated immediately at the trigger price
  (maximal repayment), optionally followed by an AMM sale of the seized
  collateral (a short liquidation).
* miqado_only: a supporter prices the option, tops the position up, the
  borrower may rescue it during the term, and the option settles at
  maturity. No liquidation ever runs.
* hybrid: support runs first; positions whose supporter defaults (or that
  never attract support) fall through to fixed-spread liquidation.

Events are processed sequentially and independently: one event's sale
never moves another event's prices. Everything is a deterministic
function of the scenario value, so identical inputs reproduce identical
reports byte for byte.

External formats owned here: the events CSV
(`position_id,debt,collateral,borrow_rate,path_offset`), the per-event
outcomes CSV, and the canonical JSON report (sorted keys, decimals as
strings).
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from random import Random
from typing import Iterable, Mapping, Sequence

from .core import (
    SECONDS_PER_YEAR,
    Amount,
    BorrowingPosition,
    FslOutcome,
    FslParams,
    Numeric,
    Price,
    dec_str,
    execute_fsl,
    fsl_post_health_factor,
    health_factor,
    ledger_context,
    quantize,
    to_decimal,
)
from .errors import (
    CsvFormatError,
    MiqadoError,
    ScenarioError,
    UndefinedReductionError,
)
from .market import CpAmmPool, PricePath, direct_price_decline
from .option import historical_volatility
from .protocol import (
    MiqadoMode,
    MiqadoParams,
    MiqadoSession,
    SessionState,
    SettlementOutcome,
    can_initiate,
    initiate,
    settle_at_maturity,
    supporter_decision,
    terminate,
)

EVENTS_CSV_HEADER = "position_id,debt,collateral,borrow_rate,path_offset"
OUTCOMES_CSV_HEADER = (
    "event_index,position_id,premium_factor,term_seconds,outcome_class,"
    "supporter_payoff,premium_value,release_usd,restraint_usd,price_decline"
)

#: Settlement classes an event can land in, one per event per regime.
CLASS_FSL = "fsl"
CLASS_INELIGIBLE = "ineligible"
CLASS_DECLINED = "declined"
CLASS_TERMINATED = "terminated"
CLASS_EXERCISE_PROFIT = "exercise_profit"
CLASS_EXERCISE_LOSS = "exercise_loss"
CLASS_DEFAULT = "default"

_MATURITY_CLASSES = (CLASS_EXERCISE_PROFIT, CLASS_EXERCISE_LOSS, CLASS_DEFAULT)


class Regime(Enum):
    FSL_ONLY = "fsl_only"
    MIQADO_ONLY = "miqado_only"
    HYBRID = "hybrid"


@dataclass
class LiquidationEvent:
    """One liquidation trigger: a position snapshot plus the path index at
    which its health factor first dropped below one. The optional pool is
    the venue where a liquidator would dump the seized collateral."""

    position: BorrowingPosition
    path_offset: int
    amm_pool: CpAmmPool | None = None


@dataclass
class Scenario:
    """Everything one replay needs. Pure data; running it never mutates it."""

    events: list[LiquidationEvent]
    path: PricePath
    fsl: FslParams
    miqado: MiqadoParams
    regime: Regime
    sold_fraction: Decimal = Decimal(1)
    #: When true, supporters engage only if the premium factor is at or
    #: below the break-even factor. Payoff-table sweeps switch this off to
    #: tabulate the engage-always assumption.
    supporter_gate: bool = True
    foreign_rate: float = 0.0
    #: Annualized volatility used by the supporter gate; estimated from the
    #: scenario path when not set.
    sigma_override: float | None = None

    def __post_init__(self):
        self.sold_fraction = to_decimal(self.sold_fraction)
        if not 0 <= self.sold_fraction <= 1:
            raise ValueError("sold_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class EventResult:
    """Per-event audit record accumulated by run_scenario."""

    index: int
    position_id: str
    outcome_class: str
    hf_pre: Fraction
    settlement: SettlementOutcome | None
    fsl_outcome: FslOutcome | None
    fsl_price: Price | None
    session: MiqadoSession | None
    release_usd: Decimal
    restraint_usd: Decimal
    price_decline: Decimal | None


@dataclass(frozen=True)
class DistSummary:
    """Order statistics of a sample; infinities counted separately."""

    count: int
    infinite_count: int
    mean: Decimal | None
    minimum: Decimal | None
    p25: Decimal | None
    p50: Decimal | None
    p75: Decimal | None
    maximum: Decimal | None

    @classmethod
    def from_values(cls, values: Sequence[Fraction | float]) -> "DistSummary":
        finite = sorted(v for v in values if not (isinstance(v, float) and math.isinf(v)))
        inf_count = len(values) - len(finite)
        if not finite:
            return cls(len(values), inf_count, None, None, None, None, None, None)

        def _rank(q: Fraction) -> Fraction:
            idx = max(0, math.ceil(q * len(finite)) - 1)
            return finite[idx]

        mean = sum(finite, Fraction(0)) / len(finite)
        return cls(
            count=len(values),
            infinite_count=inf_count,
            mean=_fraction_to_decimal(mean),
            minimum=_fraction_to_decimal(finite[0]),
            p25=_fraction_to_decimal(_rank(Fraction(1, 4))),
            p50=_fraction_to_decimal(_rank(Fraction(1, 2))),
            p75=_fraction_to_decimal(_rank(Fraction(3, 4))),
            maximum=_fraction_to_decimal(finite[-1]),
        )

    def to_json_dict(self) -> dict:
        return {
            "count": self.count,
            "infinite_count": self.infinite_count,
            "mean": _dec_or_none(self.mean),
            "min": _dec_or_none(self.minimum),
            "p25": _dec_or_none(self.p25),
            "p50": _dec_or_none(self.p50),
            "p75": _dec_or_none(self.p75),
            "max": _dec_or_none(self.maximum),
        }


@dataclass(frozen=True)
class PayoffRow:
    """Supporter payoff statistics for one (premium factor, term) cell."""

    premium_factor: Decimal
    term_seconds: int
    n: int
    p_exercise_profit: Decimal
    p_exercise_loss: Decimal
    p_default: Decimal
    mean_payoff: Decimal
    std_payoff: Decimal

    def to_json_dict(self) -> dict:
        return {
            "premium_factor": str(self.premium_factor),
            "term_seconds": self.term_seconds,
            "n": self.n,
            "p_exercise_profit": dec_str(self.p_exercise_profit),
            "p_exercise_loss": dec_str(self.p_exercise_loss),
            "p_default": dec_str(self.p_default),
            "mean_payoff": dec_str(self.mean_payoff),
            "std_payoff": dec_str(self.std_payoff),
        }


@dataclass
class MetricsReport:
    """Aggregated scenario outputs."""

    regime: Regime
    n_events: int
    class_counts: dict[str, int]
    collateral_release_usd: Decimal
    collateral_restraint_usd: Decimal
    fsl_baseline_release_usd: Decimal
    release_reduction: Decimal | None
    hf_pre: DistSummary
    hf_post_fsl: DistSummary
    hf_post_miqado: DistSummary
    healthy_fraction_fsl: Decimal
    healthy_fraction_miqado: Decimal
    payoff_rows: list[PayoffRow]
    price_declines: list[Decimal]
    results: list[EventResult] = field(repr=False, default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "n_events": self.n_events,
            "class_counts": dict(sorted(self.class_counts.items())),
            "collateral_release_usd": dec_str(self.collateral_release_usd),
            "collateral_restraint_usd": dec_str(self.collateral_restraint_usd),
            "fsl_baseline_release_usd": dec_str(self.fsl_baseline_release_usd),
            "release_reduction": _dec_or_none(self.release_reduction),
            "hf_pre": self.hf_pre.to_json_dict(),
            "hf_post_fsl": self.hf_post_fsl.to_json_dict(),
            "hf_post_miqado": self.hf_post_miqado.to_json_dict(),
            "healthy_fraction_fsl": dec_str(self.healthy_fraction_fsl),
            "healthy_fraction_miqado": dec_str(self.healthy_fraction_miqado),
            "payoff_rows": [row.to_json_dict() for row in self.payoff_rows],
            "price_declines": [dec_str(d) for d in self.price_declines],
        }


def _fraction_to_decimal(value: Fraction) -> Decimal:
    with ledger_context():
        return quantize(Decimal(value.numerator) / Decimal(value.denominator))


def _dec_or_none(value: Decimal | None) -> str | None:
    return None if value is None else dec_str(value)


def _max_repay(pos: BorrowingPosition, params: FslParams) -> Amount:
    with ledger_context():
        return Amount.debt(pos.debt.value * params.close_factor)


def _sum(values: Iterable[Decimal]) -> Decimal:
    total = Decimal(0)
    with ledger_context():
        for v in values:
            total += v
    return total


def collateral_release(
    outcomes: Sequence[FslOutcome], prices: Sequence[Price]
) -> Decimal:
    """Market value of collateral handed to liquidators: sum of seized
    amounts at the price each seizure executed at."""
    if len(outcomes) != len(prices):
        raise ValueError("outcomes and prices must pair up")
    with ledger_context():
        return _sum(o.collateral_seized.value * p.value for o, p in zip(outcomes, prices))


def collateral_restraint(
    sessions: Sequence[MiqadoSession], prices: Sequence[Price]
) -> Decimal:
    """Value of supporter top-ups locked into positions, at the price each
    session started at."""
    if len(sessions) != len(prices):
        raise ValueError("sessions and prices must pair up")
    with ledger_context():
        return _sum(s.topup.value * p.value for s, p in zip(sessions, prices))


def release_reduction(fsl_only: "MetricsReport", other: "MetricsReport") -> Decimal:
    """1 - other/baseline of collateral release, versus the fsl_only run."""
    if fsl_only.collateral_release_usd == 0:
        raise UndefinedReductionError("baseline collateral release is zero")
    with ledger_context():
        return 1 - other.collateral_release_usd / fsl_only.collateral_release_usd


def health_recovery(
    events: Sequence[LiquidationEvent],
    path: PricePath,
    theta: Numeric,
    premium_factor: Numeric,
) -> tuple[Fraction, list[Fraction]]:
    """Topped-up health factors and the fraction pushed back above one.

    The top-up multiplies each health factor by (1 + lambda), so an event
    recovers exactly when its pre-support health factor is at least
    1 / (1 + lambda).
    """
    lam = Fraction(to_decimal(premium_factor))
    post: list[Fraction] = []
    healthy = 0
    for ev in events:
        hf_pre = health_factor(ev.position, path[ev.path_offset].price, theta)
        hf_post = hf_pre * (1 + lam)
        post.append(hf_post)
        if hf_post >= 1:
            healthy += 1
    fraction = Fraction(healthy, len(events)) if events else Fraction(0)
    return fraction, post


def _payoff_row(
    premium_factor: Decimal,
    term_seconds: int,
    classified: Sequence[tuple[str, Decimal]],
) -> PayoffRow | None:
    """Build one payoff-table row from (class, payoff) pairs.

    Only maturity classes count; probabilities are exact fractions of the
    row size, and the payoff spread is the population standard deviation
    so single-event rows are well defined.
    """
    settled = [(c, p) for c, p in classified if c in _MATURITY_CLASSES]
    n = len(settled)
    if n == 0:
        return None
    counts = {c: 0 for c in _MATURITY_CLASSES}
    for c, _ in settled:
        counts[c] += 1
    payoffs = [Fraction(p) for _, p in settled]
    mean = sum(payoffs, Fraction(0)) / n
    var = sum(((x - mean) ** 2 for x in payoffs), Fraction(0)) / n
    with ledger_context():
        var_dec = Decimal(var.numerator) / Decimal(var.denominator)
        std = var_dec.sqrt()
    return PayoffRow(
        premium_factor=premium_factor,
        term_seconds=term_seconds,
        n=n,
        p_exercise_profit=_fraction_to_decimal(Fraction(counts[CLASS_EXERCISE_PROFIT], n)),
        p_exercise_loss=_fraction_to_decimal(Fraction(counts[CLASS_EXERCISE_LOSS], n)),
        p_default=_fraction_to_decimal(Fraction(counts[CLASS_DEFAULT], n)),
        mean_payoff=_fraction_to_decimal(mean),
        std_payoff=quantize(std),
    )


def payoff_table(
    groups: Mapping[tuple[Decimal, int], Sequence[SettlementOutcome]]
) -> list[PayoffRow]:
    """Payoff rows keyed by (premium factor, term). Empty groups are
    omitted; terminated sessions do not belong to a maturity class."""
    rows: list[PayoffRow] = []
    for (lam, term), outcomes in sorted(
        groups.items(), key=lambda kv: (kv[0][1], kv[0][0])
    ):
        classified = [
            (_classify_settlement(o), o.supporter_payoff) for o in outcomes
        ]
        row = _payoff_row(to_decimal(lam), term, classified)
        if row is not None:
            rows.append(row)
    return rows


def _classify_settlement(outcome: SettlementOutcome) -> str:
    if outcome.state is SessionState.DEFAULTED:
        return CLASS_DEFAULT
    if outcome.state is SessionState.EXERCISED:
        return CLASS_EXERCISE_PROFIT if outcome.supporter_payoff > 0 else CLASS_EXERCISE_LOSS
    if outcome.state is SessionState.TERMINATED:
        return CLASS_TERMINATED
    raise ValueError(f"unsettled outcome state {outcome.state}")


def path_volatility(path: PricePath) -> float:
    """Annualized volatility estimated from the scenario path's own cadence."""
    step = (path[-1].timestamp - path[0].timestamp) / (len(path) - 1)
    periods_per_year = SECONDS_PER_YEAR / step
    return historical_volatility(path, periods_per_year)


def run_scenario(scenario: Scenario) -> MetricsReport:
    """Replay every event independently under the scenario regime.

    Pure with respect to its argument: positions and pools are copied
    before any mutation. Module errors raised while processing an event
    are re-raised as ScenarioError with the event index attached.
    """
    s = scenario
    theta = s.fsl.theta
    # The engagement-window formula follows the regime, not whatever mode
    # the params happened to carry.
    params = replace(
        s.miqado,
        mode=MiqadoMode.PURE if s.regime is Regime.MIQADO_ONLY else MiqadoMode.HYBRID,
    )
    needs_gate = s.supporter_gate and s.regime is not Regime.FSL_ONLY
    sigma = 0.0
    if needs_gate:
        sigma = s.sigma_override if s.sigma_override is not None else path_volatility(s.path)

    results: list[EventResult] = []
    hf_pre_values: list[Fraction] = []
    hf_post_fsl_values: list[Fraction | float] = []
    hf_post_miq_values: list[Fraction] = []
    lam = Fraction(params.premium_factor)

    for idx, ev in enumerate(s.events):
        try:
            result, hf_pre, hf_fsl = _run_event(idx, ev, s, params, sigma)
        except ScenarioError:
            raise
        except MiqadoError as exc:
            raise ScenarioError(idx, str(exc)) from exc
        results.append(result)
        hf_pre_values.append(hf_pre)
        hf_post_fsl_values.append(hf_fsl)
        hf_post_miq_values.append(hf_pre * (1 + lam))

    class_counts: dict[str, int] = {}
    for r in results:
        class_counts[r.outcome_class] = class_counts.get(r.outcome_class, 0) + 1

    release = _sum(r.release_usd for r in results)
    restraint = _sum(r.restraint_usd for r in results)
    baseline = _baseline_release(s)
    reduction: Decimal | None = None
    if baseline > 0:
        with ledger_context():
            reduction = 1 - release / baseline

    n = len(results)
    healthy_fsl = Fraction(
        sum(1 for v in hf_post_fsl_values if (isinstance(v, float) and math.isinf(v)) or v >= 1),
        n,
    ) if n else Fraction(0)
    healthy_miq = Fraction(sum(1 for v in hf_post_miq_values if v >= 1), n) if n else Fraction(0)

    classified = [
        (r.outcome_class, r.settlement.supporter_payoff)
        for r in results
        if r.settlement is not None
    ]
    row = _payoff_row(params.premium_factor, params.term_seconds, classified)

    return MetricsReport(
        regime=s.regime,
        n_events=n,
        class_counts=class_counts,
        collateral_release_usd=release,
        collateral_restraint_usd=restraint,
        fsl_baseline_release_usd=baseline,
        release_reduction=reduction,
        hf_pre=DistSummary.from_values(hf_pre_values),
        hf_post_fsl=DistSummary.from_values(hf_post_fsl_values),
        hf_post_miqado=DistSummary.from_values(hf_post_miq_values),
        healthy_fraction_fsl=_fraction_to_decimal(healthy_fsl),
        healthy_fraction_miqado=_fraction_to_decimal(healthy_miq),
        payoff_rows=[] if row is None else [row],
        price_declines=[r.price_decline for r in results if r.price_decline is not None],
        results=results,
    )


def _baseline_release(s: Scenario) -> Decimal:
    """Counterfactual release if every event were liquidated immediately."""
    parts: list[Decimal] = []
    for idx, ev in enumerate(s.events):
        pos = copy.deepcopy(ev.position)
        p0 = s.path[ev.path_offset].price
        try:
            out = execute_fsl(pos, p0, s.fsl, _max_repay(pos, s.fsl))
        except MiqadoError as exc:
            raise ScenarioError(idx, str(exc)) from exc
        with ledger_context():
            parts.append(out.collateral_seized.value * p0.value)
    return _sum(parts)


def _run_event(
    idx: int,
    ev: LiquidationEvent,
    s: Scenario,
    params: MiqadoParams,
    sigma: float,
) -> tuple[EventResult, Fraction, Fraction | float]:
    if not 0 <= ev.path_offset < len(s.path):
        raise ScenarioError(idx, f"path_offset {ev.path_offset} outside path")
    point = s.path[ev.path_offset]
    p0, t0 = point.price, point.timestamp
    pos = copy.deepcopy(ev.position)
    theta = s.fsl.theta

    hf_pre = health_factor(pos, p0, theta)
    if hf_pre >= 1:
        raise ScenarioError(
            idx, f"health factor {float(hf_pre):.6f} at offset {ev.path_offset} is not below one"
        )
    hf_fsl = fsl_post_health_factor(pos, p0, s.fsl)

    def fsl_here(price: Price, klass: str, session=None, settlement=None, restraint=Decimal(0)):
        out = execute_fsl(pos, price, s.fsl, _max_repay(pos, s.fsl))
        with ledger_context():
            released = out.collateral_seized.value * price.value
        decline = None
        if ev.amm_pool is not None:
            decline = direct_price_decline(ev.amm_pool, out.collateral_seized, s.sold_fraction)
        return EventResult(
            index=idx,
            position_id=ev.position.id,
            outcome_class=klass,
            hf_pre=hf_pre,
            settlement=settlement,
            fsl_outcome=out,
            fsl_price=price,
            session=session,
            release_usd=released,
            restraint_usd=restraint,
            price_decline=decline,
        )

    if s.regime is Regime.FSL_ONLY:
        return fsl_here(p0, CLASS_FSL), hf_pre, hf_fsl

    def no_action(klass: str) -> EventResult:
        return EventResult(
            index=idx,
            position_id=ev.position.id,
            outcome_class=klass,
            hf_pre=hf_pre,
            settlement=None,
            fsl_outcome=None,
            fsl_price=None,
            session=None,
            release_usd=Decimal(0),
            restraint_usd=Decimal(0),
            price_decline=None,
        )

    if not can_initiate(pos, p0, theta, params):
        if s.regime is Regime.HYBRID:
            return fsl_here(p0, CLASS_INELIGIBLE), hf_pre, hf_fsl
        return no_action(CLASS_INELIGIBLE), hf_pre, hf_fsl

    if s.supporter_gate and not supporter_decision(
        pos, p0, theta, params, sigma, s.foreign_rate
    ):
        if s.regime is Regime.HYBRID:
            return fsl_here(p0, CLASS_DECLINED), hf_pre, hf_fsl
        return no_action(CLASS_DECLINED), hf_pre, hf_fsl

    session = initiate(pos, p0, theta, params, t0)
    restraint = session.premium_value.value
    maturity_idx = s.path.index_at_or_after(t0 + params.term_seconds)

    if params.rescue_above_hf is not None:
        threshold = Fraction(params.rescue_above_hf)
        for i in range(ev.path_offset + 1, maturity_idx):
            pt = s.path[i]
            if health_factor(pos, pt.price, theta) >= threshold:
                outcome = terminate(session, pos, pt.price, pt.timestamp, params)
                return (
                    EventResult(
                        index=idx,
                        position_id=ev.position.id,
                        outcome_class=CLASS_TERMINATED,
                        hf_pre=hf_pre,
                        settlement=outcome,
                        fsl_outcome=None,
                        fsl_price=None,
                        session=session,
                        release_usd=Decimal(0),
                        restraint_usd=restraint,
                        price_decline=None,
                    ),
                    hf_pre,
                    hf_fsl,
                )

    maturity_point = s.path[maturity_idx]
    outcome = settle_at_maturity(session, pos, maturity_point.price, maturity_point.timestamp)
    klass = _classify_settlement(outcome)

    if outcome.state is SessionState.DEFAULTED and s.regime is Regime.HYBRID:
        return fsl_here(
            maturity_point.price, klass, session=session, settlement=outcome, restraint=restraint
        ), hf_pre, hf_fsl

    return (
        EventResult(
            index=idx,
            position_id=ev.position.id,
            outcome_class=klass,
            hf_pre=hf_pre,
            settlement=outcome,
            fsl_outcome=None,
            fsl_price=None,
            session=session,
            release_usd=Decimal(0),
            restraint_usd=restraint,
            price_decline=None,
        ),
        hf_pre,
        hf_fsl,
    )


# ---------------------------------------------------------------------------
# Sweeps


@dataclass
class SweepResult:
    """Reports for every (premium factor, term) cell of a sweep."""

    regime: Regime
    cells: list[tuple[Decimal, int, MetricsReport]]

    @property
    def payoff_rows(self) -> list[PayoffRow]:
        rows: list[PayoffRow] = []
        for _, _, report in self.cells:
            rows.extend(report.payoff_rows)
        return rows

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "regime": self.regime.value,
            "payoff_table": [row.to_json_dict() for row in self.payoff_rows],
            "cells": [
                {
                    "premium_factor": str(lam),
                    "term_seconds": term,
                    "report": report.to_json_dict(),
                }
                for lam, term, report in self.cells
            ],
        }


def run_sweep(
    base: Scenario, premium_factors: Sequence[Numeric], terms_seconds: Sequence[int]
) -> SweepResult:
    """Run the scenario once per sweep cell (term-major, like a payoff
    table is usually read)."""
    if not premium_factors or not terms_seconds:
        raise ValueError("sweep grids must be non-empty")
    cells = []
    for term in terms_seconds:
        for lam in premium_factors:
            lam_dec = to_decimal(lam)
            scenario = replace(
                base, miqado=replace(base.miqado, premium_factor=lam_dec, term_seconds=term)
            )
            cells.append((lam_dec, term, run_scenario(scenario)))
    return SweepResult(regime=base.regime, cells=cells)


def report_to_json(payload: Mapping) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Event fixtures: synthesis and CSV round-trip


def synthesize_events(
    path: PricePath,
    theta: Numeric,
    count: int,
    seed: int,
    hf_band: tuple[Numeric, Numeric] = ("0.90", "0.9999"),
    collateral: Numeric = 1,
    borrow_rate: Numeric = "0.05",
    max_term_seconds: int = 86_400,
    amm_pool: CpAmmPool | None = None,
) -> list[LiquidationEvent]:
    """Sample desk-scale liquidation events along a path.

    Each event sits at a path offset whose maturity (offset time plus the
    longest sweep term) still lands on the path. The pre-trigger health
    factor is uniform in `hf_band`; debt is then solved from the collateral,
    price and theta so that the trigger condition holds by construction.
    """
    lo, hi = (to_decimal(hf_band[0]), to_decimal(hf_band[1]))
    if not 0 < lo < hi < 1:
        raise ValueError("hf_band must satisfy 0 < low < high < 1")
    theta_dec = to_decimal(theta)
    coll = to_decimal(collateral)
    horizon = path[-1].timestamp - max_term_seconds
    max_offset = -1
    for i, pt in enumerate(path.points):
        if pt.timestamp <= horizon:
            max_offset = i
    if max_offset < 0:
        raise ValueError("path too short for the requested maximum term")
    rng = Random(seed)
    events: list[LiquidationEvent] = []
    for i in range(count):
        offset = rng.randint(0, max_offset)
        u = rng.random()
        hf = Decimal(repr(float(lo) + (float(hi) - float(lo)) * u))
        if hf >= hi:
            hf = lo + (hi - lo) / 2
        price = path[offset].price
        with ledger_context():
            debt = coll * price.value * theta_dec / hf
        pos = BorrowingPosition(
            id=f"ev{i:04d}",
            debt=Amount.debt(debt),
            collateral=Amount.collateral(coll),
            borrow_rate=to_decimal(borrow_rate),
        )
        if health_factor(pos, price, theta_dec) >= 1:
            with ledger_context():
                debt *= Decimal("1.000000000001")
            pos = BorrowingPosition(
                id=pos.id,
                debt=Amount.debt(debt),
                collateral=Amount.collateral(coll),
                borrow_rate=to_decimal(borrow_rate),
            )
        events.append(
            LiquidationEvent(
                position=pos,
                path_offset=offset,
                amm_pool=None if amm_pool is None else amm_pool.copy(),
            )
        )
    return events


def load_events_csv(data: bytes | str) -> list[LiquidationEvent]:
    """Parse the events CSV; malformed rows name their line number."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.splitlines()
    if not lines or lines[0].strip() != EVENTS_CSV_HEADER:
        raise CsvFormatError(f"expected header {EVENTS_CSV_HEADER!r}", line=1)
    events: list[LiquidationEvent] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 5:
            raise CsvFormatError(f"expected 5 fields, got {len(parts)}", line=lineno)
        try:
            pos = BorrowingPosition(
                id=parts[0],
                debt=Amount.debt(Decimal(parts[1])),
                collateral=Amount.collateral(Decimal(parts[2])),
                borrow_rate=Decimal(parts[3]),
            )
            offset = int(parts[4])
        except (ValueError, ArithmeticError) as exc:
            raise CsvFormatError(str(exc), line=lineno) from exc
        if offset < 0:
            raise CsvFormatError(f"negative path_offset {offset}", line=lineno)
        events.append(LiquidationEvent(position=pos, path_offset=offset))
    return events


def serialize_events_csv(events: Sequence[LiquidationEvent]) -> str:
    lines = [EVENTS_CSV_HEADER]
    for ev in events:
        p = ev.position
        lines.append(
            f"{p.id},{p.debt.value},{p.collateral.value},{p.borrow_rate},{ev.path_offset}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Outcome rows: the per-event CSV that `analyze` can re-aggregate


@dataclass(frozen=True)
class OutcomeRow:
    event_index: int
    position_id: str
    premium_factor: Decimal
    term_seconds: int
    outcome_class: str
    supporter_payoff: Decimal | None
    premium_value: Decimal | None
    release_usd: Decimal
    restraint_usd: Decimal
    price_decline: Decimal | None


def outcome_rows_from_report(
    report: MetricsReport, premium_factor: Decimal, term_seconds: int
) -> list[OutcomeRow]:
    rows = []
    for r in report.results:
        rows.append(
            OutcomeRow(
                event_index=r.index,
                position_id=r.position_id,
                premium_factor=premium_factor,
                term_seconds=term_seconds,
                outcome_class=r.outcome_class,
                supporter_payoff=None if r.settlement is None else r.settlement.supporter_payoff,
                premium_value=None if r.settlement is None else r.settlement.premium_value,
                release_usd=r.release_usd,
                restraint_usd=r.restraint_usd,
                price_decline=r.price_decline,
            )
        )
    return rows


def serialize_outcomes_csv(rows: Sequence[OutcomeRow]) -> str:
    def opt(v: Decimal | None) -> str:
        return "" if v is None else dec_str(v)

    lines = [OUTCOMES_CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [
                    str(r.event_index),
                    r.position_id,
                    str(r.premium_factor),
                    str(r.term_seconds),
                    r.outcome_class,
                    opt(r.supporter_payoff),
                    opt(r.premium_value),
                    dec_str(r.release_usd),
                    dec_str(r.restraint_usd),
                    opt(r.price_decline),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def load_outcomes_csv(data: bytes | str) -> list[OutcomeRow]:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.splitlines()
    if not lines or lines[0].strip() != OUTCOMES_CSV_HEADER:
        raise CsvFormatError("unexpected outcomes header", line=1)
    rows: list[OutcomeRow] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 10:
            raise CsvFormatError(f"expected 10 fields, got {len(parts)}", line=lineno)
        try:
            rows.append(
                OutcomeRow(
                    event_index=int(parts[0]),
                    position_id=parts[1],
                    premium_factor=Decimal(parts[2]),
                    term_seconds=int(parts[3]),
                    outcome_class=parts[4],
                    supporter_payoff=Decimal(parts[5]) if parts[5] else None,
                    premium_value=Decimal(parts[6]) if parts[6] else None,
                    release_usd=Decimal(parts[7]),
                    restraint_usd=Decimal(parts[8]),
                    price_decline=Decimal(parts[9]) if parts[9] else None,
                )
            )
        except (ValueError, ArithmeticError) as exc:
            raise CsvFormatError(str(exc), line=lineno) from exc
    return rows


def aggregate_outcome_rows(rows: Sequence[OutcomeRow]) -> dict:
    """Recompute release, restraint and the payoff table from outcome rows."""
    release = _sum(r.release_usd for r in rows)
    restraint = _sum(r.restraint_usd for r in rows)
    groups: dict[tuple[Decimal, int], list[tuple[str, Decimal]]] = {}
    for r in rows:
        if r.outcome_class in _MATURITY_CLASSES and r.supporter_payoff is not None:
            groups.setdefault((r.premium_factor, r.term_seconds), []).append(
                (r.outcome_class, r.supporter_payoff)
            )
    payoff_rows = []
    for (lam, term), classified in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        row = _payoff_row(lam, term, classified)
        if row is not None:
            payoff_rows.append(row)
    return {
        "collateral_release_usd": dec_str(release),
        "collateral_restraint_usd": dec_str(restraint),
        "payoff_table": [row.to_json_dict() for row in payoff_rows],
    }

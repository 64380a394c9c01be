"""The Miqado support protocol: a reversible call option on a distressed
borrowing position.

Lifecycle. A supporter tops up an eligible position by a premium factor
lambda of its collateral, which buys the right to take the whole position
over at maturity. Before maturity the borrower may terminate, returning
the top-up plus a reimbursement; at maturity the supporter either
exercises (repays the debt, takes all collateral) or defaults (forfeits
the top-up, which stays in the position).

Termination economics. The borrower's reimbursement is
top-up * (1 + borrow_rate) * k_re with 0 < k_re < 1, and the top-up itself
goes back to the supporter. The supporter therefore always exits a
termination with more collateral than they put in: an effective multiple
of 1 + (1 + borrow_rate) * k_re > 1 on the premium.

Sessions move Active -> {Terminated, Exercised, Defaulted} exactly once;
replaying a terminal session raises SessionStateError.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from fractions import Fraction

from .core import (
    SECONDS_PER_YEAR,
    Amount,
    BorrowingPosition,
    Numeric,
    Price,
    collateralization_ratio,
    health_factor,
    ledger_context,
    to_decimal,
)
from .errors import (
    ActiveSessionError,
    NotEligibleError,
    SessionStateError,
    TooEarlyError,
    TooLateError,
)
from .option import optimal_premium_factor


class MiqadoMode(Enum):
    #: Support replaces liquidation entirely; the window is health factor < 1.
    PURE = "pure"
    #: Support runs alongside fixed-spread liquidation; the window is the
    #: support factor CR * (theta + buffer) < 1.
    HYBRID = "hybrid"


class StrikeRule(Enum):
    #: Takeover strike equals the outstanding debt at maturity.
    OUTSTANDING_DEBT = "outstanding_debt"


class SessionState(Enum):
    ACTIVE = "active"
    TERMINATED = "terminated"
    EXERCISED = "exercised"
    DEFAULTED = "defaulted"


@dataclass(frozen=True)
class MiqadoParams:
    """Protocol parameters.

    premium_factor: top-up fraction lambda of the position's collateral.
    term_seconds: option lifetime.
    k_re: borrower reimbursement factor in (0, 1).
    buffer: hybrid-mode addition to theta in the support factor. Kept as a
        free non-negative parameter; small values are the useful range.
    rescue_above_hf: borrower policy. None means the borrower never
        terminates; a threshold means they terminate at the first price
        where the topped-up health factor reaches it.
    """

    premium_factor: Decimal
    term_seconds: int
    k_re: Decimal
    buffer: Decimal = Decimal("0")
    mode: MiqadoMode = MiqadoMode.HYBRID
    strike_rule: StrikeRule = StrikeRule.OUTSTANDING_DEBT
    rescue_above_hf: Decimal | None = None

    def __post_init__(self):
        object.__setattr__(self, "premium_factor", to_decimal(self.premium_factor))
        object.__setattr__(self, "k_re", to_decimal(self.k_re))
        object.__setattr__(self, "buffer", to_decimal(self.buffer))
        if self.rescue_above_hf is not None:
            object.__setattr__(self, "rescue_above_hf", to_decimal(self.rescue_above_hf))
        if self.premium_factor <= 0:
            raise ValueError("premium_factor must be > 0")
        if self.term_seconds <= 0:
            raise ValueError("term_seconds must be > 0")
        if not 0 < self.k_re < 1:
            raise ValueError("k_re must lie in (0, 1)")
        if self.buffer < 0:
            raise ValueError("buffer must be >= 0")

    @property
    def term_years(self) -> float:
        return self.term_seconds / SECONDS_PER_YEAR


@dataclass
class MiqadoSession:
    """One live engagement between a supporter and a position."""

    id: str
    position_id: str
    topup: Amount  # collateral units, lambda * C_t0
    premium_value: Amount  # debt units, lambda * C_t0 * p_t0
    collateral_at_start: Amount
    price_at_start: Price
    borrow_rate: Decimal
    started: int
    maturity: int
    state: SessionState = SessionState.ACTIVE


@dataclass(frozen=True)
class SettlementOutcome:
    """How a session ended and who got what.

    supporter_payoff is in debt units; borrower_cost and
    supporter_receipt_collateral are in collateral units.
    """

    state: SessionState
    supporter_payoff: Decimal
    borrower_cost: Decimal
    collateral_disposition: str
    premium_value: Decimal
    supporter_receipt_collateral: Decimal


def support_factor(pos: BorrowingPosition, p: Price, theta: Numeric, buffer: Numeric) -> Fraction:
    """CR * (theta + buffer): below one, supporters may engage (hybrid)."""
    return collateralization_ratio(pos, p) * (
        Fraction(to_decimal(theta)) + Fraction(to_decimal(buffer))
    )


def can_initiate(
    pos: BorrowingPosition, p: Price, theta: Numeric, params: MiqadoParams
) -> bool:
    """Engagement window test.

    Pure mode opens when the health factor is strictly below one. Hybrid
    mode opens when the support factor CR * (theta + buffer) is strictly
    below one.
    """
    if params.mode is MiqadoMode.PURE:
        return health_factor(pos, p, theta) < 1
    return support_factor(pos, p, theta, params.buffer) < 1


def initiate(
    pos: BorrowingPosition,
    p: Price,
    theta: Numeric,
    params: MiqadoParams,
    now: int,
) -> MiqadoSession:
    """Open a session: top up lambda * collateral, lock the position.

    The top-up multiplies the collateral, hence the health factor, by
    exactly (1 + lambda). The premium's debt-unit value is fixed at the
    initiation price.
    """
    if pos.active_session_id is not None:
        raise ActiveSessionError(
            f"position {pos.id} already has session {pos.active_session_id}"
        )
    if not can_initiate(pos, p, theta, params):
        raise NotEligibleError(f"position {pos.id} is outside the engagement window")
    topup = pos.collateral.scaled(params.premium_factor)
    with ledger_context():
        premium_value = topup.value * p.value
    session = MiqadoSession(
        id=f"{pos.id}@{now}",
        position_id=pos.id,
        topup=topup,
        premium_value=Amount.debt(premium_value),
        collateral_at_start=pos.collateral,
        price_at_start=p,
        borrow_rate=pos.borrow_rate,
        started=now,
        maturity=now + params.term_seconds,
    )
    pos.collateral = pos.collateral + topup
    pos.active_session_id = session.id
    return session


def _require_active(session: MiqadoSession) -> None:
    if session.state is not SessionState.ACTIVE:
        raise SessionStateError(
            f"session {session.id} is {session.state.value}, not active"
        )


def terminate(
    session: MiqadoSession,
    pos: BorrowingPosition,
    p: Price,
    now: int,
    params: MiqadoParams,
) -> SettlementOutcome:
    """Borrower buys the supporter out before maturity.

    The position's collateral reverts to its pre-session level; the
    supporter walks away with the top-up plus the reimbursement
    topup * (1 + borrow_rate) * k_re, paid by the borrower out of pocket.
    """
    _require_active(session)
    if now >= session.maturity:
        raise TooLateError(f"cannot terminate at/after maturity {session.maturity}")
    if now <= session.started:
        raise TooEarlyError("termination window opens after the session starts")
    with ledger_context():
        reimbursement = (
            session.topup.value * (1 + session.borrow_rate) * params.k_re
        )
        receipt = session.topup.value + reimbursement
        payoff = reimbursement * p.value
    pos.collateral = pos.collateral - session.topup
    pos.active_session_id = None
    session.state = SessionState.TERMINATED
    return SettlementOutcome(
        state=SessionState.TERMINATED,
        supporter_payoff=payoff,
        borrower_cost=reimbursement,
        collateral_disposition=(
            "top-up returned to supporter plus borrower reimbursement; "
            "position collateral restored"
        ),
        premium_value=session.premium_value.value,
        supporter_receipt_collateral=receipt,
    )


def settle_at_maturity(
    session: MiqadoSession,
    pos: BorrowingPosition,
    p_maturity: Price,
    now: int | None = None,
) -> SettlementOutcome:
    """Exercise-or-default decision at maturity.

    The supporter exercises (full takeover) when the collateral including
    the top-up is worth at least the outstanding debt: they repay the debt,
    take all collateral, and the position closes. Otherwise they default:
    the premium is lost in full and the top-up stays in the position.
    """
    _require_active(session)
    if now is not None and now < session.maturity:
        raise TooEarlyError(
            f"maturity is {session.maturity}, cannot settle at {now}"
        )
    strike = pos.debt.value  # outstanding-debt strike rule
    with ledger_context():
        collateral_value = pos.collateral.value * p_maturity.value
    if collateral_value >= strike:
        with ledger_context():
            payoff = collateral_value - strike - session.premium_value.value
        receipt = pos.collateral.value
        # Full takeover: supporter repays the debt, takes every collateral
        # unit, and the position closes.
        pos.debt = Amount(Decimal(0), pos.debt.unit)
        pos.collateral = Amount(Decimal(0), pos.collateral.unit)
        pos.active_session_id = None
        session.state = SessionState.EXERCISED
        return SettlementOutcome(
            state=SessionState.EXERCISED,
            supporter_payoff=payoff,
            borrower_cost=Decimal(0),
            collateral_disposition="full takeover: supporter repaid the debt and received all collateral",
            premium_value=session.premium_value.value,
            supporter_receipt_collateral=receipt,
        )
    with ledger_context():
        payoff = -session.premium_value.value
    pos.active_session_id = None
    session.state = SessionState.DEFAULTED
    return SettlementOutcome(
        state=SessionState.DEFAULTED,
        supporter_payoff=payoff,
        borrower_cost=Decimal(0),
        collateral_disposition="default: top-up remains in the position's collateral",
        premium_value=session.premium_value.value,
        supporter_receipt_collateral=Decimal(0),
    )


def supporter_decision(
    pos: BorrowingPosition,
    p: Price,
    theta: Numeric,
    params: MiqadoParams,
    sigma: float,
    foreign_rate: float = 0.0,
) -> bool:
    """Engage iff the protocol's premium factor is at or below break-even.

    The break-even factor prices the takeover right as a European call
    with strike equal to the current outstanding debt, domestic rate equal
    to the position's borrow rate, and the given volatility. Ties engage.
    """
    if not can_initiate(pos, p, theta, params):
        raise NotEligibleError(f"position {pos.id} is outside the engagement window")
    lam_star = optimal_premium_factor(
        p,
        pos.collateral,
        strike=float(pos.debt.value),
        domestic_rate=float(pos.borrow_rate),
        foreign_rate=foreign_rate,
        sigma=sigma,
        term=params.term_years,
    )
    return float(params.premium_factor) <= lam_star

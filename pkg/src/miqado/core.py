"""Collateralized debt arithmetic and the fixed-spread liquidation mechanism.

Ledger conventions
------------------
All debt and collateral quantities are `decimal.Decimal` wrapped in a
unit-tagged :class:`Amount`; prices are debt units per collateral unit.
Ledger arithmetic runs in an 80-digit decimal context so that sums,
differences and products of realistic magnitudes are exact; the only
rounding happens on divisions (collateral seized per repaid debt) and on
serialization, which quantizes to 18 fractional digits.

Ratio-valued quantities (health factor, collateralization ratio) are
returned as `fractions.Fraction` so identities such as CR * theta == HF
hold exactly, not merely to the last retained digit.

Timestamps are integer Unix seconds throughout the package; durations are
converted to years by dividing by `SECONDS_PER_YEAR`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Context, Decimal, InvalidOperation, localcontext
from enum import Enum
from fractions import Fraction
from typing import Union

from .errors import (
    CloseFactorViolationError,
    NotLiquidatableError,
    UndefinedHealthError,
    UnitMismatchError,
)

SECONDS_PER_YEAR = 31_536_000

#: Working precision for ledger arithmetic. Wide enough that products of
#: 18-fractional-digit operands at realistic magnitudes never round.
LEDGER_PRECISION = 80

#: Resolution used when quantizing ledger values for reports and CSV output.
QUANTUM = Decimal("1E-18")

_LEDGER_CTX = Context(prec=LEDGER_PRECISION)

Numeric = Union[Decimal, int, str, float]


def ledger_context():
    """Context manager activating the 80-digit ledger arithmetic context."""
    return localcontext(_LEDGER_CTX)


def to_decimal(value: Numeric) -> Decimal:
    """Coerce a number to Decimal. Floats go through repr() so a literal
    like 0.05 becomes Decimal('0.05'), not its binary expansion."""
    if isinstance(value, Decimal):
        return value
    if isinstance(value, int):
        return Decimal(value)
    if isinstance(value, float):
        return Decimal(repr(value))
    try:
        return Decimal(value)
    except InvalidOperation as exc:
        raise ValueError(f"not a decimal literal: {value!r}") from exc


def quantize(value: Decimal) -> Decimal:
    """Round to the 18-fractional-digit report grid (half-even)."""
    with ledger_context():
        q = value.quantize(QUANTUM)
    if q == 0:
        q = abs(q)  # normalize -0
    return q


def dec_str(value: Decimal) -> str:
    """Fixed-point 18-digit rendering for reports ('0.000...' not '0E-18')."""
    return format(quantize(value), "f")


class Unit(str, Enum):
    DEBT = "debt"
    COLLATERAL = "collateral"


@dataclass(frozen=True)
class Amount:
    """A non-negative quantity of one currency, tagged debt or collateral.

    Same-unit amounts add and subtract; mixing units raises
    :class:`UnitMismatchError`. Subtraction below zero raises ValueError:
    the ledger never holds negative balances.
    """

    value: Decimal
    unit: Unit

    def __post_init__(self):
        object.__setattr__(self, "value", to_decimal(self.value))
        if not self.value.is_finite():
            raise ValueError("amount must be finite")
        if self.value < 0:
            raise ValueError(f"amount must be non-negative, got {self.value}")

    @classmethod
    def debt(cls, value: Numeric) -> "Amount":
        return cls(to_decimal(value), Unit.DEBT)

    @classmethod
    def collateral(cls, value: Numeric) -> "Amount":
        return cls(to_decimal(value), Unit.COLLATERAL)

    def _check_unit(self, other: "Amount") -> None:
        if self.unit is not other.unit:
            raise UnitMismatchError(
                f"cannot combine {self.unit.value} and {other.unit.value} amounts"
            )

    def __add__(self, other: "Amount") -> "Amount":
        self._check_unit(other)
        with ledger_context():
            return Amount(self.value + other.value, self.unit)

    def __sub__(self, other: "Amount") -> "Amount":
        self._check_unit(other)
        with ledger_context():
            out = self.value - other.value
        if out < 0:
            raise ValueError("amount subtraction went negative")
        return Amount(out, self.unit)

    def scaled(self, factor: Numeric) -> "Amount":
        """Multiply by a non-negative scalar (exact in the ledger context)."""
        f = to_decimal(factor)
        if f < 0:
            raise ValueError("scale factor must be non-negative")
        with ledger_context():
            return Amount(self.value * f, self.unit)

    def __lt__(self, other: "Amount") -> bool:
        self._check_unit(other)
        return self.value < other.value

    def __le__(self, other: "Amount") -> bool:
        self._check_unit(other)
        return self.value <= other.value

    def is_zero(self) -> bool:
        return self.value == 0


@dataclass(frozen=True)
class Price:
    """Exchange rate: debt units per collateral unit. Strictly positive."""

    value: Decimal

    def __post_init__(self):
        object.__setattr__(self, "value", to_decimal(self.value))
        if not (self.value.is_finite() and self.value > 0):
            raise ValueError(f"price must be finite and > 0, got {self.value}")


@dataclass
class BorrowingPosition:
    """A single-debt, single-collateral borrowing position.

    `borrow_rate` is the interest fraction the borrower pays over one
    option term; it is applied once at termination, never accrued step by
    step. `active_session_id` is the engagement lock: at most one support
    session may be live on a position.
    """

    id: str
    debt: Amount
    collateral: Amount
    borrow_rate: Decimal
    active_session_id: str | None = None

    def __post_init__(self):
        if self.debt.unit is not Unit.DEBT:
            raise UnitMismatchError("position debt must be a debt-unit amount")
        if self.collateral.unit is not Unit.COLLATERAL:
            raise UnitMismatchError("position collateral must be a collateral-unit amount")
        if self.debt.value <= 0:
            raise ValueError("open position must have positive debt")
        self.borrow_rate = to_decimal(self.borrow_rate)
        if not (0 < self.borrow_rate < 1):
            raise ValueError("borrow_rate must lie in (0, 1)")

    @property
    def is_closed(self) -> bool:
        return self.debt.value == 0


@dataclass(frozen=True)
class FslParams:
    """Fixed-spread liquidation parameters.

    theta: collateral discount in (0,1) used by the health factor.
    close_factor: maximum fraction of debt repayable in one liquidation.
    spread: liquidator's bonus on seized collateral.
    """

    theta: Decimal
    close_factor: Decimal
    spread: Decimal

    def __post_init__(self):
        object.__setattr__(self, "theta", to_decimal(self.theta))
        object.__setattr__(self, "close_factor", to_decimal(self.close_factor))
        object.__setattr__(self, "spread", to_decimal(self.spread))
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if not 0 < self.close_factor <= 1:
            raise ValueError("close_factor must lie in (0, 1]")
        if self.spread <= 0:
            raise ValueError("spread must be > 0")


@dataclass(frozen=True)
class FslOutcome:
    """Result of one fixed-spread liquidation.

    `shortfall` is set when the wanted seizure exceeded the available
    collateral; in that case the repayment was scaled down proportionally
    and the whole collateral balance was taken.
    """

    debt_repaid: Amount
    collateral_seized: Amount
    liquidator_profit: Amount  # debt units: debt_repaid * spread
    shortfall: bool


def health_factor(pos: BorrowingPosition, p: Price, theta: Numeric) -> Fraction:
    """Discounted collateral value over debt: C * p * theta / D.

    Returned as an exact Fraction; the position is liquidatable when the
    result is below one.
    """
    if pos.debt.value == 0:
        raise UndefinedHealthError(f"position {pos.id} has zero debt")
    return (
        Fraction(pos.collateral.value)
        * Fraction(p.value)
        * Fraction(to_decimal(theta))
        / Fraction(pos.debt.value)
    )


def collateralization_ratio(pos: BorrowingPosition, p: Price) -> Fraction:
    """Collateral value over debt: C * p / D (no discount)."""
    if pos.debt.value == 0:
        raise UndefinedHealthError(f"position {pos.id} has zero debt")
    return Fraction(pos.collateral.value) * Fraction(p.value) / Fraction(pos.debt.value)


def is_liquidatable(pos: BorrowingPosition, p: Price, theta: Numeric) -> bool:
    """True when the health factor is strictly below one."""
    return health_factor(pos, p, theta) < 1


def execute_fsl(
    pos: BorrowingPosition, p: Price, params: FslParams, repay: Amount
) -> FslOutcome:
    """Repay part of an unhealthy position's debt and seize collateral.

    The liquidator repays `repay` debt units (at most close_factor * debt)
    and takes repay * (1 + spread) / p collateral units. If that exceeds
    the collateral on hand, the seizure is clamped to the full balance and
    the repayment reduced proportionally (shortfall). The position is
    mutated in place; the outcome reports the exact ledger movements.
    """
    if repay.unit is not Unit.DEBT:
        raise UnitMismatchError("repay must be a debt-unit amount")
    if not is_liquidatable(pos, p, params.theta):
        raise NotLiquidatableError(f"position {pos.id} is healthy")
    with ledger_context():
        max_repay = pos.debt.value * params.close_factor
        if repay.value > max_repay:
            raise CloseFactorViolationError(
                f"repay {repay.value} exceeds close-factor bound {max_repay}"
            )
        bonus = 1 + params.spread
        repaid = repay.value
        seized = repaid * bonus / p.value
        shortfall = False
        if seized > pos.collateral.value:
            seized = pos.collateral.value
            repaid = seized * p.value / bonus
            shortfall = True
        profit = repaid * params.spread
    pos.debt = pos.debt - Amount.debt(repaid)
    pos.collateral = pos.collateral - Amount.collateral(seized)
    return FslOutcome(
        debt_repaid=Amount.debt(repaid),
        collateral_seized=Amount.collateral(seized),
        liquidator_profit=Amount.debt(profit),
        shortfall=shortfall,
    )


def fsl_post_health_factor(
    pos: BorrowingPosition, p: Price, params: FslParams
) -> Fraction | float:
    """Health factor the position would have after a maximal liquidation.

    A pure counterfactual on the numbers; the position is never mutated
    and need not currently be liquidatable. A full close (close_factor 1
    with sufficient collateral) leaves no debt, so the result is the
    +infinity sentinel. When the seizure would exceed the collateral, it
    is clamped exactly as in :func:`execute_fsl`.
    """
    with ledger_context():
        bonus = 1 + params.spread
        repaid = pos.debt.value * params.close_factor
        seized = repaid * bonus / p.value
        if seized > pos.collateral.value:
            seized = pos.collateral.value
            repaid = seized * p.value / bonus
        debt_after = pos.debt.value - repaid
        coll_after = pos.collateral.value - seized
    if debt_after == 0:
        return math.inf
    return (
        Fraction(coll_after)
        * Fraction(p.value)
        * Fraction(params.theta)
        / Fraction(debt_after)
    )

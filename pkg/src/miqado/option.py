"""Reversible call option payoffs and Black-Scholes-style valuation.

Unlike the ledger modules this one computes in binary floating point:
option values are model estimates, not account balances.

A reversible call option is a European call whose seller may buy their way
out before maturity by paying the buyer a multiple of the premium. At
maturity the buyer's payoff is the familiar piecewise-linear call payoff;
on early termination it is the flat reimbursement.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from decimal import Decimal

from .core import Amount, Price, Unit, to_decimal
from .errors import InsufficientDataError
from .market import PricePath

_SQRT2 = math.sqrt(2.0)


def std_normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / _SQRT2)


def buyer_payoff_at_maturity(asset_value_at_maturity: float, strike: float, premium: float) -> float:
    """Call-style payoff net of the premium paid up front.

    Piecewise linear, continuous at the strike, floored at -premium.
    """
    if premium < 0:
        raise ValueError("premium must be >= 0")
    if asset_value_at_maturity >= strike:
        return asset_value_at_maturity - strike - premium
    return -premium


def termination_payoff(premium: float, k: float) -> float:
    """Flat reimbursement the buyer receives if the seller terminates."""
    if k <= 0:
        raise ValueError("reimbursement multiple must be > 0")
    return premium * k


@dataclass(frozen=True)
class ReversibleCallOption:
    """Contract record: the right to buy `asset_amount` at `strike` at
    maturity, bought for `premium`, terminable by the seller against a
    reimbursement of premium * reimbursement_factor."""

    asset_amount: Amount  # collateral units
    strike: Amount  # debt units
    premium: Amount  # debt units
    reimbursement_factor: Decimal
    start: int
    maturity: int

    def __post_init__(self):
        if self.asset_amount.unit is not Unit.COLLATERAL:
            raise ValueError("asset_amount must be collateral units")
        if self.strike.unit is not Unit.DEBT or self.premium.unit is not Unit.DEBT:
            raise ValueError("strike and premium must be debt units")
        if self.maturity <= self.start:
            raise ValueError("maturity must be after start")
        if self.asset_amount.is_zero() or self.strike.is_zero() or self.premium.is_zero():
            raise ValueError("asset amount, strike and premium must be > 0")
        object.__setattr__(
            self, "reimbursement_factor", to_decimal(self.reimbursement_factor)
        )

    def buyer_payoff(self, asset_value_at_maturity: float) -> float:
        return buyer_payoff_at_maturity(
            asset_value_at_maturity, float(self.strike.value), float(self.premium.value)
        )

    def payoff_if_terminated(self) -> float:
        return termination_payoff(
            float(self.premium.value), float(self.reimbursement_factor)
        )


@dataclass(frozen=True)
class BsInputs:
    """Inputs for the two-rate European call formula.

    spot is the exchange rate at valuation time, domestic_rate discounts
    the strike currency, foreign_rate the asset currency, volatility is
    annualized, term is in years.
    """

    spot: float
    strike: float
    domestic_rate: float
    foreign_rate: float
    volatility: float
    term: float

    def __post_init__(self):
        if self.spot <= 0:
            raise ValueError("spot must be > 0")
        if self.strike <= 0:
            raise ValueError("strike must be > 0")
        if self.volatility < 0:
            raise ValueError("volatility must be >= 0")
        if self.term <= 0:
            raise ValueError("term must be > 0")


def bs_call_price(inputs: BsInputs) -> float:
    """European call value S0 e^{-rf T} N(d1) - K e^{-r T} N(d2).

    d1 = (ln(S0/K) + (r - rf + sigma^2/2) T) / (sigma sqrt(T)) and
    d2 = d1 - sigma sqrt(T). Zero volatility degenerates to the
    deterministic forward payoff max(S0 e^{-rf T} - K e^{-r T}, 0).
    """
    s0, k = inputs.spot, inputs.strike
    disc_f = math.exp(-inputs.foreign_rate * inputs.term)
    disc_d = math.exp(-inputs.domestic_rate * inputs.term)
    vol_sqrt_t = inputs.volatility * math.sqrt(inputs.term)
    if vol_sqrt_t == 0:
        return max(s0 * disc_f - k * disc_d, 0.0)
    d1 = (
        math.log(s0 / k)
        + (inputs.domestic_rate - inputs.foreign_rate + 0.5 * inputs.volatility**2)
        * inputs.term
    ) / vol_sqrt_t
    d2 = d1 - vol_sqrt_t
    price = s0 * disc_f * std_normal_cdf(d1) - k * disc_d * std_normal_cdf(d2)
    return max(price, 0.0)


def optimal_premium_factor(
    p_t0: Price,
    c_t0: Amount,
    strike: float,
    domestic_rate: float,
    foreign_rate: float,
    sigma: float,
    term: float,
) -> float:
    """Break-even premium factor: option value over collateral value.

    A supporter paying a top-up fraction at or below this factor pays no
    more than the model value of the takeover right.
    """
    if c_t0.value == 0:
        raise ZeroDivisionError("collateral is zero, premium factor undefined")
    price = bs_call_price(
        BsInputs(
            spot=float(p_t0.value),
            strike=strike,
            domestic_rate=domestic_rate,
            foreign_rate=foreign_rate,
            volatility=sigma,
            term=term,
        )
    )
    return price / (float(c_t0.value) * float(p_t0.value))


def historical_volatility(path: PricePath, periods_per_year: float) -> float:
    """Annualized sample standard deviation of log returns.

    Uses n-1 normalization; needs at least three points (two returns).
    """
    if len(path) < 3:
        raise InsufficientDataError(
            f"need at least 3 price points, got {len(path)}"
        )
    prices = [float(pt.price.value) for pt in path.points]
    returns = [math.log(b / a) for a, b in zip(prices, prices[1:])]
    return statistics.stdev(returns) * math.sqrt(periods_per_year)

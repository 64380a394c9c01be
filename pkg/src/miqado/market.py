"""Price paths (historical CSV or synthetic GBM) and a constant-product AMM.

The CSV wire format is `timestamp,price`: one point per line, integer Unix
seconds, decimal price literal, strictly increasing timestamps. Parsing and
serialization round-trip bit-exactly because prices are kept as Decimal.

Synthetic paths use geometric Brownian motion driven by a PCG64 generator;
normal variates come from the inverse CDF applied to open-interval
uniforms (53-bit integers mapped into (0,1)), so a seed pins the path
bytes on every platform.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, replace
from decimal import Decimal
from typing import Iterable

import numpy as np
from scipy.special import ndtri

from .core import (
    SECONDS_PER_YEAR,
    Amount,
    Numeric,
    Price,
    ledger_context,
    to_decimal,
)
from .errors import CsvFormatError, PathRangeError

PRICE_CSV_HEADER = "timestamp,price"


@dataclass(frozen=True)
class PricePoint:
    timestamp: int
    price: Price


@dataclass(frozen=True)
class PricePath:
    """An ordered, strictly-increasing-in-time series of positive prices."""

    points: tuple[PricePoint, ...]

    def __post_init__(self):
        if len(self.points) == 0:
            raise ValueError("price path must contain at least one point")
        for a, b in zip(self.points, self.points[1:]):
            if b.timestamp <= a.timestamp:
                raise ValueError(
                    f"timestamps must be strictly increasing ({a.timestamp} then {b.timestamp})"
                )

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i: int) -> PricePoint:
        return self.points[i]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, Numeric]]) -> "PricePath":
        return cls(tuple(PricePoint(int(t), Price(to_decimal(v))) for t, v in pairs))

    def index_at_or_after(self, timestamp: int) -> int:
        """Index of the first point with timestamp >= the argument."""
        stamps = [pt.timestamp for pt in self.points]
        i = bisect.bisect_left(stamps, timestamp)
        if i == len(self.points):
            raise PathRangeError(
                f"path ends at {stamps[-1]}, before requested timestamp {timestamp}"
            )
        return i


def load_price_csv(data: bytes | str) -> PricePath:
    """Parse the price CSV format, reporting the offending line on error."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.splitlines()
    if not lines:
        raise CsvFormatError("empty input, expected header " + PRICE_CSV_HEADER)
    if lines[0].strip() != PRICE_CSV_HEADER:
        raise CsvFormatError(f"expected header {PRICE_CSV_HEADER!r}", line=1)
    points: list[PricePoint] = []
    last_ts: int | None = None
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 2:
            raise CsvFormatError(f"expected 2 fields, got {len(parts)}", line=lineno)
        try:
            ts = int(parts[0])
        except ValueError:
            raise CsvFormatError(f"bad timestamp {parts[0]!r}", line=lineno) from None
        try:
            price = Decimal(parts[1])
        except Exception:
            raise CsvFormatError(f"bad price {parts[1]!r}", line=lineno) from None
        if not (price.is_finite() and price > 0):
            raise CsvFormatError(f"price must be > 0, got {parts[1]}", line=lineno)
        if last_ts is not None and ts <= last_ts:
            raise CsvFormatError(
                f"timestamp {ts} not greater than previous {last_ts}", line=lineno
            )
        last_ts = ts
        points.append(PricePoint(ts, Price(price)))
    if not points:
        raise CsvFormatError("no data rows after header")
    return PricePath(tuple(points))


def serialize_price_csv(path: PricePath) -> str:
    lines = [PRICE_CSV_HEADER]
    lines.extend(f"{pt.timestamp},{pt.price.value}" for pt in path.points)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class GbmParams:
    """Geometric Brownian motion inputs. `dt` is years per step."""

    p0: Price
    mu: float
    sigma: float
    dt: float
    steps: int
    seed: int
    start_ts: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if round(self.dt * SECONDS_PER_YEAR) < 1:
            raise ValueError("dt is below one second of resolution")


def _open_uniforms(rng: np.random.Generator, n: int) -> np.ndarray:
    # 53-bit integers in [1, 2^53 - 1] mapped to the open interval (0, 1),
    # so the inverse CDF below never sees 0 or 1.
    return rng.integers(1, 2**53, size=n).astype(np.float64) / float(2**53)


def generate_gbm(params: GbmParams) -> PricePath:
    """Simulate p_{i+1} = p_i * exp((mu - sigma^2/2) dt + sigma sqrt(dt) z_i).

    z_i are standard normals from ndtri over PCG64 uniforms. Identical
    seeds give identical paths. With sigma == 0 the closed form
    p_i = p0 * exp(mu * i * dt) is used directly.
    """
    step_seconds = round(params.dt * SECONDS_PER_YEAR)
    p0 = float(params.p0.value)
    stamps = [params.start_ts + i * step_seconds for i in range(params.steps + 1)]
    if params.sigma == 0:
        values = [p0 * math.exp(params.mu * i * params.dt) for i in range(params.steps + 1)]
    else:
        rng = np.random.Generator(np.random.PCG64(params.seed))
        z = ndtri(_open_uniforms(rng, params.steps))
        drift = (params.mu - 0.5 * params.sigma * params.sigma) * params.dt
        vol = params.sigma * math.sqrt(params.dt)
        values = [p0]
        for zi in z:
            values.append(values[-1] * math.exp(drift + vol * float(zi)))
    return PricePath.from_pairs(zip(stamps, (Decimal(repr(v)) for v in values)))


@dataclass
class CpAmmPool:
    """Constant-product pool: reserve_quote (debt units) x reserve_base
    (collateral units). Spot price is quote/base. Fee is taken on the way
    in, Uniswap-v2 style, and stays in the reserves; analytic identities
    (product preservation, the price-ratio law) need fee=0."""

    reserve_quote: Decimal
    reserve_base: Decimal
    fee: Decimal = Decimal("0.003")

    def __post_init__(self):
        self.reserve_quote = to_decimal(self.reserve_quote)
        self.reserve_base = to_decimal(self.reserve_base)
        self.fee = to_decimal(self.fee)
        if self.reserve_quote <= 0 or self.reserve_base <= 0:
            raise ValueError("reserves must be > 0")
        if not 0 <= self.fee < 1:
            raise ValueError("fee must lie in [0, 1)")

    @property
    def spot(self) -> Decimal:
        with ledger_context():
            return self.reserve_quote / self.reserve_base

    def copy(self) -> "CpAmmPool":
        return replace(self)


def amm_swap_base_for_quote(
    pool: CpAmmPool, amount_base_in: Numeric
) -> tuple[Decimal, Decimal]:
    """Sell base into the pool; returns (quote_out, new_spot).

    Mutates the pool reserves. With fee == 0 the product x*y is preserved
    to the working precision, so the price ratio after selling dy is
    (y / (y + dy))^2.
    """
    dy = to_decimal(amount_base_in)
    if dy < 0:
        raise ValueError("amount_base_in must be >= 0")
    if dy == 0:
        return Decimal(0), pool.spot
    with ledger_context():
        x, y = pool.reserve_quote, pool.reserve_base
        dy_eff = dy * (1 - pool.fee)
        k = x * y
        new_x = k / (y + dy_eff)
        quote_out = x - new_x
        pool.reserve_quote = x - quote_out
        pool.reserve_base = y + dy
        new_spot = pool.reserve_quote / pool.reserve_base
    return quote_out, new_spot


def direct_price_decline(
    pool: CpAmmPool, seized: Amount, sold_fraction: Numeric
) -> Decimal:
    """Relative spot decline from selling seized * sold_fraction.

    Works on a copy of the pool, so repeated metric evaluation does not
    drain the reserves.
    """
    frac = to_decimal(sold_fraction)
    if not 0 <= frac <= 1:
        raise ValueError("sold_fraction must lie in [0, 1]")
    scratch = pool.copy()
    before = scratch.spot
    with ledger_context():
        sold = seized.value * frac
    _, after = amm_swap_base_for_quote(scratch, sold)
    with ledger_context():
        return (before - after) / before


def pool_from_price_impact(
    spot_before: Numeric, spot_after: Numeric, base_sold: Numeric, fee: Numeric = 0
) -> CpAmmPool:
    """Reconstruct fee-free-equivalent reserves from one observed trade.

    Under the constant product rule the price ratio after selling dy is
    (y/(y+dy))^2, so y = dy * r / (1 - r) with r = sqrt(after/before).
    The returned pool has the given spot and reproduces the observed
    decline when `base_sold` is sold into it.
    """
    p0 = to_decimal(spot_before)
    p1 = to_decimal(spot_after)
    dy = to_decimal(base_sold)
    if not 0 < p1 < p0:
        raise ValueError("need 0 < spot_after < spot_before")
    if dy <= 0:
        raise ValueError("base_sold must be > 0")
    with ledger_context():
        rho = (p1 / p0).sqrt()
        y = dy * rho / (1 - rho)
        x = p0 * y
    return CpAmmPool(reserve_quote=x, reserve_base=y, fee=to_decimal(fee))

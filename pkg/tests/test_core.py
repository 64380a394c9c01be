"""Ledger arithmetic: health factors, collateralization, fixed-spread
liquidation. Expected values are hand evaluations of the definitions."""

import math
from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from miqado.core import (
    Amount,
    BorrowingPosition,
    FslParams,
    Price,
    collateralization_ratio,
    execute_fsl,
    fsl_post_health_factor,
    health_factor,
    is_liquidatable,
    quantize,
)
from miqado.errors import (
    CloseFactorViolationError,
    NotLiquidatableError,
    UndefinedHealthError,
    UnitMismatchError,
)


def make_pos(debt="100", collateral="150", rate="0.05", pid="p1"):
    return BorrowingPosition(
        id=pid,
        debt=Amount.debt(Decimal(debt)),
        collateral=Amount.collateral(Decimal(collateral)),
        borrow_rate=Decimal(rate),
    )


# Strategies producing on-grid decimals (values exactly representable at
# 18 fractional digits), so ledger products stay exact.
pos_decimals = st.decimals(
    min_value=Decimal("0.000001"), max_value=Decimal("1000000"),
    places=6, allow_nan=False, allow_infinity=False,
)
unit_fractions = st.decimals(
    min_value=Decimal("0.000001"), max_value=Decimal("0.999999"),
    places=6, allow_nan=False, allow_infinity=False,
)


class TestHealthFactor:
    def test_hand_example(self):
        pos = make_pos("100", "150")
        assert health_factor(pos, Price(Decimal(1)), Decimal("0.8")) == Fraction(6, 5)

    def test_boundary_identity(self):
        pos = make_pos("100", "125")
        assert health_factor(pos, Price(Decimal(1)), Decimal("0.8")) == 1

    def test_second_hand_example(self):
        pos = make_pos("80", "100")
        hf = health_factor(pos, Price(Decimal("0.9")), Decimal("0.85"))
        assert hf == Fraction(Decimal("0.95625"))

    def test_zero_debt_rejected(self):
        pos = make_pos()
        pos.debt = Amount.debt(0)  # post-takeover state
        with pytest.raises(UndefinedHealthError):
            health_factor(pos, Price(Decimal(1)), Decimal("0.8"))
        with pytest.raises(UndefinedHealthError):
            collateralization_ratio(pos, Price(Decimal(1)))

    @given(c=pos_decimals, d=pos_decimals, p=pos_decimals, theta=unit_fractions)
    def test_cr_theta_identity(self, c, d, p, theta):
        pos = make_pos(str(d), str(c))
        price = Price(p)
        assert collateralization_ratio(pos, price) * Fraction(theta) == health_factor(
            pos, price, theta
        )

    @given(c=pos_decimals, d=pos_decimals, p=pos_decimals, theta=unit_fractions)
    def test_monotonicity(self, c, d, p, theta):
        pos = make_pos(str(d), str(c))
        price = Price(p)
        hf = health_factor(pos, price, theta)
        bigger_c = make_pos(str(d), str(c * 2))
        assert health_factor(bigger_c, price, theta) > hf
        assert health_factor(pos, Price(p * 2), theta) > hf
        bigger_d = make_pos(str(d * 2), str(c))
        assert health_factor(bigger_d, price, theta) < hf


class TestCollateralizationRatio:
    def test_identity_case(self):
        assert collateralization_ratio(make_pos("100", "100"), Price(Decimal(1))) == 1

    def test_hand_example(self):
        assert collateralization_ratio(make_pos("100", "150"), Price(Decimal(1))) == Fraction(3, 2)


class TestIsLiquidatable:
    def test_strictly_below_one(self):
        # HF = 0.999999...: just under the threshold
        pos = make_pos("100.000001", "125")
        assert is_liquidatable(pos, Price(Decimal(1)), Decimal("0.8"))

    def test_boundary_not_liquidatable(self):
        pos = make_pos("100", "125")
        assert not is_liquidatable(pos, Price(Decimal(1)), Decimal("0.8"))

    def test_hand_example(self):
        pos = make_pos("80", "100")
        assert is_liquidatable(pos, Price(Decimal("0.9")), Decimal("0.85"))


FSL = FslParams(theta=Decimal("0.8"), close_factor=Decimal("0.5"), spread=Decimal("0.05"))
# Low discount variant: makes moderately collateralized test positions
# liquidatable at p=1 so the classic worked numbers apply directly.
FSL_LOW = FslParams(theta=Decimal("0.4"), close_factor=Decimal("0.5"), spread=Decimal("0.05"))


class TestExecuteFsl:
    def test_hand_example(self):
        # D=100, C=200, p=1, repay 50, spread 5%: seize 52.5, profit 2.5
        pos = make_pos("100", "200")
        out = execute_fsl(pos, Price(Decimal(1)), FSL_LOW, Amount.debt(50))
        assert out.collateral_seized.value == Decimal("52.5")
        assert out.debt_repaid.value == Decimal("50")
        assert out.liquidator_profit.value == Decimal("2.5")
        assert not out.shortfall
        assert pos.debt.value == Decimal("50")
        assert pos.collateral.value == Decimal("147.5")

    def test_seizure_scales_with_price(self):
        pos = make_pos("100", "200")
        price = Price(Decimal("0.45"))
        out = execute_fsl(pos, price, FSL, Amount.debt(50))
        assert quantize(out.collateral_seized.value) == Decimal("116.666666666666666667")
        assert out.liquidator_profit.value == Decimal("2.5")
        assert pos.debt.value == Decimal("50")

    def test_zero_repay(self):
        pos = make_pos("100", "130")
        out = execute_fsl(pos, Price(Decimal(1)), FSL_LOW, Amount.debt(0))
        assert out.collateral_seized.value == 0
        assert out.debt_repaid.value == 0
        assert out.liquidator_profit.value == 0
        assert pos.debt.value == Decimal("100")
        assert pos.collateral.value == Decimal("130")

    def test_close_factor_violation(self):
        pos = make_pos("100", "130")
        with pytest.raises(CloseFactorViolationError):
            execute_fsl(pos, Price(Decimal(1)), FSL_LOW, Amount.debt(Decimal("50.0001")))

    def test_healthy_position_rejected(self):
        pos = make_pos("100", "200")
        with pytest.raises(NotLiquidatableError):
            execute_fsl(pos, Price(Decimal(1)), FSL, Amount.debt(50))

    def test_shortfall_clamp(self):
        pos = make_pos("1000", "10")
        out = execute_fsl(pos, Price(Decimal(1)), FSL_LOW, Amount.debt(500))
        assert out.shortfall
        assert out.collateral_seized.value == Decimal("10")
        assert pos.collateral.value == 0
        assert pos.debt.value > 0
        # repaid = seized * p / (1 + S)
        assert quantize(out.debt_repaid.value) == quantize(Decimal(10) / Decimal("1.05"))

    def test_case_study_bookkeeping(self):
        # Reconstructed from the published figures: 4.61M repaid, 1933.43
        # collateral units sold to cover it, 2034.64 seized.
        repay = Decimal("4610000")
        sold = Decimal("1933.43")
        seized_expected = Decimal("2034.64")
        price = Price(repay / sold)
        spread = seized_expected / sold - 1
        params = FslParams(theta=Decimal("0.8"), close_factor=Decimal("0.5"), spread=spread)
        pos = make_pos("9220000", "2100")
        out = execute_fsl(pos, price, params, Amount.debt(repay))
        assert abs(out.collateral_seized.value - seized_expected) < Decimal("1e-12")
        profit_in_collateral = out.liquidator_profit.value / price.value
        assert abs(profit_in_collateral - Decimal("101.20")) <= Decimal("0.02")

    @given(
        d=pos_decimals, c=pos_decimals, p=pos_decimals,
        theta=unit_fractions,
        spread=st.decimals(min_value=Decimal("0.000001"), max_value=Decimal("0.5"),
                           places=6, allow_nan=False, allow_infinity=False),
        k=st.decimals(min_value=Decimal("0.000001"), max_value=Decimal("1"),
                      places=6, allow_nan=False, allow_infinity=False),
    )
    @settings(max_examples=200)
    def test_conservation_and_sign_invariants(self, d, c, p, theta, spread, k):
        pos = make_pos(str(d), str(c))
        price = Price(p)
        params = FslParams(theta=theta, close_factor=k, spread=spread)
        if not is_liquidatable(pos, price, theta):
            return
        pre_debt = pos.debt.value
        out = execute_fsl(pos, price, params, Amount.debt(pre_debt * k))
        assert pos.debt.value >= 0
        assert pos.collateral.value >= 0
        # value conservation: seized * p == repaid * (1 + S) to working precision
        err = abs(out.collateral_seized.value * price.value - out.debt_repaid.value * (1 + spread))
        assert err <= Decimal("1e-40") * max(1, out.debt_repaid.value)
        if not out.shortfall:
            # maximal uncapped close: post-debt = (1 - k) * pre-debt exactly
            assert pos.debt.value == pre_debt - pre_debt * k


class TestFslPostHealthFactor:
    def test_hand_example(self):
        pos = make_pos("100", "130")
        hf_after = fsl_post_health_factor(pos, Price(Decimal(1)), FSL)
        assert hf_after == Fraction(Decimal("1.24"))
        # pure: position untouched, second call identical
        assert pos.debt.value == Decimal("100")
        assert fsl_post_health_factor(pos, Price(Decimal(1)), FSL) == hf_after

    def test_full_close_sentinel(self):
        params = FslParams(theta=Decimal("0.8"), close_factor=Decimal(1), spread=Decimal("0.05"))
        pos = make_pos("100", "130")
        assert fsl_post_health_factor(pos, Price(Decimal(1)), params) == math.inf

    def test_clamped_seizure(self):
        pos = make_pos("1000", "10")
        hf_after = fsl_post_health_factor(pos, Price(Decimal(1)), FSL)
        assert hf_after == 0  # all collateral gone, debt remains


class TestAmountAndPrice:
    def test_unit_mismatch_rejected(self):
        with pytest.raises(UnitMismatchError):
            Amount.debt(1) + Amount.collateral(1)
        with pytest.raises(UnitMismatchError):
            Amount.debt(1) - Amount.collateral(1)

    def test_negative_amount_rejected(self):
        with pytest.raises(ValueError):
            Amount.debt(-1)
        with pytest.raises(ValueError):
            Amount.debt(1) - Amount.debt(2)

    def test_price_positive(self):
        with pytest.raises(ValueError):
            Price(Decimal(0))
        with pytest.raises(ValueError):
            Price(Decimal(-1))

    def test_position_validation(self):
        with pytest.raises(ValueError):
            make_pos(debt="0")
        with pytest.raises(ValueError):
            make_pos(rate="1.5")

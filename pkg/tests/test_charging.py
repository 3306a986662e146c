import numpy as np
import pytest

from evsp.charging import ChargingFunction, default_charger

from conftest import reference_charger


class TestChargeCurve:
    def test_full_charge_in_45_minutes(self):
        ch = reference_charger(cap=100)
        assert ch.soc_after(0, 45) == 100

    def test_zero_duration_is_identity(self):
        ch = reference_charger(cap=100)
        assert ch.soc_after(80, 0) == 80

    def test_quarter_hour_from_empty(self):
        # 15 min * 7.5 kWh/min = 112.5 kWh = 37.5% of 300 kWh, rounded up
        ch = reference_charger(cap=100)
        assert ch.soc_after(0, 15) == 38

    def test_cap_is_enforced(self):
        ch = reference_charger(cap=80)
        assert ch.soc_after(70, 45) == 80

    def test_domain_error_above_cap(self):
        ch = reference_charger(cap=80)
        with pytest.raises(ValueError):
            ch.soc_after(85, 15)

    def test_bad_duration_rejected(self):
        ch = reference_charger()
        with pytest.raises(ValueError):
            ch.soc_after(0, 7)

    def test_monotone_in_start_and_duration(self):
        ch = reference_charger(cap=100, max_m=6)
        for m in range(7):
            row = [ch.soc_after(x, 15 * m) for x in range(101)]
            assert all(a <= b for a, b in zip(row, row[1:]))
        for x in range(101):
            col = [ch.soc_after(x, 15 * m) for m in range(7)]
            assert all(a <= b for a, b in zip(col, col[1:]))

    def test_invalid_breakpoints_rejected(self):
        with pytest.raises(ValueError):
            ChargingFunction(((90, 6.0), (80, 7.5), (100, 3.75)), 300.0)
        with pytest.raises(ValueError):
            ChargingFunction(((80, 6.0), (100, 7.5)), 300.0)  # increasing rate


class TestInverse:
    def test_inverse_of_table_value(self):
        ch = reference_charger(cap=100)
        assert ch.preimages(38, 15) == (0,)

    def test_zero_duration_preimage_is_itself(self):
        ch = reference_charger(cap=100)
        for x in (0, 17, 80, 100):
            assert ch.preimages(x, 0) == (x,)

    def test_every_start_is_in_preimage_of_its_image(self):
        ch = reference_charger(cap=80, max_m=5)
        for m in range(6):
            for x in range(81):
                assert x in ch.preimages(ch.soc_after(x, 15 * m), 15 * m)

    def test_cap_absorbs_many_starts(self):
        ch = reference_charger(cap=80)
        pre = ch.preimages(80, 45)
        assert len(pre) > 1 and pre[-1] == 80

    def test_empty_preimage(self):
        ch = reference_charger(cap=100)
        # nothing lands on 1% after a full interval of fast charging
        assert ch.preimages(1, 15) == ()

    def test_largest_start_bound_matches_preimages(self):
        ch = reference_charger(cap=80, max_m=4)
        for m in (1, 2, 3):
            row = [ch.soc_after(x, 15 * m) for x in range(81)]
            for target in range(81):
                expect = max((z for z in range(81) if row[z] <= target), default=-1)
                assert ch.largest_start_reaching_at_most(target, 15 * m) == expect


def test_default_charger_matches_reference():
    ch = default_charger()
    assert ch.soc_after(0, 45) == 100
    assert ch.breakpoints == ((80, 7.5), (90, 6.0), (100, 3.75))

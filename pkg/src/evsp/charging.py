"""Piecewise-linear CC-CV charging curves on the integer SoC grid.

A charger is described by segments of constant power (kWh/min) between SoC
thresholds. Charging a battery for t minutes from SoC x integrates the power
profile across segments, rounds the final SoC to the nearest integer percent
and caps it. Because of the rounding, the map is tabulated once per duration
and inverted from the table rather than analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class ChargingFunction:
    """Tabulated piecewise-linear charging map over (SoC grid x interval count).

    breakpoints: list of (soc_threshold_pct, rate_kwh_per_min); thresholds
    strictly increasing and ending at 100, rates positive and non-increasing.
    ``cap_pct`` is where charging is cut off (the upper end of the operating
    SoC range, or 100 for an unrestricted battery).
    """

    breakpoints: tuple[tuple[int, float], ...]
    capacity_kwh: float
    cap_pct: int = 100
    interval_min: int = 15
    max_intervals: int = 96
    _table: list[list[int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        thresholds = [t for t, _ in self.breakpoints]
        rates = [r for _, r in self.breakpoints]
        if thresholds != sorted(set(thresholds)) or thresholds[-1] != 100:
            raise ValueError("charger thresholds must be strictly increasing and end at 100")
        if any(r <= 0 for r in rates) or any(a < b for a, b in zip(rates, rates[1:])):
            raise ValueError("charger rates must be positive and non-increasing")
        if not (0 < self.cap_pct <= 100):
            raise ValueError("cap_pct must be in (0, 100]")
        table = [
            [self._charge_exact(x, m * self.interval_min) for x in range(101)]
            for m in range(self.max_intervals + 1)
        ]
        object.__setattr__(self, "_table", table)

    def _charge_exact(self, start_pct: int, minutes: float) -> int:
        """Integrate the power profile for `minutes`, then round and cap."""
        energy = start_pct / 100.0 * self.capacity_kwh
        remaining = float(minutes)
        lo = 0
        for hi, rate in self.breakpoints:
            seg_top = hi / 100.0 * self.capacity_kwh
            if energy >= seg_top:
                lo = hi
                continue
            dt = (seg_top - energy) / rate
            if remaining < dt:
                energy += remaining * rate
                remaining = 0.0
                break
            energy += dt * rate
            remaining -= dt
            lo = hi
        pct = _round_half_up(energy / self.capacity_kwh * 100.0)
        return min(pct, self.cap_pct)

    def soc_after(self, x: int, minutes: int) -> int:
        """SoC percent after charging `minutes` (a multiple of the interval) from x."""
        if not (0 <= x <= self.cap_pct):
            raise ValueError(f"start SoC {x} outside charging domain [0, {self.cap_pct}]")
        m, rem = divmod(minutes, self.interval_min)
        if rem or m < 0:
            raise ValueError(f"duration {minutes} is not a multiple of {self.interval_min} min")
        if m > self.max_intervals:
            raise ValueError(f"duration {minutes} exceeds tabulated horizon")
        return self._table[m][x]

    def preimages(self, x: int, minutes: int) -> tuple[int, ...]:
        """All grid SoCs that charge to exactly x in `minutes` (may be empty)."""
        m = self._check_intervals(minutes)
        row = self._table[m]
        return tuple(z for z in range(self.cap_pct + 1) if row[z] == x)

    def largest_start_reaching_at_most(self, x: int, minutes: int) -> int:
        """Largest grid SoC whose final SoC is <= x, or -1 if there is none.

        This is the index used to relabel a cumulative distribution through a
        charge: mass at or below the returned start SoC ends at or below x.
        """
        m = self._check_intervals(minutes)
        row = self._table[m]
        best = -1
        for z in range(self.cap_pct + 1):
            if row[z] <= x:
                best = z
            else:
                break
        return best

    def _check_intervals(self, minutes: int) -> int:
        m, rem = divmod(minutes, self.interval_min)
        if rem or m < 0 or m > self.max_intervals:
            raise ValueError(f"bad charging duration {minutes}")
        return m

    def table_row(self, n_intervals: int) -> list[int]:
        return list(self._table[n_intervals])


# 450 kW fast charger: 7.5 kWh/min below 80% SoC, 6 up to 90%, 3.75 up to 100%.
FAST_CHARGER_BREAKPOINTS: tuple[tuple[int, float], ...] = ((80, 7.5), (90, 6.0), (100, 3.75))


def default_charger(capacity_kwh: float = 300.0, cap_pct: int = 100,
                    interval_min: int = 15, max_intervals: int = 96) -> ChargingFunction:
    return ChargingFunction(FAST_CHARGER_BREAKPOINTS, capacity_kwh, cap_pct,
                            interval_min, max_intervals)

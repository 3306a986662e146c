"""Battery capacity fading of solved schedules.

A schedule splits into discharging-and-charging cycles; each cycle's fade is
a function of its begin/middle/end SoC anchors (the Lam LiFePO4 fitting with
parameters gamma1..gamma4), weighted by the charge the cycle processed. A
Monte Carlo simulator draws trip energies, tracks the SoC trajectory, and
averages the daily fade per vehicle, also recording how often each schedule
leaves the recommended SoC range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instances import Instance
from .master import Column
from .network import CHARGE, SINK, TRIP, WAIT, DepotGraph
from .probability import SoCModel


@dataclass(frozen=True)
class FadingParams:
    gamma1: float = -4.092e-4
    gamma2: float = -2.167
    gamma3: float = 1.408e-5
    gamma4: float = 6.130
    battery_kwh: float = 300.0
    end_of_life_threshold: float = 0.8

    def __post_init__(self):
        if not (0.0 < self.end_of_life_threshold < 1.0):
            raise ValueError("end_of_life_threshold must lie in (0, 1)")


@dataclass(frozen=True)
class Cycle:
    """One discharging-and-charging cycle with SoC anchors as fractions."""

    nodes: tuple[int, ...]
    soc_begin: float = math.nan
    soc_mid: float = math.nan
    soc_end: float = math.nan


def split_cycles(graph: DepotGraph, node_seq: list[int]) -> list[Cycle]:
    """Partition a schedule into cycles: a maximal discharge run followed by
    its recharge; the wait node that closes a charging run ends the cycle."""
    cycles: list[Cycle] = []
    cur: list[int] = []
    charging_seen = False
    for v in node_seq:
        kind = graph.nodes[v].kind
        cur.append(v)
        if kind == CHARGE:
            charging_seen = True
        elif charging_seen:
            cycles.append(Cycle(tuple(cur)))
            cur = []
            charging_seen = False
    if cur:
        cycles.append(Cycle(tuple(cur)))
    return cycles


def cycle_fade(cycle: Cycle, params: FadingParams) -> tuple[float, float]:
    """Fade rate phi (kWh lost per kWh processed) and fade Phi (kWh) of one
    cycle with known anchors."""
    b, m, e = cycle.soc_begin, cycle.soc_mid, cycle.soc_end
    for v in (b, m, e):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"SoC anchor {v} outside [0, 1]")
    avg = (b + m + e) / 3.0
    dev = avg - m
    phi = (params.gamma1 * dev * math.exp(params.gamma2 * avg)
           + params.gamma3 * math.exp(params.gamma4 * dev))
    processed = ((b - m) + (e - m)) * params.battery_kwh
    return phi, processed * phi


def lifetime_years(params: FadingParams, yearly_fade_kwh: float) -> float:
    """Years until capacity falls to the end-of-life threshold at a constant
    yearly fade."""
    usable = params.battery_kwh * (1.0 - params.end_of_life_threshold)
    return usable / yearly_fade_kwh


@dataclass
class ScheduleFade:
    schedule_idx: int
    daily_fade_kwh: float
    yearly_fade_kwh: float
    overuse_frequency: float
    within_range_frequency: float


@dataclass
class FadeReport:
    per_schedule: list[ScheduleFade]
    daily_fade_per_vehicle_kwh: float
    iterations: int

    @property
    def yearly_fade_per_vehicle_kwh(self) -> float:
        return 365.0 * self.daily_fade_per_vehicle_kwh


def _vector_phi(b, m, e, params: FadingParams):
    avg = (b + m + e) / 3.0
    dev = avg - m
    phi = (params.gamma1 * dev * np.exp(params.gamma2 * avg)
           + params.gamma3 * np.exp(params.gamma4 * dev))
    return ((b - m) + (e - m)) * params.battery_kwh * phi


def _simulate_schedule(graph: DepotGraph, model: SoCModel, node_seq, K: int,
                       rng: np.random.Generator, params: FadingParams,
                       sigma_low: int, sigma_init: int):
    """K independent day simulations of one schedule.

    Returns (daily fade per iteration (K,), overused flags (K,)).
    The SoC state is clamped at the physical floor of an empty battery; the
    pre-clamp trajectory minimum decides overuse.
    """
    cycles = split_cycles(graph, node_seq)
    cur = np.full(K, float(sigma_init))
    traj_min = cur.copy()
    fade = np.zeros(K)
    prev = node_seq[0]

    for t, cycle in enumerate(cycles):
        last = t == len(cycles) - 1
        begin = cur.copy()
        mid = begin   # SoC after the discharge regime; tracked below
        run = 0
        pre_charge = begin
        for v in cycle.nodes:
            if v == node_seq[0]:
                continue  # source has no incoming hop
            arc = graph.arc_between(prev, v)
            kind = graph.nodes[v].kind
            if kind == CHARGE:
                if run == 0:
                    pre_charge = cur.copy()
                run += 1
                cur = model.charge_rows[run][
                    np.clip(pre_charge, 0, 100).astype(np.int64)].astype(float)
            else:
                prev_kind = graph.nodes[prev].kind
                if kind == TRIP:
                    values, probs = model.trip_pmfs[graph.nodes[v].trip_idx]
                    draws = values[np.searchsorted(np.cumsum(probs), rng.random(K))]
                    cur = cur - draws - arc.energy_pct
                else:
                    cur = cur - arc.energy_pct
                run = 0
                np.minimum(traj_min, cur, out=traj_min)
                cur = np.clip(cur, 0.0, None)
                if kind == TRIP or prev_kind == TRIP:
                    mid = cur   # the discharge regime ends after the last of these
            prev = v
        end = np.full(K, float(sigma_init)) if last else cur.copy()
        fade += _vector_phi(begin / 100.0, mid / 100.0, end / 100.0, params)
    return fade, traj_min < sigma_low


def monte_carlo_fade(columns: list[Column], instance: Instance,
                     graphs: list[DepotGraph], iterations: int = 1000,
                     seed: int = 0, params: FadingParams | None = None,
                     model: SoCModel | None = None) -> FadeReport:
    """Average daily capacity fade per vehicle over `iterations` simulated
    days, drawing each trip's energy from its PMF."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    params = params or FadingParams(battery_kwh=instance.battery_kwh)
    model = model or SoCModel(instance)
    rng = np.random.default_rng(seed)
    pol = instance.policy
    per_schedule = []
    total = 0.0
    for idx, col in enumerate(columns):
        fade, overused = _simulate_schedule(
            graphs[col.depot_idx], model, list(col.node_seq), iterations, rng,
            params, pol.sigma_low, pol.sigma_init)
        daily = float(fade.mean())
        freq = float(overused.mean())
        per_schedule.append(ScheduleFade(idx, daily, 365.0 * daily, freq, 1.0 - freq))
        total += float(fade.sum())
    n = max(1, len(columns))
    return FadeReport(per_schedule, total / (iterations * n), iterations)

"""SoC distributions conditioned on never having dropped below the
recommended lower bound, and their propagation along a schedule.

A distribution is stored as a cumulative array F over the integer SoC grid
[sigma_low, sigma_up]. Mass that falls below sigma_low at any step is dropped
(the bus has overused its battery) and never renormalized, so F(sigma_up) is
the probability that the bus has stayed within the recommended range so far.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .charging import ChargingFunction
from .instances import Instance
from .network import CHARGE, DepotGraph, TRIP


@dataclass
class SoCDistribution:
    """Cumulative survival-weighted distribution on [low, up]."""

    cdf: np.ndarray
    low: int
    up: int

    @property
    def survival(self) -> float:
        return float(self.cdf[-1])

    def pmf(self) -> np.ndarray:
        return np.diff(self.cdf, prepend=0.0)

    def copy(self) -> "SoCDistribution":
        return SoCDistribution(self.cdf.copy(), self.low, self.up)


class SoCModel:
    """Per-instance propagation machinery: grid bounds, trip PMFs as arrays,
    the operative charger (capped at sigma_up), and cached charge relabel maps.
    """

    def __init__(self, instance: Instance):
        pol = instance.policy
        self.instance = instance
        self.low = pol.sigma_low
        self.up = pol.sigma_up
        self.width = self.up - self.low + 1
        self.rho = pol.interval_min
        self.charger = ChargingFunction(
            instance.charger_breakpoints, instance.battery_kwh, cap_pct=self.up,
            interval_min=pol.interval_min, max_intervals=instance.n_intervals)
        self.trip_pmfs: list[tuple[np.ndarray, np.ndarray]] = []
        for t in instance.trips:
            sup = t.energy_pmf.sorted_support()
            self.trip_pmfs.append((np.array([v for v, _ in sup], dtype=np.int64),
                                   np.array([p for _, p in sup])))
        # charge_rows[m][x] = SoC after m intervals of charging from x
        self.charge_rows = np.array(
            [self.charger.table_row(m) for m in range(instance.n_intervals + 1)],
            dtype=np.int64)
        # beyond this run length the charge map no longer changes (everything
        # reachable is capped), so longer runs add cost without effect
        self.saturation_run = instance.n_intervals
        for m in range(instance.n_intervals):
            if np.array_equal(self.charge_rows[m], self.charge_rows[m + 1]):
                self.saturation_run = m
                break
        self._gather: dict[int, np.ndarray] = {}
        self._trip_mats: dict[tuple[int, int], np.ndarray] = {}

    def initial_cdf(self) -> np.ndarray:
        init = self.instance.policy.sigma_init
        cdf = np.zeros(self.width)
        cdf[init - self.low:] = 1.0
        return cdf

    def gather_index(self, n_intervals: int) -> np.ndarray:
        """Array g with g[i] = grid index of the largest start SoC that charges
        to at most (low + i) in n_intervals, or -1 when no start SoC does."""
        g = self._gather.get(n_intervals)
        if g is None:
            minutes = n_intervals * self.rho
            g = np.array([
                self.charger.largest_start_reaching_at_most(x, minutes) - self.low
                for x in range(self.low, self.up + 1)], dtype=np.int64)
            g[g < 0] = -1
            self._gather[n_intervals] = g
        return g

    def _consume_matrix(self, values: np.ndarray, probs: np.ndarray,
                        iota: int) -> np.ndarray:
        """(W, W) linear map of the consume step: new_cdf = cdf @ M."""
        W = self.width
        M = np.zeros((W, W))
        for v, p in zip(values, probs):
            d = int(v) + iota
            for xi in range(W):
                M[min(xi + d, W - 1), xi] += p
                if d > 0:
                    M[min(d - 1, W - 1), xi] -= p
        return M

    def consume_trip(self, cdf: np.ndarray, trip_idx: int, iota: int) -> np.ndarray:
        """Trip consumption step (PMF plus deterministic deadhead) as a cached
        matrix product; drops newly overused mass."""
        key = (trip_idx, iota)
        M = self._trip_mats.get(key)
        if M is None:
            values, probs = self.trip_pmfs[trip_idx]
            M = self._consume_matrix(values, probs, iota)
            self._trip_mats[key] = M
        return cdf @ M

    def consume(self, cdf: np.ndarray, values: np.ndarray, probs: np.ndarray,
                iota: int) -> np.ndarray:
        """Consume a PMF plus deterministic deadhead; drops newly overused mass.

        Works on a single cdf (W,) or a batch (n, W).
        """
        return cdf @ self._consume_matrix(values, probs, iota)

    def shift(self, cdf: np.ndarray, iota: int) -> np.ndarray:
        """Deterministic consumption of `iota` percent; drops overused mass."""
        if iota == 0:
            return cdf.copy()
        W = self.width
        take = np.minimum(np.arange(W) + iota, W - 1)
        below = cdf[..., min(iota - 1, W - 1)]
        if cdf.ndim == 2:
            return cdf[:, take] - below[:, None]
        return cdf[take] - below

    def charge(self, pre_cdf: np.ndarray, n_intervals: int) -> np.ndarray:
        """Relabel a distribution through a charge of n_intervals intervals.

        ``pre_cdf`` is the distribution when charging began; charging never
        drops mass, and the cap at sigma_up accumulates it.
        """
        g = self.gather_index(n_intervals)
        if pre_cdf.ndim == 2:
            out = pre_cdf[:, np.clip(g, 0, None)]
            out[:, g < 0] = 0.0
            return out
        out = pre_cdf[np.clip(g, 0, None)].copy()
        out[g < 0] = 0.0
        return out


def init_distribution(model: SoCModel) -> SoCDistribution:
    """Point mass at sigma_init (every schedule starts fully charged)."""
    return SoCDistribution(model.initial_cdf(), model.low, model.up)


def propagate(model: SoCModel, dist: SoCDistribution, node_kind: str,
              payload) -> SoCDistribution:
    """One propagation step.

    node_kind 'trip': payload = (trip_idx, incoming deadhead pct).
    node_kind 'charge': payload = number of consecutive charging intervals;
    the distribution must be the one at the start of the charging run.
    anything else: payload = deterministic deadhead pct (shift).
    """
    if node_kind == TRIP:
        trip_idx, iota = payload
        values, probs = model.trip_pmfs[trip_idx]
        if int(values.max()) + iota > model.up - model.instance.policy.sigma_min:
            raise ValueError("trip consumption support exceeds the battery range")
        cdf = model.consume_trip(dist.cdf, trip_idx, iota)
    elif node_kind == CHARGE:
        cdf = model.charge(dist.cdf, int(payload))
    else:
        cdf = model.shift(dist.cdf, int(payload))
    return SoCDistribution(cdf, dist.low, dist.up)


def schedule_probability(graph: DepotGraph, node_seq: list[int],
                         model: SoCModel | None = None) -> float:
    """Probability that a bus following the schedule stays within the
    recommended SoC range, per the conditioned-CDF recursion.

    Consecutive charging nodes are treated as one charge of the combined
    duration evaluated in a single step, not interval by interval.
    """
    model = model or SoCModel(graph.instance)
    dist = init_distribution(model)
    pre_charge: SoCDistribution | None = None
    run = 0
    for prev, cur in zip(node_seq, node_seq[1:]):
        arc = graph.arc_between(prev, cur)
        if arc is None:
            raise ValueError(f"no arc between nodes {prev} and {cur}")
        kind = graph.nodes[cur].kind
        if kind == CHARGE:
            if run == 0:
                pre_charge = dist
            run += 1
            dist = propagate(model, pre_charge, CHARGE, run)
        else:
            run = 0
            if kind == TRIP:
                dist = propagate(model, dist, TRIP,
                                 (graph.nodes[cur].trip_idx, arc.energy_pct))
            else:
                dist = propagate(model, dist, kind, arc.energy_pct)
    return dist.survival

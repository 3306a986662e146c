"""Restricted master problem: a perturbed set-partitioning LP over the column
pool, with depot capacities, per-interval charger capacities, and the
log-linearized chance row sum(y_s * ln P_s) >= ln(1 - epsilon).

Structural variables are laid out as [trip artificials | eta+ | eta- |
schedule columns...]; artificials guarantee LP feasibility at every node and
carry a prohibitive cost. Two total-vehicle rows (one <=, one >=) are always
present so the row structure never changes while diving; they are inert until
a branching bound tightens them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import simplex
from .instances import Instance

ARTIFICIAL_COST = 1.0e5
INT_TOL = 1e-6


@dataclass(frozen=True)
class Column:
    """One feasible schedule, decoded from a pricing label."""

    depot_idx: int
    node_seq: tuple[int, ...]
    arc_seq: tuple[int, ...]
    cost: float
    trips: tuple[int, ...]                       # covered trip indices
    charger_usage: tuple[tuple[int, int], ...]   # (station, interval) pairs
    survival: float                              # P_s
    log_survival: float                          # beta_s = ln P_s
    reduced_cost: float = 0.0

    @property
    def key(self) -> tuple:
        return (self.depot_idx, self.node_seq)


@dataclass
class RMPSolution:
    objective: float
    y: np.ndarray            # one value per pooled schedule column
    eta_plus: np.ndarray
    eta_minus: np.ndarray
    artificial: np.ndarray
    duals: "DualView"
    dual_objective: float
    status: str

    def is_integer(self) -> bool:
        return bool(np.all(np.abs(self.y - np.round(self.y)) <= INT_TOL))

    def uses_perturbation(self) -> bool:
        return bool(self.eta_plus.max(initial=0.0) > INT_TOL
                    or self.eta_minus.max(initial=0.0) > INT_TOL)

    def uses_artificials(self) -> bool:
        return bool(self.artificial.max(initial=0.0) > INT_TOL)

    def selected(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.y > 0.5)]


@dataclass(frozen=True)
class DualView:
    trip_duals: np.ndarray
    depot_duals: np.ndarray     # includes the total-vehicle row duals
    charger_duals: np.ndarray   # (n_stations, n_intervals)
    chance_dual: float

    def as_pricing_duals(self):
        from .pricing import DualPrices
        return DualPrices(self.trip_duals, self.depot_duals, self.charger_duals,
                          self.chance_dual)


@dataclass
class NodeConfig:
    """Bounds and row adjustments a branch-and-bound node imposes."""

    fixed_columns: frozenset[int] = frozenset()
    inactive_columns: frozenset[int] = frozenset()
    vehicles_le: int | None = None
    vehicles_ge: int | None = None
    perturbed: bool = True


class MasterState:
    def __init__(self, instance: Instance, epsilon: float | None = None):
        self.instance = instance
        self.epsilon = instance.policy.epsilon if epsilon is None else epsilon
        self.beta = math.log(1.0 - self.epsilon)
        nV = len(instance.trips)
        nD = len(instance.depots)
        nH = len(instance.stations)
        nI = instance.n_intervals
        self.n_trips, self.n_depots, self.n_stations, self.n_intervals = nV, nD, nH, nI
        self.m = nV + nD + nH * nI + 3
        self.chance_row = nV + nD + nH * nI
        self.veh_le_row = self.chance_row + 1
        self.veh_ge_row = self.chance_row + 2
        self.sched_offset = 3 * nV

        self.columns: list[Column] = []
        self._index: dict[tuple, int] = {}
        cap = self.sched_offset + 256
        self._A = np.zeros((self.m, cap))
        self._cost = np.zeros(cap)
        self._lb = np.zeros(cap)
        self._ub = np.zeros(cap)
        self._n = self.sched_offset
        self.config = NodeConfig()
        self._warm = None
        self.last_result: simplex.LPResult | None = None

        caps_p = instance.costs.under_cover_cap or (0.0,) * nV
        caps_m = instance.costs.over_cover_cap or (0.0,) * nV
        self.xi_plus = np.array(caps_p, dtype=float)
        self.xi_minus = np.array(caps_m, dtype=float)
        for i in range(nV):
            self._A[i, i] = 1.0            # artificial covers trip i
            self._cost[i] = ARTIFICIAL_COST
            self._ub[i] = 1.0
            self._A[i, nV + i] = 1.0       # eta+ under-covers
            self._cost[nV + i] = instance.costs.under_cover_penalty
            self._ub[nV + i] = self.xi_plus[i]
            self._A[i, 2 * nV + i] = -1.0  # eta- over-covers
            self._cost[2 * nV + i] = instance.costs.over_cover_penalty
            self._ub[2 * nV + i] = self.xi_minus[i]

        self.senses = ([simplex.EQ] * nV + [simplex.LE] * nD + [simplex.LE] * (nH * nI)
                       + [simplex.GE, simplex.LE, simplex.GE])
        self.b = np.zeros(self.m)
        self.b[:nV] = 1.0
        for d, depot in enumerate(instance.depots):
            self.b[nV + d] = depot.capacity
        for h, st in enumerate(instance.stations):
            self.b[nV + nD + h * nI:nV + nD + (h + 1) * nI] = st.chargers
        self.b[self.chance_row] = self.beta
        self.b[self.veh_le_row] = nV + 1.0   # inert until branching tightens it
        self.b[self.veh_ge_row] = 0.0

    # -- pool -----------------------------------------------------------

    def charger_row(self, station_idx: int, interval: int) -> int:
        return self.n_trips + self.n_depots + station_idx * self.n_intervals + interval

    def add_columns(self, columns: list[Column]) -> int:
        added = 0
        floor = (1.0 - self.epsilon) - 1e-9
        for col in columns:
            if col.key in self._index or col.survival < floor:
                continue
            self._append(col)
            added += 1
        return added

    def _append(self, col: Column) -> None:
        if self._n == self._A.shape[1]:
            grow = max(256, self._A.shape[1])
            self._A = np.hstack([self._A, np.zeros((self.m, grow))])
            for name in ("_cost", "_lb", "_ub"):
                setattr(self, name, np.concatenate([getattr(self, name), np.zeros(grow)]))
        j = self._n
        self._A[:, j] = 0.0
        for t in col.trips:
            self._A[t, j] = 1.0
        self._A[self.n_trips + col.depot_idx, j] = 1.0
        for h, r in col.charger_usage:
            self._A[self.charger_row(h, r), j] = 1.0
        self._A[self.chance_row, j] = col.log_survival
        self._A[self.veh_le_row, j] = 1.0
        self._A[self.veh_ge_row, j] = 1.0
        self._cost[j] = col.cost
        self._lb[j] = 0.0
        self._ub[j] = 1.0
        self._index[col.key] = len(self.columns)
        self.columns.append(col)
        self._n += 1

    def n_schedule_columns(self) -> int:
        return len(self.columns)

    # -- node configuration ----------------------------------------------

    def apply_config(self, config: NodeConfig) -> None:
        self.config = config
        nV = self.n_trips
        sched = slice(self.sched_offset, self._n)
        self._lb[sched] = 0.0
        self._ub[sched] = 1.0
        for i in config.inactive_columns:
            self._ub[self.sched_offset + i] = 0.0
        for i in config.fixed_columns:
            self._lb[self.sched_offset + i] = 1.0
        active = self.xi_plus if config.perturbed else 0.0
        self._ub[nV:2 * nV] = active
        self._ub[2 * nV:3 * nV] = self.xi_minus if config.perturbed else 0.0
        self.b[self.veh_le_row] = (config.vehicles_le if config.vehicles_le is not None
                                   else nV + 1.0)
        self.b[self.veh_ge_row] = (config.vehicles_ge if config.vehicles_ge is not None
                                   else 0.0)

    def strip_perturbation(self) -> "MasterState":
        """Disable the under/over-cover slack so coverage reverts to exact
        partitioning. Idempotent."""
        self.apply_config(
            NodeConfig(self.config.fixed_columns, self.config.inactive_columns,
                       self.config.vehicles_le, self.config.vehicles_ge,
                       perturbed=False))
        return self

    # -- solving ----------------------------------------------------------

    def solve_rmp(self) -> RMPSolution:
        n = self._n
        res = simplex.solve_lp(self._A[:, :n], self.senses, self.b,
                               self._cost[:n], self._lb[:n], self._ub[:n],
                               warm_basis=self._warm)
        self.last_result = res
        if res.status == "optimal":
            self._warm = res.warm_basis
        else:
            self._warm = None
        nV = self.n_trips
        y = res.x[self.sched_offset:n].copy()
        duals = self._duals(res)
        return RMPSolution(res.objective, y, res.x[nV:2 * nV].copy(),
                           res.x[2 * nV:3 * nV].copy(), res.x[:nV].copy(),
                           duals, res.dual_objective, res.status)

    def _duals(self, res: simplex.LPResult) -> DualView:
        y = res.duals
        nV, nD = self.n_trips, self.n_depots
        veh = y[self.veh_le_row] + y[self.veh_ge_row]
        depot = y[nV:nV + nD] + veh
        charger = y[nV + nD:self.chance_row].reshape(self.n_stations, self.n_intervals)
        theta = max(0.0, float(y[self.chance_row]))
        return DualView(y[:nV].copy(), depot, np.minimum(charger, 0.0), theta)

    def reduced_cost_from_scratch(self, col: Column, duals: DualView) -> float:
        """Direct evaluation of the schedule reduced cost from its parts."""
        value = col.cost - sum(float(duals.trip_duals[t]) for t in col.trips)
        value -= float(duals.depot_duals[col.depot_idx])
        value -= sum(float(duals.charger_duals[h, r]) for h, r in col.charger_usage)
        value -= duals.chance_dual * col.log_survival
        return value

    def dump_lp(self, path) -> None:
        """Write the current RMP in CPLEX LP text format."""
        n = self._n
        names = [f"a{i}" for i in range(self.n_trips)] + \
                [f"ep{i}" for i in range(self.n_trips)] + \
                [f"em{i}" for i in range(self.n_trips)] + \
                [f"y{j}" for j in range(len(self.columns))]
        with open(path, "w") as fh:
            fh.write("Minimize\n obj: ")
            fh.write(" + ".join(f"{self._cost[j]:.12g} {names[j]}"
                                for j in range(n) if self._cost[j]))
            fh.write("\nSubject To\n")
            op = {simplex.LE: "<=", simplex.GE: ">=", simplex.EQ: "="}
            for r in range(self.m):
                terms = [f"{self._A[r, j]:+.12g} {names[j]}"
                         for j in range(n) if self._A[r, j]]
                if terms:
                    fh.write(f" r{r}: {' '.join(terms)} {op[self.senses[r]]} "
                             f"{self.b[r]:.12g}\n")
            fh.write("Bounds\n")
            for j in range(n):
                fh.write(f" {self._lb[j]:.12g} <= {names[j]} <= {self._ub[j]:.12g}\n")
            fh.write("End\n")

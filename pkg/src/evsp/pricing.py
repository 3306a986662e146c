"""Stochastic shortest-path pricing on a depot graph.

Labels carry the conditioned SoC CDF, the worst-case SoC, the accumulated
reduced cost, and two charging resources. Consecutive charging nodes are
evaluated as a single charge from the distribution at the start of the run,
so each label at a charging node also remembers that pre-charge state and the
run length. Extension and dominance operate on whole pools of labels at once
(numpy batches); dominance is the exact six-condition rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .master import Column
from .network import CHARGE, PULL_OUT, SINK, TRIP, WAIT, Arc, DepotGraph
from .probability import SoCModel

try:
    from numba import njit
except ImportError:     # pure-numpy fallback below
    njit = None

NEG_TOL = 1e-7        # reduced cost must beat this to count as negative
SURVIVAL_TOL = 1e-9   # slack on the chance-feasibility prune


@dataclass(frozen=True)
class DualPrices:
    """Dual solution of the restricted master, in pricing layout.

    depot_duals already include any total-vehicle-count row duals, since those
    rows price exactly like the depot capacity rows (one unit per schedule).
    """

    trip_duals: np.ndarray
    depot_duals: np.ndarray
    charger_duals: np.ndarray   # (n_stations, n_intervals), <= 0
    chance_dual: float          # theta >= 0

    @staticmethod
    def zeros(n_trips: int, n_depots: int, n_stations: int, n_intervals: int) -> "DualPrices":
        return DualPrices(np.zeros(n_trips), np.zeros(n_depots),
                          np.zeros((n_stations, n_intervals)), 0.0)


@dataclass
class Label:
    """Single-label view used by tests and the public extend/dominates API."""

    node: int
    cdf: np.ndarray
    omega: int
    cost: float
    recharges: int   # completed recharges since the last trip (R)
    waits: int       # uncharged station waits since the last trip (E)
    run_length: int = 0
    pre_cdf: np.ndarray | None = None
    pre_omega: int = 0


def modified_arc_cost(graph: DepotGraph, arc: Arc, duals: DualPrices) -> float:
    """Arc cost adjusted by the duals it is responsible for. The chance-dual
    term is not arc-decomposable and is handled at pull-in extension time."""
    tail = graph.nodes[arc.tail]
    if arc.kind == PULL_OUT:
        return arc.cost - float(duals.depot_duals[graph.depot_idx])
    if tail.kind == TRIP:
        return arc.cost - float(duals.trip_duals[tail.trip_idx])
    if tail.kind == CHARGE:
        return arc.cost - float(duals.charger_duals[tail.station_idx, tail.interval])
    return arc.cost


class _Pool:
    """Labels resident at one node, stored columnwise. Arrays are treated as
    immutable once a pool is built, so slices may alias freely."""

    __slots__ = ("C", "R", "E", "omega", "F", "gid", "m", "preF", "pre_omega")

    def __init__(self, C, R, E, omega, F, gid, m=None, preF=None, pre_omega=None):
        self.C, self.R, self.E = C, R, E
        self.omega, self.F, self.gid = omega, F, gid
        self.m, self.preF, self.pre_omega = m, preF, pre_omega

    def __len__(self):
        return len(self.C)

    def take(self, idx) -> "_Pool":
        return _Pool(self.C[idx], self.R[idx], self.E[idx], self.omega[idx],
                     self.F[idx], self.gid[idx],
                     None if self.m is None else self.m[idx],
                     None if self.preF is None else self.preF[idx],
                     None if self.pre_omega is None else self.pre_omega[idx])


def _concat_pools(pools: list[_Pool]) -> _Pool:
    if len(pools) == 1:
        return pools[0]
    aux = pools[0].m is not None
    return _Pool(
        np.concatenate([p.C for p in pools]),
        np.concatenate([p.R for p in pools]),
        np.concatenate([p.E for p in pools]),
        np.concatenate([p.omega for p in pools]),
        np.vstack([p.F for p in pools]),
        np.concatenate([p.gid for p in pools]),
        np.concatenate([p.m for p in pools]) if aux else None,
        np.vstack([p.preF for p in pools]) if aux else None,
        np.concatenate([p.pre_omega for p in pools]) if aux else None)


def _complement_pattern(F: np.ndarray) -> np.ndarray:
    """Rows of F(up) - F(x-1) for x = low .. up-1, with F(low-1) = 0."""
    n, width = F.shape
    shifted = np.concatenate([np.zeros((n, 1)), F[:, :width - 2]], axis=1)
    return F[:, -1:] - shifted


def _scan_survivors_py(R, E, omega, pat, order):
    """Keep-first scan in sorted order; pattern column 0 carries F(up)."""
    n = len(order)
    keep = np.zeros(n, dtype=np.bool_)
    kept = np.empty(n, dtype=np.int64)
    nk = 0
    width = pat.shape[1]
    for oj in range(n):
        j = order[oj]
        dominated = False
        for ki in range(nk):
            i = kept[ki]
            if R[i] <= R[j] and E[i] <= E[j] and omega[i] >= omega[j]:
                ok = True
                for x in range(width):
                    if pat[i, x] < pat[j, x]:
                        ok = False
                        break
                if ok:
                    dominated = True
                    break
        if not dominated:
            kept[nk] = j
            nk += 1
            keep[j] = True
    return keep


_scan_survivors = njit(cache=True)(_scan_survivors_py) if njit else _scan_survivors_py


def _dominance_survivors(C, R, E, omega, F, gid) -> np.ndarray:
    """Boolean keep-mask under the six-condition rule.

    Labels are scanned in (C, gid) order, so a label can only be discarded by
    one already kept; among identical labels the earliest-created is kept.
    A label dominated only by a strictly later equal-cost label survives,
    which costs a little pruning power but never exactness.
    """
    n = len(C)
    if n <= 1:
        return np.ones(n, dtype=bool)
    order = np.lexsort((gid, C))
    pat = np.ascontiguousarray(_complement_pattern(F))
    return _scan_survivors(np.ascontiguousarray(R), np.ascontiguousarray(E),
                           np.ascontiguousarray(omega), pat, order)


class PricingProblem:
    """Labeling solver for one depot graph; reusable across dual updates."""

    def __init__(self, graph: DepotGraph, model: SoCModel):
        self.graph = graph
        self.model = model
        arcs = graph.arcs
        self.arc_cost = np.array([a.cost for a in arcs])
        self.arc_is_pull_out = np.array([a.kind == PULL_OUT for a in arcs])
        tail_nodes = [graph.nodes[a.tail] for a in arcs]
        self.tail_trip = np.array([n.trip_idx for n in tail_nodes])
        self.tail_station = np.array([n.station_idx for n in tail_nodes])
        self.tail_interval = np.array([n.interval for n in tail_nodes])
        self.tail_is_trip = np.array([n.kind == TRIP for n in tail_nodes])
        self.tail_is_charge = np.array([n.kind == CHARGE for n in tail_nodes])

    def _arc_credits(self, duals: DualPrices) -> np.ndarray:
        credit = np.zeros(len(self.arc_cost))
        credit[self.arc_is_pull_out] = duals.depot_duals[self.graph.depot_idx]
        tt = self.tail_is_trip
        credit[tt] = duals.trip_duals[self.tail_trip[tt]]
        tc = self.tail_is_charge
        credit[tc] = duals.charger_duals[self.tail_station[tc], self.tail_interval[tc]]
        return credit

    def solve(self, duals: DualPrices, *, removed_arcs: frozenset[int] = frozenset(),
              max_columns: int = 200, use_dominance: bool = True) -> list[Column]:
        g = self.graph
        pol = g.instance.policy
        survival_floor = (1.0 - pol.epsilon) - SURVIVAL_TOL
        theta = duals.chance_dual
        mod_cost = self.arc_cost - self._arc_credits(duals)

        parents: list[int] = [-1]
        via_arcs: list[int] = [-1]
        root = _Pool(np.zeros(1), np.zeros(1, np.int64), np.zeros(1, np.int64),
                     np.array([pol.sigma_init], np.int64),
                     self.model.initial_cdf()[None, :], np.zeros(1, np.int64))
        buffers: dict[int, list[_Pool]] = {g.source: [root]}
        sink_pool: _Pool | None = None

        for u in g.topo_order:
            chunks = buffers.pop(u, None)
            if not chunks:
                continue
            pool = _concat_pools(chunks)
            if u == g.sink:
                sink_pool = pool
                continue
            pool = self._settle(u, pool, use_dominance)
            if g.nodes[u].kind == CHARGE:
                groups = [pool.take(pool.m == m) for m in np.unique(pool.m)]
            else:
                groups = [pool]
            for grp in groups:
                for ai in g.out_arcs[u]:
                    if ai in removed_arcs:
                        continue
                    out = self._extend_pool(grp, ai, mod_cost, theta, survival_floor,
                                            parents, via_arcs)
                    if out is not None:
                        buffers.setdefault(g.arcs[ai].head, []).append(out)

        if sink_pool is None:
            return []
        order = np.argsort(sink_pool.C, kind="stable")
        columns = []
        for i in order:
            if sink_pool.C[i] >= -NEG_TOL or len(columns) >= max_columns:
                break
            columns.append(self._decode(int(sink_pool.gid[i]), float(sink_pool.C[i]),
                                        float(sink_pool.F[i, -1]), parents, via_arcs))
        return columns

    def _settle(self, node: int, pool: _Pool, use_dominance: bool) -> _Pool:
        if not use_dominance or len(pool) <= 1:
            return pool
        if self.graph.nodes[node].kind == CHARGE:
            # compare pre-charge states, and only between equal run lengths:
            # every future of a charging label is a function of those
            keep = np.zeros(len(pool), dtype=bool)
            for m in np.unique(pool.m):
                sel = np.flatnonzero(pool.m == m)
                sub = _dominance_survivors(pool.C[sel], pool.R[sel], pool.E[sel],
                                           pool.pre_omega[sel], pool.preF[sel],
                                           pool.gid[sel])
                keep[sel[sub]] = True
            return pool.take(keep)
        keep = _dominance_survivors(pool.C, pool.R, pool.E, pool.omega, pool.F,
                                    pool.gid)
        return pool.take(keep)

    def _extend_pool(self, pool: _Pool, arc_idx: int, mod_cost: np.ndarray,
                     theta: float, survival_floor: float,
                     parents: list[int], via_arcs: list[int]) -> _Pool | None:
        g, model = self.graph, self.model
        arc = g.arcs[arc_idx]
        head = g.nodes[arc.head]
        tail_kind = g.nodes[arc.tail].kind
        pol = g.instance.policy

        C = pool.C + mod_cost[arc_idx]
        R, E = pool.R, pool.E
        m = preF = pre_omega = None

        if head.kind == TRIP:
            values, probs = model.trip_pmfs[head.trip_idx]
            F = model.consume_trip(pool.F, head.trip_idx, arc.energy_pct)
            omega = pool.omega - (int(values.max()) + arc.energy_pct)
            if tail_kind == WAIT:
                R = R - 1
            feas = (R <= 0) & (E <= 0)
        elif head.kind == CHARGE:
            if tail_kind == WAIT:
                run = 1
                preF, pre_omega = pool.F, pool.omega
                R, E = R + 1, E - 1
            else:
                run = int(pool.m[0]) + 1   # pools at charging nodes are split by m
                if run > model.saturation_run:
                    # the charge map is saturated: staying plugged in is
                    # dominated by unplugging and waiting beside the charger
                    return None
                preF, pre_omega = pool.preF, pool.pre_omega
            m = np.full(len(pool), run, np.int64)
            F = model.charge(preF, run)
            omega = model.charge_rows[run][pre_omega]
            feas = (R <= 1) & (E <= 1)
        else:  # WAIT or SINK: deterministic shift
            F = model.shift(pool.F, arc.energy_pct)
            omega = pool.omega - arc.energy_pct
            if head.kind == WAIT and tail_kind == TRIP:
                E = E + 1
            feas = (R <= 1) & (E <= 1)

        survival = F[:, -1]
        feas = feas & (omega >= pol.sigma_min) & (survival >= survival_floor)
        if not feas.any():
            return None
        if head.kind == SINK and theta != 0.0:
            C = np.where(feas, C - theta * np.log(np.where(feas, survival, 1.0)), C)
        if not feas.all():
            C, F, omega = C[feas], F[feas], omega[feas]
            R, E = R[feas], E[feas]
            if m is not None:
                m, preF, pre_omega = m[feas], preF[feas], pre_omega[feas]
            parent_gids = pool.gid[feas]
        else:
            parent_gids = pool.gid
        if head.kind != CHARGE:
            m = preF = pre_omega = None

        n = len(C)
        gid0 = len(parents)
        parents.extend(parent_gids.tolist())
        via_arcs.extend([arc_idx] * n)
        gids = np.arange(gid0, gid0 + n, dtype=np.int64)
        return _Pool(C, R, E, omega, F, gids, m, preF, pre_omega)

    def _decode(self, gid: int, reduced_cost: float, survival: float,
                parents: list[int], via_arcs: list[int]) -> Column:
        g = self.graph
        arc_seq: list[int] = []
        while gid > 0:
            arc_seq.append(via_arcs[gid])
            gid = parents[gid]
        arc_seq.reverse()
        node_seq = [g.source] + [g.arcs[ai].head for ai in arc_seq]
        cost = sum(g.arcs[ai].cost for ai in arc_seq)
        trips = tuple(sorted(g.nodes[v].trip_idx for v in node_seq
                             if g.nodes[v].kind == TRIP))
        charges = tuple(sorted((g.nodes[v].station_idx, g.nodes[v].interval)
                               for v in node_seq if g.nodes[v].kind == CHARGE))
        return Column(depot_idx=g.depot_idx, node_seq=tuple(node_seq),
                      arc_seq=tuple(arc_seq), cost=cost, trips=trips,
                      charger_usage=charges, survival=survival,
                      log_survival=math.log(survival),
                      reduced_cost=reduced_cost)


# --- single-label surface (thin wrappers over the batch engine) -------------

def initial_label(graph: DepotGraph, model: SoCModel) -> Label:
    pol = graph.instance.policy
    return Label(graph.source, model.initial_cdf(), pol.sigma_init, 0.0, 0, 0)


def extend(graph: DepotGraph, model: SoCModel, label: Label, arc: Arc,
           duals: DualPrices) -> Label | None:
    """Extend one label along one arc; None when the extension is infeasible."""
    problem = PricingProblem(graph, model)
    aux = label.pre_cdf is not None
    pool = _Pool(np.array([label.cost]), np.array([label.recharges], np.int64),
                 np.array([label.waits], np.int64),
                 np.array([label.omega], np.int64), label.cdf[None, :],
                 np.zeros(1, np.int64),
                 np.array([label.run_length], np.int64) if aux else None,
                 label.pre_cdf[None, :] if aux else None,
                 np.array([label.pre_omega], np.int64) if aux else None)
    pol = graph.instance.policy
    mod_cost = problem.arc_cost - problem._arc_credits(duals)
    out = problem._extend_pool(pool, arc.index, mod_cost, duals.chance_dual,
                               (1.0 - pol.epsilon) - SURVIVAL_TOL, [-1, -1], [-1, -1])
    if out is None:
        return None
    return Label(arc.head, out.F[0], int(out.omega[0]), float(out.C[0]),
                 int(out.R[0]), int(out.E[0]),
                 0 if out.m is None else int(out.m[0]),
                 None if out.preF is None else out.preF[0],
                 0 if out.pre_omega is None else int(out.pre_omega[0]))


def dominates(l1: Label, l2: Label) -> bool:
    """Six-condition dominance between two labels at the same node."""
    if l1.node != l2.node:
        raise ValueError("labels must sit at the same node")
    if l1.run_length != l2.run_length:
        return False
    if l1.pre_cdf is not None:
        f1, f2 = l1.pre_cdf, l2.pre_cdf
        w1, w2 = l1.pre_omega, l2.pre_omega
    else:
        f1, f2 = l1.cdf, l2.cdf
        w1, w2 = l1.omega, l2.omega
    if l1.cost > l2.cost or l1.recharges > l2.recharges or l1.waits > l2.waits:
        return False
    if w1 < w2 or f1[-1] < f2[-1]:
        return False
    p1 = _complement_pattern(f1[None, :])[0]
    p2 = _complement_pattern(f2[None, :])[0]
    return bool(np.all(p1 >= p2))


def solve_pricing(graph: DepotGraph, duals: DualPrices, model: SoCModel | None = None,
                  **kwargs) -> list[Column]:
    model = model or SoCModel(graph.instance)
    return PricingProblem(graph, model).solve(duals, **kwargs)

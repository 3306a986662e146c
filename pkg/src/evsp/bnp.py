"""Diving branch-and-price driver.

Each node runs column generation to LP optimality (RMP solve, per-depot
stochastic pricing, repeat), updating the incumbent whenever an integer
RMP solution that is a genuine cover appears. Branching first splits once on
the fractional total vehicle count, then dives by fixing schedule variables
or arcs chosen by the three scored rounding strategies. Perturbation stays
active until the first integer-under-perturbation solution, which triggers a
re-solve with the perturbation stripped.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .instances import Instance
from .master import INT_TOL, Column, MasterState, NodeConfig, RMPSolution
from .network import CONNECTION, PULL_IN, PULL_OUT, DepotGraph, build_all_graphs
from .pricing import PricingProblem
from .probability import SoCModel, schedule_probability

BOUND_TOL = 1e-6


@dataclass
class Limits:
    time_limit_s: float = 7200.0
    max_nodes: int = 2000
    columns_per_depot: int = 200


@dataclass
class BnbNode:
    parent: "BnbNode | None"
    fixed_columns: frozenset[int] = frozenset()
    fixed_arcs: tuple = ()                 # ((depot_idx, arc_idx), ...)
    removed_arcs: tuple = ()               # one frozenset of arc ids per depot
    vehicles_le: int | None = None
    vehicles_ge: int | None = None
    perturbed: bool = True
    vehicle_branched: bool = False
    depth: int = 0
    lp_bound: float | None = None


@dataclass
class SolverStats:
    gap_pct: float = math.nan
    bb_nodes: int = 0
    total_s: float = 0.0
    root_s: float = 0.0
    pricing_s: float = 0.0
    cg_iterations: int = 0
    columns_generated: int = 0
    root_lp_bound: float = math.nan
    upper_bound: float = math.nan
    status: str = "unsolved"


@dataclass
class Solution:
    objective: float
    columns: list[Column]
    stats: SolverStats
    epsilon: float

    @property
    def n_vehicles(self) -> int:
        return len(self.columns)

    def survivals(self) -> list[float]:
        return [c.survival for c in self.columns]


class BranchAndPrice:
    def __init__(self, instance: Instance, epsilon: float | None = None,
                 limits: Limits | None = None, log=None):
        self.instance = instance
        self.limits = limits or Limits()
        self.log = log
        self.graphs = build_all_graphs(instance)
        self.model = SoCModel(instance)
        self.pricers = [PricingProblem(g, self.model) for g in self.graphs]
        self.master = MasterState(instance, epsilon)
        self.stats = SolverStats()
        self._t0 = 0.0
        self._deadline = math.inf
        self._col_arcsets: dict[int, frozenset[int]] = {}

    # -- helpers ----------------------------------------------------------

    def _say(self, msg: str) -> None:
        if self.log:
            self.log(msg)

    def _timed_out(self) -> bool:
        return time.perf_counter() > self._deadline

    def _inactive_columns(self, node: BnbNode) -> frozenset[int]:
        removed = node.removed_arcs
        if not any(removed):
            return frozenset()
        out = set()
        for idx, col in enumerate(self.master.columns):
            arcset = self._col_arcsets.get(idx)
            if arcset is None:
                arcset = frozenset(col.arc_seq)
                self._col_arcsets[idx] = arcset
            if arcset & removed[col.depot_idx]:
                out.add(idx)
        return frozenset(out)

    def _node_config(self, node: BnbNode) -> NodeConfig:
        return NodeConfig(node.fixed_columns, self._inactive_columns(node),
                          node.vehicles_le, node.vehicles_ge, node.perturbed)

    def _empty_removed(self) -> tuple:
        return tuple(frozenset() for _ in self.graphs)

    # -- column generation at one node -------------------------------------

    def _solve_node(self, node: BnbNode, incumbent_box: dict) -> RMPSolution | None:
        self.master.apply_config(self._node_config(node))
        while True:
            sol = self.master.solve_rmp()
            if sol.status != "optimal":
                return None
            self._maybe_update_incumbent(sol, incumbent_box)
            if self._timed_out():
                return sol
            t = time.perf_counter()
            fresh: list[Column] = []
            duals = sol.duals.as_pricing_duals()
            for d, pricer in enumerate(self.pricers):
                fresh.extend(pricer.solve(
                    duals, removed_arcs=node.removed_arcs[d],
                    max_columns=self.limits.columns_per_depot))
            self.stats.pricing_s += time.perf_counter() - t
            self.stats.cg_iterations += 1
            if not fresh or self.master.add_columns(fresh) == 0:
                return sol
            self.stats.columns_generated += len(fresh)

    def _maybe_update_incumbent(self, sol: RMPSolution, box: dict) -> None:
        if not sol.is_integer() or sol.uses_perturbation() or sol.uses_artificials():
            return
        cols = [self.master.columns[i] for i in sol.selected()]
        cost = sum(c.cost for c in cols)
        if cost < box.get("ub", math.inf) - BOUND_TOL:
            issues = validate_solution(self.instance, self.graphs, self.model,
                                       cols, self.master.epsilon)
            if issues:
                self._say(f"rejecting integer point: {issues[0]}")
                return
            box["ub"] = cost
            box["columns"] = cols
            self._say(f"incumbent {cost:.1f} with {len(cols)} vehicles")

    # -- branching ----------------------------------------------------------

    def _branch_vehicle_count(self, node: BnbNode, total: float) -> list[BnbNode]:
        lo, hi = math.floor(total), math.ceil(total)
        common = dict(fixed_columns=node.fixed_columns, fixed_arcs=node.fixed_arcs,
                      removed_arcs=node.removed_arcs, perturbed=node.perturbed,
                      vehicle_branched=True, depth=node.depth + 1)
        ge_child = BnbNode(node, vehicles_le=node.vehicles_le, vehicles_ge=hi, **common)
        le_child = BnbNode(node, vehicles_le=lo, vehicles_ge=node.vehicles_ge, **common)
        return [ge_child, le_child]   # stack order: the <= floor child dives first

    def _select_rounding(self, node: BnbNode, sol: RMPSolution):
        frac = lambda v: v - math.floor(v + INT_TOL)
        y_cand = [(float(sol.y[j]), ("schedule", j))
                  for j in np.flatnonzero((sol.y > INT_TOL) & (sol.y < 1.0 - INT_TOL))]

        flows: dict[tuple, float] = {}
        kinds: dict[tuple, str] = {}
        for j in np.flatnonzero(sol.y > INT_TOL):
            col = self.master.columns[int(j)]
            g = self.graphs[col.depot_idx]
            for ai in col.arc_seq:
                arc = g.arcs[ai]
                key = (g.nodes[arc.tail].key(), g.nodes[arc.head].key())
                flows[key] = flows.get(key, 0.0) + float(sol.y[j])
                kinds[key] = arc.kind
        conn_cand, any_cand = [], []
        for key, f in flows.items():
            fv = frac(f)
            if not (INT_TOL < fv < 1.0 - INT_TOL):
                continue
            if kinds[key] in (PULL_OUT, PULL_IN):
                continue
            entry = (fv, ("arc", key))
            any_cand.append(entry)
            if kinds[key] == CONNECTION:
                conn_cand.append(entry)

        scored = []
        if y_cand:
            scored.append((max(v for v, _ in y_cand), 0, "schedule", y_cand))
        if conn_cand:
            scored.append((max(v for v, _ in conn_cand), 1, "connection-arc", conn_cand))
        if any_cand:
            scored.append((0.7 * max(v for v, _ in any_cand), 2, "any-arc", any_cand))
        if not scored:
            return None
        scored.sort(key=lambda s: (-s[0], s[1]))
        _, _, strategy, cand = scored[0]
        cand.sort(key=lambda c: -c[0])
        big = [c for c in cand if c[0] >= 0.99]
        targets = [t for _, t in (big[:3] if big else cand[:1])]
        return strategy, targets

    def _apply_rounding(self, node: BnbNode, strategy: str, targets) -> BnbNode:
        fixed_cols = set(node.fixed_columns)
        fixed_arcs = list(node.fixed_arcs)
        removed = [set(s) for s in node.removed_arcs]
        for kind, payload in targets:
            if kind == "schedule":
                fixed_cols.add(int(payload))
                continue
            tail_key, head_key = payload
            conflict = False
            for d, g in enumerate(self.graphs):
                for arc in g.arcs:
                    if (g.nodes[arc.tail].key() == tail_key
                            and g.nodes[arc.head].key() == head_key
                            and arc.index in removed[d]):
                        conflict = True
            if conflict:
                continue
            for d, g in enumerate(self.graphs):
                for arc in g.arcs:
                    tk, hk = g.nodes[arc.tail].key(), g.nodes[arc.head].key()
                    if tk == tail_key and hk == head_key:
                        fixed_arcs.append((d, arc.index))
                    elif tk == tail_key or hk == head_key:
                        removed[d].add(arc.index)
        return BnbNode(node, frozenset(fixed_cols), tuple(fixed_arcs),
                       tuple(frozenset(s) for s in removed),
                       node.vehicles_le, node.vehicles_ge, node.perturbed,
                       node.vehicle_branched, node.depth + 1)

    # -- main loop -----------------------------------------------------------

    def solve(self) -> Solution:
        self._t0 = time.perf_counter()
        self._deadline = self._t0 + self.limits.time_limit_s
        box: dict = {}
        root = BnbNode(None, removed_arcs=self._empty_removed())
        stack = [root]
        root_bound = math.nan
        status = "completed"

        while stack:
            if self._timed_out():
                status = "time_limit"
                break
            if self.stats.bb_nodes >= self.limits.max_nodes:
                status = "node_limit"
                break
            node = stack.pop()
            self.stats.bb_nodes += 1
            sol = self._solve_node(node, box)
            if self.stats.bb_nodes == 1:
                # the dive branches on the perturbed LP, but the reported
                # lower bound is the true (unperturbed) root LP value
                if sol is not None and sol.status == "optimal":
                    if node.perturbed and not self._timed_out():
                        strip = replace(node, perturbed=False)
                        strip_sol = self._solve_node(strip, box)
                        if strip_sol is not None and strip_sol.status == "optimal" \
                                and not strip_sol.uses_artificials():
                            root_bound = strip_sol.objective
                        else:
                            root_bound = sol.objective
                    else:
                        root_bound = sol.objective
                self.stats.root_s = time.perf_counter() - self._t0
            if sol is None:
                continue
            node.lp_bound = sol.objective
            self._say(f"node {self.stats.bb_nodes} depth {node.depth} "
                      f"lp {sol.objective:.2f} cols {len(self.master.columns)} "
                      f"ub {box.get('ub', math.inf):.2f}")
            if sol.objective >= box.get("ub", math.inf) - BOUND_TOL:
                continue
            if sol.uses_artificials():
                # column generation is complete, so the node's master problem
                # itself cannot cover every trip: the subtree is infeasible
                continue
            integral = sol.is_integer()
            if integral:
                if node.perturbed and sol.uses_perturbation():
                    child = replace(node, parent=node, perturbed=False,
                                    depth=node.depth + 1, lp_bound=None)
                    stack.append(child)
                continue
            total = float(sol.y.sum())
            if not node.vehicle_branched and abs(total - round(total)) > INT_TOL:
                stack.extend(self._branch_vehicle_count(node, total))
                continue
            choice = self._select_rounding(node, sol)
            if choice is None:
                continue
            child = self._apply_rounding(node, *choice)
            if (child.fixed_columns == node.fixed_columns
                    and child.removed_arcs == node.removed_arcs):
                # the arc fixes were all vacuous; force progress on the
                # largest fractional schedule variable instead
                frac_y = np.where((sol.y > INT_TOL) & (sol.y < 1.0 - INT_TOL),
                                  sol.y, -1.0)
                j = int(np.argmax(frac_y))
                if frac_y[j] < 0:
                    continue
                child = replace(node, parent=node, depth=node.depth + 1,
                                lp_bound=None,
                                fixed_columns=node.fixed_columns | {j})
            stack.append(child)

        self.stats.total_s = time.perf_counter() - self._t0
        self.stats.root_lp_bound = root_bound
        ub = box.get("ub", math.inf)
        self.stats.upper_bound = ub
        if math.isfinite(ub) and math.isfinite(root_bound) and ub > 0:
            self.stats.gap_pct = max(0.0, (ub - root_bound) / ub * 100.0)
        if "columns" not in box:
            self.stats.status = "infeasible" if status == "completed" else status
            return Solution(math.inf, [], self.stats, self.master.epsilon)
        self.stats.status = status
        return Solution(ub, box["columns"], self.stats, self.master.epsilon)


def solve(instance: Instance, epsilon: float | None = None,
          limits: Limits | None = None, log=None) -> Solution:
    return BranchAndPrice(instance, epsilon, limits, log).solve()


def branch_vehicle_count(node: BnbNode, fractional_total: float) -> list[BnbNode]:
    """Floor/ceil children on the total vehicle count (exposed for tests)."""
    lo, hi = math.floor(fractional_total), math.ceil(fractional_total)
    if lo == hi:
        return []
    ge_child = replace(node, parent=node, vehicles_ge=hi, vehicle_branched=True,
                       depth=node.depth + 1)
    le_child = replace(node, parent=node, vehicles_le=lo, vehicle_branched=True,
                       depth=node.depth + 1)
    return [ge_child, le_child]


def validate_solution(instance: Instance, graphs: list[DepotGraph],
                      model: SoCModel, columns: list[Column],
                      epsilon: float) -> list[str]:
    """Independent re-validation of an integer solution: exact coverage,
    depot and charger capacities, recomputed survival probabilities, and the
    chance constraint."""
    issues = []
    cover: dict[int, int] = {}
    for col in columns:
        for t in col.trips:
            cover[t] = cover.get(t, 0) + 1
    for t in range(len(instance.trips)):
        if cover.get(t, 0) != 1:
            issues.append(f"trip {instance.trips[t].id} covered {cover.get(t, 0)} times")

    for d, depot in enumerate(instance.depots):
        used = sum(1 for c in columns if c.depot_idx == d)
        if used > depot.capacity:
            issues.append(f"depot {depot.id} uses {used} > {depot.capacity} vehicles")
    usage: dict[tuple[int, int], int] = {}
    for col in columns:
        for hr in col.charger_usage:
            usage[hr] = usage.get(hr, 0) + 1
    for (h, r), n in usage.items():
        if n > instance.stations[h].chargers:
            issues.append(f"station {instance.stations[h].id} interval {r} "
                          f"uses {n} chargers")

    log_total = 0.0
    for col in columns:
        p = schedule_probability(graphs[col.depot_idx], list(col.node_seq), model)
        if abs(p - col.survival) > 1e-9:
            issues.append(f"schedule survival mismatch: {p} vs {col.survival}")
        log_total += col.log_survival
    if math.exp(log_total) < (1.0 - epsilon) - 1e-9:
        issues.append(f"chance constraint violated: {math.exp(log_total):.6f} "
                      f"< {1 - epsilon:.6f}")
    return issues

"""Shared builders and independent oracles for the test suite.

The oracles here deliberately avoid the production code paths: path
enumeration walks the raw graph with its own feasibility bookkeeping, the
set-partitioning oracle searches covers exhaustively, and the probability
oracle enumerates every combination of trip energy outcomes.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from evsp.charging import ChargingFunction, FAST_CHARGER_BREAKPOINTS
from evsp.instances import (CostParams, ChargingStation, Depot, EnergyPMF,
                            Instance, SoCPolicy, TravelMatrix, Trip)
from evsp.network import CHARGE, SINK, SOURCE, TRIP, WAIT, DepotGraph, build_graph


def tiny_travel(cross_min=4, cross_pct=2) -> TravelMatrix:
    """Terminals 4 min apart, depot 2 min from A, station 9 min from both.

    The 9-minute station deadhead keeps the time-expanded graph acyclic even
    for 8-minute trips: leaving the station, riding a trip, and driving back
    always spans more than two intervals.
    """
    locs = ["terminal_a", "terminal_b", "depot_0", "station_0"]
    minutes, energy = {}, {}
    for a in locs:
        for b in locs:
            if a == b:
                t, e = 0, 0
            elif "station_0" in (a, b):
                t, e = 9, 2
            elif "depot_0" in (a, b):
                t, e = 2, 1
            else:
                t, e = cross_min, cross_pct
            minutes[(a, b)] = t
            energy[(a, b)] = e
    return TravelMatrix(minutes, energy)


def make_tiny_instance(n_trips: int, seed: int, epsilon: float = 0.1,
                       n_intervals: int = 3, sigma_low: int = 20,
                       max_support: int = 3) -> Instance:
    """Hand-scale instance: <=6 trips on a 15*n_intervals-minute horizon,
    one depot and one station, small random energy PMFs."""
    rng = np.random.default_rng(seed)
    start = 300
    end = start + 15 * n_intervals
    policy = SoCPolicy(sigma_low=sigma_low, sigma_up=80, sigma_init=80,
                       epsilon=epsilon)
    trips = []
    for i in range(n_trips):
        dep = start + int(rng.integers(0, 15 * n_intervals - 12))
        travel = int(rng.integers(8, 12))
        dep = min(dep, end - travel)
        origin, dest = ("terminal_a", "terminal_b") if i % 2 == 0 else \
            ("terminal_b", "terminal_a")
        k = int(rng.integers(1, max_support + 1))
        vals = sorted(rng.choice(np.arange(5, 31), size=k, replace=False).tolist())
        probs = rng.dirichlet(np.ones(k)).tolist()
        probs[-1] = 1.0 - sum(probs[:-1])
        pmf = EnergyPMF(tuple((int(v), float(p)) for v, p in zip(vals, probs)))
        trips.append(Trip(f"v{i}", origin, dest, dep, travel, pmf))
    trips.sort(key=lambda t: (t.departure_min, t.id))
    return Instance(
        tuple(trips), (Depot("depot_0", "depot_0", n_trips),),
        (ChargingStation("station_0", "station_0", 1),), tiny_travel(),
        policy, CostParams(), battery_kwh=300.0,
        horizon_start_min=start, horizon_end_min=end)


def reference_charger(cap=100, interval=15, max_m=8) -> ChargingFunction:
    return ChargingFunction(FAST_CHARGER_BREAKPOINTS, 300.0, cap, interval, max_m)


# --- independent oracles -----------------------------------------------


def simulate_outcome(graph: DepotGraph, node_seq, draws: dict[int, int],
                     charger: ChargingFunction, policy) -> tuple[bool, int]:
    """Walk one outcome combination; returns (stayed in range, final SoC).

    Consecutive charging nodes count as one charge of the combined duration
    applied to the SoC at the start of the run.
    """
    soc = policy.sigma_init
    ok = True
    run = 0
    pre = soc
    for prev, cur in zip(node_seq, node_seq[1:]):
        arc = graph.arc_between(prev, cur)
        node = graph.nodes[cur]
        if node.kind == CHARGE:
            if run == 0:
                pre = soc
            run += 1
            soc = charger.soc_after(pre, run * policy.interval_min)
        else:
            run = 0
            drop = arc.energy_pct
            if node.kind == TRIP:
                drop += draws[node.trip_idx]
            soc -= drop
            if soc < policy.sigma_low:
                ok = False
    return ok, soc


def brute_force_path_probability(graph: DepotGraph, node_seq) -> float:
    """Exact survival probability by enumerating every combination of trip
    energy outcomes along the path."""
    inst = graph.instance
    pol = inst.policy
    charger = ChargingFunction(inst.charger_breakpoints, inst.battery_kwh,
                               pol.sigma_up, pol.interval_min, inst.n_intervals)
    trip_idxs = [graph.nodes[v].trip_idx for v in node_seq
                 if graph.nodes[v].kind == TRIP]
    supports = [inst.trips[t].energy_pmf.sorted_support() for t in trip_idxs]
    total = 0.0
    for combo in itertools.product(*supports):
        prob = 1.0
        draws = {}
        for t, (v, p) in zip(trip_idxs, combo):
            prob *= p
            draws[t] = v
        ok, _ = simulate_outcome(graph, node_seq, draws, charger, pol)
        if ok:
            total += prob
    return total


def enumerate_feasible_schedules(graph: DepotGraph, epsilon: float):
    """All feasible source->sink schedules by DFS with full feasibility rules:
    worst-case SoC floor, survival floor at every prefix, and the two charging
    resource windows. Returns (node_seq, cost, trips, charger_usage, survival).
    """
    from evsp.probability import SoCModel, init_distribution, propagate

    inst = graph.instance
    pol = inst.policy
    model = SoCModel(inst)
    floor = (1.0 - epsilon) - 1e-9
    results = []

    def step_dist(dist, pre_dist, run, cur, arc):
        kind = graph.nodes[cur].kind
        if kind == CHARGE:
            pre = dist if run == 0 else pre_dist
            return propagate(model, pre, CHARGE, run + 1), pre, run + 1
        if kind == TRIP:
            return propagate(model, dist, TRIP,
                             (graph.nodes[cur].trip_idx, arc.energy_pct)), None, 0
        return propagate(model, dist, kind, arc.energy_pct), None, 0

    def dfs(node, dist, pre_dist, run, omega, pre_omega, rr, ee, path, cost):
        if node == graph.sink:
            results.append((tuple(path), cost,
                            tuple(sorted(graph.nodes[v].trip_idx for v in path
                                         if graph.nodes[v].kind == TRIP)),
                            tuple(sorted((graph.nodes[v].station_idx,
                                          graph.nodes[v].interval)
                                         for v in path
                                         if graph.nodes[v].kind == CHARGE)),
                            dist.survival))
            return
        for ai in graph.out_arcs[node]:
            arc = graph.arcs[ai]
            head = graph.nodes[arc.head]
            r2, e2 = rr, ee
            if head.kind == CHARGE:
                if graph.nodes[node].kind == WAIT:
                    r2, e2 = rr + 1, ee - 1
            elif head.kind == TRIP and graph.nodes[node].kind == WAIT:
                r2 = rr - 1
            elif head.kind == WAIT and graph.nodes[node].kind == TRIP:
                e2 = ee + 1
            if head.kind == TRIP and (r2 > 0 or e2 > 0):
                continue
            if r2 > 1 or e2 > 1:
                continue
            if head.kind == CHARGE:
                run2 = run + 1
                pre_o = omega if run == 0 else pre_omega
                omega2 = model.charge_rows[run2][pre_o]
                d2, p2, _ = step_dist(dist, pre_dist, run, arc.head, arc)
            else:
                run2 = 0
                pre_o = 0
                if head.kind == TRIP:
                    values, _ = model.trip_pmfs[head.trip_idx]
                    omega2 = omega - int(values.max()) - arc.energy_pct
                else:
                    omega2 = omega - arc.energy_pct
                d2, p2, _ = step_dist(dist, pre_dist, run, arc.head, arc)
            if omega2 < pol.sigma_min or d2.survival < floor:
                continue
            path.append(arc.head)
            dfs(arc.head, d2, p2, run2, int(omega2),
                int(pre_o) if head.kind == CHARGE else 0,
                r2, e2, path, cost + arc.cost)
            path.pop()

    from evsp.probability import init_distribution
    dfs(graph.source, init_distribution(model), None, 0, pol.sigma_init, 0,
        0, 0, [graph.source], 0.0)
    return results


def optimal_partition_cost(schedules, n_trips: int, epsilon: float,
                           depot_capacity: int, charger_capacity: int) -> float:
    """Exhaustive set-partitioning optimum over enumerated schedules with
    depot/charger capacities and the product-form chance constraint."""
    by_first: dict[int, list] = {}
    for sched in schedules:
        _, cost, trips, usage, survival = sched
        if not trips:
            continue
        by_first.setdefault(trips[0], []).append(sched)
    best = [math.inf]

    def rec(uncovered: frozenset, cost: float, used: int, usage_count: dict,
            log_p: float):
        if cost >= best[0]:
            return
        if not uncovered:
            if math.exp(log_p) >= (1.0 - epsilon) - 1e-12:
                best[0] = cost
            return
        if used == depot_capacity:
            return
        first = min(uncovered)
        for sched in by_first.get(first, []):
            _, c, trips, usage, survival = sched
            if not set(trips) <= uncovered:
                continue
            if survival <= 0:
                continue
            over = False
            for hr in usage:
                if usage_count.get(hr, 0) + 1 > charger_capacity:
                    over = True
                    break
            if over:
                continue
            for hr in usage:
                usage_count[hr] = usage_count.get(hr, 0) + 1
            rec(uncovered - set(trips), cost + c, used + 1, usage_count,
                log_p + math.log(survival))
            for hr in usage:
                usage_count[hr] -= 1

    rec(frozenset(range(n_trips)), 0.0, 0, {}, 0.0)
    return best[0]


@pytest.fixture(scope="session")
def tiny_graph():
    inst = make_tiny_instance(4, seed=42)
    return build_graph(inst, 0)

"""Connection-based depot networks with time-expanded charging/waiting nodes.

Per depot, the graph holds one source and one sink, one node per timetabled
trip, and one waiting plus one charging node per (station, time interval).
Five arc families connect them: pull-out, pull-in, connection, to-charge, and
charging (station chains, wait->charge, charge->wait, wait->trip).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .instances import Instance

SOURCE, SINK, TRIP, WAIT, CHARGE = "source", "sink", "trip", "wait", "charge"
PULL_OUT, PULL_IN, CONNECTION, CHARGING, TO_CHARGE = (
    "pull_out", "pull_in", "connection", "charging", "to_charge")

# which head kinds an arc may point to, per tail kind
_ALLOWED = {
    SOURCE: {TRIP},
    TRIP: {TRIP, WAIT, SINK},
    WAIT: {WAIT, CHARGE, TRIP, SINK},
    CHARGE: {CHARGE, WAIT},
    SINK: set(),
}


@dataclass(frozen=True)
class TimeInterval:
    index: int
    begin_min: int
    end_min: int


@dataclass(frozen=True)
class Node:
    index: int
    kind: str
    trip_idx: int = -1      # for TRIP nodes: position in instance.trips
    station_idx: int = -1   # for WAIT/CHARGE nodes
    interval: int = -1

    def key(self) -> tuple:
        return (self.kind, self.trip_idx, self.station_idx, self.interval)


@dataclass(frozen=True)
class Arc:
    index: int
    tail: int
    head: int
    kind: str
    cost: float
    energy_pct: int
    wait_min: int = 0
    via_depot: bool = False


@dataclass
class DepotGraph:
    depot_idx: int
    instance: Instance
    intervals: list[TimeInterval]
    nodes: list[Node] = field(default_factory=list)
    arcs: list[Arc] = field(default_factory=list)
    out_arcs: list[list[int]] = field(default_factory=list)
    in_arcs: list[list[int]] = field(default_factory=list)
    topo_order: list[int] = field(default_factory=list)

    @property
    def source(self) -> int:
        return 0

    @property
    def sink(self) -> int:
        return 1

    def arc_between(self, tail: int, head: int) -> Arc | None:
        for ai in self.out_arcs[tail]:
            if self.arcs[ai].head == head:
                return self.arcs[ai]
        return None

    def node_label(self, idx: int) -> str:
        n = self.nodes[idx]
        if n.kind == TRIP:
            return self.instance.trips[n.trip_idx].id
        if n.kind in (WAIT, CHARGE):
            tag = "w" if n.kind == WAIT else "c"
            return f"h{tag}{n.station_idx}_r{n.interval}"
        return "n0" if n.kind == SOURCE else "n1"


def _intervals(instance: Instance) -> list[TimeInterval]:
    rho = instance.policy.interval_min
    out = []
    for r in range(instance.n_intervals):
        b = instance.horizon_start_min + r * rho
        out.append(TimeInterval(r, b, b + rho))
    return out


def _interval_of(intervals: list[TimeInterval], t: int) -> int:
    """Index r with B_r <= t < E_r, or -1 when t is outside the horizon."""
    if not intervals or t < intervals[0].begin_min or t >= intervals[-1].end_min:
        return -1
    rho = intervals[0].end_min - intervals[0].begin_min
    return (t - intervals[0].begin_min) // rho


def build_graph(instance: Instance, depot_idx: int) -> DepotGraph:
    depot = instance.depots[depot_idx]
    travel = instance.travel
    costs = instance.costs
    tau = instance.policy.min_layover_min
    max_wait = instance.policy.max_terminal_wait_min
    rho = instance.policy.interval_min
    intervals = _intervals(instance)
    k_last = len(intervals) - 1

    g = DepotGraph(depot_idx, instance, intervals)
    g.nodes.append(Node(0, SOURCE))
    g.nodes.append(Node(1, SINK))
    trip_nodes = []
    for ti in range(len(instance.trips)):
        node = Node(len(g.nodes), TRIP, trip_idx=ti)
        g.nodes.append(node)
        trip_nodes.append(node.index)
    wait_nodes: dict[tuple[int, int], int] = {}
    charge_nodes: dict[tuple[int, int], int] = {}
    for hi in range(len(instance.stations)):
        for r in range(len(intervals)):
            w = Node(len(g.nodes), WAIT, station_idx=hi, interval=r)
            g.nodes.append(w)
            wait_nodes[(hi, r)] = w.index
            c = Node(len(g.nodes), CHARGE, station_idx=hi, interval=r)
            g.nodes.append(c)
            charge_nodes[(hi, r)] = c.index

    def add(tail, head, kind, cost, energy, wait=0, via=False):
        arc = Arc(len(g.arcs), tail, head, kind, cost, energy, wait, via)
        g.arcs.append(arc)

    def nearest_depot(loc: str) -> str:
        return min(instance.depots, key=lambda d: travel.time(loc, d.location)).location

    for ti, trip in enumerate(instance.trips):
        # pull-out: vehicle fixed cost plus the deadhead from the depot
        t_out = travel.time(depot.location, trip.origin)
        add(0, trip_nodes[ti], PULL_OUT,
            costs.vehicle + costs.deadhead_per_min * t_out,
            travel.energy(depot.location, trip.origin))
        # pull-in
        t_in = travel.time(trip.destination, depot.location)
        add(trip_nodes[ti], 1, PULL_IN, costs.deadhead_per_min * t_in,
            travel.energy(trip.destination, depot.location))

    for ti, a in enumerate(instance.trips):
        for tj, b in enumerate(instance.trips):
            if ti == tj:
                continue
            t_ij = travel.time(a.destination, b.origin)
            if b.departure_min < a.arrival_min + t_ij + tau:
                continue
            wait = b.departure_min - a.arrival_min - t_ij
            if wait > max_wait:
                # long waits are spent at the nearest depot, unattended
                dloc = nearest_depot(a.destination)
                dt = travel.time(a.destination, dloc) + travel.time(dloc, b.origin)
                de = travel.energy(a.destination, dloc) + travel.energy(dloc, b.origin)
                add(trip_nodes[ti], trip_nodes[tj], CONNECTION,
                    costs.deadhead_per_min * dt, de, wait, via=True)
            else:
                add(trip_nodes[ti], trip_nodes[tj], CONNECTION,
                    costs.deadhead_per_min * t_ij + costs.waiting_per_min * wait,
                    travel.energy(a.destination, b.origin), wait)

    for hi, station in enumerate(instance.stations):
        loc = station.location
        for r in range(len(intervals)):
            # every interval spent at the station costs waiting time, whether
            # beside the charger or plugged in; the activity fee is paid once
            if r < k_last:
                add(wait_nodes[(hi, r)], wait_nodes[(hi, r + 1)], CHARGING,
                    costs.waiting_per_min * rho, 0, wait=rho)
                add(charge_nodes[(hi, r)], charge_nodes[(hi, r + 1)], CHARGING,
                    costs.waiting_per_min * rho, 0, wait=rho)
                add(wait_nodes[(hi, r)], charge_nodes[(hi, r + 1)], CHARGING,
                    costs.charging_activity + costs.waiting_per_min * rho, 0,
                    wait=rho)
            add(charge_nodes[(hi, r)], wait_nodes[(hi, r)], CHARGING, 0.0, 0)
        t_back = travel.time(loc, depot.location)
        add(wait_nodes[(hi, k_last)], 1, PULL_IN, costs.deadhead_per_min * t_back,
            travel.energy(loc, depot.location))

        for ti, trip in enumerate(instance.trips):
            # to charge: earliest arrival at the station fixes the interval
            t_to = travel.time(trip.destination, loc)
            arr = trip.arrival_min + t_to
            r = _interval_of(intervals, arr)
            if r >= 0:
                idle = intervals[r].end_min - arr
                add(trip_nodes[ti], wait_nodes[(hi, r)], TO_CHARGE,
                    costs.deadhead_per_min * t_to + costs.waiting_per_min * idle,
                    travel.energy(trip.destination, loc), wait=idle)
            # wait -> trip: latest feasible departure time fixes the interval
            t_from = travel.time(loc, trip.origin)
            latest = trip.departure_min - tau - t_from
            r = _interval_of(intervals, latest)
            if 0 <= r and r + 1 <= k_last:
                add(wait_nodes[(hi, r + 1)], trip_nodes[ti], CHARGING,
                    costs.deadhead_per_min * t_from,
                    travel.energy(loc, trip.origin))

    g.out_arcs = [[] for _ in g.nodes]
    g.in_arcs = [[] for _ in g.nodes]
    for arc in g.arcs:
        g.out_arcs[arc.tail].append(arc.index)
        g.in_arcs[arc.head].append(arc.index)
    g.topo_order = _topological_order(g)
    if len(g.topo_order) != len(g.nodes):
        # short trips relative to the interval length can close a loop between
        # a waiting node and a trip; the labeling needs a DAG
        raise ValueError("instance timing induces a cyclic connection network")
    return g


def _topological_order(g: DepotGraph) -> list[int]:
    indeg = [0] * len(g.nodes)
    for arc in g.arcs:
        indeg[arc.head] += 1
    queue = deque(i for i in range(len(g.nodes)) if indeg[i] == 0)
    order = []
    while queue:
        u = queue.popleft()
        order.append(u)
        for ai in g.out_arcs[u]:
            v = g.arcs[ai].head
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    return order


def validate_graph(g: DepotGraph) -> list[str]:
    """Structural checks; returns a list of violation messages (empty = ok)."""
    inst = g.instance
    issues = []
    if len(g.topo_order) != len(g.nodes):
        issues.append("graph contains a directed cycle")

    n_int = len(g.intervals)
    n_wait = sum(1 for n in g.nodes if n.kind == WAIT)
    n_charge = sum(1 for n in g.nodes if n.kind == CHARGE)
    expected = len(inst.stations) * n_int
    if n_wait != expected or n_charge != expected:
        issues.append(f"expected {expected} waiting and charging nodes, "
                      f"found {n_wait}/{n_charge}")
    if sum(1 for n in g.nodes if n.kind == SOURCE) != 1 or \
       sum(1 for n in g.nodes if n.kind == SINK) != 1:
        issues.append("graph must contain exactly one source and one sink")

    tau = inst.policy.min_layover_min
    pair_count: dict[tuple[int, int], int] = {}
    for arc in g.arcs:
        tk, hk = g.nodes[arc.tail].kind, g.nodes[arc.head].kind
        if hk not in _ALLOWED[tk]:
            issues.append(f"arc {arc.index}: {tk}->{hk} is not a legal transition")
        if arc.kind == CONNECTION:
            a = inst.trips[g.nodes[arc.tail].trip_idx]
            b = inst.trips[g.nodes[arc.head].trip_idx]
            t_ij = inst.travel.time(a.destination, b.origin)
            if b.departure_min < a.arrival_min + t_ij + tau:
                issues.append(f"arc {arc.index}: connection {a.id}->{b.id} departs too early")
            pair_count[(arc.tail, arc.head)] = pair_count.get((arc.tail, arc.head), 0) + 1
    for (ti, tj), cnt in pair_count.items():
        if cnt > 1:
            issues.append(f"duplicate connection arcs between nodes {ti} and {tj}")

    reachable = _reach(g, g.source, forward=True)
    coreach = _reach(g, g.sink, forward=False)
    for n in g.nodes:
        if n.kind == TRIP:
            if n.index not in reachable:
                issues.append(f"trip node {g.node_label(n.index)} unreachable from source")
            if n.index not in coreach:
                issues.append(f"trip node {g.node_label(n.index)} cannot reach sink")
    return issues


def _reach(g: DepotGraph, start: int, forward: bool) -> set[int]:
    seen = {start}
    stack = [start]
    arcs = g.out_arcs if forward else g.in_arcs
    while stack:
        u = stack.pop()
        for ai in arcs[u]:
            v = g.arcs[ai].head if forward else g.arcs[ai].tail
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def build_all_graphs(instance: Instance) -> list[DepotGraph]:
    return [build_graph(instance, d) for d in range(len(instance.depots))]


def dump_graph(g: DepotGraph) -> str:
    """Plain-text node/arc listing for debugging."""
    lines = [f"depot {g.depot_idx}: {len(g.nodes)} nodes, {len(g.arcs)} arcs"]
    for n in g.nodes:
        lines.append(f"node {n.index:4d} {n.kind:7s} {g.node_label(n.index)}")
    for a in g.arcs:
        via = " via-depot" if a.via_depot else ""
        lines.append(f"arc {a.index:5d} {a.kind:10s} {g.node_label(a.tail)} -> "
                     f"{g.node_label(a.head)} cost={a.cost:.2f} energy={a.energy_pct}%"
                     f" wait={a.wait_min}{via}")
    return "\n".join(lines)

"""Instance data model, random generator, and JSON file format.

An instance is a timetable of trips on one bus line together with depots,
charging stations, a deadhead travel matrix, SoC policy, and cost parameters.
Trip energy consumption is stochastic: each trip carries a PMF over integer
percent-of-battery consumption values. Deadheads consume deterministically.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .charging import FAST_CHARGER_BREAKPOINTS

PROB_TOL = 1e-9

# Line geometry defaults: one 8.5 km line, depot and charging station at
# terminal A, deadheads at 20 km/h, in-service trips at stop-and-go speed.
LINE_KM = 8.5
DEADHEAD_SPEED_KMH = 20.0
TRIP_MINUTES = 30
MEAN_RATE_LOC = 1.57   # kWh/km, exponential location
MEAN_RATE_SCALE = 0.26  # kWh/km, exponential scale
VAR_RATE_LO = 0.35     # (kWh/km)^2, uniform bounds for the rate variance
VAR_RATE_HI = 0.50
HORIZON_START_MIN = 5 * 60
HORIZON_END_MIN = 24 * 60
MIN_HEADWAY_MIN = 1


class ValidationError(ValueError):
    """Instance data violates a model invariant."""


class ParseError(ValueError):
    """Instance file is malformed or missing fields."""


@dataclass(frozen=True)
class EnergyPMF:
    """Finite-support PMF over integer percent-of-capacity consumption."""

    support: tuple[tuple[int, float], ...]  # (consumption_pct, probability)

    def __post_init__(self):
        vals = [v for v, _ in self.support]
        if len(set(vals)) != len(vals) or any(not (0 <= v <= 100) for v in vals):
            raise ValidationError("PMF consumptions must be distinct integers in 0..100")
        total = sum(p for _, p in self.support)
        if abs(total - 1.0) > PROB_TOL:
            raise ValidationError(f"PMF probabilities sum to {total}, expected 1")
        if any(p < 0 or p > 1 for _, p in self.support):
            raise ValidationError("PMF probabilities must lie in [0, 1]")

    @property
    def max_consumption(self) -> int:
        return max(v for v, _ in self.support)

    @property
    def mean(self) -> float:
        return sum(v * p for v, p in self.support)

    def is_deterministic(self) -> bool:
        return len(self.support) == 1

    def sorted_support(self) -> tuple[tuple[int, float], ...]:
        return tuple(sorted(self.support))


@dataclass(frozen=True)
class Trip:
    id: str
    origin: str
    destination: str
    departure_min: int
    travel_min: int
    energy_pmf: EnergyPMF

    def __post_init__(self):
        if self.departure_min < 0:
            raise ValidationError(f"trip {self.id}: departure_min must be >= 0")
        if self.travel_min <= 0:
            raise ValidationError(f"trip {self.id}: travel_min must be > 0")

    @property
    def arrival_min(self) -> int:
        return self.departure_min + self.travel_min


@dataclass(frozen=True)
class Depot:
    id: str
    location: str
    capacity: int

    def __post_init__(self):
        if self.capacity < 1:
            raise ValidationError(f"depot {self.id}: capacity must be >= 1")


@dataclass(frozen=True)
class ChargingStation:
    id: str
    location: str
    chargers: int

    def __post_init__(self):
        if self.chargers < 1:
            raise ValidationError(f"station {self.id}: chargers must be >= 1")


@dataclass(frozen=True)
class TravelMatrix:
    """Deadhead minutes and deterministic energy (percent) between locations."""

    minutes: dict[tuple[str, str], int]
    energy_pct: dict[tuple[str, str], int]

    def __post_init__(self):
        for (a, b), t in self.minutes.items():
            if t < 0 or self.energy_pct[(a, b)] < 0:
                raise ValidationError(f"travel matrix entry ({a},{b}) must be >= 0")
            if a == b and (t != 0 or self.energy_pct[(a, b)] != 0):
                raise ValidationError(f"travel matrix diagonal ({a},{a}) must be 0")

    def time(self, a: str, b: str) -> int:
        return self.minutes[(a, b)]

    def energy(self, a: str, b: str) -> int:
        return self.energy_pct[(a, b)]


@dataclass(frozen=True)
class SoCPolicy:
    sigma_min: int = 0
    sigma_low: int = 20
    sigma_up: int = 80
    sigma_max: int = 100
    sigma_init: int = 80
    epsilon: float = 0.05
    interval_min: int = 15     # charging/time interval length rho
    min_layover_min: int = 5   # tau
    max_terminal_wait_min: int = 45

    def __post_init__(self):
        if not (self.sigma_min <= self.sigma_low <= self.sigma_up <= self.sigma_max):
            raise ValidationError("SoC bounds must satisfy sigma_min <= sigma_low <= sigma_up <= sigma_max")
        if not (0 <= self.epsilon < 1):
            raise ValidationError("epsilon must lie in [0, 1)")
        if self.interval_min <= 0:
            raise ValidationError("interval_min must be > 0")
        if self.sigma_init != self.sigma_up:
            raise ValidationError("sigma_init must equal sigma_up (schedules start fully charged)")


@dataclass(frozen=True)
class CostParams:
    vehicle: float = 1000.0
    deadhead_per_min: float = 0.4
    waiting_per_min: float = 0.2
    charging_activity: float = 10.0
    under_cover_penalty: float = 1.0   # delta+
    over_cover_penalty: float = 1.0    # delta-
    under_cover_cap: tuple[float, ...] = ()  # xi+ per trip, 0 disables
    over_cover_cap: tuple[float, ...] = ()   # xi- per trip

    def __post_init__(self):
        vals = (self.vehicle, self.deadhead_per_min, self.waiting_per_min,
                self.charging_activity, self.under_cover_penalty, self.over_cover_penalty)
        if any(v < 0 for v in vals) or any(v < 0 for v in self.under_cover_cap + self.over_cover_cap):
            raise ValidationError("cost parameters must be >= 0")


@dataclass(frozen=True)
class Instance:
    trips: tuple[Trip, ...]
    depots: tuple[Depot, ...]
    stations: tuple[ChargingStation, ...]
    travel: TravelMatrix
    policy: SoCPolicy
    costs: CostParams
    battery_kwh: float = 300.0
    horizon_start_min: int = HORIZON_START_MIN
    horizon_end_min: int = HORIZON_END_MIN
    charger_breakpoints: tuple[tuple[int, float], ...] = FAST_CHARGER_BREAKPOINTS
    seed: int | None = None

    def __post_init__(self):
        max_draw = self.policy.sigma_up - self.policy.sigma_min
        for trip in self.trips:
            if trip.departure_min < self.horizon_start_min or trip.arrival_min > self.horizon_end_min:
                raise ValidationError(f"trip {trip.id} does not fit inside the planning horizon")
            if trip.energy_pmf.max_consumption > max_draw:
                raise ValidationError(
                    f"trip {trip.id}: worst-case consumption {trip.energy_pmf.max_consumption}% "
                    f"exceeds usable range {max_draw}%")

    @property
    def n_intervals(self) -> int:
        """Number of time intervals partitioning the horizon (k + 1)."""
        span = self.horizon_end_min - self.horizon_start_min
        return math.ceil(span / self.policy.interval_min)

    def trip_by_id(self, trip_id: str) -> Trip:
        for t in self.trips:
            if t.id == trip_id:
                return t
        raise KeyError(trip_id)

    def canonical_json(self) -> str:
        return json.dumps(_instance_to_obj(self), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def _discretize_normal_energy(mean_kwh: float, var_kwh2: float, capacity_kwh: float) -> EnergyPMF:
    """Bucket a normal kWh distribution onto the integer percent grid.

    Mass in each integer-percent bucket is the CDF difference at the bucket's
    kWh edges. Mass below zero folds into bucket 0; the tail beyond mean + 4
    standard deviations folds into the bucket containing that edge.
    """
    sd = math.sqrt(var_kwh2)
    hi_kwh = mean_kwh + 4.0 * sd
    hi_bucket = max(0, _round_pct(hi_kwh / capacity_kwh * 100.0))

    def cdf(x: float) -> float:
        return 0.5 * (1.0 + math.erf((x - mean_kwh) / (sd * math.sqrt(2.0))))

    probs = []
    for p in range(hi_bucket + 1):
        lo_edge = (p - 0.5) / 100.0 * capacity_kwh
        hi_edge = (p + 0.5) / 100.0 * capacity_kwh
        mass = cdf(hi_edge) - cdf(lo_edge)
        if p == 0:
            mass += cdf(lo_edge)          # negative consumption folds to 0
        if p == hi_bucket:
            mass += 1.0 - cdf(hi_edge)    # upper tail folds into last bucket
        probs.append(mass)
    total = sum(probs)
    support = tuple((p, mass / total) for p, mass in enumerate(probs) if mass / total > 1e-12)
    # renormalize the residual of dropped buckets into the largest entry
    drift = 1.0 - sum(q for _, q in support)
    if support and drift:
        vals = list(support)
        k = max(range(len(vals)), key=lambda i: vals[i][1])
        vals[k] = (vals[k][0], vals[k][1] + drift)
        support = tuple(vals)
    return EnergyPMF(support)


def _round_pct(v: float) -> int:
    return int(math.floor(v + 0.5))


def default_travel_matrix(battery_kwh: float = 300.0) -> TravelMatrix:
    """Single line between terminals A and B; depot and station at A."""
    locs = ["terminal_a", "terminal_b", "depot_0", "station_0"]
    at_a = {"terminal_a", "depot_0", "station_0"}
    cross_min = _round_pct(LINE_KM / DEADHEAD_SPEED_KMH * 60.0)
    mean_rate = MEAN_RATE_LOC + MEAN_RATE_SCALE  # kWh/km, the rate distribution mean
    cross_pct = _round_pct(mean_rate * LINE_KM / battery_kwh * 100.0)
    minutes, energy = {}, {}
    for a in locs:
        for b in locs:
            same_side = (a in at_a) == (b in at_a)
            minutes[(a, b)] = 0 if same_side else cross_min
            energy[(a, b)] = 0 if same_side else cross_pct
    return TravelMatrix(minutes, energy)


def generate_instance(n_trips: int, seed: int, policy: SoCPolicy | None = None,
                      costs: CostParams | None = None, *, battery_kwh: float = 300.0,
                      depot_capacity: int | None = None,
                      chargers: int | None = None) -> Instance:
    """Random instance on the default line: ``n_trips`` spread evenly over
    05:00-24:00 in two directions, energy rates drawn per trip.

    Deterministic per (n_trips, seed).
    """
    if n_trips < 1:
        raise ValidationError("n_trips must be >= 1")
    policy = policy or SoCPolicy()
    rng = np.random.default_rng(seed)

    horizon = HORIZON_END_MIN - HORIZON_START_MIN
    n_fwd = (n_trips + 1) // 2
    n_bwd = n_trips - n_fwd
    usable = horizon - TRIP_MINUTES
    if n_fwd > 1 and usable / (n_fwd - 1) < MIN_HEADWAY_MIN:
        raise ValidationError(f"{n_trips} trips cannot fit the horizon with minimum headway")

    def spread(count: int, offset: float) -> list[int]:
        if count == 0:
            return []
        if count == 1:
            base = [HORIZON_START_MIN + usable // 2]
        else:
            step = usable / (count - 1)
            base = [HORIZON_START_MIN + round(k * step + offset * step / 2) for k in range(count)]
        jitter = rng.integers(-3, 4, size=count)
        out = []
        for b, j in zip(base, jitter):
            out.append(int(min(max(b + j, HORIZON_START_MIN), HORIZON_END_MIN - TRIP_MINUTES)))
        return out

    dep_fwd = spread(n_fwd, 0.0)
    dep_bwd = spread(n_bwd, 1.0)

    trips = []
    specs = [("terminal_a", "terminal_b", dep_fwd), ("terminal_b", "terminal_a", dep_bwd)]
    idx = 0
    for origin, dest, deps in specs:
        for d in deps:
            mean_rate = MEAN_RATE_LOC + rng.exponential(MEAN_RATE_SCALE)
            var_rate = rng.uniform(VAR_RATE_LO, VAR_RATE_HI)
            pmf = _discretize_normal_energy(mean_rate * LINE_KM, var_rate * LINE_KM ** 2,
                                            battery_kwh)
            trips.append(Trip(f"v{idx}", origin, dest, d, TRIP_MINUTES, pmf))
            idx += 1
    trips.sort(key=lambda t: (t.departure_min, t.id))

    if chargers is None:
        chargers = 1 if n_trips <= 100 else (2 if n_trips <= 200 else 3)
    depot = Depot("depot_0", "depot_0", depot_capacity if depot_capacity else n_trips)
    station = ChargingStation("station_0", "station_0", chargers)

    if costs is None:
        caps_plus = tuple(float(v) for v in rng.uniform(0.0, 0.1, size=n_trips))
        caps_minus = tuple(float(v) for v in rng.uniform(0.0, 0.1, size=n_trips))
        costs = CostParams(under_cover_cap=caps_plus, over_cover_cap=caps_minus)

    return Instance(tuple(trips), (depot,), (station,), default_travel_matrix(battery_kwh),
                    policy, costs, battery_kwh, seed=seed)


def worst_case_projection(instance: Instance) -> Instance:
    """Deterministic baseline: every trip PMF collapses to its worst case and
    the overuse probability budget drops to zero. Idempotent."""
    trips = tuple(
        replace(t, energy_pmf=EnergyPMF(((t.energy_pmf.max_consumption, 1.0),)))
        for t in instance.trips)
    policy = replace(instance.policy, epsilon=0.0)
    return replace(instance, trips=trips, policy=policy)


# --- file format -----------------------------------------------------------

def _instance_to_obj(inst: Instance) -> dict:
    return {
        "battery_kwh": inst.battery_kwh,
        "horizon_start_min": inst.horizon_start_min,
        "horizon_end_min": inst.horizon_end_min,
        "seed": inst.seed,
        "charger_breakpoints": [[t, r] for t, r in inst.charger_breakpoints],
        "policy": {
            "sigma_min": inst.policy.sigma_min,
            "sigma_low": inst.policy.sigma_low,
            "sigma_up": inst.policy.sigma_up,
            "sigma_max": inst.policy.sigma_max,
            "sigma_init": inst.policy.sigma_init,
            "epsilon": inst.policy.epsilon,
            "interval_min": inst.policy.interval_min,
            "min_layover_min": inst.policy.min_layover_min,
            "max_terminal_wait_min": inst.policy.max_terminal_wait_min,
        },
        "costs": {
            "vehicle": inst.costs.vehicle,
            "deadhead_per_min": inst.costs.deadhead_per_min,
            "waiting_per_min": inst.costs.waiting_per_min,
            "charging_activity": inst.costs.charging_activity,
            "under_cover_penalty": inst.costs.under_cover_penalty,
            "over_cover_penalty": inst.costs.over_cover_penalty,
            "under_cover_cap": list(inst.costs.under_cover_cap),
            "over_cover_cap": list(inst.costs.over_cover_cap),
        },
        "depots": [{"id": d.id, "location": d.location, "capacity": d.capacity}
                   for d in inst.depots],
        "stations": [{"id": s.id, "location": s.location, "chargers": s.chargers}
                     for s in inst.stations],
        "travel_minutes": {f"{a}|{b}": t for (a, b), t in sorted(inst.travel.minutes.items())},
        "travel_energy_pct": {f"{a}|{b}": e for (a, b), e in sorted(inst.travel.energy_pct.items())},
        "trips": [{
            "id": t.id, "origin": t.origin, "destination": t.destination,
            "departure_min": t.departure_min, "travel_min": t.travel_min,
            "energy_pmf": [[v, p] for v, p in t.energy_pmf.sorted_support()],
        } for t in inst.trips],
    }


_POLICY_FIELDS = ("sigma_min", "sigma_low", "sigma_up", "sigma_max", "sigma_init",
                  "epsilon", "interval_min", "min_layover_min", "max_terminal_wait_min")
_COST_FIELDS = ("vehicle", "deadhead_per_min", "waiting_per_min", "charging_activity",
                "under_cover_penalty", "over_cover_penalty", "under_cover_cap", "over_cover_cap")


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ParseError(f"missing field '{key}' in {where}")
    return obj[key]


def _instance_from_obj(obj: dict) -> Instance:
    pol_obj = _require(obj, "policy", "instance")
    policy = SoCPolicy(**{k: _require(pol_obj, k, "policy") for k in _POLICY_FIELDS})
    cost_obj = _require(obj, "costs", "instance")
    costs_kw = {k: _require(cost_obj, k, "costs") for k in _COST_FIELDS}
    costs_kw["under_cover_cap"] = tuple(costs_kw["under_cover_cap"])
    costs_kw["over_cover_cap"] = tuple(costs_kw["over_cover_cap"])
    costs = CostParams(**costs_kw)

    trips = []
    for i, t in enumerate(_require(obj, "trips", "instance")):
        where = f"trips[{i}]"
        pmf = EnergyPMF(tuple((int(v), float(p)) for v, p in _require(t, "energy_pmf", where)))
        trips.append(Trip(_require(t, "id", where), _require(t, "origin", where),
                          _require(t, "destination", where),
                          int(_require(t, "departure_min", where)),
                          int(_require(t, "travel_min", where)), pmf))
    depots = tuple(Depot(_require(d, "id", "depots"), _require(d, "location", "depots"),
                         int(_require(d, "capacity", "depots")))
                   for d in _require(obj, "depots", "instance"))
    stations = tuple(ChargingStation(_require(s, "id", "stations"),
                                     _require(s, "location", "stations"),
                                     int(_require(s, "chargers", "stations")))
                     for s in _require(obj, "stations", "instance"))

    def unpack(d: dict) -> dict:
        out = {}
        for k, v in d.items():
            a, _, b = k.partition("|")
            out[(a, b)] = int(v)
        return out

    travel = TravelMatrix(unpack(_require(obj, "travel_minutes", "instance")),
                          unpack(_require(obj, "travel_energy_pct", "instance")))
    return Instance(tuple(trips), depots, stations, travel, policy, costs,
                    float(_require(obj, "battery_kwh", "instance")),
                    int(_require(obj, "horizon_start_min", "instance")),
                    int(_require(obj, "horizon_end_min", "instance")),
                    tuple((int(t), float(r)) for t, r in _require(obj, "charger_breakpoints", "instance")),
                    obj.get("seed"))


def write_instance(instance: Instance, path) -> None:
    with open(path, "w") as fh:
        json.dump(_instance_to_obj(instance), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_instance(path) -> Instance:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ParseError("instance file must contain a JSON object")
    return _instance_from_obj(obj)

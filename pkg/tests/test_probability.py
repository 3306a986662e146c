import numpy as np
import pytest

from evsp.instances import EnergyPMF, SoCPolicy, generate_instance
from evsp.network import CHARGE, TRIP, WAIT, build_graph
from evsp.probability import (SoCDistribution, SoCModel, init_distribution,
                              propagate, schedule_probability)

from conftest import brute_force_path_probability, make_tiny_instance


def model_for(epsilon=0.1, **kw) -> SoCModel:
    return SoCModel(make_tiny_instance(3, seed=1, epsilon=epsilon, **kw))


def dist_with_point_mass(model, soc) -> SoCDistribution:
    cdf = np.zeros(model.width)
    cdf[soc - model.low:] = 1.0
    return SoCDistribution(cdf, model.low, model.up)


class TestInit:
    def test_point_mass_at_init(self):
        model = model_for()
        d = init_distribution(model)
        assert d.cdf[-1] == 1.0
        assert d.cdf[79 - model.low] == 0.0
        assert d.survival == 1.0

    def test_init_at_lower_bound(self):
        inst = make_tiny_instance(3, seed=1, sigma_low=20)
        from dataclasses import replace
        pol = replace(inst.policy, sigma_up=20, sigma_init=20, sigma_low=20)
        model = SoCModel(replace(inst, trips=(), policy=pol))
        d = init_distribution(model)
        assert d.cdf[0] == 1.0 and d.survival == 1.0


class TestPropagate:
    def test_two_outcome_trip_no_loss(self):
        # start 80, consume 30 or 45 with equal odds, floor 20
        inst = make_tiny_instance(3, seed=1)
        trip = inst.trips[0]
        pmf = EnergyPMF(((30, 0.5), (45, 0.5)))
        from dataclasses import replace
        inst = replace(inst, trips=(replace(trip, energy_pmf=pmf),) + inst.trips[1:])
        model = SoCModel(inst)
        d = propagate(model, dist_with_point_mass(model, 80), TRIP, (0, 0))
        pmf_out = d.pmf()
        assert abs(pmf_out[50 - model.low] - 0.5) < 1e-12
        assert abs(pmf_out[35 - model.low] - 0.5) < 1e-12
        assert abs(d.survival - 1.0) < 1e-12

    def test_overuse_mass_dropped_not_renormalized(self):
        inst = make_tiny_instance(3, seed=1)
        from dataclasses import replace
        pmf = EnergyPMF(((30, 0.5), (65, 0.5)))
        inst = replace(inst, trips=(replace(inst.trips[0], energy_pmf=pmf),)
                       + inst.trips[1:])
        model = SoCModel(inst)
        d = propagate(model, dist_with_point_mass(model, 80), TRIP, (0, 0))
        assert abs(d.pmf()[50 - model.low] - 0.5) < 1e-12
        assert abs(d.survival - 0.5) < 1e-12

    def test_zero_shift_is_identity(self):
        model = model_for()
        d0 = dist_with_point_mass(model, 55)
        d1 = propagate(model, d0, WAIT, 0)
        assert np.array_equal(d0.cdf, d1.cdf)

    def test_shift_drops_survivors_below_floor(self):
        model = model_for()
        d = propagate(model, dist_with_point_mass(model, 22), WAIT, 5)
        assert d.survival == 0.0

    def test_charge_step_caps_and_conserves(self):
        model = model_for()
        d0 = dist_with_point_mass(model, 40)
        d1 = propagate(model, d0, CHARGE, 2)  # 30 min of fast charge
        assert abs(d1.survival - 1.0) < 1e-12
        assert d1.pmf()[-1] == 1.0  # capped at sigma_up

    def test_charge_conserves_arbitrary_mass(self):
        model = model_for()
        cdf = np.linspace(0.1, 0.7, model.width)
        d0 = SoCDistribution(cdf, model.low, model.up)
        for m in (1, 2, 3):
            d1 = propagate(model, d0, CHARGE, m)
            assert abs(d1.survival - d0.survival) < 1e-12

    def test_support_exceeding_range_rejected(self):
        inst = make_tiny_instance(3, seed=1)
        model = SoCModel(inst)
        with pytest.raises(ValueError):
            propagate(model, init_distribution(model), TRIP, (0, 70))


class TestScheduleProbability:
    def _one_path(self, graph, rng):
        """Random feasible-looking source->sink walk (structure only)."""
        path = [graph.source]
        node = graph.source
        while node != graph.sink:
            arcs = graph.out_arcs[node]
            if not arcs:
                return None
            arc = graph.arcs[arcs[int(rng.integers(len(arcs)))]]
            path.append(arc.head)
            node = arc.head
        return path

    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(0)
        checked = 0
        for seed in range(30):
            inst = make_tiny_instance(4, seed=seed, epsilon=0.5)
            graph = build_graph(inst, 0)
            model = SoCModel(inst)
            for _ in range(8):
                path = self._one_path(graph, rng)
                if path is None or len(path) < 3:
                    continue
                p = schedule_probability(graph, path, model)
                q = brute_force_path_probability(graph, path)
                assert abs(p - q) < 1e-12
                checked += 1
        assert checked >= 100

    def test_deterministic_schedule_survives(self):
        inst = make_tiny_instance(1, seed=3, max_support=1)
        graph = build_graph(inst, 0)
        model = SoCModel(inst)
        trip_node = next(n.index for n in graph.nodes if n.kind == TRIP)
        p = schedule_probability(graph, [graph.source, trip_node, graph.sink], model)
        assert p == 1.0

    def test_survival_never_increases_along_path(self):
        rng = np.random.default_rng(4)
        inst = make_tiny_instance(5, seed=8, epsilon=0.9)
        graph = build_graph(inst, 0)
        model = SoCModel(inst)
        for _ in range(20):
            path = self._one_path(graph, rng)
            if path is None:
                continue
            last = 1.0
            for k in range(2, len(path) + 1):
                p = schedule_probability(graph, path[:k], model)
                assert p <= last + 1e-12
                last = p

import json

import numpy as np
import pytest

from evsp.instances import (EnergyPMF, LINE_KM, ParseError, SoCPolicy, Trip,
                            ValidationError, generate_instance, read_instance,
                            worst_case_projection, write_instance)


class TestGenerator:
    def test_i1_scale_shape(self):
        inst = generate_instance(60, seed=1)
        assert len(inst.trips) == 60
        assert len(inst.depots) == 1
        assert len(inst.stations) == 1
        assert inst.stations[0].chargers == 1

    def test_deterministic_per_seed(self, tmp_path):
        a, b = generate_instance(25, seed=9), generate_instance(25, seed=9)
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        write_instance(a, pa)
        write_instance(b, pb)
        assert pa.read_bytes() == pb.read_bytes()
        assert generate_instance(25, seed=10).content_hash() != a.content_hash()

    def test_pmfs_normalized(self):
        inst = generate_instance(40, seed=3)
        for t in inst.trips:
            assert abs(sum(p for _, p in t.energy_pmf.support) - 1.0) < 1e-9

    def test_trips_fit_horizon_both_directions(self):
        inst = generate_instance(31, seed=5)
        dirs = {(t.origin, t.destination) for t in inst.trips}
        assert len(dirs) == 2
        for t in inst.trips:
            assert inst.horizon_start_min <= t.departure_min
            assert t.arrival_min <= inst.horizon_end_min

    def test_mean_energy_rate_recovers_calibration(self):
        # rates are Exp(1.57, 0.26), so the population mean is 1.83 kWh/km
        rates = []
        for seed in range(170):
            inst = generate_instance(60, seed=seed)
            for t in inst.trips:
                kwh = t.energy_pmf.mean / 100.0 * inst.battery_kwh
                rates.append(kwh / LINE_KM)
        assert len(rates) >= 10_000
        assert abs(np.mean(rates) - 1.83) / 1.83 < 0.02

    def test_too_many_trips_rejected(self):
        with pytest.raises(ValidationError):
            generate_instance(4000, seed=0)

    def test_support_cap_enforced(self):
        policy = SoCPolicy(sigma_min=70, sigma_low=72, sigma_up=80, sigma_init=80)
        with pytest.raises(ValidationError):
            generate_instance(20, seed=0, policy=policy)


class TestRoundTrip:
    def test_write_read_identity(self, tmp_path):
        inst = generate_instance(15, seed=2)
        path = tmp_path / "i.json"
        write_instance(inst, path)
        assert read_instance(path) == inst

    def test_bad_probability_sum_is_validation_error(self, tmp_path):
        inst = generate_instance(5, seed=2)
        path = tmp_path / "i.json"
        write_instance(inst, path)
        obj = json.loads(path.read_text())
        obj["trips"][0]["energy_pmf"] = [[5, 0.5], [7, 0.4]]
        path.write_text(json.dumps(obj))
        with pytest.raises(ValidationError):
            read_instance(path)

    def test_missing_sigma_low_names_field(self, tmp_path):
        inst = generate_instance(5, seed=2)
        path = tmp_path / "i.json"
        write_instance(inst, path)
        obj = json.loads(path.read_text())
        del obj["policy"]["sigma_low"]
        path.write_text(json.dumps(obj))
        with pytest.raises(ParseError, match="sigma_low"):
            read_instance(path)

    def test_garbage_file_is_parse_error(self, tmp_path):
        path = tmp_path / "i.json"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            read_instance(path)


class TestWorstCaseProjection:
    def test_point_mass_at_max(self):
        inst = generate_instance(10, seed=4)
        proj = worst_case_projection(inst)
        for t, p in zip(inst.trips, proj.trips):
            assert p.energy_pmf.support == ((t.energy_pmf.max_consumption, 1.0),)
        assert proj.policy.epsilon == 0.0

    def test_idempotent(self):
        inst = generate_instance(10, seed=4)
        once = worst_case_projection(inst)
        assert worst_case_projection(once) == once

    def test_simple_pmf_example(self):
        from dataclasses import replace
        pmf = EnergyPMF(((30, 0.5), (45, 0.5)))
        inst = generate_instance(4, seed=1)
        trip = Trip("x", "terminal_a", "terminal_b", 400, 30, pmf)
        inst2 = replace(inst, trips=(trip,) + inst.trips[1:])
        proj = worst_case_projection(inst2)
        assert proj.trips[0].energy_pmf.support == ((45, 1.0),)


class TestInvariants:
    def test_policy_ordering_enforced(self):
        with pytest.raises(ValidationError):
            SoCPolicy(sigma_min=30, sigma_low=20, sigma_up=80, sigma_init=80)

    def test_init_must_equal_up(self):
        with pytest.raises(ValidationError):
            SoCPolicy(sigma_low=20, sigma_up=80, sigma_init=70)

    def test_pmf_distinct_support(self):
        with pytest.raises(ValidationError):
            EnergyPMF(((10, 0.5), (10, 0.5)))

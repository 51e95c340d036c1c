import math

import pytest

from mtesim import (
    ALWAYS_ARM,
    SimConfig,
    exp_collision_rate,
    exp_detection_rate,
    exp_vulnerable_fraction,
    uniform_sizes,
    wilson_95_ci,
)


class TestWilson:
    def test_against_hand_computed_value(self):
        # k=50, n=100, z=1.96: center = (0.5 + z^2/200) / (1 + z^2/100)
        z = 1.96
        lo, hi = wilson_95_ci(50, 100)
        center = (0.5 + z * z / 200) / (1 + z * z / 100)
        half = (z / (1 + z * z / 100)) * math.sqrt(0.25 / 100 + z * z / 40000)
        assert lo == pytest.approx(center - half, abs=1e-12)
        assert hi == pytest.approx(center + half, abs=1e-12)

    def test_degenerate_counts_stay_in_unit_interval(self):
        lo, hi = wilson_95_ci(0, 10)
        assert lo == 0.0 and 0 < hi < 0.5
        lo, hi = wilson_95_ci(10, 10)
        assert 0.5 < lo < 1 and hi == 1.0

    def test_interval_contains_point_estimate(self):
        for k, n in [(1, 7), (250, 1000), (999, 1000)]:
            lo, hi = wilson_95_ci(k, n)
            assert lo <= k / n <= hi

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            wilson_95_ci(1, 0)
        with pytest.raises(ValueError):
            wilson_95_ci(5, 3)


class TestCollision:
    def test_fifteen_tag_space(self):
        r = exp_collision_rate(100_000, seed=1)
        assert r.contains(1 / 15)
        assert not r.contains(1 / 16)  # the reserved zero tag is measurable

    def test_sixteen_tag_space_override(self):
        r = exp_collision_rate(20_000, seed=2, include_zero=True)
        assert r.contains(1 / 16)

    def test_forced_collision(self):
        r = exp_collision_rate(1_000, seed=3, exclude=frozenset(range(1, 15)))
        assert r.rate == 1.0

    def test_reproducible(self):
        assert exp_collision_rate(500, seed=4).to_json() == \
            exp_collision_rate(500, seed=4).to_json()


class TestVulnerableFraction:
    def test_all_multiples_of_16(self):
        assert exp_vulnerable_fraction([(16, 1), (32, 1), (64, 1)], 500, 1) == 0.0

    def test_single_short_size(self):
        assert exp_vulnerable_fraction([(40, 1)], 500, 1) == 1.0

    def test_uniform_1_256(self):
        # 16 of 256 residues are multiples of 16: expect 15/16
        frac = exp_vulnerable_fraction(uniform_sizes(1, 256), 50_000, 2)
        lo, hi = wilson_95_ci(round(frac * 50_000), 50_000)
        assert lo <= 15 / 16 <= hi

    def test_rejects_empty_draw(self):
        with pytest.raises(ValueError):
            exp_vulnerable_fraction([(40, 1)], 0, 1)


class TestDetectionRate:
    BASE = SimConfig(seed=0, alloc_threshold=ALWAYS_ARM)

    def test_intra_always_armed_is_total(self):
        r = exp_detection_rate("intra", self.BASE, 100, seed=51)
        assert r.rate == 1.0

    def test_intra_without_tripwires_is_blind(self):
        from dataclasses import replace
        r = exp_detection_rate("intra", replace(self.BASE, tripwires=False), 100, seed=52)
        assert r.rate == 0.0

    def test_result_reproducible(self):
        a = exp_detection_rate("uaf", self.BASE, 60, seed=53)
        b = exp_detection_rate("uaf", self.BASE, 60, seed=53)
        assert a.to_json() == b.to_json()

    def test_result_json_fields(self):
        r = exp_detection_rate("double_free", self.BASE, 30, seed=54)
        d = r.to_json_dict()
        assert list(d) == ["name", "trials", "detected", "rate", "wilson_95_ci",
                           "config_echo"]
        assert d["detected"] == 30

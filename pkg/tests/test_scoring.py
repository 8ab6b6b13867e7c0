"""Unit tests for score smoothing, the units-place edge case, and the sampling estimator."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from fleur.backends import DecodeParams, GenerationRequest, MockBackend, ScriptedGeneration
from fleur.errors import NoScoreError
from fleur.extraction import parse_raw_score
from fleur.scoring import (
    DigitDistribution,
    SamplingConfig,
    ScoreMode,
    resolve_units_edge,
    sampled_score,
    smooth_score,
)

from conftest import score_result

# The worked-example digit probabilities at the two decimal places.
PLACE1 = (
    0.003021240234375, 0.00128936767578125, 0.0018758773803710938, 0.00353240966796875,
    0.00827789306640625, 0.03350830078125, 0.07672119140625, 0.2117919921875,
    0.383544921875, 0.2763671875,
)
PLACE2 = (
    0.0450439453125, 0.035614013671875, 0.050628662109375, 0.044342041015625,
    0.0400390625, 0.3515625, 0.048309326171875, 0.041961669921875,
    0.04681396484375, 0.035888671875,
)


def exact_smoothed(place1, place2) -> Fraction:
    """Independent oracle: exact rational evaluation of the smoothing formula."""
    e1 = sum(Fraction(i) * Fraction(p) for i, p in enumerate(place1))
    e2 = sum(Fraction(i) * Fraction(p) for i, p in enumerate(place2))
    return Fraction(1, 10) * e1 + Fraction(1, 100) * e2


def random_distribution(rng: np.random.Generator, mass: float | None = None) -> DigitDistribution:
    weights = rng.random(10)
    total_mass = rng.uniform(0.3, 1.0) if mass is None else mass
    return DigitDistribution(tuple(float(p) for p in weights / weights.sum() * total_mass))


class TestSmoothScore:
    def test_worked_example_exact_arithmetic(self):
        score = smooth_score(DigitDistribution(PLACE1), DigitDistribution(PLACE2))
        expected = exact_smoothed(PLACE1, PLACE2)
        assert abs(score.value - float(expected)) <= 1e-12
        assert score.value == pytest.approx(0.8061722946166992, abs=1e-12)
        assert score.mode is ScoreMode.SMOOTHED

    def test_worked_example_place_mass(self):
        score = smooth_score(DigitDistribution(PLACE1), DigitDistribution(PLACE2))
        assert score.place_mass[0] == pytest.approx(sum(PLACE1), abs=1e-12)
        assert score.place_mass[1] == pytest.approx(0.740203857421875, abs=1e-9)

    def test_point_mass_equals_raw_score(self):
        for d1 in range(10):
            for d2 in range(10):
                score = smooth_score(DigitDistribution.point_mass(d1), DigitDistribution.point_mass(d2))
                assert score.value == 0.1 * d1 + 0.01 * d2
        score = smooth_score(DigitDistribution.point_mass(8), DigitDistribution.point_mass(5))
        assert score.value == pytest.approx(0.85, abs=1e-12)

    def test_uniform_distributions(self):
        uniform = DigitDistribution((0.1,) * 10)
        assert smooth_score(uniform, uniform).value == pytest.approx(0.495, abs=1e-12)

    def test_linearity_against_exact_oracle(self):
        rng = np.random.default_rng(1234)
        for _ in range(100):
            p1 = random_distribution(rng)
            p2 = random_distribution(rng)
            expected = exact_smoothed(p1.probs, p2.probs)
            assert abs(smooth_score(p1, p2).value - float(expected)) <= 1e-12

    def test_monotone_under_upward_mass_shift(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            dist = random_distribution(rng)
            source = int(rng.integers(0, 9))
            target = int(rng.integers(source + 1, 10))
            delta = dist.probs[source] * float(rng.uniform(0.1, 1.0))
            if delta <= 1e-12:
                continue
            probs = list(dist.probs)
            probs[source] -= delta
            probs[target] += delta
            shifted = DigitDistribution(tuple(probs))
            other = random_distribution(rng)
            assert smooth_score(shifted, other).value > smooth_score(dist, other).value
            assert smooth_score(other, shifted).value > smooth_score(other, dist).value

    def test_bounds(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            p1 = random_distribution(rng)
            p2 = random_distribution(rng)
            value = smooth_score(p1, p2).value
            assert 0.0 <= value <= 0.99 * (p1.mass + p2.mass) + 1e-12
        full1 = random_distribution(rng, mass=1.0)
        full2 = random_distribution(rng, mass=1.0)
        assert 0.0 <= smooth_score(full1, full2).value <= 0.99 + 1e-12

    def test_deterministic(self):
        p1 = DigitDistribution(PLACE1)
        p2 = DigitDistribution(PLACE2)
        values = {smooth_score(p1, p2).value for _ in range(10)}
        assert len(values) == 1


class TestDigitDistributionValidation:
    def test_wrong_length(self):
        with pytest.raises(ValueError, match="10 digit"):
            DigitDistribution((0.1, 0.2))

    def test_negative_entry(self):
        with pytest.raises(ValueError, match="outside"):
            DigitDistribution((-0.1,) + (0.1,) * 9)

    def test_mass_above_one(self):
        with pytest.raises(ValueError, match="sum"):
            DigitDistribution((0.2,) * 10)

    def test_mass_slack_tolerated(self):
        DigitDistribution((0.1,) * 9 + (0.1 + 5e-10,))


class TestUnitsEdge:
    def test_certain_one(self):
        dist = DigitDistribution.point_mass(1)
        assert resolve_units_edge(dist).value == 1.0

    def test_certain_zero(self):
        dist = DigitDistribution.point_mass(0)
        assert resolve_units_edge(dist).value == 0.9

    def test_mixed(self):
        probs = [0.0] * 10
        probs[0], probs[1] = 0.4, 0.6
        assert resolve_units_edge(DigitDistribution(tuple(probs))).value == pytest.approx(0.96, abs=1e-12)

    def test_matches_direct_arithmetic(self):
        rng = np.random.default_rng(4321)
        for _ in range(1000):
            dist = random_distribution(rng)
            expected = 0.9 * dist.probs[0] + 1.0 * dist.probs[1]
            assert abs(resolve_units_edge(dist).value - expected) <= 1e-12
            assert 0.0 <= resolve_units_edge(dist).value <= 1.0


class TestSampledScore:
    def test_single_sample(self):
        assert sampled_score([0.8]).value == 0.8

    def test_mean(self):
        score = sampled_score([0.8, 0.6])
        assert score.value == pytest.approx(0.7, abs=1e-12)
        assert score.mode is ScoreMode.SAMPLED

    def test_empty_errors(self):
        with pytest.raises(NoScoreError):
            sampled_score([])

    def test_mock_backend_seed_schedule(self, image):
        # Four stochastic calls against a seeded mock; the expected value is the
        # hand-average of whatever the scripted variants produce for this seed.
        variants = tuple(score_result(t) for t in ("0.7", "0.8", "0.9"))
        script = [ScriptedGeneration(result=score_result("0.8"), variants=variants)] * 4
        config = SamplingConfig(n_samples=4, temperature=0.2, nucleus_mass=0.7)
        decode = DecodeParams(temperature=config.temperature, nucleus_mass=config.nucleus_mass)

        def collect(seed):
            backend = MockBackend(list(script), seed=seed)
            request = GenerationRequest(image=image, turns=(("user", "rate"),), decode=decode)
            return [parse_raw_score(backend.generate(request).text) for _ in range(4)]

        observed = collect(seed=7)
        assert sampled_score(observed).value == pytest.approx(sum(observed) / 4, abs=1e-12)
        assert collect(seed=7) == observed  # reproducible variant sequence


class TestSamplingConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SamplingConfig(n_samples=0)
        with pytest.raises(ValueError):
            SamplingConfig(n_samples=1, temperature=0.0)
        with pytest.raises(ValueError):
            SamplingConfig(n_samples=1, nucleus_mass=1.5)

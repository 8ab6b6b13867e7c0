"""Evaluator pipeline: prompt -> backend -> extraction -> smoothing, with cache and modes."""

from __future__ import annotations

import pytest

from fleur.backends import FinishReason, MockBackend, ScriptedGeneration
from fleur.cache import CacheStore
from fleur.errors import PromptError, TruncationError
from fleur.evaluator import Evaluator, MetricConfig, MetricMode
from fleur.prompts import PromptOrdering
from fleur.scoring import SamplingConfig, ScoreMode

from conftest import dist_token, point_token, result_from_tokens, score_result

PLACE1 = {"8": 0.6, "7": 0.25, "9": 0.1}
PLACE2 = {"5": 0.5, "4": 0.2, "6": 0.2}


def worked_entry() -> ScriptedGeneration:
    return ScriptedGeneration(
        result=result_from_tokens(
            [point_token("0"), point_token("."), dist_token("8", PLACE1), dist_token("5", PLACE2)]
        )
    )


class TestGreedyScore:
    def test_smoothed_value(self, image):
        evaluator = Evaluator(MockBackend([worked_entry()]), "m")
        outcome = evaluator.score(image, "A dog runs.")
        e1 = sum(int(d) * p for d, p in PLACE1.items())
        e2 = sum(int(d) * p for d, p in PLACE2.items())
        assert outcome.score.value == pytest.approx(0.1 * e1 + 0.01 * e2, rel=1e-9)
        assert outcome.score.mode is ScoreMode.SMOOTHED
        assert outcome.raw_text == "0.85"
        assert not outcome.one_decimal

    def test_units_edge_path(self, image):
        units = {"1": 0.7, "0": 0.2}
        entry = ScriptedGeneration(
            result=result_from_tokens([dist_token("1", units), point_token("."), point_token("0")])
        )
        evaluator = Evaluator(MockBackend([entry]), "m")
        outcome = evaluator.score(image, "A dog runs.")
        assert outcome.score.value == pytest.approx(0.9 * 0.2 + 1.0 * 0.7, rel=1e-9)

    def test_one_decimal_flagged(self, image):
        evaluator = Evaluator(MockBackend([ScriptedGeneration(result=score_result("0.7"))]), "m")
        outcome = evaluator.score(image, "cap")
        assert outcome.one_decimal
        assert outcome.score.value == pytest.approx(0.7, abs=1e-12)

    def test_truncation_error_when_no_score_emitted(self, image):
        entry = ScriptedGeneration(
            result=result_from_tokens([point_token("The"), point_token("image")],
                                      finish=FinishReason.LENGTH)
        )
        evaluator = Evaluator(MockBackend([entry]), "m")
        with pytest.raises(TruncationError):
            evaluator.score(image, "cap")

    def test_score_followed_by_length_cut_still_counts(self, image):
        tokens = [point_token(t) for t in "0.85 and the image sho"]
        entry = ScriptedGeneration(result=result_from_tokens(tokens, finish=FinishReason.LENGTH))
        evaluator = Evaluator(MockBackend([entry]), "m")
        outcome = evaluator.score(image, "cap")
        assert outcome.score.value == pytest.approx(0.85, abs=1e-12)

    def test_raw_mode(self, image):
        entry = ScriptedGeneration(result=score_result("Score: 0.75"))
        evaluator = Evaluator(MockBackend([entry]), "m")
        outcome = evaluator.score(image, "cap", config=MetricConfig(mode=MetricMode.RAW))
        assert outcome.score.value == 0.75
        assert outcome.score.mode is ScoreMode.RAW


class TestModeIsolation:
    def test_fleur_never_reads_references(self, image):
        evaluator = Evaluator(MockBackend([worked_entry()]), "m")
        outcome = evaluator.score(image, "A dog runs.", references=["A brown dog."])
        assert "A brown dog." not in outcome.bundle.text
        assert "Reference Captions" not in outcome.bundle.text

    def test_ref_mode_requires_references(self, image):
        evaluator = Evaluator(MockBackend([worked_entry()]), "m")
        with pytest.raises(PromptError, match="reference"):
            evaluator.score(image, "A dog runs.", config=MetricConfig(mode=MetricMode.REF))

    def test_ref_mode_embeds_references(self, image):
        evaluator = Evaluator(MockBackend([worked_entry()]), "m")
        outcome = evaluator.score(
            image, "A dog runs.", references=["A brown dog."], config=MetricConfig(mode=MetricMode.REF)
        )
        assert '"A brown dog."' in outcome.bundle.text


class TestCacheDiscipline:
    def test_greedy_cached(self, image, tmp_path):
        backend = MockBackend([worked_entry()])
        evaluator = Evaluator(backend, "m", cache=CacheStore(tmp_path))
        first = evaluator.score(image, "A dog runs.")
        second = evaluator.score(image, "A dog runs.")  # script has one entry: must hit cache
        assert first.score == second.score
        assert backend.served == 1

    def test_criteria_change_misses_cache(self, image, tmp_path):
        backend = MockBackend([worked_entry(), worked_entry()])
        evaluator = Evaluator(backend, "m", cache=CacheStore(tmp_path))
        evaluator.score(image, "cap", config=MetricConfig(criteria=frozenset("a")))
        evaluator.score(image, "cap", config=MetricConfig(criteria=frozenset("ab")))
        assert backend.served == 2


class TestSampledMode:
    def config(self, n=4) -> MetricConfig:
        return MetricConfig(
            mode=MetricMode.SAMPLED,
            sampling=SamplingConfig(n_samples=n, temperature=0.2, nucleus_mass=0.7),
        )

    def test_average_of_scripted_samples(self, image):
        entries = [ScriptedGeneration(result=score_result(t)) for t in ("0.7", "0.8", "0.7", "0.9")]
        evaluator = Evaluator(MockBackend(entries), "m", seed=7)
        outcome = evaluator.score(image, "cap", config=self.config())
        assert outcome.score.value == pytest.approx(0.775, abs=1e-12)
        assert outcome.score.mode is ScoreMode.SAMPLED

    def test_samples_cached_per_index(self, image, tmp_path):
        entries = [ScriptedGeneration(result=score_result(t)) for t in ("0.7", "0.8", "0.7", "0.9")]
        backend = MockBackend(entries)
        evaluator = Evaluator(backend, "m", cache=CacheStore(tmp_path), seed=7)
        first = evaluator.score(image, "cap", config=self.config())
        second = evaluator.score(image, "cap", config=self.config())
        assert backend.served == 4
        assert first.score == second.score


class TestExplain:
    def test_two_turn_flow(self, image):
        explanation = "The caption matches the image."
        entries = [
            worked_entry(),
            ScriptedGeneration(result=score_result(explanation)),
        ]
        evaluator = Evaluator(MockBackend(entries), "m")
        outcome, text = evaluator.explain(image, "A dog runs.")
        assert text == explanation
        assert outcome.raw_text == "0.85"

    def test_explanation_request_carries_conversation(self, image):
        captured = []

        class SpyBackend(MockBackend):
            def generate(self, request):
                captured.append(request)
                return super().generate(request)

        entries = [worked_entry(), ScriptedGeneration(result=score_result("Because."))]
        evaluator = Evaluator(SpyBackend(entries), "m")
        evaluator.explain(image, "A dog runs.")
        follow_up = captured[-1]
        assert follow_up.turns[-2] == ("assistant", "0.85")
        assert follow_up.turns[-1] == ("user", "Why? Tell me the reason.")

    def test_explanation_first_uses_single_generation(self, image):
        text = "Good match overall so 0.8"
        entry = ScriptedGeneration(result=score_result(text))
        evaluator = Evaluator(MockBackend([entry]), "m")
        config = MetricConfig(ordering=PromptOrdering.EXPLANATION_THEN_SCORE)
        outcome, explanation = evaluator.explain(image, "A dog runs.", config=config)
        assert outcome.score.value == pytest.approx(0.8, abs=1e-12)
        assert explanation == text

"""Service endpoints over the in-process app: happy paths, error mapping, golden requests."""

from __future__ import annotations

import base64
import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from fleur.backends import (
    DecodeParams,
    GenerationRequest,
    ImagePayload,
    MockBackend,
    ScriptedGeneration,
    request_from_wire,
    request_to_wire,
)
from fleur.prompts import build_criteria, render_explanation_turn, render_score_prompt
from fleur.service.app import ServiceSettings, create_app, parse_criteria

from conftest import (
    judged_dataset_lines,
    judged_script,
    score_result,
    scripted_scores,
)

GOLDEN_DIR = Path(__file__).parent / "golden" / "requests"

IMAGE_B64 = base64.b64encode(b"\x89PNG fake bytes for tests").decode("ascii")


def make_client(script, cache_dir=None) -> TestClient:
    settings = ServiceSettings(
        endpoint="mock:unused", model_id="mock-lmm", cache_dir=cache_dir, seed=0
    )
    app = create_app(settings, backend=MockBackend(script))
    return TestClient(app)


def score_payload(**overrides) -> dict:
    payload = {"image_b64": IMAGE_B64, "media_type": "image/png", "caption": "A dog runs."}
    payload.update(overrides)
    return payload


class TestHealth:
    def test_healthz(self):
        client = make_client(scripted_scores(["0.85"]))
        body = client.get("/healthz").json()
        assert body["status"] == "ok"
        assert body["model_id"] == "mock-lmm"
        assert body["template_version"] == "v1"


class TestScoreEndpoint:
    def test_smoothed_score(self):
        client = make_client(scripted_scores(["0.85"]))
        response = client.post("/v1/score", json=score_payload())
        assert response.status_code == 200
        body = response.json()
        assert body["value"] == pytest.approx(0.85, abs=1e-12)
        assert body["mode"] == "smoothed"
        assert body["raw_text"] == "0.85"
        assert body["place_mass"] == [pytest.approx(1.0), pytest.approx(1.0)]

    def test_empty_caption_maps_to_400(self):
        client = make_client(scripted_scores(["0.85"]))
        response = client.post("/v1/score", json=score_payload(caption="   "))
        assert response.status_code == 400
        assert response.json()["error"] == "PromptError"

    def test_bad_base64_maps_to_400(self):
        client = make_client(scripted_scores(["0.85"]))
        response = client.post("/v1/score", json=score_payload(image_b64="%%%"))
        assert response.status_code == 400

    def test_exhausted_backend_maps_to_502(self):
        client = make_client(scripted_scores(["0.85"]))
        assert client.post("/v1/score", json=score_payload()).status_code == 200
        response = client.post("/v1/score", json=score_payload())
        assert response.status_code == 502
        assert response.json()["error"] == "ScriptExhaustedError"

    def test_unscoreable_output_maps_to_422(self):
        client = make_client(scripted_scores(["no idea"]))
        response = client.post("/v1/score", json=score_payload())
        assert response.status_code == 422
        assert response.json()["error"] == "NoScoreError"

    def test_ref_mode(self):
        client = make_client(scripted_scores(["0.85"]))
        response = client.post(
            "/v1/score", json=score_payload(mode="ref", references=["A dog.", "A brown dog."])
        )
        assert response.status_code == 200

    def test_sampled_mode(self):
        client = make_client(scripted_scores(["0.7", "0.8", "0.7", "0.9"]))
        response = client.post("/v1/score", json=score_payload(mode="sampled", n_samples=4))
        assert response.status_code == 200
        body = response.json()
        assert body["mode"] == "sampled"
        assert body["value"] == pytest.approx(0.775, abs=1e-12)


class TestExplainEndpoint:
    def test_score_then_explanation(self):
        script = [
            ScriptedGeneration(result=score_result("0.85")),
            ScriptedGeneration(result=score_result("Because it matches.")),
        ]
        client = make_client(script)
        response = client.post("/v1/explain", json=score_payload())
        assert response.status_code == 200
        body = response.json()
        assert body["score"]["value"] == pytest.approx(0.85, abs=1e-12)
        assert body["explanation"] == "Because it matches."


class TestBenchmarkEndpoint:
    def test_judged_run(self):
        client = make_client(judged_script())
        payload = {"dataset_text": "\n".join(judged_dataset_lines())}
        response = client.post("/v1/benchmark", json=payload)
        assert response.status_code == 200
        body = response.json()
        assert body["summary"]["statistic_values"]["tau_c"] == 1.0
        assert len(body["items"]) == 6
        assert "tau_c = 1.0000" in body["table"]

    def test_dataset_error_maps_to_400_with_line(self):
        client = make_client(judged_script())
        response = client.post("/v1/benchmark", json={"dataset_text": "{broken"})
        assert response.status_code == 400
        assert "line 1" in response.json()["detail"]

    def test_schema_mismatch(self):
        client = make_client(judged_script())
        payload = {"dataset_text": "\n".join(judged_dataset_lines()), "expect_schema": "foil"}
        response = client.post("/v1/benchmark", json=payload)
        assert response.status_code == 400


class TestAblateEndpoint:
    def test_one_report_per_subset(self):
        subsets = ["∅", "a", "ab", "ac", "abc"]
        client = make_client(judged_script() * 5)
        payload = {"dataset_text": "\n".join(judged_dataset_lines()), "subsets": subsets}
        response = client.post("/v1/ablate", json=payload)
        assert response.status_code == 200
        reports = response.json()["reports"]
        assert len(reports) == 5
        subsets_seen = [r["summary"]["criteria_subset"] for r in reports]
        assert subsets_seen == ["", "a", "ab", "ac", "abc"]
        anchor_sets = [[a for a, _ in r["summary"]["criteria"]] for r in reports]
        assert anchor_sets == [[], [0.0, 1.0], [0.0, 0.3, 1.0], [0.0, 0.7, 1.0], [0.0, 0.3, 0.7, 1.0]]
        assert all(r["summary"]["statistic_values"]["tau_c"] == 1.0 for r in reports)


class TestParseCriteria:
    @pytest.mark.parametrize("raw", ["", "none", "∅", "  "])
    def test_empty_forms(self, raw):
        assert parse_criteria(raw) == frozenset()

    def test_letters(self):
        assert parse_criteria("ba") == frozenset({"a", "b"})


class TestGoldenRequests:
    """The committed golden wire requests stay in sync with the serializer."""

    def build(self) -> dict[str, GenerationRequest]:
        image = ImagePayload(data=b"golden-image-bytes-v1", media_type="image/png")
        score_bundle = render_score_prompt("A dog runs.", build_criteria({"a"}))
        ref_bundle = render_score_prompt(
            "A dog runs.", build_criteria({"a"}), references=["A dog.", "A brown dog runs."]
        )
        explain_bundle = render_explanation_turn(score_bundle, "0.85")
        return {
            "score_greedy": GenerationRequest(
                image=image, turns=score_bundle.turns, decode=DecodeParams(max_new_tokens=32),
                model_id="llava-v1.5-13b",
            ),
            "score_ref": GenerationRequest(
                image=image, turns=ref_bundle.turns, decode=DecodeParams(max_new_tokens=32),
                model_id="llava-v1.5-13b",
            ),
            "score_sampled": GenerationRequest(
                image=image, turns=score_bundle.turns,
                decode=DecodeParams(temperature=0.2, nucleus_mass=0.7, max_new_tokens=32),
                model_id="llava-v1.5-13b", seed=7,
            ),
            "explanation_turn": GenerationRequest(
                image=image, turns=explain_bundle.turns, decode=DecodeParams(max_new_tokens=512),
                model_id="llava-v1.5-13b",
            ),
        }

    def test_goldens_match_serializer(self):
        for name, request in self.build().items():
            golden = json.loads((GOLDEN_DIR / f"{name}.json").read_text(encoding="utf-8"))
            assert request_to_wire(request) == golden, name

    def test_goldens_parse_back(self):
        for name, request in self.build().items():
            golden = json.loads((GOLDEN_DIR / f"{name}.json").read_text(encoding="utf-8"))
            assert request_from_wire(golden) == request, name

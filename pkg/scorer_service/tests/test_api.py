from __future__ import annotations

import base64
import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from scorer_service.app import ModelHolder, create_app
from scorer_service.model import LITE_MODEL_NAME

FIXTURES = Path(__file__).parent / "fixtures"
IMAGE = str(FIXTURES / "view_a0.png")


@pytest.fixture(scope="module")
def client() -> TestClient:
    return TestClient(create_app(model_name=LITE_MODEL_NAME, device="cpu"))


def _score(client: TestClient, image: str, texts: list[str]):
    return client.post("/score", json={"image": image, "texts": texts})


def test_health_reports_model_and_device(client) -> None:
    response = client.get("/health")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "ok"
    assert body["model_name"] == LITE_MODEL_NAME
    assert body["device"] == "cpu"


def test_scores_are_in_range_and_in_order(client) -> None:
    texts = ["the kitchen", "a bedroom", "the hallway"]
    response = _score(client, IMAGE, texts)
    assert response.status_code == 200
    body = response.json()
    assert body["model_name"] == LITE_MODEL_NAME
    assert len(body["scores"]) == len(texts)
    assert all(0.0 <= s <= 1.0 for s in body["scores"])


def test_identical_texts_get_identical_scores(client) -> None:
    response = _score(client, IMAGE, ["the sofa", "the sofa"])
    scores = response.json()["scores"]
    assert scores[0] == scores[1]


def test_repeated_requests_are_deterministic(client) -> None:
    first = _score(client, IMAGE, ["a plant", "a sink"]).json()
    second = _score(client, IMAGE, ["a plant", "a sink"]).json()
    assert first == second


def test_permuted_texts_get_permuted_scores(client) -> None:
    texts = ["the kitchen", "the garage", "a mirror", "a rug"]
    forward = _score(client, IMAGE, texts).json()["scores"]
    backward = _score(client, IMAGE, list(reversed(texts))).json()["scores"]
    assert backward == list(reversed(forward))


def test_base64_payload_scores_like_the_file(client) -> None:
    payload = "base64:" + base64.b64encode(Path(IMAGE).read_bytes()).decode()
    via_file = _score(client, IMAGE, ["a lamp"]).json()["scores"]
    via_bytes = _score(client, payload, ["a lamp"]).json()["scores"]
    assert via_bytes == via_file


def test_frozen_fixture_scores(client) -> None:
    # Recorded once for the pinned model; regenerate only when the pin moves.
    frozen = json.loads((FIXTURES / "frozen_scores.json").read_text())
    assert frozen["model_name"] == LITE_MODEL_NAME
    response = _score(client, str(FIXTURES / frozen["image"]), frozen["texts"])
    assert response.json()["scores"] == pytest.approx(frozen["scores"], rel=1e-12)


def test_empty_texts_is_400(client) -> None:
    assert _score(client, IMAGE, []).status_code == 400


def test_missing_fields_are_400(client) -> None:
    assert client.post("/score", json={"texts": ["x"]}).status_code == 400
    assert client.post("/score", json={"image": IMAGE}).status_code == 400


def test_unknown_image_path_is_404(client) -> None:
    assert _score(client, str(FIXTURES / "no_such.png"), ["x"]).status_code == 404


def test_undecodable_image_is_422(client, tmp_path) -> None:
    not_an_image = tmp_path / "junk.png"
    not_an_image.write_bytes(b"definitely not a png")
    assert _score(client, str(not_an_image), ["x"]).status_code == 422


def test_invalid_base64_is_422(client) -> None:
    assert _score(client, "base64:!!!not-base64!!!", ["x"]).status_code == 422


def test_valid_base64_of_garbage_is_422(client) -> None:
    payload = "base64:" + base64.b64encode(b"garbage bytes").decode()
    assert _score(client, payload, ["x"]).status_code == 422


def test_503_until_model_loads() -> None:
    holder = ModelHolder(model_name=LITE_MODEL_NAME, device="cpu")
    cold = TestClient(create_app(holder=holder))
    assert cold.get("/health").status_code == 503
    assert cold.get("/health").json()["status"] == "loading"
    assert _score(cold, IMAGE, ["x"]).status_code == 503
    holder.load()
    assert cold.get("/health").status_code == 200
    assert _score(cold, IMAGE, ["x"]).status_code == 200


def test_unknown_model_pin_is_rejected() -> None:
    holder = ModelHolder(model_name="clip-vit-does-not-exist", device="cpu")
    with pytest.raises(ValueError, match="unknown model"):
        holder.load()

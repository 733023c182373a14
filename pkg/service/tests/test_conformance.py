"""Black-box wire-protocol conformance, the same checks the in-process mock
service is held to: schemas, score range, batching invariance at 1e-6, and
malformed-request handling."""

import pytest
from fastapi.testclient import TestClient

from scoring_service import ServiceConfig, create_app

EVENT_TASK = "event_conceptualization"
TRIPLE_TASK = "triple_conceptualization"


@pytest.fixture(scope="module")
def client():
    config = ServiceConfig(backbone="mini:32x1", batch_size=8, seed=3)
    with TestClient(create_app(config)) as c:
        yield c


def test_health_schema(client):
    payload = client.get("/health").json()
    assert payload["status"] == "ok"
    assert isinstance(payload["identity"], str)
    assert payload["identity"].startswith("mini:32x1@")


def test_score_schema_and_range(client):
    prompts = [
        f"[CLS] PersonX <c>does thing {i}</c> [SEP] thing {i % 3} activity" for i in range(20)
    ]
    for task in (EVENT_TASK, TRIPLE_TASK):
        response = client.post("/score", json={"task": task, "prompts": prompts})
        assert response.status_code == 200
        scores = response.json()["scores"]
        assert len(scores) == len(prompts)
        assert all(isinstance(s, float) and 0.0 <= s <= 1.0 for s in scores)


def test_batching_invariance_at_1e6(client):
    prompts = [
        f"[CLS] PersonX <c>visits place {i}</c> [SEP] location {i % 5}" for i in range(17)
    ]
    whole = client.post("/score", json={"task": EVENT_TASK, "prompts": prompts}).json()["scores"]
    for chunk_size in (1, 3, 5, 16):
        chunked = []
        for i in range(0, len(prompts), chunk_size):
            part = client.post(
                "/score", json={"task": EVENT_TASK, "prompts": prompts[i : i + chunk_size]}
            ).json()["scores"]
            chunked.extend(part)
        assert all(abs(a - b) <= 1e-6 for a, b in zip(whole, chunked))


def test_same_prompt_same_score(client):
    prompt = "[CLS] PersonX <c>sings</c> [SEP] musical activity"
    one = client.post("/score", json={"task": EVENT_TASK, "prompts": [prompt]}).json()["scores"]
    again = client.post(
        "/score", json={"task": EVENT_TASK, "prompts": [prompt, prompt, prompt]}
    ).json()["scores"]
    assert all(abs(s - one[0]) <= 1e-6 for s in again)


def test_malformed_requests_get_400(client):
    for body in (
        {},
        {"task": EVENT_TASK},
        {"task": "bogus", "prompts": ["x"]},
        {"task": EVENT_TASK, "prompts": []},
        {"task": EVENT_TASK, "prompts": [1, 2]},
    ):
        assert client.post("/score", json=body).status_code == 400
    assert (
        client.post(
            "/train", json={"task": EVENT_TASK, "examples": [{"prompt": "x", "label": 7}]}
        ).status_code
        == 400
    )
    raw = client.post(
        "/score", content=b"{not json", headers={"Content-Type": "application/json"}
    )
    assert raw.status_code == 400


def test_train_schema(client):
    examples = [
        {"prompt": f"[CLS] <c>alpha beta {i}</c> [SEP] alpha beta", "label": 1} for i in range(4)
    ] + [
        {"prompt": f"[CLS] <c>alpha beta {i}</c> [SEP] gamma delta", "label": 0} for i in range(4)
    ]
    response = client.post(
        "/train", json={"task": EVENT_TASK, "examples": examples, "epochs": 1}
    )
    assert response.status_code == 200
    loss = response.json()["final_loss"]
    assert isinstance(loss, float) and loss >= 0.0


def test_identity_changes_after_training(client):
    before = client.get("/health").json()["identity"]
    examples = [{"prompt": "[CLS] <c>x y</c> [SEP] x y", "label": 1}] * 2
    assert (
        client.post("/train", json={"task": TRIPLE_TASK, "examples": examples}).status_code == 200
    )
    after = client.get("/health").json()["identity"]
    assert before != after

import json

import pytest
from fastapi.testclient import TestClient

from tvglab.core import Annotation, Segment
from tvglab.grpo import normalize_advantages
from tvglab.invert import invert_dataset, make_tvg_instance
from tvglab.records import instance_to_record
from tvglab.rewards import combined_reward
from tvglab.service import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(max_body_bytes=64 * 1024))


def tvg_instance_record():
    a = Annotation("v1", 30.0, Segment(10.0, 20.0), "Person closed the door")
    return instance_to_record(make_tvg_instance(a))


class TestScore:
    def test_perfect_pair_scores_two(self, client):
        body = {
            "instance": tvg_instance_record(),
            "response": "<think>scan</think> <answer>10.0 to 20.0</answer>",
        }
        reply = client.post("/score", json=body)
        assert reply.status_code == 200
        payload = reply.json()
        assert payload["r_total"] == 2.0
        assert payload["r_format"] == 1
        assert payload["r_task"] == 1.0
        assert (payload["alpha"], payload["beta"]) == (1, 0)

    def test_matches_library_exactly(self, client):
        a = Annotation("v1", 30.0, Segment(10.0, 20.0), "A person walks away and laughs")
        instances, _ = invert_dataset([a])
        responses = [
            "<think>t</think> <answer>8.0 to 19.5</answer>",
            "<think>t</think> <answer>walks</answer>",
            "<think>t</think> <answer>laughing</answer>",
            "no template at all",
        ]
        for instance, response in zip(instances, responses):
            expected = combined_reward(instance, response)
            got = client.post(
                "/score", json={"instance": instance_to_record(instance), "response": response}
            ).json()
            assert got["kind"] == expected.kind.value
            assert got["r_format"] == expected.r_format
            assert got["r_task"] == expected.r_task
            assert got["r_total"] == expected.r_total


class TestScoreGroup:
    def test_advantages_match_kernel(self, client):
        responses = [
            "<think>t</think> <answer>10.0 to 20.0</answer>",  # reward 2
            "junk",  # reward 0
            "<think>t</think> <answer>10.0 to 20.0</answer>",
            "junk",
        ]
        reply = client.post(
            "/score-group", json={"instance": tvg_instance_record(), "responses": responses}
        )
        assert reply.status_code == 200
        payload = reply.json()
        assert payload["rewards"] == [2.0, 0.0, 2.0, 0.0]
        assert payload["advantages"] == [1.0, -1.0, 1.0, -1.0]
        assert payload["advantages"] == normalize_advantages(payload["rewards"])

    def test_single_response_group_rejected(self, client):
        reply = client.post(
            "/score-group", json={"instance": tvg_instance_record(), "responses": ["x"]}
        )
        assert reply.status_code == 422
        assert "error" in reply.json()


class TestServiceErrors:
    def test_invalid_json_body(self, client):
        reply = client.post(
            "/score", content=b"{not json", headers={"content-type": "application/json"}
        )
        assert 400 <= reply.status_code < 500
        assert "error" in reply.json()

    def test_missing_fields(self, client):
        reply = client.post("/score", json={"response": "x"})
        assert reply.status_code == 422
        assert reply.json()["error"]["type"] == "validation"

    def test_unknown_kind(self, client):
        record = tvg_instance_record()
        record["kind"] = "bogus"
        reply = client.post("/score", json={"instance": record, "response": "x"})
        assert reply.status_code == 422
        assert "error" in reply.json()

    def test_malformed_target_payload(self, client):
        record = tvg_instance_record()
        record["target"] = {"wrong": 1}
        reply = client.post("/score", json={"instance": record, "response": "x"})
        assert reply.status_code == 422
        assert reply.json()["error"]["type"] == "record"

    def test_oversized_body_rejected(self, client):
        huge = "x" * (128 * 1024)
        reply = client.post(
            "/score", json={"instance": tvg_instance_record(), "response": huge}
        )
        assert reply.status_code == 413
        assert reply.json()["error"]["type"] == "oversized"

    def test_service_stays_up_after_errors(self, client):
        client.post("/score", content=b"\x00\x01", headers={"content-type": "application/json"})
        assert client.get("/healthz").json() == {"status": "ok"}

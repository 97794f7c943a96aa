import json
import threading

import httpx
import pytest

from tvglab.bridge import (
    BridgeClient,
    BridgeProtocolError,
    BridgeRequest,
    BridgeResponse,
    BridgeTransportError,
    collect_rollouts,
    request_for_instance,
)
from tvglab.core import Annotation, Segment, TaskKind
from tvglab.invert import invert_dataset
from tvglab.records import (
    bridge_request_from_record,
    bridge_request_to_record,
    bridge_response_from_record,
    bridge_response_to_record,
)


def sample_request():
    return BridgeRequest(
        id="a1",
        kind=TaskKind.TVG,
        prompt="find it",
        video_ref="v1",
        clip=Segment(0.0, 30.0),
        n_samples=4,
    )


class TestProtocolRoundTrip:
    def test_request_round_trip(self):
        req = sample_request()
        assert bridge_request_from_record(bridge_request_to_record(req)) == req

    def test_response_round_trip(self):
        resp = BridgeResponse(id="a1", samples=["x", "y"], logprobs=[-1.0, -2.0])
        assert bridge_response_from_record(bridge_response_to_record(resp)) == resp
        bare = BridgeResponse(id="a1", samples=["x"])
        assert bridge_response_from_record(bridge_response_to_record(bare)) == bare

    def test_n_samples_floor(self):
        with pytest.raises(ValueError):
            BridgeRequest("a", TaskKind.TVG, "p", "v", Segment(0, 1), n_samples=0)


def make_transport(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def echo_endpoint(answer="<think>t</think> <answer>10.0 to 20.0</answer>"):
    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        return httpx.Response(
            200, json={"id": body["id"], "samples": [answer] * body["n_samples"]}
        )

    return handler


class TestBridgeClient:
    def test_echo_stub(self):
        client = BridgeClient("http://stub/", client=make_transport(echo_endpoint()))
        response = client.generate(sample_request())
        assert response.id == "a1"
        assert len(response.samples) == 4

    def test_short_sample_count_is_protocol_error(self):
        def handler(request):
            body = json.loads(request.content)
            return httpx.Response(200, json={"id": body["id"], "samples": ["only one"]})

        client = BridgeClient("http://stub/", client=make_transport(handler))
        with pytest.raises(BridgeProtocolError):
            client.generate(sample_request())

    def test_wrong_echo_id_is_protocol_error(self):
        def handler(request):
            return httpx.Response(200, json={"id": "someone-else", "samples": ["x"] * 4})

        client = BridgeClient("http://stub/", client=make_transport(handler))
        with pytest.raises(BridgeProtocolError):
            client.generate(sample_request())

    def test_transport_failure_retries_then_raises(self):
        attempts = []

        def handler(request):
            attempts.append(1)
            raise httpx.ConnectError("refused")

        client = BridgeClient(
            "http://stub/", client=make_transport(handler), backoff_s=0.001
        )
        with pytest.raises(BridgeTransportError):
            client.generate(sample_request())
        assert len(attempts) == 3

    def test_server_error_retries_then_succeeds(self):
        calls = []

        def handler(request):
            calls.append(1)
            if len(calls) < 3:
                return httpx.Response(503, json={})
            body = json.loads(request.content)
            return httpx.Response(200, json={"id": body["id"], "samples": ["x"] * 4})

        client = BridgeClient(
            "http://stub/", client=make_transport(handler), backoff_s=0.001
        )
        assert client.generate(sample_request()).samples == ["x"] * 4


class TestCollectRollouts:
    def instances(self):
        annotations = [
            Annotation(f"v{i}", 30.0, Segment(10.0, 20.0), "Person closed the door", id=f"a{i}")
            for i in range(3)
        ]
        instances, _ = invert_dataset(annotations, kinds=[TaskKind.TVG])
        return instances

    def test_perfect_stub_scores_two_everywhere(self):
        client = BridgeClient("http://stub/", client=make_transport(echo_endpoint()))
        records, summary = collect_rollouts(client, self.instances(), group_size=4)
        assert summary.scored == 3 and summary.failures == 0
        for record in records:
            assert record.error is None
            assert record.rewards == [2.0, 2.0, 2.0, 2.0]
            assert record.advantages == [0.0, 0.0, 0.0, 0.0]

    def test_failure_entries_for_unreachable_endpoint(self):
        def handler(request):
            raise httpx.ConnectError("refused")

        client = BridgeClient("http://stub/", client=make_transport(handler), backoff_s=0.0)
        records, summary = collect_rollouts(client, self.instances(), group_size=2)
        assert summary.failures == 3 and summary.scored == 0
        assert all(r.error for r in records)

    def test_output_order_follows_input_order(self):
        lock = threading.Lock()

        def handler(request):
            body = json.loads(request.content)
            with lock:
                pass
            return httpx.Response(
                200,
                json={"id": body["id"], "samples": ["junk"] * body["n_samples"]},
            )

        client = BridgeClient("http://stub/", client=make_transport(handler))
        instances = self.instances()
        records, _ = collect_rollouts(client, instances, group_size=2, parallel=3)
        assert [r.id for r in records] == [i.source_annotation_id for i in instances]

    def test_request_for_instance_maps_fields(self):
        instance = self.instances()[0]
        request = request_for_instance(instance, 5)
        assert request.id == instance.source_annotation_id
        assert request.kind is instance.kind
        assert request.clip == instance.clip
        assert request.n_samples == 5

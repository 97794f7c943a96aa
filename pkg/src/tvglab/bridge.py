"""Bridge protocol to an externally served generator.

The bridge ships prompts, video references, and clip bounds - never pixels;
whoever serves the model owns video access. For each task instance the client
requests G samples, scores them locally with the reward engine, and writes
group records for offline analysis. Transport failures retry with exponential
backoff before being recorded as per-instance failure entries; a short
response or malformed body is a protocol error for that instance only.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import httpx

from .core import Segment, TaskInstance, TaskKind
from .grpo import normalize_advantages
from .records import (
    bridge_request_to_record,
    bridge_response_from_record,
    RecordError,
)
from .rewards import combined_reward


@dataclass(frozen=True)
class BridgeRequest:
    id: str
    kind: TaskKind
    prompt: str
    video_ref: str
    clip: Segment
    n_samples: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")


@dataclass(frozen=True)
class BridgeResponse:
    id: str
    samples: list[str]
    logprobs: list[float] | None = None


class BridgeProtocolError(ValueError):
    """The endpoint answered, but not with a well-formed bridge response."""


class BridgeTransportError(ConnectionError):
    """The endpoint could not be reached after all retries."""


class BridgeClient:
    """HTTP client for a bridge endpoint; POSTs one request record to its URL."""

    def __init__(
        self,
        endpoint: str,
        client: httpx.Client | None = None,
        max_attempts: int = 3,
        backoff_s: float = 0.5,
        timeout_s: float = 30.0,
    ):
        self.endpoint = endpoint
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self._client = client or httpx.Client(timeout=timeout_s)

    def generate(self, request: BridgeRequest) -> BridgeResponse:
        payload = bridge_request_to_record(request)
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt > 0:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                http_response = self._client.post(self.endpoint, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if http_response.status_code >= 500:
                last_error = BridgeTransportError(
                    f"endpoint returned {http_response.status_code}"
                )
                continue
            if http_response.status_code >= 400:
                raise BridgeProtocolError(
                    f"endpoint rejected request {request.id!r}: {http_response.status_code}"
                )
            try:
                body = http_response.json()
                response = bridge_response_from_record(body)
            except (ValueError, RecordError) as exc:
                raise BridgeProtocolError(f"malformed bridge response: {exc}") from exc
            if response.id != request.id:
                raise BridgeProtocolError(
                    f"response id {response.id!r} does not echo request id {request.id!r}"
                )
            if len(response.samples) != request.n_samples:
                raise BridgeProtocolError(
                    f"requested {request.n_samples} samples, got {len(response.samples)}"
                )
            return response
        raise BridgeTransportError(f"unreachable endpoint after {self.max_attempts} attempts") \
            from last_error

    def close(self) -> None:
        self._client.close()


@dataclass
class GroupRecord:
    """One scored rollout group (or a failure entry) for the group file."""

    id: str
    kind: str
    responses: list[str] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    advantages: list[float] = field(default_factory=list)
    logprobs: list[float] | None = None
    error: str | None = None

    def to_record(self) -> dict:
        record: dict = {"id": self.id, "kind": self.kind}
        if self.error is not None:
            record["error"] = self.error
            return record
        record.update(
            {"responses": self.responses, "rewards": self.rewards, "advantages": self.advantages}
        )
        if self.logprobs is not None:
            record["logprobs"] = self.logprobs
        return record


@dataclass
class RolloutSummary:
    scored: int = 0
    failures: int = 0


def request_for_instance(instance: TaskInstance, n_samples: int) -> BridgeRequest:
    return BridgeRequest(
        id=instance.source_annotation_id,
        kind=instance.kind,
        prompt=instance.prompt,
        video_ref=instance.video_ref,
        clip=instance.clip,
        n_samples=n_samples,
    )


def collect_rollouts(
    client: BridgeClient,
    instances: Sequence[TaskInstance],
    group_size: int,
    adv_epsilon: float = 1e-8,
    parallel: int = 4,
) -> tuple[list[GroupRecord], RolloutSummary]:
    """Request and score a group per instance; output order follows input order
    regardless of completion order."""

    def one(indexed: tuple[int, TaskInstance]) -> tuple[int, GroupRecord]:
        i, instance = indexed
        ident = instance.source_annotation_id
        try:
            response = client.generate(request_for_instance(instance, group_size))
        except (BridgeProtocolError, BridgeTransportError) as exc:
            return i, GroupRecord(id=ident, kind=instance.kind.value, error=str(exc))
        rewards = [combined_reward(instance, s).r_total for s in response.samples]
        advantages = (
            normalize_advantages(rewards, adv_epsilon) if len(rewards) >= 2 else [0.0]
        )
        return i, GroupRecord(
            id=ident,
            kind=instance.kind.value,
            responses=list(response.samples),
            rewards=rewards,
            advantages=advantages,
            logprobs=response.logprobs,
        )

    results: list[GroupRecord | None] = [None] * len(instances)
    with ThreadPoolExecutor(max_workers=max(1, parallel)) as pool:
        for i, record in pool.map(one, enumerate(instances)):
            results[i] = record
    summary = RolloutSummary()
    for record in results:
        assert record is not None
        if record.error is None:
            summary.scored += 1
        else:
            summary.failures += 1
    return [r for r in results if r is not None], summary

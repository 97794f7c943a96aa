"""Line-record (JSONL) schemas shared by the file formats and the wire protocol.

One serializer, one test surface: every artifact the pipeline reads or writes
is a sequence of JSON records, one per line, with a canonical field order so
identical inputs always produce byte-identical files.
"""

from __future__ import annotations

import json
from typing import IO, Iterable, Iterator

from .core import (
    Annotation,
    ArTarget,
    Segment,
    TaskInstance,
    TaskKind,
    TvgTarget,
    VcTarget,
    VdTarget,
)


class RecordError(ValueError):
    """A record does not conform to its schema."""


def dumps(record: dict) -> str:
    """Canonical one-line JSON encoding (stable field order, no padding)."""
    return json.dumps(record, ensure_ascii=False, separators=(", ", ": "))


def write_records(fp: IO[str], records: Iterable[dict]) -> int:
    n = 0
    for record in records:
        fp.write(dumps(record) + "\n")
        n += 1
    return n


def read_records(fp: IO[str]) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record) pairs; blank lines are skipped."""
    for line_no, line in enumerate(fp, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
        if not isinstance(record, dict):
            raise RecordError(f"line {line_no}: record is not an object")
        yield line_no, record


# --- annotations -----------------------------------------------------------

_ANNOTATION_KEYS = ("video", "duration", "segment", "query", "id")


def annotation_to_record(a: Annotation) -> dict:
    record: dict = {
        "video": a.video_ref,
        "duration": a.duration_s,
        "segment": a.segment.as_pair(),
        "query": a.query,
    }
    if a.id is not None:
        record["id"] = a.id
    for key in sorted(a.extra):
        record[key] = a.extra[key]
    return record


def annotation_from_record(record: dict) -> Annotation:
    try:
        video = record["video"]
        duration = record["duration"]
        segment = record["segment"]
        query = record["query"]
    except KeyError as exc:
        raise RecordError(f"missing field {exc.args[0]!r}") from exc
    if not isinstance(video, str):
        raise RecordError("field 'video' must be a string")
    if not isinstance(duration, (int, float)) or isinstance(duration, bool):
        raise RecordError("field 'duration' must be a number")
    if (
        not isinstance(segment, list)
        or len(segment) != 2
        or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in segment)
    ):
        raise RecordError("field 'segment' must be an array of two numbers")
    if not isinstance(query, str):
        raise RecordError("field 'query' must be a string")
    ident = record.get("id")
    if ident is not None and not isinstance(ident, str):
        raise RecordError("field 'id' must be a string")
    extra = {k: v for k, v in record.items() if k not in _ANNOTATION_KEYS}
    return Annotation(
        video_ref=video,
        duration_s=float(duration),
        segment=Segment(float(segment[0]), float(segment[1])),
        query=query,
        id=ident,
        extra=extra,
    )


# --- task instances --------------------------------------------------------


def target_to_payload(instance: TaskInstance) -> dict:
    t = instance.target
    if isinstance(t, TvgTarget):
        return {"segment": t.segment.as_pair(), "duration": t.duration_s}
    if isinstance(t, VcTarget):
        return {"masked_query": t.masked_query, "verb": t.gt_verb_lemma}
    if isinstance(t, (ArTarget, VdTarget)):
        return {"verbs": sorted(t.gt_verb_lemmas)}
    raise RecordError(f"unknown target type {type(t).__name__}")


def instance_to_record(instance: TaskInstance) -> dict:
    return {
        "kind": instance.kind.value,
        "video": instance.video_ref,
        "clip": instance.clip.as_pair(),
        "prompt": instance.prompt,
        "target": target_to_payload(instance),
        "source_id": instance.source_annotation_id,
    }


def instance_from_record(record: dict) -> TaskInstance:
    try:
        kind = TaskKind(record["kind"])
        video = record["video"]
        clip = record["clip"]
        prompt = record["prompt"]
        payload = record["target"]
        source_id = record["source_id"]
    except KeyError as exc:
        raise RecordError(f"missing field {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise RecordError(f"unknown task kind {record.get('kind')!r}") from exc
    if not isinstance(clip, list) or len(clip) != 2:
        raise RecordError("field 'clip' must be an array of two numbers")
    if not isinstance(payload, dict):
        raise RecordError("field 'target' must be an object")
    try:
        if kind is TaskKind.TVG:
            seg = payload["segment"]
            target = TvgTarget(
                segment=Segment(float(seg[0]), float(seg[1])),
                duration_s=float(payload["duration"]),
            )
        elif kind is TaskKind.VERB_COMPLETION:
            target = VcTarget(
                masked_query=str(payload["masked_query"]),
                gt_verb_lemma=str(payload["verb"]),
            )
        elif kind is TaskKind.ACTION_RECOGNITION:
            target = ArTarget(gt_verb_lemmas=frozenset(payload["verbs"]))
        else:
            target = VdTarget(gt_verb_lemmas=frozenset(payload["verbs"]))
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise RecordError(f"malformed target payload for kind {kind.value!r}") from exc
    return TaskInstance(
        kind=kind,
        video_ref=str(video),
        clip=Segment(float(clip[0]), float(clip[1])),
        prompt=str(prompt),
        target=target,
        source_annotation_id=str(source_id),
    )


# --- responses and reward breakdowns ----------------------------------------


def response_from_record(record: dict) -> tuple[str | None, str]:
    """Return (id, response_text); id is None for order-matched files."""
    if "response" not in record:
        raise RecordError("missing field 'response'")
    response = record["response"]
    if not isinstance(response, str):
        raise RecordError("field 'response' must be a string")
    ident = record.get("id")
    if ident is not None and not isinstance(ident, str):
        raise RecordError("field 'id' must be a string")
    return ident, response


def breakdown_to_record(breakdown, ident: str | None = None) -> dict:
    record: dict = {}
    if ident is not None:
        record["id"] = ident
    record.update(
        {
            "kind": breakdown.kind.value,
            "r_format": breakdown.r_format,
            "r_task": breakdown.r_task,
            "r_total": breakdown.r_total,
            "alpha": breakdown.alpha,
            "beta": breakdown.beta,
        }
    )
    return record


# --- bridge protocol ---------------------------------------------------------


def bridge_request_to_record(req) -> dict:
    return {
        "id": req.id,
        "kind": req.kind.value,
        "prompt": req.prompt,
        "video": req.video_ref,
        "clip": req.clip.as_pair(),
        "n_samples": req.n_samples,
    }


def bridge_request_from_record(record: dict):
    from .bridge import BridgeRequest  # local import to avoid a cycle

    try:
        return BridgeRequest(
            id=str(record["id"]),
            kind=TaskKind(record["kind"]),
            prompt=str(record["prompt"]),
            video_ref=str(record["video"]),
            clip=Segment(float(record["clip"][0]), float(record["clip"][1])),
            n_samples=int(record["n_samples"]),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise RecordError(f"malformed bridge request: {exc}") from exc


def bridge_response_to_record(resp) -> dict:
    record: dict = {"id": resp.id, "samples": list(resp.samples)}
    if resp.logprobs is not None:
        record["logprobs"] = list(resp.logprobs)
    return record


def bridge_response_from_record(record: dict):
    from .bridge import BridgeResponse

    try:
        samples = record["samples"]
        if not isinstance(samples, list) or not all(isinstance(s, str) for s in samples):
            raise RecordError("field 'samples' must be an array of strings")
        logprobs = record.get("logprobs")
        if logprobs is not None:
            logprobs = [float(x) for x in logprobs]
        return BridgeResponse(id=str(record["id"]), samples=samples, logprobs=logprobs)
    except KeyError as exc:
        raise RecordError(f"missing field {exc.args[0]!r}") from exc

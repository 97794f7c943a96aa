"""Domain model: time segments, grounding annotations, and derived task instances.

All timestamps are real seconds. Types are plain frozen dataclasses and never
raise on construction; consistency checks live in :func:`validate` so that
invalid records can be inspected, reported, and skipped rather than crashing
loaders mid-file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Union


@dataclass(frozen=True)
class Segment:
    """A closed time interval ``[start_s, end_s]`` in seconds."""

    start_s: float
    end_s: float

    @property
    def length(self) -> float:
        return self.end_s - self.start_s

    def as_pair(self) -> list[float]:
        return [self.start_s, self.end_s]


@dataclass(frozen=True)
class Annotation:
    """One ground-truth grounding record: a video, a segment, and a query."""

    video_ref: str
    duration_s: float
    segment: Segment
    query: str
    id: str | None = None
    # Unknown fields from the source record, preserved on round-trip.
    extra: Mapping[str, object] = field(default_factory=dict)


class TaskKind(Enum):
    TVG = "tvg"
    VERB_COMPLETION = "vc"
    ACTION_RECOGNITION = "ar"
    VIDEO_DESCRIPTION = "vd"

    @property
    def is_invert(self) -> bool:
        return self is not TaskKind.TVG


INVERT_KINDS = (
    TaskKind.VERB_COMPLETION,
    TaskKind.ACTION_RECOGNITION,
    TaskKind.VIDEO_DESCRIPTION,
)

#: Marker standing in for the masked verb in a verb-completion query.
BLANK_MARKER = "[ ]"


@dataclass(frozen=True)
class TvgTarget:
    segment: Segment
    duration_s: float


@dataclass(frozen=True)
class VcTarget:
    masked_query: str
    gt_verb_lemma: str


@dataclass(frozen=True)
class ArTarget:
    gt_verb_lemmas: frozenset[str]


@dataclass(frozen=True)
class VdTarget:
    gt_verb_lemmas: frozenset[str]


TaskTarget = Union[TvgTarget, VcTarget, ArTarget, VdTarget]

_TARGET_TYPE_BY_KIND = {
    TaskKind.TVG: TvgTarget,
    TaskKind.VERB_COMPLETION: VcTarget,
    TaskKind.ACTION_RECOGNITION: ArTarget,
    TaskKind.VIDEO_DESCRIPTION: VdTarget,
}


@dataclass(frozen=True)
class TaskInstance:
    """A concrete prompt + scoring target for one task kind.

    ``clip`` is the video window the responder is shown: the ground-truth
    segment for invert kinds, the full ``[0, duration]`` window for TVG.
    """

    kind: TaskKind
    video_ref: str
    clip: Segment
    prompt: str
    target: TaskTarget
    source_annotation_id: str


def segment_violations(segment: Segment, duration_s: float | None = None) -> list[str]:
    """Return human-readable violations of the segment invariants (empty if valid)."""
    problems: list[str] = []
    if segment.start_s < 0:
        problems.append("segment start is negative")
    if segment.end_s < segment.start_s:
        problems.append("segment end precedes start")
    if duration_s is not None and segment.end_s > duration_s:
        problems.append("segment exceeds duration")
    return problems


def validate(annotation: Annotation) -> list[str]:
    """Check all annotation invariants; violations are data, not faults."""
    problems = []
    if not annotation.video_ref:
        problems.append("empty video reference")
    if annotation.duration_s <= 0:
        problems.append("non-positive duration")
    if not annotation.query.strip():
        problems.append("empty query")
    problems.extend(segment_violations(annotation.segment, annotation.duration_s))
    return problems


def validate_instance(instance: TaskInstance) -> list[str]:
    """Check the kind/target pairing and target-specific invariants."""
    problems = []
    expected = _TARGET_TYPE_BY_KIND[instance.kind]
    if not isinstance(instance.target, expected):
        problems.append(
            f"target type {type(instance.target).__name__} does not match kind {instance.kind.value}"
        )
        return problems
    problems.extend(segment_violations(instance.clip))
    if isinstance(instance.target, VcTarget):
        if instance.target.masked_query.count(BLANK_MARKER) != 1:
            problems.append("masked query must contain exactly one blank marker")
    elif isinstance(instance.target, (ArTarget, VdTarget)):
        if not instance.target.gt_verb_lemmas:
            problems.append("empty ground-truth verb set")
    return problems

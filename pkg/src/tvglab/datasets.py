"""Annotation ingestion for the native format and the three public dataset layouts.

Everything is normalized onto one internal schema (see ``records.py``), so the
rest of the system never sees dataset quirks. Loaders run in file order and are
strict or skip-and-report per the ``strict`` flag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import Annotation, Segment, validate
from .records import RecordError, annotation_from_record, annotation_to_record, dumps

FORMATS = ("native", "charades", "activitynet", "qvhighlight")


class LoadError(ValueError):
    """A record failed to parse or validate (fatal only in strict mode)."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class SkipReport:
    line_no: int
    reason: str


@dataclass
class LoadReport:
    annotations: list[Annotation] = field(default_factory=list)
    skips: list[SkipReport] = field(default_factory=list)


def split_multi_segment(
    video_ref: str,
    duration_s: float,
    query: str,
    windows: Sequence[Sequence[float]],
    id: str | None = None,
) -> list[Annotation]:
    """Expand one k-window record into k single-segment annotations.

    The shared payload (video, duration, query) is copied to every output and
    window order is preserved. Per-window ids get a ``#<index>`` suffix when k > 1.
    """
    if len(windows) == 0:
        raise LoadError("record has no ground-truth windows")
    out = []
    for i, window in enumerate(windows):
        if len(window) != 2:
            raise LoadError(f"window {i} is not a [start, end] pair")
        ident = id if (id is None or len(windows) == 1) else f"{id}#{i}"
        out.append(
            Annotation(
                video_ref=video_ref,
                duration_s=duration_s,
                segment=Segment(float(window[0]), float(window[1])),
                query=query,
                id=ident,
            )
        )
    return out


def _admit(report: LoadReport, annotation: Annotation, line_no: int, strict: bool) -> None:
    problems = validate(annotation)
    if problems:
        if strict:
            raise LoadError("; ".join(problems), line_no)
        report.skips.append(SkipReport(line_no, "; ".join(problems)))
    else:
        report.annotations.append(annotation)


def _read_native(path: Path, strict: bool, report: LoadReport) -> None:
    with path.open(encoding="utf-8") as fp:
        for line_no, line in enumerate(fp, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise RecordError("record is not an object")
                annotation = annotation_from_record(record)
            except (json.JSONDecodeError, RecordError) as exc:
                reason = exc.msg if isinstance(exc, json.JSONDecodeError) else str(exc)
                if strict:
                    raise LoadError(reason, line_no) from exc
                report.skips.append(SkipReport(line_no, reason))
                continue
            _admit(report, annotation, line_no, strict)


def _read_charades(
    path: Path, strict: bool, report: LoadReport, durations: Mapping[str, float] | None
) -> None:
    # Layout: one "<video> <start> <end>##<query>" line per clip-query pair.
    # The files carry no video duration; a durations sidecar may supply it,
    # otherwise the segment end is used as the tightest consistent value.
    with path.open(encoding="utf-8") as fp:
        for line_no, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            head, sep, query = line.partition("##")
            parts = head.split()
            if not sep or len(parts) != 3:
                if strict:
                    raise LoadError("expected '<video> <start> <end>##<query>'", line_no)
                report.skips.append(SkipReport(line_no, "malformed charades line"))
                continue
            video, raw_start, raw_end = parts
            try:
                start, end = float(raw_start), float(raw_end)
            except ValueError:
                if strict:
                    raise LoadError("non-numeric timestamps", line_no)
                report.skips.append(SkipReport(line_no, "non-numeric timestamps"))
                continue
            duration = float(durations[video]) if durations and video in durations else end
            annotation = Annotation(
                video_ref=video, duration_s=duration, segment=Segment(start, end), query=query
            )
            _admit(report, annotation, line_no, strict)


def _read_activitynet(path: Path, strict: bool, report: LoadReport) -> None:
    # Layout: {"<video>": {"duration": s, "timestamps": [[s,e], ...],
    # "sentences": [q, ...]}, ...}; one annotation per aligned pair.
    with path.open(encoding="utf-8") as fp:
        try:
            data = json.load(fp)
        except json.JSONDecodeError as exc:
            raise LoadError(f"invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise LoadError("top-level value must be an object keyed by video id")
    entry_no = 0
    for video, entry in data.items():
        entry_no += 1
        if (
            not isinstance(entry, dict)
            or "duration" not in entry
            or "timestamps" not in entry
            or "sentences" not in entry
        ):
            if strict:
                raise LoadError(f"video {video!r}: missing duration/timestamps/sentences", entry_no)
            report.skips.append(SkipReport(entry_no, f"video {video!r}: malformed entry"))
            continue
        timestamps = entry["timestamps"]
        sentences = entry["sentences"]
        if len(timestamps) != len(sentences):
            if strict:
                raise LoadError(f"video {video!r}: timestamps/sentences length mismatch", entry_no)
            report.skips.append(SkipReport(entry_no, f"video {video!r}: length mismatch"))
            continue
        for i, (window, sentence) in enumerate(zip(timestamps, sentences)):
            annotation = Annotation(
                video_ref=video,
                duration_s=float(entry["duration"]),
                segment=Segment(float(window[0]), float(window[1])),
                query=str(sentence),
                id=f"{video}#{i}" if len(timestamps) > 1 else video,
            )
            _admit(report, annotation, entry_no, strict)


def _read_qvhighlight(path: Path, strict: bool, report: LoadReport) -> None:
    # Layout: JSONL with qid/query/vid/duration/relevant_windows; multi-window
    # records are split into one annotation per window. Saliency scores are
    # dropped: the pipeline has no consumer for them.
    with path.open(encoding="utf-8") as fp:
        for line_no, line in enumerate(fp, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise RecordError("record is not an object")
                windows = record["relevant_windows"]
                split = split_multi_segment(
                    video_ref=str(record["vid"]),
                    duration_s=float(record["duration"]),
                    query=str(record["query"]),
                    windows=windows,
                    id=str(record["qid"]) if "qid" in record else None,
                )
            except (json.JSONDecodeError, KeyError, IndexError, TypeError, ValueError) as exc:
                reason = exc.msg if isinstance(exc, json.JSONDecodeError) else str(exc)
                if strict:
                    raise LoadError(f"malformed qvhighlight record: {reason}", line_no) from exc
                report.skips.append(SkipReport(line_no, f"malformed qvhighlight record: {reason}"))
                continue
            for annotation in split:
                _admit(report, annotation, line_no, strict)


def read_annotations(
    path: str | Path,
    format: str = "native",
    strict: bool = False,
    durations: Mapping[str, float] | None = None,
) -> LoadReport:
    """Load an annotation file, returning both the annotations and the skip report."""
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"annotation file not found: {path}")
    report = LoadReport()
    if format == "native":
        _read_native(path, strict, report)
    elif format == "charades":
        _read_charades(path, strict, report, durations)
    elif format == "activitynet":
        _read_activitynet(path, strict, report)
    else:
        _read_qvhighlight(path, strict, report)
    return report


def load_annotations(
    path: str | Path,
    format: str = "native",
    strict: bool = False,
    durations: Mapping[str, float] | None = None,
) -> list[Annotation]:
    """Like :func:`read_annotations` but returns only the annotation list."""
    return read_annotations(path, format, strict, durations).annotations


def write_annotations(path: str | Path, annotations: Iterable[Annotation]) -> int:
    """Serialize annotations to the native one-record-per-line format."""
    n = 0
    with Path(path).open("w", encoding="utf-8") as fp:
        for annotation in annotations:
            fp.write(dumps(annotation_to_record(annotation)) + "\n")
            n += 1
    return n

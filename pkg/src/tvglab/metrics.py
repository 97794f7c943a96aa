"""Grounding metrics (recall at IoU thresholds, mean IoU) and run scoring.

Threshold comparisons are strict (IoU > m) by default; pass ``inclusive=True``
for toolkits that use >=. Reports are emitted with fixed 4-decimal precision
and a canonical field order so two runs diff cleanly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .core import Segment, TaskInstance, TaskKind
from .rewards import combined_reward, iou_reward, parse_response

R1_THRESHOLDS = (0.3, 0.5, 0.7)


def r1_at_m(
    preds: Sequence[Segment | None],
    gts: Sequence[Segment],
    m: float,
    inclusive: bool = False,
) -> float:
    """Percentage of pairs whose IoU beats the threshold; absent predictions miss."""
    if len(preds) != len(gts):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(gts)} ground truths")
    if not gts:
        raise ValueError("empty prediction/ground-truth lists")
    if not 0.0 < m <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {m}")
    hits = 0
    for pred, gt in zip(preds, gts):
        if pred is None:
            continue
        iou = iou_reward(pred, gt)
        if iou > m or (inclusive and iou == m):
            hits += 1
    return 100.0 * hits / len(gts)


def mean_iou(preds: Sequence[Segment | None], gts: Sequence[Segment]) -> float:
    """Mean per-pair IoU; absent predictions contribute 0."""
    if len(preds) != len(gts):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(gts)} ground truths")
    if not gts:
        raise ValueError("empty prediction/ground-truth lists")
    ious = [0.0 if p is None else iou_reward(p, g) for p, g in zip(preds, gts)]
    # fsum: exactly-rounded, order-independent total
    return math.fsum(ious) / len(ious)


@dataclass
class EvalReport:
    n_samples: int
    r1: dict[float, float]
    miou: float
    accuracy: dict[str, float]
    metadata: dict[str, str] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "r1": {f"{m:.1f}": round(v, 4) for m, v in sorted(self.r1.items())},
            "miou": round(self.miou, 4),
            "accuracy": {k: round(v, 4) for k, v in sorted(self.accuracy.items())},
            "metadata": dict(sorted(self.metadata.items())),
        }

    def to_table(self) -> str:
        rows = [("samples", str(self.n_samples))]
        rows += [(f"R1@{m:.1f}", f"{v:.4f}") for m, v in sorted(self.r1.items())]
        rows.append(("mIoU", f"{self.miou:.4f}"))
        rows += [(f"acc[{k}]", f"{v:.4f}") for k, v in sorted(self.accuracy.items())]
        rows += [(f"meta[{k}]", v) for k, v in sorted(self.metadata.items())]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows) + "\n"

    def write(self, directory: str | Path, csv_too: bool = False) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        record = self.to_record()
        # one record per line, like every other data file in the pipeline
        (directory / "report.json").write_text(
            json.dumps(record, sort_keys=False) + "\n", encoding="utf-8"
        )
        (directory / "report.txt").write_text(self.to_table(), encoding="utf-8")
        if csv_too:
            with (directory / "report.csv").open("w", newline="", encoding="utf-8") as fp:
                writer = csv.writer(fp)
                writer.writerow(["metric", "value"])
                writer.writerow(["n_samples", self.n_samples])
                for m, v in sorted(self.r1.items()):
                    writer.writerow([f"r1@{m:.1f}", f"{v:.4f}"])
                writer.writerow(["miou", f"{self.miou:.4f}"])
                for k, v in sorted(self.accuracy.items()):
                    writer.writerow([f"acc_{k}", f"{v:.4f}"])


def score_run(
    instances: Sequence[TaskInstance],
    responses: Sequence[str],
    metadata: Mapping[str, str] | None = None,
    inclusive: bool = False,
) -> EvalReport:
    """Aggregate metrics for one evaluation run.

    Grounding instances feed R1/mIoU from their parsed answer segments (a
    broken template is a miss); each invert kind's accuracy is its mean binary
    task reward.
    """
    if len(instances) != len(responses):
        raise ValueError(
            f"misaligned run: {len(instances)} instances vs {len(responses)} responses"
        )
    preds: list[Segment | None] = []
    gts: list[Segment] = []
    task_rewards: dict[str, list[float]] = {}
    for instance, response in zip(instances, responses):
        if instance.kind is TaskKind.TVG:
            preds.append(parse_response(response).answer_segment)
            gts.append(instance.target.segment)
        else:
            breakdown = combined_reward(instance, response)
            task_rewards.setdefault(instance.kind.value, []).append(breakdown.r_task)
    r1 = {m: r1_at_m(preds, gts, m, inclusive) for m in R1_THRESHOLDS} if gts else {}
    miou = mean_iou(preds, gts) if gts else 0.0
    accuracy = {kind: math.fsum(vals) / len(vals) for kind, vals in task_rewards.items()}
    return EvalReport(
        n_samples=len(instances),
        r1=r1,
        miou=miou,
        accuracy=accuracy,
        metadata=dict(metadata or {}),
    )

"""Response parsing and the complete reward engine.

Rewards come in two groups: the grounding pair (interval IoU + template format)
and the three verb rewards (completion, recognition, description). Every task
reward lives in [0, 1]; the total for a response is format + task, so a
perfectly formatted, perfectly correct response scores 2.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .core import (
    ArTarget,
    Segment,
    TaskInstance,
    TaskKind,
    TvgTarget,
    VcTarget,
    VdTarget,
    BLANK_MARKER,
)
from .verbs import VerbLexicon, extract_verbs, is_variant, tokenize

_TEMPLATE_RE = re.compile(
    r"\s*<think>(?P<think>.*?)</think>\s*<answer>(?P<answer>.*?)</answer>\s*",
    re.DOTALL,
)
_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_SEGMENT_RE = re.compile(r"\s*(\d+(?:\.\d+)?)\s+to\s+(\d+(?:\.\d+)?)\s*")


@dataclass(frozen=True)
class ParsedResponse:
    format_ok: bool
    think: str | None = None
    answer_text: str | None = None
    answer_segment: Segment | None = None


def parse_response(raw: str) -> ParsedResponse:
    """Parse the ``<think>…</think> <answer>…</answer>`` template.

    ``format_ok`` requires exactly one think block, then exactly one answer
    block, and nothing but whitespace around them. The blocks are still
    extracted when only the strict shape fails (e.g. trailing text), so task
    rewards can be scored independently of the format reward. A reversed
    segment ("31.0 to 12.5") is deliberately left unparsed rather than
    swapped: ordering mistakes should cost reward, not be repaired.
    """
    counts_ok = (
        raw.count("<think>") == 1
        and raw.count("</think>") == 1
        and raw.count("<answer>") == 1
        and raw.count("</answer>") == 1
    )
    format_ok = counts_ok and _TEMPLATE_RE.fullmatch(raw) is not None

    think = answer = None
    if counts_ok:
        think_match = _THINK_RE.search(raw)
        answer_match = _ANSWER_RE.search(raw)
        think = think_match.group(1) if think_match else None
        answer = answer_match.group(1) if answer_match else None

    segment = None
    if answer is not None:
        seg_match = _SEGMENT_RE.fullmatch(answer)
        if seg_match:
            start, end = float(seg_match.group(1)), float(seg_match.group(2))
            if start <= end:
                segment = Segment(start, end)

    return ParsedResponse(
        format_ok=format_ok, think=think, answer_text=answer, answer_segment=segment
    )


def format_reward(raw: str) -> int:
    return 1 if parse_response(raw).format_ok else 0


def iou_reward(pred: Segment, gt: Segment) -> float:
    """Interval intersection-over-union in [0, 1].

    Zero-length corner: two equal point intervals count as a perfect match
    (1.0); any other zero-measure union scores 0.
    """
    inter = min(pred.end_s, gt.end_s) - max(pred.start_s, gt.start_s)
    inter = max(inter, 0.0)
    union = (pred.end_s - pred.start_s) + (gt.end_s - gt.start_s) - inter
    if union <= 0.0:
        return 1.0 if (pred.start_s, pred.end_s) == (gt.start_s, gt.end_s) else 0.0
    return inter / union


def _align_filled_tokens(response_tokens: list[str], masked_query: str) -> list[str] | None:
    """Tokens occupying the blank when the response reconstructs the masked query."""
    prefix_text, _, suffix_text = masked_query.partition(BLANK_MARKER)
    prefix = tokenize(prefix_text)
    suffix = tokenize(suffix_text)
    n, p, s = len(response_tokens), len(prefix), len(suffix)
    if n <= p + s:
        return None
    if response_tokens[:p] != prefix or (s > 0 and response_tokens[n - s :] != suffix):
        return None
    return response_tokens[p : n - s if s else n]


def vc_reward(response: str, target: VcTarget, lexicon: VerbLexicon | None = None) -> int:
    """1 iff the predicted verb shares the masked verb's lemma.

    Accepts either a bare verb or a reconstructed sentence. When the response
    aligns token-for-token with the masked query, only the tokens filling the
    blank are judged; otherwise any response token may match.
    """
    tokens = tokenize(response)
    if not tokens:
        return 0
    candidates = _align_filled_tokens(tokens, target.masked_query)
    if candidates is None:
        candidates = tokens
    return int(any(is_variant(tok, target.gt_verb_lemma, lexicon) for tok in candidates))


def ar_reward(response: str, target: ArTarget, lexicon: VerbLexicon | None = None) -> int:
    """1 iff the first verb-like token's lemma appears in the reference verb set."""
    hits = extract_verbs(response, lexicon)
    if not hits:
        return 0
    return int(hits[0].lemma in target.gt_verb_lemmas)


def vd_reward(response: str, target: VdTarget, lexicon: VerbLexicon | None = None) -> int:
    """1 iff any reference verb lemma occurs among the description's verbs."""
    predicted = {hit.lemma for hit in extract_verbs(response, lexicon)}
    return int(any(lemma in predicted for lemma in target.gt_verb_lemmas))


class EmbeddingTable:
    """Word vectors for the cosine-similarity reward variant.

    File format: ``word v1 v2 ... vd`` per line; the dimension is inferred
    from the first line. Lookups of missing words score 0 and bump
    ``missing_count`` so callers can surface the warning rate.
    """

    def __init__(self, vectors: dict[str, np.ndarray]):
        self.vectors = vectors
        self.missing_count = 0

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        vectors: dict[str, np.ndarray] = {}
        dim = None
        with open(path, encoding="utf-8") as fp:
            for line_no, line in enumerate(fp, start=1):
                parts = line.split()
                if not parts:
                    continue
                word, values = parts[0], parts[1:]
                if dim is None:
                    dim = len(values)
                if len(values) != dim or dim == 0:
                    raise ValueError(f"line {line_no}: expected {dim} vector components")
                vectors[word] = np.array([float(v) for v in values], dtype=np.float64)
        return cls(vectors)


def cosine_similarity_reward(pred_verb: str, gt_verb: str, embeddings: EmbeddingTable) -> float:
    """Cosine of the two word vectors, clamped to [0, 1]; missing words score 0."""
    a = embeddings.vectors.get(pred_verb.lower())
    b = embeddings.vectors.get(gt_verb.lower())
    if a is None or b is None:
        embeddings.missing_count += 1
        return 0.0
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom == 0.0 or not math.isfinite(denom):
        return 0.0
    return max(0.0, min(1.0, float(np.dot(a, b)) / denom))


def sample_task_kind(rng: np.random.Generator, p: float) -> TaskKind:
    """Draw the next training task: grounding with probability p, otherwise one
    of the three invert kinds uniformly."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if rng.random() < p:
        return TaskKind.TVG
    return (
        TaskKind.VERB_COMPLETION,
        TaskKind.ACTION_RECOGNITION,
        TaskKind.VIDEO_DESCRIPTION,
    )[int(rng.integers(3))]


@dataclass(frozen=True)
class RewardBreakdown:
    kind: TaskKind
    r_format: int
    r_task: float
    r_total: float
    alpha: int
    beta: int


def combined_reward(
    instance: TaskInstance, raw: str, lexicon: VerbLexicon | None = None
) -> RewardBreakdown:
    """Score one raw response against its task instance.

    The task reward is read from the answer body whenever an unambiguous
    answer block exists, even if the strict format check failed; the format
    reward stays independent.
    """
    parsed = parse_response(raw)
    r_format = 1 if parsed.format_ok else 0

    if instance.kind is TaskKind.TVG:
        assert isinstance(instance.target, TvgTarget)
        if parsed.answer_segment is None:
            r_task = 0.0
        else:
            r_task = iou_reward(parsed.answer_segment, instance.target.segment)
    else:
        answer = parsed.answer_text if parsed.answer_text is not None else ""
        if instance.kind is TaskKind.VERB_COMPLETION:
            assert isinstance(instance.target, VcTarget)
            r_task = float(vc_reward(answer, instance.target, lexicon))
        elif instance.kind is TaskKind.ACTION_RECOGNITION:
            assert isinstance(instance.target, ArTarget)
            r_task = float(ar_reward(answer, instance.target, lexicon))
        else:
            assert isinstance(instance.target, VdTarget)
            r_task = float(vd_reward(answer, instance.target, lexicon))

    alpha = 1 if instance.kind is TaskKind.TVG else 0
    return RewardBreakdown(
        kind=instance.kind,
        r_format=r_format,
        r_task=r_task,
        r_total=r_format + r_task,
        alpha=alpha,
        beta=1 - alpha,
    )

"""Turn grounding annotations into task instances: the forward grounding task
plus the three inverted tasks that ask for query-related action content given
the ground-truth segment.

One annotation yields up to four instances. Invert kinds always clip to the
annotation's ground-truth segment; queries without a detectable verb are
skipped for invert kinds (and reported) but still produce a grounding instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import (
    Annotation,
    ArTarget,
    Segment,
    TaskInstance,
    TaskKind,
    TvgTarget,
    VcTarget,
    VdTarget,
    BLANK_MARKER,
)
from .verbs import VerbLexicon, extract_verbs

TVG_PROMPT_TEMPLATE = (
    "Find the video segment that matches the query '{query}'. Think inside "
    "<think></think>, then answer with the segment as 't_s to t_e' in seconds "
    "inside <answer></answer>."
)
VC_PROMPT_TEMPLATE = "Add a verb for the event '{masked_query}' based on the video."
AR_PROMPT_TEMPLATE = "Use a verb to describe the event based on the video."
VD_PROMPT_TEMPLATE = "Describe what people have done based on the video."


@dataclass(frozen=True)
class PromptTemplates:
    """Prompt wording, overridable for experiments; defaults are the shipped ones."""

    tvg: str = TVG_PROMPT_TEMPLATE
    vc: str = VC_PROMPT_TEMPLATE
    ar: str = AR_PROMPT_TEMPLATE
    vd: str = VD_PROMPT_TEMPLATE

    @staticmethod
    def from_file(path) -> "PromptTemplates":
        """Read ``key=value`` overrides (keys tvg/vc/ar/vd, \\n escapes allowed)."""
        values = {}
        with open(path, encoding="utf-8") as fp:
            for line in fp:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                key = key.strip()
                if not sep or key not in ("tvg", "vc", "ar", "vd"):
                    raise ValueError(f"unknown prompt template key {key!r}")
                values[key] = value.strip().replace("\\n", "\n")
        return PromptTemplates(**values)


DEFAULT_TEMPLATES = PromptTemplates()


def _source_id(annotation: Annotation, index: int) -> str:
    return annotation.id if annotation.id is not None else f"{annotation.video_ref}#{index}"


def make_tvg_instance(
    annotation: Annotation, index: int = 0, templates: PromptTemplates = DEFAULT_TEMPLATES
) -> TaskInstance:
    """Grounding instance over the full video window."""
    return TaskInstance(
        kind=TaskKind.TVG,
        video_ref=annotation.video_ref,
        clip=Segment(0.0, annotation.duration_s),
        prompt=templates.tvg.format(query=annotation.query),
        target=TvgTarget(segment=annotation.segment, duration_s=annotation.duration_s),
        source_annotation_id=_source_id(annotation, index),
    )


def mask_verb(query: str, token_index: int) -> str:
    """Replace the token at ``token_index`` with the blank marker in place,
    leaving surrounding case and punctuation untouched."""
    from .verbs import _TOKEN_RE  # same token boundaries as tokenize()

    for i, match in enumerate(_TOKEN_RE.finditer(query.lower())):
        if i == token_index:
            return query[: match.start()] + BLANK_MARKER + query[match.end() :]
    raise IndexError(f"token index {token_index} out of range for query {query!r}")


def make_vc_instances(
    annotation: Annotation,
    verb_choice: int | str = "first",
    index: int = 0,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
    lexicon: VerbLexicon | None = None,
) -> list[TaskInstance]:
    """Verb-completion instances; one per selected verb occurrence.

    ``verb_choice``: "first", "all", or an integer occurrence index. Returns []
    when the query has no detectable verb (the caller accounts for the skip).
    """
    hits = extract_verbs(annotation.query, lexicon)
    if not hits:
        return []
    if verb_choice == "first":
        selected = hits[:1]
    elif verb_choice == "all":
        selected = hits
    else:
        k = int(verb_choice)
        if not 0 <= k < len(hits):
            return []
        selected = [hits[k]]
    instances = []
    for hit in selected:
        masked = mask_verb(annotation.query, hit.token_index)
        instances.append(
            TaskInstance(
                kind=TaskKind.VERB_COMPLETION,
                video_ref=annotation.video_ref,
                clip=annotation.segment,
                prompt=templates.vc.format(masked_query=masked),
                target=VcTarget(masked_query=masked, gt_verb_lemma=hit.lemma),
                source_annotation_id=_source_id(annotation, index),
            )
        )
    return instances


def make_ar_instance(
    annotation: Annotation,
    index: int = 0,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
    lexicon: VerbLexicon | None = None,
) -> TaskInstance | None:
    """Action-recognition instance; None when the query has no detectable verb."""
    lemmas = frozenset(hit.lemma for hit in extract_verbs(annotation.query, lexicon))
    if not lemmas:
        return None
    return TaskInstance(
        kind=TaskKind.ACTION_RECOGNITION,
        video_ref=annotation.video_ref,
        clip=annotation.segment,
        prompt=templates.ar,
        target=ArTarget(gt_verb_lemmas=lemmas),
        source_annotation_id=_source_id(annotation, index),
    )


def make_vd_instance(
    annotation: Annotation,
    index: int = 0,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
    lexicon: VerbLexicon | None = None,
) -> TaskInstance | None:
    """Video-description instance; None when the query has no detectable verb."""
    lemmas = frozenset(hit.lemma for hit in extract_verbs(annotation.query, lexicon))
    if not lemmas:
        return None
    return TaskInstance(
        kind=TaskKind.VIDEO_DESCRIPTION,
        video_ref=annotation.video_ref,
        clip=annotation.segment,
        prompt=templates.vd,
        target=VdTarget(gt_verb_lemmas=lemmas),
        source_annotation_id=_source_id(annotation, index),
    )


ALL_KINDS = (
    TaskKind.TVG,
    TaskKind.VERB_COMPLETION,
    TaskKind.ACTION_RECOGNITION,
    TaskKind.VIDEO_DESCRIPTION,
)


@dataclass
class InvertSummary:
    counts: dict[str, int] = field(default_factory=lambda: {k.value: 0 for k in ALL_KINDS})
    skipped_no_verb: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def invert_dataset(
    annotations: Sequence[Annotation],
    verb_choice: int | str = "first",
    kinds: Iterable[TaskKind] = ALL_KINDS,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
    lexicon: VerbLexicon | None = None,
) -> tuple[list[TaskInstance], InvertSummary]:
    """Expand annotations into instances in a deterministic order.

    Order: annotation order, then kind order (grounding, completion,
    recognition, description). A no-verb query counts one skip regardless of
    how many invert kinds were requested.
    """
    wanted = set(kinds)
    instances: list[TaskInstance] = []
    summary = InvertSummary()
    for i, annotation in enumerate(annotations):
        produced: list[TaskInstance] = []
        if TaskKind.TVG in wanted:
            produced.append(make_tvg_instance(annotation, i, templates))
        verbless = False
        if TaskKind.VERB_COMPLETION in wanted:
            vc = make_vc_instances(annotation, verb_choice, i, templates, lexicon)
            verbless = verbless or not vc
            produced.extend(vc)
        if TaskKind.ACTION_RECOGNITION in wanted:
            ar = make_ar_instance(annotation, i, templates, lexicon)
            verbless = verbless or ar is None
            if ar is not None:
                produced.append(ar)
        if TaskKind.VIDEO_DESCRIPTION in wanted:
            vd = make_vd_instance(annotation, i, templates, lexicon)
            verbless = verbless or vd is None
            if vd is not None:
                produced.append(vd)
        if verbless:
            summary.skipped_no_verb += 1
        for instance in produced:
            summary.counts[instance.kind.value] += 1
        instances.extend(produced)
    return instances, summary

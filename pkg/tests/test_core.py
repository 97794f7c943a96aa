from tvglab.core import (
    Annotation,
    ArTarget,
    Segment,
    TaskInstance,
    TaskKind,
    TvgTarget,
    VcTarget,
    validate,
    validate_instance,
)


def test_valid_annotation_passes(annotation):
    assert validate(annotation) == []


def test_segment_exceeding_duration_is_a_violation():
    bad = Annotation("v1", 15.0, Segment(10.0, 20.0), "Person closed the door")
    assert any("exceeds duration" in v for v in validate(bad))


def test_empty_query_is_a_violation():
    bad = Annotation("v1", 30.0, Segment(10.0, 20.0), "   ")
    assert any("empty query" in v for v in validate(bad))


def test_reversed_segment_is_a_violation():
    bad = Annotation("v1", 30.0, Segment(20.0, 10.0), "Person closed the door")
    assert any("end precedes start" in v for v in validate(bad))


def test_negative_start_is_a_violation():
    bad = Annotation("v1", 30.0, Segment(-1.0, 10.0), "Person closed the door")
    assert any("negative" in v for v in validate(bad))


def test_segment_length():
    assert Segment(10.0, 20.0).length == 10.0
    assert Segment(5.0, 5.0).length == 0.0


def test_instance_kind_target_pairing(annotation):
    good = TaskInstance(
        kind=TaskKind.TVG,
        video_ref="v1",
        clip=Segment(0.0, 30.0),
        prompt="p",
        target=TvgTarget(segment=Segment(10.0, 20.0), duration_s=30.0),
        source_annotation_id="a",
    )
    assert validate_instance(good) == []
    mismatched = TaskInstance(
        kind=TaskKind.TVG,
        video_ref="v1",
        clip=Segment(0.0, 30.0),
        prompt="p",
        target=ArTarget(gt_verb_lemmas=frozenset({"close"})),
        source_annotation_id="a",
    )
    assert any("does not match kind" in v for v in validate_instance(mismatched))


def test_vc_target_needs_exactly_one_blank():
    base = dict(
        kind=TaskKind.VERB_COMPLETION,
        video_ref="v1",
        clip=Segment(10.0, 20.0),
        prompt="p",
        source_annotation_id="a",
    )
    ok = TaskInstance(target=VcTarget("Person [ ] the door", "close"), **base)
    assert validate_instance(ok) == []
    no_blank = TaskInstance(target=VcTarget("Person closed the door", "close"), **base)
    assert validate_instance(no_blank)
    two_blanks = TaskInstance(target=VcTarget("[ ] the [ ]", "close"), **base)
    assert validate_instance(two_blanks)


def test_empty_lemma_sets_are_violations():
    bad = TaskInstance(
        kind=TaskKind.ACTION_RECOGNITION,
        video_ref="v1",
        clip=Segment(10.0, 20.0),
        prompt="p",
        target=ArTarget(gt_verb_lemmas=frozenset()),
        source_annotation_id="a",
    )
    assert any("empty ground-truth verb set" in v for v in validate_instance(bad))

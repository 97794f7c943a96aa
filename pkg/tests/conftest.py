import json

import pytest

from tvglab.core import Annotation, Segment


@pytest.fixture
def annotation():
    return Annotation(
        video_ref="v1",
        duration_s=30.0,
        segment=Segment(10.0, 20.0),
        query="Person closed the door",
    )


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fp:
        for record in records:
            fp.write(json.dumps(record) + "\n")
    return path

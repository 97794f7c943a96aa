"""Synthetic grounded-action corpus for the desk-scale training loop.

Each video is a T x d feature matrix with exactly one action span: span
timesteps carry that action's embedding (plus noise), background timesteps
carry attenuated distractor-action embeddings. Action embeddings share a
common "actionness" direction and keep per-action discriminative components
orthogonal to it, so locating the span and naming the action need different
feature subspaces - the tension the training experiments probe.

Queries render the action verb in a randomly chosen tense so reward scoring
always runs through lemma equivalence rather than string match.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..core import Annotation, Segment

# (lemma, third-person singular, past, gerund) for the toy action vocabulary.
VERB_FORMS: list[tuple[str, str, str, str]] = [
    ("close", "closes", "closed", "closing"),
    ("open", "opens", "opened", "opening"),
    ("jump", "jumps", "jumped", "jumping"),
    ("run", "runs", "ran", "running"),
    ("walk", "walks", "walked", "walking"),
    ("laugh", "laughs", "laughed", "laughing"),
    ("eat", "eats", "ate", "eating"),
    ("drink", "drinks", "drank", "drinking"),
    ("sit", "sits", "sat", "sitting"),
    ("stand", "stands", "stood", "standing"),
    ("throw", "throws", "threw", "throwing"),
    ("climb", "climbs", "climbed", "climbing"),
    ("dance", "dances", "danced", "dancing"),
    ("wave", "waves", "waved", "waving"),
    ("push", "pushes", "pushed", "pushing"),
    ("pull", "pulls", "pulled", "pulling"),
    ("kick", "kicks", "kicked", "kicking"),
    ("hold", "holds", "held", "holding"),
    ("read", "reads", "read", "reading"),
    ("write", "writes", "wrote", "writing"),
    ("sleep", "sleeps", "slept", "sleeping"),
    ("smile", "smiles", "smiled", "smiling"),
    ("swim", "swims", "swam", "swimming"),
    ("sing", "sings", "sang", "singing"),
]

OBJECTS = ("door", "window", "book", "ball", "cup", "chair", "box", "bag", "plate", "towel")


@dataclass(frozen=True)
class SyntheticCorpusConfig:
    n_videos: int = 64
    timesteps: int = 24
    n_actions: int = 8
    feature_dim: int = 14
    noise_sigma: float = 0.15
    span_length_range: tuple[int, int] = (4, 9)
    seed: int = 0
    background_scale: float = 0.3
    shared_weight: float = 0.8  # actionness component of every embedding
    distinct_weight: float = 0.6  # per-action component, orthogonal to shared
    ref_prefix: str = "v"  # distinct prefixes keep train/heldout refs disjoint

    def __post_init__(self):
        lo, hi = self.span_length_range
        if not 1 <= lo <= hi <= self.timesteps:
            raise ValueError("span_length_range must satisfy 1 <= min <= max <= timesteps")
        if self.n_actions < 2:
            raise ValueError("need at least 2 actions")
        if self.n_actions > len(VERB_FORMS):
            raise ValueError(f"at most {len(VERB_FORMS)} actions available")
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be at least 2")
        if self.n_videos < 1:
            raise ValueError("n_videos must be positive")


@dataclass(frozen=True)
class SyntheticVideo:
    video_ref: str
    features: np.ndarray  # timesteps x feature_dim
    action_id: int
    gt_span: Segment  # synthetic seconds; 1 timestep = 1 second
    query: str

    def annotation(self) -> Annotation:
        return Annotation(
            video_ref=self.video_ref,
            duration_s=float(self.features.shape[0]),
            segment=self.gt_span,
            query=self.query,
            id=self.video_ref,
        )


@dataclass(frozen=True)
class SyntheticCorpus:
    config: SyntheticCorpusConfig
    videos: list[SyntheticVideo]
    action_embeddings: np.ndarray  # n_actions x feature_dim
    shared_direction: np.ndarray  # unit vector, the common actionness axis

    def __iter__(self) -> Iterator[SyntheticVideo]:
        return iter(self.videos)

    def annotations(self) -> list[Annotation]:
        return [video.annotation() for video in self.videos]

    def split(self, n_heldout: int) -> tuple["SyntheticCorpus", "SyntheticCorpus"]:
        """Split off the last ``n_heldout`` videos as a disjoint evaluation set
        living in the same embedding world."""
        if not 0 < n_heldout < len(self.videos):
            raise ValueError("n_heldout must leave at least one video on each side")
        cut = len(self.videos) - n_heldout
        make = lambda vids: SyntheticCorpus(
            config=self.config,
            videos=vids,
            action_embeddings=self.action_embeddings,
            shared_direction=self.shared_direction,
        )
        return make(self.videos[:cut]), make(self.videos[cut:])


def _make_embeddings(config: SyntheticCorpusConfig, rng: np.random.Generator):
    d = config.feature_dim
    mu = rng.normal(size=d)
    mu /= np.linalg.norm(mu)
    embeddings = np.empty((config.n_actions, d))
    for a in range(config.n_actions):
        delta = rng.normal(size=d)
        delta -= (delta @ mu) * mu
        delta /= np.linalg.norm(delta)
        embeddings[a] = config.shared_weight * mu + config.distinct_weight * delta
    return embeddings, mu


def gen_synthetic_corpus(config: SyntheticCorpusConfig) -> SyntheticCorpus:
    """Deterministic corpus for the given config (same seed, same bytes)."""
    rng = np.random.default_rng(config.seed)
    embeddings, mu = _make_embeddings(config, rng)
    T, d = config.timesteps, config.feature_dim
    lo, hi = config.span_length_range
    videos = []
    for i in range(config.n_videos):
        action = int(rng.integers(config.n_actions))
        length = int(rng.integers(lo, hi + 1))
        start = int(rng.integers(0, T - length + 1))
        features = np.empty((T, d))
        for t in range(T):
            if start <= t < start + length:
                features[t] = embeddings[action]
            else:
                distractor = int(rng.integers(config.n_actions - 1))
                if distractor >= action:
                    distractor += 1
                features[t] = config.background_scale * embeddings[distractor]
        if config.noise_sigma > 0:
            features = features + rng.normal(0.0, config.noise_sigma, size=(T, d))
        lemma, s3, past, ing = VERB_FORMS[action]
        surface = (s3, past, ing)[int(rng.integers(3))]
        obj = OBJECTS[int(rng.integers(len(OBJECTS)))]
        videos.append(
            SyntheticVideo(
                video_ref=f"{config.ref_prefix}{i:04d}",
                features=features,
                action_id=action,
                gt_span=Segment(float(start), float(start + length)),
                query=f"a person {surface} the {obj}",
            )
        )
    return SyntheticCorpus(
        config=config, videos=videos, action_embeddings=embeddings, shared_direction=mu
    )

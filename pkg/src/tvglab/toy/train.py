"""Alternating-task training loop over the synthetic corpus, the greedy probe,
and the grounding-only vs mixed-training comparison experiment.

Per iteration: draw an annotation uniformly, draw the task kind (grounding with
probability ``tvg_prob``, else one of the three invert kinds uniformly), build
the matching instance, roll out a group of responses, score them, standardize
advantages, and take one policy-gradient step. Per-response RNG streams are
derived from (seed, iteration, response index), so the log is reproducible
regardless of rollout parallelism.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import Annotation, TaskInstance, TaskKind
from ..grpo import GroupRollout, GrpoConfig, grpo_step, normalize_advantages
from ..invert import make_ar_instance, make_tvg_instance, make_vc_instances, make_vd_instance
from ..metrics import EvalReport, score_run
from ..rewards import combined_reward, sample_task_kind
from .policy import ToyPolicy
from .synth import SyntheticCorpus, SyntheticCorpusConfig, gen_synthetic_corpus


@dataclass(frozen=True)
class StepRecord:
    step: int
    kind: str
    mean_reward: float
    objective: float
    kl: float
    grad_norm: float

    def to_record(self) -> dict:
        return {
            "step": self.step,
            "kind": self.kind,
            "mean_reward": round(self.mean_reward, 6),
            "objective": round(self.objective, 6),
            "kl": round(self.kl, 6),
            "grad_norm": round(self.grad_norm, 6),
        }


@dataclass
class TrainingLog:
    steps: list[StepRecord] = field(default_factory=list)

    def mean_reward(self, kind: TaskKind | None = None) -> float:
        values = [s.mean_reward for s in self.steps if kind is None or s.kind == kind.value]
        return float(np.mean(values)) if values else 0.0

    def kind_fraction(self, kind: TaskKind) -> float:
        if not self.steps:
            return 0.0
        return sum(1 for s in self.steps if s.kind == kind.value) / len(self.steps)

    def write(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fp:
            for step in self.steps:
                fp.write(json.dumps(step.to_record()) + "\n")


def _instance_for(annotation: Annotation, kind: TaskKind) -> TaskInstance | None:
    if kind is TaskKind.TVG:
        return make_tvg_instance(annotation)
    if kind is TaskKind.VERB_COMPLETION:
        instances = make_vc_instances(annotation, "first")
        return instances[0] if instances else None
    if kind is TaskKind.ACTION_RECOGNITION:
        return make_ar_instance(annotation)
    return make_vd_instance(annotation)


def train(
    policy: ToyPolicy,
    annotations: Sequence[Annotation],
    config: GrpoConfig,
    tvg_prob: float,
    iters: int,
    seed: int = 0,
) -> TrainingLog:
    """Run the alternating-task loop for ``iters`` policy updates."""
    if not annotations:
        raise ValueError("empty training corpus")
    if not 0.0 <= tvg_prob <= 1.0:
        raise ValueError(f"tvg_prob must be in [0, 1], got {tvg_prob}")
    log = TrainingLog()
    for it in range(iters):
        rng_iter = np.random.default_rng(np.random.SeedSequence([seed, it]))
        annotation = annotations[int(rng_iter.integers(len(annotations)))]
        kind = sample_task_kind(rng_iter, tvg_prob)
        instance = _instance_for(annotation, kind)
        if instance is None:  # verbless query; synthetic corpora never hit this
            continue
        responses = []
        for i in range(config.group_size):
            rng_resp = np.random.default_rng(np.random.SeedSequence([seed, it, i]))
            responses.append(policy.generate(instance, 1, rng_resp)[0])
        rewards = [combined_reward(instance, r).r_total for r in responses]
        advantages = normalize_advantages(rewards, config.adv_epsilon)
        logp_old = [policy.log_prob(instance, r, "old") for r in responses]
        rollout = GroupRollout(
            instance=instance,
            responses=responses,
            rewards=rewards,
            advantages=advantages,
            logp_old=logp_old,
        )
        stats = grpo_step(policy, [rollout], config, it)
        log.steps.append(
            StepRecord(
                step=it,
                kind=kind.value,
                mean_reward=stats.mean_reward,
                objective=stats.objective,
                kl=stats.kl,
                grad_norm=stats.grad_norm,
            )
        )
    return log


def probe(policy: ToyPolicy, annotations: Sequence[Annotation]) -> EvalReport:
    """Greedy-decoding evaluation over all four task kinds."""
    instances: list[TaskInstance] = []
    for annotation in annotations:
        for kind in TaskKind:
            instance = _instance_for(annotation, kind)
            if instance is not None:
                instances.append(instance)
    responses = [policy.greedy(instance) for instance in instances]
    return score_run(instances, responses)


def invert_accuracy(report: EvalReport) -> float:
    """Mean probe accuracy over the three invert kinds."""
    values = [report.accuracy[k.value] for k in TaskKind if k is not TaskKind.TVG]
    return float(np.mean(values))


@dataclass(frozen=True)
class ToyLabConfig:
    corpus: SyntheticCorpusConfig = SyntheticCorpusConfig(n_videos=112, seed=11)
    heldout_videos: int = 64  # split off the same corpus, same embedding world
    grpo: GrpoConfig = GrpoConfig(
        group_size=8, kl_coeff=0.02, clip_epsilon=0.2, learning_rate=0.1, seed=0
    )
    bins: int = 8
    hidden: int = 10
    temperature: float = 1.0
    policy_seed: int = 5
    tvg_prob: float = 0.8
    iters: int = 600
    # Warmup plays the role of pretraining: it establishes verb understanding
    # before the branches diverge, so erosion (not just non-learning) is visible.
    warmup_iters: int = 400
    warmup_tvg_prob: float = 0.0
    branch_iters: int = 500
    train_seed: int = 101
    branch_seed: int = 202
    share_trunk: bool = True
    # Largest grounding regression the mixed run may show vs the pure run;
    # calibrated once on the default seed.
    miou_margin: float = 0.1


def toylab_config_from_mapping(values: dict[str, str]) -> ToyLabConfig:
    """Build a ToyLabConfig from parsed key=value pairs; unknown keys are errors."""
    from .. import config as cfg

    known = {
        "n_videos", "heldout_videos", "timesteps", "n_actions", "feature_dim",
        "noise_sigma", "span_min", "span_max", "corpus_seed",
        "group_size", "kl_coeff", "clip_epsilon", "adv_epsilon", "learning_rate",
        "ref_refresh_every", "seed",
        "bins", "hidden", "temperature", "policy_seed", "tvg_prob", "iters",
        "warmup_iters", "warmup_tvg_prob", "branch_iters", "train_seed",
        "branch_seed", "share_trunk", "miou_margin", "lexicon_path",
    }
    unknown = set(values) - known
    if unknown:
        raise cfg.ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = ToyLabConfig()
    corpus = SyntheticCorpusConfig(
        n_videos=cfg.get_int(values, "n_videos", base.corpus.n_videos),
        timesteps=cfg.get_int(values, "timesteps", base.corpus.timesteps),
        n_actions=cfg.get_int(values, "n_actions", base.corpus.n_actions),
        feature_dim=cfg.get_int(values, "feature_dim", base.corpus.feature_dim),
        noise_sigma=cfg.get_float(values, "noise_sigma", base.corpus.noise_sigma),
        span_length_range=(
            cfg.get_int(values, "span_min", base.corpus.span_length_range[0]),
            cfg.get_int(values, "span_max", base.corpus.span_length_range[1]),
        ),
        seed=cfg.get_int(values, "corpus_seed", base.corpus.seed),
    )
    clip_raw = cfg.get_optional(values, "clip_epsilon")
    refresh_raw = cfg.get_optional(values, "ref_refresh_every")
    grpo = GrpoConfig(
        group_size=cfg.get_int(values, "group_size", base.grpo.group_size),
        kl_coeff=cfg.get_float(values, "kl_coeff", base.grpo.kl_coeff),
        clip_epsilon=float(clip_raw) if clip_raw is not None
        else (base.grpo.clip_epsilon if "clip_epsilon" not in values else None),
        adv_epsilon=cfg.get_float(values, "adv_epsilon", base.grpo.adv_epsilon),
        learning_rate=cfg.get_float(values, "learning_rate", base.grpo.learning_rate),
        ref_refresh_every=int(refresh_raw) if refresh_raw is not None else None,
        seed=cfg.get_int(values, "seed", base.grpo.seed),
    )
    tvg_prob = cfg.get_float(values, "tvg_prob", base.tvg_prob)
    if not 0.0 <= tvg_prob <= 1.0:
        raise cfg.ConfigError(f"tvg_prob must be in [0, 1], got {tvg_prob}")
    return ToyLabConfig(
        corpus=corpus,
        heldout_videos=cfg.get_int(values, "heldout_videos", base.heldout_videos),
        grpo=grpo,
        bins=cfg.get_int(values, "bins", base.bins),
        hidden=cfg.get_int(values, "hidden", base.hidden),
        temperature=cfg.get_float(values, "temperature", base.temperature),
        policy_seed=cfg.get_int(values, "policy_seed", base.policy_seed),
        tvg_prob=tvg_prob,
        iters=cfg.get_int(values, "iters", base.iters),
        warmup_iters=cfg.get_int(values, "warmup_iters", base.warmup_iters),
        warmup_tvg_prob=cfg.get_float(values, "warmup_tvg_prob", base.warmup_tvg_prob),
        branch_iters=cfg.get_int(values, "branch_iters", base.branch_iters),
        train_seed=cfg.get_int(values, "train_seed", base.train_seed),
        branch_seed=cfg.get_int(values, "branch_seed", base.branch_seed),
        share_trunk=cfg.get_bool(values, "share_trunk", base.share_trunk),
        miou_margin=cfg.get_float(values, "miou_margin", base.miou_margin),
    )


@dataclass
class DegradationResult:
    warmup_probe: EvalReport
    pure_probe: EvalReport  # tvg_prob = 1.0 branch
    mixed_probe: EvalReport  # tvg_prob = 0.8 branch

    @property
    def pure_invert_accuracy(self) -> float:
        return invert_accuracy(self.pure_probe)

    @property
    def mixed_invert_accuracy(self) -> float:
        return invert_accuracy(self.mixed_probe)


def run_toy_training(config: ToyLabConfig, out_dir: str | Path) -> EvalReport:
    """Standard training run: writes training_log.jsonl, params.npz, and the
    probe report files into ``out_dir``. Deterministic under the config seeds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus, heldout = gen_synthetic_corpus(config.corpus).split(config.heldout_videos)
    policy = ToyPolicy(
        corpus,
        bins=config.bins,
        hidden=config.hidden,
        temperature=config.temperature,
        seed=config.policy_seed,
        share_trunk=config.share_trunk,
    )
    policy.register_videos(heldout)
    log = train(policy, corpus.annotations(), config.grpo, config.tvg_prob, config.iters,
                seed=config.train_seed)
    log.write(out / "training_log.jsonl")
    np.savez(out / "params.npz", params=policy.get_params())
    report = probe(policy, heldout.annotations())
    config_hash = hashlib.sha256(repr(config).encode()).hexdigest()[:12]
    report.metadata.update(
        {
            "run": "train-toy",
            "seed": str(config.train_seed),
            "tvg_prob": str(config.tvg_prob),
            "config_hash": config_hash,
        }
    )
    report.write(out, csv_too=True)
    return report


def degradation_experiment(config: ToyLabConfig = ToyLabConfig()) -> DegradationResult:
    """Shared warmup establishes both skills, then two branches continue from
    identical parameters: grounding-only (p=1.0) vs mixed (p=0.8). The probe
    difference isolates what grounding-only optimization does to the verb
    pathway through the shared trunk."""
    corpus, heldout = gen_synthetic_corpus(config.corpus).split(config.heldout_videos)
    annotations = corpus.annotations()
    policy = ToyPolicy(
        corpus,
        bins=config.bins,
        hidden=config.hidden,
        temperature=config.temperature,
        seed=config.policy_seed,
        share_trunk=config.share_trunk,
    )
    # The heldout probe must see heldout features; give the policy both corpora.
    policy.register_videos(heldout)
    train(policy, annotations, config.grpo, config.warmup_tvg_prob, config.warmup_iters,
          seed=config.train_seed)
    heldout_annotations = heldout.annotations()
    warmup_probe = probe(policy, heldout_annotations)

    pure = policy.clone()
    mixed = policy.clone()
    train(pure, annotations, config.grpo, 1.0, config.branch_iters, seed=config.branch_seed)
    train(mixed, annotations, config.grpo, config.tvg_prob, config.branch_iters,
          seed=config.branch_seed)
    return DegradationResult(
        warmup_probe=warmup_probe,
        pure_probe=probe(pure, heldout_annotations),
        mixed_probe=probe(mixed, heldout_annotations),
    )

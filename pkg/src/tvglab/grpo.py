"""Group-relative policy optimization kernel.

The update treats a group of G sampled responses to one prompt as its own
baseline: rewards are standardized within the group (mean/std), importance
ratios against the sampling-time policy weight each advantage, and a KL
penalty anchors the policy to a frozen reference. Ratio clipping is on by
default (epsilon 0.2) and can be disabled to recover the plain surrogate.

Everything here is analytic; ``finite_difference_gradient`` is the test
oracle that keeps the analytic gradients honest.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import TaskInstance


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    kl_coeff: float = 0.02
    clip_epsilon: float | None = 0.2  # None disables clipping
    adv_epsilon: float = 1e-8
    learning_rate: float = 0.1
    ref_refresh_every: int | None = None  # None: reference stays at initialization
    seed: int = 0

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if self.adv_epsilon <= 0:
            raise ValueError("adv_epsilon must be positive")
        if self.clip_epsilon is not None and self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be positive when enabled")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.ref_refresh_every is not None and self.ref_refresh_every < 1:
            raise ValueError("ref_refresh_every must be a positive step count")


@dataclass
class GroupRollout:
    """G responses to one instance with their rewards and log-probabilities."""

    instance: TaskInstance
    responses: list[str]
    rewards: list[float]
    advantages: list[float]
    logp_old: list[float]
    logp_new: list[float] = field(default_factory=list)
    logp_ref: list[float] | None = None


class PolicyHandle(ABC):
    """Minimal surface the kernel needs from a policy.

    Three parameter sets live behind one handle: the live parameters ("new"),
    the sampling-time snapshot ("old"), and the KL anchor ("ref").
    """

    @abstractmethod
    def generate(self, instance: TaskInstance, n: int, rng: np.random.Generator) -> list[str]: ...

    @abstractmethod
    def log_prob(self, instance: TaskInstance, response: str, which: str = "new") -> float: ...

    @abstractmethod
    def get_params(self) -> np.ndarray: ...

    @abstractmethod
    def set_params(self, params: np.ndarray) -> None: ...

    @abstractmethod
    def snapshot(self, which: str) -> None:
        """Copy the live parameters into the named snapshot ("old" or "ref")."""

    # Optional capabilities used by grpo_step and exact KL; the toy policy
    # implements them, a bridge-backed policy need not.
    #   log_prob_and_grad(instance, response) -> (float, np.ndarray)
    #   exact_kl_and_grad(instance) -> (float, np.ndarray)
    #   distribution(instance, which) -> (list[str], np.ndarray)


def normalize_advantages(rewards: Sequence[float], adv_epsilon: float = 1e-8) -> list[float]:
    """Within-group standardization (population std); a flat group is all zeros.

    Zeroing a near-constant group instead of dividing by a floored std avoids
    amplifying pure noise: a group with no reward spread carries no signal.
    """
    if len(rewards) < 2:
        raise ValueError("need at least 2 rewards to normalize a group")
    arr = np.asarray(rewards, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std())
    if std < adv_epsilon:
        return [0.0] * len(rewards)
    return [(r - mean) / std for r in arr.tolist()]


def _surrogate_terms(
    logp_new: Sequence[float],
    logp_old: Sequence[float],
    advantages: Sequence[float],
    clip_epsilon: float | None,
) -> tuple[float, list[float]]:
    """Return (objective, d_objective/d_logp_new per response)."""
    total = 0.0
    grads = []
    for lp_new, lp_old, adv in zip(logp_new, logp_old, advantages, strict=True):
        if not (math.isfinite(lp_new) and math.isfinite(lp_old)):
            raise FloatingPointError("non-finite log-probability in rollout")
        ratio = math.exp(lp_new - lp_old)
        plain = ratio * adv
        if clip_epsilon is None:
            total += plain
            grads.append(plain)  # d(ratio*A)/d(logp_new) = ratio*A
            continue
        clipped = min(max(ratio, 1.0 - clip_epsilon), 1.0 + clip_epsilon) * adv
        if plain <= clipped:
            total += plain
            grads.append(plain)
        else:
            total += clipped
            # The clamp is flat outside [1-eps, 1+eps]; inside it equals plain.
            inside = (1.0 - clip_epsilon) < ratio < (1.0 + clip_epsilon)
            grads.append(plain if inside else 0.0)
    return total, grads


def surrogate_objective(rollout: GroupRollout, config: GrpoConfig) -> float:
    """Sum over the group of ratio-weighted advantages (clipped per config)."""
    total, _ = _surrogate_terms(
        rollout.logp_new, rollout.logp_old, rollout.advantages, config.clip_epsilon
    )
    return total


class KlSupportError(ArithmeticError):
    """The reference assigns zero probability to a response the policy can emit."""


def kl_penalty(
    policy: PolicyHandle,
    instance: TaskInstance,
    mode: str = "exact",
    samples: Sequence[str] | None = None,
) -> float:
    """KL(new || ref) for one instance.

    exact: sums p*log(p/q) over the enumerable response support (requires the
    policy's ``distribution`` capability). sampled: averages the non-negative
    per-sample estimator r - log r - 1 with r = q(o)/p(o) over given samples,
    which is unbiased for the KL under o ~ p.
    """
    if mode == "exact":
        if not hasattr(policy, "distribution"):
            raise TypeError("exact KL needs an enumerable policy distribution")
        responses, p_new = policy.distribution(instance, "new")
        _, p_ref = policy.distribution(instance, "ref")
        total = 0.0
        for resp, p, q in zip(responses, p_new, p_ref):
            if p <= 0.0:
                continue
            if q <= 0.0:
                raise KlSupportError(f"reference has zero probability for response {resp!r}")
            total += p * math.log(p / q)
        return total
    if mode == "sampled":
        if not samples:
            raise ValueError("sampled KL needs at least one sample")
        total = 0.0
        for response in samples:
            lp_new = policy.log_prob(instance, response, "new")
            lp_ref = policy.log_prob(instance, response, "ref")
            r = math.exp(lp_ref - lp_new)
            total += r - (lp_ref - lp_new) - 1.0
        return total / len(samples)
    raise ValueError(f"unknown KL mode {mode!r}")


@dataclass(frozen=True)
class StepStats:
    objective: float
    mean_reward: float
    kl: float
    grad_norm: float


def objective_and_gradient(
    policy: PolicyHandle, batch: Sequence[GroupRollout], config: GrpoConfig
) -> tuple[float, np.ndarray, float]:
    """Full objective mean(surrogate) - kl_coeff * mean(KL) and its gradient.

    logp_new is recomputed at the live parameters (the stored values are the
    sampling-time ones); logp_old is taken from the rollout as fixed data.
    """
    if not batch:
        raise ValueError("empty rollout batch")
    if not hasattr(policy, "log_prob_and_grad"):
        raise TypeError("policy does not expose analytic log-prob gradients")
    grad = np.zeros_like(policy.get_params())
    objective = 0.0
    kl_total = 0.0
    for rollout in batch:
        logp_new = []
        grads_new = []
        for response in rollout.responses:
            lp, g = policy.log_prob_and_grad(rollout.instance, response)
            logp_new.append(lp)
            grads_new.append(g)
        total, dlogp = _surrogate_terms(
            logp_new, rollout.logp_old, rollout.advantages, config.clip_epsilon
        )
        objective += total
        for coeff, g in zip(dlogp, grads_new):
            if coeff != 0.0:
                grad += coeff * g
        if config.kl_coeff != 0.0:
            if not hasattr(policy, "exact_kl_and_grad"):
                raise TypeError("policy does not expose an exact KL gradient")
            kl, kl_grad = policy.exact_kl_and_grad(rollout.instance)
            kl_total += kl
            grad -= config.kl_coeff * kl_grad
    n = len(batch)
    objective = objective / n - config.kl_coeff * kl_total / n
    return objective, grad / n, kl_total / n


def grpo_step(
    policy: PolicyHandle,
    batch: Sequence[GroupRollout],
    config: GrpoConfig,
    step_index: int = 0,
) -> StepStats:
    """One gradient-ascent step on the KL-regularized group objective.

    The old-policy snapshot is refreshed after every step (old = previous
    step's parameters); the reference refreshes every ``ref_refresh_every``
    steps, or never when unset.
    """
    objective, grad, kl = objective_and_gradient(policy, batch, config)
    policy.set_params(policy.get_params() + config.learning_rate * grad)
    policy.snapshot("old")
    if config.ref_refresh_every is not None and (step_index + 1) % config.ref_refresh_every == 0:
        policy.snapshot("ref")
    rewards = [r for rollout in batch for r in rollout.rewards]
    return StepStats(
        objective=objective,
        mean_reward=float(np.mean(rewards)),
        kl=kl,
        grad_norm=float(np.linalg.norm(grad)),
    )


def finite_difference_gradient(
    policy: PolicyHandle, objective: Callable[[], float], h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of ``objective`` w.r.t. the policy parameters.

    O(2 * n_params) objective evaluations; intended for toy-sized parameter
    vectors as an independent check on analytic gradients.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    theta = policy.get_params().copy()
    grad = np.zeros_like(theta)
    try:
        for j in range(theta.size):
            bumped = theta.copy()
            bumped[j] = theta[j] + h
            policy.set_params(bumped)
            f_plus = objective()
            bumped[j] = theta[j] - h
            policy.set_params(bumped)
            f_minus = objective()
            grad[j] = (f_plus - f_minus) / (2.0 * h)
    finally:
        policy.set_params(theta)
    return grad

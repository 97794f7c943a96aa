import math

import numpy as np
import pytest

from tvglab.core import Segment, TaskInstance, TaskKind, TvgTarget
from tvglab.grpo import (
    GroupRollout,
    GrpoConfig,
    KlSupportError,
    PolicyHandle,
    finite_difference_gradient,
    grpo_step,
    kl_penalty,
    normalize_advantages,
    objective_and_gradient,
    surrogate_objective,
)


def dummy_instance():
    return TaskInstance(
        kind=TaskKind.TVG,
        video_ref="v",
        clip=Segment(0.0, 10.0),
        prompt="p",
        target=TvgTarget(Segment(2.0, 6.0), 10.0),
        source_annotation_id="a",
    )


class TestNormalizeAdvantages:
    def test_binary_group(self):
        assert normalize_advantages([1, 0, 1, 0]) == [1.0, -1.0, 1.0, -1.0]

    def test_constant_group_is_exactly_zero(self):
        for c in (0.0, 1.0, -3.7):
            assert normalize_advantages([c, c, c, c]) == [0.0, 0.0, 0.0, 0.0]

    def test_scaled_binary_group(self):
        assert normalize_advantages([2, 0, 2, 0]) == [1.0, -1.0, 1.0, -1.0]

    def test_too_small_group(self):
        with pytest.raises(ValueError):
            normalize_advantages([1.0])

    def test_shift_and_scale_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            g = int(rng.integers(2, 17))
            rewards = rng.uniform(0, 1, size=g)
            if rewards.std() < 1e-3:
                continue
            base = np.array(normalize_advantages(rewards.tolist()))
            shifted = np.array(normalize_advantages((rewards + 3.5).tolist()))
            scaled = np.array(normalize_advantages((rewards * 4.0).tolist()))
            assert np.max(np.abs(base - shifted)) <= 1e-12
            assert np.max(np.abs(base - scaled)) <= 1e-12
            assert abs(sum(normalize_advantages(rewards.tolist()))) <= 1e-10


class TestSurrogate:
    def make_rollout(self, logp_new, logp_old, advantages):
        n = len(logp_new)
        return GroupRollout(
            instance=dummy_instance(),
            responses=["r"] * n,
            rewards=[0.0] * n,
            advantages=advantages,
            logp_old=logp_old,
            logp_new=logp_new,
        )

    def test_identical_policies_zero_sum_advantages(self):
        rollout = self.make_rollout([-1.0, -2.0], [-1.0, -2.0], [1.0, -1.0])
        config = GrpoConfig(group_size=2, clip_epsilon=None)
        assert surrogate_objective(rollout, config) == pytest.approx(0.0)

    def test_unclipped_ratio_arithmetic(self):
        # ratios [2, 1], A = [1, -1] -> 2*1 + 1*(-1) = 1
        rollout = self.make_rollout([math.log(2.0), 0.0], [0.0, 0.0], [1.0, -1.0])
        config = GrpoConfig(group_size=2, clip_epsilon=None)
        assert surrogate_objective(rollout, config) == pytest.approx(1.0)

    def test_clipped_ratio_arithmetic(self):
        # ratios [2, 1], A = [1, -1], eps = 0.2 -> min(2, 1.2)*1 + (-1) = 0.2
        rollout = self.make_rollout([math.log(2.0), 0.0], [0.0, 0.0], [1.0, -1.0])
        config = GrpoConfig(group_size=2, clip_epsilon=0.2)
        assert surrogate_objective(rollout, config) == pytest.approx(0.2)

    def test_non_finite_logp_raises(self):
        rollout = self.make_rollout([float("nan"), 0.0], [0.0, 0.0], [1.0, -1.0])
        with pytest.raises(FloatingPointError):
            surrogate_objective(rollout, GrpoConfig(group_size=2))


class TwoOutcomePolicy(PolicyHandle):
    """Enumerable two-outcome policy: p(new) = (theta, 1-theta) fixed tables."""

    def __init__(self, p_new, p_ref):
        self.p = {"new": list(p_new), "old": list(p_new), "ref": list(p_ref)}
        self.responses = ["a", "b"]

    def generate(self, instance, n, rng):
        return [self.responses[i] for i in rng.choice(2, size=n, p=self.p["new"])]

    def log_prob(self, instance, response, which="new"):
        return math.log(self.p[which][self.responses.index(response)])

    def distribution(self, instance, which="new"):
        return self.responses, np.asarray(self.p[which])

    def get_params(self):
        return np.array(self.p["new"])

    def set_params(self, params):
        self.p["new"] = params.tolist()

    def snapshot(self, which):
        self.p[which] = list(self.p["new"])


class TestKlPenalty:
    def test_identical_distributions_zero_both_modes(self):
        policy = TwoOutcomePolicy([0.5, 0.5], [0.5, 0.5])
        assert kl_penalty(policy, dummy_instance(), "exact") == pytest.approx(0.0, abs=1e-15)
        sampled = kl_penalty(policy, dummy_instance(), "sampled", samples=["a", "b", "a"])
        assert sampled == pytest.approx(0.0, abs=1e-15)

    def test_closed_form_hand_value(self):
        # 0.75*ln(1.5) + 0.25*ln(0.5) = 0.1308120... nats
        policy = TwoOutcomePolicy([0.75, 0.25], [0.5, 0.5])
        kl = kl_penalty(policy, dummy_instance(), "exact")
        assert abs(kl - 0.1308120360) <= 1e-6

    def test_missing_ref_support_raises(self):
        policy = TwoOutcomePolicy([0.5, 0.5], [1.0, 0.0])
        with pytest.raises(KlSupportError):
            kl_penalty(policy, dummy_instance(), "exact")

    def test_sampled_estimator_non_negative_terms(self):
        policy = TwoOutcomePolicy([0.75, 0.25], [0.5, 0.5])
        for s in ("a", "b"):
            assert kl_penalty(policy, dummy_instance(), "sampled", samples=[s]) >= 0.0

    def test_sampled_estimator_converges_to_exact(self):
        policy = TwoOutcomePolicy([0.75, 0.25], [0.5, 0.5])
        exact = kl_penalty(policy, dummy_instance(), "exact")
        rng = np.random.default_rng(0)
        errors = []
        for n in (100, 1000, 10_000):
            samples = policy.generate(dummy_instance(), n, rng)
            estimate = kl_penalty(policy, dummy_instance(), "sampled", samples=samples)
            errors.append(abs(estimate - exact))
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] <= 2e-3


class QuadraticPolicy(PolicyHandle):
    def __init__(self, theta):
        self.theta = np.asarray(theta, dtype=float)

    def generate(self, instance, n, rng):
        raise NotImplementedError

    def log_prob(self, instance, response, which="new"):
        raise NotImplementedError

    def get_params(self):
        return self.theta.copy()

    def set_params(self, params):
        self.theta = params.copy()

    def snapshot(self, which):
        pass


class TestFiniteDifference:
    def test_quadratic_gradient(self):
        policy = QuadraticPolicy([1.0, 2.0])
        grad = finite_difference_gradient(policy, lambda: float(policy.theta @ policy.theta), h=1e-5)
        assert np.allclose(grad, [2.0, 4.0], atol=1e-8)

    def test_restores_parameters(self):
        policy = QuadraticPolicy([1.0, 2.0])
        finite_difference_gradient(policy, lambda: float(policy.theta.sum()), h=1e-5)
        assert np.array_equal(policy.get_params(), [1.0, 2.0])

    def test_invalid_h(self):
        policy = QuadraticPolicy([1.0])
        with pytest.raises(ValueError):
            finite_difference_gradient(policy, lambda: 0.0, h=0.0)

    def test_truncation_error_grows_with_h(self):
        # cubic: exact derivative 3*theta^2; central differences err ~ h^2
        policy = QuadraticPolicy([1.0])
        f = lambda: float(policy.theta[0] ** 3)
        err_small = abs(finite_difference_gradient(policy, f, h=1e-5)[0] - 3.0)
        err_large = abs(finite_difference_gradient(policy, f, h=0.5)[0] - 3.0)
        assert err_small < 1e-8
        assert err_large > 1e-2
        assert err_large > err_small


def toy_setup(seed, n_videos=6):
    from tvglab.invert import make_ar_instance, make_tvg_instance
    from tvglab.toy import SyntheticCorpusConfig, ToyPolicy, gen_synthetic_corpus

    corpus = gen_synthetic_corpus(SyntheticCorpusConfig(n_videos=n_videos, seed=seed))
    policy = ToyPolicy(corpus, bins=8, hidden=5, seed=seed + 1)
    annotations = corpus.annotations()
    instances = [make_tvg_instance(annotations[0]), make_ar_instance(annotations[1])]
    return policy, instances


def build_batch(policy, instances, config, seed, perturb=0.0):
    """Sample rollouts, then optionally move the live params off the snapshot so
    importance ratios are not trivially 1."""
    rng = np.random.default_rng(seed)
    policy.snapshot("old")
    batch = []
    for instance in instances:
        responses = policy.generate(instance, config.group_size, rng)
        rewards = [float(r) for r in rng.uniform(0, 2, size=config.group_size)]
        advantages = normalize_advantages(rewards, config.adv_epsilon)
        logp_old = [policy.log_prob(instance, r, "old") for r in responses]
        batch.append(
            GroupRollout(
                instance=instance,
                responses=responses,
                rewards=rewards,
                advantages=advantages,
                logp_old=logp_old,
            )
        )
    if perturb:
        theta = policy.get_params()
        policy.set_params(theta + rng.normal(0.0, perturb, size=theta.shape))
    return batch


class TestObjectiveGradient:
    @pytest.mark.parametrize("clip", [None, 0.2])
    def test_matches_finite_differences(self, clip):
        policy, instances = toy_setup(seed=3)
        config = GrpoConfig(group_size=6, kl_coeff=0.05, clip_epsilon=clip)
        batch = build_batch(policy, instances, config, seed=9, perturb=0.05)

        _, grad, _ = objective_and_gradient(policy, batch, config)

        def objective():
            total = 0.0
            for rollout in batch:
                logp_new = [policy.log_prob(rollout.instance, resp)
                            for resp in rollout.responses]
                rollout_copy = GroupRollout(
                    instance=rollout.instance,
                    responses=rollout.responses,
                    rewards=rollout.rewards,
                    advantages=rollout.advantages,
                    logp_old=rollout.logp_old,
                    logp_new=logp_new,
                )
                total += surrogate_objective(rollout_copy, config)
                total -= config.kl_coeff * kl_penalty(policy, rollout.instance, "exact")
            return total / len(batch)

        fd = finite_difference_gradient(policy, objective, h=1e-5)
        rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel <= 1e-4

    def test_reinforce_identity_when_ratios_one(self):
        # kl off, clip off, old == new: gradient is sum_i A_i * grad logp_i
        policy, instances = toy_setup(seed=5)
        config = GrpoConfig(group_size=6, kl_coeff=0.0, clip_epsilon=None)
        batch = build_batch(policy, instances, config, seed=11, perturb=0.0)
        _, grad, _ = objective_and_gradient(policy, batch, config)
        expected = np.zeros_like(grad)
        for rollout in batch:
            for adv, resp in zip(rollout.advantages, rollout.responses):
                _, g = policy.log_prob_and_grad(rollout.instance, resp)
                expected += adv * g
        expected /= len(batch)
        assert np.allclose(grad, expected, atol=1e-12)


class TestGrpoStep:
    def test_constant_rewards_leave_only_kl_pressure(self):
        policy, instances = toy_setup(seed=7)
        config = GrpoConfig(group_size=4, kl_coeff=0.1, clip_epsilon=0.2, learning_rate=0.5)
        rng = np.random.default_rng(1)
        batch = []
        for instance in instances:
            responses = policy.generate(instance, 4, rng)
            rewards = [1.0, 1.0, 1.0, 1.0]
            batch.append(
                GroupRollout(
                    instance=instance,
                    responses=responses,
                    rewards=rewards,
                    advantages=normalize_advantages(rewards),
                    logp_old=[policy.log_prob(instance, r, "old") for r in responses],
                )
            )
        # new == ref here, so the KL term is zero too: parameters must not move
        before = policy.get_params()
        stats = grpo_step(policy, batch, config)
        assert np.allclose(policy.get_params(), before, atol=1e-12)
        assert stats.mean_reward == 1.0
        assert stats.grad_norm == pytest.approx(0.0, abs=1e-12)

    def test_step_moves_parameters_and_refreshes_old(self):
        policy, instances = toy_setup(seed=9)
        config = GrpoConfig(group_size=6, kl_coeff=0.0, clip_epsilon=0.2, learning_rate=0.2)
        batch = build_batch(policy, instances, config, seed=2)
        before = policy.get_params()
        grpo_step(policy, batch, config)
        after = policy.get_params()
        assert not np.allclose(before, after)
        # old snapshot now matches the updated parameters
        for instance in instances:
            responses, _ = policy.distribution(instance, "new")
            r = responses[0]
            assert policy.log_prob(instance, r, "old") == pytest.approx(
                policy.log_prob(instance, r, "new")
            )

    def test_ref_refresh_schedule(self):
        policy, instances = toy_setup(seed=13)
        config = GrpoConfig(group_size=4, kl_coeff=0.0, learning_rate=0.3, ref_refresh_every=1)
        batch = build_batch(policy, instances, config, seed=3)
        grpo_step(policy, batch, config, step_index=0)
        instance = instances[0]
        responses, _ = policy.distribution(instance, "new")
        assert policy.log_prob(instance, responses[0], "ref") == pytest.approx(
            policy.log_prob(instance, responses[0], "new")
        )

    def test_empty_batch_rejected(self):
        policy, _ = toy_setup(seed=15)
        with pytest.raises(ValueError):
            grpo_step(policy, [], GrpoConfig())


class TestConfigValidation:
    def test_group_size_floor(self):
        with pytest.raises(ValueError):
            GrpoConfig(group_size=1)

    def test_adv_epsilon_positive(self):
        with pytest.raises(ValueError):
            GrpoConfig(adv_epsilon=0.0)

    def test_clip_epsilon_positive_when_set(self):
        with pytest.raises(ValueError):
            GrpoConfig(clip_epsilon=-0.1)

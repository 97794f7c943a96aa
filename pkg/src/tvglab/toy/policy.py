"""A small parametric policy over the synthetic corpus.

Architecture: a shared linear-tanh trunk feeds three softmax heads.

* Grounding reads per-bin pooled features through the trunk twice, as forward
  differences (bin minus previous bin) for the start head and backward
  differences for the end head, so a span edge shows up as a content jump in
  exactly one bin. Start and end bins are sampled from the two softmaxes
  restricted to start <= end, with the truncation constant folded into the
  exact log-probability.
* Verb tasks mean-pool the clip through the same trunk into a softmax over the
  action vocabulary.

Every response distribution is exactly enumerable (B*(B+1)/2 segment pairs or
n_actions verbs), which makes log-probabilities, KL divergences, and their
parameter gradients closed-form. Responses are always rendered inside the
think/answer template, so format reward is 1 by construction and training
signal isolates the task rewards.

The ``share_trunk=False`` ablation gives the verb head its own trunk copy;
grounding updates then cannot touch the verb pathway.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from ..core import Segment, TaskInstance, TaskKind
from ..grpo import PolicyHandle
from ..rewards import parse_response
from ..verbs import tokenize
from .synth import VERB_FORMS, SyntheticCorpus

_THINK_TEXT = {
    TaskKind.TVG: "scan the video for the described event",
    TaskKind.VERB_COMPLETION: "recall the action shown in the clip",
    TaskKind.ACTION_RECOGNITION: "name the action shown in the clip",
    TaskKind.VIDEO_DESCRIPTION: "describe the activity shown in the clip",
}


@dataclass
class ToyPolicyParams:
    trunk: np.ndarray  # feature_dim x hidden
    head_start: np.ndarray  # hidden x bins
    head_end: np.ndarray  # hidden x bins
    head_verb: np.ndarray  # hidden x n_actions
    temperature: float = 1.0
    trunk_verb: np.ndarray | None = None  # present only for the isolated-trunk ablation

    def clone(self) -> "ToyPolicyParams":
        return ToyPolicyParams(
            trunk=self.trunk.copy(),
            head_start=self.head_start.copy(),
            head_end=self.head_end.copy(),
            head_verb=self.head_verb.copy(),
            temperature=self.temperature,
            trunk_verb=None if self.trunk_verb is None else self.trunk_verb.copy(),
        )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


class ToyPolicy(PolicyHandle):
    def __init__(
        self,
        corpus: SyntheticCorpus,
        bins: int,
        hidden: int,
        temperature: float = 1.0,
        seed: int = 0,
        share_trunk: bool = True,
        init_scale: float = 0.3,
    ):
        cfg = corpus.config
        if cfg.timesteps % bins != 0:
            raise ValueError("bins must divide timesteps evenly")
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.bins = bins
        self.bin_width = cfg.timesteps // bins  # timesteps == seconds per bin
        self.hidden = hidden
        self.n_actions = cfg.n_actions
        self.share_trunk = share_trunk
        self._videos = {v.video_ref: v for v in corpus.videos}
        self._verb_forms = VERB_FORMS[: cfg.n_actions]
        self._surface_to_action = {}
        for a, forms in enumerate(self._verb_forms):
            for form in forms:
                self._surface_to_action.setdefault(form, a)

        rng = np.random.default_rng(seed)
        d = cfg.feature_dim
        params = ToyPolicyParams(
            trunk=rng.normal(0.0, init_scale / math.sqrt(d), size=(d, hidden)),
            head_start=rng.normal(0.0, init_scale / math.sqrt(hidden), size=(hidden, bins)),
            head_end=rng.normal(0.0, init_scale / math.sqrt(hidden), size=(hidden, bins)),
            head_verb=rng.normal(0.0, init_scale / math.sqrt(hidden), size=(hidden, cfg.n_actions)),
            temperature=temperature,
            trunk_verb=None
            if share_trunk
            else rng.normal(0.0, init_scale / math.sqrt(d), size=(d, hidden)),
        )
        self._params = {"new": params, "old": params.clone(), "ref": params.clone()}

    # --- parameter vector access -------------------------------------------

    def _array_fields(self) -> list[str]:
        fields = ["trunk"]
        if not self.share_trunk:
            fields.append("trunk_verb")
        fields += ["head_start", "head_end", "head_verb"]
        return fields

    def get_params(self) -> np.ndarray:
        p = self._params["new"]
        return np.concatenate([getattr(p, name).ravel() for name in self._array_fields()])

    def set_params(self, params: np.ndarray) -> None:
        p = self._params["new"]
        offset = 0
        for name in self._array_fields():
            arr = getattr(p, name)
            arr[...] = params[offset : offset + arr.size].reshape(arr.shape)
            offset += arr.size
        if offset != params.size:
            raise ValueError(f"expected {offset} parameters, got {params.size}")

    def _zeros_like_params(self) -> dict[str, np.ndarray]:
        p = self._params["new"]
        return {name: np.zeros_like(getattr(p, name)) for name in self._array_fields()}

    def _flatten_grad(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[name].ravel() for name in self._array_fields()])

    def snapshot(self, which: str) -> None:
        if which not in ("old", "ref"):
            raise ValueError("snapshot target must be 'old' or 'ref'")
        self._params[which] = self._params["new"].clone()

    def register_videos(self, corpus: SyntheticCorpus) -> None:
        """Make additional (e.g. heldout) videos addressable by reference."""
        for video in corpus.videos:
            self._videos[video.video_ref] = video

    # --- forward passes ------------------------------------------------------

    def _video(self, instance: TaskInstance):
        try:
            return self._videos[instance.video_ref]
        except KeyError:
            raise KeyError(f"unknown synthetic video {instance.video_ref!r}") from None

    def _tvg_internals(self, instance: TaskInstance, which: str) -> dict:
        p = self._params[which]
        video = self._video(instance)
        B, w = self.bins, self.bin_width
        X = video.features.reshape(B, w, -1).mean(axis=1)  # per-bin pooled content
        zeros = np.zeros((1, X.shape[1]))
        d_start = X - np.vstack([zeros, X[:-1]])  # content jump entering each bin
        d_end = X - np.vstack([X[1:], zeros])  # content drop after each bin
        h_start = np.tanh(d_start @ p.trunk)  # B x H
        h_end = np.tanh(d_end @ p.trunk)
        u = np.sum(h_start * p.head_start.T, axis=1) / p.temperature
        v = np.sum(h_end * p.head_end.T, axis=1) / p.temperature
        ps, pe = _softmax(u), _softmax(v)
        tail = np.cumsum(pe[::-1])[::-1]  # tail[b] = sum_{e >= b} pe[e]
        head = np.cumsum(ps)  # head[b] = sum_{s <= b} ps[s]
        z_trunc = float(np.sum(ps * tail))  # mass of the start <= end region
        joint = np.triu(np.outer(ps, pe)) / z_trunc
        return {
            "params": p,
            "d_start": d_start,
            "d_end": d_end,
            "h_start": h_start,
            "h_end": h_end,
            "ps": ps,
            "pe": pe,
            "tail": tail,
            "head": head,
            "z": z_trunc,
            "joint": joint,
        }

    def _verb_internals(self, instance: TaskInstance, which: str) -> dict:
        p = self._params[which]
        video = self._video(instance)
        t0 = int(round(instance.clip.start_s))
        t1 = int(round(instance.clip.end_s))
        t0 = max(0, min(t0, video.features.shape[0] - 1))
        t1 = max(t0 + 1, min(t1, video.features.shape[0]))
        xbar = video.features[t0:t1].mean(axis=0)
        trunk = p.trunk_verb if p.trunk_verb is not None else p.trunk
        h = np.tanh(xbar @ trunk)
        z = (h @ p.head_verb) / p.temperature
        probs = _softmax(z)
        return {"params": p, "xbar": xbar, "h": h, "probs": probs}

    # --- rendering and parsing ------------------------------------------------

    def _render(self, instance: TaskInstance, outcome) -> str:
        think = _THINK_TEXT[instance.kind]
        if instance.kind is TaskKind.TVG:
            s, e = outcome
            start = float(s * self.bin_width)
            end = float((e + 1) * self.bin_width)
            answer = f"{start:.1f} to {end:.1f}"
        else:
            _, s3, past, ing = self._verb_forms[outcome]
            if instance.kind is TaskKind.VERB_COMPLETION:
                answer = s3
            elif instance.kind is TaskKind.ACTION_RECOGNITION:
                answer = past
            else:
                answer = f"someone is {ing}"
        return f"<think>{think}</think> <answer>{answer}</answer>"

    def _parse_outcome(self, instance: TaskInstance, response: str):
        if instance.kind is TaskKind.TVG:
            segment = parse_response(response).answer_segment
            if segment is None:
                raise ValueError(f"response has no parsable segment: {response!r}")
            s = segment.start_s / self.bin_width
            e = segment.end_s / self.bin_width - 1.0
            si, ei = int(round(s)), int(round(e))
            if (
                abs(s - si) > 1e-9
                or abs(e - ei) > 1e-9
                or not (0 <= si <= ei < self.bins)
            ):
                raise ValueError(f"segment off the bin grid: {response!r}")
            return si, ei
        answer = parse_response(response).answer_text or response
        for token in tokenize(answer):
            action = self._surface_to_action.get(token)
            if action is not None:
                return action
        raise ValueError(f"response names no known action verb: {response!r}")

    # --- PolicyHandle surface ---------------------------------------------------

    def generate(self, instance: TaskInstance, n: int, rng: np.random.Generator) -> list[str]:
        responses, probs = self.distribution(instance, "new")
        draws = rng.choice(len(responses), size=n, p=probs)
        return [responses[int(i)] for i in draws]

    def act(self, instance: TaskInstance, rng: np.random.Generator) -> tuple[str, float]:
        """Sample one templated response with its exact log-probability."""
        response = self.generate(instance, 1, rng)[0]
        return response, self.log_prob(instance, response, "new")

    def greedy(self, instance: TaskInstance) -> str:
        responses, probs = self.distribution(instance, "new")
        return responses[int(np.argmax(probs))]

    def distribution(self, instance: TaskInstance, which: str = "new"):
        """All renderable responses with their exact probabilities."""
        if instance.kind is TaskKind.TVG:
            internals = self._tvg_internals(instance, which)
            joint = internals["joint"]
            responses, probs = [], []
            for s in range(self.bins):
                for e in range(s, self.bins):
                    responses.append(self._render(instance, (s, e)))
                    probs.append(joint[s, e])
            return responses, np.asarray(probs)
        internals = self._verb_internals(instance, which)
        responses = [self._render(instance, a) for a in range(self.n_actions)]
        return responses, internals["probs"]

    def log_prob(self, instance: TaskInstance, response: str, which: str = "new") -> float:
        outcome = self._parse_outcome(instance, response)
        if instance.kind is TaskKind.TVG:
            internals = self._tvg_internals(instance, which)
            s, e = outcome
            return float(
                math.log(internals["ps"][s])
                + math.log(internals["pe"][e])
                - math.log(internals["z"])
            )
        internals = self._verb_internals(instance, which)
        return float(math.log(internals["probs"][outcome]))

    # --- analytic gradients -----------------------------------------------------

    def _tvg_param_grad(self, internals: dict, gu: np.ndarray, gv: np.ndarray) -> np.ndarray:
        """Backpropagate logit-space gradients (gu, gv) to the parameter vector."""
        p = internals["params"]
        tau = p.temperature
        grads = self._zeros_like_params()
        grads["head_start"] += internals["h_start"].T * gu / tau
        grads["head_end"] += internals["h_end"].T * gv / tau
        gs = (gu[:, None] * p.head_start.T / tau) * (1.0 - internals["h_start"] ** 2)
        ge = (gv[:, None] * p.head_end.T / tau) * (1.0 - internals["h_end"] ** 2)
        grads["trunk"] += internals["d_start"].T @ gs + internals["d_end"].T @ ge
        return self._flatten_grad(grads)

    def _verb_param_grad(self, internals: dict, gz: np.ndarray) -> np.ndarray:
        p = internals["params"]
        tau = p.temperature
        grads = self._zeros_like_params()
        grads["head_verb"] += np.outer(internals["h"], gz) / tau
        dh = (p.head_verb @ gz) / tau * (1.0 - internals["h"] ** 2)
        trunk_key = "trunk_verb" if not self.share_trunk else "trunk"
        grads[trunk_key] += np.outer(internals["xbar"], dh)
        return self._flatten_grad(grads)

    def log_prob_and_grad(self, instance: TaskInstance, response: str):
        outcome = self._parse_outcome(instance, response)
        if instance.kind is TaskKind.TVG:
            internals = self._tvg_internals(instance, "new")
            s, e = outcome
            ps, pe = internals["ps"], internals["pe"]
            z = internals["z"]
            logp = math.log(ps[s]) + math.log(pe[e]) - math.log(z)
            # d logp / d u_b = 1[b=s] - ps[b] * tail[b] / z (and symmetrically for v):
            # the usual softmax pullback plus the truncation constant's own logit
            # dependence through z.
            gu = -ps * internals["tail"] / z
            gu[s] += 1.0
            gv = -pe * internals["head"] / z
            gv[e] += 1.0
            return float(logp), self._tvg_param_grad(internals, gu, gv)
        internals = self._verb_internals(instance, "new")
        probs = internals["probs"]
        gz = -probs.copy()
        gz[outcome] += 1.0
        return float(math.log(probs[outcome])), self._verb_param_grad(internals, gz)

    def exact_kl_and_grad(self, instance: TaskInstance):
        """KL(new || ref) over the enumerable support, with its gradient in the
        live parameters. Uses sum_o p grad(logp) log(p/q), the covariance form."""
        if instance.kind is TaskKind.TVG:
            new = self._tvg_internals(instance, "new")
            ref = self._tvg_internals(instance, "ref")
            mask = np.triu(np.ones((self.bins, self.bins), dtype=bool))
            log_ratio = np.zeros_like(new["joint"])
            log_ratio[mask] = np.log(new["joint"][mask] / ref["joint"][mask])
            weighted = new["joint"] * log_ratio  # zero below the diagonal
            kl = float(weighted.sum())
            gu = weighted.sum(axis=1) - (new["ps"] * new["tail"] / new["z"]) * kl
            gv = weighted.sum(axis=0) - (new["pe"] * new["head"] / new["z"]) * kl
            return kl, self._tvg_param_grad(new, gu, gv)
        new = self._verb_internals(instance, "new")
        ref = self._verb_internals(instance, "ref")
        log_ratio = np.log(new["probs"] / ref["probs"])
        kl = float((new["probs"] * log_ratio).sum())
        gz = new["probs"] * (log_ratio - kl)
        return kl, self._verb_param_grad(new, gz)

    def clone(self) -> "ToyPolicy":
        return copy.deepcopy(self)

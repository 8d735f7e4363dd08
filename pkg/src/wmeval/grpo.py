"""Group-relative policy optimization over a synthetic response policy.

The policy is a product of independent categorical factors (format
validity, declared category, quality bucket, robustness flags, security
level, response length bucket). Samples are rendered through the real
serializer and scored by the real reward, so the optimization exercises
the same code path as live responses. Gradients are exact, which keeps
the whole loop testable against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .response_format import (CATEGORIES, CATEGORY_RESIDUAL, ParsedResponse,
                              serialize)
from .reward import GroundTruth, RewardConfig, total_reward

QUALITY_GRID = np.round(np.linspace(1.0, 5.0, 41), 2)
LENGTH_GRID = np.arange(750, 951, 25)

F_FORMAT = "format"
F_CATEGORY = "category"
F_RES_QUALITY = "res_quality"
F_FLAG_JPEG = "flag_jpeg"
F_FLAG_GAUSSIAN = "flag_gaussian"
F_FLAG_FILTER = "flag_filter"
F_SEM_QUALITY = "sem_quality"
F_SEM_SECURITY = "sem_security"
F_LENGTH = "length"

FACTORS = (F_FORMAT, F_CATEGORY, F_RES_QUALITY, F_FLAG_JPEG, F_FLAG_GAUSSIAN,
           F_FLAG_FILTER, F_SEM_QUALITY, F_SEM_SECURITY, F_LENGTH)

# emitted when the format factor draws "invalid": think block never closes
MALFORMED_TEXT = "<think>this response drops the required closing tags"

_SIGMA_GUARD = 1e-8
_THINK_FILLER = "the residual grid and the latent trace were compared against the reference behaviour "


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    return z - math.log(np.exp(z).sum())


@dataclass(frozen=True)
class SyntheticPolicy:
    """Factored categorical policy over response fields."""

    logits: dict
    quality_grid: np.ndarray = field(default_factory=lambda: QUALITY_GRID.copy())
    length_grid: np.ndarray = field(default_factory=lambda: LENGTH_GRID.copy())

    def __post_init__(self):
        qg = np.asarray(self.quality_grid, dtype=np.float64)
        lg = np.asarray(self.length_grid, dtype=np.int64)
        if qg.ndim != 1 or qg.size < 2 or lg.ndim != 1 or lg.size < 1:
            raise ShapeError("grids must be 1-D with at least one entry")
        object.__setattr__(self, "quality_grid", qg)
        object.__setattr__(self, "length_grid", lg)
        sizes = self.factor_sizes(qg.size, lg.size)
        if set(self.logits) != set(FACTORS):
            raise ParameterError("policy must carry logits for every factor")
        clean = {}
        for name in FACTORS:
            arr = np.asarray(self.logits[name], dtype=np.float64)
            if arr.shape != (sizes[name],):
                raise ShapeError(f"{name} logits must have shape "
                                 f"({sizes[name]},), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ParameterError(f"{name} logits contain non-finite values")
            clean[name] = arr.copy()
        object.__setattr__(self, "logits", clean)

    @staticmethod
    def factor_sizes(n_quality: int, n_length: int) -> dict:
        return {F_FORMAT: 2, F_CATEGORY: 3, F_RES_QUALITY: n_quality,
                F_FLAG_JPEG: 2, F_FLAG_GAUSSIAN: 2, F_FLAG_FILTER: 2,
                F_SEM_QUALITY: 3, F_SEM_SECURITY: 3, F_LENGTH: n_length}

    @classmethod
    def uniform(cls, quality_grid: np.ndarray = QUALITY_GRID,
                length_grid: np.ndarray = LENGTH_GRID) -> "SyntheticPolicy":
        qg = np.asarray(quality_grid, dtype=np.float64)
        lg = np.asarray(length_grid, dtype=np.int64)
        sizes = cls.factor_sizes(qg.size, lg.size)
        logits = {name: np.zeros(size) for name, size in sizes.items()}
        return cls(logits=logits, quality_grid=qg, length_grid=lg)

    def probs(self, name: str) -> np.ndarray:
        return _softmax(self.logits[name])

    def log_probs(self, name: str) -> np.ndarray:
        return _log_softmax(self.logits[name])

    def updated(self, grads: dict, learning_rate: float) -> "SyntheticPolicy":
        logits = {name: self.logits[name] + learning_rate * grads[name]
                  for name in FACTORS}
        return SyntheticPolicy(logits=logits, quality_grid=self.quality_grid,
                               length_grid=self.length_grid)

    def to_dict(self) -> dict:
        return {"quality_grid": self.quality_grid.tolist(),
                "length_grid": self.length_grid.tolist(),
                "logits": {k: v.tolist() for k, v in self.logits.items()}}

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticPolicy":
        return cls(logits={k: np.asarray(v, dtype=np.float64)
                           for k, v in data["logits"].items()},
                   quality_grid=np.asarray(data["quality_grid"]),
                   length_grid=np.asarray(data["length_grid"]))


@dataclass(frozen=True)
class ResponseSample:
    """One draw: chosen index per visited factor, plus rendered text."""

    factors: dict
    text: str


def render_text(resp: ParsedResponse, target_length: int) -> str:
    """Serialize ``resp`` with its think block padded so the whole text
    has ``target_length`` characters (never shorter than the scaffold)."""
    skeleton = len(serialize(replace(resp, think="x"))) - 1
    pad = max(1, int(target_length) - skeleton)
    think = (_THINK_FILLER * (pad // len(_THINK_FILLER) + 1))[:pad].strip()
    if not think:
        think = "x" * pad
    full = serialize(replace(resp, think=think))
    # strip() above may shave trailing blanks; re-pad deterministically
    if len(full) < target_length:
        think = think + "x" * (target_length - len(full))
        full = serialize(replace(resp, think=think))
    return full


def _draw(rng: np.random.Generator, probs: np.ndarray) -> int:
    return int(rng.choice(probs.size, p=probs))


def sample_response(policy: SyntheticPolicy,
                    rng: np.random.Generator) -> ResponseSample:
    """Draw one response. A failed format draw short-circuits: no other
    factor is consumed and a canonical malformed text is emitted."""
    fmt = _draw(rng, policy.probs(F_FORMAT))
    factors = {F_FORMAT: fmt}
    if fmt == 0:
        return ResponseSample(factors=factors, text=MALFORMED_TEXT)
    cat_idx = _draw(rng, policy.probs(F_CATEGORY))
    factors[F_CATEGORY] = cat_idx
    category = CATEGORIES[cat_idx]
    if category == CATEGORY_RESIDUAL:
        for name in (F_RES_QUALITY, F_FLAG_JPEG, F_FLAG_GAUSSIAN,
                     F_FLAG_FILTER):
            factors[name] = _draw(rng, policy.probs(name))
        resp = ParsedResponse(
            think="x", category=category,
            residual_quality=float(policy.quality_grid[factors[F_RES_QUALITY]]),
            jpeg=factors[F_FLAG_JPEG], gaussian=factors[F_FLAG_GAUSSIAN],
            filter=factors[F_FLAG_FILTER])
    else:
        factors[F_SEM_QUALITY] = _draw(rng, policy.probs(F_SEM_QUALITY))
        factors[F_SEM_SECURITY] = _draw(rng, policy.probs(F_SEM_SECURITY))
        resp = ParsedResponse(think="x", category=category,
                              semantic_quality=factors[F_SEM_QUALITY] + 1,
                              semantic_security=factors[F_SEM_SECURITY] + 1)
    factors[F_LENGTH] = _draw(rng, policy.probs(F_LENGTH))
    text = render_text(resp, int(policy.length_grid[factors[F_LENGTH]]))
    return ResponseSample(factors=factors, text=text)


def sample_logprob(policy: SyntheticPolicy, factors: dict) -> float:
    """Log-probability of a factor assignment under the policy."""
    return float(sum(policy.log_probs(name)[idx]
                     for name, idx in factors.items()))


def group_advantages(rewards: np.ndarray) -> np.ndarray:
    """Standardize rewards within one group (population std). A group
    with spread below 1e-8 yields all-zero advantages."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ParameterError("a group needs at least two rewards")
    mu = r.mean()
    sigma = math.sqrt(float(np.mean((r - mu) ** 2)))
    if sigma < _SIGMA_GUARD:
        return np.zeros_like(r)
    return (r - mu) / sigma


def clipped_surrogate(rho: float, advantage: float,
                      clip_epsilon: float) -> float:
    """min(rho * A, clip(rho) * A) with rho clipped into
    [1 - eps, 1 + eps]."""
    if not rho > 0:
        raise ParameterError("probability ratio must be positive")
    if not 0.0 < clip_epsilon < 1.0:
        raise ParameterError("clip_epsilon must lie in (0, 1)")
    clipped = min(max(rho, 1.0 - clip_epsilon), 1.0 + clip_epsilon)
    return min(rho * advantage, clipped * advantage)


def kl_to_reference(policy: SyntheticPolicy,
                    reference: SyntheticPolicy) -> float:
    """Exact KL divergence, summed over the independent factors."""
    total = 0.0
    for name in FACTORS:
        p = policy.probs(name)
        q = reference.probs(name)
        mask = p > 0
        total += float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))
    return total


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    clip_epsilon: float = 0.2
    kl_coeff: float = 0.01
    learning_rate: float = 0.5
    iterations: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.group_size < 2:
            raise ParameterError("group_size must be at least 2")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ParameterError("clip_epsilon must lie in (0, 1)")
        if self.kl_coeff < 0.0:
            raise ParameterError("kl_coeff cannot be negative")
        if self.learning_rate < 0:
            raise ParameterError("learning_rate cannot be negative")
        if self.iterations < 1:
            raise ParameterError("iterations must be at least 1")


@dataclass(frozen=True)
class GroupRollout:
    """One group of samples drawn from the behaviour policy."""

    samples: tuple
    rewards: np.ndarray
    advantages: np.ndarray
    logprobs_old: np.ndarray


def rollout_group(policy: SyntheticPolicy, gt: GroundTruth, cfg: GrpoConfig,
                  reward_cfg: RewardConfig,
                  rng: np.random.Generator) -> GroupRollout:
    samples = tuple(sample_response(policy, rng)
                    for _ in range(cfg.group_size))
    rewards = np.array([total_reward(s.text, gt, reward_cfg).total
                        for s in samples])
    return GroupRollout(samples=samples, rewards=rewards,
                        advantages=group_advantages(rewards),
                        logprobs_old=np.array([sample_logprob(policy, s.factors)
                                               for s in samples]))


def objective(policy: SyntheticPolicy, reference: SyntheticPolicy,
              rollout: GroupRollout, cfg: GrpoConfig) -> float:
    """Clipped surrogate minus the KL penalty, on a fixed rollout."""
    total = 0.0
    for k, sample in enumerate(rollout.samples):
        rho = math.exp(sample_logprob(policy, sample.factors)
                       - rollout.logprobs_old[k])
        total += clipped_surrogate(rho, float(rollout.advantages[k]),
                                   cfg.clip_epsilon)
    surrogate = total / len(rollout.samples)
    return surrogate - cfg.kl_coeff * kl_to_reference(policy, reference)


def objective_gradient(policy: SyntheticPolicy, reference: SyntheticPolicy,
                       rollout: GroupRollout, cfg: GrpoConfig) -> dict:
    """Exact gradient of ``objective`` with respect to every logit.

    The surrogate part uses the standard subgradient convention: a
    sample contributes only where the unclipped branch attains the min.
    """
    grads = {name: np.zeros_like(policy.logits[name]) for name in FACTORS}
    g = len(rollout.samples)
    for k, sample in enumerate(rollout.samples):
        adv = float(rollout.advantages[k])
        rho = math.exp(sample_logprob(policy, sample.factors)
                       - rollout.logprobs_old[k])
        clipped = min(max(rho, 1.0 - cfg.clip_epsilon), 1.0 + cfg.clip_epsilon)
        if rho * adv > clipped * adv:
            continue
        scale = rho * adv / g
        for name, idx in sample.factors.items():
            p = policy.probs(name)
            onehot = np.zeros_like(p)
            onehot[idx] = 1.0
            grads[name] += scale * (onehot - p)
    if cfg.kl_coeff > 0:
        for name in FACTORS:
            p = policy.probs(name)
            q = reference.probs(name)
            ratio = np.log(np.where(p > 0, p, 1.0)) - np.log(q)
            kl_f = float(np.sum(np.where(p > 0, p * ratio, 0.0)))
            grads[name] -= cfg.kl_coeff * p * (ratio - kl_f)
    return grads


@dataclass(frozen=True)
class StepDiagnostics:
    mean_reward: float
    format_rate: float
    category_rate: float
    kl: float


def grpo_step(policy: SyntheticPolicy, old_policy: SyntheticPolicy,
              reference: SyntheticPolicy, gt: GroundTruth, cfg: GrpoConfig,
              reward_cfg: RewardConfig,
              rng: np.random.Generator) -> tuple[SyntheticPolicy, StepDiagnostics]:
    """One optimization step: roll out under ``old_policy``, ascend the
    objective gradient at ``policy``."""
    rollout = rollout_group(old_policy, gt, cfg, reward_cfg, rng)
    grads = objective_gradient(policy, reference, rollout, cfg)
    new_policy = policy.updated(grads, cfg.learning_rate)
    cat_target = CATEGORIES.index(gt.category)
    fmt_hits = [s.factors[F_FORMAT] == 1 for s in rollout.samples]
    cat_hits = [s.factors.get(F_CATEGORY) == cat_target
                for s in rollout.samples]
    diag = StepDiagnostics(
        mean_reward=float(rollout.rewards.mean()),
        format_rate=float(np.mean(fmt_hits)),
        category_rate=float(np.mean(cat_hits)),
        kl=kl_to_reference(new_policy, reference))
    return new_policy, diag


@dataclass(frozen=True)
class TrainResult:
    policy: SyntheticPolicy
    curve: tuple


def train(items: Sequence[GroundTruth], cfg: GrpoConfig = GrpoConfig(),
          reward_cfg: RewardConfig = RewardConfig(),
          initial_policy: SyntheticPolicy | None = None) -> TrainResult:
    """Run GRPO for ``cfg.iterations`` steps, cycling through ``items``.

    The behaviour policy is re-snapshotted from the current policy at
    every step, and the KL penalty anchors to the initial policy.
    """
    if len(items) == 0:
        raise ParameterError("need at least one ground truth item")
    policy = initial_policy if initial_policy is not None \
        else SyntheticPolicy.uniform()
    reference = policy
    rng = np.random.default_rng(cfg.seed)
    curve = []
    for it in range(cfg.iterations):
        gt = items[it % len(items)]
        policy, diag = grpo_step(policy, policy, reference, gt, cfg,
                                 reward_cfg, rng)
        curve.append({"iteration": it, "mean_reward": diag.mean_reward,
                      "format_rate": diag.format_rate,
                      "category_rate": diag.category_rate, "kl": diag.kl})
    return TrainResult(policy=policy, curve=tuple(curve))


def ideal_factors(gt: GroundTruth, quality_grid: np.ndarray = QUALITY_GRID,
                  length_grid: np.ndarray = LENGTH_GRID,
                  target_length: float = 850.0) -> dict:
    """Factor assignment a perfect responder would pick for ``gt``."""
    qg = np.asarray(quality_grid, dtype=np.float64)
    lg = np.asarray(length_grid, dtype=np.float64)
    factors = {F_FORMAT: 1, F_CATEGORY: CATEGORIES.index(gt.category),
               F_LENGTH: int(np.argmin(np.abs(lg - target_length)))}
    if gt.category == CATEGORY_RESIDUAL:
        factors[F_RES_QUALITY] = int(np.argmin(np.abs(qg - gt.label.quality)))
        factors[F_FLAG_JPEG] = gt.label.jpeg_robust
        factors[F_FLAG_GAUSSIAN] = gt.label.gaussian_robust
        factors[F_FLAG_FILTER] = gt.label.filter_robust
    else:
        factors[F_SEM_QUALITY] = gt.label.quality - 1
        factors[F_SEM_SECURITY] = gt.label.security - 1
    return factors


def mle_warm_start(datasets: Iterable[dict],
                   quality_grid: np.ndarray = QUALITY_GRID,
                   length_grid: np.ndarray = LENGTH_GRID) -> SyntheticPolicy:
    """Add-one smoothed maximum likelihood fit of the factored policy to
    observed factor assignments (dicts as produced by sampling or by
    ``ideal_factors``)."""
    qg = np.asarray(quality_grid, dtype=np.float64)
    lg = np.asarray(length_grid, dtype=np.int64)
    sizes = SyntheticPolicy.factor_sizes(qg.size, lg.size)
    counts = {name: np.ones(size) for name, size in sizes.items()}
    seen = 0
    for item in datasets:
        factors = item.factors if isinstance(item, ResponseSample) else item
        for name, idx in factors.items():
            if name not in counts:
                raise ParameterError(f"unknown factor {name!r}")
            if not 0 <= idx < sizes[name]:
                raise ParameterError(f"index {idx} out of range for {name}")
            counts[name][idx] += 1
        seen += 1
    if seen == 0:
        raise ParameterError("warm start needs at least one observation")
    logits = {name: np.log(c / c.sum()) for name, c in counts.items()}
    return SyntheticPolicy(logits=logits, quality_grid=qg, length_grid=lg)


def with_format_probability(policy: SyntheticPolicy,
                            p_valid: float) -> SyntheticPolicy:
    """Copy of ``policy`` with P(format valid) pinned to ``p_valid``."""
    if not 0.0 < p_valid < 1.0:
        raise ParameterError("p_valid must lie strictly inside (0, 1)")
    logits = dict(policy.logits)
    logits[F_FORMAT] = np.array([math.log(1.0 - p_valid), math.log(p_valid)])
    return SyntheticPolicy(logits=logits, quality_grid=policy.quality_grid,
                           length_grid=policy.length_grid)


def mean_nll(policy: SyntheticPolicy, datasets: Iterable[dict]) -> float:
    """Mean negative log-likelihood of factor assignments."""
    total, count = 0.0, 0
    for item in datasets:
        factors = item.factors if isinstance(item, ResponseSample) else item
        total -= sample_logprob(policy, factors)
        count += 1
    if count == 0:
        raise ParameterError("need at least one observation")
    return total / count

"""Budgeted expert feedback on regression weights.

A simulated expert reports the target's true weight for a queried feature.
Query strategies rank features; :func:`run_elicitation` replaces the
queried coordinates of the initial estimate one at a time and records the
target loss after each answer.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .regression import Dataset, WeightVector, as_weights, fit_lasso_cv


class Strategy(str, enum.Enum):
    NO_INTERACTION = "NoInteraction"
    RANDOM = "Random"
    LARGEST_TARGET = "LargestTargetFeature"
    LARGEST_PRODUCT = "LargestProductFeature"


@dataclass(frozen=True)
class StrategySpec:
    kind: Strategy
    respect_mask: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Strategy(self.kind))

    @property
    def name(self) -> str:
        return self.kind.value + ("Subset" if self.respect_mask else "")

    def with_seed(self, seed: int) -> "StrategySpec":
        return StrategySpec(self.kind, self.respect_mask, seed)

    @classmethod
    def from_name(cls, name: str, rng_seed: int = 0) -> "StrategySpec":
        subset = name.endswith("Subset")
        base = name[: -len("Subset")] if subset else name
        return cls(Strategy(base), subset, rng_seed)


DEFAULT_STRATEGIES = tuple(StrategySpec(s) for s in Strategy)


@dataclass(frozen=True)
class TargetCase:
    """Target feature vector and the target's true weights."""

    x_star: np.ndarray
    theta_star: WeightVector

    def __post_init__(self):
        x = np.array(self.x_star, dtype=float).reshape(-1)
        theta = as_weights(self.theta_star)
        if x.shape[0] != len(theta):
            raise ValueError(
                f"x_star has length {x.shape[0]} but theta_star has length {len(theta)}"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError("x_star must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "x_star", x)
        object.__setattr__(self, "theta_star", theta)

    @property
    def p(self) -> int:
        return self.x_star.shape[0]


@dataclass(frozen=True)
class ExpertModel:
    truth: WeightVector
    knowledge_mask: Optional[np.ndarray] = None
    noise_variance: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        truth = as_weights(self.truth)
        p = len(truth)
        if self.knowledge_mask is None:
            mask = np.ones(p, dtype=bool)
        else:
            mask = np.array(self.knowledge_mask, dtype=bool).reshape(-1)
        if mask.shape[0] != p:
            raise ValueError(f"knowledge_mask must have length {p}")
        if not self.noise_variance >= 0.0:
            raise ValueError("noise_variance must be nonnegative")
        mask.setflags(write=False)
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "knowledge_mask", mask)


@dataclass(frozen=True)
class Feedback:
    feature_index: int
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("feedback value must be finite")


def _vec(w) -> np.ndarray:
    return np.asarray(w, dtype=float).reshape(-1)


def target_loss(theta_hat, target: TargetCase) -> float:
    """Squared prediction error at the target, ``(x* . (theta_hat - theta*))**2``."""
    w = _vec(theta_hat)
    if w.shape[0] != target.p:
        raise ValueError(f"theta_hat has length {w.shape[0]}, expected {target.p}")
    err = float(target.x_star @ (w - target.theta_star.values))
    return err * err


def _ranked(scores: np.ndarray) -> np.ndarray:
    # Descending by score, ties by ascending index.
    return np.lexsort((np.arange(scores.shape[0]), -scores))


def rank_features(strategy: StrategySpec, x_star, theta_init, mask=None) -> list[int]:
    """Full query order for ``strategy``.

    With ``strategy.respect_mask`` the features the expert cannot answer
    (``mask == 0``) are dropped from the order.
    """
    x = _vec(x_star)
    theta = _vec(theta_init)
    if x.shape != theta.shape:
        raise ValueError("x_star and theta_init lengths differ")
    kind = strategy.kind
    if kind is Strategy.NO_INTERACTION:
        return []
    if kind is Strategy.LARGEST_PRODUCT:
        order = _ranked(np.abs(x * theta))
    elif kind is Strategy.LARGEST_TARGET:
        order = _ranked(np.abs(x))
    else:
        order = np.random.default_rng(strategy.rng_seed).permutation(x.shape[0])
    if strategy.respect_mask and mask is not None:
        keep = np.asarray(mask, dtype=bool).reshape(-1)
        if keep.shape != x.shape:
            raise ValueError("mask length differs from x_star")
        order = order[keep[order]]
    return [int(i) for i in order]


def expert_answer(expert: ExpertModel, feature_index: int, query_counter: int = 0) -> Optional[Feedback]:
    """The expert's report on one feature, or ``None`` if it is outside their knowledge.

    Noise for query ``query_counter`` comes from its own stream keyed by
    ``(rng_seed, query_counter)``, so answers do not depend on call history.
    """
    p = len(expert.truth)
    if not 0 <= feature_index < p:
        raise IndexError(f"feature index {feature_index} out of range [0, {p})")
    if not expert.knowledge_mask[feature_index]:
        return None
    value = float(expert.truth[feature_index])
    if expert.noise_variance > 0.0:
        seq = np.random.SeedSequence([expert.rng_seed % 2**63, query_counter])
        value += float(np.random.default_rng(seq).normal(0.0, np.sqrt(expert.noise_variance)))
    return Feedback(int(feature_index), value)


def apply_feedback(theta, fb: Feedback) -> WeightVector:
    w = np.array(_vec(theta))
    if not 0 <= fb.feature_index < w.shape[0]:
        raise IndexError(f"feature index {fb.feature_index} out of range")
    w[fb.feature_index] = fb.value
    return WeightVector(w)


@dataclass(frozen=True)
class ElicitationResult:
    trajectory: np.ndarray
    final: WeightVector
    queried: tuple
    padded: bool = False


def run_elicitation(
    theta_init,
    target: TargetCase,
    expert: ExpertModel,
    strategy: StrategySpec,
    budget: int,
) -> ElicitationResult:
    """Query the expert ``budget`` times in the strategy's order.

    ``trajectory[t]`` is the target loss after ``t`` queries. A query the
    expert cannot answer still spends budget unless the strategy filtered
    unknown features out beforehand. If the order runs out before the
    budget does, the trajectory is padded with its last value and
    ``padded`` is set.
    """
    theta = as_weights(theta_init)
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if budget > target.p:
        raise ValueError(f"budget {budget} exceeds p={target.p}")
    order = rank_features(strategy, target.x_star, theta, expert.knowledge_mask)
    traj = np.empty(budget + 1)
    traj[0] = target_loss(theta, target)
    queried = []
    current = theta
    padded = False
    for t in range(budget):
        if t < len(order):
            i = order[t]
            queried.append(i)
            fb = expert_answer(expert, i, t)
            if fb is not None:
                current = apply_feedback(current, fb)
            traj[t + 1] = target_loss(current, target)
        else:
            padded = padded or strategy.kind is not Strategy.NO_INTERACTION
            traj[t + 1] = traj[t]
    return ElicitationResult(traj, current, tuple(queried), padded)


def replacement_losses(theta_init, target: TargetCase) -> np.ndarray:
    """Target loss after exactly replacing each single coordinate, for every feature."""
    w = _vec(theta_init)
    delta = target.x_star * (w - target.theta_star.values)
    return (delta.sum() - delta) ** 2


def oracle_best_single_replacement(theta_init, target: TargetCase) -> int:
    """Exhaustive argmin over single exact replacements (ties to the lowest index)."""
    w = _vec(theta_init)
    best, best_loss = 0, np.inf
    for i in range(target.p):
        fb = Feedback(i, float(target.theta_star[i]))
        loss = target_loss(apply_feedback(w, fb), target)
        if loss < best_loss:
            best, best_loss = i, loss
    return best


def default_estimator(data: Dataset, seed: int = 0) -> WeightVector:
    return fit_lasso_cv(data, seed)[0].weights


@dataclass
class TheoremReport:
    """Monte-Carlo check of the single-replacement optimality conditions.

    ``c`` is the modal largest-|product| feature across resamples.
    ``variance_condition`` asks E[D_c^2] >= E[D_i^2] for all i, and
    ``cross_condition`` asks E[D_c D_k] >= E[D_i D_k] for all i != k != c,
    each within ``z`` standard errors of the paired differences.
    """

    num_resamples: int
    c: int
    c_counts: dict
    second_moments: np.ndarray
    product_variance: np.ndarray
    delta_mean: np.ndarray
    variance_condition: bool
    cross_condition: bool
    replacement_loss_mean: np.ndarray
    replacement_loss_sem: np.ndarray
    loss_gap_mean: np.ndarray
    loss_gap_sem: np.ndarray
    ordering_holds: bool
    zero_variance: bool = False
    vacuous: bool = False
    notes: list = field(default_factory=list)

    @property
    def conditions_hold(self) -> bool:
        return self.variance_condition and self.cross_condition


def _se(a: np.ndarray, axis=0) -> np.ndarray:
    return a.std(axis=axis, ddof=1) / np.sqrt(a.shape[axis])


def estimate_theorem_conditions(
    generator: Callable[[np.random.Generator], Dataset],
    target: TargetCase,
    num_resamples: int,
    seed: int = 0,
    estimator: Callable[[Dataset], object] = None,
    z: float = 2.0,
) -> TheoremReport:
    """Resample training sets, refit, and test both optimality conditions.

    ``generator(rng)`` draws one training set; ``estimator(data)`` returns
    a weight vector (defaults to CV-tuned lasso).
    """
    if num_resamples < 2:
        raise ValueError("num_resamples must be at least 2")
    if estimator is None:
        estimator = default_estimator
    p = target.p
    x = target.x_star
    truth = target.theta_star.values
    master = np.random.SeedSequence(seed % 2**63)
    R = num_resamples
    D = np.empty((R, p))
    P = np.empty((R, p))
    cs = np.empty(R, dtype=np.int64)
    for r, child in enumerate(master.spawn(R)):
        theta = _vec(estimator(generator(np.random.default_rng(child))))
        P[r] = x * theta
        D[r] = P[r] - x * truth
        cs[r] = _ranked(np.abs(P[r]))[0]
    counts = Counter(int(c) for c in cs)
    c = min(counts, key=lambda k: (-counts[k], k))

    second = D.T @ D / R
    var_prod = P.var(axis=0, ddof=1)
    zero_var = bool(np.all(D.std(axis=0) == 0.0))
    notes = []
    if zero_var:
        notes.append("all resampled deltas identical; standard errors are zero")

    # E[D_c^2] - E[D_i^2] >= -z * se, paired over resamples.
    sq = D * D
    d1 = sq[:, [c]] - sq
    var_ok = bool(np.all(d1.mean(axis=0) >= -z * _se(d1) - 1e-15))

    cross_ok = True
    for i in range(p):
        if i == c:
            continue
        dd = (D[:, c] - D[:, i])[:, None] * D
        gap = dd.mean(axis=0) + z * _se(dd)
        gap[[i, c]] = 0.0
        if np.any(gap < -1e-15):
            cross_ok = False
            break

    total = D.sum(axis=1, keepdims=True)
    L = (total - D) ** 2
    gap_samples = L[:, [c]] - L
    gap_mean = gap_samples.mean(axis=0)
    gap_sem = _se(gap_samples)
    ordering = bool(np.all(gap_mean <= z * gap_sem + 1e-15))

    return TheoremReport(
        num_resamples=R,
        c=int(c),
        c_counts=dict(sorted(counts.items())),
        second_moments=second,
        product_variance=var_prod,
        delta_mean=D.mean(axis=0),
        variance_condition=var_ok,
        cross_condition=cross_ok,
        replacement_loss_mean=L.mean(axis=0),
        replacement_loss_sem=_se(L),
        loss_gap_mean=gap_mean,
        loss_gap_sem=gap_sem,
        ordering_holds=ordering,
        zero_variance=zero_var,
        vacuous=p == 1,
        notes=notes,
    )

"""Seeded synthetic regression problems.

Two scenarios: every patient shares one sparse weight vector, or each
patient (and the target) has its own weight vector on a common support,
with all pairwise L2 distances below a fixed bound.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .elicitation import TargetCase
from .regression import Dataset, WeightVector

# Independent substreams of one config seed.
_POOL, _THETA, _OBS, _TARGET = range(4)


class Scenario(str, enum.Enum):
    SHARED = "shared"
    PER_PATIENT = "per-patient"


class TargetMode(str, enum.Enum):
    FRESH = "fresh"
    POOL = "pool"


class FeatureDistribution(str, enum.Enum):
    NORMAL = "normal"
    UNIFORM = "uniform"  # U[0, 1)


@dataclass(frozen=True)
class SyntheticConfig:
    pool_size: int = 1000
    p: int = 150
    s: int = 5
    n_train: int = 10
    obs_noise_variance: float = 1.0
    scenario: Scenario = Scenario.SHARED
    max_pairwise_theta_distance: float = 0.5
    seed: int = 0
    target_mode: TargetMode = TargetMode.FRESH
    features: FeatureDistribution = FeatureDistribution.NORMAL

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        object.__setattr__(self, "target_mode", TargetMode(self.target_mode))
        object.__setattr__(self, "features", FeatureDistribution(self.features))
        if min(self.pool_size, self.p, self.s, self.n_train) < 1:
            raise ValueError("pool_size, p, s and n_train must be positive")
        if self.s > self.p:
            raise ValueError(f"sparsity s={self.s} exceeds p={self.p}")
        limit = self.pool_size - (self.target_mode is TargetMode.POOL)
        if self.n_train > limit:
            raise ValueError(f"n_train={self.n_train} exceeds available pool rows ({limit})")
        if self.obs_noise_variance < 0:
            raise ValueError("obs_noise_variance must be nonnegative")
        if not self.max_pairwise_theta_distance > 0:
            raise ValueError("max_pairwise_theta_distance must be positive")

    def replace(self, **changes) -> "SyntheticConfig":
        return replace(self, **changes)


def _rng(config: SyntheticConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(config.seed % 2**63, spawn_key=(stream,)))


def _features(rng, config: SyntheticConfig, shape) -> np.ndarray:
    if config.features is FeatureDistribution.UNIFORM:
        return rng.random(shape)
    return rng.standard_normal(shape)


def generate_pool(config: SyntheticConfig) -> np.ndarray:
    return _features(_rng(config, _POOL), config, (config.pool_size, config.p))


def _uniform_ball(rng, count, dim, radius):
    direction = rng.standard_normal((count, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return direction * (radius * rng.random((count, 1)) ** (1.0 / dim))


def generate_thetas(config: SyntheticConfig) -> list[WeightVector]:
    """One shared vector, or ``pool_size + 1`` per-patient vectors (last one is the target's).

    Per-patient vectors are ``base + delta`` with ``delta`` uniform in the
    ball of radius ``max_pairwise_theta_distance / 2`` on the base support,
    so every pair is within the bound by the triangle inequality.
    """
    rng = _rng(config, _THETA)
    support = np.sort(rng.choice(config.p, size=config.s, replace=False))
    base = np.zeros(config.p)
    base[support] = rng.standard_normal(config.s)
    if config.scenario is Scenario.SHARED:
        return [WeightVector(base)]
    deltas = _uniform_ball(rng, config.pool_size + 1, config.s, config.max_pairwise_theta_distance / 2)
    thetas = np.repeat(base[None, :], config.pool_size + 1, axis=0)
    thetas[:, support] += deltas
    return [WeightVector(t) for t in thetas]


def _target_row(config: SyntheticConfig) -> int:
    return int(_rng(config, _TARGET).integers(config.pool_size))


def generate_observations(pool: np.ndarray, thetas, config: SyntheticConfig) -> Dataset:
    """Noisy responses for ``n_train`` distinct pool rows.

    In pool target mode the target's row is excluded from sampling. Configs
    differing only in ``n_train`` draw nested training sets.
    """
    if pool.shape != (config.pool_size, config.p):
        raise ValueError("pool shape does not match config")
    if config.n_train > config.pool_size:
        raise ValueError("n_train exceeds pool_size")
    rng = _rng(config, _OBS)
    candidates = np.arange(config.pool_size)
    if config.target_mode is TargetMode.POOL:
        candidates = np.delete(candidates, _target_row(config))
    rows = rng.permutation(candidates)[: config.n_train]
    X = pool[rows]
    if config.scenario is Scenario.SHARED:
        mean = X @ np.asarray(thetas[0])
    else:
        W = np.stack([np.asarray(thetas[r]) for r in rows])
        mean = np.einsum("ij,ij->i", X, W)
    noise = rng.normal(0.0, 1.0, size=config.pool_size)[: config.n_train]
    noise *= np.sqrt(config.obs_noise_variance)
    return Dataset(X, mean + noise)


def generate_target(pool: np.ndarray, thetas, config: SyntheticConfig) -> TargetCase:
    """Target features and true weights.

    Fresh mode draws a new feature vector from the pool's distribution; pool mode uses a
    pool row that :func:`generate_observations` never samples.
    """
    if config.target_mode is TargetMode.POOL:
        row = _target_row(config)
        x = pool[row]
        theta = thetas[0] if config.scenario is Scenario.SHARED else thetas[row]
    else:
        x = _features(_rng(config, _TARGET), config, config.p)
        theta = thetas[-1]
    return TargetCase(x, theta)


def generate_scenario(config: SyntheticConfig) -> tuple[Dataset, TargetCase]:
    pool = generate_pool(config)
    thetas = generate_thetas(config)
    return generate_observations(pool, thetas, config), generate_target(pool, thetas, config)


def resampling_generator(config: SyntheticConfig, pool=None, thetas=None):
    """Training-set sampler over a fixed pool and weights, for theorem checks.

    Returns ``(generator, target)`` where ``generator(rng)`` draws a fresh
    training set with that rng; the target stays fixed.
    """
    pool = generate_pool(config) if pool is None else pool
    thetas = generate_thetas(config) if thetas is None else thetas
    target = generate_target(pool, thetas, config)
    shared = config.scenario is Scenario.SHARED
    sigma = np.sqrt(config.obs_noise_variance)
    candidates = np.arange(config.pool_size)
    if config.target_mode is TargetMode.POOL:
        candidates = np.delete(candidates, _target_row(config))
    theta_mat = None if shared else np.stack([np.asarray(t) for t in thetas])

    def generator(rng: np.random.Generator) -> Dataset:
        rows = rng.choice(candidates, size=config.n_train, replace=False)
        X = pool[rows]
        if shared:
            mean = X @ np.asarray(thetas[0])
        else:
            mean = np.einsum("ij,ij->i", X, theta_mat[rows])
        return Dataset(X, mean + rng.normal(0.0, sigma, size=config.n_train))

    return generator, target

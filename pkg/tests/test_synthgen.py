import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expert_elicit.synthgen import (
    Scenario,
    SyntheticConfig,
    TargetMode,
    generate_observations,
    generate_pool,
    generate_scenario,
    generate_target,
    generate_thetas,
    resampling_generator,
)


def small(**kw):
    base = dict(pool_size=200, p=20, s=4, n_train=10, seed=11)
    base.update(kw)
    return SyntheticConfig(**base)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        dict(s=30), dict(n_train=300), dict(obs_noise_variance=-1.0),
        dict(max_pairwise_theta_distance=0.0), dict(p=0), dict(scenario="bogus"),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            small(**kw)

    def test_pool_target_mode_reserves_a_row(self):
        with pytest.raises(ValueError):
            small(n_train=200, target_mode="pool")
        small(n_train=199, target_mode="pool")


class TestPool:
    def test_moments(self):
        c = SyntheticConfig()
        pool = generate_pool(c)
        assert pool.shape == (1000, 150)
        assert abs(pool.mean()) < 4 / np.sqrt(pool.size)
        assert abs(pool.var() - 1.0) < 0.1

    def test_determinism(self):
        assert np.array_equal(generate_pool(small()), generate_pool(small()))
        assert not np.array_equal(generate_pool(small()), generate_pool(small(seed=12)))

    def test_uniform_features(self):
        pool = generate_pool(small(features="uniform", pool_size=1000))
        assert pool.min() >= 0.0 and pool.max() < 1.0
        assert abs(pool.mean() - 0.5) < 0.01


class TestThetas:
    def test_shared_is_s_sparse(self):
        (theta,) = generate_thetas(small())
        assert len(theta.support) == 4

    def test_per_patient_pairwise_bound_exhaustive(self):
        c = small(pool_size=50, n_train=5, scenario=Scenario.PER_PATIENT)
        thetas = np.stack([t.values for t in generate_thetas(c)])
        assert len(thetas) == 51
        for a, b in itertools.combinations(range(len(thetas)), 2):
            assert np.linalg.norm(thetas[a] - thetas[b]) < 0.5

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.01, 5.0))
    def test_per_patient_shared_support_and_bound(self, seed, dist):
        c = small(pool_size=30, n_train=5, scenario="per-patient", seed=seed,
                  max_pairwise_theta_distance=dist)
        thetas = np.stack([t.values for t in generate_thetas(c)])
        supports = {frozenset(np.flatnonzero(t)) for t in thetas}
        assert len(supports) == 1 and len(next(iter(supports))) == 4
        diffs = thetas[:, None, :] - thetas[None, :, :]
        assert np.linalg.norm(diffs, axis=2).max() <= dist

    def test_patients_differ(self):
        thetas = generate_thetas(small(scenario="per-patient"))
        assert thetas[0] != thetas[1]


class TestObservations:
    def test_noise_free_shared_is_exact(self):
        c = small(obs_noise_variance=0.0)
        pool, thetas = generate_pool(c), generate_thetas(c)
        data = generate_observations(pool, thetas, c)
        np.testing.assert_array_equal(data.responses, data.features @ thetas[0].values)

    def test_noise_free_per_patient_uses_row_theta(self):
        c = small(obs_noise_variance=0.0, scenario="per-patient")
        pool, thetas = generate_pool(c), generate_thetas(c)
        data = generate_observations(pool, thetas, c)
        rows = [int(np.flatnonzero((pool == x).all(axis=1))[0]) for x in data.features]
        expected = [pool[r] @ thetas[r].values for r in rows]
        np.testing.assert_allclose(data.responses, expected, rtol=0, atol=1e-14)

    def test_rows_distinct_and_deterministic(self):
        c = small(n_train=150)
        pool, thetas = generate_pool(c), generate_thetas(c)
        a = generate_observations(pool, thetas, c)
        assert len(np.unique(a.features, axis=0)) == 150
        b = generate_observations(pool, thetas, c)
        assert np.array_equal(a.features, b.features) and np.array_equal(a.responses, b.responses)

    def test_nested_across_n(self):
        c = small()
        pool, thetas = generate_pool(c), generate_thetas(c)
        a = generate_observations(pool, thetas, c.replace(n_train=5))
        b = generate_observations(pool, thetas, c.replace(n_train=15))
        assert np.array_equal(a.features, b.features[:5])
        assert np.array_equal(a.responses, b.responses[:5])

    def test_noise_variance_on_a_fixed_row(self):
        # Tile one row so every observation shares the same mean.
        c = SyntheticConfig(pool_size=10_000, p=3, s=1, n_train=10_000, seed=4)
        row = np.array([[0.3, -1.0, 2.0]])
        pool = np.repeat(row, 10_000, axis=0)
        thetas = generate_thetas(c)
        data = generate_observations(pool, thetas, c)
        resid = data.responses - row[0] @ thetas[0].values
        assert abs(resid.var(ddof=1) - 1.0) < 0.1

    def test_pool_mode_excludes_target_row(self):
        c = small(pool_size=20, n_train=19, target_mode=TargetMode.POOL)
        pool, thetas = generate_pool(c), generate_thetas(c)
        target = generate_target(pool, thetas, c)
        data = generate_observations(pool, thetas, c)
        assert not (data.features == target.x_star.reshape(1, -1)).all(axis=1).any()

    def test_shape_mismatch(self):
        c = small()
        with pytest.raises(ValueError):
            generate_observations(np.zeros((3, 3)), generate_thetas(c), c)


class TestTarget:
    def test_fresh_target_uses_last_theta(self):
        c = small(scenario="per-patient")
        pool, thetas = generate_pool(c), generate_thetas(c)
        t = generate_target(pool, thetas, c)
        assert t.theta_star == thetas[-1]
        assert not (pool == t.x_star.reshape(1, -1)).all(axis=1).any()

    def test_pool_target_uses_row_theta(self):
        c = small(scenario="per-patient", target_mode="pool")
        pool, thetas = generate_pool(c), generate_thetas(c)
        t = generate_target(pool, thetas, c)
        row = int(np.flatnonzero((pool == t.x_star.reshape(1, -1)).all(axis=1))[0])
        assert t.theta_star == thetas[row]

    def test_scenario_is_pure(self):
        d1, t1 = generate_scenario(small())
        d2, t2 = generate_scenario(small())
        assert np.array_equal(d1.responses, d2.responses)
        assert t1.theta_star == t2.theta_star and np.array_equal(t1.x_star, t2.x_star)


def test_resampling_generator_fixed_target_varying_data():
    gen, target = resampling_generator(small())
    a = gen(np.random.default_rng(0))
    b = gen(np.random.default_rng(1))
    assert a.n == b.n == 10
    assert not np.array_equal(a.features, b.features)
    _, t2 = resampling_generator(small())
    assert np.array_equal(target.x_star, t2.x_star)

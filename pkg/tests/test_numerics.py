import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bouncelab.numerics import (LogAccumulator, QuadratureError, RngStream, batch_means_stderr,
                                besq_step, derive_stream, ks_distance, mean_stderr, quadrature,
                                run_replicas, sample_beta, sample_stable32, spawn, task_id)

# frozen with mpmath: B(1/3, 1/3), and the Beta(1/3, 2/3) cdf at 1/2
BETA_THIRD_THIRD = 5.29991625085634987
ARCSINE_CDF_HALF = 0.691076034711422049


def test_stream_determinism():
    a = derive_stream(42, 0).random(1000)
    b = derive_stream(42, 0).random(1000)
    assert np.array_equal(a, b)


def test_stream_distinct_ids():
    assert derive_stream(42, 0).random() != derive_stream(42, 1).random()


def test_stream_replay_after_rebuild():
    first = derive_stream(42, 7).standard_normal(10)
    # a fresh object for the same pair restarts the same counter stream
    again = RngStream(42, 7).standard_normal(10)
    assert np.array_equal(first, again)


def test_spawn_is_deterministic_and_distinct():
    parent = derive_stream(3, 9)
    assert spawn(parent, 5).stream_id == spawn(parent, 5).stream_id
    assert spawn(parent, 5).stream_id != spawn(parent, 6).stream_id


def test_run_replicas_order_independent_of_threads():
    rng = derive_stream(1, 2)
    one = run_replicas(lambda s: s.random(), rng, 50, threads=1)
    many = run_replicas(lambda s: s.random(), rng, 50, threads=4)
    assert one == many


def test_run_replicas_with_index():
    out = run_replicas(lambda i, s: i, derive_stream(1, 2), 5, with_index=True)
    assert out == [0, 1, 2, 3, 4]


def test_run_replicas_rejects_zero():
    with pytest.raises(ValueError):
        run_replicas(lambda s: 0, derive_stream(1, 2), 0)


def test_task_id_packs_and_validates():
    assert task_id(3, 7) == (3 << 40) | 7
    with pytest.raises(ValueError):
        task_id(1, -1)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_stable_laplace_oracle(lam):
    s = sample_stable32(derive_stream(11, int(lam * 10)), 1.0, 400_000)
    m, se = mean_stderr(np.exp(lam * s))
    assert abs(m - math.exp(lam ** 1.5)) < 3 * se


def test_stable_scaling_ks():
    s4 = sample_stable32(derive_stream(12, 0), 4.0, 200_000)
    s1 = sample_stable32(derive_stream(12, 1), 1.0, 200_000)
    assert ks_distance(s4, 4 ** (2 / 3) * s1) < 0.01


def test_stable_small_time_concentrates():
    s = sample_stable32(derive_stream(13, 0), 1e-9, 1000)
    assert np.max(np.abs(s)) < 1e-2


def test_stable_no_positive_jumps_shape():
    # totally left-skewed: the right tail is thinner than the left one
    s = sample_stable32(derive_stream(14, 0), 1.0, 200_000)
    assert np.mean(s > 3) < np.mean(s < -3)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_stable_rejects_nonpositive_time(t):
    with pytest.raises(ValueError):
        sample_stable32(derive_stream(1, 1), t)


def test_beta_mean():
    x = sample_beta(derive_stream(15, 0), 1 / 3, 2 / 3, 1_000_000)
    m, se = mean_stderr(x)
    assert abs(m - 1 / 3) < 3 * se


def test_beta_one_one_is_uniform():
    x = sample_beta(derive_stream(15, 1), 1.0, 1.0, 100_000)
    assert ks_distance(x, lambda u: np.clip(u, 0, 1)) < 0.01


def test_beta_arcsine_mass_below_half():
    x = sample_beta(derive_stream(15, 2), 1 / 3, 2 / 3, 1_000_000)
    frac = np.mean(x < 0.5)
    density = lambda s: math.sqrt(3) / (2 * math.pi) * s ** (-2 / 3) * (1 - s) ** (-1 / 3)
    quad = quadrature(density, 0.0, 0.5, 1e-12, singular=(-2 / 3, 0.0))
    assert quad == pytest.approx(ARCSINE_CDF_HALF, abs=1e-10)
    assert abs(frac - quad) < 3 * math.sqrt(quad * (1 - quad) / x.size)


def test_beta_rejects_bad_shape():
    with pytest.raises(ValueError):
        sample_beta(derive_stream(1, 1), 0.0, 1.0)


@pytest.mark.parametrize("x0,dim,dt", [(0.0, 5 / 3, 1.0), (2.0, 5 / 3, 0.5), (1.0, 2.0, 1.0),
                                       (1.0, 3.0, 0.3)])
def test_besq_mean_growth(x0, dim, dt):
    x = besq_step(derive_stream(16, int(dim * 10)), x0, dim, dt, 400_000)
    m, se = mean_stderr(x)
    assert abs(m - (x0 + dim * dt)) < 3 * se
    assert np.all(x >= 0)


def test_besq_against_euler_oracle():
    # away from 0 a fine full-truncation Euler scheme is accurate
    rng = derive_stream(17, 0)
    n, steps, dim, dt = 20_000, 400, 3.0, 0.5
    x = np.full(n, 4.0)
    h = dt / steps
    g = rng.generator
    for _ in range(steps):
        xp = np.maximum(x, 0.0)
        x = x + dim * h + 2.0 * np.sqrt(xp * h) * g.standard_normal(n)
    exact = besq_step(derive_stream(17, 1), 4.0, dim, dt, n)
    assert ks_distance(np.maximum(x, 0), exact) < 0.03
    assert abs(x.mean() - exact.mean()) < 4 * math.hypot(x.std(), exact.std()) / math.sqrt(n)


def test_besq_small_dt_continuity():
    x = besq_step(derive_stream(18, 0), 1.0, 5 / 3, 1e-12, 100)
    assert np.allclose(x, 1.0, atol=1e-4)


def test_besq_rejects_negative():
    with pytest.raises(ValueError):
        besq_step(derive_stream(1, 1), -1.0, 5 / 3, 1.0)
    with pytest.raises(ValueError):
        besq_step(derive_stream(1, 1), 1.0, 5 / 3, 0.0)


def test_quadrature_trivial():
    assert quadrature(lambda x: 1.0, 0.0, 1.0) == pytest.approx(1.0, abs=1e-14)


def test_quadrature_beta_singularities():
    val = quadrature(lambda x: (x * (1 - x)) ** (-2 / 3), 0.0, 1.0, 1e-12,
                     singular=(-2 / 3, -2 / 3))
    assert val == pytest.approx(BETA_THIRD_THIRD, abs=1e-9)


def test_quadrature_reports_failure():
    with pytest.raises(QuadratureError):
        quadrature(lambda x: 1.0 / x, 0.0, 1.0, 1e-12, limit=20)


def test_quadrature_rejects_bad_exponent():
    with pytest.raises(ValueError):
        quadrature(lambda x: 1.0, 0.0, 1.0, singular=(-1.0, 0.0))


def test_ks_identical_samples():
    x = np.arange(10.0)
    assert ks_distance(x, x) == 0.0


def test_ks_degenerate_against_uniform():
    assert ks_distance([0.0], lambda u: np.clip(u, 0, 1)) == pytest.approx(1.0)


def test_ks_two_uniform_samples():
    a = derive_stream(19, 0).random(100_000)
    b = derive_stream(19, 1).random(100_000)
    assert ks_distance(a, b) < 0.01


def test_ks_rejects_empty():
    with pytest.raises(ValueError):
        ks_distance([], [1.0])
    with pytest.raises(ValueError):
        ks_distance([1.0], [])


def test_mean_stderr_and_batch_means():
    x = np.arange(100.0)
    m, se = mean_stderr(x)
    assert m == 49.5 and se == pytest.approx(x.std(ddof=1) / 10)
    iid = derive_stream(20, 0).standard_normal(100_000)
    assert batch_means_stderr(iid) == pytest.approx(1 / math.sqrt(iid.size), rel=0.3)
    with pytest.raises(ValueError):
        batch_means_stderr(np.ones(10), 50)


@given(st.floats(-700, 700), st.floats(-700, 700))
def test_log_accumulator_sum(a, b):
    acc = LogAccumulator(a).add_log(b)
    hi, lo = max(a, b), min(a, b)
    expected = hi + math.log1p(math.exp(lo - hi))
    assert acc.log_value == pytest.approx(expected, rel=1e-14, abs=1e-14)
    assert acc.log_value >= hi


@settings(max_examples=50)
@given(st.lists(st.floats(0.0, 1e3), min_size=1, max_size=30))
def test_log_accumulator_monotone(terms):
    acc = LogAccumulator()
    prev = -math.inf
    for t in terms:
        acc.add(t)
        assert acc.log_value >= prev
        prev = acc.log_value


def test_log_accumulator_large_values():
    acc = LogAccumulator(1000.0).add_log(1000.0)
    assert acc.log_value == pytest.approx(1000.0 + math.log(2.0), rel=1e-15)
    with pytest.raises(ValueError):
        acc.add(-1.0)

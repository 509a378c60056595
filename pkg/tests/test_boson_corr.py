import numpy as np
import pytest
from hypothesis import given, strategies as st

from hhcdw.boson_corr import (alpha_derivative, brute_force_corr, brute_force_joint, partition_det,
                              quadratic_form, random_insertions, stated_alpha_bound, sup_alpha_bound,
                              thermal_corr, truncated_partition, vacuum_corr)

times_st = st.lists(st.floats(0, 2.9), min_size=0, max_size=5).map(sorted)


def test_vacuum_examples():
    assert vacuum_corr([1.0], [], np.zeros((0, 1))) == 1.0
    a = 0.7
    assert np.isclose(vacuum_corr([1.0], [0.3], [[a]]), np.exp(-a * a / 2))
    tau, w = 0.4, 1.3
    got = vacuum_corr([w], [0.1, 0.1 + tau], [[a], [-a]])
    assert np.isclose(got, np.exp(-a * a * (1 - np.exp(-w * tau))))
    with pytest.raises(ValueError):
        vacuum_corr([1.0], [0.5, 0.1], [[a], [a]])


def test_thermal_examples():
    a, w, beta = 0.6, 1.1, 2.0
    assert thermal_corr([w], [], np.zeros((0, 1)), beta) == 1.0
    assert np.isclose(thermal_corr([w], [0.5], [[a]], beta),
                      np.exp(-a * a / 2 / np.tanh(beta * w / 2)))
    t, f = [0.2, 0.5, 0.9], [[0.3], [-0.4], [0.2]]
    assert np.isclose(thermal_corr([w], t, f, 200.0), vacuum_corr([w], t, f))
    with pytest.raises(ValueError):
        thermal_corr([w], [0.2], [[a]], 0.0)


def test_partition_det():
    assert np.isclose(partition_det([1.0], 1.0), 1.5819767068693265)
    assert np.isclose(partition_det([1.0] * 3, 1.0), 1.5819767068693265 ** 3)
    assert np.isclose(partition_det([1.0], 60.0), 1.0)
    assert np.isclose(truncated_partition([1.0], 1.0, 200), partition_det([1.0], 1.0), rtol=1e-14)
    with pytest.raises(ValueError):
        partition_det([0.0], 1.0)


def test_alpha_derivative_examples():
    a = 0.8
    assert alpha_derivative([1.0], [], np.zeros((0, 1)), a) == 0
    x = 1 / a ** 2
    # a single insertion with |f|^2 = x sits at the stated maximizer
    f = [[np.sqrt(x)]]
    assert np.isclose(abs(alpha_derivative([1.0], [0.0], f, a)), stated_alpha_bound(a))
    f2 = [[np.sqrt(2) / a]]
    assert np.isclose(abs(alpha_derivative([1.0], [0.0], f2, a)), sup_alpha_bound(a))
    assert sup_alpha_bound(a) > stated_alpha_bound(a)
    t, fs = [0.1, 0.7], np.array([[0.3], [-0.5]])
    assert alpha_derivative([1.0], t, fs, a) == alpha_derivative([1.0], t, -fs, a)
    with pytest.raises(ValueError):
        alpha_derivative([1.0], t, fs, 0.0)


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 2.0))
def test_alpha_derivative_finite_difference(seed, alpha):
    rng = np.random.default_rng(seed)
    t, f = random_insertions(rng, n_modes=2, max_n=4)
    w = [1.0, 1.7]
    h = 1e-5 * alpha
    fd = (vacuum_corr(w, t, (alpha + h) * f) - vacuum_corr(w, t, (alpha - h) * f)) / (2 * h)
    an = alpha_derivative(w, t, f, alpha)
    assert abs(fd - an) <= 1e-6 * max(abs(an), 1e-3)
    assert abs(an) <= sup_alpha_bound(alpha) * (1 + 1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_positivity_and_range(seed):
    rng = np.random.default_rng(seed)
    t, f = random_insertions(rng, n_modes=2, max_n=5, alpha_max=2.0, t_max=2.9)
    assert quadratic_form([1.0, 0.4], t, f, 3.0) >= -1e-12
    assert 0 < thermal_corr([1.0, 0.4], t, f, 3.0) <= 1
    assert 0 <= vacuum_corr([1.0, 0.4], t, f) <= 1


@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 3.0))
def test_thermal_time_translation(seed, delta):
    rng = np.random.default_rng(seed)
    beta = 3.0
    t, f = random_insertions(rng, n_modes=1, max_n=4, t_max=beta)
    s = np.mod(t + delta, beta)
    order = np.argsort(s, kind="stable")
    assert np.isclose(thermal_corr([0.8], s[order], f[order], beta), thermal_corr([0.8], t, f, beta))


def test_oracle_matches_closed_forms():
    rng = np.random.default_rng(11)
    for _ in range(20):
        t, f = random_insertions(rng, n_modes=1, max_n=4)
        assert abs(brute_force_corr([1.0], t, f, 60) - vacuum_corr([1.0], t, f)) < 1e-8
        assert abs(brute_force_corr([1.0], t, f, 60, beta=1.0) - thermal_corr([1.0], t, f, 1.0)) < 1e-8


def test_joint_oracle_factorizes():
    rng = np.random.default_rng(5)
    t, f = random_insertions(rng, n_modes=2, max_n=3)
    w = [1.0, 1.5]
    assert np.isclose(brute_force_joint(w, t, f, 12), brute_force_corr(w, t, f, 12))
    assert np.isclose(brute_force_joint(w, t, f, 12, beta=1.5), brute_force_corr(w, t, f, 12, beta=1.5))


def test_zero_cutoff_negative_control():
    got = brute_force_corr([1.0], [0.2], [[0.9]], 0)
    assert np.isclose(got, 1.0)
    assert not np.isclose(got, vacuum_corr([1.0], [0.2], [[0.9]]))

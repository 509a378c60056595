"""Gaussian correlation functions of Weyl insertions exp(i phi(f)) for free
bosons with diagonal frequencies, plus a truncated-Fock oracle.

phi(f) = sum_k f_k (b_k + b_k*) with real f. An insertion list is a sorted
array of times ``s`` and a matrix ``f`` of shape (n, modes). The vacuum
correlation is

    <0| prod_i exp(-s_i H0) exp(i phi(f_i)) exp(s_i H0) |0>,   H0 = sum w_k N_k,

and the thermal one replaces the vacuum by the Gibbs state at inverse
temperature beta.
"""

import numpy as np
import scipy.linalg as sla


def _check(times, fs):
    times = np.asarray(times, dtype=float)
    fs = np.asarray(fs, dtype=float).reshape(len(times), -1) if len(times) else np.zeros((0, 1))
    if np.any(np.diff(times) < 0):
        raise ValueError("insertion times must be sorted")
    return times, fs


def vacuum_kernel(omegas, times):
    """K[i, j, k] = exp(-|s_i - s_j| w_k)."""
    gap = np.abs(times[:, None] - times[None, :])
    return np.exp(-gap[..., None] * np.asarray(omegas)[None, None, :])


def thermal_kernel(omegas, times, beta):
    if beta <= 0:
        raise ValueError("beta must be positive")
    w = np.asarray(omegas)[None, None, :]
    gap = np.abs(times[:, None] - times[None, :])[..., None]
    return (np.exp(-gap * w) + np.exp(-(beta - gap) * w)) / (1 - np.exp(-beta * w))


def quadratic_form(omegas, times, fs, beta=None):
    times, fs = _check(times, fs)
    if len(times) == 0:
        return 0.0
    k = vacuum_kernel(omegas, times) if beta is None else thermal_kernel(omegas, times, beta)
    return float(np.einsum("ik,ijk,jk->", fs, k, fs))


def vacuum_corr(omegas, times, fs):
    return float(np.exp(-0.5 * quadratic_form(omegas, times, fs)))


def thermal_corr(omegas, times, fs, beta):
    times, _ = _check(times, fs)
    if len(times) and (times[0] < 0 or times[-1] >= beta):
        raise ValueError("thermal insertion times must lie in [0, beta)")
    return float(np.exp(-0.5 * quadratic_form(omegas, times, fs, beta)))


def partition_det(omegas, beta):
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    if np.any(w <= 0):
        raise ValueError("frequencies must be positive")
    return float(1.0 / np.prod(1.0 - np.exp(-beta * w)))


def alpha_derivative(omegas, times, fs, alpha, beta=None):
    """d/d alpha of the correlation with insertions alpha * f_i (closed form).

    The correlation is exp(-alpha^2 x / 2) with x the quadratic form of f;
    the derivative is -alpha x exp(-alpha^2 x / 2). Its supremum over x >= 0
    sits at alpha^2 x = 2 and equals 2 / (alpha e), which exceeds the often
    quoted 1 / (alpha sqrt(e)) (the value at alpha^2 x = 1)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = quadratic_form(omegas, times, fs, beta)
    return float(-alpha * x * np.exp(-0.5 * alpha * alpha * x))


def stated_alpha_bound(alpha):
    """1 / (alpha sqrt(e)): |d/d alpha exp(-alpha^2 x / 2)| at alpha^2 x = 1."""
    return 1.0 / (alpha * np.sqrt(np.e))


def sup_alpha_bound(alpha):
    """2 / (alpha e) = sup_x |d/d alpha exp(-alpha^2 x / 2)|."""
    return 2.0 / (alpha * np.e)


# ----------------------------------------------------------------- oracle

def _mode_matrices(n_max):
    b = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)
    field = b + b.T
    vals, vecs = np.linalg.eigh(field)
    return vals, vecs


def _weyl(coef, vals, vecs):
    return (vecs * np.exp(1j * coef * vals)) @ vecs.conj().T


def brute_force_corr(omegas, times, fs, n_max, beta=None):
    """Correlation from explicit truncated matrices, one mode at a time
    (modes are independent, so the result is the product over modes)."""
    times, fs = _check(times, fs)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    vals, vecs = _mode_matrices(n_max)
    levels = np.arange(n_max + 1)
    total = 1.0 + 0j
    for k, w in enumerate(omegas):
        if beta is None:
            vec = np.zeros(n_max + 1, dtype=complex)
            vec[0] = 1.0
            left = vec.copy()
            ops = np.eye(n_max + 1, dtype=complex)
            prev = times[0] if len(times) else 0.0
            for s, f in zip(times, fs[:, k] if len(times) else []):
                ops = ops @ np.diag(np.exp(-(s - prev) * w * levels)) @ _weyl(f, vals, vecs)
                prev = s
            total *= left.conj() @ ops @ vec
        else:
            prev = 0.0
            ops = np.eye(n_max + 1, dtype=complex)
            for s, f in zip(times, fs[:, k] if len(times) else []):
                ops = ops @ np.diag(np.exp(-(s - prev) * w * levels)) @ _weyl(f, vals, vecs)
                prev = s
            ops = ops @ np.diag(np.exp(-(beta - prev) * w * levels))
            z = np.sum(np.exp(-beta * w * levels))
            total *= np.trace(ops) / z
    return total


def brute_force_joint(omegas, times, fs, n_max, beta=None):
    """Same as brute_force_corr but on the tensor product of all modes at once
    (used to confirm the per-mode factorization on small instances)."""
    times, fs = _check(times, fs)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    n_modes = len(omegas)
    b = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)
    eye = np.eye(n_max + 1)

    def embed(a, k):
        out = np.ones((1, 1))
        for j in range(n_modes):
            out = np.kron(out, a if j == k else eye)
        return out

    fields = [embed(b + b.T, k) for k in range(n_modes)]
    h0 = sum(w * embed(np.diag(np.arange(n_max + 1.0)), k) for k, w in enumerate(omegas))
    ops = np.eye(h0.shape[0], dtype=complex)
    prev = times[0] if (beta is None and len(times)) else 0.0
    for s, f in zip(times, fs):
        gen = sum(fk * fld for fk, fld in zip(f, fields))
        ops = ops @ sla.expm(-(s - prev) * h0) @ sla.expm(1j * gen)
        prev = s
    if beta is None:
        return ops[0, 0]
    ops = ops @ sla.expm(-(beta - prev) * h0)
    return np.trace(ops) / np.trace(sla.expm(-beta * h0))


def truncated_partition(omegas, beta, n_max):
    levels = np.arange(n_max + 1)
    return float(np.prod([np.sum(np.exp(-beta * w * levels)) for w in np.atleast_1d(omegas)]))


def random_insertions(rng, n_modes=1, max_n=4, alpha_max=1.0, t_max=1.0):
    n = int(rng.integers(0, max_n + 1))
    times = np.sort(rng.uniform(0, t_max, size=n))
    fs = rng.uniform(-alpha_max, alpha_max, size=(n, n_modes))
    return times, fs

import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hhcdw.boson_corr import alpha_derivative
from hhcdw.bounds import (admissible_lambda, audit_activity_bound, audit_derivative_bounds,
                          audit_estga, audit_psi_bound, audit_Q_bound, check_hypotheses, constants, f,
                          minimal_gamma_q, q_factor, random_decomposition, rho_absolute_ratio,
                          summarize, tightest_rate)
from hhcdw.contour import ContourModel, SliceLabel, density_observable
from hhcdw.lattice import build_lattice
from hhcdw.model import ModelParams, neel_spin, pair_energy

CHAIN4 = build_lattice(1, 2)
PAIR = build_lattice(1, 1)
GAMMA_Q, BETA0 = 30.0, 2.0
BASE = ModelParams(t=1, U=0.1, W=10, mu=0, g=0.5, omega0=5, lam=0, beta=3, M=3, d=1, L=2, n_max=1)


@pytest.fixture(scope="module")
def audit_instance():
    p = BASE.with_(lam=admissible_lambda(BASE, GAMMA_Q))
    return p, ContourModel(p, CHAIN4), constants(p, GAMMA_Q, BETA0), check_hypotheses(p, BETA0, GAMMA_Q)


@given(st.floats(1e-3, 50), st.floats(1e-3, 50))
def test_f_positive_decreasing(x, y):
    assert f(x) > 0
    if x < y * (1 - 1e-9):
        assert f(x) > f(y)


def test_constant_chain(audit_instance):
    _, _, k, hyp = audit_instance
    assert k.gamma_tilde >= k.gamma + 5 * math.log(2) - 1e-12
    assert hyp["activity_ok"] and hyp["winding_ok"] and hyp["derivative_ok"]
    assert hyp["convergence"]["value"] <= 1 + 1e-12
    assert k.gamma > 0 and k.gamma_dagger > 0


def test_hypothesis_report():
    hyp = check_hypotheses(BASE, BETA0, GAMMA_Q)
    assert hyp["convergence"]["ok"] and hyp["convergence"]["value"] == 0
    k = constants(BASE, GAMMA_Q, BETA0)
    g = minimal_gamma_q(k.gamma_e, k.e_e, 1, 1)
    assert np.isclose(g, 1 + k.gamma_e + abs(k.e_e))
    at = check_hypotheses(BASE.with_(lam=0.0), BETA0, g)
    assert abs(at["peierls_excess"]["value"]) < 1e-12 and not at["peierls_excess"]["ok"]
    edge = BASE.with_(beta=BASE.M * math.log(2) / BASE.omega0)
    assert abs(check_hypotheses(edge, BETA0, GAMMA_Q)["omega_dagger"]["value"]) < 1e-12
    assert not check_hypotheses(edge, BETA0, GAMMA_Q)["omega_dagger"]["ok"]


def test_q_trivial_and_classical_cases():
    b, w, M = 0.5, 2.0, 2
    args = dict(M=M, alpha=0.7, omega0=w, beta_slice=b, n_max=20)
    D = {(0, 1)}
    assert q_factor(D, set(), set(), {}, **args) == 1
    # a phonon cannot appear inside one slice without insertions
    assert q_factor(D, set(), D, {}, **args) == 0
    col = {(0, 1), (0, 2)}
    z = 1 / (1 - math.exp(-b * w))
    assert np.isclose(q_factor(col, set(), set(), {}, **args), 1 / (1 - math.exp(-M * b * w)))
    assert np.isclose(q_factor({(0, 1)}, set(), set(), {}, **dict(args, M=1)), z)
    assert abs(q_factor(col, set(), col, {}, **args)) <= math.exp(-b * w * 2) * z


def test_q_audit_small(audit_instance):
    p, cm, k, _ = audit_instance
    rng = np.random.default_rng(1)
    out = []
    for D in ({(0, 1)}, {(0, 1), (1, 1)}, {(1, 1), (1, 2), (1, 3)}):
        out += audit_Q_bound(D, p.M, p, k, rng, samples=2)
    assert all(a.passed for a in out)
    du = [a for a in out if a.name == "dQ_dU"]
    assert du and all(a.lhs == 0 for a in du)


def test_q_alpha_derivative_matches_gaussian():
    b, w, a = 0.8, 1.0, 0.6
    ins = {(0, 1): [(0.1, 1), (0.5, -1), (0.7, 1)]}
    h = 1e-5
    qf = lambda al: q_factor({(0, 1)}, {(0, 1)}, set(), ins, 2, al, w, b, n_max=40)  # noqa: E731
    num = (qf(a + h) - qf(a - h)) / (2 * h)
    times = [s for s, _ in ins[(0, 1)]]
    fs = [[e / math.sqrt(2)] for _, e in ins[(0, 1)]]
    # the vacuum column is closed on both sides: a plain vacuum correlation
    assert abs(num - alpha_derivative([w], times, fs, a)) < 1e-7


def test_activity_audits_small(audit_instance):
    p, cm, k, hyp = audit_instance
    audits = [audit_activity_bound(cm, Y, k, hyp) for Y in cm.enumerate_contours(2)]
    assert audits and all(a.passed for a in audits)
    assert {a.name for a in audits} == {"rho_nonwinding"}
    assert tightest_rate(audits, "rho_nonwinding") >= k.gamma
    rows = summarize(audits)
    assert rows[0]["checked"] == rows[0]["passed"] == len(audits)


def test_winding_activity_audit(audit_instance):
    p, cm, k, hyp = audit_instance
    D = frozenset((1, t) for t in (1, 2, 3))
    for lab in cm.labelings(D):
        a = audit_activity_bound(cm, cm.make_contour(D, lab), k, hyp)
        assert a.name == "rho_winding" and a.passed


def test_vacuous_when_gamma_not_positive():
    p = BASE.with_(W=1.0, omega0=0.5, lam=0.0)
    k, hyp = constants(p, 2.0, BETA0), check_hypotheses(p, BETA0, 2.0)
    assert not hyp["activity_ok"]
    cm = ContourModel(p, CHAIN4)
    audits = [audit_activity_bound(cm, Y, k, hyp) for Y in cm.enumerate_contours(1)]
    assert all(a.vacuous and not a.passed for a in audits)


def test_psi_audit_and_homogeneity(audit_instance):
    p, cm, k, hyp = audit_instance
    psi = density_observable(0, p.n_max)
    for Y in cm.enumerate_contours(2):
        if (0, 1) not in Y.support:
            continue
        a = audit_psi_bound(cm, Y, psi, k, hyp)
        assert a.passed
        b = audit_psi_bound(cm, Y, psi.scaled(2.0), k, hyp)
        if math.isfinite(a.lhs):
            assert np.isclose(b.lhs - a.lhs, math.log(2))
        assert np.isclose(b.rhs - a.rhs, math.log(2))


def test_estga_cases(audit_instance):
    p, cm, k, _ = audit_instance
    allq = [SliceLabel(frozenset({0, 1, 2, 3}), cm.ground[1])] * p.M
    a = audit_estga(cm, allq, k)
    assert a.passed and a.extra["Dq"] == a.extra["D"] == 4 * p.M
    flipped = tuple(cm.local_index(1, 0, 0) for _ in range(4))
    b = audit_estga(cm, [SliceLabel(frozenset(), flipped)] * p.M, k)
    assert b.passed and b.extra["Xe"] == b.extra["D"]
    rng = np.random.default_rng(7)
    assert all(audit_estga(cm, random_decomposition(cm, rng), k).passed for _ in range(200))


def _closed_form(p, cm, lat, ref):
    """rho and d rho / d mu for the full-lattice contour at M = 1, lam = 0."""
    tot = dtot = 0.0
    for loc in product(range(cm.nloc), repeat=lat.n_sites):
        if not all(cm.phonons(loc[i]) or cm.electron_excited(loc, i) for i in range(lat.n_sites)):
            continue
        s = [cm.spin(k) for k in loc]
        E = dE = 0.0
        for i, x in enumerate(lat.sites):
            for y in lat.neighbor_points(x):
                sy = s[lat.index[y]] if y in lat.index else neel_spin(y, 1)
                E += 0.5 * pair_energy(s[i], sy, p.u, p.m, p.W)
                dE -= 0.5 * (s[i] + sy) / (2 * p.d)
            E += p.omega0 * cm.phonons(loc[i])
        wt = math.exp(-p.beta * (E - lat.n_sites * ref))
        tot += wt
        dtot -= p.beta * dE * wt
    return tot, dtot


def test_mu_derivative_closed_form():
    p = ModelParams(t=1, U=0.4, W=1, mu=0.2, g=0.5, omega0=1, lam=0.0, beta=1.5, M=1, d=1, L=1, n_max=1)
    cm = ContourModel(p, PAIR)
    D = frozenset({(0, 1), (1, 1)})
    (lab,) = list(cm.labelings(D))
    Y = cm.make_contour(D, lab)
    rho, drho = _closed_form(p, cm, PAIR, cm.e_e)
    assert np.isclose(rho_absolute_ratio(p, PAIR, Y, ref=cm.e_e), rho, rtol=1e-13)
    k, hyp = constants(p, GAMMA_Q, BETA0), check_hypotheses(p, BETA0, GAMMA_Q)
    got = audit_derivative_bounds(p, PAIR, Y, k, hyp).extra["derivative"]
    assert abs(got - drho) <= 1e-6 * abs(drho)


def test_derivative_audit_small(audit_instance):
    p, cm, k, hyp = audit_instance
    audits = [audit_derivative_bounds(p, CHAIN4, Y, k, hyp) for Y in cm.enumerate_contours(1)]
    assert all(a.passed and not a.inconclusive for a in audits)

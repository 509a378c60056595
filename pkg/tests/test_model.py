import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from hhcdw.fock import Space, site_density
from hhcdw.lattice import Lattice, build_lattice
from hhcdw.model import (ModelParams, build_holstein_hubbard, build_hubbard, build_transformed,
                         effective_potential, effective_potential_hubbard, hopping_part,
                         hubbard_diagonal, lang_firsov_unitary, lf_conjugated_operator,
                         lf_spectrum_check, nn_hop_supports, nn_sobolev_norm, pair_form_diagonal,
                         polaron_shift_diagonal, sobolev_norm, verify_lf_identities)

ONE_SITE = Lattice(1, 1, False, ((0,),), (), {(0,): 0})


def test_one_site_hubbard_levels():
    p = ModelParams(t=0.0, U=0.8, W=1.5, mu=0.3, d=1)
    ev = np.sort(np.linalg.eigvalsh(build_hubbard(p, ONE_SITE).toarray()))
    shift = p.mu + 2 * p.d * p.W + p.U / 2
    expect = np.sort([0.0, -shift, -shift, p.U - 2 * shift])
    assert np.allclose(ev, expect)
    assert np.isclose(expect[0], -2 * p.mu - 4 * p.d * p.W)


def test_neel_energy_two_sites():
    lat = build_lattice(1, 1)
    p = ModelParams(t=0.0, U=0.6, W=1.0, mu=0.0)
    space = Space(2, 0)
    diag = hubbard_diagonal(space.estates, lat, p)
    neel = 0b0011  # site 0 doubly occupied, site 1 empty
    k = space.epos[neel]
    phi = effective_potential_hubbard(1, 1, [0], p) + effective_potential_hubbard(0, 0, [2], p)
    # W n_x n_y is shared between the two sites' halves
    assert np.isclose(diag[k], phi)


def test_spin_flip_symmetry():
    lat = build_lattice(1, 1)
    p = ModelParams(t=0.7, U=1.2, W=0.4, mu=0.1)
    a = np.linalg.eigvalsh(build_hubbard(p, lat, (2, 1)).toarray())
    b = np.linalg.eigvalsh(build_hubbard(p, lat, (1, 2)).toarray())
    assert np.allclose(a, b)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 2), st.floats(0, 1), st.floats(-1, 1))
def test_hermitian_and_number_conserving(t, U, W, g, mu):
    lat = build_lattice(1, 1)
    p = ModelParams(t=t, U=U, W=W, g=g, mu=mu, n_max=1)
    for h in (build_holstein_hubbard(p, lat), build_transformed(p, lat)):
        assert abs(h - h.conj().T).max() < 1e-12
        space = Space(2, 1)
        n = sp.diags(np.kron(sum(site_density(space.estates, x) for x in range(2)), np.ones(space.n_ph)))
        assert abs(h @ n - n @ h).max() < 1e-12


def test_complex_lambda_antihermitian_part():
    lat = build_lattice(1, 1)
    lam = 0.3 + 0.2j
    p = ModelParams(t=1.0, U=0.5, W=1, g=0.3, lam=lam, n_max=1)
    h = build_transformed(p, lat)
    space = Space(2, 1)
    hop = hopping_part(space, lat, p.t, dressed_alpha=p.alpha).to_sparse()
    assert abs((h - h.conj().T) - (lam - np.conj(lam)) * hop).max() < 1e-13


def test_g_zero_decouples():
    lat = build_lattice(1, 1)
    p = ModelParams(t=0.5, U=1.0, W=1.0, g=0.0, omega0=1.3, n_max=2)
    h = build_holstein_hubbard(p, lat).toarray()
    hub = build_hubbard(p, lat).toarray()
    n_ph = np.kron(np.arange(3), np.ones(3)) + np.kron(np.ones(3), np.arange(3))
    expect = np.kron(hub, np.eye(9)) + np.kron(np.eye(16), np.diag(p.omega0 * n_ph))
    assert np.allclose(h, expect)
    ht = build_transformed(p, lat)
    assert abs(ht.imag).max() == 0


@pytest.mark.parametrize("n_el,factor", [((1, 0), 1.0), ((1, 1), 4.0)])
def test_single_site_polaron(n_el, factor):
    p = ModelParams(t=0.0, U=0.0, W=0.0, mu=0.0, g=0.5, omega0=1.0, n_max=40)
    e0 = np.linalg.eigvalsh(build_holstein_hubbard(p, ONE_SITE, n_el).toarray())[0]
    assert np.isclose(e0, -factor * p.g ** 2 / p.omega0, atol=1e-10)


def test_lf_unitary_cases():
    lat = build_lattice(1, 1)
    u, defect = lang_firsov_unitary(ModelParams(g=0.0, n_max=2), lat)
    assert np.allclose(u, np.diag(np.diag(u))) and defect < 1e-13
    u, _ = lang_firsov_unitary(ModelParams(g=0.8, n_max=2), lat, (0, 0))
    assert np.allclose(u, np.diag(np.diag(u)))
    # exp of the truncated anti-hermitian generator: unitary to roundoff at every cutoff
    for n in (4, 8, 16):
        assert lang_firsov_unitary(ModelParams(g=0.4, n_max=n), ONE_SITE)[1] < 1e-13


def test_matrix_free_conjugation_matches_dense():
    p = ModelParams(t=0.6, U=0.5, W=0.7, mu=0.1, g=0.4, n_max=3)
    lat = build_lattice(1, 1)
    u, _ = lang_firsov_unitary(p, lat, (1, 1))
    h = build_holstein_hubbard(p, lat, (1, 1)).toarray()
    op, _, space = lf_conjugated_operator(p, lat, (1, 1))
    assert np.allclose(op.matmat(np.eye(space.dim)), u @ h @ u.conj().T, atol=1e-12)


def test_polaron_spectrum_matches_transformed():
    p = ModelParams(t=0.0, U=0.3, W=0.0, g=0.5, n_max=30)
    dev, _ = lf_spectrum_check(p, ONE_SITE, (1, 1), levels=6)
    assert dev < 1e-10


def test_transformed_classical_parts():
    p = ModelParams(t=1, U=0.7, W=1.3, mu=0.2, g=0.4, omega0=1.1, lam=0.0, n_max=0)
    h = build_transformed(p, build_lattice(1, 1))
    assert abs(h - sp.diags(h.diagonal())).max() == 0
    # free and pair forms differ by a constant and a chemical-potential shift
    lat = build_lattice(1, 2, True)
    space = Space(lat.n_sites, 0)
    a = hubbard_diagonal(space.estates, lat, p) + polaron_shift_diagonal(space.estates, lat, p)
    b = pair_form_diagonal(space.estates, lat, p)
    s = sum(site_density(space.estates, i) for i in range(lat.n_sites)) - lat.n_sites
    rest = a - b + 2 * p.g ** 2 / p.omega0 * s
    assert np.ptp(rest) < 1e-12


def test_effective_potential_examples():
    p = ModelParams(U=0.9, W=1.0, mu=0.0, g=0.3, d=2)
    assert effective_potential(0, [0] * 4, p) == 0
    e_e = 2 * p.d * 0.5 * (-p.W + 2 * p.u)
    assert np.isclose(effective_potential(1, [-1] * 4, p), e_e)
    shift = effective_potential_hubbard(1, 1, [0] * 4, p) - effective_potential_hubbard(1, 1, [0] * 4, p.with_(g=0.0))
    assert np.isclose(shift, -2 * p.omega0 * p.alpha ** 2)


def test_lf_identities():
    rows = verify_lf_identities(ModelParams(g=0.0), [4, 6])
    assert all(r[k] < 1e-14 for r in rows for k in ("electron", "phonon"))
    rows = verify_lf_identities(ModelParams(g=0.3 / np.sqrt(2), omega0=1.0), [6, 10, 14, 18])
    vals = [r["phonon"] for r in rows]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert all(r["rotation"] < 1e-14 and r["electron"] < 1e-14 for r in rows)


def test_sobolev_norm_closed_form():
    for d in (1, 2, 3):
        supports = nn_hop_supports(d)
        got = sobolev_norm(supports, [0.3] * len(supports), 0.7, d)
        assert np.isclose(got, nn_sobolev_norm(0.3, 0.7, d))


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(omega0=0.0)
    with pytest.raises(ValueError):
        ModelParams(M=0)

"""Hamiltonians of the Holstein-Hubbard family.

Conventions
-----------
* Hopping enters every Hamiltonian as ``lam * t_A * h_A`` with ``t_A = -t`` for
  each ordered nearest-neighbour hop and spin, so the physical hopping
  amplitude is ``-lam * t`` (``lam = 1`` gives the usual Hubbard hopping).
* ``alpha = sqrt(2) g / omega0`` and ``U_eff = U - omega0 alpha^2``.
* The Lang-Firsov unitary ``LF = exp(i pi/2 N_p) exp(L)``, ``L = -i alpha sum n_x p_x``
  maps ``c_x -> exp(-i alpha q_x) c_x``; hence the dressed hop
  ``c*_x c_y -> c*_x exp(i alpha q_x) exp(-i alpha q_y) c_y``: each creation
  carries ``exp(+i alpha q)`` and each annihilation ``exp(-i alpha q)``.
* Two classical parts are available. ``"free"`` is the exact image of the
  Holstein-Hubbard Hamiltonian (Hubbard potential minus ``g^2/omega0 n_x^2``).
  ``"ell"`` and ``"periodic"`` use the pair form ``1/2 sum_y h(s_x, s_y)`` with
  ``s = n - 1``, ``u = U_eff/4d`` and ``m = mu/2d``. The two differ by
  ``-(2 g^2/omega0) sum_x s_x``, i.e. a chemical-potential shift.
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fock import (
    DOWN,
    UP,
    ProductOperator,
    Space,
    boson_number,
    exp_i_position,
    hop_matrix,
    mode,
    momentum,
    position,
    site_density,
    site_phonon,
)
from .lattice import parity


@dataclass(frozen=True)
class ModelParams:
    t: float = 1.0
    U: float = 0.0
    W: float = 1.0
    mu: float = 0.0
    g: float = 0.0
    omega0: float = 1.0
    lam: complex = 1.0
    beta: float = 1.0
    M: int = 1
    d: int = 1
    L: int = 1
    R0: int = 1
    n_max: int = 2

    def __post_init__(self):
        if self.omega0 <= 0:
            raise ValueError("omega0 must be positive")
        if self.M < 1 or self.beta <= 0:
            raise ValueError("need M >= 1 and beta > 0")

    @property
    def alpha(self):
        return np.sqrt(2.0) * self.g / self.omega0

    @property
    def U_eff(self):
        return self.U - self.omega0 * self.alpha ** 2

    @property
    def beta_slice(self):
        return self.beta / self.M

    @property
    def u(self):
        return self.U_eff / (4 * self.d)

    @property
    def m(self):
        return self.mu / (2 * self.d)

    def with_(self, **kw):
        return replace(self, **kw)


def pair_energy(sx, sy, u, m, W):
    return W * sx * sy + u * (sx * sx + sy * sy) - m * (sx + sy)


def neel_spin(x, label):
    """Classical spin s = n - 1 of the Neel configuration ``label`` (1 or 2) at x."""
    if label not in (1, 2):
        raise ValueError(f"unknown boundary label {label!r}")
    return parity(x) if label == 1 else -parity(x)


def effective_potential(s_x, s_neighbors, params):
    """Pair form 1/2 sum_y h(s_x, s_y) over the given neighbour spins."""
    return 0.5 * sum(pair_energy(s_x, sy, params.u, params.m, params.W) for sy in s_neighbors)


def effective_potential_hubbard(n_up, n_dn, n_neighbors, params):
    """Hubbard split of the potential at one site, minus the polaron shift."""
    n = n_up + n_dn
    shift = params.mu + 2 * params.d * params.W + params.U / 2
    phi = params.U * n_up * n_dn + 0.5 * params.W * n * sum(n_neighbors) - shift * n
    return phi - params.omega0 * params.alpha ** 2 / 2 * n * n


# ------------------------------------------------------------ electron parts

def _hops(lattice):
    return lattice.hopping_edges()


def hopping_part(space, lattice, t, dressed_alpha=None):
    """sum over hops and spins of t_A h_A with t_A = -t.

    With ``dressed_alpha`` each hop carries exp(i a q_x) exp(-i a q_y)."""
    op = ProductOperator(space)
    if dressed_alpha is not None:
        plus = exp_i_position(dressed_alpha, space.n_max)
        minus = plus.conj().T
    for i, j in _hops(lattice):
        for s in (UP, DOWN):
            for a, b in ((i, j), (j, i)):
                e = hop_matrix(space.estates, space.epos, mode(a, s), mode(b, s))
                if dressed_alpha is None:
                    op.add(-t, e)
                else:
                    ph = [None] * space.n_sites
                    ph[a], ph[b] = plus, minus
                    op.add(-t, e, tuple(ph))
    return op


def hubbard_diagonal(estates, lattice, params):
    d = lattice.d
    n_up = [((estates >> mode(i, UP)) & 1).astype(float) for i in range(lattice.n_sites)]
    n_dn = [((estates >> mode(i, DOWN)) & 1).astype(float) for i in range(lattice.n_sites)]
    n = [a + b for a, b in zip(n_up, n_dn)]
    e = np.zeros(len(estates))
    for i in range(lattice.n_sites):
        e += params.U * n_up[i] * n_dn[i] - (params.mu + 2 * d * params.W + params.U / 2) * n[i]
    for i, j in lattice.classical_bonds():
        e += params.W * n[i] * n[j]
    return e


def pair_form_diagonal(estates, lattice, params, label=None):
    """sum_{x in lattice} 1/2 sum_{y ~ x} h(s_x, s_y), neighbours outside the
    lattice frozen to the Neel configuration ``label`` (free lattice only)."""
    spins = [site_density(estates, i) - 1.0 for i in range(lattice.n_sites)]
    e = np.zeros(len(estates))
    for i, x in enumerate(lattice.sites):
        for y in lattice.neighbor_points(x):
            if y in lattice.index:
                sy = spins[lattice.index[y]]
            elif label is None:
                continue
            else:
                sy = neel_spin(y, label)
            e += 0.5 * pair_energy(spins[i], sy, params.u, params.m, params.W)
    return e


def polaron_shift_diagonal(estates, lattice, params):
    e = np.zeros(len(estates))
    for i in range(lattice.n_sites):
        n = site_density(estates, i)
        e -= params.omega0 * params.alpha ** 2 / 2 * n * n
    return e


# ------------------------------------------------------------ builders

def build_hubbard(params, lattice, sector=None):
    """Hubbard Hamiltonian on the electron space (sparse, electron states only)."""
    space = Space(lattice.n_sites, 0, sector)
    h = hopping_part(space, lattice, params.t).scaled(params.lam).to_sparse()
    return h + sp.diags(hubbard_diagonal(space.estates, lattice, params))


def _phonon_energy(space, omega0):
    op = ProductOperator(space)
    eye = sp.identity(space.de, format="csr")
    for x in range(space.n_sites):
        op.add(omega0, eye, site_phonon(space, x, boson_number(space.n_max)))
    return op


def holstein_hubbard_operator(params, lattice, space):
    op = hopping_part(space, lattice, params.t).scaled(params.lam)
    op.add(1.0, sp.diags(hubbard_diagonal(space.estates, lattice, params)))
    phi = np.sqrt(2.0) * position(space.n_max)
    for x in range(space.n_sites):
        op.add(params.g, sp.diags(site_density(space.estates, x)), site_phonon(space, x, phi))
    return op + _phonon_energy(space, params.omega0)


def build_holstein_hubbard(params, lattice, sector=None):
    space = Space(lattice.n_sites, params.n_max, sector)
    return holstein_hubbard_operator(params, lattice, space).to_sparse()


def lf_generator(params, space):
    """L = -i alpha sum_x n_x p_x as a ProductOperator."""
    op = ProductOperator(space)
    p = momentum(space.n_max)
    for x in range(space.n_sites):
        op.add(-1j * params.alpha, sp.diags(site_density(space.estates, x)), site_phonon(space, x, p))
    return op


def lang_firsov_unitary(params, lattice, sector=None):
    """Dense LF unitary on the truncated space and its unitarity defect."""
    space = Space(lattice.n_sites, params.n_max, sector)
    gen = lf_generator(params, space).to_dense()
    n_p = _phonon_energy(space, 1.0).diagonal().real
    unitary = np.exp(1j * np.pi / 2 * n_p)[:, None] * sla.expm(gen)
    defect = np.linalg.norm(unitary @ unitary.conj().T - np.eye(space.dim), 2)
    return unitary, defect


LF_DENSE_CAP = 3500


def lf_site_factors(params, n_max, rotate=True):
    """One-site LF factors [i^N] exp(-i alpha n p) for n = 0, 1, 2 electrons."""
    rot = np.exp(1j * np.pi / 2 * np.arange(n_max + 1)) if rotate else np.ones(n_max + 1)
    p = momentum(n_max)
    return [rot[:, None] * sla.expm(-1j * params.alpha * n * p) for n in range(3)]


def lf_conjugated_operator(params, lattice, sector=None, rotate=True):
    """LF H_HH LF* as a matrix-free operator.

    The LF unitary is diagonal in the electron configuration and a tensor
    product of one-site factors, so it is applied site by site. With
    ``rotate=False`` the phase i^N_p is dropped, which leaves a real operator
    (exp(-i alpha n p) is real) with the same spectrum up to that gauge."""
    space = Space(lattice.n_sites, params.n_max, sector)
    H = holstein_hubbard_operator(params, lattice, space).to_sparse()
    facs = lf_site_factors(params, params.n_max, rotate)
    if not rotate:
        facs = [f.real for f in facs]
        H = H.real
    dens = [site_density(space.estates, x).astype(int) for x in range(lattice.n_sites)]
    shape = (space.de,) + (params.n_max + 1,) * lattice.n_sites
    dtype = complex if rotate else float

    def apply(v, adjoint):
        extra = v.shape[1:]
        v = v.reshape(shape + extra).astype(dtype)
        for x in range(lattice.n_sites):
            for n in range(3):
                idx = np.flatnonzero(dens[x] == n)
                if len(idx) == 0:
                    continue
                f = facs[n].conj().T if adjoint else facs[n]
                v[idx] = np.moveaxis(np.tensordot(f, v[idx], axes=([1], [x + 1])), 0, x + 1)
        return v.reshape((space.dim,) + extra)

    def matmat(v):
        return apply(H @ apply(v, True), False)

    op = spla.LinearOperator((space.dim, space.dim), matvec=lambda v: matmat(np.ravel(v)),
                             matmat=matmat, dtype=dtype)
    defect = max(np.linalg.norm(f @ f.conj().T - np.eye(params.n_max + 1), 2) for f in facs)
    return op, defect, space


def _lowest(op, k, dense):
    if dense:
        m = op.toarray() if sp.issparse(op) else op.matmat(np.eye(op.shape[0]))
        return np.linalg.eigvalsh((m + m.conj().T) / 2)[:k]
    return np.sort(spla.eigsh(op, k=k, which="SA", tol=1e-13, return_eigenvectors=False))


def lf_spectrum_check(params, lattice, sector, levels=8):
    """Largest gap between the lowest ``levels`` eigenvalues of LF H_HH LF*
    and of the transformed operator, with the one-site unitarity defect.

    Both operators are conjugated by the phonon phase i^N_p (which is the
    rotation part of LF), so the comparison runs on real matrices; dense
    below LF_DENSE_CAP, Lanczos above."""
    from .thermo import phonon_gauge

    op, defect, space = lf_conjugated_operator(params, lattice, sector, rotate=False)
    gauge = phonon_gauge(space)
    hb = transformed_operator(params, lattice, space, "free").to_sparse()
    hb = (sp.diags(gauge.conj()) @ hb @ sp.diags(gauge)).real.tocsr()
    k = min(levels, space.dim - 2)
    dense = space.dim <= LF_DENSE_CAP
    ea, eb = _lowest(op, k, dense), _lowest(hb, k, dense)
    return float(np.max(np.abs(ea - eb))), float(defect)


def transformed_operator(params, lattice, space, boundary="free"):
    """lam sum t_A h_A + sum_x Phi_eff,x + omega0 N_p as a ProductOperator.

    boundary: "free" (exact LF image), an integer Neel label 1/2 (frozen
    outside neighbours, pair form) or "periodic" (torus, pair form)."""
    op = hopping_part(space, lattice, params.t, dressed_alpha=params.alpha).scaled(params.lam)
    if boundary == "free":
        diag = hubbard_diagonal(space.estates, lattice, params)
        diag = diag + polaron_shift_diagonal(space.estates, lattice, params)
    elif boundary == "periodic":
        if not lattice.periodic:
            raise ValueError("periodic boundary needs a periodic lattice")
        diag = pair_form_diagonal(space.estates, lattice, params)
    elif boundary in (1, 2):
        if lattice.periodic:
            raise ValueError("boundary labels need a free lattice")
        diag = pair_form_diagonal(space.estates, lattice, params, label=boundary)
    else:
        raise ValueError(f"unknown boundary {boundary!r}")
    op.add(1.0, sp.diags(diag))
    return op + _phonon_energy(space, params.omega0)


def build_transformed(params, lattice, boundary="free", sector=None):
    space = Space(lattice.n_sites, params.n_max, sector)
    return transformed_operator(params, lattice, space, boundary).to_sparse()


def classical_part(params, lattice, boundary, sector=None):
    """Diagonal of the transformed Hamiltonian at lam = 0."""
    return build_transformed(params.with_(lam=0.0), lattice, boundary, sector).diagonal()


# ------------------------------------------------------------ norms

def sobolev_norm(hop_supports, amplitudes, gamma, d):
    """max over sites x of sum_{A : x in supp A} |t_A| exp(gamma |supp A|),
    summed over spins and hop directions; supports are site sets."""
    per_site = {}
    for supp, amp in zip(hop_supports, amplitudes):
        w = abs(amp) * np.exp(gamma * len(set(supp)))
        for x in set(supp):
            per_site[x] = per_site.get(x, 0.0) + w
    return max(per_site.values()) if per_site else 0.0


def nn_sobolev_norm(t, gamma, d):
    """Closed form 2d |t| exp(2 gamma) for nearest-neighbour hopping, counted
    per bond (one spin, one orientation) as in the unit-amplitude statement."""
    return 2 * d * abs(t) * np.exp(2 * gamma)


def nn_hop_supports(d):
    """Supports of bonds containing the origin, one per bond."""
    out = []
    for axis in range(d):
        for step in (1, -1):
            y = [0] * d
            y[axis] = step
            out.append({(0,) * d, tuple(y)})
    return out


def lambda0(d, beta0, gamma_q):
    return 1.0 / (2 * d * beta0 * np.exp(2 * gamma_q + 1))


# ------------------------------------------------------------ LF identities

def verify_lf_identities(params, n_max_ladder, low_level=3):
    """Operator-norm defects of the LF conjugation formulas on states with at
    most ``low_level`` phonons, one row per cutoff.

    The generator is a sum of commuting one-site terms, so the identities are
    checked on a single site."""
    rows = []
    for n_max in n_max_ladder:
        p = params.with_(n_max=n_max)
        space = Space(1, n_max, None)
        gen = lf_generator(p, space).to_dense()
        eL, emL = sla.expm(gen), sla.expm(-gen)
        phon = [space.phonon_config(k) for k in range(space.n_ph)]
        low = np.array([max(c) <= low_level for c in phon])
        proj = np.tile(low, space.de)
        n_p = _phonon_energy(space, 1.0).diagonal().real
        rot = np.exp(1j * np.pi / 2 * n_p)
        eye = sp.identity(space.de, format="csr")
        row = {"n_max": n_max}
        # exp(i pi/2 N) q exp(-i pi/2 N) = p
        q0 = ProductOperator(space).add(1.0, eye, site_phonon(space, 0, position(n_max))).to_dense()
        p0 = ProductOperator(space).add(1.0, eye, site_phonon(space, 0, momentum(n_max))).to_dense()
        rotated = (rot[:, None] * q0) * rot.conj()[None, :]
        row["rotation"] = np.linalg.norm((rotated - p0)[:, proj][proj, :], 2)
        # exp(L) c exp(-L) = exp(i alpha p) c
        from .fock import ladder_matrix
        c = ProductOperator(space).add(1.0, ladder_matrix(space.estates, space.epos, mode(0, UP), False)).to_dense()
        ph = sla.expm(1j * p.alpha * p0)
        row["electron"] = np.linalg.norm(((eL @ c @ emL) - ph @ c)[:, proj], 2)
        # exp(L) b exp(-L) = b - alpha/sqrt2 n
        from .fock import boson_b
        b = ProductOperator(space).add(1.0, eye, site_phonon(space, 0, boson_b(n_max))).to_dense()
        n0 = np.diag(np.kron(site_density(space.estates, 0), np.ones(space.n_ph)))
        row["phonon"] = np.linalg.norm(((eL @ b @ emL) - (b - p.alpha / np.sqrt(2) * n0))[:, proj], 2)
        rows.append(row)
    return rows

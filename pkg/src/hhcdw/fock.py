"""Truncated electron-phonon Fock space.

Electron modes are numbered ``2*i + s`` for site index ``i`` (lattice order)
and spin ``s`` (0 = up, 1 = down), so up precedes down on each site. An
electron configuration is an integer bitmask over modes and the basis vector
is ``prod_k (c*_k)^{n_k} |0>`` with the product taken in increasing mode order.
Phonons are truncated at ``n_max`` per site; ``b*`` annihilates the top level.

A basis index is ``e_pos * (n_max+1)**N + phonon_index`` where the phonon
index is mixed radix with site 0 most significant.
"""

from dataclasses import dataclass
from itertools import combinations, product
from math import comb

import numpy as np
import scipy.sparse as sp

UP, DOWN = 0, 1
MAX_DIM = 5_000_000


def mode(site, spin):
    return 2 * site + spin


def popcount(x):
    return bin(x).count("1")


def below(k):
    return (1 << k) - 1


@dataclass(frozen=True)
class ProductBasisState:
    e: int  # electron bitmask
    p: tuple  # phonon occupations per site

    def occupation(self, site, spin):
        return (self.e >> mode(site, spin)) & 1

    def n_site(self, site):
        return self.occupation(site, UP) + self.occupation(site, DOWN)


def electron_states(n_sites, sector=None):
    """Sorted electron bitmasks, optionally restricted to N_e or (N_up, N_down)."""
    n_modes = 2 * n_sites
    if sector is None:
        return np.arange(1 << n_modes, dtype=np.int64)
    if isinstance(sector, (int, np.integer)):
        out = [sum(1 << k for k in ks) for ks in combinations(range(n_modes), int(sector))]
        return np.array(sorted(out), dtype=np.int64)
    n_up, n_dn = sector
    ups = [2 * i for i in range(n_sites)]
    dns = [2 * i + 1 for i in range(n_sites)]
    out = []
    for a in combinations(ups, n_up):
        for b in combinations(dns, n_dn):
            out.append(sum(1 << k for k in a + b))
    return np.array(sorted(out), dtype=np.int64)


def spin_sectors(n_sites):
    return [(a, b) for a in range(n_sites + 1) for b in range(n_sites + 1)]


class Space:
    """Basis bookkeeping for a lattice, phonon cutoff and optional number sector."""

    def __init__(self, n_sites, n_max, sector=None):
        self.n_sites = n_sites
        self.n_max = n_max
        self.sector = sector
        self.estates = electron_states(n_sites, sector)
        self.epos = {int(s): i for i, s in enumerate(self.estates)}
        self.n_ph = (n_max + 1) ** n_sites
        if len(self.estates) * self.n_ph > MAX_DIM:
            raise MemoryError(f"dimension {len(self.estates) * self.n_ph} exceeds {MAX_DIM}")

    @property
    def de(self):
        return len(self.estates)

    @property
    def dim(self):
        return self.de * self.n_ph

    def phonon_index(self, p):
        idx = 0
        for n in p:
            idx = idx * (self.n_max + 1) + n
        return idx

    def phonon_config(self, idx):
        out = []
        for _ in range(self.n_sites):
            out.append(idx % (self.n_max + 1))
            idx //= self.n_max + 1
        return tuple(reversed(out))

    def index(self, state):
        return self.epos[state.e] * self.n_ph + self.phonon_index(state.p)

    def state(self, idx):
        e, p = divmod(idx, self.n_ph)
        return ProductBasisState(int(self.estates[e]), self.phonon_config(p))

    def basis(self):
        return [self.state(i) for i in range(self.dim)]


def enumerate_basis(n_sites, n_max, sector=None):
    return Space(n_sites, n_max, sector).basis()


def basis_dimension(n_sites, n_max, sector=None):
    if sector is None:
        de = 4 ** n_sites
    elif isinstance(sector, int):
        de = comb(2 * n_sites, sector)
    else:
        de = comb(n_sites, sector[0]) * comb(n_sites, sector[1])
    return de * (n_max + 1) ** n_sites


# ------------------------------------------------------------- scalar actions

def apply_creation(state, site, spin):
    k = mode(site, spin)
    if (state.e >> k) & 1:
        return None
    sign = -1 if popcount(state.e & below(k)) % 2 else 1
    return ProductBasisState(state.e | (1 << k), state.p), sign


def apply_annihilation(state, site, spin):
    k = mode(site, spin)
    if not (state.e >> k) & 1:
        return None
    sign = -1 if popcount(state.e & below(k)) % 2 else 1
    return ProductBasisState(state.e ^ (1 << k), state.p), sign


def apply_boson(state, site, kind, n_max):
    n = state.p[site]
    p = list(state.p)
    if kind == "b":
        if n == 0:
            return None
        p[site] = n - 1
        return ProductBasisState(state.e, tuple(p)), np.sqrt(n)
    if kind in ("b*", "bdag", "b†"):
        if n >= n_max:
            return None
        p[site] = n + 1
        return ProductBasisState(state.e, tuple(p)), np.sqrt(n + 1)
    raise ValueError(f"unknown boson operator {kind!r}")


def factorization_sign(e_bits, part1, n_sites):
    """Sign theta with |n> = theta |n_1> (x) |n_2>, the tensor factor of
    ``part1`` written first (so that c_x for x in part 2 acts as
    (-1)^{N_1} (x) c_x)."""
    part1 = set(part1)
    occ = [k for k in range(2 * n_sites) if (e_bits >> k) & 1]
    in1 = [k // 2 in part1 for k in occ]
    inversions = 0
    seen2 = 0
    for flag in in1:
        if flag:
            inversions += seen2
        else:
            seen2 += 1
    return -1 if inversions % 2 else 1


# ------------------------------------------------------------- matrices

def hop_matrix(estates, epos, k, l):
    """c*_k c_l restricted to a list of electron states (assumed closed)."""
    rows, cols, vals = [], [], []
    for j, s in enumerate(estates):
        s = int(s)
        if k == l:
            if (s >> k) & 1:
                rows.append(j), cols.append(j), vals.append(1.0)
            continue
        if not (s >> l) & 1 or ((s >> k) & 1):
            continue
        sign = -1 if popcount(s & below(l)) % 2 else 1
        s1 = s ^ (1 << l)
        sign *= -1 if popcount(s1 & below(k)) % 2 else 1
        s2 = s1 | (1 << k)
        rows.append(epos[s2]), cols.append(j), vals.append(float(sign))
    n = len(estates)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def ladder_matrix(estates_from, epos_to, k, create):
    """c*_k (create=True) or c_k between two lists of electron states."""
    rows, cols, vals = [], [], []
    for j, s in enumerate(estates_from):
        s = int(s)
        occ = (s >> k) & 1
        if occ == create:
            continue
        sign = -1 if popcount(s & below(k)) % 2 else 1
        s2 = s ^ (1 << k)
        if s2 in epos_to:
            rows.append(epos_to[s2]), cols.append(j), vals.append(float(sign))
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(epos_to), len(estates_from)))


def occupation_vector(estates, k):
    return ((np.asarray(estates) >> k) & 1).astype(float)


def site_density(estates, site):
    return occupation_vector(estates, mode(site, UP)) + occupation_vector(estates, mode(site, DOWN))


def boson_b(n_max):
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)


def boson_number(n_max):
    return np.diag(np.arange(n_max + 1, dtype=float))


def position(n_max):
    b = boson_b(n_max)
    return (b + b.T) / np.sqrt(2)


def momentum(n_max):
    b = boson_b(n_max)
    return 1j * (b.T - b) / np.sqrt(2)


def exp_i_position(coef, n_max):
    """exp(i * coef * q) on the truncated space, through the eigenbasis of q."""
    vals, vecs = np.linalg.eigh(position(n_max))
    return (vecs * np.exp(1j * coef * vals)) @ vecs.conj().T


class ProductOperator:
    """Sum of terms ``coef * E (x) P_0 (x) ... (x) P_{N-1}``.

    E acts on the electron states of a Space, each P_i is a small matrix on
    site i's phonons or None for the identity. Supports assembly into a
    scipy sparse matrix and matrix-free products."""

    def __init__(self, space):
        self.space = space
        self.terms = []

    def add(self, coef, electron, phonons=None):
        if phonons is None:
            phonons = (None,) * self.space.n_sites
        self.terms.append((coef, sp.csr_matrix(electron), tuple(phonons)))
        return self

    def __add__(self, other):
        out = ProductOperator(self.space)
        out.terms = self.terms + other.terms
        return out

    def scaled(self, c):
        out = ProductOperator(self.space)
        out.terms = [(c * a, e, p) for a, e, p in self.terms]
        return out

    @property
    def shape(self):
        return (self.space.dim, self.space.dim)

    def to_sparse(self):
        n1 = self.space.n_max + 1
        total = sp.csr_matrix(self.shape, dtype=complex)
        for coef, e, ph in self.terms:
            pm = sp.identity(1, format="csr")
            for m in ph:
                pm = sp.kron(pm, sp.identity(n1) if m is None else sp.csr_matrix(m), format="csr")
            total = total + coef * sp.kron(e, pm, format="csr")
        return total.tocsr()

    def to_dense(self):
        return self.to_sparse().toarray()

    def matvec(self, v):
        s = self.space
        n1 = s.n_max + 1
        shape = (s.de,) + (n1,) * s.n_sites
        v = np.asarray(v).reshape(shape)
        out = np.zeros(shape, dtype=complex)
        for coef, e, ph in self.terms:
            w = v
            for site, m in enumerate(ph):
                if m is not None:
                    w = np.moveaxis(np.tensordot(m, w, axes=([1], [site + 1])), 0, site + 1)
            w = (e @ w.reshape(s.de, -1)).reshape(shape)
            out += coef * w
        return out.reshape(-1)

    def diagonal(self):
        s = self.space
        d = np.zeros(s.dim, dtype=complex)
        for coef, e, ph in self.terms:
            pd = np.ones(1)
            for m in ph:
                pd = np.kron(pd, np.ones(s.n_max + 1) if m is None else np.diag(m))
            d += coef * np.kron(e.diagonal(), pd)
        return d

    def as_linear_operator(self):
        from scipy.sparse.linalg import LinearOperator
        return LinearOperator(self.shape, matvec=self.matvec, dtype=complex)


def site_phonon(space, site, matrix):
    ph = [None] * space.n_sites
    ph[site] = matrix
    return tuple(ph)


def build_qp_operators(space):
    """Per-site q_x and p_x as ProductOperators on the space."""
    eye = sp.identity(space.de, format="csr")
    qs, ps = [], []
    for x in range(space.n_sites):
        qs.append(ProductOperator(space).add(1.0, eye, site_phonon(space, x, position(space.n_max))))
        ps.append(ProductOperator(space).add(1.0, eye, site_phonon(space, x, momentum(space.n_max))))
    return qs, ps


def electron_operator(space, k, create):
    """c*_k or c_k on the full electron space (no sector), times phonon identity."""
    if space.sector is not None:
        raise ValueError("ladder operators change the sector; use a space without sector")
    return ProductOperator(space).add(1.0, ladder_matrix(space.estates, space.epos, k, create))


# ------------------------------------------------------------- conditional expectation

def conditional_expectation(op, outer):
    """Fix the occupations of outer sites in a diagonal observable.

    ``op`` maps a dict ``site -> (n_up, n_down, n_p)`` to a number; the result
    maps configurations of the remaining sites to numbers."""
    outer = dict(outer)

    def reduced(inner):
        full = dict(outer)
        for s, v in inner.items():
            if s in outer:
                raise ValueError(f"site {s} is fixed by the outer configuration")
            full[s] = v
        return op(full)

    return reduced


def conditional_expectation_matrix(matrix, space, outer):
    """Diagonal entries of a diagonal matrix on the basis states that agree
    with ``outer`` (dict site -> (n_up, n_down, n_p)); returns the kept basis
    states and their values."""
    m = sp.csr_matrix(matrix)
    off = m - sp.diags(m.diagonal())
    if off.count_nonzero() and np.max(np.abs(off.data)) > 0:
        raise ValueError("conditional expectation needs a diagonal operator")
    diag = m.diagonal()
    keep, vals = [], []
    for i in range(space.dim):
        st = space.state(i)
        ok = all(
            (st.occupation(s, UP), st.occupation(s, DOWN), st.p[s]) == tuple(v)
            for s, v in outer.items()
        )
        if ok:
            keep.append(st)
            vals.append(diag[i])
    return keep, np.array(vals)


def local_state_list(n_max):
    """Single-site states (n_up, n_down, n_p) in a fixed order."""
    return [(a, b, n) for a, b in product((0, 1), repeat=2) for n in range(n_max + 1)]

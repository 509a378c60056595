"""Thermal and ground-state expectations by exact diagonalization.

Every Hamiltonian here conserves N_up and N_down, so a ThermalState stores one
dense eigendecomposition per spin sector and traces are sums over sectors.
Energies are shifted by the global minimum before exponentiating.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .fock import DOWN, UP, Space, mode, occupation_vector, site_density, spin_sectors
from .lattice import parity
from .model import holstein_hubbard_operator, transformed_operator

DENSE_CAP = 4000


@dataclass
class SectorBlock:
    space: Space
    values: np.ndarray
    vectors: np.ndarray  # columns; None for the non-hermitian path
    propagator: np.ndarray = None  # exp(-beta (H - e0)) when not hermitian


@dataclass
class ThermalState:
    beta: float
    blocks: list
    e0: float
    Z: float  # partition function of the shifted Hamiltonian

    @property
    def log_Z(self):
        return np.log(self.Z) - self.beta * self.e0


def _operator(params, lattice, space, boundary):
    if boundary == "hh":
        return holstein_hubbard_operator(params, lattice, space)
    return transformed_operator(params, lattice, space, boundary)


def phonon_gauge(space):
    """Diagonal unitary prod_x i^{n_x}; conjugating by it turns the dressed
    hopping exp(i a q_x) exp(-i a q_y) into a real matrix."""
    levels = np.arange(space.n_max + 1)
    g = np.ones(1, dtype=complex)
    for _ in range(space.n_sites):
        g = np.kron(g, 1j ** levels)
    return np.tile(g, space.de)


def thermal_state(params, lattice, boundary, beta=None, sectors=None, zeeman=0.0):
    """Diagonalize sector by sector.

    boundary: "hh" (Holstein-Hubbard), "free", 1, 2 or "periodic".
    ``zeeman`` adds -zeeman * sum_x (n_up - n_down) / 2 as a pipeline check."""
    beta = params.beta if beta is None else beta
    sectors = spin_sectors(lattice.n_sites) if sectors is None else sectors
    hermitian = np.isreal(params.lam)
    raw = []
    for sec in sectors:
        space = Space(lattice.n_sites, params.n_max, sec)
        if space.dim > DENSE_CAP:
            raise MemoryError(f"sector {sec} has dimension {space.dim} > {DENSE_CAP}")
        h = _operator(params, lattice, space, boundary).to_dense()
        if zeeman:
            sz = sum(0.5 * (occupation_vector(space.estates, mode(i, UP))
                            - occupation_vector(space.estates, mode(i, DOWN)))
                     for i in range(lattice.n_sites))
            h = h - zeeman * np.diag(np.kron(sz, np.ones(space.n_ph)))
        raw.append((space, h))
    blocks = []
    if hermitian:
        for space, h in raw:
            gauge = phonon_gauge(space)
            hr = gauge.conj()[:, None] * h * gauge[None, :]
            if np.max(np.abs(hr.imag), initial=0.0) < 1e-12:
                vals, vecs = np.linalg.eigh(hr.real)
                vecs = gauge[:, None] * vecs
            else:
                vals, vecs = np.linalg.eigh(h)
            blocks.append(SectorBlock(space, vals, vecs))
        e0 = min(b.values[0] for b in blocks)
        Z = sum(np.exp(-beta * (b.values - e0)).sum() for b in blocks)
    else:
        e0 = min(np.linalg.eigvals(h).real.min() for _, h in raw)
        for space, h in raw:
            prop = sla.expm(-beta * (h - e0 * np.eye(len(h))))
            blocks.append(SectorBlock(space, None, None, prop))
        Z = sum(np.trace(b.propagator) for b in blocks)
    if not np.isfinite(Z) or Z == 0:
        raise FloatingPointError("non-finite partition function")
    return ThermalState(beta, blocks, e0, Z)


def _sector_trace(state, block, op_diag=None, op=None):
    """Tr[op exp(-beta (H - e0))] on one sector; op as diagonal vector or matrix."""
    if block.propagator is not None:
        if op_diag is not None:
            return np.sum(op_diag * np.diag(block.propagator))
        return np.trace(op @ block.propagator)
    w = np.exp(-state.beta * (block.values - state.e0))
    v = block.vectors
    if op_diag is not None:
        return np.sum(w * ((np.abs(v) ** 2).T @ op_diag))
    return np.sum(w * np.sum(v.conj() * (op @ v), axis=0))


def thermal_expectation(state, observable):
    """Tr[Psi exp(-beta H)] / Z; ``observable(space)`` returns a diagonal
    vector or a dense matrix on that sector."""
    total = 0.0
    for b in state.blocks:
        op = observable(b.space)
        op = np.asarray(op)
        total += _sector_trace(state, b, op_diag=op) if op.ndim == 1 else _sector_trace(state, b, op=op)
    return total / state.Z


def ground_expectation(state, observable, tol=1e-9):
    """Average of the observable over the (degenerate) ground subspace."""
    total, count = 0.0, 0
    for b in state.blocks:
        idx = np.flatnonzero(b.values - state.e0 < tol)
        if not len(idx):
            continue
        op = np.asarray(observable(b.space))
        v = b.vectors[:, idx]
        if op.ndim == 1:
            total += np.sum((np.abs(v) ** 2).T @ op)
        else:
            total += np.trace(v.conj().T @ op @ v)
        count += len(idx)
    return total / count


def partition_by_trace(params, lattice, boundary, beta=None):
    """Z of the shifted Hamiltonian from the dense matrix exponential."""
    st = thermal_state(params, lattice, boundary, beta)
    beta = st.beta
    total = 0.0
    for b in st.blocks:
        h = _operator(params, lattice, b.space, boundary).to_dense()
        total += np.trace(sla.expm(-beta * (h - st.e0 * np.eye(len(h))))).real
    return total, st.Z


# ----------------------------------------------------------------- observables

def number_observable(site):
    return lambda space: np.kron(site_density(space.estates, site), np.ones(space.n_ph))


def staggered_observable(lattice):
    def obs(space):
        v = sum(parity(x) * site_density(space.estates, i) for i, x in enumerate(lattice.sites))
        return np.kron(v, np.ones(space.n_ph)) / lattice.n_sites
    return obs


def spin_observable(site, component):
    """S_x^(i) restricted to a sector (x, y components connect different
    spin sectors, so their sector-diagonal blocks vanish identically)."""
    up, dn = mode(site, UP), mode(site, DOWN)

    def obs(space):
        if component == 3:
            v = 0.5 * (occupation_vector(space.estates, up) - occupation_vector(space.estates, dn))
            return np.kron(v, np.ones(space.n_ph))
        # S^+ and S^- change (N_up, N_down), so the sector-diagonal block is zero
        return np.zeros(space.dim)
    return obs


def staggered_density(state, lattice):
    return float(np.real(thermal_expectation(state, staggered_observable(lattice))))


def spin_expectation(state, site, component):
    return complex(thermal_expectation(state, spin_observable(site, component)))


def connected_correlation(state, obs_a, obs_b):
    prod = lambda space: np.asarray(obs_a(space)) * np.asarray(obs_b(space))  # noqa: E731
    return (thermal_expectation(state, prod)
            - thermal_expectation(state, obs_a) * thermal_expectation(state, obs_b))


def correlation_decay(state, lattice, origin=0, min_points=3):
    """Connected density correlations from ``origin`` versus distance, with a
    least-squares fit of log|C| = a - r / xi."""
    rows = []
    x0 = lattice.sites[origin]
    for j, y in enumerate(lattice.sites):
        if j == origin:
            continue
        r = max(abs(a - b) for a, b in zip(x0, y))
        c = connected_correlation(state, number_observable(origin), number_observable(j))
        rows.append((r, float(np.real(c))))
    usable = [(r, c) for r, c in rows if abs(c) > 0]
    if len({r for r, _ in usable}) < min_points:
        raise ValueError("fewer than three usable separations")
    r = np.array([u for u, _ in usable], dtype=float)
    y = np.log(np.abs([c for _, c in usable]))
    slope, intercept = np.polyfit(r, y, 1)
    resid = y - (slope * r + intercept)
    xi = -1.0 / slope if slope < 0 else np.inf
    return {"xi": xi, "slope": slope, "residuals": resid, "rows": rows}


def extensive_density(state, lattice, charge, hamiltonian_of=None, tol=1e-9):
    """<Q>/|Lambda| for a diagonal charge ``charge(space)``; when
    ``hamiltonian_of(space)`` is given, [H, Q] = 0 is verified first."""
    if hamiltonian_of is not None:
        for b in state.blocks:
            h = hamiltonian_of(b.space)
            q = np.asarray(charge(b.space))
            comm = h * q[None, :] - q[:, None] * h
            if np.max(np.abs(comm)) > tol:
                raise ValueError("charge does not commute with the Hamiltonian")
    return float(np.real(thermal_expectation(state, charge))) / lattice.n_sites


def truncation_scan(evaluate, n_max_list, tol=0.0):
    """Observable per cutoff, successive differences and a monotonicity flag."""
    vals = [evaluate(n) for n in n_max_list]
    diffs = [abs(b - a) for a, b in zip(vals, vals[1:])]
    monotone = all(b <= a + tol for a, b in zip(diffs, diffs[1:]))
    return {"n_max": list(n_max_list), "values": vals, "diffs": diffs, "converging": monotone}

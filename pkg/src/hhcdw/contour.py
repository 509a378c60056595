"""Space-time contours and their exact activities.

A configuration of the expanded partition function is a sequence of slices
Sigma_t = (B_t, n^t), t = 1..M, with weight

    W = prod_t <n^{t-1}| T(B_t) |n^t>,      n^0 = n^M,

where T(B) collects the Duhamel terms of exp(-beta_slice H) whose hopping
supports cover exactly B. T(B) is computed by Moebius inversion,

    T(B) = sum_{C subset B} (-1)^{|B - C|} exp(-beta_slice (H0 + lam V_C)),

V_C being the hops supported inside C. All energies are measured relative to
the Neel energy density e_e, so a ground cube has weight one.

Cube (x, t) is excited when x lies within distance R0 of B_t, when the
electrons of n^t on U(x) (outside the lattice: the boundary Neel pattern)
match no ground configuration, or when site x carries phonons in n^t.
"""

import math
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as graph_components

from .fock import Space, below, exp_i_position, popcount, spin_sectors
from .lattice import SpaceTimeLattice, neighborhood, thicken, winding_sites, winds
from .model import neel_spin, pair_energy, transformed_operator

MAX_BLOCK_SITES = 12


class MismatchError(ValueError):
    """Ground labels of a configuration are inconsistent on a complement component."""


@dataclass(frozen=True)
class SliceLabel:
    B: frozenset  # quantum-excited sites D_q^(t)
    config: tuple  # local state index per site


@dataclass
class Contour:
    support: frozenset  # cubes (site_index, t)
    labels: dict  # complement component (frozenset of cubes) -> ground label
    q_cubes: frozenset = frozenset()
    c_cubes: frozenset = frozenset()
    winding: bool = False
    psi_anchor: frozenset = frozenset()

    def label_key(self):
        return tuple(sorted((min(k), v) for k, v in self.labels.items()))

    @property
    def size(self):
        return len(self.support)

    def key(self):
        return (tuple(sorted(self.support)), self.label_key())


class ProductObservable:
    """Psi = prod_x f_x(n_up, n_dn) exp(i mu_x q_x) on a connected site set.

    ``factors[x]`` holds f_x on the four electron states indexed by
    n_up + 2 n_dn; ``phases[x]`` is mu_x (0 when absent)."""

    def __init__(self, sites, factors, n_max, phases=None):
        self.sites = tuple(sorted(sites))
        self.factors = {x: np.asarray(factors[x], dtype=complex) for x in self.sites}
        self.phases = {x: float((phases or {}).get(x, 0.0)) for x in self.sites}
        self.nph = n_max + 1
        self._ph = {x: exp_i_position(mu, n_max) for x, mu in self.phases.items() if mu}

    @property
    def norm(self):
        return float(np.prod([np.max(np.abs(f)) for f in self.factors.values()]))

    def scaled(self, c):
        out = ProductObservable(self.sites, self.factors, self.nph - 1, self.phases)
        x0 = self.sites[0]
        out.factors[x0] = out.factors[x0] * c
        return out

    def targets(self, cfg):
        """Configurations reachable from ``cfg`` (as the right index)."""
        choices = []
        for i, k in enumerate(cfg):
            if i in self._ph:
                e = k // self.nph
                choices.append([e * self.nph + q for q in range(self.nph)])
            else:
                choices.append([k])
        return [tuple(c) for c in product(*choices)]

    def element(self, left, right):
        val = 1.0 + 0j
        for i, (a, b) in enumerate(zip(left, right)):
            if i not in self.factors:
                if a != b:
                    return 0.0
                continue
            ea, pa = divmod(a, self.nph)
            eb, pb = divmod(b, self.nph)
            if ea != eb:
                return 0.0
            val *= self.factors[i][ea]
            if i in self._ph:
                val *= self._ph[i][pa, pb]
            elif pa != pb:
                return 0.0
        return val

    def matrix(self, configs):
        pos = {c: n for n, c in enumerate(configs)}
        out = np.zeros((len(configs), len(configs)), dtype=complex)
        for c, cfg in enumerate(configs):
            for r in self.targets(cfg):
                out[pos[r], c] = self.element(r, cfg)
        return out


def density_observable(site, n_max):
    return ProductObservable([site], {site: [0, 1, 1, 2]}, n_max)


def identity_observable(sites, n_max, phases=None):
    return ProductObservable(sites, {x: [1, 1, 1, 1] for x in sites}, n_max, phases)


@dataclass
class ActivityValue:
    rho: complex
    classical: complex  # contribution of configurations without quantum slices
    method: str = "moebius_exact"
    record: dict = field(default_factory=dict)


class ContourModel:
    """Contour machinery for the transformed Hamiltonian with Neel boundary
    ``label`` on a free lattice (pair-form classical part)."""

    def __init__(self, params, lattice, label=1, labels=(1, 2)):
        if lattice.periodic:
            raise ValueError("contour machinery uses a free lattice with boundary labels")
        self.params = params
        self.lattice = lattice
        self.label = label
        self.labels = tuple(labels)
        self.N = lattice.n_sites
        self.M = params.M
        self.st = SpaceTimeLattice(lattice, params.M)
        self.nph = params.n_max + 1
        self.nloc = 4 * self.nph
        self.beta_slice = params.beta / params.M
        self.e_e = params.d * pair_energy(1, -1, params.u, params.m, params.W)
        self.edges = [tuple(e) for e in lattice.hopping_edges()]
        sites = lattice.sites
        self.nbrs = []
        for x in sites:
            row = []
            for y in lattice.neighbor_points(x):
                row.append((lattice.index[y], None) if y in lattice.index else (None, neel_spin(y, label)))
            self.nbrs.append(row)
        self.ball = []
        for x in sites:
            ins, outs = [], []
            for y in neighborhood(x, params.R0):
                (ins.append(lattice.index[y]) if y in lattice.index else outs.append(y))
            self.ball.append((sorted(ins), outs))
        # ground local states per label: s = +1 -> doubly occupied, s = -1 -> empty
        self.ground = {}
        for m in self.labels:
            self.ground[m] = tuple(self.local_index(1, 1, 0) if neel_spin(x, m) == 1
                                   else self.local_index(0, 0, 0) for x in sites)
        self.plus = exp_i_position(params.alpha, params.n_max)
        self.minus = self.plus.conj().T
        self._block_cache = {}
        self._thick = {}

    # -------------------------------------------------------------- local states
    def local_index(self, n_up, n_dn, n_p):
        return (n_up + 2 * n_dn) * self.nph + n_p

    def decode(self, k):
        e, n_p = divmod(k, self.nph)
        return e & 1, (e >> 1) & 1, n_p

    def spin(self, k):
        a, b, _ = self.decode(k)
        return a + b - 1

    def phonons(self, k):
        return k % self.nph

    def ebits(self, config):
        out = 0
        for i, k in enumerate(config):
            out |= (k // self.nph) << (2 * i)
        return out

    # -------------------------------------------------------------- energies
    def site_energy(self, config, i):
        p = self.params
        sx = self.spin(config[i])
        val = 0.0
        for j, s_out in self.nbrs[i]:
            sy = self.spin(config[j]) if j is not None else s_out
            val += 0.5 * pair_energy(sx, sy, p.u, p.m, p.W)
        return val - self.e_e + p.omega0 * self.phonons(config[i])

    def energy(self, config, active=None):
        """Relative energy, summed over ``active`` sites (default: all)."""
        sites = range(self.N) if active is None else active
        return sum(self.site_energy(config, i) for i in sites)

    # -------------------------------------------------------------- excitation
    def electron_excited(self, config, i):
        ins, outs = self.ball[i]
        for m in self.labels:
            if any(neel_spin(y, m) != neel_spin(y, self.label) for y in outs):
                continue
            g = self.ground[m]
            if all(config[j] // self.nph == g[j] // self.nph for j in ins):
                return False
        return True

    def ground_label(self, config, i):
        """Label m whose configuration matches config on U(i) (phonon-free
        site), or None if the cube is excited."""
        if self.phonons(config[i]):
            return None
        ins, outs = self.ball[i]
        for m in self.labels:
            if any(neel_spin(y, m) != neel_spin(y, self.label) for y in outs):
                continue
            g = self.ground[m]
            if all(config[j] // self.nph == g[j] // self.nph for j in ins):
                return m
        return None

    def thick(self, B):
        B = frozenset(B)
        if B not in self._thick:
            pts = thicken([self.lattice.sites[i] for i in B], self.params.R0, self.lattice)
            self._thick[B] = frozenset(self.lattice.index[y] for y in pts)
        return self._thick[B]

    def excited_sites(self, config, B=frozenset(), sites=None):
        out = set(self.thick(B)) if B else set()
        for i in range(self.N) if sites is None else sites:
            if i in out:
                continue
            if self.phonons(config[i]) or self.electron_excited(config, i):
                out.add(i)
        return frozenset(out)

    # -------------------------------------------------------------- hopping
    def hops_inside(self, C):
        C = set(C)
        out = []
        for a, b in self.edges:
            if a in C and b in C:
                for s in (0, 1):
                    out += [(a, b, s), (b, a, s)]
        return out

    def apply_hop(self, config, a, b, s, bits=None):
        """c*_{a s} c_{b s} on the electron part; returns (new local states of
        a and b, sign) or None. Phonons untouched."""
        bits = self.ebits(config) if bits is None else bits
        k, l = 2 * a + s, 2 * b + s
        if not (bits >> l) & 1 or (bits >> k) & 1:
            return None
        sign = -1 if popcount(bits & below(l)) % 2 else 1
        b1 = bits ^ (1 << l)
        sign *= -1 if popcount(b1 & below(k)) % 2 else 1
        b2 = b1 | (1 << k)
        ea, eb = (b2 >> (2 * a)) & 3, (b2 >> (2 * b)) & 3
        return ea, eb, sign

    def block(self, C, outside, active=None):
        """exp(-beta_slice (H0 + lam V_C)) on configurations equal to
        ``outside`` (a full config; entries on C ignored) away from C.

        Returns (blocks, pos): ``pos`` maps the local states on C to an index
        and ``blocks.element(i, j)`` reads the exponential."""
        C = tuple(sorted(C))
        key_out = tuple(k for i, k in enumerate(outside) if i not in C)
        key = (C, key_out, active)
        if key in self._block_cache:
            return self._block_cache[key]
        if len(C) > MAX_BLOCK_SITES:
            raise ValueError(f"block with {len(C)} sites exceeds cap {MAX_BLOCK_SITES}")
        locals_ = list(product(range(self.nloc), repeat=len(C)))
        pos = {loc: n for n, loc in enumerate(locals_)}
        dim = len(locals_)
        rows, cols, vals = [], [], []
        diag = np.zeros(dim)
        base = list(outside)
        hops = self.hops_inside(C)
        coef = self.params.lam * (-self.params.t)
        cidx = {site: n for n, site in enumerate(C)}
        for col, loc in enumerate(locals_):
            cfg = base[:]
            for site, k in zip(C, loc):
                cfg[site] = k
            diag[col] = self.energy(cfg, active)
            if not hops or coef == 0:
                continue
            bits = self.ebits(cfg)
            for a, b, s in hops:
                res = self.apply_hop(cfg, a, b, s, bits)
                if res is None:
                    continue
                ea, eb, sign = res
                pa, pb = self.phonons(cfg[a]), self.phonons(cfg[b])
                for qa in range(self.nph):
                    amp_a = self.plus[qa, pa]
                    for qb in range(self.nph):
                        amp = coef * sign * amp_a * self.minus[qb, pb]
                        if amp == 0:
                            continue
                        new = list(loc)
                        new[cidx[a]] = ea * self.nph + qa
                        new[cidx[b]] = eb * self.nph + qb
                        rows.append(pos[tuple(new)])
                        cols.append(col)
                        vals.append(amp)
        V = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
        out = _BlockExp(diag, V, self.beta_slice, np.isreal(self.params.lam))
        self._block_cache[key] = (out, pos)
        return out, pos

    def T_element(self, B, n_from, n_to, active=None):
        """<n_from| T(B) |n_to>; energies summed over ``active`` sites.
        Sites outside ``active`` must not neighbour B (their energy is then
        a constant factor of the block)."""
        B = tuple(sorted(B))
        diff = {i for i in range(self.N) if n_from[i] != n_to[i]}
        if not diff <= set(B):
            return 0.0
        total = 0.0
        for r in range(len(B) + 1):
            for C in combinations(B, r):
                if not diff <= set(C):
                    continue
                sign = -1 if (len(B) - r) % 2 else 1
                if not C or not self.hops_inside(C):
                    if diff:
                        continue
                    total += sign * np.exp(-self.beta_slice * self.energy(n_to, active))
                    continue
                val, pos = self.block(C, n_to, active)
                total += sign * val.element(pos[tuple(n_from[i] for i in C)], pos[tuple(n_to[i] for i in C)])
        return total

    def allowed_B(self, sites):
        """Unions of hop supports B (including the empty set) with
        thickening inside ``sites``."""
        sites = frozenset(sites)
        inner = [e for e in self.edges if e[0] in sites and e[1] in sites]
        found = {frozenset()}
        for r in range(1, len(inner) + 1):
            for es in combinations(inner, r):
                B = frozenset(i for e in es for i in e)
                if self.thick(B) <= sites:
                    found.add(B)
        return sorted(found, key=lambda b: (len(b), sorted(b)))

    # -------------------------------------------------------------- dense reference
    def hamiltonian_dense(self):
        """Full relative Hamiltonian in the local product basis (site 0 most
        significant); small instances only."""
        dim = self.nloc ** self.N
        if dim > 5000:
            raise ValueError("instance too large for the dense reference")
        configs = list(product(range(self.nloc), repeat=self.N))
        pos = {c: n for n, c in enumerate(configs)}
        H = np.zeros((dim, dim), dtype=complex)
        coef = self.params.lam * (-self.params.t)
        hops = self.hops_inside(range(self.N))
        for col, cfg in enumerate(configs):
            H[col, col] = self.energy(cfg)
            bits = self.ebits(cfg)
            for a, b, s in hops:
                res = self.apply_hop(cfg, a, b, s, bits)
                if res is None:
                    continue
                ea, eb, sign = res
                pa, pb = self.phonons(cfg[a]), self.phonons(cfg[b])
                for qa in range(self.nph):
                    for qb in range(self.nph):
                        new = list(cfg)
                        new[a], new[b] = ea * self.nph + qa, eb * self.nph + qb
                        H[pos[tuple(new)], col] += coef * sign * self.plus[qa, pa] * self.minus[qb, pb]
        return H, configs

    def T_dense(self, B):
        _, configs = self.hamiltonian_dense() if not hasattr(self, "_configs") else (None, self._configs)
        self._configs = configs
        dim = len(configs)
        out = np.zeros((dim, dim), dtype=complex)
        for r, a in enumerate(configs):
            for c, b in enumerate(configs):
                if all(a[i] == b[i] for i in range(self.N) if i not in B):
                    out[r, c] = self.T_element(B, a, b)
        return out

    # -------------------------------------------------------------- activities
    def spatial_collar(self, D, t):
        """Sites outside D^(t) whose ball U meets D^(t)."""
        Dt = {i for i, s in D if s == t}
        out = set()
        for i in Dt:
            out |= set(self.ball[i][0])
        return out - Dt

    def collar(self, D):
        """Ground cubes whose configuration enters the activity of D: the
        spatial collar of every slice plus the time neighbours of D."""
        D = frozenset(D)
        out = set()
        for t in range(1, self.M + 1):
            out |= {(i, t) for i in self.spatial_collar(D, t)}
        for i, t in D:
            for s in (self.st.shift_time(t, 1), self.st.shift_time(t, -1)):
                if (i, s) not in D:
                    out.add((i, s))
        return frozenset(out)

    def collar_components(self, D):
        """Face-connected pieces of the collar; each carries one label."""
        col = self.collar(D)
        return _index_components(col, self) if col else []

    def labelings(self, D):
        """Admissible labels on the collar pieces of D; a piece containing a
        cube whose ball reaches outside the lattice carries the boundary label."""
        pieces = self.collar_components(D)
        forced = [any(self.ball[i][1] for i, _ in K) for K in pieces]
        choices = [(self.label,) if f else self.labels for f in forced]
        for combo in product(*choices):
            yield dict(zip(pieces, combo))

    def fill(self, D, labels, shell=True):
        """Local ground state for the cubes outside D.

        ``labels`` maps cube sets to ground labels. With ``shell`` the sites
        of the ball of a spatial-collar cube inherit that cube's label, since
        a ground cube forces its whole ball into the ground configuration.
        Returns None when two collar cubes demand different labels."""
        D = frozenset(D)
        lab = {}
        for K, m in labels.items():
            for c in K:
                lab[c] = m
        if shell:
            for t in range(1, self.M + 1):
                Dt = {i for i, s in D if s == t}
                for y in self.spatial_collar(D, t):
                    m = lab[(y, t)]
                    for z in self.ball[y][0]:
                        if z in Dt:
                            continue
                        if lab.setdefault((z, t), m) != m:
                            return None
        return {c: self.ground[lab.get(c, self.label)][c[0]]
                for c in self.all_cubes() if c not in D}

    def slice_states(self, t, D_sites, gstar, free_extra=frozenset(), check=None):
        """Valid (B, config) pairs of slice t.

        The configuration equals the ground filling off ``D_sites``. Among the
        ``check`` sites (default: all) the excited ones must be exactly
        ``D_sites``, except on ``free_extra`` (observable sites, which may be
        excited or not)."""
        free = sorted(D_sites)
        base = [gstar.get((i, t)) for i in range(self.N)]
        target = D_sites - free_extra
        check = range(self.N) if check is None else sorted(set(check) | D_sites)
        out = []
        Bs = self.allowed_B(D_sites)
        for loc in product(range(self.nloc), repeat=len(free)):
            cfg = base[:]
            for i, k in zip(free, loc):
                cfg[i] = k
            cfg = tuple(cfg)
            plain = self.excited_sites(cfg, sites=check)
            for B in Bs:
                exc = plain | self.thick(B) if B else plain
                if exc - free_extra == target and exc <= D_sites:
                    out.append((B, cfg))
        return out

    def slice_sets(self, D, labels, psi=None, local=True):
        """Per-slice valid states. ``local`` checks excitation only on D and
        its collar (single-contour activity); otherwise on every site (the
        joint activity of a whole family, labels given per complement
        component)."""
        D = frozenset(D)
        gstar = self.fill(D, labels, shell=local)
        if gstar is None:
            return None
        psi_sites = frozenset(psi.sites) if psi is not None else frozenset()
        if psi is not None and not {(i, 1) for i in psi_sites} <= D:
            raise ValueError("observable anchor is not contained in the support")
        states, actives = [], []
        for t in range(1, self.M + 1):
            Dt = frozenset(i for i, s in D if s == t)
            check = self.spatial_collar(D, t) if local else None
            states.append(self.slice_states(t, Dt, gstar, psi_sites if t == 1 else frozenset(), check))
            actives.append(frozenset(check | Dt) if local else None)
        return states, actives

    def _transfer(self, rows, states_cur, active=None):
        cols = sorted({c for _, c in states_cur})
        rpos = {c: n for n, c in enumerate(rows)}
        cpos = {c: n for n, c in enumerate(cols)}
        A = np.zeros((len(rows), len(cols)), dtype=complex)
        groups = {}
        for B, c in states_cur:
            if not B:
                if c in rpos:
                    A[rpos[c], cpos[c]] += self.T_element(B, c, c, active)
                continue
            if B not in groups:
                index = {}
                for r in rows:
                    index.setdefault(tuple(k for i, k in enumerate(r) if i not in B), []).append(r)
                groups[B] = index
            key = tuple(k for i, k in enumerate(c) if i not in B)
            for r in groups[B].get(key, ()):
                v = self.T_element(B, r, c, active)
                if v != 0:
                    A[rpos[r], cpos[c]] += v
        return A, cols

    def activity_from_states(self, states, psi=None, classical_only=False, actives=None):
        """Trace of the product of slice transfer matrices; with ``psi`` the
        observable is inserted between slice M and slice 1."""
        if states is None:
            return 0.0
        actives = [None] * self.M if actives is None else actives
        if classical_only:
            states = [[(B, c) for B, c in s if not B] for s in states]
        if any(not s for s in states):
            return 0.0
        last = sorted({c for _, c in states[-1]})
        if psi is None:
            A, cols = self._transfer(last, states[0], actives[0])
            prod_ = A
        else:
            entry = sorted({v for r in last for v in psi.targets(r)})
            A, cols = self._transfer(entry, states[0], actives[0])
            P = np.array([[psi.element(r, c) for c in entry] for r in last])
            prod_ = P @ A
        for t in range(1, self.M):
            A, cols = self._transfer(cols, states[t], actives[t])
            prod_ = prod_ @ A
        return np.trace(prod_)

    def complement_components(self, D):
        """Components of the complement of D in the lattice space-time, with a
        flag telling whether each contains a cube whose ball leaves the lattice."""
        D = frozenset(D)
        rest = [c for c in self.all_cubes() if c not in D]
        comps = _index_components(rest, self) if rest else []
        return [(comp, any(self.ball[i][1] for i, _ in comp)) for comp in comps]

    def family_labelings(self, D):
        """Label assignments to the complement components of an excited set."""
        comps = self.complement_components(D)
        free = [c for c, ext in comps if not ext]
        fixed = {c: self.label for c, ext in comps if ext}
        for choice in product(self.labels, repeat=len(free)):
            lab = dict(fixed)
            lab.update(zip(free, choice))
            yield lab

    def activity(self, D, labels, psi=None, local=True):
        """rho(Y) for support D; ``labels`` per collar piece (``local``) or per
        complement component (joint evaluation of a family)."""
        sets = self.slice_sets(D, labels, psi, local)
        if sets is None:
            return ActivityValue(0j, 0j, record={"consistent": False})
        states, actives = sets
        rho = self.activity_from_states(states, psi, actives=actives)
        cl = self.activity_from_states(states, psi, classical_only=True, actives=actives)
        return ActivityValue(complex(rho), complex(cl), record={"consistent": True})

    def is_winding(self, D):
        pts = {(self.lattice.sites[i], t) for i, t in D}
        return bool(winding_sites(pts, self.M)) or winds(pts, self.st)

    def winding_columns(self, D):
        return {i for i, _ in D if all((i, t) in D for t in range(1, self.M + 1))}

    def make_contour(self, D, labels):
        D = frozenset(D)
        return Contour(D, dict(labels), winding=self.is_winding(D))

    # -------------------------------------------------------------- geometry of cube sets
    def all_cubes(self):
        return [(i, t) for t in range(1, self.M + 1) for i in range(self.N)]

    def cube_neighbors(self, c):
        i, t = c
        out = {(i, self.st.shift_time(t, 1)), (i, self.st.shift_time(t, -1))}
        out |= {(j, t) for j, _ in self.nbrs[i] if j is not None}
        out.discard(c)
        return out

    def connected_sets(self, max_size):
        """All face-connected cube sets with at most ``max_size`` cubes."""
        found = set()
        layer = {frozenset([c]) for c in self.all_cubes()}
        while layer:
            found |= layer
            nxt = set()
            for S in layer:
                if len(S) >= max_size:
                    continue
                for c in S:
                    for n in self.cube_neighbors(c):
                        if n not in S:
                            nxt.add(S | {n})
            layer = nxt - found
        return sorted(found, key=lambda S: (len(S), sorted(S)))

    def enumerate_contours(self, max_size):
        out = []
        for D in self.connected_sets(max_size):
            for lab in self.labelings(D):
                out.append(self.make_contour(D, lab))
        return out

    def contour_labels(self, Di, comp_labels):
        """Collar labels of a single contour ``Di`` read off the complement
        components of the family it belongs to."""
        where = {}
        for comp, m in comp_labels.items():
            for c in comp:
                where[c] = m
        out = {}
        for K in self.collar_components(Di):
            labs = {where[c] for c in K if c in where}
            if len(labs) != 1 or any(c not in where for c in K):
                raise MismatchError(f"collar piece of size {len(K)} sees labels {sorted(labs)}")
            out[K] = labs.pop()
        return out

    # -------------------------------------------------------------- extraction
    def classify_cubes(self, slices):
        """Map every cube to its ground label, or 0 when excited.

        ``slices[t-1]`` is a SliceLabel (B_t, n^t); B_t is the hopping support
        of the transition from slice t-1 to slice t."""
        if len(slices) != self.M:
            raise ValueError("need one slice per time step")
        out = {}
        for t, sl in enumerate(slices, start=1):
            thick = self.thick(sl.B) if sl.B else frozenset()
            for i in range(self.N):
                out[(i, t)] = 0 if i in thick else (self.ground_label(sl.config, i) or 0)
        return out

    def extract_contours(self, slices):
        """Contours of a slice sequence; raises MismatchError when the labels
        of the ground cubes are inconsistent."""
        cls = self.classify_cubes(slices)
        D = frozenset(c for c, v in cls.items() if v == 0)
        comp_labels = {}
        for comp, ext in self.complement_components(D):
            labs = {cls[c] for c in comp}
            if len(labs) != 1:
                raise MismatchError(f"complement component carries labels {sorted(labs)}")
            m = labs.pop()
            if ext and m != self.label:
                raise MismatchError("outer component does not carry the boundary label")
            comp_labels[comp] = m
        out = []
        for Di in index_components(D, self) if D else []:
            lab = self.contour_labels(Di, comp_labels)
            q = frozenset((i, t) for (i, t) in Di if slices[t - 1].B and i in self.thick(slices[t - 1].B))
            out.append(Contour(Di, lab, q, Di - q, self.is_winding(Di)))
        return out, comp_labels

    def regenerate(self, contours, comp_labels):
        """Cube classification rebuilt from contours and complement labels."""
        out = {}
        for comp, m in comp_labels.items():
            for c in comp:
                out[c] = m
        for Y in contours:
            for c in Y.support:
                out[c] = 0
        return out

    # -------------------------------------------------------------- contour sums
    def family_weight(self, D, comp_labels, psi=None, cache=None, joint=False):
        """Product of contour activities for the excited set ``D`` with the
        given complement labels, optionally with the joint activity."""
        cache = {} if cache is None else cache
        comps = index_components(D, self)
        psi_cubes = {(i, 1) for i in psi.sites} if psi is not None else set()
        prod_ = 1.0 + 0j
        rhos = []
        for Di in comps:
            lab = self.contour_labels(Di, comp_labels)
            anchored = bool(psi_cubes & Di)
            key = (Di, tuple(sorted((min(K), m) for K, m in lab.items())), anchored)
            if key not in cache:
                cache[key] = self.activity(Di, lab, psi if anchored else None).rho
            rhos.append(cache[key])
            prod_ *= cache[key]
        jv = self.activity(D, comp_labels, psi, local=False).rho if joint and len(comps) > 1 else None
        return prod_, rhos, jv

    def reconstruct_partition(self, psi=None, joint=True, max_cubes=16):
        """Contour-gas sum over every excited set of the space-time lattice.

        Returns a dict with Z_contour, Z_direct and the factorization record.
        With ``psi`` the anchored sum is compared with Tr(Psi exp(-beta H))."""
        cubes = self.all_cubes()
        if len(cubes) > max_cubes:
            raise ValueError(f"{len(cubes)} cubes exceed the exhaustive cap {max_cubes}")
        anchor = frozenset((i, 1) for i in psi.sites) if psi is not None else frozenset()
        cache, terms, fact, mismatches = {}, [], [], 0
        for r in range(len(cubes) + 1):
            for D in combinations(cubes, r):
                D = frozenset(D)
                if not anchor <= D:
                    continue
                for lab in self.family_labelings(D):
                    try:
                        w, rhos, jv = self.family_weight(D, lab, psi, cache, joint)
                    except MismatchError:
                        mismatches += 1
                        continue
                    terms.append(w)
                    if jv is not None:
                        scale = max(1.0, abs(w))
                        fact.append({"support": sorted(D), "joint": jv, "product": w,
                                     "deviation": abs(jv - w) / scale})
        z_contour = math.fsum(np.real(terms)) + 1j * math.fsum(np.imag(terms))
        z_direct = self.z_direct() if psi is None else self.observable_trace(psi)
        z_plain = z_direct if psi is None else self.z_direct()
        return {
            "Z_contour": z_contour,
            "Z_direct": z_direct,
            "deviation": abs(z_contour - z_direct) / abs(z_plain),
            "factorization": fact,
            "max_factorization_deviation": max((f["deviation"] for f in fact), default=0.0),
            "n_families": len(terms),
            "mismatched": mismatches,
            "n_activities": len(cache),
        }

    def observable_trace(self, psi):
        """Tr(Psi exp(-beta (H - e_e |Lambda|))) in the local product basis."""
        H, configs = self.hamiltonian_dense()
        E = sla.expm(-self.params.beta * H)
        return np.sum(psi.matrix(configs) * E.T)

    def classical_split(self, D, labels):
        """Classical (hopping-free) part of rho for a union of full columns,
        evaluated as sum_electrons exp(-beta E_e) prod_x S_p(x)."""
        cols = self.winding_columns(D)
        if {(i, t) for i in cols for t in range(1, self.M + 1)} != set(D):
            return 0.0
        gstar = self.fill(D, labels)
        if gstar is None:
            return 0.0
        base = [gstar.get((i, 1)) for i in range(self.N)]
        collar = self.spatial_collar(D, 1)
        free = sorted(cols)
        beta, w0 = self.params.beta, self.params.omega0
        full = sum(np.exp(-beta * w0 * n) for n in range(self.nph))
        total = 0.0
        for es in product(range(4), repeat=len(free)):
            cfg = base[:]
            for i, e in zip(free, es):
                cfg[i] = e * self.nph
            cfg = tuple(cfg)
            if any(self.electron_excited(cfg, j) for j in collar):
                continue
            e_el = sum(self.site_energy(cfg, i) for i in free)
            sp = 1.0
            for i in free:
                sp *= full if self.electron_excited(cfg, i) else full - 1.0
            total += np.exp(-beta * e_el) * sp
        return total

    # -------------------------------------------------------------- Duhamel pieces
    def block_basis(self, B, outside):
        B = tuple(sorted(B))
        out = []
        for loc in product(range(self.nloc), repeat=len(B)):
            cfg = list(outside)
            for i, k in zip(B, loc):
                cfg[i] = k
            out.append(tuple(cfg))
        return out

    def propagator_block(self, B, outside):
        """T(B) restricted to configurations equal to ``outside`` off B, by
        Moebius inversion over sub-block exponentials."""
        if len(B) > MAX_BLOCK_SITES:
            raise ValueError(f"|B| = {len(B)} exceeds cap {MAX_BLOCK_SITES}")
        basis = self.block_basis(B, outside)
        out = np.array([[self.T_element(B, a, b) for b in basis] for a in basis], dtype=complex)
        return out, basis

    def _block_parts(self, C, basis):
        """Diagonal energies and hopping matrix (hops inside C) on ``basis``."""
        pos = {c: n for n, c in enumerate(basis)}
        E = np.array([self.energy(c) for c in basis])
        V = np.zeros((len(basis), len(basis)), dtype=complex)
        coef = -self.params.t
        for col, cfg in enumerate(basis):
            bits = self.ebits(cfg)
            for a, b, s in self.hops_inside(C):
                res = self.apply_hop(cfg, a, b, s, bits)
                if res is None:
                    continue
                ea, eb, sign = res
                pa, pb = self.phonons(cfg[a]), self.phonons(cfg[b])
                for qa in range(self.nph):
                    for qb in range(self.nph):
                        new = list(cfg)
                        new[a], new[b] = ea * self.nph + qa, eb * self.nph + qb
                        V[pos[tuple(new)], col] += coef * sign * self.plus[qa, pa] * self.minus[qb, pb]
        return E, V

    def first_order_term(self, B, outside):
        """First-order piece of T(B): -lam int_0^b exp(-s H0) V_B exp(-(b-s) H0) ds,
        evaluated in the (diagonal) eigenbasis of H0."""
        basis = self.block_basis(B, outside)
        E, V = self._block_parts(B, basis)
        b = self.beta_slice
        Ea, Eb = np.meshgrid(E, E, indexing="ij")
        diff = Eb - Ea
        with np.errstate(divide="ignore", invalid="ignore"):
            kern = np.where(np.abs(diff) > 1e-12,
                            (np.exp(-b * Ea) - np.exp(-b * Eb)) / np.where(diff == 0, 1, diff),
                            b * np.exp(-b * Ea))
        return -self.params.lam * V * kern, basis

    def duhamel_truncated(self, B, outside, order_cut, quad_nodes=12):
        """T(B) from the time-ordered Duhamel series through total order
        ``order_cut``; the simplex integrals use nested Gauss-Legendre rules.
        Only hop sequences whose supports cover B exactly are kept (Moebius
        over subsets of B applied order by order)."""
        if order_cut < 0:
            raise ValueError("order_cut must be non-negative")
        basis = self.block_basis(B, outside)
        E, _ = self._block_parts((), basis)
        b = self.beta_slice
        x, w = np.polynomial.legendre.leggauss(quad_nodes)
        x, w = (x + 1) / 2, w / 2
        lam = self.params.lam
        total = np.zeros((len(basis), len(basis)), dtype=complex)
        B = tuple(sorted(B))
        for r in range(len(B) + 1):
            for C in combinations(B, r):
                sign = -1 if (len(B) - r) % 2 else 1
                _, V = self._block_parts(C, basis)
                for k in range(order_cut + 1):
                    if k == 0:
                        if not B:
                            total += np.diag(np.exp(-b * E))
                        continue
                    if not np.any(V):
                        continue
                    total += sign * (-lam) ** k * _ordered_integral(E, V, b, k, x, w)
        return total, basis

    # -------------------------------------------------------------- partition functions
    def z_direct(self):
        """Tr exp(-beta (H_ell - e_e |Lambda|)) from the sector-resolved
        transformed Hamiltonian."""
        total = 0.0
        for sec in spin_sectors(self.N):
            space = Space(self.N, self.params.n_max, sec)
            h = transformed_operator(self.params, self.lattice, space, self.label).to_dense()
            h -= self.e_e * self.N * np.eye(len(h))
            if np.isreal(self.params.lam):
                total += np.exp(-self.params.beta * np.linalg.eigvalsh(h)).sum()
            else:
                total += np.trace(sla.expm(-self.params.beta * h))
        return total

    def z_weights(self):
        """Sum of all slice weights: Tr (sum_B T(B))^M in the local basis."""
        H, configs = self.hamiltonian_dense()
        self._configs = configs
        total_T = np.zeros_like(H)
        for B in self.allowed_B(range(self.N)):
            total_T += self.T_dense(B)
        return np.trace(np.linalg.matrix_power(total_T, self.M)), total_T, H


class _BlockExp:
    """exp(-b (diag(E) + V)) computed separately on each connected piece of
    the sparsity graph of V (hopping conserves the spin populations)."""

    def __init__(self, E, V, b, hermitian):
        n = len(E)
        if V.nnz:
            pattern = abs(V)
            ncomp, lab = graph_components(pattern + pattern.T, directed=False)
        else:
            ncomp, lab = n, np.arange(n)
        self.comp = lab
        self.local = np.zeros(n, dtype=int)
        self.mats = []
        members = [[] for _ in range(ncomp)]
        for i, c in enumerate(lab):
            members[c].append(i)
        for c, idx in enumerate(members):
            idx = np.array(idx)
            self.local[idx] = np.arange(len(idx))
            if len(idx) == 1:
                self.mats.append(np.array([[np.exp(-b * (E[idx[0]] + V[idx[0], idx[0]]))]]))
                continue
            h = V[idx][:, idx].toarray() + np.diag(E[idx])
            if hermitian:
                w, U = np.linalg.eigh((h + h.conj().T) / 2)
                self.mats.append((U * np.exp(-b * w)) @ U.conj().T)
            else:
                self.mats.append(sla.expm(-b * h))

    def element(self, i, j):
        if self.comp[i] != self.comp[j]:
            return 0.0
        return self.mats[self.comp[i]][self.local[i], self.local[j]]


def _index_components(cubes, model):
    cubes = set(cubes)
    seen, comps = set(), []
    for c in sorted(cubes, key=lambda c: (c[1], c[0])):
        if c in seen:
            continue
        comp, stack = {c}, [c]
        seen.add(c)
        while stack:
            i, t = stack.pop()
            nb = [(i, model.st.shift_time(t, 1)), (i, model.st.shift_time(t, -1))]
            nb += [(j, t) for j, _ in model.nbrs[i] if j is not None]
            for n in nb:
                if n in cubes and n not in seen:
                    seen.add(n)
                    comp.add(n)
                    stack.append(n)
        comps.append(frozenset(comp))
    return comps


def index_components(cubes, model):
    """Face-connected components of cubes given as (site_index, t)."""
    return _index_components(cubes, model)


def _ordered_integral(E, V, b, k, x, w):
    """b^k int_{0<s_1<...<s_k<1} e^{-b s_1 H0} V e^{-b (s_2-s_1) H0} V ... e^{-b (1-s_k) H0},
    H0 = diag(E), by nested Gauss-Legendre quadrature on the simplex."""
    def rec(level, start, left):
        # left: accumulated operator up to time ``start``; integrate remaining levels
        if level == k:
            return left * np.exp(-b * (1.0 - start) * E)[None, :]
        acc = np.zeros_like(left)
        span = 1.0 - start
        for xi, wi in zip(x, w):
            s = start + span * xi
            step = left * np.exp(-b * (s - start) * E)[None, :]
            acc += wi * span * rec(level + 1, s, step @ V)
        return acc
    return b ** k * rec(0, 0.0, np.eye(len(E), dtype=complex))

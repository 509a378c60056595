"""Hypercubic lattices, the periodic-time space-time lattice and cube geometry.

Sites are integer tuples. The site order is lexicographic on the coordinate
tuple; every other module (fermion mode order, basis order) derives from it.
Distances between sites use the max norm. Hopping and classical bonds are
nearest neighbours along a coordinate axis.
"""

from collections import deque
from dataclasses import dataclass, field
from itertools import product

import numpy as np

MAX_SITES = 4096


@dataclass(frozen=True)
class Lattice:
    d: int
    L: int
    periodic: bool
    sites: tuple
    edges: tuple  # pairs (i, j), i < j, of site indices
    index: dict = field(compare=False, repr=False)

    @property
    def n_sites(self):
        return len(self.sites)

    @property
    def side(self):
        return 2 * self.L

    def wrap(self, x):
        """Map a point of Z^d into the torus representatives [-L, L-1]^d."""
        if not self.periodic:
            return tuple(x)
        return tuple(((xi + self.L) % self.side) - self.L for xi in x)

    def contains(self, x):
        return self.wrap(x) in self.index

    def site_index(self, x):
        return self.index[self.wrap(x)]

    def directions(self):
        out = []
        for axis in range(self.d):
            for step in (1, -1):
                e = [0] * self.d
                e[axis] = step
                out.append(tuple(e))
        return out

    def neighbor_points(self, x):
        """The 2d axis neighbours of x as points (wrapped on the torus).

        On a torus of side 2 both directions along an axis land on the same
        site, and that site is returned twice."""
        return [self.wrap(tuple(a + b for a, b in zip(x, e))) for e in self.directions()]

    def classical_bonds(self):
        """Bonds of the classical nearest-neighbour energy, with multiplicity.

        Free lattice: the edge list. Torus: one bond per site and positive axis
        direction, so a side-2 torus carries each neighbour pair twice, as
        the per-site sum over 2d neighbours demands."""
        if not self.periodic:
            return list(self.edges)
        out = []
        for i, x in enumerate(self.sites):
            for axis in range(self.d):
                y = list(x)
                y[axis] += 1
                out.append((i, self.site_index(tuple(y))))
        return out

    def hopping_edges(self):
        """Bonds carrying electron hopping.

        On the torus only bonds that do not cross the periodic seam are kept,
        so hopping terms never wrap around."""
        if not self.periodic:
            return list(self.edges)
        out = []
        for i, j in self.edges:
            x, y = self.sites[i], self.sites[j]
            if sum(abs(a - b) for a, b in zip(x, y)) == 1:
                out.append((i, j))
        return out


@dataclass(frozen=True)
class SpaceTimeLattice:
    base: Lattice
    M: int

    def cubes(self):
        return [(x, t) for t in range(1, self.M + 1) for x in self.base.sites]

    def shift_time(self, t, step):
        return (t - 1 + step) % self.M + 1


def build_lattice(d, L, periodic=False):
    if d < 1 or L < 1:
        raise ValueError("need d >= 1 and L >= 1")
    if d * np.log2(2 * L) > np.log2(MAX_SITES):
        raise ValueError(f"lattice with (2L)^d = {(2 * L) ** d} sites exceeds {MAX_SITES}")
    sites = tuple(product(range(-L, L), repeat=d))
    index = {x: i for i, x in enumerate(sites)}
    edges = set()
    for i, x in enumerate(sites):
        for axis in range(d):
            for step in (1, -1):
                y = list(x)
                y[axis] += step
                y = tuple(y)
                if periodic:
                    y = tuple(((yi + L) % (2 * L)) - L for yi in y)
                if y in index and index[y] != i:
                    edges.add((min(i, index[y]), max(i, index[y])))
    return Lattice(d, L, periodic, sites, tuple(sorted(edges)), index)


def max_dist(x, y, lattice=None):
    if lattice is not None and lattice.periodic:
        s = lattice.side
        return max(min((a - b) % s, (b - a) % s) for a, b in zip(x, y))
    return max(abs(a - b) for a, b in zip(x, y))


def neighborhood(x, R0, lattice=None):
    """U(x): points within max-norm distance R0 of x (wrapped on a torus)."""
    d = len(x)
    pts = set()
    for off in product(range(-R0, R0 + 1), repeat=d):
        y = tuple(a + b for a, b in zip(x, off))
        pts.add(lattice.wrap(y) if lattice is not None else y)
    return pts


def thicken(B, R0, lattice=None):
    """Points within distance R0 of B; restricted to the lattice when one is given."""
    out = set()
    for x in B:
        out |= neighborhood(x, R0, lattice)
    if lattice is not None:
        out = {y for y in out if y in lattice.index}
    return out


def boundary(B, k, lattice=None):
    """{x not in B : dist(x, B) <= k}.

    With a lattice, points are restricted to it (the inner boundary used for
    propagator blocks); without one, the result lives in Z^d (for B = the whole
    lattice this is the outer boundary layer)."""
    B = set(B)
    return thicken(B, k, lattice) - B


def outer_boundary(lattice, k):
    """Points of Z^d outside a free lattice within distance k of it."""
    return {y for y in thicken(lattice.sites, k) if y not in lattice.index}


def parity(x):
    return 1 if sum(abs(a) for a in x) % 2 == 0 else -1


# ---------------------------------------------------------------- cubes

def cube_neighbors(cube, st):
    x, t = cube
    out = [(x, st.shift_time(t, 1)), (x, st.shift_time(t, -1))]
    for y in st.base.neighbor_points(x):
        if y in st.base.index:
            out.append((y, t))
    return out


def connected_components(cubes, st):
    """Face-connected components of a cube set, time periodic.

    Components are sorted by their minimal member, members sorted within."""
    cubes = set(cubes)
    seen = set()
    comps = []
    for c in sorted(cubes, key=_cube_key):
        if c in seen:
            continue
        comp = {c}
        seen.add(c)
        queue = deque([c])
        while queue:
            cur = queue.popleft()
            for nb in cube_neighbors(cur, st):
                if nb in cubes and nb not in seen:
                    seen.add(nb)
                    comp.add(nb)
                    queue.append(nb)
        comps.append(frozenset(comp))
    comps.sort(key=lambda s: _cube_key(min(s, key=_cube_key)))
    return comps


def _cube_key(c):
    return (c[1], c[0])


def spatial_projection(cubes):
    return {x for x, _ in cubes}


def temporal_projection(cubes):
    return {t for _, t in cubes}


def column(cubes, x):
    """Times t with (x, t) in the set."""
    return {t for y, t in cubes if y == x}


def slice_sites(cubes, t):
    return {x for x, s in cubes if s == t}


def winding_sites(cubes, M):
    """W(D): sites whose whole time column lies in D."""
    full = set(range(1, M + 1))
    return {x for x in spatial_projection(cubes) if column(cubes, x) == full}


def winds(cubes, st):
    """True if a connected cube set wraps around the periodic time direction.

    Walks the component while tracking the lifted (unwrapped) time; reaching
    the same cube with two lifts differing by a multiple of M means a
    non-contractible loop."""
    cubes = set(cubes)
    if not cubes:
        return False
    M = st.M
    start = min(cubes, key=_cube_key)
    lift = {start: start[1]}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        x, t = cur
        moves = [((x, st.shift_time(t, 1)), 1), ((x, st.shift_time(t, -1)), -1)]
        moves += [((y, t), 0) for y in st.base.neighbor_points(x) if y in st.base.index]
        for nb, dt in moves:
            if nb not in cubes:
                continue
            lifted = lift[cur] + dt
            if nb in lift:
                if lift[nb] != lifted:
                    return True
            else:
                lift[nb] = lifted
                queue.append(nb)
    return False

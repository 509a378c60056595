"""Classical part: pair energies, the ground-state phase diagram, ground
configurations, the Peierls gap and numeric checks of the model assumptions.

Everything is written in the normalized coordinates u = U_eff/4d, m = mu/2d
with the classical spin s = n - 1 in {-1, 0, 1}.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .lattice import neighborhood, parity
from .model import ModelParams, nn_sobolev_norm, pair_energy

# Each region is labelled by the unordered pair (s_x, s_y) minimizing h.
REGION_PAIRS = {
    "Sep_plus": (1, 0),
    "Sep_minus": (-1, 0),
    "Sep_zero": (-1, 1),
    "H0": (-1, -1),
    "H1": (0, 0),
    "H2": (1, 1),
}
REGIONS = list(REGION_PAIRS)
FINITE_REGIONS = ("Sep_zero", "H0", "H2")


def pair_table(u, m, W):
    """Six pair energies in REGIONS order; broadcasts over array u, m."""
    return np.stack([pair_energy(a, b, u, m, W) for a, b in REGION_PAIRS.values()])


def classify_region(u, m, W, tol=1e-9):
    if W <= 0:
        raise ValueError("W must be positive")
    e = pair_table(u, m, W)
    best = e.min()
    hits = np.flatnonzero(e <= best + tol)
    return REGIONS[hits[0]] if len(hits) == 1 else "Boundary"


def classify_grid(us, ms, W, tol=1e-9):
    """Region labels on the grid (len(ms), len(us)) as an array of strings."""
    if W <= 0:
        raise ValueError("W must be positive")
    uu, mm = np.meshgrid(us, ms)
    e = pair_table(uu, mm, W)
    best = e.min(axis=0)
    n_hits = (e <= best + tol).sum(axis=0)
    labels = np.array(REGIONS, dtype=object)[e.argmin(axis=0)]
    labels[n_hits > 1] = "Boundary"
    return labels


@dataclass
class GroundConfigSet:
    region: str
    configs: list  # dicts site -> occupation n in {0, 2}
    r: int
    e_e: float
    e_ell: list = field(default_factory=list)


def ground_spin(x, region, label=1):
    if region == "Sep_zero":
        return parity(x) if label == 1 else -parity(x)
    if region == "H0":
        return -1
    if region == "H2":
        return 1
    raise ValueError(f"region {region} has infinite degeneracy")


def ground_energy_per_site(region, u, m, W, d):
    a, b = REGION_PAIRS[region]
    return d * pair_energy(a, b, u, m, W)


def ground_configs(region, lattice, params=None):
    if region not in FINITE_REGIONS:
        raise ValueError(f"region {region} has infinite degeneracy; unsupported")
    labels = (1, 2) if region == "Sep_zero" else (1,)
    configs = [{x: ground_spin(x, region, lab) + 1 for x in lattice.sites} for lab in labels]
    e_e = np.nan
    if params is not None:
        e_e = ground_energy_per_site(region, params.u, params.m, params.W, lattice.d)
    return GroundConfigSet(region, configs, len(configs), e_e, [e_e] * len(configs))


def neel_energy_per_site(params):
    return params.d * pair_energy(1, -1, params.u, params.m, params.W)


# ----------------------------------------------------------------- Peierls gap

def _star(d):
    """The site 0 followed by its 2d axis neighbours."""
    pts = [(0,) * d]
    for axis in range(d):
        for step in (1, -1):
            y = [0] * d
            y[axis] = step
            pts.append(tuple(y))
    return pts


def _site_potential(spins, d, u, m, W):
    sx = spins[0]
    return 0.5 * sum(pair_energy(sx, sy, u, m, W) for sy in spins[1:])


def peierls_gap(params, region="Sep_zero", exhaustive_cap=20000):
    """gamma_e = min over configurations excited at x of Phi_eff,x - e_e.

    Excitation uses the max-norm ball U(x) of radius R0. Returns
    (gamma_e, witness) with witness a dict point -> spin. When 3^{|U(x)|}
    exceeds ``exhaustive_cap`` the off-axis points of U(x) are handled
    analytically: they do not enter Phi_eff,x, so any axis pattern can be
    made excited by a mismatch there."""
    d, u, m, W = params.d, params.u, params.m, params.W
    e_e = ground_energy_per_site(region, u, m, W, d)
    origin = (0,) * d
    ball = sorted(neighborhood(origin, params.R0))
    star = _star(d)
    labels = (1, 2) if region == "Sep_zero" else (1,)
    grounds = [{y: ground_spin(y, region, lab) for y in ball} for lab in labels]
    best, witness = np.inf, None
    if 3 ** len(ball) <= exhaustive_cap:
        pos = {y: k for k, y in enumerate(ball)}
        idx = [pos[y] for y in star]
        for spins in product((-1, 0, 1), repeat=len(ball)):
            if any(all(spins[pos[y]] == g[y] for y in ball) for g in grounds):
                continue
            val = _site_potential([spins[k] for k in idx], d, u, m, W) - e_e
            if val < best:
                best, witness = val, dict(zip(ball, spins))
        return best, witness
    off_axis = [y for y in ball if y not in star]
    for spins in product((-1, 0, 1), repeat=len(star)):
        conf = dict(zip(star, spins))
        star_ground = any(all(conf[y] == g[y] for y in star) for g in grounds)
        if star_ground and not off_axis:
            continue
        val = _site_potential(list(spins), d, u, m, W) - e_e
        if val < best:
            if star_ground:
                g = next(g for g in grounds if all(conf[y] == g[y] for y in star))
                conf = dict(conf)
                conf[off_axis[0]] = 0 if g[off_axis[0]] != 0 else 1
            best, witness = val, conf
    return best, witness


def potential_derivative_bound(params, g0=None):
    """C0: max over axis patterns of |d Phi_eff,x / d nu| for nu in (U, mu, g).

    The g derivative is evaluated at |g| = g0 (default: the current |g|),
    its largest value on |g| <= g0."""
    d = params.d
    g0 = abs(params.g) if g0 is None else g0
    out = {"U": 0.0, "mu": 0.0, "g": 0.0}
    for spins in product((-1, 0, 1), repeat=2 * d + 1):
        sx, rest = spins[0], spins[1:]
        sq = 0.5 * sum(sx * sx + sy * sy for sy in rest)
        lin = 0.5 * sum(sx + sy for sy in rest)
        out["U"] = max(out["U"], abs(sq / (4 * d)))
        out["mu"] = max(out["mu"], abs(lin / (2 * d)))
        out["g"] = max(out["g"], abs(sq / (4 * d) * 4 * g0 / params.omega0))
    return out


# ----------------------------------------------------------------- assumptions

@dataclass
class AssumptionReport:
    passed: dict
    witnesses: dict
    gamma_e: float
    C0: dict
    details: dict = field(default_factory=dict)

    @property
    def all_pass(self):
        return all(self.passed.values())


def _e_ell(params):
    # both Neel configurations have the same energy density
    e = neel_energy_per_site(params)
    return np.array([e, e])


def check_assumptions(points, base, gamma_q, beta0=None, g0=None, step=1e-5):
    """Check (A.1)-(A.6) over parameter points given as (U, mu) pairs.

    ``base`` supplies the remaining ModelParams fields."""
    passed = {k: True for k in ("A1", "A2", "A3", "A4", "A5", "A6")}
    witnesses = {}
    gaps = []
    for U, mu in points:
        p = base.with_(U=U, mu=mu)
        region = classify_region(p.u, p.m, p.W)
        if region != "Sep_zero":
            passed["A1"] = False
            witnesses.setdefault("A1", (U, mu, region))
            continue
        # (A.2): central differences at two steps agree with each other
        grads = []
        for h in (step, 2 * step):
            gU = (_e_ell(p.with_(U=U + h)) - _e_ell(p.with_(U=U - h))) / (2 * h)
            gm = (_e_ell(p.with_(mu=mu + h)) - _e_ell(p.with_(mu=mu - h))) / (2 * h)
            grads.append(np.stack([gU, gm], axis=1))
        if np.max(np.abs(grads[0] - grads[1])) > 1e-6:
            passed["A2"] = False
            witnesses.setdefault("A2", (U, mu))
        # (A.3): rank r - 1 = 1
        if np.linalg.matrix_rank(grads[0], tol=1e-8) != 1:
            passed["A3"] = False
            witnesses.setdefault("A3", (U, mu, grads[0].tolist()))
        gap, wit = peierls_gap(p)
        gaps.append(gap)
        if not gap > 0:
            passed["A4"] = False
            witnesses.setdefault("A4", (U, mu, gap, wit))
    C0 = potential_derivative_bound(base, g0)
    if not all(np.isfinite(v) for v in C0.values()):
        passed["A5"] = False
    tnorm = nn_sobolev_norm(base.t, gamma_q, base.d)
    if not np.isfinite(tnorm):
        passed["A6"] = False
    gamma_e = min(gaps) if gaps else np.nan
    return AssumptionReport(passed, witnesses, gamma_e, C0, {"t_norm": tnorm, "beta0": beta0})

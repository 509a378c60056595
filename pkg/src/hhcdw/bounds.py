"""Numeric audits of the Peierls-type activity bounds.

Activities from ``contour`` are relative to the Neel energy density e_e, so
every bound below is checked with the factor exp(-beta_slice e_e |supp Y|)
divided out. All comparisons are made in log space.
"""

import math
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from .classical import peierls_gap, potential_derivative_bound
from .contour import ContourModel
from .fock import exp_i_position
from .model import nn_sobolev_norm, pair_energy

SLACK = 1e-12


def f(x):
    """f(x) = -log(1 - exp(-x)) / x, positive and decreasing on x > 0."""
    x = np.asarray(x, dtype=float)
    return -np.log1p(-np.exp(-x)) / x


@dataclass
class BoundAudit:
    name: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    vacuous: bool = False
    inconclusive: bool = False
    witness: str = ""
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def _audit(name, lhs, rhs, witness="", vacuous=False, log=True, **extra):
    """pass <=> rhs - lhs >= -SLACK (log scale when ``log``)."""
    margin = rhs - lhs
    return BoundAudit(name, float(lhs), float(rhs), float(margin),
                      bool(margin >= -SLACK) and not vacuous, vacuous, False, witness, extra)


@dataclass
class Constants:
    beta_slice: float
    gamma_e: float
    e_e: float
    gamma_q: float
    beta0: float
    R0: int
    d: int
    omega0: float
    alpha: float
    t_norm: float
    C0: float

    @property
    def peierls_excess(self):
        return (self.gamma_q - 1) * self.R0 ** (-self.d) - self.gamma_e - abs(self.e_e)

    @property
    def gamma_tilde(self):
        return min(min(self.gamma_e, self.omega0), self.peierls_excess)

    @property
    def gamma(self):
        return self.gamma_tilde - 5 * math.log(2)

    @property
    def omega_dagger(self):
        return self.omega0 - math.log(2) / self.beta_slice

    @property
    def gamma_dagger(self):
        first = (self.gamma_q - 1 - self.omega0) * self.R0 ** (-self.d) - self.gamma_e - abs(self.e_e)
        second = self.beta_slice * min(self.gamma_e, self.omega_dagger * self.R0 ** (-self.d))
        return min(first, second) - 5 * math.log(2)

    @property
    def c(self):
        return -self.omega0 * float(f(self.omega0 * self.beta0 / 2))

    @property
    def z(self):
        return 1.0 / (1.0 - math.exp(-self.beta_slice * self.omega0))

    def as_dict(self):
        out = asdict(self)
        for k in ("peierls_excess", "gamma_tilde", "gamma", "omega_dagger", "gamma_dagger", "c", "z"):
            out[k] = getattr(self, k)
        return out


def constants(params, gamma_q, beta0):
    gamma_e, _ = peierls_gap(params)
    e_e = params.d * pair_energy(1, -1, params.u, params.m, params.W)
    der = potential_derivative_bound(params)
    return Constants(params.beta_slice, float(gamma_e), float(e_e), float(gamma_q), float(beta0),
                     params.R0, params.d, params.omega0, params.alpha,
                     float(nn_sobolev_norm(params.t, gamma_q, params.d)),
                     float(max(der["mu"], der["U"])))


def minimal_gamma_q(gamma_e, e_e, R0, d):
    """Infimum of gamma_Q with (gamma_Q - 1) R0^-d - gamma_e - |e_e| > 0."""
    return 1 + R0 ** d * (gamma_e + abs(e_e))


def admissible_lambda(params, gamma_q):
    """Largest |lambda| with (e - 1) beta_slice |lambda| ||t||_gamma_Q <= 1."""
    return 1.0 / ((math.e - 1) * params.beta_slice * nn_sobolev_norm(params.t, gamma_q, params.d))


def check_hypotheses(params, beta0, gamma_q):
    k = constants(params, gamma_q, beta0)
    lam = params.lam
    conv = (math.e - 1) * k.beta_slice * abs(lam) * k.t_norm
    out = {
        "constants": k.as_dict(),
        "lambda_real": bool(np.isreal(lam)),
        "convergence": {"value": conv, "ok": conv <= 1 + SLACK},
        "peierls_excess": {"value": k.peierls_excess, "ok": k.peierls_excess > 0},
        "derivative_excess": {
            "value": (gamma_q - 1 - k.omega0) * k.R0 ** (-k.d) - k.gamma_e - abs(k.e_e),
            "ok": (gamma_q - 1 - k.omega0) * k.R0 ** (-k.d) - k.gamma_e - abs(k.e_e) > 0},
        "beta_slice_vs_beta0": {"value": k.beta_slice - beta0 / 2, "ok": k.beta_slice >= beta0 / 2},
        "omega_dagger": {"value": k.omega_dagger, "ok": k.omega_dagger > 0},
        "gamma": {"value": k.gamma, "ok": k.gamma > 0},
        "gamma_dagger": {"value": k.gamma_dagger, "ok": k.gamma_dagger > 0},
        "alpha": {"value": k.alpha, "ok": k.alpha > 0},
        "minimal_gamma_q": minimal_gamma_q(k.gamma_e, k.e_e, k.R0, k.d),
        "admissible_lambda": admissible_lambda(params, gamma_q),
    }
    base = out["lambda_real"] and out["convergence"]["ok"] and out["peierls_excess"]["ok"]
    out["activity_ok"] = base and out["gamma"]["ok"]
    out["winding_ok"] = out["activity_ok"] and out["beta_slice_vs_beta0"]["ok"]
    out["derivative_ok"] = (out["winding_ok"] and out["derivative_excess"]["ok"]
                            and out["omega_dagger"]["ok"] and out["gamma_dagger"]["ok"]
                            and out["alpha"]["ok"])
    return out


def _log_abs(x):
    return -math.inf if x == 0 else math.log(abs(x))


def _witness(Y):
    return f"supp={sorted(Y.support)} labels={Y.label_key()}"


# ------------------------------------------------------------------ activities

def audit_activity_bound(model, Y, consts, hyp, rho=None):
    """|rho(Y)| <= exp(-(gamma [+ beta c]) |supp Y|) (relative energies)."""
    rho = model.activity(Y.support, Y.labels).rho if rho is None else rho
    n = len(Y.support)
    rate = consts.gamma + (consts.beta_slice * consts.c if Y.winding else 0.0)
    name = "rho_winding" if Y.winding else "rho_nonwinding"
    vac = not (hyp["winding_ok"] if Y.winding else hyp["activity_ok"])
    return _audit(name, _log_abs(rho), -rate * n, _witness(Y), vac,
                  rho=complex(rho), size=n, winding=Y.winding, rate=-_log_abs(rho) / n)


def audit_psi_bound(model, Y, psi, consts, hyp, rho=None):
    """|rho_Psi| <= ||Psi|| exp(-beta c |supp|) exp(-gamma |supp - D(Psi)|) (1 + exp(-gamma))^|D(Psi)|."""
    rho = model.activity(Y.support, Y.labels, psi).rho if rho is None else rho
    anchor = {(i, 1) for i in psi.sites}
    n, na = len(Y.support), len(anchor)
    g = consts.gamma
    rhs = (math.log(psi.norm) - consts.beta_slice * consts.c * n - g * (n - na)
           + na * math.log1p(math.exp(-g))) if psi.norm > 0 else -math.inf
    return _audit("rho_psi", _log_abs(rho), rhs, _witness(Y), not hyp["winding_ok"],
                  rho=complex(rho), size=n)


# ------------------------------------------------------------------ phonon factor

def _ordered_slice_operator(times, signs, alpha, omega0, beta_slice, n_max):
    """exp(-s1 w N) e^{i e1 a q} exp(-(s2 - s1) w N) ... exp(-(b - sk) w N)."""
    levels = np.arange(n_max + 1)
    out = np.eye(n_max + 1, dtype=complex)
    prev = 0.0
    for s, eps in sorted(zip(times, signs)):
        out = out * np.exp(-(s - prev) * omega0 * levels)[None, :]
        out = out @ exp_i_position(eps * alpha, n_max)
        prev = s
    return out * np.exp(-(beta_slice - prev) * omega0 * levels)[None, :]


def q_factor(D, Dq, Xp, insertions, M, alpha, omega0, beta_slice, n_max=20):
    """Q = prod over columns x of Tr prod_t U(x, t) (time-ordered)."""
    levels = np.arange(n_max + 1)
    decay = np.diag(np.exp(-beta_slice * omega0 * levels))
    vac = np.zeros((n_max + 1, n_max + 1))
    vac[0, 0] = 1.0
    perp = np.diag((levels > 0).astype(float))
    total = 1.0 + 0j
    for x in sorted({i for i, _ in D}):
        prod_ = np.eye(n_max + 1, dtype=complex)
        for t in range(1, M + 1):
            c = (x, t)
            if c in Dq:
                ins = insertions.get(c, ())
                op = _ordered_slice_operator([s for s, _ in ins], [e for _, e in ins],
                                             alpha, omega0, beta_slice, n_max)
            elif c in Xp:
                op = decay @ perp
            elif c in D:
                op = decay
            else:
                op = vac
            prod_ = prod_ @ op
        total *= np.trace(prod_)
    return total


def _random_insertions(rng, Dq, beta_slice, max_k=3):
    out = {}
    for c in Dq:
        k = int(rng.integers(0, max_k + 1))
        out[c] = [(float(rng.uniform(0, beta_slice)), int(rng.choice((-1, 1)))) for _ in range(k)]
    return out


def audit_Q_bound(D, M, params, consts, rng, samples=2, n_max=20, winding_columns=None):
    """The bound |Q| <= exp(-beta w |X_p|) z^N over every split of D
    into quantum cubes D_q and phonon-excited classical cubes X_p. Also
    checks dQ/dU = 0 and the alpha-derivative bound."""
    D = frozenset(D)
    cols = winding_columns if winding_columns is not None else {
        i for i, _ in D if all((i, t) in D for t in range(1, M + 1))}
    N = len(cols)
    cubes = sorted(D)
    audits = []
    b, w, a = consts.beta_slice, consts.omega0, consts.alpha
    h = 1e-6 * max(a, 1e-3)
    shifted = params.with_(U=params.U + 0.5)
    for r in range(len(cubes) + 1):
        for Dq in combinations(cubes, r):
            Dq = frozenset(Dq)
            rest = [c for c in cubes if c not in Dq]
            for rp in range(len(rest) + 1):
                for Xp in combinations(rest, rp):
                    Xp = frozenset(Xp)
                    for _ in range(samples if Dq else 1):
                        ins = _random_insertions(rng, Dq, b)
                        q = q_factor(D, Dq, Xp, ins, M, a, w, b, n_max)
                        wit = f"D={cubes} Dq={sorted(Dq)} Xp={sorted(Xp)}"
                        rhs = -b * w * len(Xp) + N * math.log(consts.z)
                        audits.append(_audit("Q", _log_abs(q), rhs, wit, N=N))
                        qu = q_factor(D, Dq, Xp, ins, M, shifted.alpha, shifted.omega0, b, n_max)
                        audits.append(_audit("dQ_dU", abs(qu - q), 0.0, wit, log=False))
                        if a > 0:
                            dq = (q_factor(D, Dq, Xp, ins, M, a + h, w, b, n_max)
                                  - q_factor(D, Dq, Xp, ins, M, a - h, w, b, n_max)) / (2 * h)
                            rhs_a = (math.log(5 / (a * math.sqrt(math.e))) + N * math.log(consts.z)
                                     + math.log(len(D)) - b * consts.omega_dagger * len(Xp) + b * w)
                            audits.append(_audit("dQ_dalpha", _log_abs(dq), rhs_a, wit,
                                                 vacuous=consts.omega_dagger <= 0))
    return audits


# ------------------------------------------------------------------ derivatives

def rho_absolute_ratio(params, lattice, Y, label=1, **kw):
    """rho(Y) with energies measured from e_e at the *unshifted* point:
    rho_rel(params) exp(-beta_slice (e_e(params) - e_e(ref)) |supp Y|)."""
    ref = kw.pop("ref")
    model = ContourModel(params, lattice, label)
    rho = model.activity(Y.support, Y.labels).rho
    shift = model.e_e - ref
    return rho * math.exp(-params.beta_slice * shift * len(Y.support))


def audit_derivative_bounds(params, lattice, Y, consts, hyp, nu="mu", steps=(1e-4, 1e-5), label=1):
    """Central differences of rho in ``nu`` (Richardson-combined over the two
    steps) against (2 b C0 + e/(e-1) + 5/(a sqrt e)) |supp| exp(-(b c + gamma_dagger) |supp|)."""
    ref = ContourModel(params, lattice, label).e_e
    base = getattr(params, nu)

    def val(x):
        return rho_absolute_ratio(params.with_(**{nu: x}), lattice, Y, label, ref=ref)

    ds = [(val(base + h) - val(base - h)) / (2 * h) for h in steps]
    ratio = steps[0] / steps[1]
    rich = (ratio ** 2 * ds[1] - ds[0]) / (ratio ** 2 - 1)
    n = len(Y.support)
    b = consts.beta_slice
    pref = 2 * b * consts.C0 + math.e / (math.e - 1) + 5 / (consts.alpha * math.sqrt(math.e))
    rhs = math.log(pref * n) - (b * consts.c + consts.gamma_dagger) * n
    out = _audit(f"drho_d{nu}", _log_abs(rich), rhs, _witness(Y), not hyp["derivative_ok"],
                 derivative=complex(rich), steps=list(steps))
    noise = abs(ds[0] - ds[1])
    if noise > 0 and math.log(noise) > rhs:
        out.inconclusive = True
    return out


# ------------------------------------------------------------------ EstGa inequality

def random_decomposition(model, rng, p_electron=0.3, p_phonon=0.15, p_hop=0.3):
    """Random slice sequence on ``model`` and its cube classification."""
    from .contour import SliceLabel

    allowed = model.allowed_B(range(model.N))
    slices = []
    for _ in range(model.M):
        cfg = list(model.ground[model.label])
        for i in range(model.N):
            e, p = divmod(cfg[i], model.nph)
            if rng.random() < p_electron:
                e = int(rng.integers(0, 4))
            if rng.random() < p_phonon:
                p = int(rng.integers(1, model.nph)) if model.nph > 1 else 0
            cfg[i] = e * model.nph + p
        B = allowed[int(rng.integers(1, len(allowed)))] if rng.random() < p_hop and len(allowed) > 1 else frozenset()
        slices.append(SliceLabel(frozenset(B), tuple(cfg)))
    return slices


def audit_estga(model, slices, consts):
    """E_eff + e_e |Dq| + (gamma_Q - 1) R0^-d |Dq| >= (e_e + gamma_tilde) |D|
    with absolute energies, D the excited cubes and Dq the quantum ones."""
    D, Dq, Dc, Xe, Xp = set(), set(), set(), set(), set()
    E_e = 0.0
    for t, sl in enumerate(slices, start=1):
        thick = model.thick(sl.B) if sl.B else frozenset()
        for i in range(model.N):
            c = (i, t)
            ph = model.phonons(sl.config[i])
            el = model.electron_excited(sl.config, i)
            if i in thick:
                D.add(c)
                Dq.add(c)
            elif ph or el:
                D.add(c)
                Dc.add(c)
                if el:
                    Xe.add(c)
                if ph:
                    Xp.add(c)
                E_e += model.site_energy(sl.config, i) - model.params.omega0 * ph + model.e_e
    k = consts
    lhs = E_e + k.omega0 * len(Xp) + k.e_e * len(Dq) + (k.gamma_q - 1) * k.R0 ** (-k.d) * len(Dq)
    rhs = (k.e_e + k.gamma_tilde) * len(D)
    out = _audit("estga", -lhs, -rhs, f"|D|={len(D)} |Dq|={len(Dq)} |Xe|={len(Xe)} |Xp|={len(Xp)}",
                 vacuous=k.peierls_excess <= 0, log=False)
    out.extra.update(D=len(D), Dq=len(Dq), Xe=len(Xe), Xp=len(Xp))
    return out


# ------------------------------------------------------------------ summaries

def summarize(audits):
    rows = {}
    for a in audits:
        r = rows.setdefault(a.name, {"bound": a.name, "checked": 0, "passed": 0, "vacuous": 0,
                                     "inconclusive": 0, "min_margin": math.inf})
        r["checked"] += 1
        r["passed"] += a.passed
        r["vacuous"] += a.vacuous
        r["inconclusive"] += a.inconclusive
        if not a.vacuous:
            r["min_margin"] = min(r["min_margin"], a.margin)
    return list(rows.values())


def tightest_rate(audits, name):
    """Smallest observed -log|rho| / |supp| among non-zero activities."""
    rates = [a.extra["rate"] for a in audits if a.name == name and math.isfinite(a.extra.get("rate", math.inf))]
    return min(rates) if rates else math.inf

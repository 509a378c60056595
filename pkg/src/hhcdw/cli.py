"""Batch front end: ``hhcdw <command> --config run.json --out DIR``.

Each command writes CSV (12 significant digits), a JSON ledger with full
precision values and, where it makes sense, an SVG figure. Every file carries
the package version and a hash of the resolved configuration.

Exit status: 0 ok, 2 tolerance breach, 3 only vacuous audits, 4 config error.
"""

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("hhcdw")

OK, BREACH, VACUOUS, CONFIG_ERROR = 0, 2, 3, 4

PARAM_KEYS = ("t", "U", "W", "mu", "g", "omega0", "lam", "beta", "M", "d", "L", "R0", "n_max")

DEFAULTS = {
    "phase-diagram": {
        "W": 2.0, "u": [-6.0, 4.0, 101], "m": [-4.0, 4.0, 81], "tol": 1e-9,
    },
    "observables": {
        "params": {"t": 0.05, "U": 0.5, "W": 1.0, "mu": 0.0, "g": 0.5, "omega0": 1.0,
                   "lam": 1.0, "beta": 20.0, "d": 2, "L": 1, "n_max": 2},
        "boundaries": [1, 2, "periodic"],
        "correlations": True,
    },
    "contour-audit": {
        "params": {"t": 1.0, "U": 0.1, "W": 10.0, "mu": 0.0, "g": 0.5, "omega0": 5.0,
                   "lam": "admissible", "beta": 3.0, "M": 3, "d": 1, "L": 2, "n_max": 1},
        "gamma_q": 30.0, "beta0": 2.0, "label": 1,
        "max_size": 4, "max_contours": 20000,
        "q_audit": True, "q_samples": 1, "q_n_max": 20,
        "estga_draws": 1000,
        "derivative": "mu", "derivative_steps": [1e-4, 1e-5],
        "psi_site": 0,
        "reconstruct": "auto", "reconstruct_max_cubes": 8,
        "tol_reconstruct": 1e-8, "tol_factorization": 1e-10,
        "seed": 0,
    },
    "boson-check": {
        "cases": 200, "max_insertions": 4, "alpha_max": 1.0, "omega": 1.0,
        "beta": [1.0, 4.0], "n_max": 60, "tol_corr": 1e-8,
        "partition_beta_omega": 1.0, "partition_n_max": 200, "tol_partition": 1e-10,
        "alpha_lists": 500, "seed": 0,
    },
    "lf-check": {
        "g": 0.5, "omega0": 1.0, "single_n_max": 40, "tol_single": 1e-6,
        "two_site": {"t": 1.0, "U": 1.0, "W": 0.5, "mu": 0.2, "g": 0.5, "omega0": 1.0,
                     "lam": 1.0, "d": 1, "L": 1},
        "sectors": [[0, 0], [1, 0], [1, 1], [2, 0], [2, 1], [2, 2]], "levels": 8,
        "ladder": [10, 20, 40], "tol_two_site": 1e-6, "roundoff": 1e-12,
    },
    "assumptions": {
        "params": {"t": 1.0, "U": 0.1, "W": 10.0, "mu": 0.0, "g": 0.5, "omega0": 5.0,
                   "lam": 1.0, "beta": 3.0, "M": 3, "d": 1, "L": 2, "n_max": 1},
        "points": [[0.1, 0.0], [0.1, 1.0], [0.1, -1.0]],
        "gamma_q": 30.0, "beta0": 2.0, "g0": None,
    },
    "sweep": {
        "params": {"t": 0.05, "U": 0.5, "W": 1.0, "mu": 0.0, "g": 0.5, "omega0": 1.0,
                   "lam": 1.0, "beta": 20.0, "d": 1, "L": 1, "n_max": 2},
        "boundary": 1, "vary": "t", "values": [0.0, 0.05, 0.1, 0.2, 0.4],
        "observable": "staggered",
    },
}
COMMANDS = tuple(DEFAULTS)


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config

def _merge(defaults, given, where):
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if k not in defaults:
            raise ConfigError(f"unknown key {where}{k!r}")
        if isinstance(defaults[k], dict) and defaults[k] and k != "params":
            if not isinstance(v, dict):
                raise ConfigError(f"{where}{k!r} must be an object")
            out[k] = _merge(defaults[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def _check_params(block, where):
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be an object")
    bad = sorted(set(block) - set(PARAM_KEYS))
    if bad:
        raise ConfigError(f"unknown key(s) in {where}: {bad}")


def resolve_config(command, given):
    if not isinstance(given, dict):
        raise ConfigError("config must be a JSON object")
    given = dict(given)
    cmd = given.pop("command", command)
    if cmd != command:
        raise ConfigError(f"config is for {cmd!r}, not {command!r}")
    cfg = _merge(DEFAULTS[command], given, "")
    for key in ("params", "two_site"):
        if key in cfg:
            if key in given:
                _check_params(given[key], key)
                cfg[key] = {**DEFAULTS[command][key], **given[key]}
            _check_params(cfg[key], key)
    return cfg


def config_hash(command, cfg):
    blob = json.dumps({"command": command, "config": cfg}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def parse_lam(value, params=None, gamma_q=None):
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(value[0], value[1])
    if isinstance(value, str):
        if value == "admissible":
            from .bounds import admissible_lambda
            return admissible_lambda(params, gamma_q)
        try:
            return complex(value.replace(" ", ""))
        except ValueError as exc:
            raise ConfigError(f"cannot read lam={value!r}") from exc
    return value


def make_params(block, gamma_q=None):
    from .model import ModelParams

    block = dict(block)
    lam = block.pop("lam", 1.0)
    try:
        p = ModelParams(**block)
        lam = parse_lam(lam, p, gamma_q)
        if isinstance(lam, complex) and lam.imag == 0:
            lam = lam.real
        return p.with_(lam=lam)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# ------------------------------------------------------------------ output

def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    if isinstance(x, (complex, np.complexfloating)):
        return f"{x.real:.12g}{x.imag:+.12g}j"
    return str(x)


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        return [jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": jsonable(x.real), "im": jsonable(x.imag)}
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    return x if x is None or isinstance(x, str) else str(x)


class Run:
    """Output sink for one command invocation."""

    def __init__(self, command, cfg, out):
        self.command = command
        self.cfg = cfg
        self.hash = config_hash(command, cfg)
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []

    @property
    def meta(self):
        return {"version": __version__, "config_hash": self.hash}

    def write_csv(self, name, rows, columns):
        path = self.out / name
        with open(path, "w", newline="") as fh:
            fh.write(f"# hhcdw {__version__} command={self.command} config_hash={self.hash}\n")
            w = csv.writer(fh)
            w.writerow(columns)
            for r in rows:
                w.writerow([fmt(r.get(c, "")) for c in columns])
        self.files.append(str(path))
        return path

    def write_json(self, name, payload):
        path = self.out / name
        doc = {**self.meta, "command": self.command, "config": self.cfg, **payload}
        path.write_text(json.dumps(jsonable(doc), indent=1, sort_keys=True))
        self.files.append(str(path))
        return path

    def svg(self, name):
        path = self.out / name
        self.files.append(str(path))
        return path


def _pmap(fn, items, jobs):
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ------------------------------------------------------------------ commands

def cmd_phase_diagram(cfg, run, jobs, seed):
    from .classical import REGIONS, classify_grid
    from .plotting import phase_diagram_figure

    W = float(cfg["W"])
    if W <= 0:
        raise ConfigError("W must be positive")
    (u0, u1, nu), (m0, m1, nm) = cfg["u"], cfg["m"]
    if int(nu) < 1 or int(nm) < 1:
        raise ConfigError("empty grid")
    us, ms = np.linspace(u0, u1, int(nu)), np.linspace(m0, m1, int(nm))
    t0 = time.time()
    labels = classify_grid(us, ms, W, cfg["tol"])
    rows = [{"u": u, "m": m, "region": labels[j, i]}
            for j, m in enumerate(ms) for i, u in enumerate(us)]
    run.write_csv("phase_diagram.csv", rows, ["u", "m", "region"])
    counts = {r: int((labels == r).sum()) for r in REGIONS + ["Boundary"]}
    summary = {"counts": counts, "boundary_fraction": counts["Boundary"] / labels.size,
               "seconds": time.time() - t0, "grid": {"u": us, "m": ms}}
    run.write_json("phase_diagram.json", {"results": summary})
    if labels.size > 1:
        phase_diagram_figure(us, ms, labels, W, run.svg("phase_diagram.svg"), run.meta)
    return OK


def _observables_for(args):
    from .lattice import build_lattice
    from .thermo import (connected_correlation, number_observable, spin_expectation,
                         staggered_density, thermal_state)

    p, boundary, correlations = args
    lat = build_lattice(p.d, p.L, periodic=(boundary == "periodic"))
    st = thermal_state(p, lat, boundary)
    rows = [{"boundary": boundary, "observable": "staggered_density",
             "value": staggered_density(st, lat)}]
    for i in range(lat.n_sites):
        for c in (1, 2, 3):
            rows.append({"boundary": boundary, "observable": f"spin_{c}_site_{i}",
                         "value": spin_expectation(st, i, c)})
    if correlations:
        for j in range(1, lat.n_sites):
            c = connected_correlation(st, number_observable(0), number_observable(j))
            rows.append({"boundary": boundary, "observable": f"density_corr_0_{j}", "value": c})
    for r in rows:
        r.update(beta=p.beta, n_max=p.n_max, log_Z=st.log_Z)
    return rows


def cmd_observables(cfg, run, jobs, seed):
    p = make_params(cfg["params"])
    for b in cfg["boundaries"]:
        if b not in (1, 2, "periodic", "free", "hh"):
            raise ConfigError(f"unknown boundary {b!r}")
    try:
        parts = _pmap(_observables_for, [(p, b, cfg["correlations"]) for b in cfg["boundaries"]], jobs)
    except MemoryError as exc:
        raise ConfigError(str(exc)) from exc
    rows = [r for part in parts for r in part]
    for r in rows:
        r["value_real"], r["value_imag"] = complex(r["value"]).real, complex(r["value"]).imag
    run.write_csv("observables.csv", rows,
                  ["boundary", "beta", "observable", "value_real", "value_imag", "n_max", "log_Z"])
    run.write_json("observables.json", {"results": rows})
    return OK


def _audit_chunk(args):
    from .bounds import audit_activity_bound, audit_derivative_bounds, audit_Q_bound
    from .contour import ContourModel
    from .lattice import build_lattice

    p, label, contours, consts, hyp, cfg, seed = args
    lat = build_lattice(p.d, p.L)
    model = ContourModel(p, lat, label)
    rng = np.random.default_rng(seed)
    out = []
    for Y in contours:
        rho = model.activity(Y.support, Y.labels).rho
        audits = [audit_activity_bound(model, Y, consts, hyp, rho)]
        if cfg["q_audit"]:
            audits += audit_Q_bound(Y.support, p.M, p, consts, rng, cfg["q_samples"], cfg["q_n_max"])
        if cfg["derivative"]:
            audits.append(audit_derivative_bounds(p, lat, Y, consts, hyp, cfg["derivative"],
                                                  tuple(cfg["derivative_steps"]), label))
        out.append((Y, rho, audits))
    return out


def cmd_contour_audit(cfg, run, jobs, seed):
    from .bounds import (audit_estga, audit_psi_bound, check_hypotheses, constants,
                         random_decomposition, summarize, tightest_rate)
    from .contour import ContourModel, density_observable
    from .lattice import build_lattice

    seed = cfg["seed"] if seed is None else seed
    p = make_params(cfg["params"], cfg["gamma_q"])
    if cfg["derivative"] not in (None, False, "mu", "U", "g"):
        raise ConfigError(f"derivative must be one of mu, U, g (got {cfg['derivative']!r})")
    lat = build_lattice(p.d, p.L)
    try:
        model = ContourModel(p, lat, cfg["label"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    hyp = check_hypotheses(p, cfg["beta0"], cfg["gamma_q"])
    consts = constants(p, cfg["gamma_q"], cfg["beta0"])
    t0 = time.time()
    notes = []
    contours = model.enumerate_contours(cfg["max_size"])
    if len(contours) > cfg["max_contours"]:
        notes.append(f"contour list truncated from {len(contours)} to {cfg['max_contours']}")
        contours = contours[:cfg["max_contours"]]
    chunks = [contours[k::max(jobs, 1)] for k in range(max(jobs, 1))]
    seeds = np.random.SeedSequence(seed).spawn(len(chunks))
    parts = _pmap(_audit_chunk, [(p, cfg["label"], ch, consts, hyp, cfg, s) for ch, s in zip(chunks, seeds)], jobs)
    records, audits = [], []
    for part in parts:
        for Y, rho, aud in part:
            audits += aud
            main = aud[0]
            records.append({"support": sorted(Y.support), "labels": Y.label_key(), "winding": Y.winding,
                            "size": Y.size, "rho": rho, "bound_log": main.rhs, "margin": main.margin,
                            "passed": main.passed, "vacuous": main.vacuous})
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(len(chunks) + 1)[-1])
    for _ in range(cfg["estga_draws"]):
        audits.append(audit_estga(model, random_decomposition(model, rng), consts))
    if cfg["psi_site"] is not None:
        psi = density_observable(int(cfg["psi_site"]), p.n_max)
        for Y in contours:
            if (int(cfg["psi_site"]), 1) in Y.support:
                audits.append(audit_psi_bound(model, Y, psi, consts, hyp))
    status = OK
    recon = None
    want = cfg["reconstruct"]
    n_cubes = lat.n_sites * p.M
    if want is True or (want == "auto" and n_cubes <= cfg["reconstruct_max_cubes"]):
        recon = model.reconstruct_partition(max_cubes=max(n_cubes, cfg["reconstruct_max_cubes"]))
        tol = 1e-12 if p.lam == 0 else cfg["tol_reconstruct"]
        recon["tolerance"] = tol
        recon["passed"] = bool(recon["deviation"] <= tol)
        fac_ok = all(r["deviation"] <= cfg["tol_factorization"] for r in recon["factorization"])
        recon["factorization_passed"] = fac_ok
        if not (recon["passed"] and fac_ok):
            status = BREACH
    elif want:
        notes.append(f"reconstruction skipped: {n_cubes} cubes above reconstruct_max_cubes")
    summary = summarize(audits)
    failed = [a for a in audits if not a.passed and not a.vacuous]
    if failed:
        status = BREACH
    elif audits and all(a.vacuous for a in audits) and status == OK:
        status = VACUOUS
    for r in summary:
        r["tightest_rate"] = tightest_rate(audits, r["bound"]) if r["bound"] in ("rho_nonwinding", "rho_winding") else ""
    run.write_csv("contour_audit_summary.csv", summary,
                  ["bound", "checked", "passed", "vacuous", "inconclusive", "min_margin", "tightest_rate"])
    run.write_csv("contours.csv", records,
                  ["support", "labels", "winding", "size", "rho", "bound_log", "margin", "passed", "vacuous"])
    run.write_json("contour_audit.json", {
        "hypotheses": hyp, "gamma_q": cfg["gamma_q"], "beta0": cfg["beta0"], "lam": p.lam,
        "n_contours": len(contours), "contours": records, "summary": summary,
        "failures": [a.as_dict() for a in failed[:200]],
        "reconstruction": recon, "notes": notes, "seconds": time.time() - t0,
    })
    return status


def cmd_boson_check(cfg, run, jobs, seed):
    from .boson_corr import (alpha_derivative, brute_force_corr, partition_det, random_insertions,
                             stated_alpha_bound, sup_alpha_bound, thermal_corr, truncated_partition,
                             vacuum_corr)

    seed = cfg["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    w = np.array([cfg["omega"]])
    b_lo, b_hi = cfg["beta"]
    rows, worst = [], 0.0
    for k in range(cfg["cases"]):
        beta = float(rng.uniform(b_lo, b_hi))
        kind = "vacuum" if k % 2 == 0 else "thermal"
        times, fs = random_insertions(rng, 1, cfg["max_insertions"], cfg["alpha_max"],
                                      t_max=1.0 if kind == "vacuum" else beta)
        if kind == "vacuum":
            exact = vacuum_corr(w, times, fs)
            oracle = brute_force_corr(w, times, fs, cfg["n_max"])
        else:
            exact = thermal_corr(w, times, fs, beta)
            oracle = brute_force_corr(w, times, fs, cfg["n_max"], beta)
        err = abs(exact - oracle) / max(abs(oracle), 1e-300)
        worst = max(worst, err)
        rows.append({"check": kind, "case": k, "n": len(times), "beta": beta if kind == "thermal" else "",
                     "formula": exact, "oracle": complex(oracle).real, "rel_err": err,
                     "passed": err <= cfg["tol_corr"]})
    bw = cfg["partition_beta_omega"]
    zd = partition_det(np.array([1.0]), bw)
    zt = truncated_partition(np.array([1.0]), bw, cfg["partition_n_max"])
    perr = abs(zd - zt) / zt
    rows.append({"check": "partition", "case": 0, "n": 0, "beta": bw, "formula": zd, "oracle": zt,
                 "rel_err": perr, "passed": perr <= cfg["tol_partition"]})
    ratio_max, sup_ok = 0.0, True
    for k in range(cfg["alpha_lists"]):
        alpha = float(rng.uniform(0.05, 2.0))
        times, fs = random_insertions(rng, 1, cfg["max_insertions"], 1.0, 1.0)
        beta = None if k % 2 == 0 else float(rng.uniform(b_lo, b_hi))
        if beta is not None:
            times = times * beta
        der = alpha_derivative(w, times, fs, alpha, beta)
        bound = stated_alpha_bound(alpha)
        ratio_max = max(ratio_max, abs(der) / bound)
        sup_ok &= abs(der) <= sup_alpha_bound(alpha) * (1 + 1e-12)
        rows.append({"check": "alpha_derivative", "case": k, "n": len(times),
                     "beta": "" if beta is None else beta, "formula": der, "oracle": bound,
                     "rel_err": abs(der) / bound, "passed": abs(der) <= bound * (1 + 1e-12)})
    run.write_csv("boson_check.csv", rows,
                  ["check", "case", "n", "beta", "formula", "oracle", "rel_err", "passed"])
    ok = all(r["passed"] for r in rows)
    run.write_json("boson_check.json", {"results": {
        "max_rel_err_corr": worst, "partition_rel_err": perr, "max_derivative_ratio": ratio_max,
        "derivative_within_sup_bound": sup_ok, "sup_over_stated": 2 / math.sqrt(math.e),
        "passed": ok, "rows": rows}})
    return OK if ok else BREACH


def lf_two_site_ladder(block, sectors, ladder, levels):
    """Low spectrum of LF H_HH LF* against the transformed operator per cutoff,
    worst case over ``sectors``."""
    from .lattice import build_lattice
    from .model import lf_spectrum_check

    base = make_params(block)
    lat = build_lattice(base.d, base.L)
    rows = []
    for n in ladder:
        p = base.with_(n_max=int(n))
        per = {f"{a},{b}": lf_spectrum_check(p, lat, (a, b), levels) for a, b in sectors}
        rows.append({"n_max": int(n), "deviation": max(v[0] for v in per.values()),
                     "unitarity_defect": max(v[1] for v in per.values()),
                     "per_sector": {k: v[0] for k, v in per.items()}})
    return rows


def shrinking(values, floor):
    """Non-increasing once both neighbours are above the roundoff ``floor``."""
    return all(b <= max(a, floor) for a, b in zip(values, values[1:]))


def cmd_lf_check(cfg, run, jobs, seed):
    from .fock import Space
    from .model import ModelParams, holstein_hubbard_operator
    from .lattice import Lattice

    g, w, n_max = cfg["g"], cfg["omega0"], int(cfg["single_n_max"])
    one = Lattice(1, 1, False, ((0,),), (), {(0,): 0})
    p = ModelParams(t=0.0, U=0.0, W=0.0, mu=0.0, g=g, omega0=w, n_max=n_max)
    rows = []
    ok = True
    for n, sec in ((1, (1, 0)), (2, (1, 1))):
        space = Space(1, n_max, sec)
        e = np.linalg.eigvalsh(holstein_hubbard_operator(p, one, space).to_dense())[0]
        exact = -g ** 2 * n ** 2 / w
        err = abs(e - exact)
        ok &= err <= cfg["tol_single"]
        rows.append({"check": f"polaron_n{n}", "n_max": n_max, "value": e, "reference": exact,
                     "deviation": err, "passed": err <= cfg["tol_single"]})
    ladder = lf_two_site_ladder(cfg["two_site"], cfg["sectors"], cfg["ladder"], cfg["levels"])
    devs = [r["deviation"] for r in ladder]
    shrink = shrinking(devs, cfg["roundoff"])
    for r in ladder:
        passed = r["deviation"] <= cfg["tol_two_site"]
        ok &= passed
        rows.append({"check": "two_site_spectrum", "n_max": r["n_max"], "value": r["deviation"],
                     "reference": 0.0, "deviation": r["deviation"], "passed": passed,
                     "unitarity_defect": r["unitarity_defect"]})
    ok &= shrink
    run.write_csv("lf_check.csv", rows,
                  ["check", "n_max", "value", "reference", "deviation", "unitarity_defect", "passed"])
    run.write_json("lf_check.json", {"results": {"rows": rows, "ladder": ladder, "ladder_shrinking": shrink, "passed": ok}})
    return OK if ok else BREACH


def cmd_assumptions(cfg, run, jobs, seed):
    from .bounds import check_hypotheses
    from .classical import check_assumptions

    base = make_params(cfg["params"])
    points = [tuple(map(float, pt)) for pt in cfg["points"]]
    if not points:
        raise ConfigError("no parameter points")
    rep = check_assumptions(points, base, cfg["gamma_q"], cfg["beta0"], cfg["g0"])
    hyp = check_hypotheses(base, cfg["beta0"], cfg["gamma_q"])
    rows = [{"assumption": k, "passed": v, "witness": rep.witnesses.get(k, "")}
            for k, v in rep.passed.items()]
    run.write_csv("assumptions.csv", rows, ["assumption", "passed", "witness"])
    run.write_json("assumptions.json", {"results": {
        "passed": rep.passed, "witnesses": rep.witnesses, "gamma_e": rep.gamma_e, "C0": rep.C0,
        "details": rep.details, "hypotheses": hyp}})
    return OK if rep.all_pass else BREACH


def _sweep_point(args):
    from .lattice import build_lattice
    from .thermo import staggered_density, thermal_state

    p, boundary = args
    lat = build_lattice(p.d, p.L, periodic=(boundary == "periodic"))
    st = thermal_state(p, lat, boundary)
    return staggered_density(st, lat), st.log_Z


def cmd_sweep(cfg, run, jobs, seed):
    from .plotting import line_figure

    base = make_params(cfg["params"])
    vary = cfg["vary"]
    if vary not in PARAM_KEYS:
        raise ConfigError(f"cannot sweep {vary!r}")
    if cfg["observable"] != "staggered":
        raise ConfigError("only the staggered density is swept")
    values = list(cfg["values"])
    if not values:
        raise ConfigError("empty sweep")
    try:
        pts = [make_params({**cfg["params"], vary: v}) for v in values]
        res = _pmap(_sweep_point, [(q, cfg["boundary"]) for q in pts], jobs)
    except MemoryError as exc:
        raise ConfigError(str(exc)) from exc
    rows = [{vary: v, "boundary": cfg["boundary"], "staggered_density": d, "log_Z": lz,
             "beta": q.beta, "n_max": q.n_max} for v, q, (d, lz) in zip(values, pts, res)]
    run.write_csv("sweep.csv", rows, [vary, "boundary", "beta", "n_max", "staggered_density", "log_Z"])
    run.write_json("sweep.json", {"results": rows, "base": base.__dict__})
    if all(isinstance(v, (int, float)) for v in values):
        line_figure({f"boundary {cfg['boundary']}": (values, [r["staggered_density"] for r in rows])},
                    vary, r"$\Delta$", run.svg("sweep.svg"), meta=run.meta)
    return OK


HANDLERS = {
    "phase-diagram": cmd_phase_diagram,
    "observables": cmd_observables,
    "contour-audit": cmd_contour_audit,
    "boson-check": cmd_boson_check,
    "lf-check": cmd_lf_check,
    "assumptions": cmd_assumptions,
    "sweep": cmd_sweep,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="hhcdw", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration (defaults used when omitted)")
        sp.add_argument("--out", default=None, help="output directory (env HHCDW_OUT, default ./out)")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        given = {}
        if args.config:
            with open(args.config) as fh:
                given = json.load(fh)
        cfg = resolve_config(args.command, given)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = args.out or os.environ.get("HHCDW_OUT", "out")
        run = Run(args.command, cfg, out)
        status = HANDLERS[args.command](cfg, run, args.jobs, args.seed)
    except (ConfigError, json.JSONDecodeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    names = {OK: "ok", BREACH: "tolerance breach", VACUOUS: "vacuous audits only"}
    print(f"{args.command}: {names[status]} ({run.hash}) -> {', '.join(run.files)}")
    return status


if __name__ == "__main__":
    sys.exit(main())

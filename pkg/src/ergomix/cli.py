"""Command line entry point and run orchestration.

Exit codes: 0 all certificates pass, 1 a certificate failed, 2 inconclusive,
3 configuration error, 4 I/O error, 5 diverged state.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from . import io as eio
from . import spectral as sp
from .checker import check_ergodicity, check_mixing, convexity_probe, mixing_time_bound
from .config import PRESETS, ExperimentConfig, load_config, preset, preset_text
from .drift import Heat, NavierStokes2D
from .errors import (BoundUnavailableError, ConfigError, DivergedStateError,
                     InsufficientSamplesError)
from .integrator import simulate_path
from .lab import (contraction_certificate, decay_comparison, deterministic_decay_check,
                  empirical_mixing_time, exp_moment_certificate, moment_certificate,
                  run_ensemble, stability_vs_deterministic)
from .noise import RngStream, small_ball_frequency

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGED = range(6)
STATUS_CODE = {"pass": EXIT_PASS, "fail": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}


def _combine(statuses):
    if "fail" in statuses:
        return "fail"
    if "inconclusive" in statuses:
        return "inconclusive"
    return "pass"


class _Run:
    def __init__(self, cfg: ExperimentConfig, out_dir, workers, seed_override):
        self.cfg = cfg
        self.out = out_dir
        self.workers = workers
        text = cfg.text
        if seed_override is not None:
            text += f"\n# override: experiment.seed = {seed_override}\n"
        self.hash = hashlib.sha256(text.encode("utf-8")).hexdigest()
        self.artifacts = []
        self.seeds = [cfg.seed]

    def csv(self, name, rows):
        eio.write_csv(os.path.join(self.out, name), rows, self.hash)
        self.artifacts.append(name)

    def plot(self, name, *args, **kw):
        eio.line_plot(os.path.join(self.out, name), *args, **kw)
        self.artifacts.append(name)


# ---------------------------------------------------------------------------
# experiment kinds


def _eps_list(p):
    eps = p.get("eps", [0.01])
    return [float(e) for e in (eps if isinstance(eps, list) else [eps])]


def _do_check(r: _Run):
    cfg, p = r.cfg, r.cfg.params
    cs = cfg.constant_set()
    rep = check_mixing(cs) if cs.gamma is not None else check_ergodicity(cs)
    rows = [{"inequality": n, "lhs": lhs, "rhs": rhs, "pass": ok} for n, lhs, rhs, ok in rep.rows()]
    rows += [{"inequality": k, "lhs": v, "rhs": None, "pass": None}
             for k, v in (("c1", rep.c1), ("c2", rep.c2), ("c3", rep.c3))]
    rows += [{"inequality": k, "lhs": v, "rhs": None, "pass": None}
             for k, v in sorted(rep.moment_bounds.items())]
    form = p.get("bound_form", "heat" if cfg.model.get("variant") == "heat" else "general")
    ok_bound = rep.mixing_pass if form != "heat" else rep.ergodicity_pass
    if ok_bound:
        for eps in _eps_list(p):
            tau = mixing_time_bound(cs, float(p.get("x_norm", 1.0)), eps, form)
            rows.append({"inequality": f"mixing_time_bound[{form}](eps={eps!r})", "lhs": tau,
                         "rhs": None, "pass": None})
    r.csv("check.csv", rows)
    flags = [row[3] for row in rep.rows()]
    return "pass" if all(flags) else "fail"


def _do_simulate(r: _Run):
    cfg, p = r.cfg, r.cfg.params
    m = cfg.build_model()
    b = cfg.build_noise(m)
    x = cfg.initial(m)
    stream = None if b.is_zero else RngStream(cfg.seed, 0)
    path = simulate_path(x, m, b, float(p.get("T", 1.0)), cfg.build_scheme(), stream)
    r.csv("path.csv", eio.columns_to_rows(path.columns()))
    r.plot("path.svg", [("H-norm", path.times, path.h_norm, "-"),
                        ("V-norm", path.times, path.v_norm, "--")], "t", "norm")
    return "pass"


def _do_couple(r: _Run):
    cfg, p = r.cfg, r.cfg.params
    m = cfg.build_model()
    b = cfg.build_noise(m)
    x, y = cfg.initial(m, "x"), cfg.initial(m, "y")
    seeds = [int(s) for s in p.get("seeds", [cfg.seed])]
    r.seeds = seeds
    T = float(p.get("T", 1.0))
    scheme = cfg.build_scheme()
    rows, statuses, first = [], [], None
    for s in seeds:
        cert = contraction_certificate(m, b, x, y, T, scheme, s)
        rows += cert.rows
        statuses.append(cert.status)
        first = first or cert
    r.csv("contraction.csv", rows)
    pd = first.details["paths"][2]
    row = first.rows[0]
    t0 = first.details["window"][0]
    k0 = int(np.searchsorted(pd.times, t0))
    ref = 2 * np.log(pd.h_norm[k0])
    r.plot("contraction.svg",
           [("log |X^x - X^y|^2", pd.times, 2 * np.log(np.maximum(pd.h_norm, 1e-300)), "-"),
            ("fitted slope", pd.times[k0:], ref + row["fitted_rate"] * (pd.times[k0:] - t0), "--"),
            ("predicted slope", pd.times[k0:], ref + row["predicted_rate"] * (pd.times[k0:] - t0),
             ":")], "t", "log squared difference")
    return _combine(statuses)


def _do_moments(r: _Run):
    cfg, p = r.cfg, r.cfg.params
    m = cfg.build_model()
    b = cfg.build_noise(m)
    cs = cfg.constant_set(m, b)
    x = cfg.initial(m)
    st = run_ensemble(m, b, x, float(p.get("T", 2.0)), cfg.build_scheme(),
                      int(p.get("n_paths", 1000)), cfg.seed, cs.alpha, cs.beta, r.workers)
    cert = moment_certificate(st, cs)
    r.csv("ensemble.csv", eio.columns_to_rows(st.columns()))
    r.csv("moment_certificate.csv", cert.rows)
    statuses = [cert.status]
    if p.get("exp_moment", False):
        ec = exp_moment_certificate(st, cs, seed=cfg.seed)
        r.csv("exp_moment_certificate.csv", ec.rows)
        statuses.append(ec.status)
    t = st.times
    r.plot("moments.svg", [("lhs", t, [row["lhs"] for row in cert.rows], "-"),
                           ("rhs", t, [row["rhs"] for row in cert.rows], "--")], "t", "moment")
    return _combine(statuses)


def _do_mixing(r: _Run):
    cfg, p = r.cfg, r.cfg.params
    m = cfg.build_model()
    b = cfg.build_noise(m)
    cs = cfg.constant_set(m, b)
    x = cfg.initial(m)
    scheme = cfg.build_scheme()
    rows, statuses, curve = [], [], None
    for eps in _eps_list(p):
        kw = {}
        if not isinstance(m, Heat):
            kw = dict(T=float(p.get("T", 1.0)), n_paths=int(p.get("n_paths", 200)),
                      seeds=tuple(int(s) for s in p.get("seeds", [cfg.seed])))
        cert = empirical_mixing_time(m, b, x, eps, scheme, cs=cs, **kw)
        rows += cert.rows
        statuses.append(cert.status)
        curve = curve or cert.details
    r.csv("mixing.csv", rows)
    r.csv("w2_curve.csv", [{"time": t, "w2": w, "method": curve["method"]}
                           for t, w in zip(curve["times"], curve["w2"])])
    series = [("W2", curve["times"], curve["w2"], "-")]
    for row in rows:
        series.append((f"bound eps={row['eps']}", [row["tau_bound"]], [row["eps"]], "o"))
    r.plot("mixing.svg", series, "t", "W2", logy=True)
    return _combine(statuses)


def _do_decay(r: _Run):
    cfg, p = r.cfg, r.cfg.params
    m = cfg.build_model()
    x = cfg.initial(m)
    scheme = cfg.build_scheme()
    T = float(p.get("T", 1.0))
    coarse = deterministic_decay_check(m, x, T, scheme)
    half = type(scheme)(scheme.scheme, scheme.dt / 2, scheme.taming, scheme.guard, 0)
    fine = deterministic_decay_check(m, x, T, half)
    r.csv("decay.csv", coarse.rows)
    r.csv("decay_residual.csv", [{"dt": scheme.dt, "residual": coarse.details["residual"]},
                                 {"dt": half.dt, "residual": fine.details["residual"]}])
    path = coarse.details["path"]
    mc = m.constants
    r.plot("decay.svg", [("|u_t|_H", path.times, path.h_norm, "-"),
                         ("comparison bound", path.times,
                          decay_comparison(path.times, mc.alpha, m.domain.c0, mc.delta1,
                                           float(sp.h_norm(x))), "--")], "t", "norm", logy=True)
    ok = (coarse.passed and fine.passed
          and fine.details["residual"] < coarse.details["residual"])
    return "pass" if ok else "fail"


def _do_smallball(r: _Run):
    cfg, p = r.cfg, r.cfg.params
    m = cfg.build_model()
    b = cfg.build_noise(m)
    x = cfg.initial(m)
    scheme = cfg.build_scheme()
    T = float(p.get("T", 1.0))
    n = int(p.get("n_paths", 1000))
    est = stability_vs_deterministic(m, b, x, T, float(p.get("stability_eps", 0.1)), n, scheme,
                                     cfg.seed, r.workers)
    rows = [{"quantity": "stability_frequency", "estimate": est.estimate, "low": est.low,
             "high": est.high, "n": est.n}]
    statuses = ["pass" if est.low > 0 else "fail"]
    if "delta" in p:
        sb = small_ball_frequency(b, float(p["delta"]), T, scheme.dt, n, cfg.seed)
        rows.append({"quantity": "small_ball_frequency", "estimate": sb.estimate, "low": sb.low,
                     "high": sb.high, "n": sb.n})
        statuses.append("pass" if sb.low > 0 else "fail")
    r.csv("smallball.csv", rows)
    return _combine(statuses)


def _do_convexity(r: _Run):
    p = r.cfg.params
    rows, ok = [], True
    n = int(p.get("n_samples", 100000))
    for a in p.get("alphas", [2, 3, 4]):
        for b in p.get("betas", [0, 1, 2]):
            res = convexity_probe(float(a), float(b), n, r.cfg.seed)
            rows.append({"alpha": a, "beta": b, "n_samples": n, "violations": res.n_violations,
                         "worst_violation": res.worst_violation,
                         "hessian_min_det": res.hessian_min_det, "pass": res.passed})
            ok &= res.passed
    r.csv("convexity.csv", rows)
    return "pass" if ok else "fail"


KIND_RUNNERS = {"check": _do_check, "simulate": _do_simulate, "couple": _do_couple,
                "moments": _do_moments, "mixing": _do_mixing, "decay": _do_decay,
                "smallball": _do_smallball, "convexity": _do_convexity}


def run(cfg: ExperimentConfig, out_dir=None, workers=None, seed=None, log=sys.stderr):
    """Execute a validated config. Returns (exit code, run directory)."""
    if seed is not None:
        cfg.seed = int(seed)
    out_dir = out_dir or cfg.out or os.path.join("runs", f"{cfg.kind}-{cfg.config_hash[:12]}")
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write-test")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as err:
        print(f"error: cannot write to {out_dir}: {err}", file=log)
        return EXIT_IO, out_dir
    r = _Run(cfg, out_dir, workers, seed)
    start = time.perf_counter()
    error = None
    try:
        status = KIND_RUNNERS[cfg.kind](r)
        code = STATUS_CODE[status]
    except ConfigError as err:
        code, status, error = EXIT_CONFIG, "config_error", err
    except BoundUnavailableError as err:
        code, status, error = EXIT_INCONCLUSIVE, "inconclusive", err
    except InsufficientSamplesError as err:
        code, status, error = EXIT_INCONCLUSIVE, "inconclusive", err
    except DivergedStateError as err:
        code, status, error = EXIT_DIVERGED, "diverged", err
    except OSError as err:
        code, status, error = EXIT_IO, "io_error", err
    if error is not None:
        print(f"error: {error}", file=log)
    manifest = {
        "config_hash": r.hash,
        "tool_version": __version__,
        "basis_tag": sp.BASIS_TAG,
        "seeds": r.seeds,
        "workers": workers,
        "wall_clock_seconds": time.perf_counter() - start,
        "artifacts": sorted(r.artifacts),
        "status": status,
        "exit_code": code,
        "error": None if error is None else str(error),
        "config": cfg.resolved(),
        "platform": {"python": platform.python_version(), "numpy": np.__version__},
    }
    try:
        if cfg.domain:
            manifest["domain"] = cfg.build_domain().to_dict()
    except ConfigError:
        pass
    try:
        eio.write_json(os.path.join(out_dir, "manifest.json"), manifest)
        with open(os.path.join(out_dir, "config.toml"), "w", encoding="utf-8") as fh:
            fh.write(cfg.text)
    except OSError as err:
        print(f"error: cannot write manifest: {err}", file=log)
        return EXIT_IO, out_dir
    print(f"{cfg.kind}: {status} (exit {code}) -> {out_dir}", file=log)
    return code, out_dir


def _parser():
    ap = argparse.ArgumentParser(prog="ergomix",
                                 description="Spectral Galerkin SPDE ergodicity toolkit")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("check", "run"):
        sp_ = sub.add_parser(name, help=f"{name} an experiment config")
        sp_.add_argument("--config", required=True)
        sp_.add_argument("--out")
        sp_.add_argument("--seed", type=int)
        sp_.add_argument("--workers", type=int)
    pp = sub.add_parser("preset", help="print or run a named preset")
    pp.add_argument("name", choices=sorted(PRESETS))
    pp.add_argument("--kind", help="override the experiment kind")
    pp.add_argument("--out", help="run the preset into this directory")
    pp.add_argument("--seed", type=int)
    pp.add_argument("--workers", type=int)
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "preset":
            if args.out is None:
                sys.stdout.write(preset_text(args.name, args.kind))
                return EXIT_PASS
            cfg = preset(args.name, args.kind)
        else:
            cfg = load_config(args.config)
            if args.command == "check" and cfg.kind != "check":
                cfg.kind = "check"
    except ConfigError as err:
        for v in err.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    if args.workers is not None and args.workers < 1:
        print("config error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    code, _ = run(cfg, args.out, args.workers, args.seed)
    return code


if __name__ == "__main__":
    sys.exit(main())

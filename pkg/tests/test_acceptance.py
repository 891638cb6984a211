"""Acceptance criteria 1 to 10, one recorded verdict per criterion.

Each test records its verdict (printed in the terminal summary) and then
asserts it. Tolerances are the stated ones; nothing is relaxed here.
"""

import json
import math
import time

import mpmath as mp
import numpy as np
import pytest
from conftest import record
from oracles.scratch_constants import c_values, heat_mixing_bound

from ergomix import cli
from ergomix import drift as dr
from ergomix import lab
from ergomix import spectral as sp
from ergomix.checker import ConstantSet, compute_c123, convexity_probe, mixing_time_bound
from ergomix.config import preset, preset_text
from ergomix.integrator import SchemeSpec, deterministic_flow
from ergomix.noise import build_noise

PRESETS = ("heat_thm22", "burgers_thm24", "nse_thm26", "powerlaw_thm28")


def _setup(name, kind=None):
    cfg = preset(name, kind)
    m = cfg.build_model()
    b = cfg.build_noise(m)
    return cfg, m, b


def _sample(m, rng, scale):
    return sp.random_field(m.domain, rng, ncomp=m.ncomp, scale=scale, solenoidal=m.ncomp == 2)


def test_criterion_01_heat_ou_oracle():
    cfg, m, b = _setup("heat_thm22")
    x = cfg.initial(m)
    start = time.perf_counter()
    st = lab.run_ensemble(m, b, x, 1.0, cfg.build_scheme(), 10000, cfg.seed)
    mi, si = lab.heat_stationary(m, b)
    j = int(b.modes[0])
    parts, ok = [], True
    for t in (0.1, 0.5, 1.0):
        k = int(np.argmin(np.abs(st.times - t)))
        mt, s_t = lab.heat_law(m, b, x, t)
        orc = float(lab.gaussian_w2(mt[j], s_t[j], mi[j], si[j]))
        est = lab.w2_marginal_vs_gaussian(st.snapshots[k][:, 0, j], mi[j], si[j], n_boot=200,
                                          seed=k)
        err = abs(est.value - orc)
        good = err <= 3 * est.uncertainty and err <= 0.05 * orc
        ok &= good
        parts.append(f"t={t}: W2 {est.value:.4g} vs {orc:.4g} (hw {est.uncertainty:.2g}, "
                     f"rel {err / orc:.2%}) {'ok' if good else 'out'}")
        # modes without noise and without initial mass are exactly zero on both sides
        others = np.delete(st.snapshots[k][:, 0, :], [j, int(np.argmax(np.abs(x.coeffs[0])))],
                           axis=1)
        ok &= bool(np.all(others == 0))
    elapsed = time.perf_counter() - start
    ok &= elapsed <= 120
    record(1, "heat OU oracle agreement", ok, "; ".join(parts) + f"; runtime {elapsed:.1f}s")
    assert ok


def test_criterion_02_mixing_bound():
    cfg, m, b = _setup("heat_thm22")
    x = cfg.initial(m)
    cs = cfg.constant_set(m, b)
    parts, ok = [], True
    for eps in (0.1, 0.03, 0.01):
        cert = lab.empirical_mixing_time(m, b, x, eps, cfg.build_scheme(), cs=cs)
        row = cert.rows[0]
        ref = float(heat_mixing_bound(m.nu, m.domain.c0, b.hs_norm_H, cs.lambdas[3], 1.0, eps))
        ok &= cert.passed and abs(row["tau_bound"] - ref) <= 1e-12 * ref
        parts.append(f"eps={eps}: tau {row['tau_hat']:.4f} <= {row['tau_bound']:.4f}")
    record(2, "mixing bound respected", ok, "; ".join(parts))
    assert ok


def test_criterion_03_contraction():
    D = sp.build_domain("interval", "dirichlet", 16)
    heat = dr.Heat(D, 1.0)
    hb = build_noise(D, modes=[(1, 0.1)])
    x = sp.SpectralField.mode(D, 0, 1.0)
    y = sp.SpectralField.mode(D, 0, -1.0)
    hc = lab.contraction_certificate(heat, hb, x, y, 1.0, SchemeSpec(dt=1e-3), 0)
    target = -2 * heat.nu * D.c0 ** 2
    fitted = hc.rows[0]["fitted_rate"]
    heat_ok = hc.passed and abs(fitted - target) <= 0.02 * abs(target)

    cfg, m, b = _setup("nse_thm26")
    xn, yn = cfg.initial(m, "x"), cfg.initial(m, "y")
    T = float(cfg.params["T"])
    seeds = [int(s) for s in cfg.params["seeds"]]
    rows = [lab.contraction_certificate(m, b, xn, yn, T, cfg.build_scheme(), s) for s in seeds]
    nse_ok = all(c.passed for c in rows)
    worst = max(c.rows[0]["fitted_rate"] - c.rows[0]["predicted_rate"] for c in rows)
    ok = heat_ok and nse_ok and len(seeds) == 10
    record(3, "contraction certificate", ok,
           f"heat fitted {fitted:.4f} vs {target:.4f}; NSE {sum(c.passed for c in rows)}/10 seeds "
           f"pass (max fitted - predicted {worst:.3f})")
    assert ok


def test_criterion_04_skew_symmetry():
    rng = np.random.default_rng(4)
    worst = {}
    for name in ("burgers_thm24", "nse_thm26"):
        _, m, _ = _setup(name)
        w = 0.0
        for _ in range(1000):
            u = _sample(m, rng, 10 ** rng.uniform(-1, 1))
            f = sp.inner(m.nonlinear(u.coeffs), u.coeffs)
            w = max(w, abs(f) / (1 + float(sp.v_norm(u)) ** 3))
        worst[name] = w
    ok = all(v <= 1e-10 for v in worst.values())
    record(4, "skew-symmetry invariants", ok,
           ", ".join(f"{k} max ratio {v:.2e}" for k, v in worst.items()))
    assert ok


def test_criterion_05_audits():
    rng = np.random.default_rng(5)
    parts, ok = [], True
    for name in PRESETS:
        _, m, _ = _setup(name)
        n_fail, n_eq = 0, 0
        for _ in range(1000):
            s = 10 ** rng.uniform(-1, 1)
            u, v = _sample(m, rng, s), _sample(m, rng, s)
            c = dr.audit_coercivity(m, u)
            n_fail += (not c.passed) + (not dr.audit_monotonicity(m, u, v).passed)
            n_eq += c.equality
        good = n_fail == 0 and (n_eq == 1000 if name == "heat_thm22" else True)
        ok &= good
        parts.append(f"{name} failures {n_fail}, equality {n_eq}/1000")
    record(5, "hypothesis audits", ok, "; ".join(parts))
    assert ok


@pytest.mark.parametrize("name", PRESETS)
def test_criterion_06_moments(name):
    cfg, m, b = _setup(name, "moments")
    cs = cfg.constant_set(m, b)
    st = lab.run_ensemble(m, b, cfg.initial(m), 2.0, cfg.build_scheme(), 1000, cfg.seed,
                          cs.alpha, cs.beta)
    cert = lab.moment_certificate(st, cs)
    slack = min(r["rhs"] - r["lhs"] for r in cert.rows[1:])
    prev = _MOMENTS.get("parts", [])
    _MOMENTS["parts"] = prev + [f"{name} {cert.status} (min slack {slack:.3g})"]
    _MOMENTS["ok"] = _MOMENTS.get("ok", True) and cert.passed
    record(6, "moment certificate", _MOMENTS["ok"] and len(_MOMENTS["parts"]) == 4,
           "; ".join(_MOMENTS["parts"]))
    assert cert.passed


_MOMENTS = {}


def test_criterion_07_checker_closed_forms():
    ok = True
    cs = ConstantSet(3, 0, 2.0, 1.0, 1.0, math.pi, 0.3, 0.2, (0.5, 0, 0, 0.5))
    c1, c2, _ = compute_c123(cs)
    ok &= c1 == 0.3 ** 2 and c2 == 0.0
    cs = ConstantSet(2, 0, 2.0, 1.0, 1.0, math.pi, 0.3, 0.3, (0.5, 0, 0, 0.5))
    ok &= compute_c123(cs)[2] == 0.0
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(60):
        beta = float(rng.choice([0, rng.integers(1, 25)]) / 8)  # dyadic: alpha = beta + 2 exact
        alpha = float(rng.choice([beta + 2, rng.uniform(beta + 2.1, beta + 5)]))
        lam = rng.dirichlet(np.ones(4)) * 0.98 + 0.005
        if beta == 0:
            lam[1:3] = 0.0
        lam[3] = 1 - lam[:3].sum()
        hs = rng.uniform(0.01, 1)
        args = (alpha, beta, rng.uniform(0.1, 5), 1.0, 1.0, rng.uniform(0.5, 5), hs,
                hs * rng.uniform(0.1, 1))
        cs = ConstantSet(*args, tuple(float(v) for v in lam))
        ref = c_values(alpha, beta, args[2], args[5], args[6], args[7], cs.lambdas)
        for got, r in zip(compute_c123(cs), ref):
            if r != 0:
                worst = max(worst, float(abs((mp.mpf(got) - r) / r)))
            else:
                ok &= got == 0.0
    ok &= worst <= 1e-12
    # the bound evaluator against the scratch form as well
    hb = mixing_time_bound(ConstantSet(2, 0, 2.0, 2 * math.pi ** 2, 0.0, math.pi, 0.1, 0.1,
                                       (0.5, 0, 0, 0.5)), 1.0, 0.01, form="heat")
    ref = heat_mixing_bound(1.0, mp.pi, 0.1, 0.5, 1.0, 0.01)
    ok &= float(abs((hb - ref) / ref)) <= 1e-12
    record(7, "checker closed forms", ok, f"max relative deviation {worst:.1e} over 60 cases")
    assert ok


def test_criterion_08_deterministic_decay():
    cfg, m, _ = _setup("heat_thm22")
    x = cfg.initial(m)
    a = m.nu * m.domain.c0 ** 2
    errs = []
    for dt in (1e-3, 5e-4):
        p = deterministic_flow(x, m, 1.0, SchemeSpec(dt=dt))
        errs.append(float(np.max(np.abs(p.h_norm - np.exp(-a * p.times)))))
    heat_ok = errs[0] <= a * 1e-3 and abs(errs[0] / errs[1] - 2) <= 0.1

    pcfg = preset("powerlaw_thm28")
    pl = dr.PowerLawFluid(pcfg.build_domain(), float(pcfg.model["nu"]), p=3.0, ergodicity=False)
    xp = pcfg.initial(pl)
    sch = pcfg.build_scheme()
    coarse = lab.deterministic_decay_check(pl, xp, 2.0, sch)
    fine = lab.deterministic_decay_check(pl, xp, 2.0, SchemeSpec(dt=sch.dt / 2))
    r0, r1 = coarse.details["residual"], fine.details["residual"]
    pl_ok = coarse.passed and fine.passed and r1 < r0
    ok = heat_ok and pl_ok
    record(8, "deterministic decay", ok,
           f"heat max error {errs[0]:.2e} (dt) / {errs[1]:.2e} (dt/2); power-law p=3 "
           f"comparison {'held' if coarse.passed and fine.passed else 'violated'}, "
           f"residual {r0:.3e} -> {r1:.3e}")
    assert ok


def test_criterion_09_convexity():
    parts, ok = [], True
    for a in (2, 3, 4):
        for b in (0, 1, 2):
            r = convexity_probe(a, b, 100000, seed=9)
            ok &= r.passed
            parts.append(f"({a},{b}) {r.n_violations}")
    record(9, "convexity probe", ok, "violations per (alpha,beta): " + ", ".join(parts))
    assert ok


def test_criterion_10_reproducibility(tmp_path):
    text = preset_text("burgers_thm24").replace("n_paths = 1000", "n_paths = 300").replace(
        "T = 2.0", "T = 0.4")
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(text)
    runs = {}
    for tag, extra in (("a", ["--workers", "1"]), ("b", ["--workers", "1"]),
                       ("c", ["--workers", "3"])):
        out = tmp_path / tag
        code = cli.main(["run", "--config", str(cfg), "--out", str(out)] + extra)
        man = json.loads((out / "manifest.json").read_text())
        runs[tag] = (code, {n: (out / n).read_bytes() for n in man["artifacts"]
                            if n.endswith(".csv")})
    same_seed = runs["a"] == runs["b"]
    same_workers = runs["a"][1] == runs["c"][1]
    ok = same_seed and same_workers and runs["a"][0] == 0 and len(runs["a"][1]) >= 2
    record(10, "reproducibility", ok,
           f"identical seeds byte-identical: {same_seed}; workers 1 vs 3 identical: {same_workers}")
    assert ok

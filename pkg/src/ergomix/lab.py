"""Monte Carlo experiments: ensembles, W2 estimators, certificates.

Ensembles are split into fixed-size trajectory batches. The partition
depends only on n and BATCH, never on the worker count, and trajectory i
always uses stream (seed, i), so results are identical for any number of
workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from . import spectral as sp
from .checker import ConstantSet, check_ergodicity, check_mixing, compute_c123, mixing_time_bound
from .drift import Heat
from .errors import (BoundUnavailableError, ConfigError, InsufficientSamplesError)
from .integrator import SchemeSpec, iterate, simulate_coupled, simulate_path
from .noise import RngStream, binomial_estimate, zero_noise

BATCH = 256
SE_MARGIN = 3.0
WORKERS_ENV = "ERGOMIX_WORKERS"


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer") from None


def _map(fn, jobs, workers):
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(fn, jobs))


def _batches(n):
    return [(i, min(i + BATCH, n)) for i in range(0, n, BATCH)]


def _checkpoint_steps(n_steps, stride):
    stride = stride or max(1, n_steps // 10)
    steps = list(range(0, n_steps + 1, stride))
    if steps[-1] != n_steps:
        steps.append(n_steps)
    return np.array(steps, dtype=np.int64)


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class EnsembleStats:
    """Per-path values at checkpoint times.

    h_power[k, i] = ||X_i(t_k)||_H^(beta+2); integral[k, i] is the
    trapezoid approximation of int_0^t_k ||X_i||_H^beta ||X_i||_V^alpha.
    """

    times: np.ndarray
    h_power: np.ndarray
    integral: np.ndarray
    snapshots: np.ndarray
    alpha: float
    beta: float
    seed: int
    x_norm_H: float

    @property
    def n(self):
        return self.h_power.shape[1]

    @property
    def mean_h_power(self):
        return self.h_power.mean(axis=1)

    @property
    def se_h_power(self):
        return self.h_power.std(axis=1, ddof=1) / math.sqrt(self.n)

    @property
    def mean_integral(self):
        return self.integral.mean(axis=1)

    @property
    def se_integral(self):
        return self.integral.std(axis=1, ddof=1) / math.sqrt(self.n)

    def columns(self):
        return {"time": self.times, "mean_h_power": self.mean_h_power,
                "se_h_power": self.se_h_power, "mean_integral": self.mean_integral,
                "se_integral": self.se_integral}


def _ensemble_batch(job):
    m, b, x, scheme, seed, lo, hi, ck, alpha, beta = job
    d = m.domain
    n_steps = int(ck[-1])
    c = np.broadcast_to(x, (hi - lo,) + x.shape).copy()
    streams = [RngStream(seed, i) for i in range(lo, hi)] if not b.is_zero else []

    def density(c):
        return sp.h_norm(c) ** beta * sp.v_norm(c, d) ** alpha

    hp = np.empty((len(ck), hi - lo))
    integ = np.empty((len(ck), hi - lo))
    snaps = np.empty((len(ck), hi - lo) + x.shape)
    acc = np.zeros(hi - lo)
    prev = density(c)
    hp[0] = sp.h_norm(c) ** (beta + 2)
    integ[0] = 0.0
    snaps[0] = c
    j = 1
    for k, c in iterate(c, m, b, scheme, n_steps, streams):
        cur = density(c)
        acc += 0.5 * scheme.dt * (prev + cur)
        prev = cur
        if j < len(ck) and k == ck[j]:
            hp[j] = sp.h_norm(c) ** (beta + 2)
            integ[j] = acc
            snaps[j] = c
            j += 1
    return hp, integ, snaps


def run_ensemble(m, b, x: sp.SpectralField, T, scheme: SchemeSpec, n, seed,
                 alpha=None, beta=None, workers=None) -> EnsembleStats:
    """n trajectories from x on streams (seed, 0..n-1), checkpointed."""
    if n < 2:
        raise InsufficientSamplesError("an ensemble needs n >= 2")
    n_steps = scheme.n_steps(T)
    ck = _checkpoint_steps(n_steps, scheme.checkpoint_stride)
    if alpha is None or beta is None:
        mc = m.constants
        alpha = mc.alpha if alpha is None else alpha
        beta = mc.beta if beta is None else beta
    jobs = [(m, b, x.coeffs, scheme, seed, lo, hi, ck, alpha, beta) for lo, hi in _batches(n)]
    parts = _map(_ensemble_batch, jobs, workers)
    hp = np.concatenate([p[0] for p in parts], axis=1)
    integ = np.concatenate([p[1] for p in parts], axis=1)
    snaps = np.concatenate([p[2] for p in parts], axis=1)
    return EnsembleStats(ck * scheme.dt, hp, integ, snaps, float(alpha), float(beta),
                         int(seed), float(sp.h_norm(x)))


# ---------------------------------------------------------------------------
# W2 estimators


@dataclass(frozen=True)
class W2Estimate:
    value: float
    method: str
    uncertainty: float = 0.0
    per_mode: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("W2 value must be >= 0")


def gaussian_w2(m1, s1, m2, s2):
    """Per-coordinate W2 between N(m1, s1^2) and N(m2, s2^2)."""
    return np.sqrt((np.asarray(m1) - m2) ** 2 + (np.asarray(s1) - s2) ** 2)


def heat_law(m: Heat, b, x: sp.SpectralField, t):
    """Mode means and standard deviations of the exact heat law at time t."""
    if not isinstance(m, Heat):
        raise ConfigError("the Gaussian oracle is available for the heat model only")
    rate = m.linear_rates[0]
    sig = np.zeros(m.domain.n_modes)
    sig[b.modes] = b.sigmas
    mean = x.coeffs[0] * np.exp(-rate * t)
    std = sig * np.sqrt(-np.expm1(-2 * rate * t) / (2 * rate))
    return mean, std


def heat_stationary(m: Heat, b):
    rate = m.linear_rates[0]
    sig = np.zeros(m.domain.n_modes)
    sig[b.modes] = b.sigmas
    return np.zeros_like(sig), sig / np.sqrt(2 * rate)


def w2_gaussian_oracle(m, b, x, t) -> W2Estimate:
    """Exact W2 between law(X_t^x) and the invariant law for the heat model."""
    mt, st = heat_law(m, b, x, t)
    mi, si = heat_stationary(m, b)
    per = gaussian_w2(mt, st, mi, si)
    return W2Estimate(float(np.sqrt(np.sum(per ** 2))), "gaussian_oracle", 0.0, per)


def w2_1d(a, b):
    """Exact W2 between two 1D empirical measures (quantile coupling)."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if len(a) == len(b):
        return float(np.sqrt(np.mean((a - b) ** 2)))
    qa = np.arange(1, len(a) + 1) / len(a)
    qb = np.arange(1, len(b) + 1) / len(b)
    q = np.union1d(qa, qb)
    w = np.diff(np.concatenate([[0.0], q]))
    ia = np.minimum(np.searchsorted(qa, q - 1e-15), len(a) - 1)
    ib = np.minimum(np.searchsorted(qb, q - 1e-15), len(b) - 1)
    return float(np.sqrt(np.sum(w * (a[ia] - b[ib]) ** 2)))


def w2_to_gaussian_1d(samples, mean, std):
    """Exact W2 between a 1D empirical measure and N(mean, std^2).

    On the i-th quantile cell [u_{i-1}, u_i] the integral of
    (x_(i) - mean - std*Phi^-1(u))^2 is evaluated in closed form.
    """
    x = np.sort(np.asarray(samples, dtype=float)) - mean
    n = len(x)
    z = special.ndtri(np.arange(n + 1) / n)
    pdf = stats.norm.pdf(z)
    with np.errstate(invalid="ignore"):
        zpdf = np.where(np.isfinite(z), z * pdf, 0.0)
    m1 = pdf[:-1] - pdf[1:]  # int Phi^-1(u) du over the cell
    m2 = 1.0 / n + zpdf[:-1] - zpdf[1:]  # int Phi^-1(u)^2 du over the cell
    val = np.sum(x * x / n - 2 * std * x * m1 + std * std * m2)
    return float(math.sqrt(max(val, 0.0)))


def _bootstrap(stat, arrays, n_boot, seed, level=0.95):
    rng = np.random.default_rng(seed)
    vals = np.empty(n_boot)
    for r in range(n_boot):
        vals[r] = stat(*[a[rng.integers(0, len(a), len(a))] for a in arrays])
    lo, hi = np.quantile(vals, [(1 - level) / 2, (1 + level) / 2])
    return float((hi - lo) / 2)


def w2_empirical(A, B, method="sliced", n_proj=64, coord=0, n_boot=200, seed=0) -> W2Estimate:
    """Empirical W2 proxy between sample matrices A (nA, dim) and B (nB, dim).

    sliced: mean over n_proj random unit directions of the exact 1D W2
    of the projections (a lower-bound-flavoured proxy for W2).
    mode_marginal_1d: exact 1D W2 on coordinate `coord`.
    """
    A = np.asarray(A, dtype=float).reshape(len(A), -1)
    B = np.asarray(B, dtype=float).reshape(len(B), -1)
    if A.shape[1] != B.shape[1]:
        raise ConfigError("sample sets must share the ambient dimension")
    if method == "sliced":
        if min(len(A), len(B)) < 50:
            raise InsufficientSamplesError("sliced W2 needs at least 50 samples per side")
        dirs = np.random.default_rng(seed).standard_normal((n_proj, A.shape[1]))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

        def stat(a, b):
            pa, pb = a @ dirs.T, b @ dirs.T
            return float(np.mean([w2_1d(pa[:, j], pb[:, j]) for j in range(n_proj)]))

        label = f"sliced({n_proj})"
    elif method == "mode_marginal_1d":
        if min(len(A), len(B)) < 2:
            raise InsufficientSamplesError("need at least 2 samples per side")

        def stat(a, b):
            return w2_1d(a[:, coord], b[:, coord])

        label = "mode_marginal_1d"
    else:
        raise ConfigError(f"unknown W2 method {method!r}")
    val = stat(A, B)
    hw = _bootstrap(stat, [A, B], n_boot, seed + 1) if n_boot else 0.0
    return W2Estimate(val, label, hw)


def w2_marginal_vs_gaussian(samples, mean, std, n_boot=200, seed=0) -> W2Estimate:
    """Exact 1D W2 of an empirical marginal against a Gaussian, bootstrapped."""
    samples = np.asarray(samples, dtype=float)
    if len(samples) < 2:
        raise InsufficientSamplesError("need at least 2 samples")
    val = w2_to_gaussian_1d(samples, mean, std)
    hw = _bootstrap(lambda s: w2_to_gaussian_1d(s, mean, std), [samples], n_boot, seed) \
        if n_boot else 0.0
    return W2Estimate(val, "mode_marginal_1d", hw)


# ---------------------------------------------------------------------------
# certificates


@dataclass
class Certificate:
    name: str
    status: str  # pass | fail | inconclusive
    rows: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.status == "pass"


def _status(flags):
    if any(f is None for f in flags):
        return "inconclusive" if all(f is not False for f in flags) else "fail"
    return "pass" if all(flags) else "fail"


def fit_log_rate(times, values, floor=1e-14):
    """Least-squares slope of log(values) on the second half of the horizon.

    Returns (slope, stderr, window). The window is truncated at the first
    value below `floor`.
    """
    times = np.asarray(times)
    values = np.asarray(values)
    start = int(np.searchsorted(times, times[-1] / 2))
    under = np.flatnonzero(values[start:] < floor)
    stop = start + (int(under[0]) if len(under) else len(values) - start)
    if stop - start < 3:
        raise InsufficientSamplesError("difference underflows before the fit window")
    t, v = times[start:stop], np.log(values[start:stop])
    res = stats.linregress(t, v)
    return float(res.slope), float(res.stderr), (float(t[0]), float(t[-1]))


def contraction_certificate(m, b, x, y, T, scheme, seed=0, constants=None) -> Certificate:
    """Fitted decay rate of ||X^x - X^y||_H^2 against the coupling bound.

    predicted = -delta2 + (C2/2)(mean_w rho_x + mean_w rho_y) with
    rho = ||X||_V^alpha ||X||_H^beta averaged over the fit window w. The
    comparison allows the fit standard error plus delta2^2 dt / 2 for the
    O(dt) bias of the implicit linear step.
    """
    if np.array_equal(x.coeffs, y.coeffs):
        raise ConfigError("contraction certificate needs x != y")
    mc = constants or m.constants
    if mc.C2 is None or mc.delta2 is None:
        raise BoundUnavailableError("model has no local monotonicity constants")
    stream = None if b.is_zero else RngStream(seed, 0)
    px, py, pd = simulate_coupled(x, y, m, b, T, scheme, stream)
    slope, err, (t0, t1) = fit_log_rate(pd.times, pd.h_norm ** 2)
    w = (pd.times >= t0) & (pd.times <= t1)
    a, be = mc.alpha, mc.beta
    rx = np.mean(px.v_norm[w] ** a * px.h_norm[w] ** be)
    ry = np.mean(py.v_norm[w] ** a * py.h_norm[w] ** be)
    predicted = -mc.delta2 + 0.5 * mc.C2 * (rx + ry)
    allowance = err + mc.delta2 ** 2 * scheme.dt / 2
    ok = slope <= predicted + allowance
    row = {"seed": seed, "fitted_rate": slope, "fit_stderr": err,
           "predicted_rate": float(predicted), "allowance": float(allowance), "pass": bool(ok)}
    return Certificate("contraction", "pass" if ok else "fail", [row],
                       {"paths": (px, py, pd), "window": (t0, t1)})


def _cs_terms(cs: ConstantSet):
    c1, c2, c3 = compute_c123(cs)
    return c1, c2, c3


def moment_certificate(st: EnsembleStats, cs: ConstantSet) -> Certificate:
    """E|X_t|^(b+2) + l0 d1 (b+2)/2 E int |X|^b |X|_V^a <= |x|^(b+2) + t(c1+c2)."""
    if abs(st.alpha - cs.alpha) > 1e-12 or abs(st.beta - cs.beta) > 1e-12:
        raise ConfigError("ensemble exponents do not match the constant set")
    c1, c2, _ = _cs_terms(cs)
    k = cs.lambda0 * cs.delta1 * (cs.beta + 2) / 2
    per = st.h_power + k * st.integral
    lhs = per.mean(axis=1)
    se = per.std(axis=1, ddof=1) / math.sqrt(st.n)
    rhs = st.x_norm_H ** (cs.beta + 2) + st.times * (c1 + c2)
    ok = lhs - SE_MARGIN * se <= rhs * (1 + 1e-12) + 1e-300
    rows = [{"time": float(t), "lhs": float(l), "se": float(s), "rhs": float(r), "pass": bool(o)}
            for t, l, s, r, o in zip(st.times, lhs, se, rhs, ok)]
    return Certificate("moment", "pass" if ok.all() else "fail", rows)


def _log_mean_exp(s):
    return float(special.logsumexp(s) - math.log(len(s)))


def exp_moment_certificate(st: EnsembleStats, cs: ConstantSet, n_boot=200, seed=0,
                           max_rel_hw=0.5, min_ess=10.0) -> Certificate:
    """E exp(|X_t|^(b+2) + l0 d1 (b+2)/2 int ...) <= exp(|x|^(b+2) + t(c1+c2+c3)).

    Compared in log space. A checkpoint is inconclusive when the bootstrap
    half-width of the log estimate exceeds log(1 + max_rel_hw) or when a
    few paths carry the whole mean (effective sample size below min_ess).
    """
    c1, c2, c3 = _cs_terms(cs)
    k = cs.lambda0 * cs.delta1 * (cs.beta + 2) / 2
    rows, flags = [], []
    for j, t in enumerate(st.times):
        z = st.h_power[j] + k * st.integral[j]
        log_rhs = st.x_norm_H ** (cs.beta + 2) + t * (c1 + c2 + c3)
        log_est = _log_mean_exp(z)
        w = np.exp(z - z.max())
        ess = float(w.sum() ** 2 / np.sum(w * w))
        hw = _bootstrap(_log_mean_exp, [z], n_boot, seed + j) if np.ptp(z) > 0 else 0.0
        if not np.isfinite(log_est) or hw > math.log1p(max_rel_hw) \
                or ess < min(min_ess, len(z)) * (1 - 1e-12):
            flag = None
        else:
            flag = bool(log_est - SE_MARGIN * hw <= log_rhs + 1e-12 * max(1.0, abs(log_rhs)))
        flags.append(flag)
        rows.append({"time": float(t), "log_estimate": log_est, "log_half_width": hw,
                     "log_rhs": float(log_rhs), "ess": ess,
                     "status": {True: "pass", False: "fail", None: "inconclusive"}[flag]})
    return Certificate("exp_moment", _status(flags), rows)


# ---------------------------------------------------------------------------
# mixing times


def heat_w2_curve(m, b, x, times):
    return np.array([w2_gaussian_oracle(m, b, x, t).value for t in times])


def _first_below(times, values, eps):
    hit = np.flatnonzero(np.asarray(values) <= eps)
    return float(times[hit[0]]) if len(hit) else None


def empirical_mixing_time(m, b, x, eps, scheme, seeds=(0,), cs=None, T=None, n_paths=200,
                          n_proj=32, surrogate_samples=400) -> Certificate:
    """First checkpoint where the W2 estimate is <= eps, against the bound.

    Heat: the exact Gaussian W2 curve, scanned on the scheme's time grid
    and refined to the crossing time, bound in the heat form. Otherwise a sliced W2 between an ensemble and a
    long-run surrogate for the invariant law, bound in the general form.
    """
    if not eps > 0:
        raise ConfigError("eps must be positive")
    if cs is None:
        raise ConfigError("a constant set is required for the mixing bound")
    xn = float(sp.h_norm(x))
    if isinstance(m, Heat):
        if not check_ergodicity(cs).ergodicity_pass:
            raise BoundUnavailableError("heat hypotheses fail")
        bound = mixing_time_bound(cs, xn, eps, form="heat")
        T = T or scheme.dt * max(10, math.ceil(2 * bound / scheme.dt))
        times = scheme.dt * np.arange(scheme.n_steps(T) + 1)
        w2 = heat_w2_curve(m, b, x, times)
        tau = _first_below(times, w2, eps)
        if tau is not None and tau > 0:
            # the oracle is continuous in t: locate the crossing inside the last step
            def gap(t):
                return w2_gaussian_oracle(m, b, x, t).value - eps
            tau = optimize.brentq(gap, tau - scheme.dt, tau, xtol=1e-15)
        status = "inconclusive" if tau is None else \
            ("pass" if tau <= bound * (1 + 1e-12) else "fail")
        return Certificate("mixing", status,
                           [{"eps": eps, "tau_hat": tau, "tau_bound": bound,
                             "pass": status == "pass"}],
                           {"times": times, "w2": w2, "method": "gaussian_oracle"})
    rep = check_mixing(cs)
    if not rep.mixing_pass:
        raise BoundUnavailableError("mixing condition fails; no bound available")
    bound = mixing_time_bound(cs, xn, eps)
    T = T or bound
    sur, converged = long_run_surrogate(m, b, scheme, surrogate_samples, seeds[0] + 10 ** 6,
                                        cs=cs)
    ens = [run_ensemble(m, b, x, T, scheme, n_paths, s) for s in seeds]
    times = ens[0].times
    w2 = []
    for j in range(len(times)):
        pool = np.concatenate([e.snapshots[j] for e in ens])
        w2.append(w2_empirical(pool, sur, "sliced", n_proj=n_proj, n_boot=0).value)
    w2 = np.array(w2)
    tau = _first_below(times, w2, eps)
    if not converged or tau is None:
        status = "inconclusive"
    else:
        status = "pass" if tau <= bound else "fail"
    return Certificate("mixing", status,
                       [{"eps": eps, "tau_hat": tau, "tau_bound": bound,
                         "pass": status == "pass"}],
                       {"times": times, "w2": w2, "method": f"sliced({n_proj})",
                        "surrogate_converged": converged})


def long_run_surrogate(m, b, scheme, n_samples, seed, cs=None, stride=None, burn_in=None):
    """Pooled states of one long trajectory after burn-in.

    burn-in = 5 * 2/gamma when a gamma is known, else half the run.
    Convergence test: the mean H-norm of the two halves of the pool agree
    within 3 batch-mean standard errors.
    """
    stride = stride or max(1, int(round(0.1 / scheme.dt)))
    if burn_in is None:
        if cs is not None and cs.gamma:
            burn_in = 5 * 2 / cs.gamma
        else:
            burn_in = n_samples * stride * scheme.dt
    n_burn = int(math.ceil(burn_in / scheme.dt))
    x0 = np.zeros((1, m.ncomp, m.domain.n_modes))
    total = n_burn + n_samples * stride
    out = []
    stream = [RngStream(seed, 0)] if not b.is_zero else []
    for k, c in iterate(x0, m, b, scheme, total, stream):
        if k > n_burn and (k - n_burn) % stride == 0:
            out.append(c[0].copy())
    pool = np.array(out)
    h = sp.h_norm(pool)
    half = len(h) // 2
    blocks = np.array_split(h, 10)
    bm = np.array([blk.mean() for blk in blocks])
    se = bm.std(ddof=1) / math.sqrt(len(bm)) * math.sqrt(2)
    converged = abs(h[:half].mean() - h[half:].mean()) <= SE_MARGIN * se + 1e-300
    return pool, bool(converged)


# ---------------------------------------------------------------------------
# Lyapunov occupation and stability


def lyapunov_occupation(m, b, x, T, R, scheme, seed=0, cs=None) -> dict:
    """Fraction of grid times with Theta(X_t) = c0^a d1 |X_t|^a <= R.

    With beta = 0 the time-averaged moment bound gives the lower bound
    1 - 2(|x|^2/T + c1 + c2)/(2 l0 R) via Markov's inequality.
    """
    if not R > 0:
        raise ConfigError("R must be positive")
    mc = m.constants
    stream = None if b.is_zero else RngStream(seed, 0)
    path = simulate_path(x, m, b, T, scheme, stream)
    theta = m.domain.c0 ** mc.alpha * mc.delta1 * path.h_norm ** mc.alpha
    occ = float(np.mean(theta <= R))
    lower = None
    if cs is not None and cs.beta == 0:
        c1, c2, _ = compute_c123(cs)
        xn = float(sp.h_norm(x))
        lower = max(0.0, 1 - 2 * (xn ** 2 / T + c1 + c2) / (2 * cs.lambda0 * R))
    return {"occupation": occ, "lower_bound": lower, "R": R, "T": T,
            "consistent": lower is None or occ >= lower}


def _stability_batch(job):
    m, b, x, scheme, seed, lo, hi, ref = job
    n_steps = len(ref) - 1
    c = np.broadcast_to(x, (hi - lo,) + x.shape).copy()
    streams = [RngStream(seed, i) for i in range(lo, hi)] if not b.is_zero else []
    worst = np.zeros(hi - lo)
    for k, c in iterate(c, m, b, scheme, n_steps, streams):
        worst = np.maximum(worst, np.sum((c - ref[k]) ** 2, axis=(-2, -1)))
    return worst


def stability_vs_deterministic(m, b, x, T, eps, n_paths, scheme, seed=0, workers=None,
                               confidence=0.95):
    """Frequency of sup_t |X_t - u_t|_H^2 <= eps, with an exact binomial CI."""
    if not eps > 0:
        raise ConfigError("eps must be positive")
    n_steps = scheme.n_steps(T)
    ref = np.empty((n_steps + 1,) + x.coeffs.shape)
    ref[0] = x.coeffs
    for k, c in iterate(x.coeffs[None], m, zero_noise(m.domain, m.ncomp), scheme, n_steps, []):
        ref[k] = c[0]
    jobs = [(m, b, x.coeffs, scheme, seed, lo, hi, ref) for lo, hi in _batches(n_paths)]
    worst = np.concatenate(_map(_stability_batch, jobs, workers))
    return binomial_estimate(int(np.sum(worst <= eps)), n_paths, confidence)


# ---------------------------------------------------------------------------
# deterministic decay


def decay_comparison(times, alpha, c0, delta1, x_norm_H):
    """Comparison bound on |u_t|_H for the noiseless flow."""
    t = np.asarray(times, dtype=float)
    if alpha == 2:
        return x_norm_H * np.exp(-0.5 * c0 ** 2 * delta1 * t)
    e = alpha - 2
    return (x_norm_H ** (-e) + 0.5 * e * c0 ** alpha * delta1 * t) ** (-1 / e)


def decay_comparison_discrete(n_steps, dt, alpha, c0, delta1, x_norm_H):
    """Implicit Euler for y' = -k y^(alpha-1), k = c0^alpha delta1 / 2.

    This is the step-by-step analogue of the comparison bound: an implicit
    step of a coercive drift satisfies |u_(n+1)| + dt k |u_(n+1)|^(alpha-1)
    <= |u_n|. It is within a factor 1 + O(dt) of the continuous bound.
    """
    k = 0.5 * c0 ** alpha * delta1
    y = np.empty(n_steps + 1)
    y[0] = x_norm_H
    for n in range(n_steps):
        yn = y[n]
        if alpha == 2 or yn == 0.0:
            y[n + 1] = yn / (1 + dt * k)
        else:
            y[n + 1] = optimize.brentq(lambda z: z + dt * k * z ** (alpha - 1) - yn, 0.0, yn,
                                       xtol=1e-300, rtol=4 * np.finfo(float).eps)
    return y


def deterministic_decay_check(m, x, T, scheme, constants=None) -> Certificate:
    """Noiseless path against the comparison bound at every step.

    The path is checked against the discrete comparison sequence, which
    carries the 1 + O(dt) slack of the scheme; the continuous bound is
    reported alongside.

    The residual is the accumulated |discrete energy identity| error,
    sum_n | |u_{n+1}|^2 - |u_n|^2 - 2 dt <A(u_n), u_n> |, which is O(dt).
    """
    from .integrator import energy_identity_residual

    mc = constants or m.constants
    sch = SchemeSpec(scheme.scheme, scheme.dt, scheme.taming, scheme.guard, 1)
    path = simulate_path(x, m, zero_noise(m.domain, m.ncomp), T, sch, None)
    xn = float(sp.h_norm(x))
    cont = decay_comparison(path.times, mc.alpha, m.domain.c0, mc.delta1, xn)
    bound = decay_comparison_discrete(len(path.times) - 1, sch.dt, mc.alpha, m.domain.c0,
                                      mc.delta1, xn)
    ok = path.h_norm <= bound * (1 + 1e-12)
    res = energy_identity_residual(path, m, zero_noise(m.domain, m.ncomp), sch)
    return Certificate("decay", "pass" if ok.all() else "fail",
                       [{"time": float(t), "h_norm": float(h), "bound": float(bd),
                         "bound_continuous": float(bc), "pass": bool(o)}
                        for t, h, bd, bc, o in zip(path.times, path.h_norm, bound, cont, ok)],
                       {"residual": float(np.sum(np.abs(res))), "path": path})

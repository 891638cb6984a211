"""Closed-form ergodicity/mixing conditions, bounds and the convexity probe.

Notation: alpha, beta, delta1, delta2, C2 from the coercivity and local
monotonicity conditions, c0 the embedding constant (||x||_V >= c0 ||x||_H),
hs = ||B||_{L2(U,H)}, op = ||B||_{L(U,H)}, weights lambda0..lambda3 summing
to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BoundUnavailableError, ConfigError

REL_TOL = 1e-12


@dataclass(frozen=True)
class ConstantSet:
    alpha: float
    beta: float
    delta1: float
    delta2: float
    C2: float
    c0: float
    hs_norm_H: float
    op_norm: float
    lambdas: tuple = None
    gamma: float | None = None

    def __post_init__(self):
        errs = []
        a, b = self.alpha, self.beta
        if not a >= 2:
            errs.append(f"alpha must be >= 2, got {a}")
        if not 0 <= b <= a - 2 + 1e-15:
            errs.append(f"beta must satisfy 0 <= beta <= alpha - 2, got {b}")
        for name in ("delta1", "delta2", "c0"):
            if not getattr(self, name) > 0:
                errs.append(f"{name} must be positive")
        if not self.C2 >= 0:
            errs.append("C2 must be >= 0")
        if not (self.hs_norm_H >= 0 and self.op_norm >= 0):
            errs.append("noise norms must be >= 0")
        elif self.op_norm > self.hs_norm_H * (1 + 1e-12):
            errs.append("operator norm cannot exceed the Hilbert-Schmidt norm")
        if errs:
            raise ConfigError(errs)
        if self.lambdas is None:
            object.__setattr__(self, "lambdas", default_lambdas(self))
        lam = tuple(float(v) for v in self.lambdas)
        object.__setattr__(self, "lambdas", lam)
        errs = []
        if len(lam) != 4:
            errs.append("lambda: need four weights lambda0..lambda3")
        else:
            if abs(sum(lam) - 1) > 1e-12:
                errs.append(f"lambda: weights must sum to 1, got {sum(lam)!r}")
            if not 0 < lam[0] < 1:
                errs.append("lambda: lambda0 must lie in (0, 1)")
            if b == 0:
                if lam[1] != 0 or lam[2] != 0:
                    errs.append("lambda: lambda1 = lambda2 = 0 is required when beta = 0")
                if not 0 <= lam[3] < 1:
                    errs.append("lambda: lambda3 must lie in [0, 1)")
            elif any(not 0 < v < 1 for v in lam):
                errs.append("lambda: all weights must lie in (0, 1) when beta > 0")
            if a > b + 2 and not lam[3] > 0:
                errs.append("lambda: lambda3 must be positive when alpha > beta + 2")
        if self.gamma is not None and not 0 < self.gamma <= self.delta2:
            errs.append(f"gamma must lie in (0, delta2={self.delta2}]")
        if errs:
            raise ConfigError(errs)

    @property
    def lambda0(self):
        return self.lambdas[0]

    @property
    def borderline(self):
        return abs(self.alpha - self.beta - 2) <= 1e-15

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "delta1": self.delta1,
                "delta2": self.delta2, "C2": self.C2, "c0": self.c0,
                "hs_norm_H": self.hs_norm_H, "op_norm": self.op_norm,
                "lambdas": list(self.lambdas), "gamma": self.gamma}


def default_lambdas(cs) -> tuple:
    """Deterministic weights when none are configured.

    beta = 0: lambda1 = lambda2 = 0. The ergodicity inequality needs
    lambda0 >= L0 and (alpha = 2 case) the side condition needs
    lambda3 >= L3; the slack 1 - L0 - L3 is split evenly. Without any
    constraint this is the 50/50 split. beta > 0: equal quarters.
    """
    if cs.beta > 0:
        return (0.25, 0.25, 0.25, 0.25)
    hs2 = cs.hs_norm_H ** 2
    L0 = 2 * hs2 * cs.C2 / (cs.delta1 * cs.delta2 * 2) if cs.C2 > 0 else 0.0
    L3 = cs.alpha * hs2 / (cs.delta1 * cs.c0 ** cs.alpha) if cs.borderline else 0.0
    slack = 1.0 - L0 - L3
    if slack <= 0 or L0 >= 1:
        return (0.5, 0.0, 0.0, 0.5)
    lam0 = L0 + slack / 2
    return (lam0, 0.0, 0.0, 1.0 - lam0)


def compute_c123(cs: ConstantSet):
    a, b, d1, c0 = cs.alpha, cs.beta, cs.delta1, cs.c0
    hs, op = cs.hs_norm_H, cs.op_norm
    _, l1, l2, l3 = cs.lambdas
    if b == 0:
        c1 = hs ** 2
        c2 = 0.0
    else:
        c1 = (a * (b + 2) / (2 * (a + b) * (l1 * d1 * c0 ** a * (a + b) / b) ** (b / a))
              * hs ** (2 * (a + b) / a))
        c2 = (b ** ((a + b) / a) * a * (b + 2)
              / ((a + b) * (l2 * d1 * c0 ** a * (a + b) / (2 * b)) ** (b / a))
              * op ** (2 * (a + b) / a))
    if cs.borderline or hs == 0:
        c3 = 0.0
    else:
        # exponents grow like 1/(alpha - beta - 2); evaluate in logs
        e = a - b - 2
        log_c3 = (math.log((b + 2) * e / (2 * (a + b)))
                  - (2 * b + 2) / e * math.log(l3 * d1 * c0 ** a * (a + b) / (2 * b + 2))
                  + (a + b) / e * math.log(b + 2) + 2 * (a + b) / e * math.log(hs))
        c3 = math.exp(log_c3) if log_c3 < 709.0 else math.inf
    return c1, c2, c3


@dataclass(frozen=True)
class HypothesisReport:
    constants: ConstantSet
    c1: float
    c2: float
    c3: float
    ratio: float
    ergodicity_pass: bool
    borderline_applies: bool
    borderline_pass: bool | None
    mixing_pass: bool | None = None
    moment_bounds: dict = field(default_factory=dict)
    mixing_time: float | None = None
    notes: tuple = ()

    def rows(self):
        """One row per inequality: (name, lhs, rhs, pass)."""
        cs = self.constants
        out = [("ergodicity_ratio_le_delta2", self.ratio, cs.delta2, self.ergodicity_pass)]
        if self.borderline_applies:
            out.append(("borderline_noise_bound", cs.hs_norm_H ** 2,
                        cs.lambdas[3] * cs.delta1 * cs.c0 ** cs.alpha / cs.alpha,
                        self.borderline_pass))
        if self.mixing_pass is not None:
            out.append(("mixing_ratio_le_delta2_minus_gamma", self.ratio,
                        cs.delta2 - cs.gamma, self.mixing_pass))
        return out


def _base_report(cs):
    c1, c2, c3 = compute_c123(cs)
    ratio = 2 * (c1 + c2 + c3) * cs.C2 / (cs.lambda0 * cs.delta1 * (cs.beta + 2))
    bl = cs.borderline
    bl_pass = None
    if bl:
        bl_pass = cs.hs_norm_H ** 2 <= cs.lambdas[3] * cs.delta1 * cs.c0 ** cs.alpha / cs.alpha \
            * (1 + REL_TOL)
    erg = ratio <= cs.delta2 * (1 + REL_TOL) and bl_pass is not False
    notes = ()
    if cs.beta > 0:
        notes = ("c2 evaluated with the operator norm of B as printed; the displayed "
                 "formula carries a duplicated comma",)
    return dict(constants=cs, c1=c1, c2=c2, c3=c3, ratio=ratio, ergodicity_pass=erg,
                borderline_applies=bl, borderline_pass=bl_pass, notes=notes)


def check_ergodicity(cs: ConstantSet) -> HypothesisReport:
    rep = _base_report(cs)
    if rep["ergodicity_pass"]:
        rep["moment_bounds"] = _moments(cs, rep["c1"], rep["c2"])
    return HypothesisReport(**rep)


def check_mixing(cs: ConstantSet) -> HypothesisReport:
    if cs.gamma is None:
        raise ConfigError("gamma is required for the mixing check")
    rep = _base_report(cs)
    rep["mixing_pass"] = (rep["ratio"] <= (cs.delta2 - cs.gamma) + REL_TOL * cs.delta2
                          and rep["borderline_pass"] is not False)
    if rep["ergodicity_pass"]:
        rep["moment_bounds"] = _moments(cs, rep["c1"], rep["c2"])
    return HypothesisReport(**rep)


def _moments(cs, c1, c2):
    a, b = cs.alpha, cs.beta
    m = 2 * (c1 + c2) / (cs.c0 ** a * cs.lambda0 * cs.delta1 * (b + 2))
    out = {f"moment_{a + b:g}": m, "moment_1": m ** (1 / (a + b))}
    if b == 0:
        out[f"V_moment_{a:g}"] = (c1 + c2) / (cs.c0 ** a * cs.lambda0 * cs.delta1)
    return out


def invariant_moment_bound(cs: ConstantSet) -> dict:
    rep = check_ergodicity(cs)
    if not rep.ergodicity_pass:
        raise BoundUnavailableError("moment bounds need the ergodicity condition")
    return rep.moment_bounds


def gamma_max(cs: ConstantSet) -> float:
    """Largest admissible gamma, delta2 - ratio (may be <= 0)."""
    return cs.delta2 - _base_report(cs)["ratio"]


FORMS = ("general", "heat", "nse")


def mixing_time_bound(cs: ConstantSet, x_norm_H, eps, form="general") -> float:
    """Upper bound on the eps-mixing time in W2, clipped at 0.

    general: (2/gamma)[C2 |x|^(b+2)/(l0 d1 (b+2))
                       + log(|x| + (2(c1+c2)/(c0^a l0 d1 (b+2)))^(1/(a+b))) + log(1/eps)]
    heat:    (1/(nu c0^2))[log(|x| + |B|/(sqrt(2(1-lam) nu) c0)) + log(1/eps)]
             with nu = delta1/2 and lam = lambda3.
    nse:     (2/gamma)[|x|^2/(lam nu^2) + log(|x| + |B|^2/(sqrt(2 lam nu) c0)) + log(1/eps)]
             with nu = delta1/2 and lam = lambda0, as displayed for the 2D
             Navier-Stokes case.
    """
    if not eps > 0:
        raise ConfigError("eps must be positive")
    if form not in FORMS:
        raise ConfigError(f"unknown bound form {form!r}")
    x = float(x_norm_H)
    if form == "heat":
        rep = check_ergodicity(cs)
        if not rep.ergodicity_pass:
            raise BoundUnavailableError("heat bound needs |B|^2 <= lambda nu c0^2")
        nu = cs.delta1 / 2
        lam = cs.lambdas[3]
        val = (math.log(x + cs.hs_norm_H / (math.sqrt(2 * (1 - lam) * nu) * cs.c0))
               + math.log(1 / eps)) / (nu * cs.c0 ** 2)
        return max(0.0, val)
    rep = check_mixing(cs)
    if not rep.mixing_pass:
        raise BoundUnavailableError("mixing condition fails; no bound available")
    g = cs.gamma
    if form == "nse":
        nu = cs.delta1 / 2
        lam = cs.lambda0
        val = (2 / g) * (x ** 2 / (lam * nu ** 2)
                         + math.log(x + cs.hs_norm_H ** 2 / (math.sqrt(2 * lam * nu) * cs.c0))
                         + math.log(1 / eps))
        return max(0.0, val)
    a, b = cs.alpha, cs.beta
    mom = 2 * (rep.c1 + rep.c2) / (cs.c0 ** a * cs.lambda0 * cs.delta1 * (b + 2))
    inner = x + mom ** (1 / (a + b))
    if inner <= 0:
        return 0.0
    val = (2 / g) * (cs.C2 * x ** (b + 2) / (cs.lambda0 * cs.delta1 * (b + 2))
                     + math.log(inner) + math.log(1 / eps))
    return max(0.0, val)


def mixing_report(cs, x_norm_H, eps, form="general") -> HypothesisReport:
    rep = check_mixing(cs)
    tau = mixing_time_bound(cs, x_norm_H, eps, form) if rep.mixing_pass else None
    return replace(rep, mixing_time=tau)


# ---------------------------------------------------------------------------
# convexity of g(x, y) = |x|^a |y|^b


@dataclass(frozen=True)
class ConvexityResult:
    alpha: float
    beta: float
    n_samples: int
    n_violations: int
    worst_violation: float
    hessian_min_det: float
    hessian_min_entry: float
    witness: tuple | None

    @property
    def passed(self):
        return self.n_violations == 0


def _g(x, y, a, b):
    return np.abs(x) ** a * np.abs(y) ** b


def convexity_probe(alpha, beta, n_samples, seed=0, box=2.0, tol=REL_TOL) -> ConvexityResult:
    """Sampled midpoint-type convexity test plus Hessian minors.

    A violation is g(l p + (1-l) q) - (l g(p) + (1-l) g(q)) > tol * scale
    with scale = 1 + l g(p) + (1-l) g(q). Hessian minors are evaluated
    from the exact second derivatives at points with y != 0.
    """
    if not (alpha >= 2 and beta >= 0):
        raise ConfigError(f"convexity probe needs alpha >= 2 and beta >= 0, got ({alpha}, {beta})")
    rng = np.random.default_rng(seed)
    p = rng.uniform(-box, box, (n_samples, 2))
    q = rng.uniform(-box, box, (n_samples, 2))
    lam = rng.uniform(0, 1, n_samples)
    m = lam[:, None] * p + (1 - lam[:, None]) * q
    rhs = lam * _g(p[:, 0], p[:, 1], alpha, beta) + (1 - lam) * _g(q[:, 0], q[:, 1], alpha, beta)
    lhs = _g(m[:, 0], m[:, 1], alpha, beta)
    excess = (lhs - rhs) / (1 + rhs)
    bad = excess > tol
    worst = float(max(excess.max(), 0.0))
    witness = None
    if bad.any():
        i = int(np.argmax(excess))
        witness = (tuple(p[i]), tuple(q[i]), float(lam[i]))

    x, y = p[:, 0], p[:, 1]
    ok = y != 0
    x, y = x[ok], y[ok]
    ax, ay = np.abs(x), np.abs(y)
    gxx = alpha * (alpha - 1) * ax ** (alpha - 2) * ay ** beta
    gyy = beta * (beta - 1) * ax ** alpha * ay ** (beta - 2) if beta > 0 else np.zeros_like(x)
    gxy = alpha * beta * np.sign(x) * np.sign(y) * ax ** (alpha - 1) * ay ** (beta - 1) \
        if beta > 0 else np.zeros_like(x)
    det = gxx * gyy - gxy ** 2
    return ConvexityResult(alpha, beta, n_samples, int(bad.sum()), worst,
                           float(det.min()), float(min(gxx.min(), gyy.min())), witness)

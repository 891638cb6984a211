"""Drift operators A: V -> V* and their structural constants.

Every model exposes `apply(c)` on coefficient arrays of shape
(..., ncomp, n_modes) together with the diagonal rates nu*lambda_k of
its Laplacian part, which the semi-implicit integrator treats
implicitly. Nonlinear terms are evaluated pseudo-spectrally: quadratic
terms on a 3/2-padded grid, non-polynomial terms on a 2x grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import spectral as sp
from .errors import ConfigError, DivergedStateError, NotConfiguredError

QUAD_PAD = 1.5
NONPOLY_PAD = 2.0


@dataclass(frozen=True)
class ModelConstants:
    """Constants of the coercivity/monotonicity/growth/cone conditions.

    `growth_beta` is the H-norm exponent used in the growth audit; it
    may differ from `beta` (quadratic convection needs 2).
    """

    alpha: float
    beta: float
    delta1: float
    delta2: float | None
    C2: float | None
    K: float | None = None
    growth_beta: float = 0.0
    delta4: float | None = None
    C4: float | None = None
    notes: tuple = ()


@dataclass(frozen=True)
class AuditRecord:
    lhs: float
    rhs: float
    passed: bool
    equality: bool = False


def _check_finite(a, what):
    if not np.all(np.isfinite(a)):
        raise DivergedStateError(f"non-finite values in {what}")
    return a


def _scalar_grid_terms(domain, c, pad):
    """Grid values of u and its partial derivatives for scalar fields."""
    u = sp.synthesize(domain, c[..., 0, :], pad)
    grads = [sp.synthesize(domain, c[..., 0, :], pad, deriv=a) for a in range(domain.dim)]
    return u, grads


def convection(domain, c):
    """-P[(u.grad)u] for 2-component coefficient arrays on torus_2.

    Computed through the vorticity: curl (u.grad)u = u.grad w for
    solenoidal u, and the solenoidal field with curl q is
    (-d1 psi, d0 psi) with lap psi = q. Truncation commutes with curl,
    so this equals the dealiased velocity form up to rounding.
    """
    pad = QUAD_PAD
    d0 = sp.deriv_coeffs
    w = d0(domain, c[..., 1, :], 0) - d0(domain, c[..., 0, :], 1)
    u0 = sp.synthesize(domain, c[..., 0, :], pad)
    u1 = sp.synthesize(domain, c[..., 1, :], pad)
    w0 = sp.synthesize(domain, w, pad, deriv=0)
    w1 = sp.synthesize(domain, w, pad, deriv=1)
    q = sp.analyze(domain, u0 * w0 + u1 * w1, pad)
    psi = -q / domain.eigenvalues
    out = np.empty_like(c)
    out[..., 0, :] = d0(domain, psi, 1)
    out[..., 1, :] = -d0(domain, psi, 0)
    return out


class DriftModel:
    """Common interface. Subclasses are frozen dataclasses."""

    variant = "abstract"
    ncomp = 1

    def apply(self, c):
        raise NotImplementedError

    @cached_property
    def linear_rates(self):
        return self.nu * self.domain.eigenvalues

    def nonlinear(self, c):
        """A(u) minus its implicit Laplacian part."""
        return self.apply(c) + self.linear_rates * c

    def rho(self, c):
        return np.zeros(np.shape(c)[:-2])

    def eta(self, c):
        return np.zeros(np.shape(c)[:-2])

    @property
    def constants(self) -> ModelConstants:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


def _cone_defaults(delta4, C4):
    if (delta4 is None) != (C4 is None):
        raise ConfigError("cone constants delta4 and C4 must be given together")
    return delta4, C4


@dataclass(frozen=True, eq=False)
class Heat(DriftModel):
    domain: sp.DomainSpec
    nu: float
    delta4: float | None = 1.0
    C4: float | None = None

    variant = "heat"

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError("heat: nu must be positive")

    def apply(self, c):
        return -self.linear_rates * c

    def nonlinear(self, c):
        return np.zeros_like(c)

    @cached_property
    def constants(self):
        nu, c0 = self.nu, self.domain.c0
        d4, C4 = self.delta4, self.C4
        if d4 is not None and C4 is None:
            # sup_v (d4*nu*v - 2*nu*v^2) over v = ||u||_V
            C4 = nu * d4 * d4 / 8.0
        return ModelConstants(2.0, 0.0, 2 * nu, 2 * nu * c0 ** 2, 0.0, K=nu ** 2,
                              delta4=d4, C4=C4)

    def describe(self):
        return {"variant": self.variant, "nu": self.nu}


@dataclass(frozen=True, eq=False)
class Semilinear(DriftModel):
    """nu Lap u + f(u).grad u + g(u) with Dirichlet or periodic boundary.

    f: "burgers" (f(x) = x, d = 1) or "tanh" (each f_i(x) = f_amp tanh(x/f_scale)).
    g: "zero", "linear" (g = g_amp x) or "sine" (g = g_amp sin x).
    """

    domain: sp.DomainSpec
    nu: float
    f: str = "burgers"
    f_amp: float = 0.0
    f_scale: float = 1.0
    g: str = "zero"
    g_amp: float = 0.0
    eps: float | None = None
    C2_override: float | None = None
    delta4: float | None = None
    C4: float | None = None

    variant = "semilinear"

    def __post_init__(self):
        errs = []
        if not self.nu > 0:
            errs.append("semilinear: nu must be positive")
        if self.f not in ("burgers", "tanh"):
            errs.append(f"semilinear: unknown f {self.f!r}")
        if self.f == "burgers" and self.domain.dim != 1:
            errs.append("semilinear: burgers nonlinearity needs a 1D domain")
        if self.f == "tanh" and not self.f_scale > 0:
            errs.append("semilinear: f_scale must be positive")
        if self.g not in ("zero", "linear", "sine"):
            errs.append(f"semilinear: unknown g {self.g!r}")
        if errs:
            raise ConfigError(errs)
        gap = self.gap
        if gap <= 0:
            raise ConfigError(f"semilinear: no admissible eps, monotonicity gap {gap:.6g} <= 0")
        if self.eps is not None and not 0 < self.eps < gap:
            raise ConfigError(f"semilinear: eps must lie in (0, {gap:.6g})")
        _cone_defaults(self.delta4, self.C4)

    # constants of the pointwise conditions on f and g
    @property
    def f_sup(self):
        return 0.0 if self.f == "burgers" else abs(self.f_amp)

    @property
    def f_lip(self):
        return 1.0 if self.f == "burgers" else abs(self.f_amp) / self.f_scale

    @property
    def g_c(self):
        """One-sided Lipschitz constant c (with s = 0)."""
        if self.g == "linear":
            return max(self.g_amp, 0.0)
        if self.g == "sine":
            return abs(self.g_amp)
        return 0.0

    @property
    def g_k(self):
        """k in g(x) x <= K + k x^2 (K = 0 for all supported g)."""
        return self.g_c if self.g == "linear" else abs(self.g_amp) if self.g == "sine" else 0.0

    @property
    def gap(self):
        c0 = self.domain.c0
        gap = 2 * self.nu * c0 ** 2 - 2 * self.g_c
        if self.f != "burgers":
            gap -= 4 * c0 * self.f_sup
        return gap

    def pointwise_conditions(self) -> dict:
        c0, nu = self.domain.c0, self.nu
        out = {"g_onesided_c_lt_nu_c0sq": self.g_c < nu * c0 ** 2,
               "angle_condition": self.f_sup / (nu * c0) + self.g_k / (nu * c0 ** 2) < 2}
        if self.domain.dim == 2:
            out["two_dim_condition"] = (self.g_c / (2 * nu * c0 ** 2) + self.f_sup / (nu * c0)) < 0.5
        return out

    @cached_property
    def constants(self):
        c0, nu = self.domain.c0, self.nu
        eps = 0.5 * self.gap if self.eps is None else self.eps
        delta2 = self.gap - eps
        theta = eps / c0 ** 2
        if self.f == "burgers":
            C2 = 1.0 / theta
        else:
            C2 = 4 * self.f_lip ** 2 / theta
        if self.C2_override is not None:
            C2 = self.C2_override
        delta1 = 2 * nu - 2 * self.g_k / c0 ** 2
        if self.f != "burgers":
            delta1 -= 2 * self.f_sup / c0
        lin = nu + self.f_sup / c0 + abs(self.g_amp) / c0 ** 2
        if self.f == "burgers":
            K, gb = max(2 * lin ** 2, 2.0), 2.0
        else:
            K, gb = lin ** 2, 0.0
        return ModelConstants(2.0, 0.0, delta1, delta2, C2, K=K, growth_beta=gb,
                              delta4=self.delta4, C4=self.C4,
                              notes=(f"eps={eps!r}",))

    def rho(self, c):
        return self.constants.C2 * sp.v_norm(c, self.domain) ** 2

    def nonlinear(self, c):
        d = self.domain
        out = np.zeros_like(c)
        if self.f == "burgers":
            u, (ux,) = _scalar_grid_terms(d, c, QUAD_PAD)
            out[..., 0, :] += sp.analyze(d, u * ux, QUAD_PAD)
        if self.f == "tanh" or self.g == "sine":
            u, grads = _scalar_grid_terms(d, c, NONPOLY_PAD)
            acc = np.zeros_like(u)
            if self.f == "tanh":
                fu = self.f_amp * np.tanh(u / self.f_scale)
                for g in grads:
                    acc += fu * g
            if self.g == "sine":
                acc += self.g_amp * np.sin(u)
            out[..., 0, :] += sp.analyze(d, acc, NONPOLY_PAD)
        if self.g == "linear":
            out += self.g_amp * c
        return _check_finite(out, "semilinear drift")

    def apply(self, c):
        return self.nonlinear(c) - self.linear_rates * c

    def describe(self):
        return {"variant": self.variant, "nu": self.nu, "f": self.f, "f_amp": self.f_amp,
                "f_scale": self.f_scale, "g": self.g, "g_amp": self.g_amp,
                "eps": self.constants.notes[0]}


def _require_torus2(domain, name):
    if domain is None or domain.geometry != "torus_2":
        got = None if domain is None else domain.geometry
        raise ConfigError(f"{name}: model requires torus_2, got {got}")


@dataclass(frozen=True, eq=False)
class NavierStokes2D(DriftModel):
    domain: sp.DomainSpec
    nu: float
    delta4: float | None = None
    C4: float | None = None

    variant = "navier_stokes_2d"
    ncomp = 2

    def __post_init__(self):
        _require_torus2(self.domain, "navier_stokes_2d")
        if not self.nu > 0:
            raise ConfigError("navier_stokes_2d: nu must be positive")
        _cone_defaults(self.delta4, self.C4)

    def nonlinear(self, c):
        return _check_finite(convection(self.domain, c), "convection")

    def apply(self, c):
        return self.nonlinear(c) - self.linear_rates * c

    def rho(self, c):
        return (4.0 / self.nu) * sp.v_norm(c, self.domain) ** 2

    @cached_property
    def constants(self):
        nu, c0 = self.nu, self.domain.c0
        # ||A u||_{V*} <= nu ||u||_V + ||u||_{L4}^2 <= nu ||u||_V + 2 ||u||_H ||u||_V
        return ModelConstants(2.0, 0.0, 2 * nu, nu * c0 ** 2, 4.0 / nu,
                              K=max(2 * nu ** 2, 8.0), growth_beta=2.0,
                              delta4=self.delta4, C4=self.C4)

    def describe(self):
        return {"variant": self.variant, "nu": self.nu}


def powerlaw_delta1(nu, p, d=2):
    """Coercivity constant on the d-torus of period 2*pi with the H^1 seminorm.

    2<A0 u, u> = -4 nu int (1+|e|)^(p-2) |e|^2 <= -4 nu int |e|^p, and by
    Jensen int |e|^p >= |T^d|^(1-p/2) (int |e|^2)^(p/2) with
    int |e|^2 = ||grad u||^2 / 2 for solenoidal periodic u.
    """
    area = (2 * math.pi) ** d
    return 4 * nu * area ** (1 - p / 2) * 2 ** (-p / 2)


@dataclass(frozen=True, eq=False)
class PowerLawFluid(DriftModel):
    """P div tau(u) - P[(u.grad)u], tau = 2 nu (1+|e|)^(p-2) e.

    d = 3 is accepted for constants only (domain=None).
    """

    domain: sp.DomainSpec | None
    nu: float
    p: float = 2.0
    d: int = 2
    ergodicity: bool = True
    delta1_override: float | None = None
    delta4: float | None = None
    C4: float | None = None

    variant = "power_law"
    ncomp = 2

    def __post_init__(self):
        errs = []
        if not self.nu > 0:
            errs.append("power_law: nu must be positive")
        if self.d not in (2, 3):
            errs.append("power_law: d must be 2 or 3")
        if self.p < 2:
            errs.append("power_law: p must be >= 2")
        if self.ergodicity and abs(self.p - (1 + self.d / 2)) > 1e-12:
            errs.append(f"power_law: ergodicity checks need p = 1 + d/2 = {1 + self.d / 2}")
        if errs:
            raise ConfigError(errs)
        if self.d == 2:
            _require_torus2(self.domain, "power_law")
        _cone_defaults(self.delta4, self.C4)

    def stress_divergence(self, c):
        """P div tau(u) on the 2x grid."""
        d, pad = self.domain, NONPOLY_PAD
        grads = [[sp.synthesize(d, c[..., i, :], pad, deriv=j) for j in range(2)]
                 for i in range(2)]
        e = [[0.5 * (grads[i][j] + grads[j][i]) for j in range(2)] for i in range(2)]
        mag = np.sqrt(e[0][0] ** 2 + 2 * e[0][1] ** 2 + e[1][1] ** 2)
        fac = 2 * self.nu * (1.0 + mag) ** (self.p - 2)
        out = np.empty_like(c)
        for i in range(2):
            acc = 0.0
            for j in range(2):
                tij = sp.analyze(d, fac * e[i][j], pad)
                acc = acc + sp.deriv_coeffs(d, tij, j)
            out[..., i, :] = acc
        return sp.leray_coeffs(d, out)

    def nonlinear(self, c):
        if self.domain is None:
            raise ConfigError("power_law with d=3 is available to the checker only")
        out = (self.stress_divergence(c) + self.linear_rates * c
               + convection(self.domain, c))
        return _check_finite(out, "power-law drift")

    def apply(self, c):
        return self.nonlinear(c) - self.linear_rates * c

    def rho(self, c):
        return (4.0 / self.nu) * sp.v_norm(c, self.domain) ** 2

    @cached_property
    def constants(self):
        nu, p = self.nu, self.p
        c0 = 1.0 if self.domain is None else self.domain.c0
        d1 = powerlaw_delta1(nu, p, self.d) if self.delta1_override is None else self.delta1_override
        if p == 2.0:
            return ModelConstants(2.0, 0.0, d1, nu * c0 ** 2, 4.0 / nu,
                                  K=max(2 * nu ** 2, 8.0), growth_beta=2.0,
                                  delta4=self.delta4, C4=self.C4)
        # the stress is strongly monotone with modulus 2 nu for p >= 2, so
        # the difference inequality of the p = 2 case carries over; the
        # correction rho(v) = (4/nu)||v||_V^2 is not of the form C2 ||v||_V^p.
        return ModelConstants(float(p), 0.0, d1, nu * c0 ** 2, None,
                              delta4=self.delta4, C4=self.C4,
                              notes=("C2 unavailable for p != 2",))

    def describe(self):
        return {"variant": self.variant, "nu": self.nu, "p": self.p, "d": self.d}


# ---------------------------------------------------------------------------
# field-level operations and audits

AUDIT_TOL = 1e-8


def _as_field(m, u):
    if u.domain is not m.domain:
        raise ConfigError("field and model live on different domains")
    if u.ncomp != m.ncomp:
        raise ConfigError(f"{m.variant} expects {m.ncomp} component(s), got {u.ncomp}")
    return u.coeffs


def apply_drift(m: DriftModel, u: sp.SpectralField) -> sp.SpectralField:
    return u.with_coeffs(m.apply(_as_field(m, u)))


def pairing(m: DriftModel, u: sp.SpectralField, v: sp.SpectralField) -> float:
    return float(sp.inner(m.apply(_as_field(m, u)), v.coeffs))


def audit_coercivity(m, u, tol=AUDIT_TOL) -> AuditRecord:
    k = m.constants
    lhs = 2 * pairing(m, u, u)
    rhs = -k.delta1 * float(sp.v_norm(u)) ** k.alpha
    return AuditRecord(lhs, rhs, lhs <= rhs + tol * (1 + abs(rhs)),
                       equality=abs(lhs - rhs) <= tol * (1 + abs(rhs)))


def audit_monotonicity(m, u, v, tol=AUDIT_TOL) -> AuditRecord:
    k = m.constants
    w = u - v
    lhs = 2 * float(sp.inner(m.apply(u.coeffs) - m.apply(v.coeffs), w.coeffs))
    fac = -k.delta2 + float(m.rho(v.coeffs)) + float(m.eta(u.coeffs))
    rhs = fac * float(sp.h_norm(w)) ** 2
    return AuditRecord(lhs, rhs, lhs <= rhs + tol * (1 + abs(rhs)),
                       equality=abs(lhs - rhs) <= tol * (1 + abs(rhs)))


def audit_cone(m, u, tol=AUDIT_TOL) -> AuditRecord:
    k = m.constants
    if k.delta4 is None or k.C4 is None:
        raise NotConfiguredError(f"{m.variant}: cone constants (delta4, C4) not configured")
    Au = apply_drift(m, u)
    lhs = 2 * float(sp.inner(Au, u))
    rhs = k.C4 - k.delta4 * float(sp.vstar_norm(Au))
    return AuditRecord(lhs, rhs, lhs <= rhs + tol * (1 + abs(rhs)),
                       equality=abs(lhs - rhs) <= tol * (1 + abs(rhs)))


def audit_growth(m, u, tol=AUDIT_TOL) -> AuditRecord:
    k = m.constants
    if k.K is None:
        raise NotConfiguredError(f"{m.variant}: growth constant K not available")
    a = k.alpha
    lhs = float(sp.vstar_norm(apply_drift(m, u))) ** (a / (a - 1))
    rhs = k.K * (1 + float(sp.v_norm(u)) ** a) * (1 + float(sp.h_norm(u)) ** k.growth_beta)
    return AuditRecord(lhs, rhs, lhs <= rhs * (1 + tol))


# ---------------------------------------------------------------------------
# calibration sweeps for constants without closed forms


def calibrate_delta1(m, fields):
    """Largest delta1 consistent with coercivity on the sampled fields."""
    a = m.constants.alpha
    vals = [-2 * pairing(m, u, u) / float(sp.v_norm(u)) ** a for u in fields]
    return float(min(vals))


def calibrate_cone(m, fields, C4):
    """Largest delta4 such that 2<Au,u> <= C4 - delta4 ||Au||_{V*} on samples."""
    best = math.inf
    for u in fields:
        Au = apply_drift(m, u)
        nrm = float(sp.vstar_norm(Au))
        if nrm > 0:
            best = min(best, (C4 - 2 * float(sp.inner(Au, u))) / nrm)
    return best


def calibrate_C2(m, pairs, delta2=None):
    """Smallest C2 with lhs <= (-delta2 + C2 ||v||_V^2)||u-v||^2 on samples."""
    delta2 = m.constants.delta2 if delta2 is None else delta2
    worst = 0.0
    for u, v in pairs:
        w = u - v
        lhs = 2 * float(sp.inner(m.apply(u.coeffs) - m.apply(v.coeffs), w.coeffs))
        h2 = float(sp.h_norm(w)) ** 2
        vv = float(sp.v_norm(v)) ** 2
        if vv > 0:
            worst = max(worst, (lhs / h2 + delta2) / vv)
    return worst

"""Spectral bases, norms, grid transforms and the Leray projection.

Two families of orthonormal bases of H = L^2 are supported.

* Dirichlet boxes (interval, rectangle): products of sines
  e_k(x) = sqrt(2/L) sin(k pi x / L), eigenvalue (k pi / L)^2 per axis.
* Mean-zero tori of period 2*pi (d = 1, 2): real pairs
  sqrt(2) cos(k.x) / (2 pi)^(d/2) and sqrt(2) sin(k.x) / (2 pi)^(d/2)
  over a half-space of wavevectors, eigenvalue |k|^2.

Modes are ordered lexicographically by (wavevector, kind). Coefficient
arrays have shape (..., ncomp, n_modes); leading axes are batch axes.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError, UnsupportedOperationError

BASIS_TAG = "ergomix-basis-v1:lexicographic(wavevector,kind)"

GEOMETRIES = ("interval", "rectangle", "torus_1", "torus_2")
BOUNDARIES = ("dirichlet", "periodic_mean_zero")


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """Geometry plus truncated eigenbasis of the (negative) Laplacian.

    `eigenvalues` follows the mode ordering; `spectrum` is the same
    multiset sorted ascending.
    """

    geometry: str
    boundary: str
    N: int
    lengths: tuple
    waves: np.ndarray
    kinds: np.ndarray
    eigenvalues: np.ndarray
    c0: float

    @property
    def dim(self) -> int:
        return self.waves.shape[1]

    @property
    def n_modes(self) -> int:
        return self.waves.shape[0]

    @property
    def is_torus(self) -> bool:
        return self.geometry.startswith("torus")

    @property
    def spectrum(self) -> np.ndarray:
        return np.sort(self.eigenvalues)

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry,
            "boundary": self.boundary,
            "N": self.N,
            "lengths": list(self.lengths),
            "n_modes": self.n_modes,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "c0": self.c0,
            "basis_ordering": BASIS_TAG,
        }


def build_domain(geometry: str, boundary: str, N: int, lengths=None) -> DomainSpec:
    """Build a domain and its closed-form Laplacian eigenvalues."""
    problems = []
    if geometry not in GEOMETRIES:
        problems.append(f"unsupported geometry {geometry!r}")
    if boundary not in BOUNDARIES:
        problems.append(f"unsupported boundary {boundary!r}")
    if not isinstance(N, (int, np.integer)) or N < 1:
        problems.append(f"truncation N must be a positive integer, got {N!r}")
    if problems:
        raise ConfigError(problems)
    N = int(N)

    if geometry.startswith("torus"):
        if boundary != "periodic_mean_zero":
            raise ConfigError(f"{geometry} requires boundary 'periodic_mean_zero', got {boundary!r}")
        if lengths is not None and any(abs(v - 2 * math.pi) > 1e-12 for v in lengths):
            raise ConfigError("torus period is fixed to 2*pi")
        d = int(geometry[-1])
        lengths = (2 * math.pi,) * d
        if d == 1:
            wv = [(k,) for k in range(1, N + 1)]
        else:
            wv = [(k1, k2) for k1 in range(-N, N + 1) for k2 in range(0, N + 1)
                  if k2 > 0 or k1 > 0]
            wv.sort()
        waves = np.repeat(np.array(wv, dtype=np.int64), 2, axis=0)
        kinds = np.tile(np.array([0, 1], dtype=np.int64), len(wv))
        eig = np.sum(waves.astype(float) ** 2, axis=1)
    else:
        if boundary != "dirichlet":
            raise ConfigError(f"{geometry} requires boundary 'dirichlet', got {boundary!r}")
        d = 1 if geometry == "interval" else 2
        if lengths is None:
            lengths = (1.0,) * d
        lengths = tuple(float(v) for v in lengths)
        if len(lengths) != d:
            raise ConfigError(f"{geometry} needs {d} length(s), got {len(lengths)}")
        if any(not v > 0 for v in lengths):
            raise ConfigError("box lengths must be positive")
        ks = np.arange(1, N + 1)
        if d == 1:
            waves = ks[:, None]
        else:
            m, n = np.meshgrid(ks, ks, indexing="ij")
            waves = np.stack([m.ravel(), n.ravel()], axis=1)
        kinds = np.zeros(len(waves), dtype=np.int64)
        eig = np.sum((waves * np.pi / np.array(lengths)) ** 2, axis=1)

    eig = np.asarray(eig, dtype=float)
    waves.setflags(write=False)
    kinds.setflags(write=False)
    eig.setflags(write=False)
    return DomainSpec(geometry, boundary, N, tuple(lengths), waves, kinds, eig,
                      float(np.sqrt(eig.min())))


# ---------------------------------------------------------------------------
# fields and norms


@dataclass(frozen=True, eq=False)
class SpectralField:
    domain: DomainSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim < 2 or c.shape[-1] != self.domain.n_modes:
            raise ValueError(f"coefficient shape {c.shape} does not match "
                             f"(..., ncomp, {self.domain.n_modes})")
        object.__setattr__(self, "coeffs", c)

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[-2]

    @classmethod
    def zeros(cls, domain, ncomp=1):
        return cls(domain, np.zeros((ncomp, domain.n_modes)))

    @classmethod
    def mode(cls, domain, index, amplitude=1.0, ncomp=1, component=0):
        """Field with a single nonzero coefficient (0-based mode index)."""
        c = np.zeros((ncomp, domain.n_modes))
        c[component, index] = amplitude
        return cls(domain, c)

    def with_coeffs(self, coeffs):
        return SpectralField(self.domain, coeffs)

    def __add__(self, other):
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, a):
        return self.with_coeffs(a * self.coeffs)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class GridField:
    domain: DomainSpec
    values: np.ndarray
    pad: float


def _coeffs(f):
    return f.coeffs if isinstance(f, SpectralField) else np.asarray(f)


def h_norm(f):
    c = _coeffs(f)
    return np.sqrt(np.sum(c * c, axis=(-2, -1)))


def v_norm(f, domain=None):
    domain = f.domain if domain is None else domain
    c = _coeffs(f)
    return np.sqrt(np.sum(domain.eigenvalues * c * c, axis=(-2, -1)))


def vstar_norm(f, domain=None):
    """Dual norm through the discrete Riesz map: sum c_k^2 / lambda_k."""
    domain = f.domain if domain is None else domain
    c = _coeffs(f)
    return np.sqrt(np.sum(c * c / domain.eigenvalues, axis=(-2, -1)))


def inner(f, g):
    return np.sum(_coeffs(f) * _coeffs(g), axis=(-2, -1))


def random_field(domain, rng, ncomp=1, decay=1.0, scale=1.0, solenoidal=False):
    """Gaussian random coefficients with variance ~ lambda_k^(-decay)."""
    c = rng.standard_normal((ncomp, domain.n_modes)) * domain.eigenvalues ** (-0.5 * decay)
    c *= scale
    f = SpectralField(domain, c)
    if solenoidal:
        f = leray_project(f)
    return f


# ---------------------------------------------------------------------------
# Leray projection


def _require_torus2(f):
    if f.domain.geometry != "torus_2" or f.ncomp != 2:
        raise UnsupportedOperationError(
            "operation needs a 2-component field on torus_2, got "
            f"{f.ncomp} component(s) on {f.domain.geometry}")


def leray_coeffs(domain, c):
    """Apply I - k k^T/|k|^2 per mode to an array (..., 2, n_modes)."""
    k = domain.waves.astype(float)
    ksq = domain.eigenvalues
    dot = (c[..., 0, :] * k[:, 0] + c[..., 1, :] * k[:, 1]) / ksq
    out = np.empty_like(c)
    out[..., 0, :] = c[..., 0, :] - dot * k[:, 0]
    out[..., 1, :] = c[..., 1, :] - dot * k[:, 1]
    return out


def leray_project(f: SpectralField) -> SpectralField:
    _require_torus2(f)
    return f.with_coeffs(leray_coeffs(f.domain, f.coeffs))


def divergence_coeffs(f: SpectralField) -> np.ndarray:
    """Coefficients of div f in the scalar torus basis."""
    _require_torus2(f)
    c = f.coeffs
    return deriv_coeffs(f.domain, c[..., 0, :], 0) + deriv_coeffs(f.domain, c[..., 1, :], 1)


# ---------------------------------------------------------------------------
# grid transforms


def deriv_coeffs(domain, c, axis):
    """Torus only: coefficients of d/dx_axis (the basis is closed under it)."""
    if not domain.is_torus:
        raise UnsupportedOperationError("sine series are not closed under differentiation")
    k = domain.waves[0::2, axis].astype(float)
    a = c[..., 0::2]
    b = c[..., 1::2]
    out = np.empty_like(c)
    out[..., 0::2] = k * b
    out[..., 1::2] = -k * a
    return out


@dataclass(frozen=True)
class _BoxPlan:
    shape: tuple
    synth: tuple
    deriv: tuple
    anal: tuple
    weight: float


@dataclass(frozen=True)
class _TorusPlan:
    shape: tuple
    M: int
    idx: tuple
    conj_idx: np.ndarray
    zero_col: np.ndarray
    scale: float
    weight: float


def grid_size(domain, pad):
    """Points per axis for padding factor `pad` (>= 1)."""
    if pad < 1:
        raise ValueError("padding factor must be >= 1")
    if domain.is_torus:
        return sfft.next_fast_len(int(math.ceil(2 * pad * domain.N - 1e-9)) + 1)
    return int(math.ceil(pad * (domain.N + 1) - 1e-9)) - 1


@functools.lru_cache(maxsize=64)
def _plan(domain, pad):
    M = grid_size(domain, pad)
    if not domain.is_torus:
        synth, deriv, anal = [], [], []
        ks = np.arange(1, domain.N + 1)
        j = np.arange(1, M + 1)
        weight = 1.0
        for L in domain.lengths:
            arg = np.pi * np.outer(j, ks) / (M + 1)
            S = np.sqrt(2.0 / L) * np.sin(arg)
            D = np.sqrt(2.0 / L) * (ks * np.pi / L) * np.cos(arg)
            h = L / (M + 1)
            synth.append(S)
            deriv.append(D)
            anal.append(np.ascontiguousarray(h * S.T))
            weight *= h
        return _BoxPlan((M,) * domain.dim, tuple(synth), tuple(deriv), tuple(anal), weight)

    d = domain.dim
    w = domain.waves[0::2]
    if d == 1:
        idx = (w[:, 0],)
        conj_idx = np.zeros(0, dtype=np.int64)
        zero_col = np.zeros(0, dtype=np.int64)
    else:
        idx = (w[:, 0] % M, w[:, 1])
        zero_col = np.nonzero(w[:, 1] == 0)[0]
        conj_idx = (-w[zero_col, 0]) % M
    return _TorusPlan((M,) * d, M, idx, conj_idx, zero_col,
                      float(M ** d) / (math.sqrt(2.0) * (2 * math.pi) ** (d / 2)),
                      (2 * math.pi / M) ** d)


def grid_points(domain, pad=1.0):
    """Coordinates of the collocation grid, one array per axis (ij indexing)."""
    M = grid_size(domain, pad)
    if domain.is_torus:
        axes = [2 * np.pi * np.arange(M) / M] * domain.dim
    else:
        axes = [L * np.arange(1, M + 1) / (M + 1) for L in domain.lengths]
    return np.meshgrid(*axes, indexing="ij")


def quad_weight(domain, pad=1.0):
    return _plan(domain, pad).weight


def synthesize(domain, c, pad=1.0, deriv=None):
    """Grid values of the field (or of its derivative along axis `deriv`).

    c has shape (..., n_modes); the result has shape (..., *grid).
    """
    plan = _plan(domain, pad)
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != domain.n_modes:
        raise ValueError(f"shape mismatch: {c.shape[-1]} modes, domain has {domain.n_modes}")
    if isinstance(plan, _BoxPlan):
        mats = [plan.deriv[a] if deriv == a else plan.synth[a] for a in range(domain.dim)]
        if domain.dim == 1:
            return c @ mats[0].T
        N = domain.N
        C = c.reshape(c.shape[:-1] + (N, N))
        return mats[0] @ C @ mats[1].T

    if deriv is not None:
        c = deriv_coeffs(domain, c, deriv)
    M = plan.M
    lead = c.shape[:-1]
    uh = (c[..., 0::2] - 1j * c[..., 1::2]) * plan.scale
    if domain.dim == 1:
        U = np.zeros(lead + (M // 2 + 1,), dtype=complex)
        U[..., plan.idx[0]] = uh
        return sfft.irfft(U, n=M, axis=-1)
    U = np.zeros(lead + (M, M // 2 + 1), dtype=complex)
    U[..., plan.idx[0], plan.idx[1]] = uh
    U[..., plan.conj_idx, 0] = np.conj(uh[..., plan.zero_col])
    return sfft.irfft2(U, s=(M, M), axes=(-2, -1))


def analyze(domain, values, pad=1.0):
    """Project grid values onto the retained modes (dealiasing truncation)."""
    plan = _plan(domain, pad)
    values = np.asarray(values, dtype=float)
    d = domain.dim
    if values.shape[values.ndim - d:] != plan.shape:
        raise ValueError(f"shape mismatch: grid {values.shape[values.ndim - d:]}, "
                         f"expected {plan.shape}")
    if isinstance(plan, _BoxPlan):
        if d == 1:
            return values @ plan.anal[0].T
        C = plan.anal[0] @ values @ plan.anal[1].T
        return C.reshape(C.shape[:-2] + (domain.n_modes,))

    if d == 1:
        F = sfft.rfft(values, axis=-1)
        uh = F[..., plan.idx[0]]
    else:
        F = sfft.rfft2(values, axes=(-2, -1))
        uh = F[..., plan.idx[0], plan.idx[1]]
    uh = uh / plan.scale
    out = np.empty(uh.shape[:-1] + (domain.n_modes,))
    out[..., 0::2] = uh.real
    out[..., 1::2] = -uh.imag
    return out


def quadrature(domain, values, pad=1.0):
    """Integral over the domain of grid values (sums the trailing grid axes)."""
    d = domain.dim
    return quad_weight(domain, pad) * np.sum(values, axis=tuple(range(-d, 0)))


def to_grid(f: SpectralField, pad=1.5) -> GridField:
    return GridField(f.domain, synthesize(f.domain, f.coeffs, pad), pad)


def from_grid(g: GridField) -> SpectralField:
    c = analyze(g.domain, g.values, g.pad)
    if c.ndim == 1:
        c = c[None, :]
    return SpectralField(g.domain, c)


def lp_norm(f: SpectralField, p, pad=2.0):
    """Grid-quadrature L^p norm of |f| (Euclidean norm over components)."""
    u = synthesize(f.domain, f.coeffs, pad)
    mag2 = np.sum(u * u, axis=-f.domain.dim - 1)
    return quadrature(f.domain, mag2 ** (p / 2), pad) ** (1.0 / p)


def grad_l2_norm(f: SpectralField, pad=2.0):
    """Grid-quadrature L^2 norm of the full gradient.

    On boxes the derivative of a sine series does not vanish at the
    boundary, so a closed trapezoid grid (endpoints included) is used.
    """
    domain = f.domain
    if domain.is_torus:
        tot = 0.0
        for a in range(domain.dim):
            g = synthesize(domain, f.coeffs, pad, deriv=a)
            tot = tot + quadrature(domain, np.sum(g * g, axis=-domain.dim - 1), pad)
        return np.sqrt(tot)
    M = grid_size(domain, pad)
    ks = np.arange(1, domain.N + 1)
    j = np.arange(0, M + 2)
    S, D, W = [], [], []
    for L in domain.lengths:
        arg = np.pi * np.outer(j, ks) / (M + 1)
        S.append(np.sqrt(2.0 / L) * np.sin(arg))
        D.append(np.sqrt(2.0 / L) * (ks * np.pi / L) * np.cos(arg))
        w = np.full(M + 2, L / (M + 1))
        w[[0, -1]] *= 0.5
        W.append(w)
    c = f.coeffs
    if domain.dim == 1:
        g = c @ D[0].T
        return np.sqrt(np.sum(g * g * W[0], axis=(-2, -1)))
    C = c.reshape(c.shape[:-1] + (domain.N, domain.N))
    w2 = np.outer(W[0], W[1])
    gx = D[0] @ C @ S[1].T
    gy = S[0] @ C @ D[1].T
    return np.sqrt(np.sum((gx * gx + gy * gy) * w2, axis=(-3, -2, -1)))

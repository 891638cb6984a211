"""Degenerate additive noise and counter-based Wiener increments.

B is diagonal in an orthonormal basis {phi_j} of H: each phi_j lives on a
single mode and carries a unit vector of component weights (for
solenoidal vector fields the direction k_perp/|k|). An increment is
B dW = sum_j sigma_j sqrt(dt) xi_j phi_j.

Gaussians come from Philox keyed by (seed, trajectory). Step n of a
stream owns the counter block range [n*b, (n+1)*b) with b = ceil(n_active/4),
so any (seed, stream, step) draw is addressable without replaying the
stream. The antithetic role returns the negated primary draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from . import spectral as sp
from .errors import ConfigError

ROLES = ("primary", "antithetic")


@dataclass(frozen=True, eq=False)
class NoiseOperator:
    domain: sp.DomainSpec
    ncomp: int
    modes: np.ndarray  # 0-based mode indices, shape (n_active,)
    sigmas: np.ndarray  # shape (n_active,)
    directions: np.ndarray  # unit component weights, shape (n_active, ncomp)

    @property
    def n_active(self) -> int:
        return len(self.modes)

    @property
    def hs_norm_H(self) -> float:
        return float(np.sqrt(np.sum(self.sigmas ** 2)))

    @property
    def hs_norm_V(self) -> float:
        lam = self.domain.eigenvalues[self.modes]
        return float(np.sqrt(np.sum(lam * self.sigmas ** 2)))

    @property
    def op_norm(self) -> float:
        return float(self.sigmas.max()) if self.n_active else 0.0

    @property
    def is_zero(self) -> bool:
        return self.n_active == 0 or not np.any(self.sigmas > 0)

    def embed(self, amplitudes):
        """Coefficient array (..., ncomp, n_modes) of sum_j a_j phi_j."""
        a = np.asarray(amplitudes, dtype=float)
        out = np.zeros(a.shape[:-1] + (self.ncomp, self.domain.n_modes))
        for comp in range(self.ncomp):
            w = self.directions[:, comp]
            out[..., comp, self.modes] += a * w
        return out

    def to_dict(self):
        return {"ncomp": self.ncomp,
                "modes": [int(m) + 1 for m in self.modes],
                "sigmas": [float(s) for s in self.sigmas],
                "hs_norm_H": self.hs_norm_H, "hs_norm_V": self.hs_norm_V,
                "op_norm": self.op_norm}


def _directions(domain, modes, ncomp, solenoidal):
    if ncomp == 1:
        return np.ones((len(modes), 1))
    if solenoidal:
        if domain.geometry != "torus_2" or ncomp != 2:
            raise ConfigError("solenoidal noise needs a 2-component field on torus_2")
        k = domain.waves[modes].astype(float)
        perp = np.stack([-k[:, 1], k[:, 0]], axis=1)
        return perp / np.linalg.norm(perp, axis=1, keepdims=True)
    raise ConfigError("vector noise must be solenoidal")


def build_noise(domain, modes=None, profile=None, ncomp=1, solenoidal=None, **params):
    """Noise from explicit (mode, sigma) pairs or a named profile.

    Mode numbers are 1-based positions in the domain's mode ordering.
    Profiles: single_mode(mode, amplitude), powerlaw_decay(q, amplitude,
    n_modes) with sigma_j = amplitude (lambda_j/lambda_1)^(-q/2), and
    flat(n_modes, amplitude). Profiles fill modes in ascending-eigenvalue
    order (ties by mode index).
    """
    if solenoidal is None:
        solenoidal = ncomp > 1
    pairs = []
    if modes is not None and profile is not None:
        raise ConfigError("give either explicit modes or a profile, not both")
    if modes is not None:
        pairs = [(int(m), float(s)) for m, s in modes]
    elif profile is not None:
        order = np.argsort(domain.eigenvalues, kind="stable")
        if profile == "single_mode":
            pairs = [(int(params.get("mode", 1)), float(params["amplitude"]))]
        elif profile == "powerlaw_decay":
            q = float(params["q"])
            amp = float(params.get("amplitude", 1.0))
            n = int(params.get("n_modes", domain.n_modes))
            lam1 = domain.eigenvalues.min()
            pairs = [(int(j) + 1, amp * (domain.eigenvalues[j] / lam1) ** (-q / 2))
                     for j in order[:n]]
        elif profile == "flat":
            n = int(params["n_modes"])
            amp = float(params["amplitude"])
            pairs = [(int(j) + 1, amp) for j in order[:n]]
        else:
            raise ConfigError(f"unknown noise profile {profile!r}")
    errs = []
    for m, s in pairs:
        if not 1 <= m <= domain.n_modes:
            errs.append(f"noise mode {m} outside truncation 1..{domain.n_modes}")
        if not (s >= 0 and math.isfinite(s)):
            errs.append(f"noise amplitude {s} must be finite and >= 0")
    idx = [m - 1 for m, _ in pairs]
    if len(set(idx)) != len(idx):
        errs.append("noise modes must be distinct")
    if errs:
        raise ConfigError(errs)
    m = np.array(idx, dtype=np.int64)
    s = np.array([s for _, s in pairs], dtype=float)
    return NoiseOperator(domain, ncomp, m, s, _directions(domain, m, ncomp, solenoidal))


def zero_noise(domain, ncomp=1):
    return NoiseOperator(domain, ncomp, np.zeros(0, dtype=np.int64), np.zeros(0),
                         np.zeros((0, ncomp)))


# ---------------------------------------------------------------------------
# counter-based streams


@dataclass(frozen=True)
class RngStream:
    seed: int
    trajectory: int = 0
    role: str = "primary"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"unknown stream role {self.role!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def key(self):
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.trajectory),))
        return ss.generate_state(2, np.uint64)

    def normals(self, step0, n_steps, width):
        """Standard normals of shape (n_steps, width) for steps step0.."""
        if width == 0 or n_steps == 0:
            return np.zeros((n_steps, width))
        blocks = -(-width // 4)
        bitgen = np.random.Philox(key=self.key,
                                  counter=np.array([step0 * blocks, 0, 0, 0], dtype=np.uint64))
        raw = bitgen.random_raw(n_steps * blocks * 4).reshape(n_steps, blocks * 4)[:, :width]
        u = ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0 ** -53
        z = special.ndtri(u)
        return -z if self.role == "antithetic" else z

    def label(self):
        return f"{self.seed}/{self.trajectory}/{self.role}"


def sample_increment(b: NoiseOperator, dt, stream: RngStream, step: int) -> sp.SpectralField:
    if not dt > 0:
        raise ConfigError("dt must be positive")
    xi = stream.normals(step, 1, b.n_active)[0]
    return sp.SpectralField(b.domain, b.embed(b.sigmas * math.sqrt(dt) * xi))


def increments(b: NoiseOperator, dt, streams, step0, n_steps):
    """Active-mode increments sigma_j sqrt(dt) xi, shape (n_steps, n_streams, n_active)."""
    if b.n_active == 0:
        return np.zeros((n_steps, len(streams), 0))
    z = np.stack([s.normals(step0, n_steps, b.n_active) for s in streams], axis=1)
    return z * (b.sigmas * math.sqrt(dt))


# ---------------------------------------------------------------------------
# small-ball frequency


@dataclass(frozen=True)
class FrequencyEstimate:
    estimate: float
    low: float
    high: float
    n: int
    hits: int


def binomial_estimate(hits, n, confidence=0.95):
    ci = stats.binomtest(int(hits), int(n)).proportion_ci(confidence, method="exact")
    return FrequencyEstimate(hits / n, float(ci.low), float(ci.high), int(n), int(hits))


def small_ball_frequency(b: NoiseOperator, delta, T, dt, n_paths, seed, confidence=0.95):
    """Fraction of paths with max over grid times of ||B W_t||_V <= delta."""
    if not delta > 0:
        raise ConfigError("delta must be positive")
    if b.is_zero:
        return binomial_estimate(n_paths, n_paths, confidence)
    sup = small_ball_sups(b, T, dt, n_paths, seed)
    return binomial_estimate(int(np.sum(sup <= delta)), n_paths, confidence)


def small_ball_sups(b, T, dt, n_paths, seed):
    """Per-path max over grid times of ||B W_t||_V."""
    n_steps = int(round(T / dt))
    lam = b.domain.eigenvalues[b.modes]
    out = np.empty(n_paths)
    for i in range(n_paths):
        z = RngStream(seed, i).normals(0, n_steps, b.n_active) * (b.sigmas * math.sqrt(dt))
        w = np.cumsum(z, axis=0)
        out[i] = np.sqrt(np.max(np.sum(lam * w * w, axis=1)))
    return out


def brownian_tube_probability(a, T, terms=200):
    """P(sup_{[0,T]} |W_t| < a) for standard Brownian motion (series form)."""
    n = np.arange(terms)
    m = 2 * n + 1
    return float(4 / np.pi * np.sum((-1.0) ** n / m * np.exp(-(m ** 2) * np.pi ** 2 * T / (8 * a * a))))

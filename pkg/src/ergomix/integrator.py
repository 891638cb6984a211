"""Time stepping of the Galerkin system, single and synchronously coupled.

semi_implicit_euler:  u' = (u + dt N(u) + B dW) / (1 + dt nu lambda_k)
tamed_explicit_euler: u' = u + dt A(u) / (1 + theta dt ||A(u)||_H) + B dW

N is the drift minus its Laplacian part, evaluated at the current state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .drift import DriftModel
from .errors import ConfigError, DivergedStateError
from .noise import NoiseOperator, RngStream, increments, zero_noise

SCHEMES = ("semi_implicit_euler", "tamed_explicit_euler")


@dataclass(frozen=True)
class SchemeSpec:
    scheme: str = "semi_implicit_euler"
    dt: float = 1e-3
    taming: float = 1.0
    guard: float = 1e6
    checkpoint_stride: int = 0

    def __post_init__(self):
        errs = []
        if self.scheme not in SCHEMES:
            errs.append(f"unknown scheme {self.scheme!r}")
        if not self.dt > 0:
            errs.append("dt must be positive")
        if not self.taming > 0:
            errs.append("taming parameter must be positive")
        if not self.guard > 0:
            errs.append("guard must be positive")
        if self.checkpoint_stride < 0:
            errs.append("checkpoint_stride must be >= 0")
        if errs:
            raise ConfigError(errs)

    def n_steps(self, T):
        n = int(round(T / self.dt))
        if n < 1 or abs(n * self.dt - T) > 1e-9 * max(1.0, T):
            raise ConfigError(f"horizon T={T} is not a positive multiple of dt={self.dt}")
        return n


@dataclass
class PathRecord:
    times: np.ndarray
    h_norm: np.ndarray
    v_norm: np.ndarray
    snapshot_steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    snapshots: np.ndarray | None = None
    stream: RngStream | None = None
    residual: np.ndarray | None = None

    def columns(self):
        cols = {"time": self.times, "h_norm": self.h_norm, "v_norm": self.v_norm}
        if self.residual is not None:
            res = np.full(len(self.times), np.nan)
            res[1:] = self.residual
            cols["residual"] = res
        return cols


def advance(c, m: DriftModel, b: NoiseOperator, scheme: SchemeSpec, dw):
    """One step for a batch of states c (..., ncomp, n_modes).

    dw holds active-mode increments with shape (..., n_active).
    """
    dt = scheme.dt
    noise = b.embed(dw) if b.n_active else 0.0
    if scheme.scheme == "semi_implicit_euler":
        return (c + dt * m.nonlinear(c) + noise) / (1.0 + dt * m.linear_rates)
    A = m.apply(c)
    nA = sp.h_norm(A)[..., None, None]
    return c + dt * A / (1.0 + scheme.taming * dt * nA) + noise


def _guard(c, scheme, step, streams):
    h = sp.h_norm(c)
    bad = ~np.isfinite(h) | (h > scheme.guard)
    if np.any(bad):
        i = int(np.flatnonzero(np.atleast_1d(bad))[0])
        label = None
        if streams:
            label = streams[min(i, len(streams) - 1)].label()
        raise DivergedStateError("state left the guarded region", step=step, stream=label)
    return h


def iterate(c, m, b, scheme, n_steps, streams, step0=0, chunk=128):
    """Yield (step, state) after each step.

    c has shape (B, ncomp, n_modes). `streams` has one stream per batch
    row, or a single stream shared by all rows (synchronous coupling).
    """
    c = np.array(c, dtype=float)
    B = c.shape[0]
    if streams is None:
        streams = []
    shared = len(streams) == 1 and B > 1
    done = 0
    while done < n_steps:
        k = min(chunk, n_steps - done)
        if b.n_active and streams:
            dws = increments(b, scheme.dt, streams, step0 + done, k)
            if shared:
                dws = np.broadcast_to(dws, (k, B, b.n_active))
        else:
            dws = np.zeros((k, B, b.n_active))
        for j in range(k):
            try:
                c = advance(c, m, b, scheme, dws[j])
            except DivergedStateError as err:
                label = streams[0].label() if streams else None
                raise DivergedStateError(str(err), step=step0 + done + j, stream=label) from None
            _guard(c, scheme, step0 + done + j + 1, streams)
            yield step0 + done + j + 1, c
        done += k


def step(u: sp.SpectralField, m, b, scheme, stream, stepidx) -> sp.SpectralField:
    dw = increments(b, scheme.dt, [stream], stepidx, 1)[0] if (b.n_active and stream) else \
        np.zeros((1, b.n_active))
    try:
        c = advance(u.coeffs[None], m, b, scheme, dw)
    except DivergedStateError as err:
        raise DivergedStateError(str(err), step=stepidx,
                                 stream=stream.label() if stream else None) from None
    _guard(c, scheme, stepidx + 1, [stream] if stream else [])
    return u.with_coeffs(c[0])


def _record(x_batch, m, b, T, scheme, streams, keep_snapshots):
    n = scheme.n_steps(T)
    B = x_batch.shape[0]
    d = m.domain
    h = np.empty((n + 1, B))
    v = np.empty((n + 1, B))
    h[0] = sp.h_norm(x_batch)
    v[0] = sp.v_norm(x_batch, d)
    stride = scheme.checkpoint_stride
    snaps, snap_steps = [], []
    if keep_snapshots and stride:
        snaps.append(np.array(x_batch))
        snap_steps.append(0)
    for k, c in iterate(x_batch, m, b, scheme, n, streams):
        h[k] = sp.h_norm(c)
        v[k] = sp.v_norm(c, d)
        if keep_snapshots and stride and k % stride == 0:
            snaps.append(np.array(c))
            snap_steps.append(k)
    times = scheme.dt * np.arange(n + 1)
    snaps = np.array(snaps) if snaps else None
    return times, h, v, np.array(snap_steps, dtype=np.int64), snaps


def simulate_path(x: sp.SpectralField, m, b, T, scheme, stream=None) -> PathRecord:
    if not T > 0:
        raise ConfigError("T must be positive")
    streams = [stream] if stream is not None else []
    times, h, v, st, snaps = _record(x.coeffs[None], m, b, T, scheme, streams, True)
    return PathRecord(times, h[:, 0], v[:, 0], st,
                      None if snaps is None else snaps[:, 0], stream)


def deterministic_flow(x, m, T, scheme) -> PathRecord:
    return simulate_path(x, m, zero_noise(m.domain, m.ncomp), T, scheme, None)


def simulate_coupled(x, y, m, b, T, scheme, stream=None):
    """Two solutions driven by identical increments, plus their difference."""
    if x.domain is not y.domain:
        raise ConfigError("coupled initial data must share a domain")
    if not T > 0:
        raise ConfigError("T must be positive")
    n = scheme.n_steps(T)
    d = m.domain
    c = np.stack([x.coeffs, y.coeffs])
    hx, vx, hy, vy, hd, vd = (np.empty(n + 1) for _ in range(6))

    def rec(k, c):
        hx[k], hy[k] = sp.h_norm(c)
        vx[k], vy[k] = sp.v_norm(c, d)
        diff = c[0] - c[1]
        hd[k] = sp.h_norm(diff)
        vd[k] = sp.v_norm(diff, d)

    rec(0, c)
    streams = [stream] if stream is not None else []
    for k, c in iterate(c, m, b, scheme, n, streams):
        rec(k, c)
    times = scheme.dt * np.arange(n + 1)
    return (PathRecord(times, hx, vx, stream=stream), PathRecord(times, hy, vy, stream=stream),
            PathRecord(times, hd, vd, stream=stream))


def energy_identity_residual(path: PathRecord, m, b, scheme) -> np.ndarray:
    """Per-step residual of the discrete energy identity

    r_n = |X_{n+1}|^2 - |X_n|^2 - 2<A(X_n),X_n> dt - |B|_HS^2 dt - 2<X_n, B dW_n>.
    Needs snapshots at every step (checkpoint_stride = 1).
    """
    if path.snapshots is None or len(path.snapshot_steps) < 2 or \
            np.any(np.diff(path.snapshot_steps) != 1):
        raise ConfigError("energy residual needs snapshots at every step")
    X = path.snapshots
    n = len(X) - 1
    dt = scheme.dt
    if b.n_active and path.stream is not None:
        dw = increments(b, dt, [path.stream], int(path.snapshot_steps[0]), n)[:, 0]
        BdW = b.embed(dw)
    else:
        BdW = np.zeros_like(X[:-1])
    Xn = X[:-1]
    AX = m.apply(Xn)
    hsq = np.sum(X * X, axis=(-2, -1))
    res = (hsq[1:] - hsq[:-1] - 2 * dt * np.sum(AX * Xn, axis=(-2, -1))
           - b.hs_norm_H ** 2 * dt - 2 * np.sum(Xn * BdW, axis=(-2, -1)))
    return res

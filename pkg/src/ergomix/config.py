"""TOML experiment configuration, validation and named presets.

Sections: [experiment] kind/seed/out, [domain], [model], [noise],
[scheme], [lambda] values/gamma, [constants] (standalone checker input)
and [params] (experiment-specific numbers). Validation reports every
violation, each prefixed with its section path.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import spectral as sp
from .checker import ConstantSet, gamma_max
from .drift import Heat, NavierStokes2D, PowerLawFluid, Semilinear
from .errors import ConfigError
from .integrator import SCHEMES, SchemeSpec
from .noise import build_noise, zero_noise

KINDS = ("check", "simulate", "couple", "moments", "mixing", "decay", "smallball", "convexity")
VARIANTS = ("heat", "semilinear", "navier_stokes_2d", "power_law")
CONSTANT_KEYS = ("alpha", "beta", "delta1", "delta2", "C2", "c0", "hs_norm_H", "op_norm")

DEFAULT_SCHEME = {"name": "semi_implicit_euler", "dt": 1e-3, "taming": 1.0, "guard": 1e6,
                  "checkpoint_stride": 0}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    out: str | None
    domain: dict
    model: dict
    noise: dict
    scheme: dict
    lambdas: list | None
    gamma: object
    constants: dict | None
    params: dict
    text: str = field(repr=False, default="")

    @property
    def config_hash(self):
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()

    # -- builders ---------------------------------------------------------
    def build_domain(self):
        d = self.domain
        return sp.build_domain(d["geometry"], d["boundary"], int(d["N"]), d.get("lengths"))

    def build_model(self, domain=None):
        domain = domain or self.build_domain()
        m = dict(self.model)
        variant = m.pop("variant")
        if variant == "heat":
            return Heat(domain, **m)
        if variant == "semilinear":
            return Semilinear(domain, **m)
        if variant == "navier_stokes_2d":
            return NavierStokes2D(domain, **m)
        return PowerLawFluid(domain, **m)

    def build_noise(self, model):
        n = dict(self.noise)
        d, nc = model.domain, model.ncomp
        if not n:
            return zero_noise(d, nc)
        if "modes" in n:
            return build_noise(d, modes=[tuple(p) for p in n["modes"]], ncomp=nc)
        profile = n.pop("profile")
        return build_noise(d, profile=profile, ncomp=nc, **n)

    def build_scheme(self):
        s = self.scheme
        return SchemeSpec(s["name"], float(s["dt"]), float(s["taming"]), float(s["guard"]),
                          int(s["checkpoint_stride"]))

    def constant_set(self, model=None, noise=None):
        """Checker constants from [constants] or from the model and noise."""
        lam = tuple(self.lambdas) if self.lambdas is not None else None
        if self.constants is not None:
            vals = {k: float(self.constants[k]) for k in CONSTANT_KEYS}
        else:
            model = model or self.build_model()
            noise = noise or self.build_noise(model)
            mc = model.constants
            if mc.C2 is None or mc.delta2 is None:
                raise ConfigError("[model] constants C2/delta2 unavailable for this model")
            vals = dict(alpha=mc.alpha, beta=mc.beta, delta1=mc.delta1, delta2=mc.delta2,
                        C2=mc.C2, c0=model.domain.c0, hs_norm_H=noise.hs_norm_H,
                        op_norm=noise.op_norm)
        cs = ConstantSet(lambdas=lam, **vals)
        g = self.gamma
        if g is None:
            return cs
        if g == "auto":
            g = gamma_max(cs)
            if not g > 0:
                raise ConfigError("[lambda] gamma = 'auto' but delta2 - ratio <= 0")
        return ConstantSet(lambdas=cs.lambdas, gamma=float(g), **vals)

    def initial(self, model, key="x"):
        """Initial datum from [params].x / [params].y.

        {mode = j, amplitude = a}: the j-th basis mode (1-based position);
        {rank = j, amplitude = a}: the j-th mode in ascending-eigenvalue
        order (ties by position), as used by the noise profiles.
        """
        spec = self.params.get(key, {"rank": 1, "amplitude": 1.0})
        d = model.domain
        if ("mode" in spec) == ("rank" in spec):
            raise ConfigError(f"[params] {key} needs exactly one of 'mode' or 'rank'")
        if "mode" in spec:
            j = int(spec["mode"]) - 1
        else:
            r = int(spec["rank"])
            if not 1 <= r <= d.n_modes:
                raise ConfigError(f"[params] {key}.rank outside 1..{d.n_modes}")
            j = int(np.argsort(d.eigenvalues, kind="stable")[r - 1])
        amp = float(spec.get("amplitude", 1.0))
        if model.ncomp == 1:
            if not 0 <= j < d.n_modes:
                raise ConfigError(f"[params] {key}.mode outside 1..{d.n_modes}")
            return sp.SpectralField.mode(d, j, amp)
        # vector fields: solenoidal direction k_perp/|k| on the chosen mode
        noise = build_noise(d, modes=[(j + 1, 1.0)], ncomp=model.ncomp)
        return sp.SpectralField(d, noise.embed([amp]))

    def resolved(self) -> dict:
        return {"experiment": {"kind": self.kind, "seed": self.seed, "out": self.out},
                "domain": self.domain, "model": self.model, "noise": self.noise,
                "scheme": self.scheme,
                "lambda": {"values": self.lambdas, "gamma": self.gamma},
                "constants": self.constants, "params": self.params}


_LOC = re.compile(r"line (\d+), column (\d+)")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing every violation."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        m = _LOC.search(str(err))
        where = f"line {m.group(1)}, column {m.group(2)}" if m else "unknown position"
        raise ConfigError(f"parse error at {where}: {err}") from None
    errs = []
    known = {"experiment", "domain", "model", "noise", "scheme", "lambda", "constants", "params"}
    for k in raw:
        if k not in known:
            errs.append(f"[{k}] unknown section")

    exp = raw.get("experiment", {})
    kind = exp.get("kind")
    if kind not in KINDS:
        errs.append(f"[experiment] kind must be one of {', '.join(KINDS)}, got {kind!r}")
    seed = exp.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        errs.append("[experiment] seed must be an unsigned 64-bit integer")
    out = exp.get("out")

    constants = raw.get("constants")
    needs_model = kind not in ("convexity",) and not (kind == "check" and constants)
    domain, model, noise = raw.get("domain", {}), raw.get("model", {}), raw.get("noise", {})
    if constants is not None:
        missing = [k for k in CONSTANT_KEYS if k not in constants]
        if missing:
            errs.append(f"[constants] missing keys: {', '.join(missing)}")
    structural = []
    if needs_model:
        structural = _check_domain(domain) + _check_model(model)
        errs += structural

    scheme = dict(DEFAULT_SCHEME)
    scheme.update(raw.get("scheme", {}))
    if scheme["name"] not in SCHEMES:
        errs.append(f"[scheme] name must be one of {', '.join(SCHEMES)}")
    if not (isinstance(scheme["dt"], (int, float)) and scheme["dt"] > 0):
        errs.append("[scheme] dt must be positive")

    lam = raw.get("lambda", {})
    values = lam.get("values")
    if values is not None:
        if not (isinstance(values, list) and len(values) == 4
                and all(isinstance(v, (int, float)) for v in values)):
            errs.append("[lambda] values must be a list of four numbers")
        elif abs(sum(values) - 1) > 1e-12:
            errs.append(f"[lambda] values must sum to 1, got {sum(values)!r}")
        elif any(v < 0 or v >= 1 for v in values):
            errs.append("[lambda] values must lie in [0, 1)")
    gamma = lam.get("gamma")
    if gamma is not None and gamma != "auto" and not (
            isinstance(gamma, (int, float)) and gamma > 0):
        errs.append("[lambda] gamma must be positive or 'auto'")

    params = raw.get("params", {})
    cfg = ExperimentConfig(kind, seed if isinstance(seed, int) else 0, out, domain, model,
                           noise, scheme, values, gamma, constants, params, text)
    if needs_model and not structural:
        lam_ok = not any(e.startswith("[lambda]") for e in errs)
        errs += _build_errors(cfg, lam_ok)
    if errs:
        raise ConfigError(errs)
    return cfg


def _check_domain(d):
    errs = []
    for k in ("geometry", "boundary", "N"):
        if k not in d:
            errs.append(f"[domain] missing key {k!r}")
    if "geometry" in d and d["geometry"] not in sp.GEOMETRIES:
        errs.append(f"[domain] geometry must be one of {', '.join(sp.GEOMETRIES)}")
    if "N" in d and not (isinstance(d["N"], int) and d["N"] >= 1):
        errs.append("[domain] N must be a positive integer")
    return errs


def _check_model(m):
    errs = []
    v = m.get("variant")
    if v not in VARIANTS:
        errs.append(f"[model] variant must be one of {', '.join(VARIANTS)}, got {v!r}")
    if not (isinstance(m.get("nu"), (int, float)) and m.get("nu", 0) > 0):
        errs.append("[model] nu must be positive")
    return errs


def _build_errors(cfg, check_lambdas=True):
    errs = []
    try:
        domain = cfg.build_domain()
    except ConfigError as err:
        return [f"[domain] {v}" for v in err.violations]
    try:
        model = cfg.build_model(domain)
    except ConfigError as err:
        return [f"[model] {v}" for v in err.violations]
    except TypeError as err:
        return [f"[model] {err}"]
    try:
        cfg.build_noise(model)
    except (ConfigError, KeyError, TypeError) as err:
        vs = err.violations if isinstance(err, ConfigError) else [f"bad noise block: {err}"]
        errs += [f"[noise] {v}" for v in vs]
    try:
        cfg.build_scheme()
    except ConfigError as err:
        errs += [f"[scheme] {v}" for v in err.violations]
    if check_lambdas and (cfg.lambdas is not None or cfg.gamma is not None):
        try:
            if model.constants.C2 is not None:
                cfg.constant_set(model)
        except ConfigError as err:
            errs += [v if v.startswith("[") else f"[lambda] {v}" for v in err.violations]
    return errs


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# presets

NSE_B2 = 0.01
NSE_LAMBDA = 0.5


def nse_viscosity(b2=NSE_B2, lam=NSE_LAMBDA, c0=1.0, margin=2.0):
    """nu with |B|^2 <= lam nu^3 c0^2 / 4 holding with the given margin."""
    return (4 * margin * b2 / (lam * c0 ** 2)) ** (1 / 3)


_NSE_NU = nse_viscosity()

PRESETS = {
    "heat_thm22": """\
[experiment]
kind = "mixing"
seed = 0

[domain]
geometry = "interval"
boundary = "dirichlet"
N = 16
lengths = [1.0]

[model]
variant = "heat"
nu = 1.0

[noise]
modes = [[1, 0.1]]

[scheme]
name = "semi_implicit_euler"
dt = 0.001
checkpoint_stride = 100

[lambda]
values = [0.5, 0.0, 0.0, 0.5]

[params]
T = 1.0
n_paths = 10000
eps = [0.1, 0.03, 0.01]
x = { rank = 1, amplitude = 1.0 }
""",
    "burgers_thm24": """\
[experiment]
kind = "moments"
seed = 0

[domain]
geometry = "interval"
boundary = "dirichlet"
N = 32
lengths = [1.0]

[model]
variant = "semilinear"
nu = 1.0
f = "burgers"
g = "zero"

[noise]
profile = "flat"
n_modes = 4
amplitude = 0.1

[scheme]
name = "semi_implicit_euler"
dt = 0.001
checkpoint_stride = 200

[lambda]
gamma = "auto"

[params]
T = 2.0
n_paths = 1000
x = { rank = 1, amplitude = 1.0 }
y = { rank = 2, amplitude = -1.0 }
""",
    "nse_thm26": f"""\
[experiment]
kind = "couple"
seed = 0

[domain]
geometry = "torus_2"
boundary = "periodic_mean_zero"
N = 32

[model]
variant = "navier_stokes_2d"
nu = {_NSE_NU!r}

[noise]
profile = "flat"
n_modes = 4
amplitude = 0.05

[scheme]
name = "semi_implicit_euler"
dt = 0.01
checkpoint_stride = 100

[lambda]
values = [{NSE_LAMBDA!r}, 0.0, 0.0, {1 - NSE_LAMBDA!r}]
gamma = "auto"

[params]
T = 10.0
n_paths = 1000
seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
x = {{ rank = 1, amplitude = 1.0 }}
y = {{ rank = 3, amplitude = -1.0 }}
""",
    "powerlaw_thm28": f"""\
[experiment]
kind = "moments"
seed = 0

[domain]
geometry = "torus_2"
boundary = "periodic_mean_zero"
N = 8

[model]
variant = "power_law"
nu = {_NSE_NU!r}
p = 2.0

[noise]
profile = "flat"
n_modes = 4
amplitude = 0.05

[scheme]
name = "semi_implicit_euler"
dt = 0.01
checkpoint_stride = 20

[lambda]
values = [{NSE_LAMBDA!r}, 0.0, 0.0, {1 - NSE_LAMBDA!r}]
gamma = "auto"

[params]
T = 2.0
n_paths = 1000
x = {{ rank = 1, amplitude = 1.0 }}
y = {{ rank = 3, amplitude = -1.0 }}
""",
}


def preset_text(name, kind=None) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = PRESETS[name]
    if kind is not None:
        if kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}")
        text = re.sub(r'(?m)^kind = ".*"$', f'kind = "{kind}"', text, count=1)
    return text


def preset(name, kind=None) -> ExperimentConfig:
    return parse_config(preset_text(name, kind))


"""Heat preset: where the ensemble W2 departs from the closed-form oracle.

Two effects are separated. The scheme bias is measured against the exact
law of the implicit Euler chain, which is Gaussian with
  mean (1 + a dt)^-n x,  variance s^2 dt sum_{j=1..n} (1 + a dt)^-2j.
The Monte Carlo floor is measured by drawing exact Gaussian samples of
the continuous-time law and running the same estimator on them.

usage: python scripts/heat_oracle_study.py [n_paths]
"""

import sys

import numpy as np

from ergomix import lab
from ergomix.config import preset
from ergomix.integrator import SchemeSpec


def chain_law(a, s, x1, dt, n):
    q = 1.0 / (1.0 + a * dt)
    var = s * s * dt * q * q * (1 - q ** (2 * n)) / (1 - q * q)
    return x1 * q ** n, np.sqrt(var)


def main(n_paths=10000):
    cfg = preset("heat_thm22")
    m = cfg.build_model()
    b = cfg.build_noise(m)
    x = cfg.initial(m)
    j = int(b.modes[0])
    a, s, x1 = m.linear_rates[j], b.sigmas[0], x.coeffs[0, j]
    mi, si = lab.heat_stationary(m, b)
    print("scheme bias at t = 0.1 (oracle W2 of continuous law vs implicit chain law)")
    print(f"{'dt':>10} {'continuous':>12} {'chain':>12} {'relative':>10}")
    mt, st = lab.heat_law(m, b, x, 0.1)
    cont = float(lab.gaussian_w2(mt[j], st[j], mi[j], si[j]))
    for dt in (1e-3, 5e-4, 2.5e-4, 1.25e-4):
        cm, cs = chain_law(a, s, x1, dt, int(round(0.1 / dt)))
        chain = float(lab.gaussian_w2(cm, cs, mi[j], si[j]))
        print(f"{dt:10.2e} {cont:12.6f} {chain:12.6f} {(chain - cont) / cont:10.2%}")

    print(f"\nensemble at dt = 1e-3, {n_paths} paths")
    ens = lab.run_ensemble(m, b, x, 1.0, SchemeSpec(dt=1e-3, checkpoint_stride=100), n_paths,
                           cfg.seed)
    rng = np.random.default_rng(1)
    print(f"{'t':>5} {'oracle':>11} {'chain':>11} {'ensemble':>11} {'hw':>9} {'exact-sample':>13}")
    for t in (0.1, 0.5, 1.0):
        k = int(np.argmin(np.abs(ens.times - t)))
        mt, st = lab.heat_law(m, b, x, t)
        orc = float(lab.gaussian_w2(mt[j], st[j], mi[j], si[j]))
        cm, cs = chain_law(a, s, x1, 1e-3, k * 100)
        chain = float(lab.gaussian_w2(cm, cs, mi[j], si[j]))
        est = lab.w2_marginal_vs_gaussian(ens.snapshots[k][:, 0, j], mi[j], si[j], seed=k)
        exact = rng.normal(mt[j], st[j], n_paths)
        floor = lab.w2_to_gaussian_1d(np.sort(exact), mi[j], si[j])
        print(f"{t:5.1f} {orc:11.4e} {chain:11.4e} {est.value:11.4e} {est.uncertainty:9.2e} "
              f"{floor:13.4e}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 10000)

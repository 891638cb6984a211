import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from ergomix import lab
from ergomix import spectral as sp
from ergomix.checker import ConstantSet
from ergomix.drift import Heat, PowerLawFluid, Semilinear
from ergomix.errors import ConfigError, InsufficientSamplesError
from ergomix.integrator import SchemeSpec
from ergomix.noise import build_noise, zero_noise

PI = math.pi
D = sp.build_domain("interval", "dirichlet", 8)
HEAT = Heat(D, 1.0)
B1 = build_noise(D, modes=[(1, 0.1)])
X1 = sp.SpectralField.mode(D, 0, 1.0)


def heat_cs(b=0.1, lam=0.5, gamma=None):
    return ConstantSet(2, 0, 2.0, 2 * PI ** 2, 0.0, PI, b, b, (1 - lam, 0, 0, lam), gamma)


def test_zero_noise_paths_identical():
    st_ = lab.run_ensemble(Semilinear(D, 1.0), zero_noise(D), X1, 0.05, SchemeSpec(dt=1e-3), 2, 0)
    assert np.array_equal(st_.snapshots[:, 0], st_.snapshots[:, 1])


def test_ensemble_needs_two_paths():
    with pytest.raises(InsufficientSamplesError):
        lab.run_ensemble(HEAT, B1, X1, 0.1, SchemeSpec(dt=1e-2), 1, 0)


def test_ou_mean_and_variance():
    b = build_noise(D, modes=[(1, 0.5), (2, 0.5)])
    x = sp.SpectralField.zeros(D)
    st_ = lab.run_ensemble(HEAT, b, x, 0.2, SchemeSpec(dt=1e-3, checkpoint_stride=200), 3000, 1)
    samples = st_.snapshots[-1][:, 0, :2]
    n = len(samples)
    for k in range(2):
        lam = ((k + 1) * PI) ** 2
        var = 0.25 * (1 - math.exp(-2 * lam * 0.2)) / (2 * lam)
        assert abs(samples[:, k].mean()) <= 3 * math.sqrt(var / n)
        se_var = var * math.sqrt(2 / (n - 1))
        assert abs(samples[:, k].var(ddof=1) - var) <= 3 * se_var


def test_ensemble_deterministic_and_worker_independent():
    sch = SchemeSpec(dt=1e-3, checkpoint_stride=50)
    a = lab.run_ensemble(HEAT, B1, X1, 0.1, sch, 600, 5, workers=1)
    b = lab.run_ensemble(HEAT, B1, X1, 0.1, sch, 600, 5, workers=1)
    c = lab.run_ensemble(HEAT, B1, X1, 0.1, sch, 600, 5, workers=3)
    assert np.array_equal(a.snapshots, b.snapshots)
    assert np.array_equal(a.snapshots, c.snapshots)
    assert np.array_equal(a.integral, c.integral)


def test_ensemble_standard_errors():
    st_ = lab.run_ensemble(HEAT, B1, X1, 0.1, SchemeSpec(dt=1e-3, checkpoint_stride=50), 50, 0)
    se = st_.h_power.std(axis=1, ddof=1) / math.sqrt(50)
    assert np.allclose(st_.se_h_power, se)


def test_oracle_stationary_distance_from_origin():
    x = sp.SpectralField.zeros(D)
    w = lab.w2_gaussian_oracle(HEAT, B1, x, 0.0)
    assert w.value == pytest.approx(0.1 / math.sqrt(2 * PI ** 2))


def test_oracle_zero_noise_is_decay():
    for t in (0.0, 0.1, 0.5):
        w = lab.w2_gaussian_oracle(HEAT, zero_noise(D), X1, t)
        assert w.value == pytest.approx(math.exp(-PI ** 2 * t), rel=1e-14)


def test_oracle_vanishes_at_infinity():
    assert lab.w2_gaussian_oracle(HEAT, B1, X1, 50.0).value < 1e-12


def test_oracle_heat_only():
    T = sp.build_domain("torus_2", "periodic_mean_zero", 4)
    with pytest.raises(ConfigError):
        lab.w2_gaussian_oracle(PowerLawFluid(T, 1.0), zero_noise(T, 2), sp.SpectralField.zeros(T, 2),
                               1.0)


@settings(max_examples=40, deadline=None)
@given(t1=st.floats(0.0, 1.0), t2=st.floats(0.0, 1.0), t3=st.floats(0.0, 1.0))
def test_oracle_triangle_inequality(t1, t2, t3):
    laws = [lab.heat_law(HEAT, B1, X1, t) for t in (t1, t2, t3)]

    def w(i, j):
        return float(np.sqrt(np.sum(lab.gaussian_w2(laws[i][0], laws[i][1],
                                                     laws[j][0], laws[j][1]) ** 2)))
    assert w(0, 2) <= w(0, 1) + w(1, 2) + 1e-15


@settings(max_examples=40, deadline=None)
@given(t=st.floats(0.0, 2.0), dt=st.floats(0.0, 1.0))
def test_oracle_nonincreasing(t, dt):
    a = lab.w2_gaussian_oracle(HEAT, B1, X1, t).value
    b = lab.w2_gaussian_oracle(HEAT, B1, X1, t + dt).value
    assert b <= a * (1 + 1e-14)


def test_w2_identical_samples():
    a = np.random.default_rng(0).standard_normal((100, 3))
    assert lab.w2_empirical(a, a, "sliced", n_boot=0).value == 0.0
    assert lab.w2_empirical(a, a, "mode_marginal_1d", n_boot=0).value == 0.0


def test_w2_gaussian_shift():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((100000, 1))
    b = rng.standard_normal((100000, 1)) + 1
    w = lab.w2_empirical(a, b, "mode_marginal_1d", n_boot=0)
    assert w.value == pytest.approx(1.0, abs=0.02)


def test_w2_1d_unequal_sizes():
    a = np.array([0.0, 1.0])
    b = np.array([0.0, 0.5, 1.0, 1.5])
    # quantile functions: a = 0 on (0,1/2], 1 on (1/2,1]; b steps every 1/4
    expect = math.sqrt(0.25 * (0 + 0.25 + 0 + 0.25))
    assert lab.w2_1d(a, b) == pytest.approx(expect)


def test_w2_to_gaussian_against_quadrature():
    x = np.sort(np.random.default_rng(2).normal(0.3, 1.2, 40))
    n = len(x)

    def integrand(u):
        return (x[min(int(u * n), n - 1)] - 0.1 - 0.8 * special.ndtri(u)) ** 2

    pts = np.arange(1, n) / n
    val, _ = integrate.quad(integrand, 0, 1, points=pts, limit=400)
    assert lab.w2_to_gaussian_1d(x, 0.1, 0.8) == pytest.approx(math.sqrt(val), rel=1e-7)


def test_sliced_below_oracle_on_gaussians():
    rng = np.random.default_rng(3)
    m = np.array([1.0, 0.0, -0.5])
    a = rng.standard_normal((2000, 3))
    b = rng.standard_normal((2000, 3)) + m
    w = lab.w2_empirical(a, b, "sliced", n_proj=64, n_boot=50)
    assert w.value <= np.linalg.norm(m) + 3 * w.uncertainty
    assert w.method == "sliced(64)"


def test_sliced_needs_samples():
    with pytest.raises(InsufficientSamplesError):
        lab.w2_empirical(np.zeros((10, 2)), np.zeros((10, 2)), "sliced")


def test_marginal_matches_oracle_per_mode():
    b = build_noise(D, modes=[(1, 0.3)])
    x = sp.SpectralField.zeros(D)
    st_ = lab.run_ensemble(HEAT, b, x, 0.05, SchemeSpec(dt=1e-3, checkpoint_stride=50), 4000, 2)
    mi, si = lab.heat_stationary(HEAT, b)
    mt, s_t = lab.heat_law(HEAT, b, x, 0.05)
    orc = lab.gaussian_w2(mt[0], s_t[0], mi[0], si[0])
    est = lab.w2_marginal_vs_gaussian(st_.snapshots[-1][:, 0, 0], mi[0], si[0], n_boot=100)
    assert abs(est.value - orc) <= 3 * est.uncertainty


def test_contraction_heat_rate():
    y = sp.SpectralField.mode(D, 0, -1.0)
    cert = lab.contraction_certificate(HEAT, B1, X1, y, 1.0, SchemeSpec(dt=1e-3), 0,
                                       constants=HEAT.constants)
    row = cert.rows[0]
    assert cert.passed
    assert row["fitted_rate"] == pytest.approx(-2 * PI ** 2, rel=0.02)
    assert row["predicted_rate"] == pytest.approx(-2 * PI ** 2)


def test_contraction_needs_distinct_points():
    with pytest.raises(ConfigError):
        lab.contraction_certificate(HEAT, B1, X1, X1, 1.0, SchemeSpec(dt=1e-3))


def test_fit_window_truncates_underflow():
    t = np.linspace(0, 10, 101)
    v = np.exp(-5 * t)
    slope, err, (t0, t1) = lab.fit_log_rate(t, v, floor=1e-14)
    assert slope == pytest.approx(-5)
    assert t1 < 10


def test_moment_certificate_zero_noise():
    st_ = lab.run_ensemble(HEAT, zero_noise(D), X1, 0.5, SchemeSpec(dt=1e-3, checkpoint_stride=50),
                           2, 0)
    cert = lab.moment_certificate(st_, heat_cs(b=0.0))
    assert cert.passed
    lhs = [r["lhs"] for r in cert.rows]
    assert all(a >= b - 1e-15 for a, b in zip(lhs, lhs[1:]))


def test_moment_certificate_with_noise_and_doubled_c1():
    b = build_noise(D, modes=[(1, 0.5)])
    st_ = lab.run_ensemble(HEAT, b, X1, 0.5, SchemeSpec(dt=1e-3, checkpoint_stride=50), 2000, 3)
    assert lab.moment_certificate(st_, heat_cs(b=0.5, lam=0.9)).passed
    # a larger noise constant only loosens the bound
    assert lab.moment_certificate(st_, heat_cs(b=0.5 * math.sqrt(2), lam=0.9)).passed


def test_exp_moment_certificate():
    st0 = lab.run_ensemble(HEAT, zero_noise(D), X1, 1.0, SchemeSpec(dt=1e-3, checkpoint_stride=100),
                           2, 0)
    assert lab.exp_moment_certificate(st0, heat_cs(b=0.0)).status == "pass"
    b = build_noise(D, modes=[(1, 0.05)])
    st_ = lab.run_ensemble(HEAT, b, X1, 1.0, SchemeSpec(dt=1e-3, checkpoint_stride=100), 2000, 4)
    assert lab.exp_moment_certificate(st_, heat_cs(b=0.05)).status == "pass"


def test_exp_moment_inconclusive_on_overflow():
    b = build_noise(D, modes=[(1, 40.0)])
    st_ = lab.run_ensemble(HEAT, b, sp.SpectralField.mode(D, 0, 30.0), 0.01,
                           SchemeSpec(dt=1e-3, checkpoint_stride=5), 50, 0)
    cs = ConstantSet(2, 0, 2.0, 2 * PI ** 2, 0.0, PI, 40.0, 40.0, (0.01, 0, 0, 0.99))
    assert lab.exp_moment_certificate(st_, cs).status == "inconclusive"


@pytest.mark.parametrize("eps", [0.1, 0.03, 0.01])
def test_heat_mixing_time(eps):
    cert = lab.empirical_mixing_time(HEAT, B1, X1, eps, SchemeSpec(dt=1e-3), cs=heat_cs())
    row = cert.rows[0]
    assert cert.passed and row["tau_hat"] <= row["tau_bound"]


def test_mixing_time_zero_noise():
    cert = lab.empirical_mixing_time(HEAT, zero_noise(D), X1, 0.01, SchemeSpec(dt=1e-3),
                                     cs=heat_cs(b=0.0))
    tau = cert.rows[0]["tau_hat"]
    assert cert.passed
    assert tau == pytest.approx(math.log(100) / PI ** 2, abs=1e-3)


def test_mixing_time_zero_when_eps_large():
    cert = lab.empirical_mixing_time(HEAT, B1, X1, 5.0, SchemeSpec(dt=1e-3), cs=heat_cs())
    assert cert.rows[0]["tau_hat"] == 0.0


def test_lyapunov_occupation():
    r = lab.lyapunov_occupation(HEAT, zero_noise(D), X1, 5.0, 1e-3, SchemeSpec(dt=1e-2),
                                cs=heat_cs(b=0.0))
    assert r["occupation"] > 0.8 and r["consistent"]
    r = lab.lyapunov_occupation(HEAT, B1, X1, 2.0, 1e6, SchemeSpec(dt=1e-2), cs=heat_cs())
    assert r["occupation"] == 1.0


def test_lyapunov_occupation_against_stationary_law():
    # after the transient, Theta = 2 pi^2 |X|^2 <= R has the chi-square-like
    # stationary probability P(|Z| <= sqrt(R / (2 pi^2)) / s_inf)
    b = build_noise(D, modes=[(1, 1.0)])
    x = sp.SpectralField.zeros(D)
    R = 2 * PI ** 2 * (1 / math.sqrt(2 * PI ** 2)) ** 2
    r = lab.lyapunov_occupation(HEAT, b, x, 200.0, R, SchemeSpec(dt=1e-2), seed=1)
    assert r["occupation"] == pytest.approx(math.erf(1 / math.sqrt(2)), abs=0.05)


def test_stability_vs_deterministic():
    assert lab.stability_vs_deterministic(HEAT, zero_noise(D), X1, 1.0, 0.1, 20,
                                          SchemeSpec(dt=1e-2)).estimate == 1.0
    b = build_noise(D, modes=[(1, 0.01)])
    est = lab.stability_vs_deterministic(HEAT, b, X1, 1.0, 0.1, 200, SchemeSpec(dt=1e-3))
    assert est.low > 0
    tiny = lab.stability_vs_deterministic(HEAT, build_noise(D, modes=[(1, 1.0)]), X1, 1.0, 1e-8,
                                          200, SchemeSpec(dt=1e-3))
    assert tiny.estimate == 0.0


def test_decay_check_heat_and_powerlaw():
    cert = lab.deterministic_decay_check(HEAT, X1, 1.0, SchemeSpec(dt=1e-3))
    assert cert.passed
    T2 = sp.build_domain("torus_2", "periodic_mean_zero", 4)
    m = PowerLawFluid(T2, 0.5, p=3.0, ergodicity=False)
    x = sp.random_field(T2, np.random.default_rng(0), ncomp=2, scale=2.0, solenoidal=True)
    c1 = lab.deterministic_decay_check(m, x, 0.5, SchemeSpec(dt=1e-2))
    c2 = lab.deterministic_decay_check(m, x, 0.5, SchemeSpec(dt=5e-3))
    assert c1.passed and c2.passed
    assert c2.details["residual"] < c1.details["residual"]


def test_decay_comparison_branches():
    t = np.array([0.0, 1.0])
    assert np.allclose(lab.decay_comparison(t, 2, 1.0, 2.0, 1.0), [1.0, math.exp(-1.0)])
    assert np.allclose(lab.decay_comparison(t, 4, 1.0, 2.0, 1.0), [1.0, (1 + 2.0) ** -0.5])

"""Ergodic estimators, the averaged delay ODE and the frozen-segment auxiliaries."""
import math

import numpy as np
import pytest

from multiscale_mdp.averaging import (
    KhasminskiiParams,
    a_along,
    estimate_abar,
    estimate_invariant,
    estimate_mixing,
    khasminskii_run,
    log_slope,
    segment_block_deviation,
    solve_averaged_ode,
)
from multiscale_mdp.engine import IntegratorConfig, integrate_frozen_fast, simulate_paths
from multiscale_mdp.model import ConfigurationError, builtin_gauss_ou, zero_noise_variant
from multiscale_mdp.rng import Streams
from multiscale_mdp.segment import InitialDatum, Segment
from multiscale_mdp.stats import batch_means, mean_ci, wilson

# x(1) for x' = -x(t) - 0.25 x(t - 1), x = 1 on [-1, 0]: on [0, 1] the delay
# term is the constant 0.25, so x(1) = 1.25 e^{-1} - 0.25
DELAY_ODE_X1 = 1.25 * math.exp(-1.0) - 0.25

ONE = Segment.constant([1.0], 1.0)


# ---- statistics -----------------------------------------------------------


def test_wilson_reference_values():
    lo, hi = wilson(5, 10)
    assert lo == pytest.approx(0.236593, abs=1e-6)
    assert hi == pytest.approx(0.763407, abs=1e-6)
    assert wilson(0, 100)[0] == pytest.approx(0.0, abs=1e-15)
    assert wilson(0, 0) == (0.0, 1.0)


def test_mean_ci_and_batch_means():
    m, h = mean_ci([1.0, 2.0, 3.0])
    assert m == 2.0
    assert h == pytest.approx(4.302653 / math.sqrt(3), rel=1e-6)
    bm = batch_means(np.arange(100.0), batches=4)
    assert bm.means[:, 0] == pytest.approx([12.0, 37.0, 62.0, 87.0])
    with pytest.raises(ValueError):
        batch_means(np.arange(3.0), batches=4)


# ---- invariant measure and abar --------------------------------------------


@pytest.mark.parametrize("f1,target", [(1.0, 0.5), (4.0, 0.125)])
def test_invariant_moments(f1, target):
    cs = builtin_gauss_ou(f1_base=f1)
    est = estimate_invariant(cs, ONE, T_run=2000.0, burn_in=10.0, dt=0.001, rng=Streams(0))
    assert est.covariance[0, 0] == pytest.approx(target, rel=0.05)
    assert abs(est.mean[0]) < 3 * est.ci_halfwidth[0] + 1e-3
    assert est.n_effective > 0
    assert np.allclose(est.second_moment, est.second_moment.T)
    assert est.burn_in == pytest.approx(10.0)


def test_invariant_second_moment_bound():
    cs = builtin_gauss_ou()
    est = estimate_invariant(cs, ONE, T_run=100.0, burn_in=None, dt=0.005, rng=Streams(4))
    C = cs.constants.L1 ** 2
    assert est.second_moment[0, 0] <= C * (1 + ONE.sup_norm() ** 2)


def test_abar_estimate_matches_analytic():
    cs = builtin_gauss_ou(kappa=1.0, kappa2=0.25, gamma_coupling=0.5)
    est = estimate_abar(cs, ONE, T_run=40.0, burn_in=5.0, replicas=8, dt=0.005, rng=Streams(2))
    assert abs(est.value[0] + 1.25) <= est.ci[0]
    zero = Segment.constant([0.0], 1.0)
    est0 = estimate_abar(cs, zero, T_run=10.0, burn_in=1.0, replicas=4, dt=0.01, rng=Streams(2))
    assert est0.value[0] == 0.0


def test_abar_lipschitz_on_random_pairs():
    cs = builtin_gauss_ou()
    C = cs.constants.abar_lipschitz
    gen = np.random.default_rng(0)
    for _ in range(50):
        th = np.linspace(-1, 0, 9)
        s1 = Segment.from_nodes(th, gen.uniform(-2, 2, (9, 1)), 1.0)
        s2 = Segment.from_nodes(th, gen.uniform(-2, 2, (9, 1)), 1.0)
        lhs = abs(cs.abar_analytic(s1)[0] - cs.abar_analytic(s2)[0])
        assert lhs <= C * np.max(np.abs(s1.at(th) - s2.at(th))) + 1e-12


def test_a_along_matches_pointwise():
    cs = builtin_gauss_ou(gamma_coupling=0.7)
    zeta = Segment.from_function(lambda t: np.array([1 + t]), 1.0)
    Y = np.linspace(-2, 2, 7)[:, None]
    ref = np.array([cs.a(zeta, y) for y in Y])
    assert np.allclose(a_along(cs, zeta, Y), ref)


def test_mixing_decreases():
    cs = builtin_gauss_ou()
    rows = estimate_mixing(cs, ONE, [1.0], [1.0, 2.0, 4.0, 8.0], 2000, 0.01, Streams(5))
    alphas = [r.alpha_hat for r in rows]
    assert all(b < a for a, b in zip(alphas, alphas[1:]))
    assert log_slope(rows) < 0


def test_mixing_vanishes_without_coupling():
    cs = builtin_gauss_ou(gamma_coupling=0.0)
    rows = estimate_mixing(cs, ONE, [1.0], [1.0, 2.0], 50, 0.01, Streams(5))
    assert max(r.alpha_hat for r in rows) < 1e-24


def test_frozen_contraction():
    cs = builtin_gauss_ou(fast_jumps=False)
    beta1 = 2 * cs.params["f1_base"]  # jump channel off: beta1 = 2 f1
    a = integrate_frozen_fast(cs, ONE, [2.0], 3.0, 0.001, Streams(7))
    b = integrate_frozen_fast(cs, ONE, [-1.0], 3.0, 0.001, Streams(7))
    t = a.grid_times
    gap = np.abs(a.grid_values[:, 0] - b.grid_values[:, 0])
    assert np.all(gap <= 3.0 * np.exp(-beta1 * t / 2) * (1 + 1e-9))


# ---- averaged ODE ----------------------------------------------------------


def _abar_linear(k0, k1):
    return lambda seg: np.array([-k0 * seg.at(0.0)[0] - k1 * seg.at(-seg.tau)[0]])


def test_averaged_ode_closed_forms():
    chi = InitialDatum.constant([1.0])
    p = solve_averaged_ode(_abar_linear(1, 0), chi, 1.0, 1e-4, tau=1.0)
    t = p.grid_times[p.grid_times >= 0]
    assert np.max(np.abs(p.value_at(t)[:, 0] - np.exp(-t))) <= 1e-3
    p = solve_averaged_ode(_abar_linear(0, 1), chi, 1.0, 1e-4, tau=1.0)
    assert np.max(np.abs(p.value_at(t)[:, 0] - (1 - t))) <= 1e-9
    p = solve_averaged_ode(lambda s: np.zeros(1), chi, 1.0, 1e-3, tau=1.0)
    assert np.all(p.right[:, 0] == 1.0)
    p = solve_averaged_ode(_abar_linear(1, 0.25), chi, 1.0, 1e-4, tau=1.0)
    assert p.value_at(1.0)[0] == pytest.approx(DELAY_ODE_X1, abs=1e-4)


def test_averaged_ode_first_order():
    chi = InitialDatum(lambda th: np.array([math.cos(th)]), 1.0)
    fn = _abar_linear(1, 0.25)
    coarse = solve_averaged_ode(fn, chi, 2.0, 2e-3, tau=1.0)
    fine = solve_averaged_ode(fn, chi, 2.0, 1e-3, tau=1.0)
    finer = solve_averaged_ode(fn, chi, 2.0, 5e-4, tau=1.0)
    t = coarse.grid_times
    d1 = np.max(np.abs(coarse.value_at(t) - fine.value_at(t)))
    d2 = np.max(np.abs(fine.value_at(t) - finer.value_at(t)))
    assert d2 / d1 == pytest.approx(0.5, abs=0.05)


# ---- Khasminskii ----------------------------------------------------------


def test_khasminskii_params_guards_and_scales():
    k = KhasminskiiParams()
    eps = 0.01
    assert k.a_eps(eps) == pytest.approx(eps**0.125)
    assert k.b_eps(eps) == pytest.approx(eps**0.75)
    assert k.Delta(eps) == pytest.approx(eps**0.1 * eps**0.25 * math.log(100))
    assert k.R_eps(eps) == pytest.approx(eps ** (-0.125 / 4))
    for bad in (dict(theta=0.4), dict(gamma=0.3), dict(p=0.0), dict(q=3.0)):
        with pytest.raises(ConfigurationError):
            KhasminskiiParams(**bad)


def test_regime_diagnostics():
    k = KhasminskiiParams()
    d = k.regime_diagnostics([1e-2, 1e-3, 1e-6, 1e-9])
    assert d["Delta_monotone"] and d["Delta_over_eps_monotone"]
    # Delta / a^2 = eps^gamma |ln eps|^p turns over at exp(-p/gamma)
    assert d["Delta_over_a2_turning_point"] == pytest.approx(math.exp(-10))
    assert not d["Delta_over_a2_monotone"]
    tiny = k.regime_diagnostics([1e-6, 1e-9, 1e-12])
    assert tiny["Delta_over_a2_monotone"]


def test_segment_block_deviation_brute_force():
    gen = np.random.default_rng(1)
    n_tau, n, block = 5, 17, 4
    xg = np.cumsum(gen.standard_normal(n_tau + n + 1))
    best = 0.0
    for b in range(0, n + 1, block):
        K = min(block, n - b + 1)
        for j in range(b, b + n_tau + 1):
            for lag in range(K):
                if j + lag < len(xg):
                    best = max(best, abs(xg[j + lag] - xg[j]))
    assert segment_block_deviation(xg, n_tau, n, block) == pytest.approx(best)


def test_khasminskii_quiet_system_has_no_deviation():
    cs = zero_noise_variant(builtin_gauss_ou(f1_mod=0.5), slow=True, fast=True)
    cfg = IntegratorConfig(epsilon=0.01, dt=0.001, T=1.0, delay_tau=1.0)
    res = khasminskii_run(cs, cfg, InitialDatum.constant([0.0]), [0.0], None, KhasminskiiParams(), Streams(0))
    assert res.dev_hat_X == 0.0 and res.dev_Y_mean == 0.0 and res.dev_segment == 0.0
    assert res.localized


def test_khasminskii_deviations_bounded_by_block_drift():
    # with a nonzero start the frozen arguments lag by at most one block, so
    # the deviations are of the size of the drift over Delta, not of dt
    cs = zero_noise_variant(builtin_gauss_ou(kappa=0.5, f1_mod=0.5), slow=True, fast=True)
    cfg = IntegratorConfig(epsilon=0.01, dt=0.001, T=1.0, delay_tau=1.0)
    k = KhasminskiiParams()
    res = khasminskii_run(cs, cfg, InitialDatum.constant([1.0]), [1.0], None, k, Streams(0))
    D = k.Delta(0.01)
    assert 0 < res.dev_segment <= 0.75 * D * 1.0 + 10 * cfg.dt
    assert res.dev_hat_X <= D


def test_khasminskii_runs_are_deterministic():
    cs = builtin_gauss_ou(kappa=0.5, f1_mod=0.5)
    cfg = IntegratorConfig(epsilon=0.01, dt=0.001, T=1.0, delay_tau=1.0)
    chi = InitialDatum.constant([1.0])
    runs = [khasminskii_run(cs, cfg, chi, [0.0], None, KhasminskiiParams(), Streams(9, 1)) for _ in range(2)]
    assert runs[0] == runs[1]

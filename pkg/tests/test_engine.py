"""Jump-adapted integration of the full, controlled, averaged and frozen systems."""
import math

import numpy as np
import pytest

from multiscale_mdp.averaging import solve_averaged_ode
from multiscale_mdp.engine import (
    BlowUpError,
    ControlledInputs,
    IntegratorConfig,
    ell,
    integrate_averaged_controlled,
    integrate_controlled,
    integrate_frozen_fast,
    integrate_multiscale,
    simulate_paths,
)
from multiscale_mdp.kernels import COMPILED_AVAILABLE
from multiscale_mdp.levy import ContractError
from multiscale_mdp.model import ConfigurationError, builtin_gauss_ou, zero_noise_variant
from multiscale_mdp.rng import Streams
from multiscale_mdp.segment import InitialDatum, Segment

EPS = 0.01
DT = 0.001


def _quiet(**kw):
    base = builtin_gauss_ou(kappa=1.0, kappa2=0.0, gamma_coupling=0.0, **kw)
    return zero_noise_variant(base, slow=True, fast=True)


def _cfg(**kw):
    args = dict(epsilon=EPS, dt=DT, T=1.0, delay_tau=1.0, seed=3)
    args.update(kw)
    return IntegratorConfig(**args)


def test_config_guards():
    with pytest.raises(ConfigurationError):
        IntegratorConfig(epsilon=0.01, dt=0.005, T=1.0, delay_tau=1.0)
    IntegratorConfig(epsilon=0.01, dt=0.005, T=1.0, delay_tau=1.0, allow_coarse_dt=True)
    with pytest.raises(ConfigurationError):
        IntegratorConfig(epsilon=0.01, dt=0.001, T=1.0005001, delay_tau=1.0)
    with pytest.raises(ConfigurationError):
        IntegratorConfig(epsilon=0.01, dt=0.001, T=-1.0, delay_tau=1.0)


def test_ell():
    assert ell(1.0) == 0.0
    assert ell(0.0) == 1.0
    assert float(ell(math.e)) == pytest.approx(1.0)


def test_noiseless_slow_decay():
    res = integrate_multiscale(_quiet(), _cfg(), InitialDatum.constant([1.0]), [0.0])
    assert res.slow.value_at(1.0)[0] == pytest.approx(math.exp(-1.0), abs=2 * DT)


def test_noiseless_fast_decay():
    res = integrate_multiscale(_quiet(), _cfg(), InitialDatum.constant([0.0]), [1.0])
    assert abs(res.fast.value_at(10 * EPS)[0]) <= math.exp(-10) + DT / EPS


def test_zero_is_equilibrium():
    res = integrate_multiscale(_quiet(), _cfg(), InitialDatum.constant([0.0]), [0.0])
    assert res.slow.sup_norm() == 0.0 and res.fast.sup_norm() == 0.0


def test_controlled_constant_forcing():
    cs = _quiet().with_params(sigma_level=1.0)
    cs = zero_noise_variant(cs, slow=False, fast=True).with_params(jump_scale=0.0)
    # sigma = 1 but the Brownian part is scaled by sqrt(eps); remove it by
    # using a dedicated model without slow diffusion increments is not
    # possible, so compare against the mean over a few paths instead
    ctrl = ControlledInputs(xi=lambda t: np.array([1.0, 0.0]))
    vals = [
        integrate_controlled(cs, _cfg(seed=s), InitialDatum.constant([0.0]), [0.0], ctrl).slow.value_at(1.0)[0]
        for s in range(40)
    ]
    # noise std at T=1 is sqrt(eps / 2 (1 - e^-2)) ~ 0.066; mean of 40 paths has SE ~ 0.0105
    assert np.mean(vals) == pytest.approx(1 - math.exp(-1.0), abs=0.04)


def test_controlled_noiseless_forcing_exact():
    # sigma_level scales both the control drift and the sqrt(eps) noise, so
    # the closed form is checked at an epsilon where the noise is ~2e-3
    cs = zero_noise_variant(builtin_gauss_ou(kappa=1.0, kappa2=0.0, gamma_coupling=0.0), slow=False, fast=True)
    cs = cs.with_params(jump_scale=0.0)
    cfg = IntegratorConfig(epsilon=1e-5, dt=1e-3, T=1.0, delay_tau=1.0, seed=0, allow_coarse_dt=True)
    ctrl = ControlledInputs(xi=lambda t: np.array([1.0, 0.0]))
    res = integrate_controlled(cs, cfg, InitialDatum.constant([0.0]), [0.0], ctrl)
    t = res.slow.grid_times
    t = t[t >= 0]
    err = np.max(np.abs(res.slow.value_at(t)[:, 0] - (1 - np.exp(-t))))
    assert err < 1.5e-2


def test_controlled_with_null_controls_is_bit_identical():
    cs = builtin_gauss_ou()
    chi = InitialDatum.constant([1.0])
    a = integrate_multiscale(cs, _cfg(), chi, [0.2], Streams(9, 4))
    b = integrate_controlled(cs, _cfg(), chi, [0.2], ControlledInputs(), Streams(9, 4))
    assert np.array_equal(a.slow.times, b.slow.times)
    assert np.array_equal(a.slow.right, b.slow.right)
    assert np.array_equal(a.fast.right, b.fast.right)


def test_budget_violation_before_integration():
    ctrl = ControlledInputs(xi=lambda t: np.array([10.0, 0.0]), M_budget=1.0)
    with pytest.raises(ContractError):
        integrate_controlled(builtin_gauss_ou(), _cfg(), InitialDatum.constant([1.0]), [0.0], ctrl)


def test_symmetric_tilt_adds_no_mean_drift():
    # phi = 1 + a psi with constant psi: the tilt only rescales jump rates,
    # whose compensated contribution is odd in the mark and hence zero
    cs = builtin_gauss_ou()
    a = EPS ** 0.125
    ctrl = ControlledInputs(phi=lambda t, z: 1.0 + a * 0.5, phi_max=1.0 + a * 0.5)
    chi = InitialDatum.constant([1.0])
    base = [integrate_multiscale(cs, _cfg(), chi, [0.0], s).slow.value_at(1.0)[0] for s in (Streams(1, i) for i in range(150))]
    tilt = [integrate_controlled(cs, _cfg(), chi, [0.0], ctrl, s).slow.value_at(1.0)[0] for s in (Streams(2, i) for i in range(150))]
    se = math.sqrt(np.var(base) / 150 + np.var(tilt) / 150)
    assert abs(np.mean(base) - np.mean(tilt)) < 4 * se


def test_determinism():
    cs = builtin_gauss_ou()
    chi = InitialDatum.constant([1.0])
    a = integrate_multiscale(cs, _cfg(seed=11), chi, [0.0])
    b = integrate_multiscale(cs, _cfg(seed=11), chi, [0.0])
    assert np.array_equal(a.slow.right, b.slow.right)
    c = integrate_multiscale(cs, _cfg(seed=12), chi, [0.0])
    assert not np.array_equal(a.slow.right, c.slow.right)


def test_generic_path_matches_kernel():
    cs = builtin_gauss_ou(f1_mod=0.5, gamma_coupling=0.5)
    chi = InitialDatum(lambda th: np.array([1.0 + 0.5 * th]), 0.5)
    a = integrate_multiscale(cs, _cfg(), chi, [0.3], Streams(5, 0))
    b = integrate_multiscale(cs, _cfg(), chi, [0.3], Streams(5, 0), force_generic=True)
    assert np.array_equal(a.slow.times, b.slow.times)
    assert np.max(np.abs(a.slow.right - b.slow.right)) < 1e-9
    assert np.max(np.abs(a.fast.right - b.fast.right)) < 1e-9


@pytest.mark.skipif(not COMPILED_AVAILABLE, reason="compiled kernels not built")
def test_backends_agree():
    cs = builtin_gauss_ou(f1_mod=0.5)
    chi = InitialDatum.constant([1.0])
    a = integrate_multiscale(cs, _cfg(), chi, [0.0], Streams(6, 1), backend="compiled")
    b = integrate_multiscale(cs, _cfg(), chi, [0.0], Streams(6, 1), backend="python")
    assert np.max(np.abs(a.slow.right - b.slow.right)) < 1e-12
    assert np.max(np.abs(a.fast.right - b.fast.right)) < 1e-12
    zeta = Segment.constant([1.0], 1.0)
    fa = integrate_frozen_fast(cs, zeta, [1.0], 2.0, 0.01, Streams(6, 2), backend="compiled")
    fb = integrate_frozen_fast(cs, zeta, [1.0], 2.0, 0.01, Streams(6, 2), backend="python")
    assert np.max(np.abs(fa.right - fb.right)) < 1e-12


def test_blow_up_reports_last_time():
    cs = builtin_gauss_ou(kappa=-2000.0, kappa2=0.0, gamma_coupling=0.0)
    with pytest.raises(BlowUpError) as info:
        integrate_multiscale(cs, _cfg(), InitialDatum.constant([1.0]), [0.0])
    assert 0.0 <= info.value.last_time < 1.0


def test_slow_variance_scaling():
    cs = builtin_gauss_ou(kappa=0.0, kappa2=0.0, gamma_coupling=0.0, jump_scale=0.0, fast_jumps=False)
    cfg = _cfg()
    chi = InitialDatum.constant([0.0])
    n = 10_000
    xs = np.array(
        simulate_paths(lambda s: integrate_multiscale(cs, cfg, chi, [0.0], s).slow.value_at(1.0)[0], 21, n)
    )
    var = float(np.var(xs, ddof=1))
    se = var * math.sqrt(2.0 / (n - 1))
    assert abs(var - EPS * 1.0) < 3 * se


def test_averaged_matches_ode_bit_for_bit():
    cs = _quiet()
    chi = InitialDatum(lambda th: np.array([np.cos(th)]), 1.0)
    res = integrate_averaged_controlled(cs, _cfg(), chi)
    ode = solve_averaged_ode(cs.abar_analytic, chi, 1.0, DT, tau=1.0)
    assert np.array_equal(res.slow.times, ode.times)
    assert np.array_equal(res.slow.right, ode.right)


def test_averaged_noiseless_closed_form():
    res = integrate_averaged_controlled(_quiet(), _cfg(), InitialDatum.constant([1.0]))
    assert res.slow.value_at(1.0)[0] == pytest.approx(math.exp(-1.0), abs=2 * DT)


def test_averaged_noise_shrinks_with_epsilon():
    # diffusion only: the jump channel at eps = 1e-4 would put 10^4 events
    # on every path without changing the sqrt(eps) picture
    cs = builtin_gauss_ou(kappa=1.0, kappa2=0.0, gamma_coupling=0.0, jump_scale=0.0)
    chi = InitialDatum.constant([1.0])
    quiet = solve_averaged_ode(cs.abar_analytic, chi, 1.0, 1e-3, tau=1.0)
    t = quiet.grid_times

    def dev(eps, s):
        cfg = IntegratorConfig(epsilon=eps, dt=1e-3, T=1.0, delay_tau=1.0, allow_coarse_dt=True)
        p = integrate_averaged_controlled(cs, cfg, chi, rng=s).slow
        return float(np.max(np.abs(p.value_at(t) - quiet.value_at(t))))

    small = np.array(simulate_paths(lambda s: dev(1e-4, s), 1, 200))
    big = np.array(simulate_paths(lambda s: dev(1e-2, s), 1, 200))
    assert np.mean(small < 0.05) >= 0.95
    assert np.median(small) < np.median(big)


def test_averaged_needs_abar():
    import dataclasses

    cs = dataclasses.replace(builtin_gauss_ou(), abar_analytic=None)
    with pytest.raises(ConfigurationError):
        integrate_averaged_controlled(cs, _cfg(), InitialDatum.constant([1.0]))


def test_frozen_fast_noiseless():
    cs = builtin_gauss_ou(fast_diffusion=False, fast_jumps=False, f1_base=2.0)
    p = integrate_frozen_fast(cs, Segment.constant([1.0], 1.0), [1.0], 2.0, 1e-4)
    assert p.value_at(1.0)[0] == pytest.approx(math.exp(-2.0), abs=1e-4)


def test_frozen_fast_variance_without_jumps():
    cs = builtin_gauss_ou(fast_jumps=False)
    zeta = Segment.constant([1.0], 1.0)
    n = 10_000
    ys = np.array(simulate_paths(lambda s: integrate_frozen_fast(cs, zeta, [0.0], 5.0, 0.005, s).value_at(5.0)[0], 2, n))
    var = float(np.var(ys, ddof=1))
    target = 0.5 * (1 - math.exp(-10.0))
    assert abs(var - target) < 3 * var * math.sqrt(2.0 / (n - 1))


def test_frozen_fast_stationary_start():
    cs = builtin_gauss_ou()
    zeta = Segment.constant([1.0], 1.0)
    n = 4000

    def run(s):
        y0 = cs.invariant_sampler(zeta, s.channel("invariant"))
        p = integrate_frozen_fast(cs, zeta, y0, 2.0, 0.005, s)
        return [p.value_at(0.0)[0], p.value_at(1.0)[0], p.value_at(2.0)[0]]

    ys = np.array(simulate_paths(run, 8, n))
    var = ys.var(axis=0, ddof=1)
    se = var * math.sqrt(2.0 / (n - 1))
    assert np.all(np.abs(var - var[0]) < 3 * np.sqrt(se**2 + se[0] ** 2))


def test_simulate_paths_order_independent_of_workers():
    fn = lambda s: s.channel("probe").standard_normal()  # noqa: E731
    assert simulate_paths(fn, 3, 8, workers=1) == simulate_paths(fn, 3, 8, workers=4)


def test_backend_selection(monkeypatch):
    from multiscale_mdp import _pykernels, kernels

    monkeypatch.setenv("MULTISCALE_MDP_PURE_PYTHON", "1")
    assert kernels.get_backend() is _pykernels and kernels.backend_name() == "python"
    monkeypatch.setenv("MULTISCALE_MDP_PURE_PYTHON", "0")
    expected = "compiled" if COMPILED_AVAILABLE else "python"
    assert kernels.backend_name() == expected
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")

"""Coefficient sets, the built-in model and the condition validators."""
import dataclasses
import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from multiscale_mdp.model import (
    CONDITION_IDS,
    ConfigurationError,
    builtin_gauss_ou,
    condition_table,
    dabar,
    validate_conditions,
    zero_noise_variant,
)
from multiscale_mdp.segment import Segment

# analytic constants of the default built-in on the default probe box
DEFAULT_L = 2.25
DEFAULT_BETA1 = 0.7467
DEFAULT_LAMBDA = 41.41


def _reports(cs, probes=400, seed=0):
    return {r.condition_id: r for r in validate_conditions(cs, probes, np.random.default_rng(seed))}


def _density_moment(f1, g, power):
    # the stated invariant density sqrt(f1/(pi g^2)) exp(-f1 y^2 / g^2)
    c = math.sqrt(f1 / (math.pi * g * g))
    return quad(lambda y: y**power * c * math.exp(-f1 * y * y / (g * g)), -np.inf, np.inf)[0]


def test_invariant_variance_oracle():
    assert _density_moment(1.0, 1.0, 2) == pytest.approx(0.5, abs=1e-12)
    assert _density_moment(4.0, 1.0, 2) == pytest.approx(0.125, abs=1e-12)
    cs = builtin_gauss_ou(f1_base=1.0, g_level=1.0)
    gen = np.random.default_rng(1)
    draws = cs.invariant_sampler(Segment.constant([0.3], 1.0), gen, 200_000)
    assert float(np.var(draws)) == pytest.approx(0.5, rel=0.01)


def test_abar_against_density():
    cs = builtin_gauss_ou(kappa=1.0, kappa2=0.0, gamma_coupling=0.5)
    zeta = Segment.constant([1.0], 1.0)
    c = math.sqrt(1.0 / math.pi)
    val = quad(lambda y: cs.a(zeta, [y])[0] * c * math.exp(-y * y), -np.inf, np.inf)[0]
    assert val == pytest.approx(-1.0, abs=1e-10)
    assert cs.abar_analytic(zeta)[0] == pytest.approx(-1.0)


def test_a_vanishes_on_zero_segment():
    cs = builtin_gauss_ou()
    zero = Segment.constant([0.0], 1.0)
    for y in np.linspace(-5, 5, 11):
        assert cs.a(zero, [y])[0] == 0.0


def test_declared_constants():
    K = builtin_gauss_ou().constants
    assert K.L == pytest.approx(DEFAULT_L)
    assert K.beta1 == pytest.approx(DEFAULT_BETA1, abs=1e-4)
    assert K.Lambda == pytest.approx(DEFAULT_LAMBDA, abs=1e-2)


def test_builtin_argument_errors():
    with pytest.raises(ValueError):
        builtin_gauss_ou(f1_base=0.0)
    with pytest.raises(ValueError):
        builtin_gauss_ou(g_level=-1.0)
    with pytest.raises(ConfigurationError):
        builtin_gauss_ou(unknown=1.0)


def test_validator_on_builtin():
    reps = _reports(builtin_gauss_ou())
    assert list(reps) == list(CONDITION_IDS)
    for cid in ("Lipschitz", "SublinearGrowth", "InitDelayLipschitz", "Dissipativity_fLip",
                "Dissipativity_cross", "GBound", "HBound"):
        assert reps[cid].passed, condition_table(list(reps.values()))
    # two structural reds of the built-in, kept visible rather than hidden:
    # the delay term cannot be dominated by the instantaneous one, and the
    # fast noise is positive where the dissipativity bound is zero
    assert not reps["Dissipativity_a"].passed
    assert not reps["Dissipativity_f"].passed
    for r in reps.values():
        assert (r.worst_ratio <= 1) == r.passed
        json.loads(r.witness)


def test_gbound_fails_for_unbounded_g():
    cs = builtin_gauss_ou()
    cs = dataclasses.replace(
        cs,
        g=lambda seg, y: np.array([[float(y[0])]]),
        constants=dataclasses.replace(cs.constants, Lambda=1.0),
        kernel=None,
    )
    rep = _reports(cs)["GBound"]
    assert not rep.passed
    w = json.loads(rep.witness)
    assert abs(w["y"][0]) > 1.0


@pytest.mark.parametrize("beta1,expected", [(0.0, True), (0.5, False)])
def test_zero_drift_dissipativity(beta1, expected):
    cs = builtin_gauss_ou()
    cs = dataclasses.replace(
        cs,
        a=lambda seg, y: np.zeros(1),
        constants=dataclasses.replace(cs.constants, beta1=beta1),
        kernel=None,
    )
    assert _reports(cs)["Dissipativity_a"].passed is expected


def test_nan_never_passes():
    cs = builtin_gauss_ou()
    cs = dataclasses.replace(cs, f=lambda seg, y: np.array([math.nan]), kernel=None)
    reps = _reports(cs)
    assert not reps["Lipschitz"].passed
    assert not reps["Dissipativity_cross"].passed


def test_throwing_coefficient_is_reported():
    cs = builtin_gauss_ou()

    def bad(seg, y):
        raise RuntimeError("boom")

    cs = dataclasses.replace(cs, sigma=lambda seg: bad(seg, None), kernel=None)
    reps = _reports(cs)
    assert not reps["Lipschitz"].passed
    assert "boom" in reps["Lipschitz"].witness or "deterministic" in reps["Lipschitz"].witness


def test_probe_minimum():
    with pytest.raises(ValueError):
        validate_conditions(builtin_gauss_ou(), 10, np.random.default_rng(0))


def test_dabar_analytic_and_fd():
    cs = builtin_gauss_ou(kappa=1.0, kappa2=0.25)
    base = Segment.from_function(lambda th: np.array([np.cos(th)]), 1.0)
    eta = Segment.from_function(lambda th: np.array([1.0 + th]), 1.0)
    exact = -1.0 * 1.0 - 0.25 * 0.0
    assert dabar(cs, base, eta)[0] == pytest.approx(exact)
    fd = dabar(cs, base, eta, abar=cs.abar_analytic)
    assert fd[0] == pytest.approx(exact, abs=1e-8)
    assert dabar(cs, base, Segment.constant([0.0], 1.0), abar=cs.abar_analytic)[0] == 0.0
    two = eta.combine(eta, 2.0, 0.0)
    assert dabar(cs, base, two)[0] == pytest.approx(2 * dabar(cs, base, eta)[0])


def test_dabar_missing_evaluator():
    cs = dataclasses.replace(builtin_gauss_ou(), abar_analytic=None, dabar_analytic=None)
    seg = Segment.constant([1.0], 1.0)
    with pytest.raises(ConfigurationError):
        dabar(cs, seg, seg)


def test_zero_noise_variant():
    cs = zero_noise_variant(builtin_gauss_ou(), slow=True, fast=False)
    seg = Segment.constant([1.0], 1.0)
    assert cs.sigma(seg)[0, 0] == 0.0
    assert np.all(cs.c(seg, np.ones((3, 1))) == 0.0)
    assert cs.g(seg, [0.0])[0, 0] == 1.0

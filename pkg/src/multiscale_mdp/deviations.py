"""Skeleton equation, moderate-deviations rate functional and the Monte
Carlo sweep probing the deviation speed.

Controls live on the uniform grid ``t_i = i dt`` of ``[0, T]``.  The mark
control is kept either in representer form ``g(s, z) = c(xbar_s, z)^T
lambda(s)`` or as raw values on a fixed set of mark quadrature nodes.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import trapezoid

from .averaging import KhasminskiiParams, averaged_recursion, solve_averaged_ode
from .engine import IntegratorConfig, integrate_multiscale, simulate_paths
from .levy import nu_integral
from .model import CoefficientSet, ConfigurationError, dabar
from .rng import Streams, stream
from .segment import InitialDatum, SamplePath, Segment, SegmentShapeError, grid_steps
from .stats import wilson

RANK_TOL = 1e-10
RESIDUAL_TOL = 1e-8


class DomainError(ValueError):
    """Target path violates the skeleton's initial condition."""


# --------------------------------------------------------------------------
# controls


@dataclass
class ControlPair:
    """Deterministic control on the grid ``i * dt``, ``i = 0..n``.

    ``f`` has shape ``(n+1, d)``.  The mark control is given either by
    ``lam`` (representer form, shape ``(n+1, d)``) or by ``g_raw`` values of
    shape ``(n+1, m)`` at mark nodes ``nodes`` with ν-weights ``weights``.
    """

    dt: float
    f: np.ndarray
    lam: Optional[np.ndarray] = None
    g_raw: Optional[np.ndarray] = None
    nodes: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.f = np.asarray(self.f, float)
        if self.f.ndim == 1:
            self.f = self.f[:, None]
        if (self.lam is None) == (self.g_raw is None):
            raise ValueError("give exactly one of lam (representer) or g_raw")
        if self.lam is not None:
            self.lam = np.asarray(self.lam, float).reshape(self.f.shape)
        else:
            self.g_raw = np.asarray(self.g_raw, float)
            if self.nodes is None or self.weights is None:
                raise ValueError("raw mark controls need nodes and weights")
            if self.g_raw.shape != (len(self.f), len(self.weights)):
                raise SegmentShapeError("g_raw must have shape (n_time, n_nodes)")

    @property
    def n_time(self) -> int:
        return len(self.f)

    @property
    def is_representer(self) -> bool:
        return self.lam is not None

    @classmethod
    def zero(cls, n_time: int, d: int, dt: float) -> "ControlPair":
        return cls(dt, np.zeros((n_time, d)), lam=np.zeros((n_time, d)))

    def jump_forcing(self, cs: CoefficientSet, xbar: SamplePath, i: int, gram=None) -> np.ndarray:
        """``int c(xbar_{t_i}, z) g(t_i, z) nu(dz)``."""
        seg = Segment(xbar, i * self.dt)
        if self.lam is not None:
            G = gram_matrix(cs, seg) if gram is None else gram
            return G @ self.lam[i]
        C = np.asarray(cs.c(seg, self.nodes), float)  # (m, d)
        return C.T @ (self.weights * self.g_raw[i])

    def cost(self, cs: CoefficientSet, xbar: SamplePath, grams=None) -> float:
        """½(∫|f|² ds + ∫∫|g|² ν(dz) ds) by the trapezoid rule."""
        t = np.arange(self.n_time) * self.dt
        fsq = np.sum(self.f**2, axis=1)
        if self.lam is not None:
            grams = grams if grams is not None else _grams(cs, xbar, self.n_time, self.dt)
            gsq = np.einsum("ni,nij,nj->n", self.lam, grams, self.lam)
        else:
            gsq = self.g_raw**2 @ self.weights
        return 0.5 * float(trapezoid(fsq + gsq, t))

    def to_raw(self, cs: CoefficientSet, xbar: SamplePath, nodes, weights) -> "ControlPair":
        """Evaluate a representer control on mark nodes."""
        if self.lam is None:
            return self
        g = np.empty((self.n_time, len(weights)))
        for i in range(self.n_time):
            C = np.asarray(cs.c(Segment(xbar, i * self.dt), nodes), float)
            g[i] = C @ self.lam[i]
        return ControlPair(self.dt, self.f.copy(), g_raw=g, nodes=np.asarray(nodes), weights=np.asarray(weights))


@dataclass
class RateResult:
    value: float
    optimal_control: Optional[ControlPair]
    residual_norm: float
    diagnostics: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# Gram matrix and skeleton


def gram_matrix(cs: CoefficientSet, zeta: Segment, method: str = "adaptive") -> np.ndarray:
    """``G(zeta) = int c(zeta, z) c(zeta, z)^T nu(dz)``.

    ``method="adaptive"`` uses :func:`nu_integral`; ``"rule"`` a fixed
    64-node quadrature rule of the measure (much cheaper on long grids).
    """
    d = cs.d
    if method == "rule":
        Z, W = cs.levy.quadrature_rule(64)
        C = np.asarray(cs.c(zeta, Z), float)
        G = (C * W[:, None]).T @ C
    elif method == "adaptive":

        def w(z):
            v = np.asarray(cs.c(zeta, np.asarray(z, float).reshape(1, -1)), float)[0]
            return np.outer(v, v).ravel()

        G = np.asarray(nu_integral(cs.levy, w).value, float).reshape(d, d)
    else:
        raise ValueError(f"unknown method {method!r}")
    return 0.5 * (G + G.T)


def _grams(cs: CoefficientSet, xbar: SamplePath, n_time: int, dt: float, method: str = "rule") -> np.ndarray:
    return np.array([gram_matrix(cs, Segment(xbar, i * dt), method) for i in range(n_time)])


def _check_xbar(xbar: SamplePath, n_time: int, dt: float):
    if abs(xbar.dt - dt) > 1e-12 * dt:
        raise SegmentShapeError(f"xbar grid step {xbar.dt} differs from dt={dt}")
    if xbar.t1 < (n_time - 1) * dt - 1e-9:
        raise SegmentShapeError("xbar does not cover the control horizon")


def _dabar_at(cs: CoefficientSet, xbar: SamplePath, t: float, eta_seg: Segment) -> np.ndarray:
    return np.asarray(dabar(cs, Segment(xbar, t), eta_seg), float)


def solve_skeleton(
    cs: CoefficientSet,
    xbar: SamplePath,
    ctrl: ControlPair,
    dt: float,
    *,
    gram_method: str = "rule",
) -> SamplePath:
    """Explicit Euler for the skeleton equation with zero initial segment.

    ``eta' = Dabar(xbar_t) eta_t + sigma(xbar_t) f(t) + int c(xbar_t, z) g(t, z) nu(dz)``
    on the grid of ``ctrl``; the segment argument is handled by the same
    method-of-steps recursion as the averaged ODE.
    """
    if abs(ctrl.dt - dt) > 1e-12 * dt:
        raise SegmentShapeError("control grid step differs from dt")
    _check_xbar(xbar, ctrl.n_time, dt)
    if ctrl.f.shape[1] != cs.d:
        raise SegmentShapeError("control dimension differs from the model")
    n = ctrl.n_time - 1
    tau = cs.tau
    n_tau = grid_steps(tau, dt)
    forcing = np.empty((n + 1, cs.d))
    for i in range(n + 1):
        seg = Segment(xbar, i * dt)
        sig = np.asarray(cs.sigma(seg), float)
        G = gram_matrix(cs, seg, gram_method) if ctrl.is_representer else None
        forcing[i] = sig @ ctrl.f[i] + ctrl.jump_forcing(cs, xbar, i, G)

    def rhs(eta_seg: Segment):
        i = int(round(eta_seg.anchor / dt))
        return _dabar_at(cs, xbar, eta_seg.anchor, eta_seg) + forcing[i]

    t = np.arange(-n_tau, n + 1, dtype=np.int64) * dt
    zero = InitialDatum.constant(np.zeros(cs.d))
    path, _ = averaged_recursion(rhs, zero, tau, dt, t, np.zeros(len(t), np.int8), n_tau)
    return path


# --------------------------------------------------------------------------
# rate function


def _target_grid(eta: SamplePath, dt: float, tol: float = 1e-12):
    """Grid values of ``eta`` on [0, T] after checking it vanishes on [-tau, 0]."""
    if abs(eta.dt - dt) > 1e-12 * dt:
        raise SegmentShapeError(f"eta grid step {eta.dt} differs from dt={dt}")
    t = eta.grid_times
    v = eta.grid_values
    init = t <= 1e-12
    scale = max(1.0, float(np.max(np.abs(v))) if v.size else 1.0)
    if np.any(np.abs(v[init]) > tol * scale):
        raise DomainError("eta must vanish on the initial segment [-tau, 0]")
    return t[~init | (np.abs(t) <= 1e-12)], v[~init | (np.abs(t) <= 1e-12)]


def _required_forcing(cs: CoefficientSet, xbar: SamplePath, eta: SamplePath, dt: float):
    """Forcing ``w = eta' - Dabar(xbar) eta`` on the grid of [0, T].

    ``eta'`` uses symmetric differences inside and one-sided ones at the ends.
    """
    t, v = _target_grid(eta, dt)
    _check_xbar(xbar, len(t), dt)
    deta = np.gradient(v, dt, axis=0, edge_order=1)
    w = np.empty_like(deta)
    for i, ti in enumerate(t):
        w[i] = deta[i] - _dabar_at(cs, xbar, float(ti), Segment(eta, float(ti)))
    return t, w


def rate_function(
    cs: CoefficientSet,
    xbar: SamplePath,
    eta: SamplePath,
    dt: float,
    *,
    gram_method: str = "adaptive",
) -> RateResult:
    """Pointwise minimum-norm evaluation of the rate functional.

    For each grid time ``Sigma = sigma sigma^T + G(xbar_s)`` and
    ``lambda = Sigma^+ w``; the optimal control is ``f = sigma^T lambda``,
    ``g = c^T lambda`` and the value is ½∫ wᵀ Sigma⁺ w ds.  The value is
    +inf when ``w`` leaves the range of ``Sigma`` by more than
    ``RESIDUAL_TOL`` (relative).
    """
    t, w = _required_forcing(cs, xbar, eta, dt)
    n, d = w.shape
    lam = np.zeros((n, d))
    f = np.zeros((n, d))
    quad = np.zeros(n)
    worst = 0.0
    pinv_err = 0.0
    for i in range(n):
        seg = Segment(xbar, float(t[i]))
        sig = np.asarray(cs.sigma(seg), float)
        S = sig @ sig.T + gram_matrix(cs, seg, gram_method)
        Sp = np.linalg.pinv(S, rcond=RANK_TOL, hermitian=True)
        pinv_err = max(pinv_err, float(np.max(np.abs(S @ Sp @ S - S))) / max(1.0, float(np.max(np.abs(S)))))
        li = Sp @ w[i]
        res = w[i] - S @ li
        wn = float(np.linalg.norm(w[i]))
        if wn > 0:
            worst = max(worst, float(np.linalg.norm(res)) / wn)
        lam[i] = li
        f[i] = sig.T @ li
        quad[i] = float(w[i] @ li)
    diag = {"pinv_consistency": pinv_err, "n_time": n}
    if worst > RESIDUAL_TOL:
        return RateResult(math.inf, None, worst, diag)
    value = 0.5 * float(trapezoid(quad, t))
    return RateResult(value, ControlPair(dt, f, lam=lam), worst, diag)


def rate_function_bruteforce(
    cs: CoefficientSet,
    xbar: SamplePath,
    eta: SamplePath,
    dt: float,
    n_mark_nodes: int = 32,
    cond_limit: float = 1e12,
) -> RateResult:
    """Global equality-constrained least-cost problem on time x mark nodes.

    Unknowns are ``f(t_i)`` and ``g(t_i, z_j)`` at ``n_mark_nodes``
    quadrature nodes.  The discrete cost is ``½ u^T P u`` with trapezoid
    weights in time and quadrature weights in the marks; the constraints
    ``A u = w`` reproduce the required forcing at every grid time.  The
    minimiser ``u = P^-1 A^T (A P^-1 A^T)^+ w`` is formed with a single
    global pseudo-inverse.  A condition number above ``cond_limit`` is
    reported with a warning and in ``diagnostics``.
    """
    if grid_steps(eta.t1, dt) + 1 > 501:
        raise ValueError("brute force is meant for n_time <= 500")
    if n_mark_nodes > 64:
        raise ValueError("n_mark_nodes must not exceed 64")
    t, w = _required_forcing(cs, xbar, eta, dt)
    n, d = w.shape
    Z, Wz = cs.levy.quadrature_rule(n_mark_nodes)
    m = len(Wz)
    tw = np.full(n, dt)
    tw[0] = tw[-1] = dt / 2
    nu_ = d + m
    A = np.zeros((n * d, n * nu_))
    pdiag = np.zeros(n * nu_)
    for i in range(n):
        seg = Segment(xbar, float(t[i]))
        sig = np.asarray(cs.sigma(seg), float)
        C = np.asarray(cs.c(seg, Z), float)  # (m, d)
        rows = slice(i * d, (i + 1) * d)
        cols = i * nu_
        A[rows, cols : cols + d] = sig
        A[rows, cols + d : cols + nu_] = (C * Wz[:, None]).T
        pdiag[cols : cols + d] = tw[i]
        pdiag[cols + d : cols + nu_] = tw[i] * Wz
    Pinv = np.where(pdiag > 0, 1.0 / np.where(pdiag > 0, pdiag, 1.0), 0.0)
    M = (A * Pinv) @ A.T
    M = 0.5 * (M + M.T)
    sv = np.linalg.svd(M, compute_uv=False)
    kept = sv[sv > RANK_TOL * sv[0]] if sv.size and sv[0] > 0 else sv[:0]
    cond = float(kept[0] / kept[-1]) if kept.size else math.inf
    diag = {"condition_number": cond, "rank": int(kept.size), "n_time": n, "n_mark_nodes": m}
    if cond > cond_limit:
        warnings.warn(f"brute-force system is ill-conditioned (cond={cond:.3g})", RuntimeWarning)
    Mp = np.linalg.pinv(M, rcond=RANK_TOL, hermitian=True)
    wv = w.ravel()
    mu = Mp @ wv
    res = wv - M @ mu
    wn = float(np.linalg.norm(wv))
    resid = float(np.linalg.norm(res)) / wn if wn > 0 else 0.0
    if resid > RESIDUAL_TOL:
        return RateResult(math.inf, None, resid, diag)
    u = Pinv * (A.T @ mu)
    value = 0.5 * float(u @ (pdiag * u))
    U = u.reshape(n, nu_)
    ctrl = ControlPair(dt, U[:, :d], g_raw=U[:, d:], nodes=Z, weights=Wz)
    return RateResult(value, ctrl, resid, diag)


def recover_optimal_control(result: RateResult) -> ControlPair:
    """The minimising control of a finite rate evaluation."""
    if not math.isfinite(result.value) or result.optimal_control is None:
        raise ValueError("the rate is infinite: no control reaches the target")
    return result.optimal_control


def path_from_function(fn: Callable[[float], float], T: float, dt: float, tau: float, d: int = 1) -> SamplePath:
    """Grid path equal to ``fn`` on [0, T] and to zero on [-tau, 0)."""
    n_tau, n = grid_steps(tau, dt), grid_steps(T, dt)
    t = np.arange(-n_tau, n + 1, dtype=np.int64) * dt
    vals = np.zeros((len(t), d))
    for j in range(n_tau, len(t)):
        vals[j] = np.atleast_1d(fn(float(t[j])))
    return SamplePath(t, vals, vals.copy(), tau=tau, dt=dt)


# --------------------------------------------------------------------------
# Monte Carlo sweep


@dataclass
class MdpSweepRow:
    epsilon: float
    a_eps: float
    p_hat: float
    ci_lo: float
    ci_hi: float
    eps_theta_log_p: float
    avg_p_hat: float
    censored: bool
    avg_ci_lo: float = math.nan
    avg_ci_hi: float = math.nan
    n_paths: int = 0
    dt: float = math.nan

    CSV_HEADER = "epsilon,a_eps,p_hat,ci_lo,ci_hi,eps_theta_log_p,avg_p_hat,censored"

    def csv_row(self) -> str:
        vals = [self.epsilon, self.a_eps, self.p_hat, self.ci_lo, self.ci_hi, self.eps_theta_log_p, self.avg_p_hat]
        return ",".join(repr(float(v)) for v in vals) + f",{int(self.censored)}"


def _dt_for(dt_rule: Union[float, Callable[[float], float]], eps: float) -> float:
    if callable(dt_rule):
        return float(dt_rule(eps))
    return eps / float(dt_rule)


def sup_deviation(path: SamplePath, ref: SamplePath, t_from: float = 0.0) -> float:
    """sup over [t_from, T] of |path - ref|, left limits included at jumps.

    ``ref`` is continuous and piecewise linear on its grid.
    """
    t = path.times
    keep = t >= t_from - 1e-12
    tt = t[keep]
    rt = ref.grid_times
    rv = ref.grid_values
    best = 0.0
    for j in range(path.dim):
        r = np.interp(tt, rt, rv[:, j])
        best = max(best, float(np.max(np.abs(path.right[keep, j] - r))), float(np.max(np.abs(path.left[keep, j] - r))))
    return best


def mdp_sweep(
    cs: CoefficientSet,
    chi: InitialDatum,
    y0,
    eps_grid: Sequence[float],
    delta: float,
    params: KhasminskiiParams,
    n_paths: int,
    dt_rule: Union[float, Callable[[float], float]] = 20.0,
    rng=None,
    *,
    T: float = 1.0,
    delta_avg: float = 0.2,
    workers: int = 1,
    pilot_paths: int = 200,
) -> list[MdpSweepRow]:
    """Crude Monte Carlo for ``P(sup |Z^eps| > delta)`` with ``Z = (X - xbar)/a(eps)``.

    ``dt_rule`` is either a callable ``eps -> dt`` or a ratio ``r`` giving
    ``dt = eps / r``.  Each epsilon uses ``Streams(seed, i)`` for path
    ``i``, so the same noise indices are reused across epsilon.  The
    averaging column is ``P(sup |X - xbar| > delta_avg)``.  Rows with no
    exceedance are flagged ``censored`` and keep only the upper CI bound.
    A pilot run at the largest epsilon warns when fewer than ``10 /
    n_paths`` exceedances are expected.
    """
    eps_grid = [float(e) for e in eps_grid]
    if any(b >= a for a, b in zip(eps_grid, eps_grid[1:])):
        raise ConfigurationError("eps_grid must be strictly decreasing")
    if n_paths < 1 or delta <= 0:
        raise ConfigurationError("n_paths and delta must be positive")
    seed = rng.seed if isinstance(rng, Streams) else (0 if rng is None else int(rng))

    def deviations_at(eps: float, count: int, run_seed: int):
        dt = _dt_for(dt_rule, eps)
        cfg = IntegratorConfig(epsilon=eps, dt=dt, T=T, delay_tau=cs.tau, seed=run_seed)
        xbar = solve_averaged_ode(cs.abar_analytic, chi, T, dt, tau=cs.tau)

        def one(s: Streams):
            return sup_deviation(integrate_multiscale(cs, cfg, chi, y0, s).slow, xbar)

        return dt, np.array(simulate_paths(one, run_seed, count, workers))

    if cs.abar_analytic is None:
        raise ConfigurationError("mdp_sweep needs an averaged coefficient")
    if pilot_paths > 0:
        pilot_seed = int(stream(seed, "pilot").integers(2**62))
        _, sup = deviations_at(eps_grid[0], min(pilot_paths, n_paths), pilot_seed)
        p_pilot = float(np.mean(sup / params.a_eps(eps_grid[0]) > delta))
        if p_pilot < 10.0 / n_paths:
            warnings.warn(
                f"pilot estimate p={p_pilot:.3g} at eps={eps_grid[0]} is below 10/n_paths; rows will be noisy",
                RuntimeWarning,
            )
    rows = []
    for eps in eps_grid:
        dt, sup = deviations_at(eps, n_paths, seed)
        a = params.a_eps(eps)
        hits = int(np.sum(sup / a > delta))
        avg_hits = int(np.sum(sup > delta_avg))
        lo, hi = wilson(hits, n_paths)
        alo, ahi = wilson(avg_hits, n_paths)
        p = hits / n_paths
        censored = hits == 0
        rows.append(
            MdpSweepRow(
                epsilon=eps,
                a_eps=a,
                p_hat=p,
                ci_lo=0.0 if censored else lo,
                ci_hi=hi,
                eps_theta_log_p=math.nan if censored else params.b_eps(eps) * math.log(p),
                avg_p_hat=avg_hits / n_paths,
                censored=censored,
                avg_ci_lo=alo,
                avg_ci_hi=ahi,
                n_paths=n_paths,
                dt=dt,
            )
        )
    return rows

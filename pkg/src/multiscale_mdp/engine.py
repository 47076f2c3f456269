"""Jump-adapted Euler-Maruyama integration of the slow/fast system.

The time grid is the uniform ``dt`` grid on [-tau, T] merged with the jump
times of the Poisson measure of intensity ``ds x (1/eps) nu``.  Brownian
increments between consecutive events are exact Gaussians with the elapsed
variance.  Standard normals come from the ``bm_slow``/``bm_fast`` channels,
one per sub-interval, so every auxiliary process driven by the same
:class:`~multiscale_mdp.rng.Streams` sees identical noise.

The built-in model runs through the compiled kernel (or its Python twin);
any other :class:`CoefficientSet` goes through :func:`_generic_path`, a
direct transcription of the same scheme on top of segment views.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid

from . import kernels
from .levy import ContractError, JumpList, sample_jumps, thin_controlled
from .model import CoefficientSet, ConfigurationError
from .rng import Streams
from .segment import InitialDatum, SamplePath, Segment, grid_steps


class BlowUpError(ArithmeticError):
    """State became non-finite; ``last_time`` is the last finite event time."""

    def __init__(self, message: str, last_time: float):
        super().__init__(message)
        self.last_time = last_time


@dataclass(frozen=True)
class IntegratorConfig:
    epsilon: float
    dt: float
    T: float
    delay_tau: float
    seed: int = 0
    localization_radius: Optional[float] = None
    allow_coarse_dt: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not self.T > 0:
            raise ConfigurationError("T must be positive")
        if not self.delay_tau > 0:
            raise ConfigurationError("delay_tau must be positive")
        if self.dt > self.epsilon / 10 * (1 + 1e-12) and not self.allow_coarse_dt:
            raise ConfigurationError(
                f"dt={self.dt} exceeds epsilon/10={self.epsilon / 10}; "
                "set allow_coarse_dt to override"
            )
        try:
            grid_steps(self.T, self.dt)
            grid_steps(self.delay_tau, self.dt)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    @property
    def n_steps(self) -> int:
        return grid_steps(self.T, self.dt)

    @property
    def n_tau(self) -> int:
        return grid_steps(self.delay_tau, self.dt)


def ell(r):
    """Relative entropy density ``r ln r - r + 1`` (``ell(0) = 1``)."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, r * np.log(np.where(r > 0, r, 1.0)) - r + 1.0, 1.0)
    return out


@dataclass
class ControlledInputs:
    """Deterministic control ``xi = (xi1, xi2)`` and jump intensity ``phi``.

    ``xi(t)`` returns a vector of length ``d + k``; ``phi(t, z)`` a
    nonnegative float bounded by ``phi_max``.  The budget
    ``1/2 int |xi|^2 <= M a(eps)^2`` (``a(eps) = eps^((1 - theta)/2)``) and ``int int ell(phi) dnu ds <= M a(eps)^2``
    is checked when ``epsilon``, ``T`` and ``levy`` are given, and always
    before a controlled integration.
    """

    xi: Optional[Callable[[float], np.ndarray]] = None
    phi: Optional[Callable[[float, np.ndarray], float]] = None
    phi_max: float = 1.0
    M_budget: float = math.inf
    epsilon: Optional[float] = None
    T: Optional[float] = None
    levy: Optional[object] = None
    theta: float = 0.75

    def __post_init__(self):
        if not self.phi_max > 0:
            raise ContractError("phi_max must be positive")
        if self.M_budget < 0:
            raise ContractError("M_budget must be nonnegative")
        if self.epsilon is not None and self.T is not None and self.levy is not None:
            self.check_budget(self.epsilon, self.T, self.levy)

    def costs(self, T: float, levy, n_time: int = 201, n_marks: int = 48) -> tuple[float, float]:
        """(1/2 int |xi|^2 ds, int int ell(phi) nu(dz) ds) by trapezoid x quadrature."""
        ts = np.linspace(0.0, T, n_time)
        if self.xi is None:
            c_xi = 0.0
        else:
            sq = np.array([float(np.sum(np.asarray(self.xi(t), float) ** 2)) for t in ts])
            c_xi = 0.5 * float(trapezoid(sq, ts))
        if self.phi is None:
            c_phi = 0.0
        else:
            Z, W = levy.quadrature_rule(n_marks, radial=True)
            vals = np.array([W @ ell([self.phi(t, z) for z in Z]) for t in ts])
            c_phi = float(trapezoid(vals, ts))
        return c_xi, c_phi

    def check_budget(self, epsilon: float, T: float, levy) -> None:
        if math.isinf(self.M_budget):
            return
        cap = self.M_budget * epsilon ** (1.0 - self.theta)  # M a(eps)^2
        c_xi, c_phi = self.costs(T, levy)
        if c_xi > cap * (1 + 1e-9):
            raise ContractError(f"xi cost {c_xi:.6g} exceeds budget {cap:.6g}")
        if c_phi > cap * (1 + 1e-9):
            raise ContractError(f"phi cost {c_phi:.6g} exceeds budget {cap:.6g}")

    def xi_on_grid(self, n_steps: int, dt: float, d: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        if self.xi is None:
            return np.zeros((n_steps, d)), np.zeros((n_steps, k))
        vals = np.array([np.asarray(self.xi(j * dt), float).reshape(d + k) for j in range(n_steps)])
        return vals[:, :d], vals[:, d:]


@dataclass
class PathResult:
    slow: SamplePath
    fast: Optional[SamplePath]
    exit_time: Optional[float]
    # frozen-segment auxiliaries, present only for Khasminskii runs
    yhat: Optional[np.ndarray] = None
    slow_hat_gap: Optional[np.ndarray] = None
    jumps: Optional[JumpList] = None
    extras: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# event list


@dataclass
class _Events:
    t: np.ndarray
    kind: np.ndarray  # int8: 0 grid, 1 jump
    mark: np.ndarray  # (n, mark_dim)
    gidx: np.ndarray  # int64 grid step index (negative on the initial segment)
    i0: int


def _events(cfg: IntegratorConfig, jumps: JumpList, mark_dim: int) -> _Events:
    dt = cfg.dt
    n_tau, n = cfg.n_tau, cfg.n_steps
    k = np.arange(-n_tau, n + 1, dtype=np.int64)
    gt = k * dt
    if len(jumps) == 0:
        return _Events(gt, np.zeros(len(gt), np.int8), np.zeros((len(gt), mark_dim)), k, n_tau)
    jt = np.asarray(jumps.times, dtype=float)
    jg = np.minimum(np.floor(jt / dt).astype(np.int64), n - 1)
    t = np.concatenate([gt, jt])
    kind = np.concatenate([np.zeros(len(gt), np.int8), np.ones(len(jt), np.int8)])
    order = np.lexsort((kind, t))  # grid first on ties
    marks = np.concatenate([np.zeros((len(gt), mark_dim)), jumps.marks.reshape(len(jt), mark_dim)])
    return _Events(t[order], kind[order], marks[order], np.concatenate([k, jg])[order], n_tau)


def _normals(rng: Streams, n_ev: int, i0: int, d: int, k: int):
    n_sub = n_ev - 1 - i0
    z1 = np.zeros((n_ev, d))
    z2 = np.zeros((n_ev, k))
    z1[i0 : i0 + n_sub] = rng.channel("bm_slow").standard_normal((n_sub, d))
    z2[i0 : i0 + n_sub] = rng.channel("bm_fast").standard_normal((n_sub, k))
    return z1, z2


def _as_streams(rng, seed: int) -> Streams:
    if rng is None:
        return Streams(seed)
    if isinstance(rng, Streams):
        return rng
    if isinstance(rng, (int, np.integer)):
        return Streams(int(rng))
    raise TypeError("rng must be a Streams instance or an integer seed")


def _jump_moments(cs: CoefficientSet):
    """Quadrature rules for the compensator (above cut) and small jumps (below)."""
    levy = cs.levy
    Za, Wa = levy.quadrature_rule(64, "above")
    if levy.truncation > 0:
        Zb, Wb = levy.quadrature_rule(64, "below")
    else:
        Zb, Wb = np.zeros((0, levy.dim)), np.zeros(0)
    return Za, Wa, Zb, Wb


def _check_tau(cs: CoefficientSet, cfg: IntegratorConfig):
    if abs(cs.tau - cfg.delay_tau) > 1e-12 * max(1.0, cs.tau):
        raise ConfigurationError(f"model tau={cs.tau} differs from integrator tau={cfg.delay_tau}")


# --------------------------------------------------------------------------
# built-in kernel driver


def _gauss_ou_prm(cs: CoefficientSet, eps: float, tau: float, radius: float, fast_on: bool = True):
    p = cs.params
    levy = cs.levy
    Za, Wa, Zb, Wb = _jump_moments(cs)
    jon = 1.0 if p["fast_jumps"] else 0.0
    m1a = float(Wa @ Za[:, 0]) if len(Wa) else 0.0
    if cs.fast_jump_compensated:
        F1 = -jon * m1a
        F0 = -jon * float(Wa.sum())
    else:
        F1 = jon * (float(Wb @ Zb[:, 0]) if len(Wb) else 0.0)
        F0 = jon * float(Wb.sum())
    gdiff = p["g_level"] if p["fast_diffusion"] else 0.0
    return np.array(
        [
            eps,
            p["kappa"],
            p["kappa2"],
            p["gamma_coupling"],
            p["f1_base"],
            p["f1_mod"],
            gdiff,
            jon * p["g_level"] * math.sqrt(levy.alpha),
            1.0 if fast_on else 0.0,
            p["sigma_level"],
            p["jump_scale"],
            p["c_mod"],
            tau,
            radius,
            m1a,
            F1,
            F0,
        ],
        dtype=float,
    )


def _kernel_path(
    cs, cfg, chi, y0, jumps, rng, xi1=None, xi2=None, delta_steps=0, fast_on=True, backend=None
) -> PathResult:
    ev = _events(cfg, jumps, cs.levy.dim)
    n_ev = len(ev.t)
    z1, z2 = _normals(rng, n_ev, ev.i0, 1, 1)
    xl = np.zeros(n_ev)
    xr = np.zeros(n_ev)
    hist = chi.on_grid(cfg.delay_tau, cfg.dt)[:, 0]
    xl[: ev.i0 + 1] = hist
    xr[: ev.i0 + 1] = hist
    yl = np.zeros(n_ev)
    yr = np.zeros(n_ev)
    khas = delta_steps > 0
    yhat = np.zeros(n_ev if khas else 0)
    dhat = np.zeros(n_ev if khas else 0)
    radius = cfg.localization_radius if cfg.localization_radius else math.inf
    prm = _gauss_ou_prm(cs, cfg.epsilon, cfg.n_tau * cfg.dt, radius, fast_on)
    e1 = np.zeros(0) if xi1 is None else np.ascontiguousarray(xi1, dtype=float).reshape(-1)
    e2 = np.zeros(0) if xi2 is None else np.ascontiguousarray(xi2, dtype=float).reshape(-1)
    mod = kernels.get_backend(backend)
    status, exit_time, last = mod.multiscale_gauss_ou(
        ev.t, ev.kind, np.ascontiguousarray(ev.mark[:, 0]), ev.gidx,
        np.ascontiguousarray(z1[:, 0]), np.ascontiguousarray(z2[:, 0]),
        xl, xr, yl, yr, yhat, dhat,
        ev.i0, float(np.asarray(y0, float).reshape(-1)[0]), prm, e1, e2, int(delta_steps),
    )
    if status != 0:
        raise BlowUpError(f"state blew up after t={last}", last)
    flags = ev.kind.astype(bool)
    slow = SamplePath(ev.t, xl, xr, flags, tau=cfg.delay_tau, dt=cfg.dt)
    s = ev.i0
    fast = SamplePath(ev.t[s:], yl[s:], yr[s:], flags[s:], tau=cfg.delay_tau, dt=cfg.dt)
    return PathResult(
        slow=slow,
        fast=fast,
        exit_time=None if exit_time < 0 else float(exit_time),
        yhat=yhat[s:] if khas else None,
        slow_hat_gap=dhat[s:] if khas else None,
        jumps=jumps,
    )


# --------------------------------------------------------------------------
# generic driver


def _generic_path(cs, cfg, chi, y0, jumps, rng, xi1=None, xi2=None, fast_on=True) -> PathResult:
    d, k = cs.dims
    ev = _events(cfg, jumps, cs.levy.dim)
    n_ev = len(ev.t)
    z1, z2 = _normals(rng, n_ev, ev.i0, d, k)
    xl = np.zeros((n_ev, d))
    xr = np.zeros((n_ev, d))
    hist = chi.on_grid(cfg.delay_tau, cfg.dt)
    xl[: ev.i0 + 1] = hist
    xr[: ev.i0 + 1] = hist
    yl = np.zeros((n_ev, k))
    yr = np.zeros((n_ev, k))
    flags = ev.kind.astype(bool)
    path = SamplePath(ev.t, xl, xr, flags, tau=cfg.delay_tau, dt=cfg.dt, count=ev.i0 + 1)
    Za, Wa, Zb, Wb = _jump_moments(cs)
    eps = cfg.epsilon
    sq_eps = math.sqrt(eps)
    radius = cfg.localization_radius if cfg.localization_radius else math.inf
    y = np.asarray(y0, float).reshape(k).copy()
    yl[ev.i0] = y
    yr[ev.i0] = y
    exit_time = ev.t[ev.i0] if np.linalg.norm(xr[ev.i0]) > radius else None
    has_ctrl = xi1 is not None
    for i in range(ev.i0, n_ev - 1):
        t = ev.t[i]
        hstep = ev.t[i + 1] - t
        x = xr[i]
        y = yr[i]
        path.count = i + 1
        seg = Segment(path, t)
        g_i = ev.gidx[i]
        c1 = xi1[g_i] if has_ctrl and 0 <= g_i < len(xi1) else np.zeros(d)
        c2 = xi2[g_i] if has_ctrl and 0 <= g_i < len(xi2) else np.zeros(k)
        a = np.asarray(cs.a(seg, y), float)
        sig = np.asarray(cs.sigma(seg), float)
        comp = Wa @ np.asarray(cs.c(seg, Za), float) if len(Wa) else np.zeros(d)
        sq_h = math.sqrt(hstep)
        x_new = x + (a + sig @ c1 - comp) * hstep + sq_eps * (sig @ (sq_h * z1[i]))
        if fast_on:
            f = np.asarray(cs.f(seg, y), float)
            g = np.asarray(cs.g(seg, y), float)
            if cs.fast_jump_compensated:
                extra = -(Wa @ np.asarray(cs.h(seg, y, Za), float)) if len(Wa) else np.zeros(k)
            else:
                extra = Wb @ np.asarray(cs.h(seg, y, Zb), float) if len(Wb) else np.zeros(k)
            y_new = y + (f + g @ c2 + extra) * hstep / eps + (g @ (sq_h * z2[i])) / sq_eps
        else:
            y_new = y
        xl[i + 1] = x_new
        yl[i + 1] = y_new
        if ev.kind[i + 1] == 1:
            # coefficients see the left limit X_{s-}
            xr[i + 1] = x_new
            path.count = i + 2
            seg_m = Segment(path, ev.t[i + 1])
            zm = ev.mark[i + 1][None, :]
            x_post = x_new + eps * np.asarray(cs.c(seg_m, zm), float)[0]
            if fast_on:
                y_post = y_new + np.asarray(cs.h(seg_m, y_new, zm), float)[0]
            else:
                y_post = y_new
        else:
            x_post = x_new
            y_post = y_new
        xr[i + 1] = x_post
        yr[i + 1] = y_post
        if not (np.all(np.abs(x_post) < 1e150) and np.all(np.abs(y_post) < 1e150)):
            raise BlowUpError(f"state blew up after t={t}", t)
        if exit_time is None and max(np.linalg.norm(x_new), np.linalg.norm(x_post)) > radius:
            exit_time = float(ev.t[i + 1])
    path.count = n_ev
    s = ev.i0
    fast = SamplePath(ev.t[s:], yl[s:], yr[s:], flags[s:], tau=cfg.delay_tau, dt=cfg.dt)
    return PathResult(slow=path, fast=fast, exit_time=exit_time, jumps=jumps)


def _slow_jumps_off(cs: CoefficientSet) -> bool:
    return cs.name == "gauss_ou" and float(cs.params.get("jump_scale", 1.0)) == 0.0


def _use_kernel(cs: CoefficientSet, force_generic: bool) -> bool:
    return cs.kernel == "gauss_ou" and not force_generic


# --------------------------------------------------------------------------
# public operations


def integrate_multiscale(
    cs: CoefficientSet,
    cfg: IntegratorConfig,
    chi: InitialDatum,
    y0,
    rng=None,
    *,
    backend: Optional[str] = None,
    force_generic: bool = False,
) -> PathResult:
    """One path of the coupled system on [-tau, T].

    ``exit_time`` is the first event time at which the slow state leaves
    the ball of radius ``cfg.localization_radius`` (integration continues
    to ``T`` regardless).  Raises :class:`BlowUpError` on overflow.
    """
    _check_tau(cs, cfg)
    rng = _as_streams(rng, cfg.seed)
    jumps = sample_jumps(cs.levy, 1.0 / cfg.epsilon, cfg.T, rng)
    if _use_kernel(cs, force_generic):
        return _kernel_path(cs, cfg, chi, y0, jumps, rng, backend=backend)
    return _generic_path(cs, cfg, chi, y0, jumps, rng)


def integrate_controlled(
    cs: CoefficientSet,
    cfg: IntegratorConfig,
    chi: InitialDatum,
    y0,
    controls: ControlledInputs,
    rng=None,
    *,
    khasminskii_delta_steps: int = 0,
    backend: Optional[str] = None,
    force_generic: bool = False,
) -> PathResult:
    """Controlled system: drifts ``sigma xi1``, ``(1/eps) g xi2`` and jumps of
    the measure with intensity ``phi / eps`` (thinned from rate ``phi_max / eps``).

    The jump integrals are written against the controlled measure compensated
    by the uncontrolled intensity, which is the same process as compensating
    by ``phi nu`` and adding the ``int c (phi - 1) dnu`` drifts.  With
    ``xi = 0``, ``phi = 1`` and ``phi_max = 1`` the path is bit-identical to
    :func:`integrate_multiscale` on the same streams.
    """
    _check_tau(cs, cfg)
    controls.check_budget(cfg.epsilon, cfg.T, cs.levy)
    rng = _as_streams(rng, cfg.seed)
    base = sample_jumps(cs.levy, controls.phi_max / cfg.epsilon, cfg.T, rng)
    phi = controls.phi if controls.phi is not None else (lambda t, z: 1.0)
    jumps = thin_controlled(base, phi, controls.phi_max, rng)
    xi1, xi2 = controls.xi_on_grid(cfg.n_steps, cfg.dt, cs.d, cs.k)
    if _use_kernel(cs, force_generic):
        return _kernel_path(
            cs, cfg, chi, y0, jumps, rng, xi1, xi2, delta_steps=khasminskii_delta_steps, backend=backend
        )
    if khasminskii_delta_steps:
        raise ConfigurationError("frozen-segment auxiliaries are only built for the gauss_ou kernel")
    return _generic_path(cs, cfg, chi, y0, jumps, rng, xi1, xi2)


def integrate_averaged_controlled(
    cs: CoefficientSet,
    cfg: IntegratorConfig,
    chi: InitialDatum,
    controls: Optional[ControlledInputs] = None,
    rng=None,
    *,
    abar: Optional[Callable[[Segment], np.ndarray]] = None,
) -> PathResult:
    """Slow equation with ``a(X_s, Y)`` replaced by ``abar(X_s)``; no fast variable.

    Uses the model's analytic abar unless an evaluator is passed.  The
    recursion is the one of :func:`~multiscale_mdp.averaging.solve_averaged_ode`
    plus the noise, jump and control increments.
    """
    from .averaging import averaged_recursion

    _check_tau(cs, cfg)
    fn = abar if abar is not None else cs.abar_analytic
    if fn is None:
        raise ConfigurationError("no abar available: supply an evaluator")
    controls = controls or ControlledInputs()
    controls.check_budget(cfg.epsilon, cfg.T, cs.levy)
    rng = _as_streams(rng, cfg.seed)
    if _slow_jumps_off(cs):
        # no fast variable here, so without a slow jump channel the event
        # list is the plain grid and the recursion is the deterministic one
        jumps = JumpList.empty(cs.levy.dim)
    else:
        base = sample_jumps(cs.levy, controls.phi_max / cfg.epsilon, cfg.T, rng)
        phi = controls.phi if controls.phi is not None else (lambda t, z: 1.0)
        jumps = thin_controlled(base, phi, controls.phi_max, rng)
    xi1, _ = controls.xi_on_grid(cfg.n_steps, cfg.dt, cs.d, cs.k)
    ev = _events(cfg, jumps, cs.levy.dim)
    z1, _ = _normals(rng, len(ev.t), ev.i0, cs.d, 0)
    Za, Wa, _, _ = _jump_moments(cs)
    eps = cfg.epsilon
    sq_eps = math.sqrt(eps)

    def increment(seg, i, hstep):
        sig = np.asarray(cs.sigma(seg), float)
        g_i = ev.gidx[i]
        c1 = xi1[g_i] if 0 <= g_i < len(xi1) else np.zeros(cs.d)
        comp = Wa @ np.asarray(cs.c(seg, Za), float) if len(Wa) else 0.0
        return (sig @ c1 - comp) * hstep + sq_eps * (sig @ (math.sqrt(hstep) * z1[i]))

    def jump(seg_minus, i):
        return eps * np.asarray(cs.c(seg_minus, ev.mark[i][None, :]), float)[0]

    radius = cfg.localization_radius if cfg.localization_radius else math.inf
    path, exit_time = averaged_recursion(
        fn, chi, cfg.delay_tau, cfg.dt, ev.t, ev.kind, ev.i0, increment, jump, radius
    )
    return PathResult(slow=path, fast=None, exit_time=exit_time, jumps=jumps)


def integrate_frozen_fast(
    cs: CoefficientSet,
    zeta: Segment,
    y0,
    T: float,
    dt: float,
    rng=None,
    *,
    backend: Optional[str] = None,
    force_generic: bool = False,
) -> SamplePath:
    """Fast equation at unit scale with the slow segment frozen at ``zeta``."""
    rng = _as_streams(rng, 0)
    n = grid_steps(T, dt)
    jumps = sample_jumps(cs.levy, 1.0, T, rng)
    k = cs.k
    gt = np.arange(n + 1) * dt
    if len(jumps):
        t = np.concatenate([gt, jumps.times])
        kind = np.concatenate([np.zeros(n + 1, np.int8), np.ones(len(jumps), np.int8)])
        order = np.lexsort((kind, t))
        marks = np.concatenate([np.zeros((n + 1, cs.levy.dim)), jumps.marks])[order]
        t, kind = t[order], kind[order]
    else:
        t, kind, marks = gt, np.zeros(n + 1, np.int8), np.zeros((n + 1, cs.levy.dim))
    n_ev = len(t)
    z2 = np.zeros((n_ev, k))
    z2[: n_ev - 1] = rng.channel("bm_fast").standard_normal((n_ev - 1, k))
    Za, Wa, Zb, Wb = _jump_moments(cs)
    y0 = np.asarray(y0, float).reshape(k)
    if _use_kernel(cs, force_generic):
        p = cs.params
        f1 = p["f1_base"] * (1.0 + p["f1_mod"] * (lambda x0: x0 * x0 / (1.0 + x0 * x0))(float(zeta.at(0.0)[0])))
        jon = 1.0 if p["fast_jumps"] else 0.0
        scale = jon * p["g_level"] * math.sqrt(cs.levy.alpha) / math.sqrt(f1)
        if cs.fast_jump_compensated:
            F1, F0 = -jon * float(Wa @ Za[:, 0]), -jon * float(Wa.sum())
        else:
            F1 = jon * (float(Wb @ Zb[:, 0]) if len(Wb) else 0.0)
            F0 = jon * float(Wb.sum())
        gdiff = p["g_level"] if p["fast_diffusion"] else 0.0
        prm = np.array([f1, gdiff, scale, F1, F0])
        yl = np.zeros(n_ev)
        yr = np.zeros(n_ev)
        status, last = kernels.get_backend(backend).frozen_gauss_ou(
            t, kind, np.ascontiguousarray(marks[:, 0]), np.ascontiguousarray(z2[:, 0]), yl, yr, float(y0[0]), prm
        )
        if status != 0:
            raise BlowUpError(f"frozen fast state blew up after t={last}", last)
        return SamplePath(t, yl, yr, kind.astype(bool), tau=cs.tau, dt=dt)
    yl = np.zeros((n_ev, k))
    yr = np.zeros((n_ev, k))
    y = y0.copy()
    yl[0] = y
    yr[0] = y
    for i in range(n_ev - 1):
        hstep = t[i + 1] - t[i]
        f = np.asarray(cs.f(zeta, y), float)
        g = np.asarray(cs.g(zeta, y), float)
        if cs.fast_jump_compensated:
            extra = -(Wa @ np.asarray(cs.h(zeta, y, Za), float)) if len(Wa) else np.zeros(k)
        else:
            extra = Wb @ np.asarray(cs.h(zeta, y, Zb), float) if len(Wb) else np.zeros(k)
        y = y + (f + extra) * hstep + g @ (math.sqrt(hstep) * z2[i])
        yl[i + 1] = y
        if kind[i + 1] == 1:
            y = y + np.asarray(cs.h(zeta, y, marks[i + 1][None, :]), float)[0]
        yr[i + 1] = y
        if not np.all(np.abs(y) < 1e150):
            raise BlowUpError(f"frozen fast state blew up after t={t[i]}", float(t[i]))
    return SamplePath(t, yl, yr, kind.astype(bool), tau=cs.tau, dt=dt)


def simulate_paths(
    fn: Callable[[Streams], object],
    seed: int,
    n_paths: int,
    workers: int = 1,
    start_index: int = 0,
) -> list:
    """Run ``fn(Streams(seed, i))`` for ``i`` in ``range(n_paths)``.

    Results come back in index order whatever the worker count; the
    compiled kernels release the GIL, so threads give real parallelism.
    """
    streams = [Streams(seed, start_index + i) for i in range(n_paths)]
    if workers <= 1:
        return [fn(s) for s in streams]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, streams))

"""Invariant-measure and averaged-coefficient estimators, the averaged ODE
and the frozen-segment (Khasminskii) auxiliary processes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .engine import (
    BlowUpError,
    ControlledInputs,
    IntegratorConfig,
    integrate_controlled,
    integrate_frozen_fast,
    simulate_paths,
)
from .model import CoefficientSet, ConfigurationError
from .rng import Streams
from .segment import InitialDatum, SamplePath, Segment, grid_steps
from .stats import batch_means, mean_ci

# --------------------------------------------------------------------------
# invariant measure and averaged coefficient


@dataclass
class InvariantEstimate:
    mean: np.ndarray
    second_moment: np.ndarray
    n_effective: float
    burn_in: float
    ci_halfwidth: np.ndarray
    second_moment_ci: np.ndarray

    @property
    def covariance(self) -> np.ndarray:
        return self.second_moment - np.outer(self.mean, self.mean)


def _post_burn_grid(path: SamplePath, burn_in: float) -> np.ndarray:
    """Grid values on [burn_in, T), left-point rule for time averages."""
    t = path.grid_times
    v = path.grid_values
    keep = (t >= burn_in - 1e-12) & (t < t[-1] - 1e-12)
    return v[keep]


def default_burn_in(cs: CoefficientSet) -> float:
    b1 = cs.constants.beta1
    return 5.0 / b1 if b1 > 0 else 10.0


def _burn(cs: CoefficientSet, burn_in: Optional[float], dt: float) -> float:
    """Burn-in rounded up to a whole number of steps."""
    b = default_burn_in(cs) if burn_in is None else float(burn_in)
    return math.ceil(b / dt - 1e-9) * dt


def estimate_invariant(
    cs: CoefficientSet,
    zeta: Segment,
    T_run: float,
    burn_in: Optional[float],
    dt: float,
    rng=None,
    y0=None,
    batches: int = 20,
) -> InvariantEstimate:
    """Time-average moments of the frozen fast process after ``burn_in``.

    The path covers ``[0, burn_in + T_run]``; confidence half-widths come
    from ``batches`` batch means (95%).
    """
    burn = _burn(cs, burn_in, dt)
    streams = rng if isinstance(rng, Streams) else Streams(0 if rng is None else int(rng))
    y0 = np.zeros(cs.k) if y0 is None else np.asarray(y0, float)
    total = (round(burn / dt) + grid_steps(T_run, dt)) * dt
    path = integrate_frozen_fast(cs, zeta, y0, total, dt, streams)
    Y = _post_burn_grid(path, burn)
    if len(Y) < batches:
        raise ValueError("run too short for the requested batch count")
    k = Y.shape[1]
    mean = Y.mean(axis=0)
    outer = (Y[:, :, None] * Y[:, None, :]).reshape(len(Y), k * k)
    second = outer.mean(axis=0).reshape(k, k)
    bm = batch_means(Y, batches)
    bm2 = batch_means(outer, batches)
    naive = Y.var(axis=0)
    n_eff = float(np.min(np.where(bm.se > 0, naive / np.maximum(bm.se**2, 1e-300), len(Y))))
    return InvariantEstimate(
        mean=mean,
        second_moment=second,
        n_effective=max(n_eff, 1.0),
        burn_in=burn,
        ci_halfwidth=bm.halfwidth,
        second_moment_ci=bm2.halfwidth.reshape(k, k),
    )


def a_along(cs: CoefficientSet, zeta: Segment, Y: np.ndarray) -> np.ndarray:
    """``a(zeta, y)`` for each row of ``Y``; vectorised for the built-in."""
    if cs.kernel == "gauss_ou":
        p = cs.params
        z0 = float(zeta.at(0.0)[0])
        zt = float(zeta.at(-zeta.tau)[0])
        return (-p["kappa"] * z0 - p["kappa2"] * zt + p["gamma_coupling"] * zt * Y[:, :1]).reshape(-1, 1)
    return np.array([np.asarray(cs.a(zeta, y), float) for y in Y])


@dataclass
class AbarEstimate:
    value: np.ndarray
    ci: np.ndarray
    replica_means: np.ndarray


def estimate_abar(
    cs: CoefficientSet,
    zeta: Segment,
    T_run: float,
    burn_in: Optional[float],
    replicas: int,
    dt: float,
    rng=None,
    y0=None,
    workers: int = 1,
) -> AbarEstimate:
    """Ergodic average of ``a(zeta, Y(s))`` over replicas and time.

    Replica ``r`` uses ``Streams(seed, r)``; the CI half-width is the 95%
    Student interval over replica means (batch means when ``replicas == 1``).
    """
    burn = _burn(cs, burn_in, dt)
    seed = rng.seed if isinstance(rng, Streams) else (0 if rng is None else int(rng))
    y0 = np.zeros(cs.k) if y0 is None else np.asarray(y0, float)
    total = (round(burn / dt) + grid_steps(T_run, dt)) * dt

    def one(s: Streams):
        path = integrate_frozen_fast(cs, zeta, y0, total, dt, s)
        return a_along(cs, zeta, _post_burn_grid(path, burn))

    series = simulate_paths(one, seed, replicas, workers)
    means = np.array([s.mean(axis=0) for s in series])
    if replicas > 1:
        value, half = mean_ci(means)
    else:
        bm = batch_means(series[0], 20)
        value, half = series[0].mean(axis=0), bm.halfwidth
    return AbarEstimate(value=np.asarray(value), ci=np.asarray(half), replica_means=means)


@dataclass
class MixingRow:
    T: float
    alpha_hat: float
    ci_lo: float
    ci_hi: float


def estimate_mixing(
    cs: CoefficientSet,
    zeta: Segment,
    y0,
    T_grid: Sequence[float],
    replicas: int,
    dt: float,
    rng=None,
    abar_value=None,
    workers: int = 1,
) -> list[MixingRow]:
    """alpha_hat(T) = E|T^-1 int_0^T a(zeta, Y(s)) ds - abar(zeta)|^2 / (1 + |zeta|^2 + |y|^2).

    All horizons share the same replicas (one path to ``max(T_grid)`` each),
    so differences between horizons are not blurred by independent noise.
    """
    if abar_value is None:
        if cs.abar_analytic is None:
            raise ConfigurationError("estimate_mixing needs abar (analytic or passed in)")
        abar_value = np.asarray(cs.abar_analytic(zeta), float)
    abar_value = np.asarray(abar_value, float).reshape(cs.d)
    seed = rng.seed if isinstance(rng, Streams) else (0 if rng is None else int(rng))
    y0 = np.asarray(y0, float).reshape(cs.k)
    T_grid = [float(T) for T in T_grid]
    T_max = max(T_grid)
    steps = [grid_steps(T, dt) for T in T_grid]
    total = grid_steps(T_max, dt) * dt
    norm = 1.0 + zeta.sup_norm() ** 2 + float(y0 @ y0)

    def one(s: Streams):
        path = integrate_frozen_fast(cs, zeta, y0, total, dt, s)
        A = a_along(cs, zeta, path.grid_values[:-1])
        csum = np.cumsum(A, axis=0) * dt
        return np.array([np.sum((csum[n - 1] / T - abar_value) ** 2) for n, T in zip(steps, T_grid)])

    sq = np.array(simulate_paths(one, seed, replicas, workers)) / norm
    rows = []
    for j, T in enumerate(T_grid):
        m, half = mean_ci(sq[:, j])
        rows.append(MixingRow(T=T, alpha_hat=float(m), ci_lo=float(m - half), ci_hi=float(m + half)))
    return rows


def log_slope(rows: Sequence[MixingRow]) -> float:
    """Least-squares slope of ``ln alpha_hat`` against ``T``."""
    T = np.array([r.T for r in rows])
    la = np.log(np.array([r.alpha_hat for r in rows]))
    return float(np.polyfit(T, la, 1)[0])


# --------------------------------------------------------------------------
# averaged ODE


def averaged_recursion(
    abar: Callable[[Segment], np.ndarray],
    chi: InitialDatum,
    tau: float,
    dt: float,
    t_events: np.ndarray,
    kind: np.ndarray,
    i0: int,
    increment: Optional[Callable] = None,
    jump: Optional[Callable] = None,
    radius: float = math.inf,
) -> tuple[SamplePath, Optional[float]]:
    """Explicit Euler for ``x' = abar(x_t)`` on an event list (method of steps).

    ``increment(seg, i, h)`` adds noise/control terms over sub-interval
    ``i``; ``jump(seg_minus, i)`` the jump at event ``i``.  Shared by the
    averaged ODE and the averaged controlled process.
    """
    hist = chi.on_grid(tau, dt)
    d = hist.shape[1]
    n_ev = len(t_events)
    xl = np.zeros((n_ev, d))
    xr = np.zeros((n_ev, d))
    xl[: i0 + 1] = hist
    xr[: i0 + 1] = hist
    flags = np.asarray(kind).astype(bool)
    path = SamplePath(t_events, xl, xr, flags, tau=tau, dt=dt, count=i0 + 1)
    exit_time = float(t_events[i0]) if np.linalg.norm(xr[i0]) > radius else None
    for i in range(i0, n_ev - 1):
        t = t_events[i]
        hstep = t_events[i + 1] - t
        path.count = i + 1
        seg = Segment(path, t)
        x_new = xr[i] + np.asarray(abar(seg), float) * hstep
        if increment is not None:
            x_new = x_new + increment(seg, i, hstep)
        xl[i + 1] = x_new
        xr[i + 1] = x_new
        if flags[i + 1] and jump is not None:
            path.count = i + 2
            xr[i + 1] = x_new + jump(Segment(path, t_events[i + 1]), i + 1)
        if not np.all(np.abs(xr[i + 1]) < 1e150):
            raise BlowUpError(f"averaged state blew up after t={t}", float(t))
        if exit_time is None and max(np.linalg.norm(xl[i + 1]), np.linalg.norm(xr[i + 1])) > radius:
            exit_time = float(t_events[i + 1])
    path.count = n_ev
    return path, exit_time


def solve_averaged_ode(
    abar: Callable[[Segment], np.ndarray],
    chi: InitialDatum,
    T: float,
    dt: float,
    *,
    tau: float,
) -> SamplePath:
    """Deterministic averaged functional ODE on the uniform grid of [-tau, T]."""
    n_tau, n = grid_steps(tau, dt), grid_steps(T, dt)
    t = np.arange(-n_tau, n + 1, dtype=np.int64) * dt
    path, _ = averaged_recursion(abar, chi, tau, dt, t, np.zeros(len(t), np.int8), n_tau)
    return path


# --------------------------------------------------------------------------
# Khasminskii discretisation


@dataclass(frozen=True)
class KhasminskiiParams:
    """Scalings ``a = eps^((1-theta)/2)``, ``b = eps^theta`` and the block
    length ``Delta = eps^gamma a^2 |ln eps|^p``."""

    theta: float = 0.75
    gamma: float = 0.1
    p: float = 1.0
    q: float = 4.0

    def __post_init__(self):
        if not 0.5 < self.theta < 1:
            raise ConfigurationError("theta must lie in (1/2, 1)")
        if not 0 < self.gamma < self.theta - 0.5:
            raise ConfigurationError("gamma must lie in (0, theta - 1/2)")
        if not self.p > 0:
            raise ConfigurationError("p must be positive")
        if not self.q > 2 * self.gamma + 3:
            raise ConfigurationError("q must exceed 2 gamma + 3")

    def a_eps(self, eps: float) -> float:
        return eps ** ((1 - self.theta) / 2)

    def b_eps(self, eps: float) -> float:
        return eps**self.theta

    def Delta(self, eps: float) -> float:
        return eps**self.gamma * self.a_eps(eps) ** 2 * abs(math.log(eps)) ** self.p

    def L_eps(self, eps: float) -> float:
        return self.a_eps(eps) ** 2 / abs(math.log(eps)) ** self.q

    def R_eps(self, eps: float) -> float:
        return self.a_eps(eps) ** -0.25

    def regime_diagnostics(self, eps_grid: Sequence[float]) -> dict:
        """Values of Delta, Delta/a^2 and Delta/eps on the grid.

        All three limits hold as ``eps -> 0`` whenever the parameter ranges
        hold (checked in ``__post_init__``); on a finite grid ``Delta / a^2 =
        eps^gamma |ln eps|^p`` only decreases once ``eps < exp(-p / gamma)``,
        which the ``*_monotone`` flags make visible.
        """
        eps = sorted(float(e) for e in eps_grid)[::-1]
        D = [self.Delta(e) for e in eps]
        Da = [self.Delta(e) / self.a_eps(e) ** 2 for e in eps]
        De = [self.Delta(e) / e for e in eps]
        return {
            "epsilon": eps,
            "Delta": D,
            "Delta_over_a2": Da,
            "Delta_over_eps": De,
            "Delta_monotone": bool(np.all(np.diff(D) < 0)),
            "Delta_over_a2_monotone": bool(np.all(np.diff(Da) < 0)),
            "Delta_over_eps_monotone": bool(np.all(np.diff(De) > 0)),
            "Delta_over_a2_turning_point": math.exp(-self.p / self.gamma),
        }

    def check_at(self, eps: float, T: float, min_ratio: float = 10.0) -> None:
        """Single-epsilon admissibility: ``min_ratio eps <= Delta <= T``."""
        D = self.Delta(eps)
        if D < min_ratio * eps:
            raise ConfigurationError(f"Delta={D:.4g} is not large against eps={eps}")
        if D > T:
            raise ConfigurationError(f"Delta={D:.4g} exceeds the horizon T={T}")


@dataclass
class KhasminskiiResult:
    epsilon: float
    dev_hat_X: float
    dev_Y_mean: float
    dev_segment: float
    a_eps: float
    delta_steps: int
    localized: bool


def segment_block_deviation(xg: np.ndarray, n_tau: int, n: int, block: int) -> float:
    """sup_t ||x_t - x_{t_Delta}||_inf on the grid.

    ``xg`` holds grid values on [-tau, T] (index 0 is ``-tau``).  For a
    block starting at step ``b`` the sup runs over window offsets ``j`` in
    ``[b, b + n_tau]`` and lags ``0 <= k < K_b`` of ``|xg[j+k] - xg[j]|``,
    evaluated with running max/min filters.
    """
    xg = np.asarray(xg, float)
    if xg.ndim == 2:
        return max(segment_block_deviation(xg[:, i], n_tau, n, block) for i in range(xg.shape[1]))
    cache: dict[int, np.ndarray] = {}

    def lag_range(K):
        if K not in cache:
            hi = ndimage.maximum_filter1d(xg, size=K, origin=-(K // 2), mode="nearest")
            lo = ndimage.minimum_filter1d(xg, size=K, origin=-(K // 2), mode="nearest")
            cache[K] = np.maximum(hi - xg, xg - lo)
        return cache[K]

    best = 0.0
    for b in range(0, n + 1, block):
        K = min(block, n - b + 1)
        M = lag_range(K)
        best = max(best, float(np.max(M[b : b + n_tau + 1])))
    return best


def khasminskii_run(
    cs: CoefficientSet,
    cfg: IntegratorConfig,
    chi: InitialDatum,
    y0,
    controls: Optional[ControlledInputs],
    params: KhasminskiiParams,
    rng=None,
    *,
    backend: Optional[str] = None,
) -> KhasminskiiResult:
    """One common-noise realisation of (X, Y) and the frozen-segment pair.

    ``dev_hat_X`` is ``sup_t |X - X_hat|``, ``dev_Y_mean`` the time average
    of ``|Y - Y_hat|`` over grid points and ``dev_segment`` is
    ``sup_t ||X_t - X_{t_Delta}||_inf``.  The localisation radius defaults
    to ``R(eps)``; ``localized`` is False when the slow path left the ball,
    and callers filter on it.
    """
    eps = cfg.epsilon
    params.check_at(eps, cfg.T)
    block = max(1, int(round(params.Delta(eps) / cfg.dt)))
    if cfg.localization_radius is None:
        cfg = IntegratorConfig(
            epsilon=cfg.epsilon,
            dt=cfg.dt,
            T=cfg.T,
            delay_tau=cfg.delay_tau,
            seed=cfg.seed,
            localization_radius=params.R_eps(eps),
            allow_coarse_dt=cfg.allow_coarse_dt,
        )
    controls = controls or ControlledInputs(theta=params.theta)
    res = integrate_controlled(
        cs, cfg, chi, y0, controls, rng, khasminskii_delta_steps=block, backend=backend
    )
    grid = ~res.fast.is_jump
    dev_y = float(np.mean(np.abs(res.fast.right[grid, 0] - res.yhat[grid]))) if cs.k == 1 else float(
        np.mean(np.linalg.norm(res.fast.right[grid] - res.yhat[grid][:, None], axis=1))
    )
    dev_x = float(np.max(np.abs(res.slow_hat_gap)))
    dev_seg = segment_block_deviation(res.slow.grid_values, cfg.n_tau, cfg.n_steps, block)
    return KhasminskiiResult(
        epsilon=eps,
        dev_hat_X=dev_x,
        dev_Y_mean=dev_y,
        dev_segment=dev_seg,
        a_eps=params.a_eps(eps),
        delta_steps=block,
        localized=res.exit_time is None,
    )


def khasminskii_sweep(
    cs: CoefficientSet,
    eps_list: Sequence[float],
    chi: InitialDatum,
    y0,
    params: KhasminskiiParams,
    n_paths: int,
    seed: int,
    T: float = 1.0,
    dt_ratio: float = 10.0,
    workers: int = 1,
) -> list[dict]:
    """Median deviations over ``n_paths`` localized paths per epsilon."""
    rows = []
    for eps in eps_list:
        cfg = IntegratorConfig(epsilon=eps, dt=eps / dt_ratio, T=T, delay_tau=cs.tau, seed=seed)
        runs = simulate_paths(lambda s: khasminskii_run(cs, cfg, chi, y0, None, params, s), seed, n_paths, workers)
        kept = [r for r in runs if r.localized]
        a = params.a_eps(eps)
        rows.append(
            {
                "epsilon": eps,
                "a_eps": a,
                "n_localized": len(kept),
                "dev_hat_X": float(np.median([r.dev_hat_X for r in kept])) if kept else math.nan,
                "dev_Y_mean": float(np.median([r.dev_Y_mean for r in kept])) if kept else math.nan,
                "dev_segment": float(np.median([r.dev_segment for r in kept])) if kept else math.nan,
                "dev_segment_over_a": float(np.median([r.dev_segment for r in kept])) / a if kept else math.nan,
            }
        )
    return rows

"""Levy measure models, compound-Poisson sampling and nu-integrals.

Two isotropic families are provided:

``gauss_light``
    nu(dz) = exp(-alpha |z|^2) dz, finite total mass (pi/alpha)^(d/2).
``strongly_tempered``
    nu(A) = sum_j int_0^inf 1_A(r u_j) exp(-r^2) r^(-alpha'-1) dr over
    ``radial_count`` unit directions u_j.  Infinite total mass for
    alpha' in (0, 2); sampled above a truncation radius.

Jump lists are stored column-wise (times, marks) because every consumer
vectorises over them; :class:`JumpRecord` is the row view.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator, NamedTuple

import numpy as np
from scipy import integrate, special

from .rng import Streams

QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-10


class DivergentIntegralError(ArithmeticError):
    """A nu-integral does not converge."""


class ContractError(ValueError):
    """A caller-side contract (bound, budget) was violated."""


class JumpRecord(NamedTuple):
    time: float
    mark: np.ndarray


@dataclass(frozen=True)
class JumpList:
    """Jump times (strictly increasing) with their marks, shape ``(n, d)``."""

    times: np.ndarray
    marks: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        m = np.asarray(self.marks, dtype=float)
        if m.ndim == 1:
            m = m.reshape(len(t), -1) if len(t) else m.reshape(0, max(m.size, 1))
        if m.shape[0] != t.shape[0]:
            raise ValueError("times and marks disagree in length")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "marks", m)

    @classmethod
    def empty(cls, dim: int) -> "JumpList":
        return cls(np.empty(0), np.empty((0, dim)))

    @property
    def dim(self) -> int:
        return self.marks.shape[1]

    def __len__(self) -> int:
        return self.times.shape[0]

    def __iter__(self) -> Iterator[JumpRecord]:
        for t, z in zip(self.times, self.marks):
            yield JumpRecord(float(t), z)

    def subset(self, keep: np.ndarray) -> "JumpList":
        return JumpList(self.times[keep], self.marks[keep])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"] + [f"mark_{i}" for i in range(self.dim)])
            for t, z in zip(self.times, self.marks):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in z])

    @classmethod
    def from_csv(cls, path) -> "JumpList":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        dim = len(rows[0]) - 1
        data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, dim + 1)
        return cls(data[:, 0], data[:, 1:])


@dataclass(frozen=True)
class LevyModel:
    """Isotropic Levy measure with a sampler and moment functionals.

    Parameters
    ----------
    kind : {"gauss_light", "strongly_tempered"}
    dim : mark dimension d.
    alpha : Gaussian damping rate of ``gauss_light``.
    alpha_prime : stability-like index of ``strongly_tempered``, in (0, 2).
    radial_count : number of unit directions carrying the angular measure.
    truncation : marks with ``|z| < truncation`` are not sampled; their mass
        is reported by :attr:`mass_below_cutoff`.
    """

    kind: str = "gauss_light"
    dim: int = 1
    alpha: float = 2.0
    alpha_prime: float = 1.0
    radial_count: int = 2
    truncation: float = 0.0
    _dirs: np.ndarray = field(init=False, repr=False, compare=False)
    _rules: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.truncation < 0:
            raise ValueError("truncation must be nonnegative")
        if self.kind == "gauss_light":
            if self.alpha <= 0:
                raise ValueError("alpha must be positive")
        elif self.kind == "strongly_tempered":
            if not 0 < self.alpha_prime < 2:
                raise ValueError("alpha_prime must lie in (0, 2)")
            if self.radial_count < 1:
                raise ValueError("radial_count must be positive")
            if self.truncation == 0:
                raise ValueError("strongly_tempered sampling needs truncation > 0")
        else:
            raise ValueError(f"unknown Levy model kind {self.kind!r}")
        object.__setattr__(self, "_dirs", _directions(self.dim, self.radial_count))
        object.__setattr__(self, "_rules", {})

    @classmethod
    def gauss_light(cls, alpha: float = 2.0, dim: int = 1, truncation: float = 0.0):
        return cls("gauss_light", dim=dim, alpha=alpha, truncation=truncation)

    @classmethod
    def strongly_tempered(
        cls, alpha_prime: float, radial_count: int = 2, dim: int = 1, truncation: float = 1e-3
    ):
        return cls(
            "strongly_tempered",
            dim=dim,
            alpha_prime=alpha_prime,
            radial_count=radial_count,
            truncation=truncation,
        )

    @property
    def finite_activity(self) -> bool:
        return self.kind == "gauss_light"

    @property
    def directions(self) -> np.ndarray:
        return self._dirs

    @cached_property
    def total_mass(self) -> float:
        if self.kind == "gauss_light":
            return (math.pi / self.alpha) ** (self.dim / 2)
        return math.inf

    @cached_property
    def effective_mass(self) -> float:
        """Mass of nu on ``{|z| >= truncation}``; the sampled intensity."""
        d = self.truncation
        if self.kind == "gauss_light":
            if d == 0:
                return self.total_mass
            return self.total_mass * special.gammaincc(self.dim / 2, self.alpha * d * d)
        return self.radial_count * _tempered_tail_mass(self.alpha_prime, d)

    @cached_property
    def mass_below_cutoff(self) -> float:
        return self.total_mass - self.effective_mass

    def radial_log_density(self, r):
        """log of the radial density (all directions summed), r > 0."""
        r = np.asarray(r, dtype=float)
        if self.kind == "gauss_light":
            d = self.dim
            log_area = math.log(2) + (d / 2) * math.log(math.pi) - special.gammaln(d / 2)
            return log_area + (d - 1) * np.log(r) - self.alpha * r * r
        return math.log(self.radial_count) - r * r - (self.alpha_prime + 1) * np.log(r)

    def sample_marks(self, n: int, gen: np.random.Generator) -> np.ndarray:
        """Draw n i.i.d. marks from nu restricted to ``|z| >= truncation``."""
        d = self.dim
        if n == 0:
            return np.empty((0, d))
        if self.kind == "gauss_light":
            # inverse CDF of alpha r^2 ~ Gamma(d/2) above the cutoff
            lo = special.gammainc(d / 2, self.alpha * self.truncation**2)
            u = lo + (1.0 - lo) * gen.random(n)
            r = np.sqrt(special.gammaincinv(d / 2, u) / self.alpha)
            if d == 1:
                sign = np.where(gen.random(n) < 0.5, -1.0, 1.0)
                return (r * sign)[:, None]
            v = gen.standard_normal((n, d))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            return r[:, None] * v
        r = _sample_tempered_radius(self.alpha_prime, self.truncation, n, gen)
        idx = gen.integers(0, self.radial_count, size=n)
        return r[:, None] * self._dirs[idx]

    def quadrature_rule(
        self, n: int, region: str = "all", radial: bool = False
    ) -> tuple[np.ndarray, np.ndarray]:
        """Fixed nodes ``(n_nodes, d)`` and weights with sum w f(z) ~ int f dnu.

        ``region`` is ``"all"``, ``"above"`` (|z| >= truncation) or ``"below"``.
        Gauss-Hermite for ``gauss_light`` (exact on polynomials when the
        region is everything), Gauss-Legendre in log-radius otherwise or
        when ``radial`` is set (accurate for integrands like |z| that are
        smooth only along rays).  Rules are cached and returned read-only.
        """
        key = (int(n), region, bool(radial))
        rule = self._rules.get(key)
        if rule is None:
            nodes, weights = self._build_rule(*key)
            nodes.setflags(write=False)
            weights.setflags(write=False)
            rule = self._rules[key] = (nodes, weights)
        return rule

    def _build_rule(self, n: int, region: str, radial: bool) -> tuple[np.ndarray, np.ndarray]:
        if (
            self.kind == "gauss_light"
            and not (radial and self.dim == 1)
            and (region == "all" or self.truncation == 0)
        ):
            if region == "below":
                return np.zeros((0, self.dim)), np.zeros(0)
            x, w = np.polynomial.hermite.hermgauss(n)
            x = x / math.sqrt(self.alpha)
            w = w / math.sqrt(self.alpha)
            if self.dim == 1:
                return x[:, None], w
            grids = np.meshgrid(*([x] * self.dim), indexing="ij")
            nodes = np.stack([g.ravel() for g in grids], axis=1)
            ws = np.meshgrid(*([w] * self.dim), indexing="ij")
            weights = np.prod(np.stack([g.ravel() for g in ws], axis=1), axis=1)
            return nodes, weights
        # radial rule on [r_lo, r_hi] in s = log r, times the direction atoms
        cut = max(self.truncation, 1e-300)
        r_min, r_max = 1e-8, 8.0 / math.sqrt(self.alpha if self.kind == "gauss_light" else 1.0)
        if region == "above":
            lo, hi = cut, r_max
        elif region == "below":
            lo, hi = r_min, cut
        else:
            lo, hi = r_min, r_max
        if hi <= lo:
            return np.zeros((0, self.dim)), np.zeros(0)
        s, ws = np.polynomial.legendre.leggauss(n)
        a, b = math.log(lo), math.log(hi)
        s = 0.5 * (b - a) * s + 0.5 * (a + b)
        ws = 0.5 * (b - a) * ws
        r = np.exp(s)
        # dr = r ds folded into the weights
        if self.kind == "gauss_light":
            if self.dim != 1:
                raise NotImplementedError("truncated rule for gauss_light needs d = 1")
            w_rad = ws * np.exp(-self.alpha * r * r) * r
            dirs = np.array([[1.0], [-1.0]])
        else:
            w_rad = ws * np.exp(-r * r - self.alpha_prime * np.log(r))
            dirs = self._dirs
        nodes = (r[None, :, None] * dirs[:, None, :]).reshape(-1, self.dim)
        weights = np.tile(w_rad, len(dirs))
        return nodes, weights


def _directions(dim: int, count: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0 if j % 2 == 0 else -1.0] for j in range(count)])
    if dim == 2:
        ang = 2 * math.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    out = np.zeros((count, dim))
    for j in range(count):
        out[j, (j // 2) % dim] = 1.0 if j % 2 == 0 else -1.0
    return out


def _tempered_tail_mass(alpha_prime: float, delta: float) -> float:
    """int_delta^inf exp(-r^2) r^(-a'-1) dr = Gamma(-a'/2, delta^2) / 2."""
    a = -alpha_prime / 2
    x = delta * delta
    upper_next = special.gammaincc(a + 1, x) * special.gamma(a + 1)
    return 0.5 * (upper_next - x**a * math.exp(-x)) / a


def _sample_tempered_radius(alpha_prime, delta, n, gen):
    # Pareto(alpha', delta) envelope; accept with exp(-(r^2 - delta^2)) <= 1
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(16, int(1.3 * (n - filled)))
        r = delta * gen.random(m) ** (-1.0 / alpha_prime)
        keep = r[gen.random(m) < np.exp(-(r * r - delta * delta))]
        take = min(len(keep), n - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


# --------------------------------------------------------------------------
# operations


@dataclass(frozen=True)
class IntegrabilityResult:
    status: str  # "finite", "infinite" or "indeterminate"
    value: float

    @property
    def finite(self) -> bool | None:
        return {"finite": True, "infinite": False}.get(self.status)


def check_exponential_integrability(model: LevyModel, alpha_probe: float) -> IntegrabilityResult:
    """Evaluate int_{|z|>=1} exp(alpha_probe |z|^2) nu(dz).

    The radial integrand is first checked for decay on r in [1, 64]; a
    non-decaying tail is reported as infinite.  Otherwise the integral is
    computed by adaptive quadrature on [1, inf); a quadrature that does not
    meet tolerance is ``indeterminate`` rather than a guess.
    """
    if alpha_probe <= 1:
        raise ValueError("alpha_probe must exceed 1")

    def log_f(r):
        return alpha_probe * r * r + model.radial_log_density(r)

    probe = np.array([1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0])
    lf = log_f(probe)
    if not np.all(np.isfinite(lf)) or lf[-1] >= lf[-2] or lf[-1] > -50 and lf[-1] >= lf[0]:
        return IntegrabilityResult("infinite", math.inf)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(
                lambda r: math.exp(log_f(r)), 1.0, np.inf,
                epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200,
            )
        except integrate.IntegrationWarning:
            return IntegrabilityResult("indeterminate", math.nan)
    if not math.isfinite(val) or err > max(1e-8 * abs(val), 1e-10):
        return IntegrabilityResult("indeterminate", val)
    return IntegrabilityResult("finite", val)


def sample_jumps(
    model: LevyModel, rate_scale: float, horizon: float, rng: Streams
) -> JumpList:
    """Points of a Poisson measure on (0, horizon] x R^d with intensity
    ``ds x rate_scale * nu`` restricted to ``|z| >= truncation``.

    Count and times come from the ``jump_count`` channel, marks from
    ``jump_mark``.
    """
    if rate_scale <= 0:
        raise ValueError("rate_scale must be positive")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    mass = model.effective_mass
    if horizon == 0 or mass == 0:
        return JumpList.empty(model.dim)
    if not math.isfinite(mass):
        raise ValueError("effective mass is infinite; set a truncation")
    gen_n = rng.channel("jump_count")
    n = int(gen_n.poisson(rate_scale * mass * horizon))
    times = np.sort(gen_n.random(n)) * horizon
    # uniform(0,1) may return exactly 0
    times[times <= 0.0] = np.nextafter(0.0, 1.0)
    marks = model.sample_marks(n, rng.channel("jump_mark"))
    return JumpList(times, marks)


def thin_controlled(
    jumps: JumpList,
    phi: Callable[[float, np.ndarray], float],
    phi_max: float,
    rng: Streams,
) -> JumpList:
    """Keep each point with probability ``phi(t, z) / phi_max``.

    With base points drawn at ``phi_max`` times the reference intensity the
    survivors realise the controlled measure of intensity ``phi`` times the
    reference.  Uniforms come from the ``thinning`` channel.
    """
    if phi_max <= 0:
        raise ValueError("phi_max must be positive")
    n = len(jumps)
    if n == 0:
        return jumps
    vals = np.fromiter((phi(t, z) for t, z in zip(jumps.times, jumps.marks)), float, n)
    if np.any(vals < 0) or np.any(~np.isfinite(vals)):
        raise ContractError("phi must be finite and nonnegative")
    if np.any(vals > phi_max * (1 + 1e-12)):
        i = int(np.argmax(vals))
        raise ContractError(f"phi={vals[i]!r} exceeds phi_max={phi_max!r} at t={jumps.times[i]!r}")
    u = rng.channel("thinning").random(n)
    return jumps.subset(u * phi_max < vals)


class QuadResult(NamedTuple):
    value: np.ndarray
    error: float


def nu_integral(
    model: LevyModel,
    weight: Callable[[np.ndarray], np.ndarray],
    region: str = "all",
) -> QuadResult:
    """Adaptive quadrature of ``int weight(z) nu(dz)`` (vector valued).

    ``weight`` maps a mark of shape ``(d,)`` to a scalar or vector.
    ``region`` restricts to ``|z| >= truncation`` ("above") or below it.
    Raises :class:`DivergentIntegralError` when the weighted tail does not
    decay or the quadrature does not converge.
    """
    probe = np.asarray(weight(np.ones(model.dim)), dtype=float)
    k = probe.size
    if model.dim > 1 and model.kind == "gauss_light":
        return _tensor_hermite(model, weight, k)
    lo_r = model.truncation if region == "above" else 0.0
    hi_r = model.truncation if region == "below" else math.inf
    if hi_r <= lo_r:
        return QuadResult(np.zeros(k), 0.0)
    dirs = model.directions if model.kind == "strongly_tempered" else np.array([[1.0], [-1.0]])
    if model.kind == "gauss_light":
        dirs = dirs[:, : model.dim]
    out = np.zeros(k)
    err = 0.0
    for comp in range(k):
        for u in dirs:
            def integrand(s, u=u, comp=comp):
                # both ends vetted by _check_tails before integration
                if s > 7.0 or s < -700.0:
                    return 0.0
                r = math.exp(s)
                w = float(np.asarray(weight(r * u), dtype=float).reshape(-1)[comp])
                if w == 0.0 or not math.isfinite(w):
                    return w
                # combine in log space: density and weight may each be huge
                return math.copysign(math.exp(math.log(abs(w)) + _atom_log_density(model, r) + s), w)

            a = math.log(lo_r) if lo_r > 0 else -np.inf
            b = math.log(hi_r) if math.isfinite(hi_r) else np.inf
            _check_tails(integrand, a, b)
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                try:
                    v, e = _quad_split(integrand, a, b)
                except integrate.IntegrationWarning as exc:
                    raise DivergentIntegralError(f"nu-integral did not converge: {exc}") from None
            out[comp] += v
            err += e
    return QuadResult(out, err)


def _atom_log_density(model: LevyModel, r: float) -> float:
    # density along one direction atom (d = 1 line for gauss_light)
    if model.kind == "gauss_light":
        return -model.alpha * r * r
    return -r * r - (model.alpha_prime + 1) * math.log(r)


def _quad_split(f, a, b):
    # split log-radius integrals at s = 0 so both halves see smooth decay
    pts = [p for p in (a, 0.0, b)]
    pts = sorted(set(p for p in pts if a <= p <= b))
    total, err = 0.0, 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi > lo:
            v, e = integrate.quad(f, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
            total += v
            err += e
    return total, err


def _check_tails(f, a, b):
    # the integrand in log-radius must decay at both infinite ends
    def mags(points):
        try:
            return [abs(f(s)) for s in points]
        except (OverflowError, FloatingPointError):
            return [math.inf]

    for end, points in ((b, (2.0, 3.0, 4.0, 5.0)), (a, (-20.0, -30.0, -40.0))):
        if math.isfinite(end):
            continue
        vals = mags(points)
        if not all(math.isfinite(v) for v in vals) or (vals[-1] > 1e-300 and vals[-1] >= vals[-2]):
            where = "large" if end > 0 else "small"
            raise DivergentIntegralError(f"weighted nu-integral diverges at {where} |z|")


def _tensor_hermite(model, weight, k):
    vals = []
    for n in (24, 48):
        nodes, w = model.quadrature_rule(n)
        f = np.array([np.asarray(weight(z), dtype=float).reshape(-1) for z in nodes])
        vals.append(w @ f)
    err = float(np.max(np.abs(vals[1] - vals[0])))
    if not np.all(np.isfinite(vals[1])) or err > 1e-6 * max(1.0, float(np.max(np.abs(vals[1])))):
        raise DivergentIntegralError("tensor Hermite rule did not settle")
    return QuadResult(vals[1], err)


def levy_condition_integral(model: LevyModel) -> float:
    """int (1 ^ |z|^2) nu(dz); finite for every admissible model."""
    return float(nu_integral(model, lambda z: min(1.0, float(z @ z))).value[0])


def levy_model_from_config(cfg: dict) -> LevyModel:
    cfg = dict(cfg)
    kind = cfg.pop("kind", "gauss_light")
    return LevyModel(kind=kind, **cfg)

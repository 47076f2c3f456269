"""Coefficient sets, the built-in Gaussian/OU model and condition validators.

Coefficient call conventions (``d`` slow dim, ``k`` fast dim, ``m`` marks):

* ``a(seg, y) -> (d,)``          ``sigma(seg) -> (d, d)``
* ``c(seg, Z) -> (m, d)``        with ``Z`` of shape ``(m, mark_dim)``
* ``f(seg, y) -> (k,)``          ``g(seg, y) -> (k, k)``
* ``h(seg, y, Z) -> (m, k)``

Every function must be pure; :func:`validate_conditions` spot-checks that.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .levy import LevyModel
from .segment import InitialDatum, Segment, segment_sup_distance


class ConfigurationError(ValueError):
    pass


CONDITION_IDS = (
    "Lipschitz",
    "SublinearGrowth",
    "InitDelayLipschitz",
    "Dissipativity_a",
    "Dissipativity_f",
    "Dissipativity_fLip",
    "Dissipativity_cross",
    "GBound",
    "HBound",
)

# slack for rounding when a declared constant is attained exactly
_RATIO_SLACK = 1e-12
# max of d/du [u^2 / (1 + u^2)] = 3 sqrt(3) / 8 at u = 1/sqrt(3)
_SAT_SLOPE = 3.0 * math.sqrt(3.0) / 8.0


@dataclass(frozen=True)
class Constants:
    """Declared bounds checked by :func:`validate_conditions`."""

    L: float
    L1: float
    beta1: float
    beta2: float
    Lambda: float
    lambda_: float = 1.0
    abar_lipschitz: float = math.nan
    dabar_lipschitz: float = math.nan


@dataclass(frozen=True)
class ProbeBox:
    """Region on which declared constants are claimed to hold.

    Segments take node values in ``[-segment_bound, segment_bound]``, fast
    states satisfy ``|y| <= y_box`` and the mark probes of the h-bound have
    ``z_lo <= |z| <= z_hi``.
    """

    segment_bound: float = 2.0
    y_box: float = 2.0
    z_lo: float = 0.05
    z_hi: float = 4.0
    nodes: int = 8


@dataclass(frozen=True)
class CoefficientSet:
    name: str
    dims: tuple[int, int]
    tau: float
    levy: LevyModel
    a: Callable
    sigma: Callable
    c: Callable
    f: Callable
    g: Callable
    h: Callable
    constants: Constants
    fast_jump_compensated: bool = True
    abar_analytic: Optional[Callable] = None
    dabar_analytic: Optional[Callable] = None
    invariant_sampler: Optional[Callable] = None
    probe_box: ProbeBox = field(default_factory=ProbeBox)
    params: dict = field(default_factory=dict)
    # name of a compiled path kernel able to integrate this model, if any
    kernel: Optional[str] = None

    @property
    def d(self) -> int:
        return self.dims[0]

    @property
    def k(self) -> int:
        return self.dims[1]

    def with_params(self, **updates) -> "CoefficientSet":
        if self.name != "gauss_ou":
            raise ConfigurationError("with_params is only defined for built-in models")
        p = dict(self.params)
        p.update(updates)
        return builtin_gauss_ou(p, levy=self.levy, tau=self.tau)


@dataclass
class ConditionReport:
    condition_id: str
    passed: bool
    worst_ratio: float
    witness: str
    probes: int = 0

    def row(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{self.condition_id:<20} {flag:<5} worst_ratio={self.worst_ratio:.6g}"


# --------------------------------------------------------------------------
# built-in model

GAUSS_OU_DEFAULTS = {
    "kappa": 1.0,
    "kappa2": 0.25,
    "gamma_coupling": 0.5,
    "f1_base": 1.0,
    "g_level": 1.0,
    "f1_mod": 0.0,
    "c_mod": 0.1,
    "sigma_level": 1.0,
    "jump_scale": 1.0,
    "fast_diffusion": True,
    "fast_jumps": True,
}


def builtin_gauss_ou(
    params: Optional[dict] = None,
    *,
    levy: Optional[LevyModel] = None,
    tau: float = 1.0,
    probe_box: Optional[ProbeBox] = None,
    **overrides,
) -> CoefficientSet:
    """Scalar slow/fast model with an OU fast variable and a jump reset.

    Slow drift ``a = -kappa z(0) - kappa2 z(-tau) + gamma_coupling z(-tau) y``,
    ``sigma = sigma_level``, ``c = jump_scale * z_mark * (1 + c_mod tanh z(0))``.
    Fast drift ``-f1(z) y`` with ``f1 = f1_base (1 + f1_mod z(0)^2/(1+z(0)^2))``,
    constant diffusion ``g_level`` and reset jump
    ``h = g_level sqrt(alpha / f1) z_mark - y`` on the non-compensated
    measure, so each jump redraws ``y`` from the invariant Gaussian
    ``N(0, g_level^2 / (2 f1))``.

    ``f1_mod = 0`` (the default) makes the fast dynamics independent of the
    slow segment.  ``fast_diffusion`` / ``fast_jumps`` switch the fast noise
    channels off, ``sigma_level = 0`` and ``jump_scale = 0`` the slow ones.
    """
    p = dict(GAUSS_OU_DEFAULTS)
    p.update(params or {})
    p.update(overrides)
    unknown = set(p) - set(GAUSS_OU_DEFAULTS)
    if unknown:
        raise ConfigurationError(f"unknown gauss_ou parameters: {sorted(unknown)}")
    levy = LevyModel.gauss_light(2.0) if levy is None else levy
    box = ProbeBox() if probe_box is None else probe_box
    if levy.kind != "gauss_light" or levy.dim != 1:
        raise ConfigurationError("gauss_ou needs a one-dimensional gauss_light measure")
    f1b, gl = float(p["f1_base"]), float(p["g_level"])
    if f1b <= 0 or gl <= 0:
        raise ValueError("f1_base and g_level must be positive")
    if p["f1_mod"] <= -1:
        raise ValueError("f1_mod must exceed -1 so that f1 stays positive")
    if tau <= 0:
        raise ValueError("tau must be positive")
    kap, kap2, gam = float(p["kappa"]), float(p["kappa2"]), float(p["gamma_coupling"])
    fm, cm = float(p["f1_mod"]), float(p["c_mod"])
    sig, js = float(p["sigma_level"]), float(p["jump_scale"])
    gdiff = gl if p["fast_diffusion"] else 0.0
    jon = 1.0 if p["fast_jumps"] else 0.0
    alpha = levy.alpha
    root_alpha = math.sqrt(alpha)

    def f1(x0):
        return f1b * (1.0 + fm * x0 * x0 / (1.0 + x0 * x0))

    def head(seg):
        return float(seg.at(0.0)[0])

    def tail(seg):
        return float(seg.at(-seg.tau)[0])

    def a(seg, y):
        zt = tail(seg)
        return np.array([-kap * head(seg) - kap2 * zt + gam * zt * float(y[0])])

    def sigma(seg):
        return np.array([[sig]])

    def c(seg, Z):
        Z = np.asarray(Z, dtype=float)
        return js * Z[:, :1] * (1.0 + cm * math.tanh(head(seg)))

    def f(seg, y):
        return np.array([-f1(head(seg)) * float(y[0])])

    def g(seg, y):
        return np.array([[gdiff]])

    def h(seg, y, Z):
        Z = np.asarray(Z, dtype=float)
        scale = gl * root_alpha / math.sqrt(f1(head(seg)))
        return jon * (scale * Z[:, :1] - float(y[0]))

    def abar(seg):
        return np.array([-kap * head(seg) - kap2 * tail(seg)])

    def dabar(seg, eta):
        return np.array([-kap * float(eta.at(0.0)[0]) - kap2 * float(eta.at(-eta.tau)[0])])

    def inv_sampler(seg, gen, n=None):
        # the reset redraws from the same Gaussian, so it is invariant
        # whenever the diffusion channel is on
        sd = gl / math.sqrt(2.0 * f1(head(seg)))
        if n is None:
            return np.array([sd * gen.standard_normal()])
        return sd * gen.standard_normal((n, 1))

    consts = _gauss_ou_constants(p, levy, box)
    return CoefficientSet(
        name="gauss_ou",
        dims=(1, 1),
        tau=float(tau),
        levy=levy,
        a=a,
        sigma=sigma,
        c=c,
        f=f,
        g=g,
        h=h,
        constants=consts,
        fast_jump_compensated=False,
        abar_analytic=abar,
        dabar_analytic=dabar,
        invariant_sampler=inv_sampler if p["fast_diffusion"] else None,
        probe_box=box,
        params=p,
        kernel="gauss_ou",
    )


def _gauss_ou_constants(p: dict, levy: LevyModel, box: ProbeBox) -> Constants:
    """Analytic constants of the built-in on ``box``; derivations inline."""
    kap, kap2, gam = abs(p["kappa"]), abs(p["kappa2"]), abs(p["gamma_coupling"])
    f1b, fm, gl = p["f1_base"], p["f1_mod"], p["g_level"]
    cm, sig, js = abs(p["c_mod"]), abs(p["sigma_level"]), abs(p["jump_scale"])
    B, yb = box.segment_bound, box.y_box
    gdiff = gl if p["fast_diffusion"] else 0.0
    jon = 1.0 if p["fast_jumps"] else 0.0
    alpha = levy.alpha
    mass = levy.total_mass
    m_abs = 1.0 / alpha  # int |z| nu(dz) for exp(-alpha z^2) on the line
    f1min = f1b * min(1.0, 1.0 + fm)
    f1max = f1b * max(1.0, 1.0 + fm)
    lf1 = f1b * abs(fm) * _SAT_SLOPE  # Lipschitz constant of f1 in z(0)
    lf1inv = 0.5 * f1min ** -1.5 * lf1  # ... and of f1^(-1/2)
    smax = gl * math.sqrt(alpha / f1min)  # largest reset scale

    # |a - a~| <= (kappa + kappa2 + gamma y_box)|dz| + gamma B |dy|
    L = max(kap + kap2 + gam * yb, gam * B)
    # int |c - c~| dnu <= js cm m_abs |dz|  (tanh is 1-Lipschitz)
    L = max(L, js * cm * m_abs)
    # |f - f~| <= f1max |dy| + y_box lf1 |dz|
    L = max(L, f1max, yb * lf1)
    # int |h - h~| dnu <= gl sqrt(alpha) lf1inv m_abs |dz| + mass |dy|
    L = max(L, jon * gl * math.sqrt(alpha) * lf1inv * m_abs, jon * mass)

    L1 = max(kap + kap2, gam * B, sig, js * (1 + cm) * m_abs, f1max, gdiff, jon * smax * m_abs, jon * mass)

    m_eff = jon * mass
    slack = m_eff if m_eff > 0 else f1min
    beta1 = 2.0 * f1min - slack
    # cross term: 2|dy| y_box lf1 |dz| <= slack dy^2 + (y_box lf1)^2 / slack dz^2
    beta2 = max((yb * lf1) ** 2 / slack, 1e-6)
    Lambda = max(gdiff, jon * (smax + yb / box.z_lo))
    return Constants(
        L=L,
        L1=L1,
        beta1=beta1,
        beta2=beta2,
        Lambda=Lambda,
        lambda_=1.0,
        abar_lipschitz=kap + kap2,
        dabar_lipschitz=0.0,
    )


def zero_noise_variant(cs: CoefficientSet, *, slow: bool = True, fast: bool = True) -> CoefficientSet:
    """Built-in with the selected noise channels switched off."""
    upd: dict[str, Any] = {}
    if slow:
        upd.update(sigma_level=0.0, jump_scale=0.0)
    if fast:
        upd.update(fast_diffusion=False, fast_jumps=False)
    return cs.with_params(**upd)


# --------------------------------------------------------------------------
# Frechet derivative of the averaged coefficient


def dabar(
    cs: CoefficientSet,
    base: Segment,
    direction: Segment,
    abar: Optional[Callable[[Segment], np.ndarray]] = None,
    h: float = 1e-4,
) -> np.ndarray:
    """D abar(base) applied to ``direction``.

    Uses the analytic derivative when the model supplies one, otherwise a
    central difference with step ``h / ||direction||_inf`` on ``abar`` (an
    explicit evaluator, or the model's analytic abar).
    """
    if cs.dabar_analytic is not None and abar is None:
        return np.asarray(cs.dabar_analytic(base, direction), dtype=float)
    evaluator = abar if abar is not None else cs.abar_analytic
    if evaluator is None:
        raise ConfigurationError("need an analytic derivative or an abar evaluator")
    norm = direction.sup_norm()
    if norm == 0:
        return np.zeros(cs.d)
    step = h / norm
    plus = base.combine(direction, 1.0, step)
    minus = base.combine(direction, 1.0, -step)
    return (np.asarray(evaluator(plus)) - np.asarray(evaluator(minus))) / (2 * step)


# --------------------------------------------------------------------------
# validators


def _ratio(lhs: float, rhs: float) -> float:
    """Observed/declared ratio for an inequality ``lhs <= rhs``.

    ``lhs / rhs`` when the bound is positive; otherwise a signed relative
    excess ``1 + (lhs - rhs) / max(|lhs|, |rhs|)``, which is also <= 1
    exactly when the inequality holds.  A tiny relative slack absorbs
    rounding when a declared constant is attained exactly.
    """
    if not (math.isfinite(lhs) and math.isfinite(rhs)):
        return math.inf
    rhs = rhs + _RATIO_SLACK * (abs(lhs) + abs(rhs))
    if rhs > 0:
        return lhs / rhs
    scale = max(abs(lhs), abs(rhs))
    if scale == 0:
        return 0.0
    return 1.0 + (lhs - rhs) / scale


class _Tracker:
    def __init__(self, cid: str):
        self.cid = cid
        self.worst = -math.inf
        self.witness: dict = {}
        self.count = 0

    def add(self, lhs, rhs, witness_fn: Callable[[], dict]):
        r = _ratio(float(lhs), float(rhs))
        self.count += 1
        if r > self.worst or (math.isinf(r) and not self.witness):
            self.worst = r
            self.witness = dict(witness_fn(), lhs=float(lhs), rhs=float(rhs))

    def fail(self, witness: dict):
        self.count += 1
        self.worst = math.inf
        self.witness = witness

    def report(self) -> ConditionReport:
        worst = self.worst if self.count else math.inf
        return ConditionReport(
            condition_id=self.cid,
            passed=bool(worst <= 1.0),
            worst_ratio=float(worst),
            witness=json.dumps(self.witness, default=_jsonable, sort_keys=True),
            probes=self.count,
        )


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return repr(x)


def _probe_segment(gen, tau, dim, box: ProbeBox):
    th = np.linspace(-tau, 0.0, box.nodes)
    vals = gen.uniform(-box.segment_bound, box.segment_bound, size=(box.nodes, dim))
    return Segment.from_nodes(th, vals, tau), vals


def _edge_segments(tau, dim, box: ProbeBox):
    """Deterministic probes at corners of the box: constants and one-node spikes."""
    th = np.linspace(-tau, 0.0, box.nodes)
    B = box.segment_bound
    out = []
    for v in (0.0, B, -B):
        out.append(np.full((box.nodes, dim), v))
    for j in (0, box.nodes - 1):
        for v in (B, -B):
            vals = np.zeros((box.nodes, dim))
            vals[j] = v
            out.append(vals)
    return [(Segment.from_nodes(th, v, tau), v) for v in out]


def validate_conditions(
    cs: CoefficientSet,
    probes: int,
    rng: np.random.Generator,
    chi: Optional[InitialDatum] = None,
) -> list[ConditionReport]:
    """Probe every structural inequality against the declared constants.

    Returns one :class:`ConditionReport` per entry of :data:`CONDITION_IDS`.
    Random probes are piecewise-linear segments with node values uniform
    in the probe box, fast states uniform in ``[-y_box, y_box]`` and a fixed
    mark quadrature; deterministic edge probes (constant and single-spike
    segments, ``|y| = y_box``) are added.  An exception or a NaN marks the
    condition as failed with the offending probe as witness.
    """
    if probes < 100:
        raise ValueError("probes must be at least 100")
    K = cs.constants
    box = cs.probe_box
    d, k = cs.dims
    tau = cs.tau
    chi = InitialDatum.constant(np.ones(d)) if chi is None else chi
    Zr, Wr = cs.levy.quadrature_rule(64, radial=True)  # |.|-type integrands
    Zh, Wh = cs.levy.quadrature_rule(64)  # polynomial integrands
    tr = {cid: _Tracker(cid) for cid in CONDITION_IDS}

    def nint(fn, Z, W):
        vals = np.asarray(fn(Z), dtype=float)
        return float(W @ vals)

    # determinism spot-check: two evaluations must agree bit for bit
    seg0, _ = _probe_segment(rng, tau, d, box)
    y0 = rng.uniform(-box.y_box, box.y_box, k)
    try:
        pairs = [
            (cs.a(seg0, y0), cs.a(seg0, y0)),
            (cs.sigma(seg0), cs.sigma(seg0)),
            (cs.c(seg0, Zh), cs.c(seg0, Zh)),
            (cs.f(seg0, y0), cs.f(seg0, y0)),
            (cs.g(seg0, y0), cs.g(seg0, y0)),
            (cs.h(seg0, y0, Zh), cs.h(seg0, y0, Zh)),
        ]
        deterministic = all(np.array_equal(np.asarray(p), np.asarray(q)) for p, q in pairs)
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        deterministic = False
        y0 = np.asarray(y0)
        pairs = repr(exc)
    if not deterministic:
        w = {"error": "coefficient evaluation is not deterministic", "y": y0}
        return [ConditionReport(cid, False, math.inf, json.dumps(w, default=_jsonable)) for cid in CONDITION_IDS]

    edges = _edge_segments(tau, d, box)
    n_rand = max(probes - len(edges), 0)

    def draw(i):
        if i < len(edges):
            seg, vals = edges[i]
            y = np.full(k, box.y_box if i % 2 == 0 else -box.y_box)
        else:
            seg, vals = _probe_segment(rng, tau, d, box)
            y = rng.uniform(-box.y_box, box.y_box, k)
        return seg, vals, y

    def guarded(cid, fn, witness):
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - evaluation errors are failures
            tr[cid].fail(dict(witness(), error=repr(exc)))

    n_total = len(edges) + n_rand
    for i in range(n_total):
        s1, v1, y1 = draw(i)
        s2, v2, y2 = draw(len(edges) + 1 + i) if i < len(edges) else draw(n_total)
        if i % 3 == 1:
            y2 = y1.copy()  # isolate the segment direction
        if i % 3 == 2:
            s2, v2 = s1, v1  # isolate the state direction
            y2 = np.clip(y1 + rng.normal(0, 0.5, k), -box.y_box, box.y_box)
        dz = segment_sup_distance(s1, s2)
        dy = float(np.linalg.norm(y1 - y2))
        n1 = s1.sup_norm()
        wit = lambda: {"seg1": v1, "seg2": v2, "y1": y1, "y2": y2}  # noqa: E731

        def lipschitz():
            if dz + dy == 0:
                return
            rhs = K.L * (dz + dy)
            rhs_z = K.L * dz
            tr["Lipschitz"].add(np.linalg.norm(cs.a(s1, y1) - cs.a(s2, y2)), rhs, wit)
            tr["Lipschitz"].add(np.linalg.norm(cs.sigma(s1) - cs.sigma(s2), 2), rhs_z, wit)
            dc = np.linalg.norm(np.asarray(cs.c(s1, Zr)) - np.asarray(cs.c(s2, Zr)), axis=1)
            tr["Lipschitz"].add(float(Wr @ dc), rhs_z, wit)
            tr["Lipschitz"].add(np.linalg.norm(cs.f(s1, y1) - cs.f(s2, y2)), rhs, wit)
            tr["Lipschitz"].add(np.linalg.norm(cs.g(s1, y1) - cs.g(s2, y2), 2), rhs, wit)
            dh = np.linalg.norm(np.asarray(cs.h(s1, y1, Zr)) - np.asarray(cs.h(s2, y2, Zr)), axis=1)
            tr["Lipschitz"].add(float(Wr @ dh), rhs, wit)

        def growth():
            w1 = lambda: {"seg": v1, "y": y1}  # noqa: E731
            ny = float(np.linalg.norm(y1))
            rhs = K.L1 * (1 + n1 + ny)
            rhs_z = K.L1 * (1 + n1)
            t = tr["SublinearGrowth"]
            t.add(np.linalg.norm(cs.a(s1, y1)), rhs, w1)
            t.add(np.linalg.norm(cs.sigma(s1), 2), rhs_z, w1)
            t.add(float(Wr @ np.linalg.norm(np.asarray(cs.c(s1, Zr)), axis=1)), rhs_z, w1)
            t.add(np.linalg.norm(cs.f(s1, y1)), rhs, w1)
            t.add(np.linalg.norm(cs.g(s1, y1), 2), rhs, w1)
            t.add(float(Wr @ np.linalg.norm(np.asarray(cs.h(s1, y1, Zr)), axis=1)), rhs, w1)

        def diss_a():
            if dz == 0:
                return
            lhs = float(np.dot(cs.a(s1, y1) - cs.a(s2, y1), s1.at(0.0) - s2.at(0.0)))
            tr["Dissipativity_a"].add(lhs, -K.beta1 * dz * dz, wit)

        def diss_f():
            w1 = lambda: {"seg": v1, "y": y1}  # noqa: E731
            hh = np.asarray(cs.h(s1, y1, Zh))
            lhs = (
                2 * float(np.dot(y1, cs.f(s1, y1)))
                + float(np.sum(np.asarray(cs.g(s1, y1)) ** 2))
                + float(Wh @ np.sum(hh * hh, axis=1))
            )
            tr["Dissipativity_f"].add(lhs, -K.beta1 * float(y1 @ y1) + K.beta2 * n1 * n1, w1)

        def diss_flip():
            if dy == 0:
                return
            dh = np.asarray(cs.h(s1, y1, Zh)) - np.asarray(cs.h(s1, y2, Zh))
            lhs = (
                2 * float(np.dot(y1 - y2, cs.f(s1, y1) - cs.f(s1, y2)))
                + float(np.sum((np.asarray(cs.g(s1, y1)) - np.asarray(cs.g(s1, y2))) ** 2))
                + float(Wh @ np.sum(dh * dh, axis=1))
            )
            tr["Dissipativity_fLip"].add(lhs, -K.beta1 * dy * dy + K.beta2 * n1 * n1, wit)

        def diss_cross():
            if dy == 0 and dz == 0:
                return
            lhs = 2 * float(np.dot(y1 - y2, cs.f(s1, y1) - cs.f(s2, y2)))
            tr["Dissipativity_cross"].add(lhs, -K.beta1 * dy * dy + K.beta2 * dz * dz, wit)

        def gbound():
            tr["GBound"].add(np.linalg.norm(cs.g(s1, y1), 2), K.Lambda, lambda: {"seg": v1, "y": y1})

        def hbound():
            r = rng.uniform(box.z_lo, box.z_hi)
            u = rng.standard_normal(cs.levy.dim)
            z = (r * u / np.linalg.norm(u))[None, :]
            lhs = float(np.linalg.norm(np.asarray(cs.h(s1, y1, z))[0]))
            tr["HBound"].add(lhs, K.Lambda * r, lambda: {"seg": v1, "y": y1, "z": z[0]})

        for cid, fn in (
            ("Lipschitz", lipschitz),
            ("SublinearGrowth", growth),
            ("Dissipativity_a", diss_a),
            ("Dissipativity_f", diss_f),
            ("Dissipativity_fLip", diss_flip),
            ("Dissipativity_cross", diss_cross),
            ("GBound", gbound),
            ("HBound", hbound),
        ):
            guarded(cid, fn, wit)

    # a(0, y) = 0 belongs to the structural part of the dissipativity block
    zero = Segment.constant(np.zeros(d), tau)
    for y in np.linspace(-box.y_box, box.y_box, 9):
        yy = np.full(k, y)
        guarded(
            "Dissipativity_a",
            lambda: tr["Dissipativity_a"].add(
                np.linalg.norm(cs.a(zero, yy)), 0.0, lambda: {"seg": "zero", "y": yy}
            ),
            lambda: {"seg": "zero", "y": yy},
        )

    # initial datum
    t_init = tr["InitDelayLipschitz"]
    th = rng.uniform(-tau, 0.0, size=(probes, 2))
    for t1, t2 in th:
        if t1 == t2:
            continue
        try:
            lhs = float(np.linalg.norm(np.atleast_1d(chi.chi(t1)) - np.atleast_1d(chi.chi(t2))))
            t_init.add(lhs, chi.lipschitz_lambda * abs(t1 - t2), lambda: {"theta1": t1, "theta2": t2})
        except Exception as exc:  # noqa: BLE001
            t_init.fail({"theta1": t1, "theta2": t2, "error": repr(exc)})

    return [tr[cid].report() for cid in CONDITION_IDS]


def dabar_lipschitz_probe(
    cs: CoefficientSet, pairs: int, rng: np.random.Generator, abar=None
) -> float:
    """Worst ratio |Da(z1)eta - Da(z2)eta| / (L2 ||z1 - z2||) over unit directions."""
    box = cs.probe_box
    L2 = cs.constants.dabar_lipschitz
    worst = 0.0
    for _ in range(pairs):
        s1, _ = _probe_segment(rng, cs.tau, cs.d, box)
        s2, _ = _probe_segment(rng, cs.tau, cs.d, box)
        eta, _ = _probe_segment(rng, cs.tau, cs.d, box)
        eta = eta.combine(eta, 1.0 / eta.sup_norm(), 0.0)
        lhs = float(np.linalg.norm(dabar(cs, s1, eta, abar) - dabar(cs, s2, eta, abar)))
        worst = max(worst, _ratio(lhs, L2 * segment_sup_distance(s1, s2)))
    return worst


def condition_table(reports: list[ConditionReport]) -> str:
    return "\n".join(r.row() for r in reports)


__all__ = [
    "CONDITION_IDS",
    "CoefficientSet",
    "ConditionReport",
    "ConfigurationError",
    "Constants",
    "ProbeBox",
    "builtin_gauss_ou",
    "condition_table",
    "dabar",
    "dabar_lipschitz_probe",
    "validate_conditions",
    "zero_noise_variant",
]

"""Cadlag paths on [-tau, T], delay segments and initial data.

A :class:`SamplePath` is an event log: sorted abscissae (grid points and
jump times) with a left value and a right value at each.  Between two
consecutive events the path is the straight line from the right value of
the first to the left value of the second, so jumps keep their exact pre-
and post-jump values and grid points interpolate linearly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np


class SegmentShapeError(ValueError):
    pass


class SamplePath:
    """Piecewise-linear cadlag path stored as an event log.

    Parameters
    ----------
    times : (n,) nondecreasing abscissae, first is ``-tau``.
    left, right : (n, d) left limits and values at each abscissa.
    is_jump : (n,) marks jump events (left != right in general).
    tau, dt : delay length and nominal grid step.
    count : number of valid leading events (lets an integrator append).
    """

    def __init__(self, times, left, right, is_jump=None, *, tau, dt, count=None):
        self.times = np.asarray(times, dtype=float)
        self.left = np.asarray(left, dtype=float)
        self.right = np.asarray(right, dtype=float)
        if self.left.ndim == 1:
            self.left = self.left[:, None]
            self.right = self.right[:, None]
        self.is_jump = (
            np.zeros(len(self.times), dtype=bool) if is_jump is None else np.asarray(is_jump, bool)
        )
        self.tau = float(tau)
        self.dt = float(dt)
        self.count = len(self.times) if count is None else int(count)

    @classmethod
    def from_grid(cls, t0, dt, values, jumps=None, *, tau):
        """Build from uniform grid values plus ``(time, pre, post)`` jump triples."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        grid_t = t0 + dt * np.arange(len(values))
        if not jumps:
            return cls(grid_t, values, values.copy(), tau=tau, dt=dt)
        jt = np.array([j[0] for j in jumps], dtype=float)
        pre = np.array([np.atleast_1d(j[1]) for j in jumps], dtype=float)
        post = np.array([np.atleast_1d(j[2]) for j in jumps], dtype=float)
        times = np.concatenate([grid_t, jt])
        # grid first on ties so the jump event carries the final value
        order = np.lexsort((np.r_[np.zeros(len(grid_t)), np.ones(len(jt))], times))
        left = np.concatenate([values, pre])[order]
        right = np.concatenate([values, post])[order]
        flags = np.r_[np.zeros(len(grid_t), bool), np.ones(len(jt), bool)][order]
        return cls(times[order], left, right, flags, tau=tau, dt=dt)

    @property
    def dim(self) -> int:
        return self.right.shape[1]

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[self.count - 1])

    def _view(self):
        n = self.count
        return self.times[:n], self.left[:n], self.right[:n]

    @property
    def grid_times(self) -> np.ndarray:
        t, _, _ = self._view()
        return t[~self.is_jump[: self.count]]

    @property
    def grid_values(self) -> np.ndarray:
        _, _, r = self._view()
        return r[~self.is_jump[: self.count]]

    @property
    def jump_times(self) -> np.ndarray:
        t, _, _ = self._view()
        return t[self.is_jump[: self.count]]

    def value_at(self, u):
        """Right-continuous value at scalar or array ``u``; shape ``(..., d)``."""
        t, left, right = self._view()
        if isinstance(u, (float, int)):
            return self._value_scalar(t, left, right, float(u))
        u = np.asarray(u, dtype=float)
        if u.ndim == 0:
            return self._value_scalar(t, left, right, float(u))
        if np.any(u < t[0] - 1e-12) or np.any(u > t[-1] + 1e-12):
            raise ValueError(f"evaluation outside [{t[0]}, {t[-1]}]")
        idx = np.clip(np.searchsorted(t, u, side="right") - 1, 0, len(t) - 1)
        return self._interp(t, left, right, idx, u)

    def left_limit_at(self, u):
        t, left, right = self._view()
        u = np.asarray(u, dtype=float)
        idx = np.clip(np.searchsorted(t, u, side="left") - 1, 0, len(t) - 1)
        nxt = np.minimum(idx + 1, len(t) - 1)
        out = self._interp(t, left, right, idx, u)
        hit = t[nxt] == u
        if np.any(hit):
            out = np.where(np.asarray(hit)[..., None], left[nxt], out)
        # at the very first abscissa there is no left neighbour
        first = u <= t[0]
        if np.any(first):
            out = np.where(np.asarray(first)[..., None], left[0], out)
        return out

    @staticmethod
    def _value_scalar(t, left, right, u: float):
        n = len(t)
        if u < t[0] - 1e-12 or u > t[n - 1] + 1e-12:
            raise ValueError(f"evaluation outside [{t[0]}, {t[n - 1]}]")
        i = int(np.searchsorted(t, u, side="right")) - 1
        i = 0 if i < 0 else (n - 1 if i > n - 1 else i)
        j = i + 1 if i + 1 < n else n - 1
        span = t[j] - t[i]
        if span <= 0:
            return right[i].copy()
        w = (u - t[i]) / span
        w = 0.0 if w < 0 else (1.0 if w > 1 else w)
        return right[i] + w * (left[j] - right[i])

    @staticmethod
    def _interp(t, left, right, idx, u):
        nxt = np.minimum(idx + 1, len(t) - 1)
        span = t[nxt] - t[idx]
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(span > 0, (u - t[idx]) / np.where(span > 0, span, 1.0), 0.0)
        w = np.clip(w, 0.0, 1.0)[..., None]
        return right[idx] + w * (left[nxt] - right[idx])

    def segment_at(self, t: float) -> "Segment":
        return segment_at(self, t)

    def sup_norm(self) -> float:
        _, left, right = self._view()
        return float(max(np.max(np.linalg.norm(left, axis=1)), np.max(np.linalg.norm(right, axis=1))))

    def to_csv(self, path, header_comment: str | None = None) -> None:
        t, left, right = self._view()
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"x_{i}" for i in range(self.dim)] + ["is_jump"])
            for k in range(len(t)):
                if self.is_jump[k]:
                    w.writerow([repr(float(t[k]))] + [repr(float(v)) for v in left[k]] + [0])
                    w.writerow([repr(float(t[k]))] + [repr(float(v)) for v in right[k]] + [1])
                else:
                    w.writerow([repr(float(t[k]))] + [repr(float(v)) for v in right[k]] + [0])

    @classmethod
    def from_csv(cls, path, *, tau, dt) -> "SamplePath":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        body = rows[1:]
        times, left, right, flags = [], [], [], []
        k = 0
        while k < len(body):
            row = body[k]
            vals = [float(v) for v in row[1:-1]]
            nxt = body[k + 1] if k + 1 < len(body) else None
            if nxt is not None and nxt[-1] == "1" and float(nxt[0]) == float(row[0]):
                times.append(float(row[0]))
                left.append(vals)
                right.append([float(v) for v in nxt[1:-1]])
                flags.append(True)
                k += 2
            else:
                times.append(float(row[0]))
                left.append(vals)
                right.append(vals)
                flags.append(False)
                k += 1
        return cls(times, left, right, flags, tau=tau, dt=dt)


class Segment:
    """Window ``theta -> path(anchor + theta)``, theta in [-tau, 0].

    A view: it holds the parent path and the anchor, never a copy.
    """

    __slots__ = ("path", "anchor", "tau")

    def __init__(self, path: SamplePath, anchor: float):
        self.path = path
        self.anchor = float(anchor)
        self.tau = path.tau

    @property
    def dim(self) -> int:
        return self.path.dim

    def at(self, theta):
        return self.path.value_at(self.anchor + np.asarray(theta, dtype=float))

    def left_at(self, theta):
        return self.path.left_limit_at(self.anchor + np.asarray(theta, dtype=float))

    def abscissae(self) -> np.ndarray:
        """Relative event abscissae in the window, endpoints included."""
        t = self.path.times[: self.path.count]
        lo, hi = self.anchor - self.tau, self.anchor
        i0, i1 = np.searchsorted(t, [lo, hi], side="left")
        i1 = np.searchsorted(t, hi, side="right")
        inner = t[i0:i1] - self.anchor
        return np.unique(np.concatenate([[-self.tau], inner, [0.0]]))

    def jump_abscissae(self) -> np.ndarray:
        t = self.path.times[: self.path.count]
        flags = self.path.is_jump[: self.path.count]
        lo, hi = self.anchor - self.tau, self.anchor
        sel = flags & (t > lo) & (t <= hi)
        return t[sel] - self.anchor

    def sup_norm(self) -> float:
        th = self.abscissae()
        vals = np.linalg.norm(self.at(th), axis=-1)
        best = float(np.max(vals))
        jt = self.jump_abscissae()
        if len(jt):
            best = max(best, float(np.max(np.linalg.norm(self.left_at(jt), axis=-1))))
        return best

    def combine(self, other: "Segment", a: float = 1.0, b: float = 1.0) -> "Segment":
        """The segment ``a * self + b * other`` on the union of abscissae."""
        if abs(self.tau - other.tau) > 1e-12 or self.dim != other.dim:
            raise SegmentShapeError("segments differ in tau or dim")
        th = np.union1d(self.abscissae(), other.abscissae())
        jt = np.union1d(self.jump_abscissae(), other.jump_abscissae())
        right = a * self.at(th) + b * other.at(th)
        left = right.copy()
        flags = np.zeros(len(th), bool)
        if len(jt):
            pos = np.searchsorted(th, jt)
            left[pos] = a * self.left_at(jt) + b * other.left_at(jt)
            flags[pos] = True
        path = SamplePath(th, left, right, flags, tau=self.tau, dt=self.path.dt)
        return Segment(path, 0.0)

    def __repr__(self) -> str:
        return f"Segment(anchor={self.anchor}, tau={self.tau}, dim={self.dim})"

    # ---- constructors for free-standing segments (probes, directions)

    @classmethod
    def from_nodes(cls, thetas, values, tau: float) -> "Segment":
        thetas = np.asarray(thetas, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        path = SamplePath(thetas, values, values.copy(), tau=tau, dt=float(np.min(np.diff(thetas))))
        return cls(path, 0.0)

    @classmethod
    def constant(cls, value, tau: float) -> "Segment":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls.from_nodes([-tau, 0.0], np.stack([v, v]), tau)

    @classmethod
    def from_function(cls, fn: Callable[[float], np.ndarray], tau: float, n: int = 65) -> "Segment":
        th = np.linspace(-tau, 0.0, n)
        return cls.from_nodes(th, np.array([np.atleast_1d(fn(x)) for x in th]), tau)


def segment_at(path: SamplePath, t: float) -> Segment:
    if t < -1e-12 or t > path.t1 + 1e-12:
        raise ValueError(f"anchor {t} outside [0, {path.t1}]")
    return Segment(path, t)


def segment_sup_distance(s1: Segment, s2: Segment) -> float:
    """max |s1(theta) - s2(theta)| over both windows' abscissae, left limits included."""
    if abs(s1.tau - s2.tau) > 1e-12 or s1.dim != s2.dim:
        raise SegmentShapeError("segments differ in tau or dim")
    th = np.union1d(s1.abscissae(), s2.abscissae())
    best = float(np.max(np.linalg.norm(s1.at(th) - s2.at(th), axis=-1)))
    jt = np.union1d(s1.jump_abscissae(), s2.jump_abscissae())
    if len(jt):
        best = max(best, float(np.max(np.linalg.norm(s1.left_at(jt) - s2.left_at(jt), axis=-1))))
    return best


@dataclass(frozen=True)
class InitialDatum:
    """Initial delay segment ``chi`` on [-tau, 0] with its Lipschitz constant."""

    chi: Callable[[float], np.ndarray]
    lipschitz_lambda: float

    @classmethod
    def constant(cls, value) -> "InitialDatum":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(lambda theta: v, 0.0)

    def on_grid(self, tau: float, dt: float) -> np.ndarray:
        """Values at theta = -tau, -tau+dt, ..., 0, shape ``(n_tau + 1, d)``."""
        n_tau = grid_steps(tau, dt)
        th = -tau + dt * np.arange(n_tau + 1)
        th[-1] = 0.0
        return np.array([np.atleast_1d(np.asarray(self.chi(x), dtype=float)) for x in th])

    def check_lipschitz(self, tau: float, probes: int = 200, rng=None) -> float:
        """Worst observed ratio |chi(a)-chi(b)| / (lambda |a-b|) over random pairs."""
        rng = np.random.default_rng(0) if rng is None else rng
        a = rng.uniform(-tau, 0.0, probes)
        b = rng.uniform(-tau, 0.0, probes)
        worst = 0.0
        for x, y in zip(a, b):
            if x == y:
                continue
            lhs = float(np.linalg.norm(np.atleast_1d(self.chi(x)) - np.atleast_1d(self.chi(y))))
            rhs = self.lipschitz_lambda * abs(x - y)
            worst = max(worst, lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf))
        return worst


def grid_steps(length: float, dt: float) -> int:
    """Number of dt steps in ``length``; the length must be a multiple of dt."""
    n = int(round(length / dt))
    if n < 1 or abs(n * dt - length) > 1e-9 * max(1.0, length):
        raise ValueError(f"length {length} is not a positive multiple of dt={dt}")
    return n

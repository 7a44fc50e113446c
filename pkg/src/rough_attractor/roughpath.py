"""Grid rough paths: canonical lifts, Chen reconstruction, Hoelder norms.

A rough path is stored as per-step increments plus per-step second-order
tensors; any pair value is reconstructed through Chen's identity from cached
prefix sums (O(n) memory). Hoelder sups run as exact all-pairs scans through
the compiled kernels, with an optional dyadic-lag proxy for large windows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .fbm import GridPath, grid_steps

__all__ = [
    "RoughPathGrid",
    "HolderReport",
    "canonical_lift",
    "chen_reconstruct",
    "wong_zakai_smooth",
    "holder_norm",
    "rough_distance",
    "write_roughpath_csv",
    "read_roughpath_csv",
]


class RoughPathGrid:
    """Rough path on a uniform grid: step increments and step areas.

    step_increments has shape (n-1, d) and step_areas (n-1, d, d); the grid
    has n points starting at t0 with spacing dt. Pair values follow from
    Chen's identity via the prefix arrays, built lazily.
    """

    __slots__ = ("t0", "dt", "step_increments", "step_areas",
                 "_prefix_inc", "_prefix_area")

    def __init__(self, t0, dt, step_increments, step_areas):
        inc = np.ascontiguousarray(step_increments, dtype=float)
        area = np.ascontiguousarray(step_areas, dtype=float)
        if inc.ndim != 2 or area.ndim != 3:
            raise ValueError("step_increments must be (n-1, d) and "
                             "step_areas (n-1, d, d)")
        if inc.shape[0] != area.shape[0] or area.shape[1:] != (inc.shape[1],) * 2:
            raise ValueError("increment/area shapes are inconsistent")
        if inc.shape[0] < 1:
            raise ValueError("need at least one step")
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.t0 = float(t0)
        self.dt = float(dt)
        self.step_increments = inc
        self.step_areas = area
        self._prefix_inc = None
        self._prefix_area = None

    @property
    def n(self) -> int:
        return self.step_increments.shape[0] + 1

    @property
    def d(self) -> int:
        return self.step_increments.shape[1]

    @property
    def t_end(self) -> float:
        return self.t0 + (self.n - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    def index_of(self, t: float) -> int:
        k = grid_steps(t - self.t0, self.dt, "time")
        if not 0 <= k < self.n:
            raise ValueError(f"time {t} is outside the grid "
                             f"[{self.t0}, {self.t_end}]")
        return k

    def prefixes(self):
        """Prefix increments (n, d) and prefix areas (n, d, d) from t0."""
        if self._prefix_inc is None:
            inc = self.step_increments
            area = self.step_areas
            n, d = self.n, self.d
            pre = np.zeros((n, d))
            np.cumsum(inc, axis=0, out=pre[1:])
            pa = np.zeros((n, d, d))
            cross = pre[:-1, :, None] * inc[:, None, :]
            np.cumsum(area + cross, axis=0, out=pa[1:])
            self._prefix_inc = pre
            self._prefix_area = pa
        return self._prefix_inc, self._prefix_area

    def shifted(self, tau: float) -> "RoughPathGrid":
        """Time shift by tau (grid-aligned): same step data, grid moved."""
        grid_steps(tau, self.dt, "shift tau")
        return RoughPathGrid(self.t0 - tau, self.dt,
                             self.step_increments, self.step_areas)

    def restrict(self, a: float, b: float) -> "RoughPathGrid":
        """Sub-path over the grid interval [a, b]."""
        ia, ib = self.index_of(a), self.index_of(b)
        if ib <= ia:
            raise ValueError("need a < b on the grid")
        return RoughPathGrid(a, self.dt, self.step_increments[ia:ib],
                             self.step_areas[ia:ib])

    def __repr__(self) -> str:
        return (f"RoughPathGrid(t0={self.t0}, dt={self.dt}, n={self.n}, "
                f"d={self.d})")


@dataclass(frozen=True)
class HolderReport:
    """Both Hoelder levels of a rough path with the maximizing pairs."""

    level1: float
    level2: float
    argmax1: tuple
    argmax2: tuple

    @property
    def total(self) -> float:
        return self.level1 + self.level2


def canonical_lift(path: GridPath) -> RoughPathGrid:
    """Lift of the piecewise-linear interpolant of a sampled path.

    Per-step areas are the exact iterated integrals of each linear segment,
    which is half the outer square of the step increment.
    """
    if path.n < 2:
        raise ValueError("need at least 2 grid points to lift")
    inc = np.diff(path.values, axis=0)
    areas = 0.5 * inc[:, :, None] * inc[:, None, :]
    return RoughPathGrid(path.t0, path.dt, inc, areas)


def chen_reconstruct(rp: RoughPathGrid, s: float, t: float):
    """Pair value (increment, area) over grid times s <= t."""
    i, j = rp.index_of(s), rp.index_of(t)
    if j < i:
        raise ValueError("need s <= t")
    pre, pa = rp.prefixes()
    if i == j:
        return np.zeros(rp.d), np.zeros((rp.d, rp.d))
    inc = pre[j] - pre[i]
    area = pa[j] - pa[i] - np.outer(pre[i], inc)
    return inc, area


def wong_zakai_smooth(path: GridPath, eta: float, window=None) -> GridPath:
    """Moving-average smoothing with width eta, re-anchored at time 0.

    The output at time t is the eta-average of the input over [t, t + eta]
    minus the same average at 0, computed exactly for the piecewise-linear
    interpolant. eta must be a positive grid multiple; the input must extend
    eta beyond the right end of the requested window (default: the input
    window shortened by eta on the right).
    """
    m = grid_steps(eta, path.dt, "eta")
    if m < 1:
        raise ValueError(f"eta must be a positive multiple of dt, got {eta}")
    if window is None:
        a, b = path.t0, path.t_end - eta
    else:
        a, b = window
    ia = path.index_of(a)
    ib = grid_steps(b - path.t0, path.dt, "window end")
    if ib + m > path.n - 1:
        raise ValueError(
            f"smoothing needs {eta} of lookahead past {b}; the path ends at "
            f"{path.t_end}, extend it to at least {b + eta}")
    if ib <= ia:
        raise ValueError("empty smoothing window")
    v = path.values
    seg = 0.5 * path.dt * (v[:-1] + v[1:])
    quad = np.vstack([np.zeros((1, path.d)), np.cumsum(seg, axis=0)])
    raw = (quad[m:] - quad[:-m]) / eta
    raw = raw[ia:ib + 1]
    out_t0 = path.t0 + ia * path.dt
    i0 = grid_steps(-out_t0, path.dt, "window start")
    if not 0 <= i0 <= ib - ia:
        raise ValueError("the smoothing window must contain time 0")
    return GridPath(out_t0, path.dt, raw - raw[i0], _raw=raw, _raw_anchor=i0)


def lag_pows(max_lag: int, dt: float, alpha: float):
    """Lag weight tables (lag*dt)**alpha and **(2*alpha), index = lag."""
    lags = np.arange(max_lag + 1, dtype=float) * dt
    with np.errstate(divide="ignore"):
        p1 = lags ** alpha
        p2 = lags ** (2.0 * alpha)
    p1[0] = np.inf
    p2[0] = np.inf
    return p1, p2


def _resolve_interval(rp: RoughPathGrid, interval):
    if interval is None:
        return 0, rp.n - 1
    a, b = interval
    i, j = rp.index_of(a), rp.index_of(b)
    if j <= i:
        raise ValueError(f"empty interval {interval}")
    return i, j


def _check_alpha(alpha: float, strict: bool):
    if strict and not 1.0 / 3.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (1/3, 1/2), got {alpha}; pass "
                         "strict_alpha=False to override")


def holder_norm(rp: RoughPathGrid, alpha: float, interval=None,
                method: str = "exact", strict_alpha: bool = True) -> HolderReport:
    """Inhomogeneous Hoelder norm of the rough path over a grid interval.

    level1 is the sup of |W_st| / (t-s)**alpha over grid pairs, level2 the
    sup of |WW_st| / (t-s)**(2*alpha) (Frobenius norm). method="exact" scans
    all pairs; method="dyadic" scans power-of-two lags only, a lower proxy
    within a constant factor of the sup.
    """
    _check_alpha(alpha, strict_alpha)
    i_lo, i_hi = _resolve_interval(rp, interval)
    pre, pa = rp.prefixes()
    if method == "exact":
        p1, p2 = lag_pows(i_hi - i_lo, rp.dt, alpha)
        m1, s1, t1, m2, s2, t2 = _kernels.pair_max(
            pre, pa, p1, p2, i_lo, i_hi, i_hi - i_lo)
        tt = rp.times
        return HolderReport(m1, m2, (tt[s1], tt[t1]), (tt[s2], tt[t2]))
    if method == "dyadic":
        return _dyadic_report(rp, pre, pa, alpha, i_lo, i_hi)
    raise ValueError(f"unknown method {method!r}")


def _dyadic_report(rp, pre, pa, alpha, i_lo, i_hi) -> HolderReport:
    m1 = m2 = 0.0
    arg1 = arg2 = (rp.times[i_lo], rp.times[i_lo])
    lag = 1
    tt = rp.times
    while lag <= i_hi - i_lo:
        i = np.arange(i_lo, i_hi - lag + 1)
        j = i + lag
        w = pre[j] - pre[i]
        r1 = np.sqrt(np.sum(w * w, axis=1)) / (lag * rp.dt) ** alpha
        k = int(np.argmax(r1))
        if r1[k] > m1:
            m1 = float(r1[k])
            arg1 = (tt[i[k]], tt[j[k]])
        ww = pa[j] - pa[i] - pre[i][:, :, None] * w[:, None, :]
        r2 = (np.sqrt(np.sum(ww * ww, axis=(1, 2)))
              / (lag * rp.dt) ** (2 * alpha))
        k = int(np.argmax(r2))
        if r2[k] > m2:
            m2 = float(r2[k])
            arg2 = (tt[i[k]], tt[j[k]])
        lag *= 2
    return HolderReport(m1, m2, arg1, arg2)


def _same_grid(rp1: RoughPathGrid, rp2: RoughPathGrid):
    if (rp1.n != rp2.n or rp1.d != rp2.d
            or abs(rp1.t0 - rp2.t0) > 1e-9 * max(1.0, abs(rp1.t0))
            or abs(rp1.dt - rp2.dt) > 1e-12 * rp1.dt):
        raise ValueError("rough paths live on different grids")


def rough_distance(rp1: RoughPathGrid, rp2: RoughPathGrid, alpha: float,
                   interval=None, strict_alpha: bool = True) -> float:
    """Inhomogeneous Hoelder rough path metric over a grid interval."""
    _check_alpha(alpha, strict_alpha)
    _same_grid(rp1, rp2)
    i_lo, i_hi = _resolve_interval(rp1, interval)
    p1, p2 = lag_pows(i_hi - i_lo, rp1.dt, alpha)
    pre1, pa1 = rp1.prefixes()
    pre2, pa2 = rp2.prefixes()
    m1, m2 = _kernels.pair_max_diff(pre1, pa1, pre2, pa2, p1, p2,
                                    i_lo, i_hi, i_hi - i_lo)
    return m1 + m2


def sliding_unit_norm(rp: RoughPathGrid, alpha: float, center: float,
                      strict_alpha: bool = True) -> float:
    """sup over r in [0, 1] of the rough path norm on [center+r-1, center+r].

    Equals the sup of both Hoelder ratios over pairs inside
    [center-1, center+1] whose lag is at most one unit.
    """
    _check_alpha(alpha, strict_alpha)
    unit = grid_steps(1.0, rp.dt, "unit window")
    i_lo = rp.index_of(center - 1.0)
    i_hi = rp.index_of(center + 1.0)
    pre, pa = rp.prefixes()
    p1, p2 = lag_pows(unit, rp.dt, alpha)
    m1, _, _, m2, _, _ = _kernels.pair_max(pre, pa, p1, p2, i_lo, i_hi, unit)
    return m1 + m2


def write_roughpath_csv(rp: RoughPathGrid, base: str) -> None:
    """Write <base>.inc.csv and <base>.area.csv, one row per step.

    The area columns are row-major: a11, a12, ..., a1d, a21, ..., add.
    """
    d = rp.d
    tt = rp.times
    with open(f"{base}.inc.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"w{j + 1}" for j in range(d)])
        for k in range(rp.n - 1):
            writer.writerow(["%.17g" % tt[k]] +
                            ["%.17g" % v for v in rp.step_increments[k]])
    with open(f"{base}.area.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"a{a + 1}{b + 1}"
                                 for a in range(d) for b in range(d)])
        for k in range(rp.n - 1):
            writer.writerow(["%.17g" % tt[k]] +
                            ["%.17g" % v for v in rp.step_areas[k].ravel()])


def read_roughpath_csv(base: str) -> RoughPathGrid:
    """Read a rough path written by write_roughpath_csv."""
    inc = np.genfromtxt(f"{base}.inc.csv", delimiter=",", skip_header=1)
    area = np.genfromtxt(f"{base}.area.csv", delimiter=",", skip_header=1)
    if inc.ndim == 1:
        raise ValueError("cannot recover dt from a single-step file")
    t = inc[:, 0]
    dt = float(t[1] - t[0])
    d = inc.shape[1] - 1
    return RoughPathGrid(float(t[0]), dt, inc[:, 1:],
                         area[:, 1:].reshape(-1, d, d))

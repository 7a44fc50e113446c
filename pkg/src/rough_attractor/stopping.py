"""Stopping times that keep the rough path norm small on each interval.

The forward time is the first tau > 0 where the Hoelder norm over [0, tau]
plus mu*tau**(1-alpha) reaches mu; the backward time mirrors it on [tau, 0].
The crossing is bracketed by an incremental grid scan and then refined by
bisection on the piecewise-linear rough path inside the bracketing cell, so
the defining residual meets bisection_tol. The bi-infinite sequence uses the
grid-snapped crossings so every shift stays grid-aligned.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .fbm import grid_steps
from .roughpath import RoughPathGrid, lag_pows, sliding_unit_norm

__all__ = [
    "StoppingParams",
    "StoppingSequence",
    "WindowExhausted",
    "forward_stopping_time",
    "backward_stopping_time",
    "build_sequence",
    "count_bound_check",
    "estimate_d1",
    "condition_report",
    "write_sequence_csv",
]


@dataclass(frozen=True)
class StoppingParams:
    """Stopping-time parameters: threshold mu, Hoelder scale alpha, tolerance."""

    mu: float
    alpha: float
    bisection_tol: float = 1e-6

    def __post_init__(self) -> None:
        if not 0.0 < self.mu < 1.0:
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 1e-14 <= self.bisection_tol:
            raise ValueError("bisection_tol below float resolution")


class WindowExhausted(RuntimeError):
    """The sampled window ended mid-recursion; carries the partial result."""

    def __init__(self, message, sequence=None):
        super().__init__(message)
        self.sequence = sequence


@dataclass(frozen=True)
class StoppingSequence:
    """Windowed bi-infinite stopping sequence with grid-aligned times.

    times[i] is T_i relative to the base point, indices[i] the grid index in
    the source rough path.
    """

    i_min: int
    i_max: int
    dt: float
    base_index: int
    indices: dict = field(repr=False)

    def __post_init__(self) -> None:
        for i in range(self.i_min, self.i_max):
            step = self.indices[i + 1] - self.indices[i]
            if step <= 0:
                raise ValueError("stopping times must be strictly increasing")

    def __getitem__(self, i: int) -> float:
        return (self.indices[i] - self.base_index) * self.dt

    @property
    def times(self) -> dict:
        return {i: self[i] for i in range(self.i_min, self.i_max + 1)}

    def step(self, i: int) -> float:
        """Gap T_{i+1} - T_i."""
        return (self.indices[i + 1] - self.indices[i]) * self.dt


def _unit(rp: RoughPathGrid) -> int:
    return grid_steps(1.0, rp.dt, "unit window")


def _scan_tables(rp: RoughPathGrid, p: StoppingParams):
    unit = _unit(rp)
    p1, p2 = lag_pows(unit, rp.dt, p.alpha)
    ramp = p.mu * (np.arange(unit + 1) * rp.dt) ** (1.0 - p.alpha)
    return unit, p1, p2, ramp


def _forward_partial(pre, pa, dt, alpha, k0, k, theta):
    """Sup ratios of the pairs (t_i, tau), i in [k0, k-1], tau inside cell k."""
    delta = pre[k] - pre[k - 1]
    wpart = theta * delta
    base = pre[k0:k]
    winc = (pre[k - 1] - base) + wpart
    lags = (np.arange(k - 1 - k0, -1, -1) + theta) * dt
    r1 = np.sqrt(np.sum(winc * winc, axis=1)) / lags ** alpha
    head = pre[k - 1] - base
    area = (pa[k - 1] - pa[k0:k] - base[:, :, None] * head[:, None, :]
            + 0.5 * np.outer(wpart, wpart)[None, :, :]
            + head[:, :, None] * wpart[None, None, :])
    r2 = np.sqrt(np.sum(area * area, axis=(1, 2))) / lags ** (2.0 * alpha)
    return float(r1.max()), float(r2.max())


def _backward_partial(pre, pa, dt, alpha, k0, k, theta):
    """Sup ratios of the pairs (tau, t_j), j in [k+1, k0], tau inside cell k."""
    delta = pre[k + 1] - pre[k]
    wpart = theta * delta
    tail = pre[k + 1:k0 + 1]
    winc = (tail - pre[k + 1]) + wpart
    lags = (np.arange(0, k0 - k) + theta) * dt
    r1 = np.sqrt(np.sum(winc * winc, axis=1)) / lags ** alpha
    head = tail - pre[k + 1]
    area = (pa[k + 1:k0 + 1] - pa[k + 1] - pre[k + 1][None, :, None] * head[:, None, :]
            + 0.5 * np.outer(wpart, wpart)[None, :, :]
            + wpart[None, :, None] * head[:, None, :])
    r2 = np.sqrt(np.sum(area * area, axis=(1, 2))) / lags ** (2.0 * alpha)
    return float(r1.max()), float(r2.max())


def _refine(pre, pa, rp, p, k0, k, m1, m2, forward: bool) -> float:
    """Bisect the crossing inside its bracketing cell; returns |tau|."""
    dt, alpha, mu = rp.dt, p.alpha, p.mu
    span = (k - k0) if forward else (k0 - k)
    partial = _forward_partial if forward else _backward_partial

    def g(theta: float) -> float:
        pm1, pm2 = partial(pre, pa, dt, alpha, k0, k, theta)
        tau = (abs(span) - 1 + theta) * dt
        return max(m1, pm1) + max(m2, pm2) + mu * tau ** (1.0 - alpha) - mu

    g_right = g(1.0)
    if g_right <= p.bisection_tol:
        return abs(span) * dt
    lo, hi = 0.0, 1.0
    val = g_right
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        val = g(mid)
        if abs(val) < p.bisection_tol:
            return (abs(span) - 1 + mid) * dt
        if val > 0.0:
            hi = mid
        else:
            lo = mid
    return (abs(span) - 1 + 0.5 * (lo + hi)) * dt


def _forward(rp: RoughPathGrid, p: StoppingParams, k0: int):
    """Continuous forward stopping time from grid index k0, plus its cell index."""
    unit, p1, p2, ramp = _scan_tables(rp, p)
    if k0 + unit > rp.n - 1:
        raise WindowExhausted(
            f"forward stopping time needs the window [{rp.times[k0]}, "
            f"{rp.times[k0] + 1}] but the grid ends at {rp.t_end}")
    pre, pa = rp.prefixes()
    k, m1, m2 = _kernels.forward_crossing(pre, pa, p1, p2, ramp, p.mu,
                                          k0, k0 + unit)
    assert k >= 0, "the stopping map reaches mu by tau = 1"
    return _refine(pre, pa, rp, p, k0, k, m1, m2, forward=True), k


def _backward(rp: RoughPathGrid, p: StoppingParams, k0: int):
    """Continuous backward stopping time (positive magnitude) plus cell index."""
    unit, p1, p2, ramp = _scan_tables(rp, p)
    if k0 - unit < 0:
        raise WindowExhausted(
            f"backward stopping time needs the window "
            f"[{rp.times[k0] - 1}, {rp.times[k0]}] but the grid starts at {rp.t0}")
    pre, pa = rp.prefixes()
    k, m1, m2 = _kernels.backward_crossing(pre, pa, p1, p2, ramp, p.mu,
                                           k0, k0 - unit)
    assert k >= 0, "the stopping map reaches mu by tau = -1"
    return _refine(pre, pa, rp, p, k0, k, m1, m2, forward=False), k


def forward_stopping_time(rp: RoughPathGrid, p: StoppingParams,
                          snapped: bool = False) -> float:
    """First tau in (0, 1] where the norm over [0, tau] plus mu*tau**(1-alpha)
    reaches mu.

    By default the sub-grid root (defining residual below bisection_tol);
    snapped=True returns the first grid point where the map meets mu.
    """
    tau, k = _forward(rp, p, rp.index_of(0.0))
    return (k - rp.index_of(0.0)) * rp.dt if snapped else tau


def backward_stopping_time(rp: RoughPathGrid, p: StoppingParams,
                           snapped: bool = False) -> float:
    """Mirror of forward_stopping_time on [-1, 0]; the value lies in [-1, 0)."""
    tau, k = _backward(rp, p, rp.index_of(0.0))
    return (k - rp.index_of(0.0)) * rp.dt if snapped else -tau


def build_sequence(rp: RoughPathGrid, p: StoppingParams, i_min: int,
                   i_max: int) -> StoppingSequence:
    """Grid-snapped stopping sequence T_i for i in [i_min, i_max], T_0 = 0.

    Raises WindowExhausted (carrying the partial sequence) when the sampled
    window cannot cover the recursion.
    """
    if i_min > 0 or i_max < 0:
        raise ValueError("the index window must contain 0")
    base = rp.index_of(0.0)
    idx = {0: base}
    k = base
    for i in range(1, i_max + 1):
        try:
            _, k = _forward(rp, p, k)
        except WindowExhausted as exc:
            raise WindowExhausted(
                f"window exhausted at index {i} of [{i_min}, {i_max}]: {exc}",
                sequence=StoppingSequence(i_min=0, i_max=i - 1, dt=rp.dt,
                                          base_index=base, indices=dict(idx)),
            ) from None
        idx[i] = k
    k = base
    for i in range(-1, i_min - 1, -1):
        try:
            _, k = _backward(rp, p, k)
        except WindowExhausted as exc:
            partial = {j: idx[j] for j in range(i + 1, i_max + 1)}
            raise WindowExhausted(
                f"window exhausted at index {i} of [{i_min}, {i_max}]: {exc}",
                sequence=StoppingSequence(i_min=i + 1, i_max=i_max, dt=rp.dt,
                                          base_index=base, indices=partial),
            ) from None
        idx[i] = k
    return StoppingSequence(i_min=i_min, i_max=i_max, dt=rp.dt,
                            base_index=base, indices=idx)


def count_bound_check(rp: RoughPathGrid, p: StoppingParams,
                      alpha_prime: float):
    """Number of backward stopping times needed to pass -1, and its bound.

    Returns (count, bound) with count = min{j >= 1 : T_{-j} <= -1} and
    bound = ((norm of the path over [-1, 0] at alpha_prime + mu)/mu) to the
    power 1/(alpha_prime - alpha). Requires alpha < alpha_prime.
    """
    if not p.alpha < alpha_prime:
        raise ValueError("need alpha < alpha_prime")
    base = rp.index_of(0.0)
    unit = _unit(rp)
    k = base
    count = 0
    while k > base - unit:
        _, k = _backward(rp, p, k)
        count += 1
    pre, pa = rp.prefixes()
    p1, p2 = lag_pows(unit, rp.dt, alpha_prime)
    m1, _, _, m2, _, _ = _kernels.pair_max(pre, pa, p1, p2,
                                           base - unit, base, unit)
    bound = ((m1 + m2 + p.mu) / p.mu) ** (1.0 / (alpha_prime - p.alpha))
    return count, bound


def estimate_d1(samples, p: StoppingParams, alpha_prime: float,
                shift_spacing: float = 1.0) -> float:
    """Reciprocal of the averaged unit-window norm functional.

    Averages ((sup_{r in [0,1]} norm of the shifted path over [-1,0] at
    alpha_prime + mu)/mu)**(1/(alpha_prime-alpha)) over grid shifts s spaced
    by shift_spacing and over samples, then returns the reciprocal; the value
    lies in (0, 1].
    """
    if not samples:
        raise ValueError("need at least one sample")
    if not p.alpha < alpha_prime:
        raise ValueError("need alpha < alpha_prime")
    vals = []
    for rp in samples:
        s = np.ceil((rp.t0 + 1.0) / shift_spacing) * shift_spacing
        while s <= rp.t_end - 1.0 + 1e-12:
            sup = sliding_unit_norm(rp, alpha_prime, float(s),
                                    strict_alpha=False)
            vals.append(((sup + p.mu) / p.mu) ** (1.0 / (alpha_prime - p.alpha)))
            s += shift_spacing
    if not vals:
        raise ValueError("no admissible shifts; enlarge the sampled window")
    return 1.0 / float(np.mean(vals))


def condition_report(seq: StoppingSequence, mu: float, nu: float, lam: float,
                     k1: float, gamma: float, tempered_tol: float = 0.1) -> dict:
    """Per-sample booleans for the spacing and temperedness conditions.

    Uses the most negative half of the sequence window as the liminf proxy.
    Keys: d_hat (empirical spacing rate), cond_355, cond_358, cond_359,
    cond_360.
    """
    tail = [i for i in range(seq.i_min, 0) if i <= seq.i_min // 2]
    if not tail:
        tail = list(range(seq.i_min, 0))
    if not tail:
        raise ValueError("sequence has no negative indices")
    d_hat = min(abs(seq[i]) / abs(i) for i in tail)
    gaps = [seq.step(i) for i in range(seq.i_min, 0)]
    g360 = max(
        max(0.0, np.log(max(gap, 1e-300) ** (-gamma))) / abs(i)
        for i, gap in zip(range(seq.i_min, 0), gaps)
        if i <= seq.i_min // 2
    ) if seq.i_min <= -2 else 0.0
    return {
        "d_hat": d_hat,
        "cond_355": bool(-(2.0 / lam) * np.log(k1) > 1.0),
        "cond_358": bool(d_hat > 2.0 * (np.log(1.0 + k1) + nu) / lam),
        "cond_359": bool(nu + d_hat > 1.0),
        "cond_360": bool(g360 < tempered_tol),
    }


def write_sequence_csv(seq: StoppingSequence, fname) -> None:
    """CSV export with rows i, T_i."""
    with open(fname, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "T_i"])
        for i in range(seq.i_min, seq.i_max + 1):
            writer.writerow([i, "%.17g" % seq[i]])

"""Two-sided fractional Brownian motion on uniform grids.

Paths are sampled as stationary Gaussian increments (circulant embedding by
default, dense Cholesky as fallback) and anchored so the value at time 0 is
exactly the zero vector. The time shift ``wiener_shift`` re-anchors a path at
a grid-aligned time tau, and composed shifts are bitwise-reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FbmParams",
    "GridPath",
    "fbm_covariance",
    "sample_fbm",
    "sample_fgn_batch",
    "wiener_shift",
    "write_gridpath_csv",
    "read_gridpath_csv",
]

_GRID_RTOL = 1e-9


def grid_steps(x: float, dt: float, what: str = "value") -> int:
    """Express x as an integer number of grid steps, or raise if misaligned."""
    s = x / dt
    k = round(s)
    if abs(s - k) > _GRID_RTOL * max(1.0, abs(s)):
        raise ValueError(f"{what} {x!r} is not an integer multiple of dt={dt!r}")
    return int(k)


@dataclass(frozen=True)
class FbmParams:
    """Parameters of a d-dimensional fractional Brownian driver.

    hurst must lie in (1/3, 1/2]; q >= 0 scales the covariance (q = 0 gives
    the degenerate zero path); d is the number of independent components.
    """

    hurst: float
    q: float = 0.05
    d: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 1.0 / 3.0 < self.hurst <= 0.5:
            raise ValueError(f"hurst must lie in (1/3, 1/2], got {self.hurst}")
        if self.q < 0:
            raise ValueError(f"q must be nonnegative, got {self.q}")
        if self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")


class GridPath:
    """d-dimensional path on a uniform grid, zero at time 0.

    values has shape (n, d) with values[k] the path at time t0 + k*dt. The
    grid must contain time 0 and the row there must be exactly zero.
    """

    __slots__ = ("t0", "dt", "values", "_raw", "_raw_anchor")

    def __init__(self, t0, dt, values, _raw=None, _raw_anchor=None):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ValueError("values must be an (n, d) array")
        if values.shape[0] < 2:
            raise ValueError("a grid path needs at least 2 points")
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.t0 = float(t0)
        self.dt = float(dt)
        self.values = values
        i0 = grid_steps(-self.t0, self.dt, "t0")
        if not 0 <= i0 < values.shape[0]:
            raise ValueError("the grid must contain time 0")
        if not np.all(values[i0] == 0.0):
            raise ValueError("the value at time 0 must be exactly zero")
        self._raw = values if _raw is None else _raw
        self._raw_anchor = i0 if _raw_anchor is None else _raw_anchor

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def t_end(self) -> float:
        return self.t0 + (self.n - 1) * self.dt

    @property
    def zero_index(self) -> int:
        return grid_steps(-self.t0, self.dt, "t0")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    def index_of(self, t: float) -> int:
        """Grid index of time t, raising if t is off the grid."""
        k = grid_steps(t - self.t0, self.dt, "time")
        if not 0 <= k < self.n:
            raise ValueError(f"time {t} is outside the sampled window "
                             f"[{self.t0}, {self.t_end}]")
        return k

    def __repr__(self) -> str:
        return (f"GridPath(t0={self.t0}, dt={self.dt}, n={self.n}, "
                f"d={self.d})")


def fbm_covariance(t: float, s: float, p: FbmParams) -> float:
    """Covariance of one fBm component between times t and s."""
    h2 = 2.0 * p.hurst
    return 0.5 * p.q ** 2 * (abs(t) ** h2 + abs(s) ** h2 - abs(t - s) ** h2)


def _fgn_autocov(m: int, hurst: float) -> np.ndarray:
    """Autocovariance of unit-scale fractional Gaussian noise at lags 0..m."""
    k = np.arange(m + 1, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * ((k + 1) ** h2 - 2 * k ** h2 + np.abs(k - 1) ** h2)


def _fgn_circulant(rng: np.random.Generator, m: int, hurst: float,
                   count: int) -> np.ndarray:
    """count independent fGn rows of length m via circulant embedding.

    Raises ValueError when the embedding is not nonnegative definite.
    """
    rho = _fgn_autocov(m, hurst)
    first_row = np.concatenate([rho[:-1], rho[-1:], rho[-2:0:-1]])
    big = 2 * m
    eigs = np.fft.fft(first_row).real
    floor = -1e-10 * max(1.0, eigs.max())
    if eigs.min() < floor:
        raise ValueError(
            "circulant embedding of the increment covariance is not "
            "nonnegative definite; retry with method='cholesky'")
    eigs = np.clip(eigs, 0.0, None)
    a = rng.standard_normal((count, big))
    b = rng.standard_normal((count, big))
    zeta = np.empty((count, big), dtype=complex)
    zeta[:, 0] = a[:, 0]
    zeta[:, m] = a[:, m]
    half = np.sqrt(0.5)
    zeta[:, 1:m] = half * (a[:, 1:m] + 1j * b[:, 1:m])
    zeta[:, m + 1:] = np.conj(zeta[:, 1:m][:, ::-1])
    synth = np.fft.ifft(zeta * np.sqrt(eigs * big)[None, :], axis=1).real
    return synth[:, :m]


def _fgn_cholesky(rng: np.random.Generator, m: int, hurst: float,
                  count: int) -> np.ndarray:
    """count fGn rows of length m via dense Cholesky (O(m^2) memory)."""
    rho = _fgn_autocov(m, hurst)
    idx = np.abs(np.arange(m)[:, None] - np.arange(m)[None, :])
    cov = rho[idx]
    chol = np.linalg.cholesky(cov)
    return rng.standard_normal((count, m)) @ chol.T


def sample_fgn_batch(p: FbmParams, dt: float, m: int, count: int,
                     method: str = "auto") -> np.ndarray:
    """(count, m, d) array of fGn increments over steps of size dt."""
    rng = np.random.default_rng(p.seed)
    scale = p.q * dt ** p.hurst
    if p.q == 0.0:
        return np.zeros((count, m, p.d))
    gen = {"circulant": _fgn_circulant, "cholesky": _fgn_cholesky}
    if method == "auto":
        try:
            rows = _fgn_circulant(rng, m, p.hurst, count * p.d)
        except ValueError:
            rng = np.random.default_rng(p.seed)
            rows = _fgn_cholesky(rng, m, p.hurst, count * p.d)
    else:
        rows = gen[method](rng, m, p.hurst, count * p.d)
    out = rows.reshape(count, p.d, m).transpose(0, 2, 1)
    return scale * out


def sample_fbm(p: FbmParams, t0: float, dt: float, n: int,
               method: str = "auto") -> GridPath:
    """Sample a d-dimensional fBm path on the grid t0 + k*dt, k = 0..n-1.

    The grid must contain time 0; the path is anchored there. Deterministic
    given (p, t0, dt, n, method).
    """
    if n < 2:
        raise ValueError("need n >= 2 grid points")
    i0 = grid_steps(-t0, dt, "t0")
    if not 0 <= i0 < n:
        raise ValueError("the requested grid must contain time 0")
    fgn = sample_fgn_batch(p, dt, n - 1, 1, method=method)[0]
    raw = np.vstack([np.zeros((1, p.d)), np.cumsum(fgn, axis=0)])
    return GridPath(t0, dt, raw - raw[i0], _raw=raw, _raw_anchor=i0)


def wiener_shift(path: GridPath, tau: float) -> GridPath:
    """Time shift: the returned path at time t equals path(t + tau) - path(tau).

    tau must be a grid multiple and lie inside the sampled window. Composed
    shifts are bitwise-identical to the single shift by the total offset.
    """
    steps = grid_steps(tau, path.dt, "shift tau")
    anchor = path._raw_anchor + steps
    if not 0 <= anchor < path._raw.shape[0]:
        raise ValueError(
            f"shift by {tau} leaves the sampled window; extend the grid to "
            f"cover time {tau} before shifting")
    raw = path._raw
    return GridPath(path.t0 - steps * path.dt, path.dt, raw - raw[anchor],
                    _raw=raw, _raw_anchor=anchor)


def write_gridpath_csv(path: GridPath, fname) -> None:
    """CSV export: header t,w1,...,wd, one row per grid point, %.17g floats."""
    with open(fname, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"w{j + 1}" for j in range(path.d)])
        for k, t in enumerate(path.times):
            writer.writerow(["%.17g" % t] +
                            ["%.17g" % v for v in path.values[k]])


def read_gridpath_csv(fname) -> GridPath:
    """Read a path written by write_gridpath_csv."""
    data = np.genfromtxt(fname, delimiter=",", skip_header=1)
    if data.ndim == 1:
        data = data[None, :]
    t = data[:, 0]
    dt = float(t[1] - t[0])
    return GridPath(float(t[0]), dt, data[:, 1:])

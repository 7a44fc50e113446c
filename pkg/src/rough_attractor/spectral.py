"""Spectral Galerkin space for the interval Laplacian shifted by -1.

The generator acts diagonally on the sine eigenbasis e_k = sqrt(2/pi) sin(kx)
on (0, pi) with Dirichlet conditions; the negative generator has eigenvalues
lambda_k = k**2 + 1, smallest 2. Interpolation norms weigh coefficient k by
lambda_k**(gamma/2). The drift is a scaled identity and each noise channel is
a scaled fractional power plus an optional constant field, so all coefficient
maps stay diagonal.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpectralField",
    "CoefficientSpec",
    "eigenvalues",
    "semigroup_apply",
    "interp_norm",
    "apply_F",
    "apply_G",
    "apply_DG",
    "dg_g",
    "write_field_csv",
    "read_field_csv",
]

SMALLEST_EIGENVALUE = 2.0


def eigenvalues(n_modes: int) -> np.ndarray:
    """Eigenvalues of the negative generator, k**2 + 1 for k = 1..n_modes."""
    k = np.arange(1, n_modes + 1, dtype=float)
    return k * k + 1.0


@dataclass(frozen=True)
class SpectralField:
    """Coefficient vector on the sine eigenbasis."""

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("coeffs must be a nonempty vector")
        if not np.all(np.isfinite(c)):
            raise ValueError("coeffs must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def n_modes(self) -> int:
        return self.coeffs.size


def semigroup_apply(x: SpectralField, t: float) -> SpectralField:
    """Heat propagator: coefficient k decays by exp(-lambda_k * t), t >= 0."""
    if t < 0:
        raise ValueError(f"the semigroup is only defined for t >= 0, got {t}")
    lam = eigenvalues(x.n_modes)
    return SpectralField(np.exp(-lam * t) * x.coeffs)


def interp_norm(x: SpectralField, gamma: float) -> float:
    """Interpolation norm (sum_k lambda_k**gamma x_k**2)**(1/2)."""
    lam = eigenvalues(x.n_modes)
    return float(np.sqrt(np.sum(lam ** gamma * x.coeffs ** 2)))


def norm_weights(n_modes: int, gamma: float) -> np.ndarray:
    """Squared-norm weights lambda_k**gamma used by the compiled kernels."""
    return eigenvalues(n_modes) ** gamma


@dataclass(frozen=True)
class CoefficientSpec:
    """Drift and diffusion coefficients with their regularity bookkeeping.

    F(y) = f_scale * y (Lipschitz constant f_scale, F(0) = 0). Channel j of
    G is g_scale[j] * L^sigma y + g_offset[j] * chi where L^sigma multiplies
    coefficient k by lambda_k**(sigma/2) (a loss of exactly sigma on the
    interpolation index) and chi is the first eigenmode. delta is the drift
    regularity gap, gamma the working regularity; the smallness budget mu
    must cover f_scale, every |g_scale|, and the offset norm.
    """

    n_modes: int
    d: int
    mu: float
    gamma: float
    sigma: float
    delta: float
    f_scale: float
    g_scale: tuple
    g_offset: tuple
    offset_modes: int = 1
    offset_shape: float = 0.0

    def __post_init__(self) -> None:
        gs = tuple(float(g) for g in np.atleast_1d(self.g_scale))
        go = tuple(float(g) for g in np.atleast_1d(self.g_offset))
        if len(gs) == 1:
            gs = gs * self.d
        if len(go) == 1:
            go = go * self.d
        if len(gs) != self.d or len(go) != self.d:
            raise ValueError("g_scale/g_offset must have one entry per channel")
        object.__setattr__(self, "g_scale", gs)
        object.__setattr__(self, "g_offset", go)
        bad = self.violations()
        if bad:
            raise ValueError("invalid coefficients: " + "; ".join(bad))

    def violations(self) -> list:
        out = []
        if self.n_modes < 1:
            out.append("n_modes >= 1")
        if self.d < 1:
            out.append("d >= 1")
        if not 0.0 < self.mu < 1.0:
            out.append("mu in (0,1)")
        if not 0.0 <= self.delta < 1.0:
            out.append("delta in [0,1)")
        if self.sigma < 0.0:
            out.append("sigma >= 0")
        if not 0.0 < self.gamma < min(1.0 - self.delta, 1.0):
            out.append("gamma in (0, 1-delta)")
        if abs(self.f_scale) > self.mu:
            out.append("drift Lipschitz constant <= mu")
        if any(abs(g) > self.mu for g in self.g_scale):
            out.append("C_G <= mu")
        if self.offset_modes < 1:
            out.append("offset_modes >= 1")
        else:
            off = max(abs(g) for g in self.g_offset)
            chi = self.offset_profile()
            w = eigenvalues(self.n_modes) ** (self.gamma - self.sigma)
            if off * np.sqrt(np.sum(w * chi ** 2)) > self.mu:
                out.append("offset norm <= mu")
        return out

    @property
    def c_g(self) -> float:
        """Operator-norm bound of the channel derivatives."""
        return max(abs(g) for g in self.g_scale)

    def offset_profile(self) -> np.ndarray:
        """Unit-B0-norm profile of the constant channel term.

        Spread over the first offset_modes modes with coefficient
        lambda_k**offset_shape; the default is the first eigenmode alone.
        """
        chi = np.zeros(self.n_modes)
        m = min(self.offset_modes, self.n_modes)
        chi[:m] = eigenvalues(self.n_modes)[:m] ** self.offset_shape
        return chi / np.linalg.norm(chi)

    def g_multipliers(self) -> np.ndarray:
        """(d, n_modes) diagonal multipliers of the linear channel parts."""
        lam_s = eigenvalues(self.n_modes) ** (self.sigma / 2.0)
        return np.asarray(self.g_scale)[:, None] * lam_s[None, :]

    def g_offsets(self) -> np.ndarray:
        """(d, n_modes) constant channel terms."""
        return np.asarray(self.g_offset)[:, None] * self.offset_profile()[None, :]


def apply_F(x: SpectralField, spec: CoefficientSpec) -> SpectralField:
    """Drift coefficient F(y) = f_scale * y."""
    return SpectralField(spec.f_scale * x.coeffs)


def apply_G(x: SpectralField, spec: CoefficientSpec) -> list:
    """Diffusion channels G_j(y), one SpectralField per noise channel."""
    vals = spec.g_multipliers() * x.coeffs[None, :] + spec.g_offsets()
    return [SpectralField(vals[j]) for j in range(spec.d)]


def apply_DG(x: SpectralField, spec: CoefficientSpec, h: SpectralField) -> list:
    """Directional derivative DG(x)[h]; independent of x for linear channels."""
    vals = spec.g_multipliers() * h.coeffs[None, :]
    return [SpectralField(vals[j]) for j in range(spec.d)]


def dg_g(x: SpectralField, spec: CoefficientSpec) -> np.ndarray:
    """(d, d, n_modes) array with entry [a, l] = DG_l(x)[G_a(x)].

    This is the compensator contracted against the second-order tensor in
    the rough convolution, summing over both channel axes.
    """
    mult = spec.g_multipliers()
    g = mult * x.coeffs[None, :] + spec.g_offsets()
    return g[:, None, :] * mult[None, :, :]


def write_field_csv(x: SpectralField, fname) -> None:
    """CSV export with rows k, coeff."""
    with open(fname, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "coeff"])
        for k, c in enumerate(x.coeffs, start=1):
            writer.writerow([k, "%.17g" % c])


def read_field_csv(fname) -> SpectralField:
    data = np.genfromtxt(fname, delimiter=",", skip_header=1)
    if data.ndim == 1:
        data = data[None, :]
    return SpectralField(data[:, 1])

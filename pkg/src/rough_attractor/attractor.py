"""Discrete dynamics over stopping intervals and pullback attractor estimates.

The discrete system advances the mild solution across stopping intervals of
the driving rough path. Decay estimates use the discrete Gronwall bound; the
absorbing-set radius is the tail-weighted series over the backward stopping
sequence. The pullback estimate evolves bundles of initial states from the
shifted absorbing balls and reports sup norms and diameters; the smoothing
experiment repeats it under mollified drivers and compares attractor samples,
stopping times, and noises.

Test bundles are spheres with the radius taken from the computed absorbing
radius at the shifted base point, directions drawn from the seeded generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fbm import GridPath, grid_steps, wiener_shift
from .roughpath import RoughPathGrid, canonical_lift, rough_distance, wong_zakai_smooth
from .spectral import (CoefficientSpec, SpectralField, norm_weights)
from .stopping import (StoppingParams, StoppingSequence, WindowExhausted,
                       build_sequence)
from .rde import dnorm, evolve_states, solve_rde

__all__ = [
    "GronwallParams",
    "AttractorParams",
    "RadiusEstimate",
    "gronwall_bound",
    "gronwall_recursion",
    "phi_step",
    "absorbing_radius",
    "pullback_estimate",
    "semicontinuity_experiment",
    "fit_bound_constant",
    "audit_bounds",
]


@dataclass(frozen=True)
class GronwallParams:
    """Constants and time sequence of the discrete Gronwall estimate.

    times must start at 0 and increase; consecutive gaps from the second one
    on may not exceed -(2/lambda_star) * log(k1).
    """

    k0: float
    k1: float
    k2: float
    lambda_star: float
    v0: float
    times: tuple

    def __post_init__(self) -> None:
        if min(self.k0, self.k1, self.k2, self.lambda_star) <= 0:
            raise ValueError("k0, k1, k2, lambda_star must be positive")
        if self.k1 >= 1.0:
            raise ValueError("k1 must be smaller than 1")
        if self.v0 < 0:
            raise ValueError("v0 must be nonnegative")
        t = tuple(float(x) for x in self.times)
        if not t or t[0] != 0.0:
            raise ValueError("times must start at t_0 = 0")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("times must be strictly increasing")
        gap_cap = -(2.0 / self.lambda_star) * np.log(self.k1)
        if any(b - a > gap_cap + 1e-12 for a, b in zip(t, t[1:])):
            raise ValueError(
                f"time gaps must not exceed -(2/lambda_star)*log(k1) = {gap_cap}")
        object.__setattr__(self, "times", t)

    @classmethod
    def from_constant(cls, c: float, mu: float, lam: float, v0: float,
                      times) -> "GronwallParams":
        """The standard instantiation k0 = c/(1-c*mu), k1 = k2 = c*mu/(1-c*mu)."""
        if c * mu >= 1:
            raise ValueError("need c*mu < 1")
        k1 = c * mu / (1.0 - c * mu)
        return cls(k0=c / (1.0 - c * mu), k1=k1, k2=k1, lambda_star=lam,
                   v0=v0, times=tuple(times))


def gronwall_bound(p: GronwallParams, i: int) -> float:
    """Closed-form decay bound at index i >= 1."""
    if i < 1:
        raise ValueError("the bound is defined for i >= 1")
    if i - 1 >= len(p.times):
        raise ValueError(f"times covers indices up to {len(p.times) - 1}")
    t = np.asarray(p.times[:i])
    head = ((p.k0 * p.v0 + p.k2) * (1.0 + p.k1) ** (i - 1)
            * np.exp(-0.5 * p.lambda_star * t[i - 1]))
    m = np.arange(1, i)
    tail = np.sum(2.0 * p.k2 * (1.0 + p.k1) ** (i - 1 - m)
                  * np.exp(-0.5 * p.lambda_star * (t[i - 1] - t[m])))
    return float(head + tail)


def gronwall_recursion(p: GronwallParams, i_max: int) -> np.ndarray:
    """Sequence satisfying the recursive inequality with equality, i = 1..i_max."""
    if i_max + 1 > len(p.times) + 1:
        raise ValueError("times too short for i_max")
    u = np.empty(i_max + 1)
    u[0] = 0.0
    t = np.asarray(p.times)
    for i in range(1, i_max + 1):
        m = np.arange(1, i)
        decay = np.exp(-p.lambda_star * (t[i - 1] - t[m]))
        u[i] = (p.k0 * p.v0 * np.exp(-p.lambda_star * t[i - 1])
                + np.sum(p.k1 * u[m] * decay)
                + np.sum(p.k2 * decay) + p.k2)
    return u[1:]


@dataclass(frozen=True)
class AttractorParams:
    """Parameters of the discrete dynamics and attractor estimates.

    d1 is the configured spacing-rate estimate used by the algebraic
    constraint checks; c_bound the fitted constant feeding k0, k1, k2.
    """

    mu: float
    alpha: float
    nu: float = 0.05
    lam: float = 2.0
    d1: float = 0.96
    c_bound: float = 0.5
    eps_tail: float = 1e-10
    i_max: int = 30
    bundle_size: int = 8
    bisection_tol: float = 1e-6
    bundle_seed: int = 1234

    def __post_init__(self) -> None:
        bad = self.violations()
        if bad:
            raise ValueError("invalid attractor parameters: " + "; ".join(bad))

    def violations(self) -> list:
        out = []
        if not 0.0 < self.mu < 1.0:
            out.append("mu in (0,1)")
        if self.lam <= 0:
            out.append("lambda > 0")
        if not 0.0 <= self.nu < self.d1 * self.lam / 2.0:
            out.append("nu in [0, d1*lambda/2)")
        if self.c_bound * self.mu >= 1.0:
            out.append("c_bound*mu < 1")
        else:
            k1 = self.k1
            if not 0.0 < k1 < 1.0:
                out.append("k1(mu) in (0,1)")
            elif -(2.0 / self.lam) * np.log(k1) <= 1.0:
                out.append("cond_3.55: -(2/lambda)*log(k1) > 1")
            elif not self.d1 > 2.0 * (np.log(1.0 + k1) + self.nu) / self.lam:
                out.append("cond_3.58: d1 > 2*(log(1+k1)+nu)/lambda")
        if not self.d1 < 1.0:
            out.append("d1 < 1")
        if not self.nu + self.d1 > 1.0:
            out.append("cond_3.59: nu + d1 > 1")
        if self.eps_tail <= 0:
            out.append("eps_tail > 0")
        if self.i_max < 1 or self.bundle_size < 2:
            out.append("i_max >= 1 and bundle_size >= 2")
        return out

    @property
    def k1(self) -> float:
        return self.c_bound * self.mu / (1.0 - self.c_bound * self.mu)

    @property
    def k0(self) -> float:
        return self.c_bound / (1.0 - self.c_bound * self.mu)

    @property
    def k2(self) -> float:
        return self.k1

    def stopping(self) -> StoppingParams:
        return StoppingParams(mu=self.mu, alpha=self.alpha,
                              bisection_tol=self.bisection_tol)


def phi_step(i: int, j: int, rp: RoughPathGrid, y0: SpectralField,
             spec: CoefficientSpec, params: AttractorParams,
             seq: StoppingSequence = None) -> SpectralField:
    """Discrete dynamics: solve from T_j over i stopping intervals.

    Equals the solution driven by the shift of the rough path to T_j,
    evaluated at the i-th stopping time of the shifted driver; computed on
    the original grid via the cocycle of grid-aligned stopping times.
    Returns y0 unchanged when i = 0.
    """
    if i < 0:
        raise ValueError("i must be nonnegative")
    if i == 0:
        return y0
    if seq is None:
        seq = build_sequence(rp, params.stopping(), min(j, 0), i + max(j, 0))
    a, b = seq[j], seq[i + j]
    final = evolve_states(y0.coeffs[None, :], spec, rp, (a, b))
    return SpectralField(final[0])


@dataclass(frozen=True)
class RadiusEstimate:
    """Absorbing radius with the tail-truncation index that achieved it."""

    radius: float
    truncation_index: int

    def __float__(self) -> float:
        return self.radius


def absorbing_radius(seq: StoppingSequence, params: AttractorParams,
                     base: int = 0) -> RadiusEstimate:
    """Tail series radius 2 * sum_m 2*k2*(1+k1)**(-m) * exp(lam/2 * T_m') for
    m <= 0, where T_m' are stopping times rebased at index base - 1.

    Truncates once a term falls below eps_tail times the partial sum; raises
    when the partial sums grow (spacing too short for the constants) or the
    window ends before truncation.
    """
    k1, k2, lam = params.k1, params.k2, params.lam
    total = 0.0
    m = 0
    last_term = np.inf
    while True:
        idx = base - 1 + m
        if idx < seq.i_min:
            raise ValueError(
                f"radius tail not converged by index {idx}; extend the "
                "sequence window or check cond_3.58")
        t_m = seq[idx] - seq[base - 1]
        term = 2.0 * k2 * (1.0 + k1) ** (-m) * np.exp(0.5 * lam * t_m)
        if m <= -12 and term > last_term:
            raise ValueError(
                "radius series diverges: (1+k1)*exp(-lam/2*spacing) >= 1 "
                "(cond_3.58 violated for this sample)")
        total += term
        if term < params.eps_tail * total:
            return RadiusEstimate(2.0 * total, m)
        last_term = term
        m -= 1


@dataclass(frozen=True)
class PullbackResult:
    """Radius series, bundle sups and diameters per pullback depth."""

    depths: tuple
    radii: tuple
    sup_norms: tuple
    diameters: tuple
    absorb_index: int
    attractor_sample: np.ndarray = field(repr=False)

    @property
    def r0(self) -> float:
        return self.radii[0]


def _bundle(radius: float, n_modes: int, count: int, rng) -> np.ndarray:
    """count states on the sphere of the given B-norm radius."""
    v = rng.standard_normal((count, n_modes))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return radius * v


def _diameter(states: np.ndarray) -> float:
    diff = states[:, None, :] - states[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=2)).max())


def pullback_estimate(rp: RoughPathGrid, spec: CoefficientSpec,
                      params: AttractorParams, depths=None,
                      seq: StoppingSequence = None,
                      tail_margin: int = 60) -> PullbackResult:
    """Evolve absorbing-ball bundles from T_{-i} to time 0 for increasing i.

    For each depth the bundle starts on the sphere of radius
    R(0, shifted sample at T_{-i}) and marches i stopping intervals; reports
    the B-norm sup and diameter at time 0. absorb_index is the first depth
    whose sup falls below the unshifted radius R(0); the attractor sample is
    the deepest bundle image. tail_margin extra backward stopping indices
    feed the radius tails, extended automatically while the window allows.
    """
    if depths is None:
        depths = tuple(range(1, params.i_max + 1))
    depths = tuple(sorted(depths))
    i_deep = depths[-1]
    margin = tail_margin
    window_limited = False
    while True:
        if seq is None or seq.i_min > -i_deep - margin:
            try:
                seq = build_sequence(rp, params.stopping(),
                                     -i_deep - margin, 1)
            except WindowExhausted as exc:
                if exc.sequence is None or exc.sequence.i_min > -i_deep - 10:
                    raise
                seq = exc.sequence
                window_limited = True
        try:
            r0 = absorbing_radius(seq, params).radius
            radii = [absorbing_radius(seq, params, base=-i).radius
                     for i in depths]
            break
        except ValueError as exc:
            if "not converged" not in str(exc) or window_limited:
                raise
            margin += 40
            seq = None
    rng = np.random.default_rng(params.bundle_seed)
    dirs = rng.standard_normal((params.bundle_size, spec.n_modes))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    sups, diams = [], []
    finals = None
    for i, r_i in zip(depths, radii):
        start = r_i * dirs
        finals = evolve_states(start, spec, rp, (seq[-i], seq[0]))
        sups.append(float(np.linalg.norm(finals, axis=1).max()))
        diams.append(_diameter(finals))
    absorb = next((d for d, s in zip(depths, sups) if s <= r0), -1)
    return PullbackResult(depths=depths, radii=(r0,) + tuple(radii),
                          sup_norms=tuple(sups), diameters=tuple(diams),
                          absorb_index=absorb, attractor_sample=finals)


def hausdorff_distance(a: np.ndarray, b: np.ndarray, one_sided=True) -> float:
    """dist(a, b) = sup over rows of a of the distance to the set b."""
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    fwd = float(d.min(axis=1).max())
    return fwd if one_sided else max(fwd, float(d.min(axis=0).max()))


@dataclass(frozen=True)
class SemicontinuityResult:
    """Per-eta distances between smoothed and rough attractor samples."""

    etas: tuple
    attractor_dists: tuple
    stopping_devs: tuple
    noise_dists: tuple
    absorb_indices: tuple


def semicontinuity_experiment(path: GridPath, etas, spec: CoefficientSpec,
                              params: AttractorParams, alpha_prime: float,
                              depths=None, stopping_range: int = 4,
                              dist_window=(-1.0, 1.0)) -> SemicontinuityResult:
    """Pullback estimates under the rough driver and each smoothed driver.

    For every smoothing width the attractor samples are compared in the
    one-sided Hausdorff distance, the forward/backward stopping times of the
    smoothed and rough drivers over indices |i| <= stopping_range are
    compared (mean absolute deviation of the sub-grid roots), and the rough
    path distance of the noises over dist_window is reported.
    """
    etas = tuple(etas)
    stp = params.stopping()
    rp = canonical_lift(path)
    ref = pullback_estimate(rp, spec, params, depths=depths)
    seq_ref = build_sequence(rp, stp, -stopping_range, stopping_range)
    dev_times_ref = _sequence_roots(rp, stp, seq_ref, stopping_range)
    rp_win = rp.restrict(*dist_window)
    dists, devs, ndists, absorbs = [], [], [], []
    for eta in etas:
        sm = wong_zakai_smooth(path, eta, window=(path.t0, path.t_end - eta))
        rps = canonical_lift(sm)
        res = pullback_estimate(rps, spec, params, depths=depths)
        dists.append(hausdorff_distance(res.attractor_sample,
                                        ref.attractor_sample))
        seq_s = build_sequence(rps, stp, -stopping_range, stopping_range)
        roots = _sequence_roots(rps, stp, seq_s, stopping_range)
        devs.append(float(np.mean(np.abs(roots - dev_times_ref))))
        ndists.append(rough_distance(rp_win, rps.restrict(*dist_window),
                                     alpha_prime, strict_alpha=False))
        absorbs.append(res.absorb_index)
    return SemicontinuityResult(etas=etas, attractor_dists=tuple(dists),
                                stopping_devs=tuple(devs),
                                noise_dists=tuple(ndists),
                                absorb_indices=tuple(absorbs))


def _sequence_roots(rp, stp, seq, k: int) -> np.ndarray:
    """Sub-grid stopping roots T_i for 0 < |i| <= k via the grid sequence."""
    from .stopping import _backward, _forward
    out = []
    for i in range(-k, 0):
        tau, _ = _backward(rp, stp, seq.indices[i + 1])
        out.append(seq[i + 1] - tau)
    for i in range(1, k + 1):
        tau, _ = _forward(rp, stp, seq.indices[i - 1])
        out.append(seq[i - 1] + tau)
    return np.asarray(out)


@dataclass(frozen=True)
class BoundAudit:
    """Fitted constant and the per-sample inequality margins."""

    c_fit: float
    margin: float
    dnorm_violations: int
    phi_violations: int
    dnorm_ratios: tuple
    phi_ratios: tuple


def _dnorm_profile(rp, spec, params, seq, i_max, y0):
    """Interval norms L_i and decay-weighted inequality data for one sample."""
    stp_gamma = spec.gamma
    z = solve_rde(SpectralField(y0), spec, rp, (0.0, seq[i_max]))
    lhs = []
    for i in range(1, i_max + 1):
        rep = dnorm(z, rp, stp_gamma, params.alpha, (seq[i - 1], seq[i]))
        lhs.append(rep.total)
    return np.asarray(lhs)


def _rhs_unit(lhs, seq, params, y0_norm, i):
    """Lemma-shaped right-hand side at i with constant 1."""
    lam, mu = params.lam, params.mu
    t = np.asarray([seq[m] for m in range(0, i + 1)])
    m = np.arange(1, i)
    tail = np.sum(mu * (1.0 + lhs[m - 1]) * np.exp(-lam * (t[i - 1] - t[m])))
    return tail + mu * (1.0 + lhs[i - 1]) + np.exp(-lam * t[i - 1]) * y0_norm


def fit_bound_constant(samples, spec: CoefficientSpec, params: AttractorParams,
                       i_max: int = 20, margin: float = 1.25,
                       y0_scale: float = 1.0):
    """Envelope constant over calibration samples for both decay inequalities.

    samples is a list of rough paths, each covering [-1, i_max + 1]. Returns
    (c_fit, per-sample data) where c_fit is margin times the largest ratio of
    measured interval norm (or state norm) to the unit-constant right side.
    """
    ratios = []
    data = []
    for rp in samples:
        seq = build_sequence(rp, params.stopping(), -1, i_max + 1)
        y0 = y0_scale / np.arange(1, spec.n_modes + 1) ** 1.5
        y0_norm = float(np.sqrt(np.sum(norm_weights(spec.n_modes, spec.gamma)
                                       * y0 ** 2)))
        lhs = _dnorm_profile(rp, spec, params, seq, i_max, y0)
        r = [lhs[i - 1] / _rhs_unit(lhs, seq, params, y0_norm, i)
             for i in range(1, i_max + 1)]
        ratios.extend(r)
        data.append((seq, lhs, y0, y0_norm))
    return margin * float(np.max(ratios)), data


def audit_bounds(cal_samples, val_samples, spec: CoefficientSpec,
                 params: AttractorParams, i_max: int = 20,
                 margin: float = 1.25) -> BoundAudit:
    """Fit the constant on calibration samples, validate on held-out ones.

    Checks the interval-norm inequality with the fitted constant and the
    decay estimate of the state norms with the derived k using the fitted
    constant; counts violations over all stopping indices i <= i_max.
    """
    c_fit, _ = fit_bound_constant(cal_samples, spec, params, i_max, margin)
    dn_ratios, phi_ratios = [], []
    dn_bad = phi_bad = 0
    for rp in val_samples:
        seq = build_sequence(rp, params.stopping(), -1, i_max + 1)
        y0 = 1.0 / np.arange(1, spec.n_modes + 1) ** 1.5
        y0_norm = float(np.sqrt(np.sum(norm_weights(spec.n_modes, spec.gamma)
                                       * y0 ** 2)))
        lhs = _dnorm_profile(rp, spec, params, seq, i_max, y0)
        states = evolve_states(y0[None, :], spec, rp, (0.0, seq[i_max]),
                               record=True)[:, 0, :]
        gp = GronwallParams.from_constant(
            c_fit, params.mu, params.lam,
            v0=float(np.linalg.norm(y0)),
            times=[seq[m] for m in range(0, i_max + 1)])
        for i in range(1, i_max + 1):
            r = lhs[i - 1] / (c_fit * _rhs_unit(lhs, seq, params, y0_norm, i))
            dn_ratios.append(r)
            if r > 1.0:
                dn_bad += 1
            k_i = seq.indices[i] - seq.indices[0]
            phi_norm = float(np.linalg.norm(states[k_i]))
            rb = phi_norm / gronwall_bound(gp, i)
            phi_ratios.append(rb)
            if rb > 1.0:
                phi_bad += 1
    return BoundAudit(c_fit=c_fit, margin=margin, dnorm_violations=dn_bad,
                      phi_violations=phi_bad, dnorm_ratios=tuple(dn_ratios),
                      phi_ratios=tuple(phi_ratios))

"""Maximal fixed point of the gel equation, gel data, and critical slope.

Past the gelation time a particle drawn from the initial measure has a
positive chance of being swallowed by the macroscopic cluster; that chance
is ``rho(x) = 1 - exp(-plus(x) . c)`` where the coefficient vector ``c``
solves

    c = t * rate_scale * F(c),
    F(c) = A_plus < plus * (1 - exp(-plus . c)) >_mu0.

Among the solutions (0 is always one) the physical branch is the MAXIMAL
one; it is reached by iterating downward from the saturation bound and is
zero exactly up to the gelation time.  Gel observables are the moments of
``rho`` against the initial measure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCubic, SlowConvergence
from .spectral import SpectralResult, gelation
from .system import (
    AtomicMeasure,
    BilinearSystem,
    GelData,
    first_moments,
    gram_plus,
    moment_matrix,
)

_STEP_TOL = 1e-12
_MAX_ITER = 100_000
# t within this relative band above t_g is treated as subcritical: the
# iteration suffers critical slowing there while the true solution is 0.
_CRITICAL_BAND = 1e-12
_ZERO_BAND = 10.0 * _STEP_TOL


@dataclass(frozen=True)
class SurvivalCoefficients:
    """Solution of the fixed-point equation at one time."""

    t: float
    c: np.ndarray
    residual: float

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.c == 0.0))


def fixed_point_map(
    sys: BilinearSystem, measure: AtomicMeasure, c: np.ndarray
) -> np.ndarray:
    """The map F above.  Monotone nondecreasing in c, saturating at
    ``A_plus <plus>``."""
    c = np.asarray(c, dtype=float)
    plus = measure.coords[:, 1 : 1 + sys.n]
    w = measure.weight_array
    rho = -np.expm1(-(plus @ c))
    return sys.a_plus @ (plus.T @ (w * rho))


def solve_fixed_point(
    sys: BilinearSystem,
    measure: AtomicMeasure,
    t: float,
    rate_scale: float = 1.0,
    spectral: SpectralResult | None = None,
) -> SurvivalCoefficients:
    """Maximal solution of ``c = t * rate_scale * F(c)``.

    Subcritical times (up to a hair above t_g) return exact zeros: the
    downward iteration converges like 1/k right at criticality, so the
    spectral gate replaces it there.  Supercritically the iteration starts
    at the saturation bound, decreases monotonically, and its limit is the
    maximal fixed point.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if spectral is None:
        spectral = gelation(sys, measure, rate_scale)
    n = sys.n
    if t <= spectral.t_g * (1.0 + _CRITICAL_BAND):
        return SurvivalCoefficients(t, np.zeros(n), 0.0)
    plus = measure.coords[:, 1: 1 + n]
    w = measure.weight_array
    scale = t * rate_scale
    c = scale * (sys.a_plus @ (plus.T @ w))
    for _ in range(_MAX_ITER):
        c_next = scale * (sys.a_plus @ (plus.T @ (w * -np.expm1(-(plus @ c)))))
        gap = float(np.abs(c_next - c).max())
        c = c_next
        if gap < _STEP_TOL:
            break
    else:
        raise SlowConvergence(
            f"fixed point not resolved in {_MAX_ITER} iterations at t={t}; "
            "critical slowing near the gelation time"
        )
    if float(np.abs(c).max()) < _ZERO_BAND:
        c = np.zeros(n)
    residual = float(np.abs(c - scale * fixed_point_map(sys, measure, c)).max())
    return SurvivalCoefficients(t, c, residual)


def survival_probabilities(
    sys: BilinearSystem, measure: AtomicMeasure, sol: SurvivalCoefficients
) -> np.ndarray:
    """Per-atom probability of belonging to the macroscopic cluster."""
    plus = measure.coords[:, 1 : 1 + sys.n]
    return -np.expm1(-(plus @ sol.c))


def gel_data(
    sys: BilinearSystem,
    measure: AtomicMeasure,
    t: float,
    rate_scale: float = 1.0,
    spectral: SpectralResult | None = None,
) -> GelData:
    """Gel observables ``g_i = <pi_i rho_t>`` for all 1+n+m coordinates."""
    sol = solve_fixed_point(sys, measure, t, rate_scale, spectral)
    if sol.is_zero:
        return GelData(np.zeros(1 + sys.n + sys.m))
    rho = survival_probabilities(sys, measure, sol)
    return GelData(measure.coords.T @ (measure.weight_array * rho))


def tilted_measure(
    sys: BilinearSystem,
    measure: AtomicMeasure,
    t: float,
    rate_scale: float = 1.0,
) -> AtomicMeasure:
    """The initial measure thinned by non-survival: weights times
    ``1 - rho_t``.  Describes the sol phase as a fresh subcritical system."""
    sol = solve_fixed_point(sys, measure, t, rate_scale)
    rho = survival_probabilities(sys, measure, sol)
    return measure.scaled(1.0 - rho)


def gel_curve(
    sys: BilinearSystem,
    measure: AtomicMeasure,
    times,
    rate_scale: float = 1.0,
) -> np.ndarray:
    """Rows ``(t, c_1..c_n, M, E_1..E_n)`` over a time grid."""
    spectral = gelation(sys, measure, rate_scale)
    rows = []
    for t in np.asarray(times, dtype=float):
        sol = solve_fixed_point(sys, measure, float(t), rate_scale, spectral)
        rho = survival_probabilities(sys, measure, sol)
        g = measure.coords.T @ (measure.weight_array * rho)
        rows.append(np.concatenate(([t], sol.c, g[: 1 + sys.n])))
    return np.array(rows)


def critical_slope(
    sys: BilinearSystem,
    measure: AtomicMeasure,
    rate_scale: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Right-derivatives at the gelation time: (dc/dt, dg/dt).

    Expanding the fixed point to second order around t_g and projecting
    onto the Perron direction psi (self-adjoint for the Q-weighted inner
    product) gives

        c'(t_g+) = psi / (rate_scale * t_g^2 * <psi, Sigma(psi)>_Q),
        Sigma(psi)_i = 1/2 sum_j a+_ij <pi_j (psi . plus)^2>,

    and the gel slope g'_i = sum_j c'_j <pi_i pi_j> for i = 0..n.
    """
    spectral = gelation(sys, measure, rate_scale)
    psi, t_g = spectral.psi, spectral.t_g
    n = sys.n
    plus = measure.coords[:, 1 : 1 + n]
    w = measure.weight_array
    q = gram_plus(measure)
    sigma = 0.5 * (sys.a_plus @ (plus.T @ (w * (plus @ psi) ** 2)))
    denom = float(psi @ q @ sigma)
    scale = float(np.abs(sys.a_plus).max() * (q.max() ** 1.5))
    if denom <= 1e-14 * max(1.0, scale):
        raise DegenerateCubic(
            "cubic moment term vanishes; the measure cannot support a "
            "nondegenerate gel onset"
        )
    c_prime = psi / (rate_scale * t_g * t_g * denom)
    z_plus = moment_matrix(measure, [0], range(1, n + 1))[0]
    g_prime = np.concatenate(([z_plus @ c_prime], q @ c_prime))
    assert np.all(g_prime > 0.0), "gel slope must be strictly positive"
    return c_prime, g_prime


@dataclass(frozen=True)
class SizeBiasReport:
    """Comparison of the gel's early diet against the population average.

    ``lhs`` weights the gel slope by the Perron direction; ``rhs`` is the
    prediction if the gel recruited uniformly at random.  lhs >= rhs always;
    strict inequality exactly when the mean interaction rate s(x) varies
    across atoms (the gel prefers high-activity particles).
    """

    lhs: float
    rhs: float
    strict: bool
    s_variance: float

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs


def size_bias_check(
    sys: BilinearSystem,
    measure: AtomicMeasure,
    rate_scale: float = 1.0,
    tol: float = 1e-9,
) -> SizeBiasReport:
    spectral = gelation(sys, measure, rate_scale)
    c_prime, g_prime = critical_slope(sys, measure, rate_scale)
    theta = spectral.psi / float(spectral.psi.sum())
    moments = first_moments(measure)
    lhs = float(theta @ g_prime[1:])
    rhs = float(theta @ moments[1 : 1 + sys.n]) / float(moments[0]) * g_prime[0]
    assert lhs >= rhs - tol * max(1.0, abs(rhs)), "size-bias inequality violated"
    s = measure.coords[:, 1:] @ (sys.block @ moments[1:])
    w = measure.weight_array / measure.total_mass
    mean_s = float(w @ s)
    s_variance = float(w @ (s - mean_s) ** 2)
    return SizeBiasReport(
        lhs=lhs,
        rhs=rhs,
        strict=s_variance > tol * max(1.0, mean_s * mean_s),
        s_variance=s_variance,
    )

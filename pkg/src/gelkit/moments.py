"""Second-moment dynamics: subcritical growth, blowup, supercritical sol.

Under the pair-merge dynamics the second moments of the conserved block
close into an autonomous quadratic ODE system,

    dQ/dt   = rs * Q A+ Q         Q_ij = <pi_i pi_j>,  1 <= i,j <= n
    dz_i/dt = rs * (z A+ Q)_i     z_i  = <pi0 pi_i>,   1 <= i <= n
    dz_0/dt = rs * z A+ z^T       z_0  = <pi0^2>

(mirror symmetry kills every mixed moment with a sign-odd coordinate, so
the odd block never feeds back).  The solution blows up in finite time;
that blowup time equals the gelation time, which gives an integration
route to t_g independent of the spectral formula.

After gelation the sol phase is described through duality: tilt the
initial measure by the non-survival factor, check the tilted system is
subcritical, and run the same ODE from the tilted moments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _rk
from .errors import DualNotSubcritical, ExplosionReached, NumericError
from .spectral import gelation
from .survival import gel_data, solve_fixed_point, survival_probabilities
from .system import AtomicMeasure, BilinearSystem, GelData, gram_plus, moment_matrix

BLOWUP_THRESHOLD = 1e12

_CS_SLACK = 1e-7


@dataclass(frozen=True)
class MomentState:
    """Second moments at one time: Q (n x n) and z (length n+1)."""

    t: float
    q: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("Q must be square")
        if z.shape != (q.shape[0] + 1,):
            raise ValueError("z must have length n+1")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def total_second_moment(self) -> float:
        """<phi^2> where phi = pi0 + sum of conserved coordinates."""
        return float(self.z[0] + 2.0 * self.z[1:].sum() + self.q.sum())


def initial_state(measure: AtomicMeasure) -> MomentState:
    n = len(measure.atoms[0].plus)
    return MomentState(
        0.0,
        gram_plus(measure),
        moment_matrix(measure, [0], range(0, n + 1))[0],
    )


def moment_rhs(
    sys: BilinearSystem, state: MomentState, rate_scale: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Time derivatives (dQ, dz) at the given state."""
    q, z = state.q, state.z
    zp = z[1:]
    dq = rate_scale * (q @ sys.a_plus @ q)
    dz = np.empty_like(z)
    dz[1:] = rate_scale * (zp @ sys.a_plus @ q)
    dz[0] = rate_scale * float(zp @ sys.a_plus @ zp)
    return dq, dz


def _pack(q: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.concatenate((q.ravel(), z))


def _unpack(n: int, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return y[: n * n].reshape(n, n), y[n * n :]


def _check_cauchy_schwarz(t: float, q: np.ndarray, z: np.ndarray) -> None:
    d = np.sqrt(np.diag(q))
    bound = np.outer(d, d)
    if np.any(np.abs(q) > bound * (1.0 + _CS_SLACK) + 1e-300):
        raise NumericError(
            f"Cauchy-Schwarz violated in Q at t={t}; integration unreliable"
        )
    if np.any(z[1:] ** 2 > (z[0] * np.diag(q)) * (1.0 + _CS_SLACK) + 1e-300):
        raise NumericError(
            f"Cauchy-Schwarz violated in z at t={t}; integration unreliable"
        )


def _rhs_fn(sys: BilinearSystem, n: int, rate_scale: float):
    a_plus = sys.a_plus

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        q, z = _unpack(n, y)
        zp = z[1:]
        dq = rate_scale * (q @ a_plus @ q)
        dz = np.empty_like(z)
        dz[1:] = rate_scale * (zp @ a_plus @ q)
        dz[0] = rate_scale * float(zp @ a_plus @ zp)
        return _pack(dq, dz)

    return rhs


def _accept(n: int):
    def cb(t: float, y: np.ndarray) -> np.ndarray:
        q, z = _unpack(n, y)
        q = (q + q.T) / 2.0
        _check_cauchy_schwarz(t, q, z)
        return _pack(q, z)

    return cb


def integrate_subcritical(
    sys: BilinearSystem,
    state0: MomentState,
    t_end: float,
    rate_scale: float = 1.0,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    outputs=None,
) -> MomentState | list[MomentState]:
    """Integrate the moment ODE from ``state0`` to ``t_end``.

    Raises ExplosionReached if entries cross the blowup threshold first.
    With ``outputs`` given, returns the states at those times instead of
    just the final state.
    """
    n = state0.n
    traj = _rk.integrate(
        _rhs_fn(sys, n, rate_scale),
        state0.t,
        _pack(state0.q, state0.z),
        t_end,
        rtol=rtol,
        atol=atol,
        outputs=outputs,
        accept_cb=_accept(n),
        stop=lambda t, y: float(np.abs(y).max()) >= BLOWUP_THRESHOLD,
    )
    if traj.stopped:
        raise ExplosionReached(
            f"second moments crossed {BLOWUP_THRESHOLD:.0e} at t={traj.t_final}"
            f" before requested t_end={t_end}"
        )
    if outputs is not None:
        return [
            MomentState(t, *_unpack(n, y)) for t, y in zip(traj.ts, traj.ys)
        ]
    return MomentState(traj.t_final, *_unpack(n, traj.y_final))


def explosion_time(
    sys: BilinearSystem,
    state0: MomentState,
    rate_scale: float = 1.0,
    rtol: float = 1e-9,
) -> float:
    """Blowup time of the moment ODE, found by integration.

    Runs until entries cross the blowup threshold, then fits the exact
    first-order pole: 1/max-entry is asymptotically linear in t, and its
    root extrapolates the blowup time.  Deliberately makes no use of the
    spectral formula, so the two routes cross-validate each other.
    """
    n = state0.n
    # trial steps overshoot the pole; the step controller rejects them,
    # so the transient overflows are expected and harmless
    with np.errstate(over="ignore", invalid="ignore"):
        traj = _rk.integrate(
            _rhs_fn(sys, n, rate_scale),
            state0.t,
            _pack(state0.q, state0.z),
            1e30,
            rtol=rtol,
            atol=1e-12,
            accept_cb=_accept(n),
            stop=lambda t, y: float(np.abs(y).max()) >= BLOWUP_THRESHOLD,
            keep_steps=True,
            max_steps=200_000,
        )
    if not traj.stopped:
        raise NumericError(
            "moment ODE showed no blowup within the step budget; "
            "the system appears subcritical forever (degenerate input)"
        )
    peaks = np.array([float(np.abs(y).max()) for y in traj.step_ys])
    ts = np.array(traj.step_ts)
    cutoff = peaks[-1] / 10.0
    sel = peaks >= cutoff
    if sel.sum() < 3:
        sel = np.zeros_like(sel)
        sel[-3:] = True
    slope, intercept = np.polyfit(ts[sel], 1.0 / peaks[sel], 1)
    if slope >= 0.0:
        raise NumericError("pole fit failed: 1/moments not decreasing")
    return float(-intercept / slope)


def supercritical_moments(
    sys: BilinearSystem,
    measure: AtomicMeasure,
    t: float,
    rate_scale: float = 1.0,
) -> MomentState:
    """Sol-phase second moments after gelation, via the duality tilt.

    Thin the initial measure by the survival probabilities at time t,
    verify the tilted system gels strictly later than t, then integrate
    the ordinary moment ODE from the tilted moments up to t.
    """
    spectral = gelation(sys, measure, rate_scale)
    if t <= spectral.t_g:
        raise ValueError(
            f"t={t} is subcritical (t_g={spectral.t_g}); integrate directly"
        )
    sol = solve_fixed_point(sys, measure, t, rate_scale, spectral)
    rho = survival_probabilities(sys, measure, sol)
    tilted = measure.scaled(1.0 - rho)
    tilted_tg = gelation(sys, tilted, rate_scale).t_g
    if t >= tilted_tg * (1.0 - 1e-9):
        raise DualNotSubcritical(
            f"tilted system gels at {tilted_tg}, not after requested t={t}; "
            "fixed-point solution is inconsistent"
        )
    return integrate_subcritical(
        sys, initial_state(tilted), t, rate_scale
    )


def moments_at(
    sys: BilinearSystem,
    measure: AtomicMeasure,
    t: float,
    rate_scale: float = 1.0,
) -> tuple[MomentState, str]:
    """Moments of the sol at time t with the phase label."""
    t_g = gelation(sys, measure, rate_scale).t_g
    if t <= t_g:
        state = integrate_subcritical(sys, initial_state(measure), t, rate_scale)
        return state, "sol-subcritical"
    return supercritical_moments(sys, measure, t, rate_scale), "supercritical-dual"


def gel_growth_ode(
    sys: BilinearSystem,
    measure: AtomicMeasure,
    t_to: float,
    rate_scale: float = 1.0,
    outputs=None,
    rtol: float = 1e-7,
) -> list[tuple[float, GelData]]:
    """Post-gel trajectory of the gel data by direct integration.

    The gel absorbs sol particles at a rate set by the current sol moments:
    dg_0 = rs * z A+ g_plus and dg_plus = rs * Q A+ g_plus, with (Q, z)
    taken from the duality pipeline at each time.  Starts a whisker above
    the gelation time with the fixed-point gel as initial data.  This is
    the second, independent route to the gel curve.
    """
    spectral = gelation(sys, measure, rate_scale)
    t_g = spectral.t_g
    if t_to <= t_g:
        raise ValueError(f"t_to={t_to} is not after the gelation time {t_g}")
    t_start = t_g * (1.0 + 1e-3)
    if t_to <= t_start:
        t_start = t_g + 0.5 * (t_to - t_g)
    g0 = gel_data(sys, measure, t_start, rate_scale, spectral).g
    n = sys.n
    coeff_cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def coeffs(t: float) -> tuple[np.ndarray, np.ndarray]:
        got = coeff_cache.get(t)
        if got is None:
            state = supercritical_moments(sys, measure, t, rate_scale)
            got = (state.q, state.z[1:])
            coeff_cache[t] = got
        return got

    def rhs(t: float, g: np.ndarray) -> np.ndarray:
        q, zp = coeffs(t)
        gp = g[1 : 1 + n]
        dg = np.zeros_like(g)
        flow = sys.a_plus @ gp
        dg[0] = rate_scale * float(zp @ flow)
        dg[1 : 1 + n] = rate_scale * (q @ flow)
        return dg

    out = sorted({float(v) for v in (outputs or [])} | {float(t_to)})
    out = [v for v in out if v >= t_start]
    traj = _rk.integrate(
        rhs, t_start, g0, t_to, rtol=rtol, atol=1e-10, outputs=out,
        max_steps=20_000,
    )
    return [(t, GelData(y)) for t, y in zip(traj.ts, traj.ys)]

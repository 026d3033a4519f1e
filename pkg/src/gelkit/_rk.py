"""Adaptive Dormand-Prince 5(4) integrator.

Small, dependency-free, and tailored to what this package needs from an ODE
solver: exact landing on requested output times, a per-accepted-step
callback that may clamp the state, a stop predicate for blowup detection,
and access to the accepted-step history.  FSAL is exploited (the 7th stage
of an accepted step seeds the next).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NoConvergence

# Butcher tableau (Dormand & Prince 1980).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
        [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
    ]
)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [
        5179 / 57600,
        0.0,
        7571 / 16695,
        393 / 640,
        -92097 / 339200,
        187 / 2100,
        1 / 40,
    ]
)
_ERR = _B5 - _B4

_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_SAFETY = 0.9


@dataclass
class Trajectory:
    """Integration record: states at requested outputs plus step history."""

    ts: list[float] = field(default_factory=list)
    ys: list[np.ndarray] = field(default_factory=list)
    step_ts: list[float] = field(default_factory=list)
    step_ys: list[np.ndarray] = field(default_factory=list)
    stopped: bool = False
    t_final: float = 0.0
    y_final: np.ndarray | None = None
    n_accepted: int = 0
    n_rejected: int = 0


def integrate(
    f: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    t_end: float,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    outputs: Sequence[float] | None = None,
    accept_cb: Callable[[float, np.ndarray], np.ndarray | None] | None = None,
    stop: Callable[[float, np.ndarray], bool] | None = None,
    max_steps: int = 1_000_000,
    keep_steps: bool = False,
    first_step: float | None = None,
) -> Trajectory:
    """Integrate y' = f(t, y) from t0 to t_end.

    ``outputs`` are hit exactly by clipping the step size, never by
    interpolation.  ``accept_cb`` runs after each accepted step and may
    return a replacement state (used for positivity clamping); ``stop``
    ends the run early when it returns True (used for blowup detection).
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    if t_end < t:
        raise ValueError("backward integration not supported")
    out = sorted(float(v) for v in (outputs if outputs is not None else []))
    for v in out:
        if v < t0 - 1e-15 or v > t_end + 1e-15:
            raise ValueError(f"output time {v} outside [{t0}, {t_end}]")
    traj = Trajectory()

    def emit_outputs():
        while out and out[0] <= t + 1e-15 * max(1.0, abs(t)):
            traj.ts.append(out.pop(0))
            traj.ys.append(y.copy())

    emit_outputs()
    if t_end == t:
        traj.t_final, traj.y_final = t, y.copy()
        return traj

    fy = np.asarray(f(t, y), dtype=float)
    if first_step is not None:
        h = float(first_step)
    else:
        # conservative initial step from the state/derivative scales
        span = t_end - t
        scale = atol + rtol * np.abs(y)
        d0 = float(np.max(np.abs(y) / scale)) if y.size else 0.0
        d1 = float(np.max(np.abs(fy) / scale)) if y.size else 0.0
        h = min(span, 0.01 * (d0 / d1) if d1 > 0 else 0.1 * span)
        h = max(h, 1e-12 * span)

    k = np.empty((7, y.size))
    for _ in range(max_steps):
        clipped = False
        h_step = min(h, t_end - t)
        if out and out[0] > t and out[0] - t < h_step:
            h_step = out[0] - t
            clipped = True
        k[0] = fy
        for s in range(1, 6):
            k[s] = f(t + _C[s] * h_step, y + h_step * (_A[s, :s] @ k[:s]))
        y5 = y + h_step * (_B5[:6] @ k[:6])
        k[6] = f(t + h_step, y5)
        err_vec = h_step * (_ERR @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.max(np.abs(err_vec) / scale)) if y.size else 0.0
        if not np.isfinite(err):
            h = h_step * 0.25
            traj.n_rejected += 1
            continue
        if err > 1.0:
            h = h_step * max(_MIN_FACTOR, _SAFETY * err ** (-0.2))
            traj.n_rejected += 1
            continue
        t = t + h_step
        y = y5
        fy = k[6]
        traj.n_accepted += 1
        if accept_cb is not None:
            replacement = accept_cb(t, y)
            if replacement is not None:
                y = np.asarray(replacement, dtype=float)
                fy = np.asarray(f(t, y), dtype=float)
        if keep_steps:
            traj.step_ts.append(t)
            traj.step_ys.append(y.copy())
        emit_outputs()
        if stop is not None and stop(t, y):
            traj.stopped = True
            break
        if t >= t_end - 1e-15 * max(1.0, abs(t_end)):
            break
        factor = _MAX_FACTOR if err == 0.0 else min(
            _MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * err ** (-0.2))
        )
        # a step clipped to land on an output keeps its unclipped ambition
        h = max(h, h_step * factor) if clipped else h_step * factor
    else:
        raise NoConvergence(
            f"integrator exceeded {max_steps} steps at t={t} (step {h:.3e})"
        )
    traj.t_final, traj.y_final = t, y.copy()
    return traj

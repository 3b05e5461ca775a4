"""Classical fixed-step Runge-Kutta integration."""
from __future__ import annotations

import numpy as np

from .errors import FlatrackError, StageEvaluationFailed


def rk4_step(f, s: np.ndarray, dt: float, t: float = 0.0) -> np.ndarray:
    """One classical RK4 step of ``s' = f(t, s)``.

    Failures raised by ``f`` (plant singularities, arithmetic errors) are
    re-raised as StageEvaluationFailed carrying the stage number.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    half = 0.5 * dt
    stage = 1
    try:
        k1 = f(t, s)
        stage = 2
        k2 = f(t + half, s + half * k1)
        stage = 3
        k3 = f(t + half, s + half * k2)
        stage = 4
        k4 = f(t + dt, s + dt * k3)
    except (FlatrackError, ArithmeticError, ValueError) as exc:
        if isinstance(exc, StageEvaluationFailed):
            raise
        raise StageEvaluationFailed(stage, exc) from exc
    return s + (dt / 6.0) * (k1 + k4 + 2.0 * (k2 + k3))

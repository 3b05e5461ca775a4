"""Newton-Raphson controllers: dynamical (generic and flat predictor) and statical."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import densela
from .errors import PredictionDiverged, SingularJacobian, SingularMatrix
from .flatcore import FlatPredictor, invert_prediction
from .integrate import rk4_step
from .plants import PlantModel

DIVERGENCE_LIMIT = 1e8


@dataclass
class DnrcState:
    """Integrated input of a dynamical controller and its speedup factor."""

    u: np.ndarray
    alpha: float

    def __post_init__(self):
        self.u = densela.as_vector(self.u, "u")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True, eq=False)
class ReferenceSignal:
    eval: Callable[[float], np.ndarray]
    description: str = ""

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(t)

    @classmethod
    def zero(cls, dim: int) -> "ReferenceSignal":
        return cls.constant(np.zeros(dim), "zero")

    @classmethod
    def constant(cls, values: Sequence[float], description: str | None = None) -> "ReferenceSignal":
        c = np.array(values, dtype=float)
        c.flags.writeable = False
        return cls(lambda t: c, description or f"constant {c.tolist()}")

    @classmethod
    def sinusoid(cls, amplitudes: Sequence[float], frequencies: Sequence[float]) -> "ReferenceSignal":
        """Componentwise ``A_i sin(w_i t)``."""
        amp = np.array(amplitudes, dtype=float)
        freq = np.array(frequencies, dtype=float)
        if amp.shape != freq.shape:
            raise ValueError("amplitudes and frequencies must have equal length")
        return cls(lambda t: amp * np.sin(freq * t),
                   f"sin amplitudes={amp.tolist()} frequencies={freq.tolist()}")

    @classmethod
    def tabulated(cls, times: Sequence[float], values) -> "ReferenceSignal":
        """Piecewise-linear interpolation, held constant outside the table."""
        ts = np.array(times, dtype=float)
        vs = np.atleast_2d(np.array(values, dtype=float))
        if vs.shape[0] != ts.size:
            vs = vs.T
        if vs.shape[0] != ts.size or np.any(np.diff(ts) <= 0):
            raise ValueError("tabulated reference needs strictly increasing times, one row per time")

        def evaluate(t):
            return np.array([np.interp(t, ts, vs[:, j]) for j in range(vs.shape[1])])
        return cls(evaluate, f"tabulated ({ts.size} samples)")


def _solve_small(J: np.ndarray, w: np.ndarray) -> np.ndarray:
    if J.shape == (1, 1):
        # same relative pivot rule as solve_linear, without its overhead
        if J[0, 0] == 0.0:
            raise SingularMatrix("1x1 pivot is zero")
        return w / J[0, 0]
    return densela.solve_linear(J, w)


def fixed_input_predict(plant: PlantModel, x, u, T: float, dt_pred: float) -> np.ndarray:
    """Output after simulating the plant over ``T`` with the input held at ``u``."""
    if T <= 0 or dt_pred <= 0:
        raise ValueError("T and dt_pred must be positive")
    steps = max(1, int(round(T / dt_pred)))
    h = T / steps
    u = np.asarray(u, dtype=float)
    xi = np.array(x, dtype=float)

    def field(_t, s):
        return plant.dynamics(s, u)

    for _ in range(steps):
        xi = rk4_step(field, xi, h)
        if not np.all(np.isfinite(xi)) or np.max(np.abs(xi)) > DIVERGENCE_LIMIT:
            raise PredictionDiverged(f"predictor state left |xi| <= {DIVERGENCE_LIMIT:g}")
    return plant.output(xi)


def prediction_jacobian(plant: PlantModel, x, u, T: float, dt_pred: float,
                        fd_step: float = 1e-5) -> np.ndarray:
    """Central-difference ``dg/du`` of the fixed-input predictor."""
    u = np.asarray(u, dtype=float)
    m = u.size
    J = np.empty((len(plant.output_idx), m))
    for j in range(m):
        h = fd_step * max(1.0, abs(u[j]))
        up, um = u.copy(), u.copy()
        up[j] += h
        um[j] -= h
        J[:, j] = (fixed_input_predict(plant, x, up, T, dt_pred)
                   - fixed_input_predict(plant, x, um, T, dt_pred)) / (2 * h)
    return J


def dnrc_generic_udot(plant: PlantModel, x, state: DnrcState, r_future, T: float,
                      dt_pred: float, fd_step: float = 1e-5) -> np.ndarray:
    g = fixed_input_predict(plant, x, state.u, T, dt_pred)
    J = prediction_jacobian(plant, x, state.u, T, dt_pred, fd_step)
    try:
        step = densela.solve_linear(J, g - r_future)
    except SingularMatrix as exc:
        raise SingularJacobian(f"dg/du is singular: {exc}") from exc
    return -state.alpha * step


def flat_residual(plant: PlantModel, fp: FlatPredictor, x, u, r_future) -> np.ndarray:
    """Flat prediction error ``g_f(Phi(x), Gamma(x, u)) - r_future``."""
    fs = plant.flat
    return fp.CR @ fs.phi(x) + fp.CS @ fs.gamma_fwd(x, u) - r_future


def dnrc_flat_udot(plant: PlantModel, fp: FlatPredictor, x, state: DnrcState,
                   r_future) -> np.ndarray:
    """Newton flow on the flat prediction, chained through ``dGamma/du``."""
    fs = plant.flat
    return flat_newton_step(fp, fs.phi(x), fs.gamma_fwd(x, state.u),
                            fs.dgamma_du(x, state.u), r_future, state.alpha)


def flat_newton_step(fp: FlatPredictor, z, v, J, r_future, alpha: float) -> np.ndarray:
    """``-alpha J^-1 (CS)^-1 (CR z + CS v - r)`` from precomputed flat terms."""
    if fp.scalar is not None:
        # single channel: float arithmetic beats 1-element matmuls several times over
        row, cs_inv = fp.scalar
        j = float(J[0, 0])
        if j == 0.0:
            raise SingularJacobian("dGamma/du is zero")
        dv = sum(g * zi for g, zi in zip(row, z.tolist())) + float(v[0]) - cs_inv * float(r_future[0])
        return np.array([-alpha * dv / j])
    # (CS)^-1 (CR z + CS v - r) without forming the residual
    dv = fp.gain @ z + v - fp.CS_inv @ r_future
    try:
        du = _solve_small(J, dv)
    except SingularMatrix as exc:
        raise SingularJacobian(f"dGamma/du is singular: {exc}") from exc
    return -alpha * du


def snrc_input(plant: PlantModel, fp: FlatPredictor, x, r_future) -> np.ndarray:
    """Input whose flat prediction equals ``r_future`` exactly."""
    fs = plant.flat
    z = fs.phi(x)
    v = invert_prediction(fp, z, r_future)
    return fs.gamma_inv(z, v)


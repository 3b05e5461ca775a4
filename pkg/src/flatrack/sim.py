"""Closed-loop simulation, traces, metrics, and the prediction-error probe."""
from __future__ import annotations

import io
import os
import tempfile
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .controllers import (
    DnrcState,
    ReferenceSignal,
    dnrc_generic_udot,
    flat_newton_step,
    fixed_input_predict,
    snrc_input,
)
from .errors import FlatrackError, SimulationAborted
from .flatcore import FlatPredictor, build_predictor, predict
from .integrate import rk4_step
from .plants import PlantModel

__all__ = [
    "CONTROLLERS",
    "Metrics",
    "ProbeResult",
    "SimConfig",
    "SimTrace",
    "compute_metrics",
    "prediction_error_probe",
    "rk4_step",
    "run_closed_loop",
]

CONTROLLERS = ("dnrc-generic", "dnrc-flat", "snrc")
DIVERGENCE_LIMIT = 1e8
JACOBIAN_DET_LIMIT = 1e-6


@dataclass
class SimConfig:
    T: float
    t_final: float
    x0: Sequence[float]
    controller: str = "dnrc-flat"
    alpha: float = 100.0
    dt: float = 1e-3
    u0: Sequence[float] | None = None
    dt_pred: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}; expected one of {CONTROLLERS}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_final >= self.dt:
            raise ValueError("t_final must be at least dt")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.controller != "snrc" and not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @property
    def steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def predictor_step(self) -> float:
        return self.dt_pred if self.dt_pred is not None else self.T / 100.0


@dataclass(eq=False)
class SimTrace:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    references: np.ndarray
    predictions: np.ndarray
    sat_flags: np.ndarray
    jac_flags: np.ndarray
    horizon: float
    controller: str = ""
    plant: str = ""

    def __len__(self):
        return len(self.times)

    def csv_header(self) -> str:
        n, m = self.states.shape[1], self.inputs.shape[1]
        cols = ["t"]
        cols += [f"x{i + 1}" for i in range(n)]
        cols += [f"u{i + 1}" for i in range(m)]
        cols += [f"y{i + 1}" for i in range(m)]
        cols += [f"r{i + 1}" for i in range(m)]
        cols += [f"yhat{i + 1}" for i in range(m)]
        cols.append("sat_flag")
        return ",".join(cols)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.csv_header() + "\n")
        table = np.hstack([self.times[:, None], self.states, self.inputs, self.outputs,
                           self.references, self.predictions])
        for row, flag in zip(table, self.sat_flags):
            buf.write(",".join(f"{v:.9g}" for v in row))
            buf.write(f",{int(flag)}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        write_atomic(path, self.to_csv())


def write_atomic(path, text: str) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _near_singular(J: np.ndarray) -> bool:
    det = J[0, 0] if J.shape == (1, 1) else np.linalg.det(J)
    return abs(det) < JACOBIAN_DET_LIMIT


def run_closed_loop(plant: PlantModel, config: SimConfig, r: ReferenceSignal,
                    fp: FlatPredictor | None = None) -> SimTrace:
    """Integrate plant + controller with fixed-step RK4 and record every step.

    Dynamical controllers integrate the stacked ``(x, u)`` field in one RK4
    step; the statical controller recomputes ``u`` at every stage. Saturation
    is applied to the input the plant sees and, for dynamical controllers, to
    the integrated input after each step.
    """
    n, m = plant.state_dim, plant.input_dim
    T = config.T
    ctrl = config.controller
    if ctrl != "dnrc-generic" and fp is None:
        fp = build_predictor(plant.flat, T)
    dt_pred = config.predictor_step
    f = plant.dynamics
    sat = plant.saturate
    alpha = config.alpha

    x0 = np.array(config.x0, dtype=float)
    if x0.shape != (n,):
        raise ValueError(f"x0 must have {n} entries")
    u0 = np.zeros(m) if config.u0 is None else np.array(config.u0, dtype=float)
    if u0.shape != (m,):
        raise ValueError(f"u0 must have {m} entries")

    if ctrl == "snrc":
        def field_fn(t, x):
            return f(x, sat(snrc_input(plant, fp, x, r(t + T))))
        s = x0
    else:
        # one validated state object, refreshed per stage without re-validation
        state = DnrcState(u0, alpha)
        if ctrl == "dnrc-flat":
            def udot(t, s, x, u):
                # the first RK4 stage reuses the flat terms recorded for this step
                terms = grid_terms[1] if s is grid_terms[0] else flat_terms(x, u)
                return flat_newton_step(fp, *terms, r(t + T), alpha)
        else:
            def udot(t, s, x, u):
                state.u = u
                return dnrc_generic_udot(plant, x, state, r(t + T), T, dt_pred)

        def field_fn(t, s):
            x, u = s[:n], s[n:]
            out = np.empty(n + m)
            out[:n] = f(x, sat(u))
            out[n:] = udot(t, s, x, u)
            return out
        s = np.concatenate([x0, sat(u0)])

    steps = config.steps
    dt = config.dt
    times = dt * np.arange(steps + 1)
    fs = plant.flat
    states, inputs, refs, preds = [], [], [], []
    sat_flags = np.zeros(steps + 1, dtype=bool)
    jac_flags = np.zeros(steps + 1, dtype=bool)
    clamped = False

    def flat_terms(x, u):
        return fs.phi(x), fs.gamma_fwd(x, u), fs.dgamma_du(x, u)
    grid_terms = [None, None]

    k = 0
    try:
        for k in range(steps + 1):
            t = float(times[k])
            if ctrl == "snrc":
                x = s
                u_raw = snrc_input(plant, fp, x, r(t + T))
                u = sat(u_raw)
                sat_flags[k] = not np.array_equal(u, u_raw)
            else:
                x, u = s[:n], s[n:]
                sat_flags[k] = clamped
            states.append(x)
            inputs.append(u)
            refs.append(r(t))
            if ctrl == "dnrc-generic":
                preds.append(fixed_input_predict(plant, x, u, T, dt_pred))
            else:
                terms = flat_terms(x, u)
                grid_terms[0], grid_terms[1] = s, terms
                preds.append(predict(fp, terms[0], terms[1]))
                jac_flags[k] = _near_singular(terms[2])
            if k == steps:
                break
            s = rk4_step(field_fn, s, dt, t)
            if ctrl != "snrc" and plant.input_limits is not None:
                u_next = s[n:]
                u_sat = sat(u_next)
                clamped = not np.array_equal(u_sat, u_next)
                if clamped:
                    s = np.concatenate([s[:n], u_sat])
            if not np.abs(s).max() <= DIVERGENCE_LIMIT:
                raise FlatrackError(f"state diverged beyond {DIVERGENCE_LIMIT:g}")
    except FlatrackError as exc:
        raise SimulationAborted(k, exc) from exc

    states, inputs = np.array(states), np.array(inputs)
    refs, preds = np.array(refs), np.array(preds)
    outputs = states[:, list(plant.output_idx)]
    return SimTrace(times, states, inputs, outputs, refs, preds, sat_flags, jac_flags,
                    horizon=T, controller=ctrl, plant=plant.name)


@dataclass
class Metrics:
    final_output_norm: float
    settling_time: float | None
    steady_state_error: float
    max_input_norm: float
    prediction_residual_max: float
    unsaturated_steps: int
    settle_threshold: float

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(trace: SimTrace, r: ReferenceSignal,
                    settle_threshold: float | None = None) -> Metrics:
    """Tracking metrics with ``e(t) = ||y(t) - r(t)||``.

    The settling threshold defaults to 5% of the peak reference norm, or 0.01
    for regulation (zero reference).
    """
    err = np.linalg.norm(trace.outputs - trace.references, axis=1)
    if settle_threshold is None:
        peak = float(np.max(np.linalg.norm(trace.references, axis=1)))
        settle_threshold = 0.05 * peak if peak > 0 else 0.01
    above = np.nonzero(err >= settle_threshold)[0]
    if above.size == 0:
        settling = float(trace.times[0])
    elif above[-1] + 1 < len(trace):
        settling = float(trace.times[above[-1] + 1])
    else:
        settling = None

    t0, t1 = trace.times[0], trace.times[-1]
    tail = trace.times >= t0 + 0.8 * (t1 - t0)
    free = ~trace.sat_flags
    if np.any(free):
        future = np.array([r(t + trace.horizon) for t in trace.times[free]])
        residual = float(np.max(np.linalg.norm(trace.predictions[free] - future, axis=1)))
    else:
        residual = 0.0
    return Metrics(
        final_output_norm=float(np.linalg.norm(trace.outputs[-1])),
        settling_time=settling,
        steady_state_error=float(np.max(err[tail])),
        max_input_norm=float(np.max(np.linalg.norm(trace.inputs, axis=1))),
        prediction_residual_max=residual,
        unsaturated_steps=int(np.count_nonzero(free)),
        settle_threshold=float(settle_threshold),
    )


@dataclass
class ProbeResult:
    horizons: np.ndarray
    ep_norms: np.ndarray
    ef_norms: np.ndarray
    slope_p: float
    slope_f: float

    def rows(self):
        return list(zip(self.horizons.tolist(), self.ep_norms.tolist(), self.ef_norms.tolist()))


def prediction_error_probe(plant: PlantModel,
                           fp_family: Callable[[float], FlatPredictor] | Mapping[float, FlatPredictor] | None,
                           x, u, horizons: Sequence[float], refine: int = 10) -> ProbeResult:
    """Measure ``e_p = g - h(x)`` and ``e_f = g_f - g`` over a sweep of horizons.

    ``g`` is the fixed-input prediction integrated at ``T / (100 * refine)``.
    Slopes are least-squares fits of ``||e|| = K T`` through the origin.
    """
    hs = np.array(horizons, dtype=float)
    if hs.size == 0 or np.any(hs <= 0) or np.any(np.diff(hs) <= 0):
        raise ValueError("horizons must be positive and strictly ascending")
    if fp_family is None:
        def family(T):
            return build_predictor(plant.flat, T)
    elif callable(fp_family):
        family = fp_family
    else:
        family = fp_family.__getitem__
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    y0 = plant.output(x)
    z, v = plant.flat.phi(x), plant.flat.gamma_fwd(x, u)
    ep, ef = [], []
    for T in hs:
        g = fixed_input_predict(plant, x, u, T, T / (100.0 * refine))
        ep.append(np.linalg.norm(g - y0))
        ef.append(np.linalg.norm(predict(family(T), z, v) - g))
    ep, ef = np.array(ep), np.array(ef)
    denom = float(hs @ hs)
    return ProbeResult(hs, ep, ef, float(hs @ ep) / denom, float(hs @ ef) / denom)

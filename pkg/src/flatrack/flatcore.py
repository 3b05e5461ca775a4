"""Flat linear systems, their coordinate maps, and the closed-form flat predictor."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import densela
from .errors import SingularMatrix, SingularPrediction

Map = Callable[..., np.ndarray]


def _identity(x):
    return np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class FlatSystem:
    """Linear flat system ``z' = A z + B v, y = C z`` plus the maps to the plant.

    ``phi``: x -> z, ``phi_inv``: z -> x, ``gamma_fwd``: (x, u) -> v,
    ``gamma_inv``: (z, v) -> u, ``dgamma_du``: (x, u) -> M x M Jacobian.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    phi: Map = _identity
    phi_inv: Map = _identity
    gamma_fwd: Map = field(default=lambda x, u: np.asarray(u, dtype=float))
    gamma_inv: Map = field(default=lambda z, v: np.asarray(v, dtype=float))
    dgamma_du: Map | None = None

    def __post_init__(self):
        A = densela.as_matrix(self.A, "A")
        B = densela.as_matrix(self.B, "B")
        C = densela.as_matrix(self.C, "C")
        n, m = B.shape
        if A.shape != (n, n):
            raise ValueError(f"A has shape {A.shape}, expected {(n, n)}")
        if C.shape != (m, n):
            raise ValueError(f"C has shape {C.shape}, expected {(m, n)}")
        selector = np.zeros((m, n))
        selector[:, :m] = np.eye(m)
        if not np.array_equal(C, selector):
            raise ValueError("C must select the first M flat states, C = [I, 0]")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        if self.dgamma_du is None:
            object.__setattr__(self, "dgamma_du", lambda x, u: np.eye(m))
        zero_x, zero_u = np.zeros(n), np.zeros(m)
        if np.max(np.abs(self.phi(zero_x))) > 1e-12:
            raise ValueError("phi(0) must be 0")
        if np.max(np.abs(self.gamma_fwd(zero_x, zero_u))) > 1e-12:
            raise ValueError("gamma_fwd(0, 0) must be 0")

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]


def chain_flat_system(p: int) -> FlatSystem:
    """Single integrator chain of order ``p`` with identity transforms."""
    A = np.zeros((p, p))
    A[:-1, 1:] = np.eye(p - 1)
    B = np.zeros((p, 1))
    B[-1, 0] = 1.0
    C = np.zeros((1, p))
    C[0, 0] = 1.0
    return FlatSystem(A, B, C)


@dataclass(frozen=True, eq=False)
class FlatPredictor:
    """Fixed-flat-input prediction ``y(t+T) = CR z + CS v`` for horizon ``T``."""

    T: float
    R: np.ndarray
    S: np.ndarray
    CR: np.ndarray
    CS: np.ndarray
    CS_inv: np.ndarray
    gain: np.ndarray  # (CS)^-1 CR
    scalar: tuple | None = None  # (gain row, 1/CS) as floats when M = 1

    @property
    def input_dim(self) -> int:
        return self.CS.shape[0]


def build_predictor(fs: FlatSystem, T: float, *, allow_zero: bool = False) -> FlatPredictor:
    if T < 0 or (T == 0 and not allow_zero):
        raise ValueError(f"horizon T must be positive, got {T}")
    R = densela.mat_exp(fs.A, T)
    S = densela.exp_integral(fs.A, fs.B, T)
    CR = fs.C @ R
    CS = fs.C @ S
    m = CS.shape[0]
    try:
        CS_inv = densela.solve_linear(CS, np.eye(m))
    except SingularMatrix as exc:
        raise SingularPrediction(f"CS is singular for T={T}: {exc}") from exc
    gain = CS_inv @ CR
    scalar = (tuple(gain[0].tolist()), float(CS_inv[0, 0])) if m == 1 else None
    return FlatPredictor(float(T), R, S, CR, CS, CS_inv, gain, scalar)


def predict(fp: FlatPredictor, z, v) -> np.ndarray:
    return fp.CR @ z + fp.CS @ v


def invert_prediction(fp: FlatPredictor, z, r_future) -> np.ndarray:
    """Flat input that makes the prediction hit ``r_future`` exactly."""
    return fp.CS_inv @ r_future - fp.gain @ z


def closed_loop_matrix(fs: FlatSystem, fp: FlatPredictor) -> np.ndarray:
    """State matrix ``A - B (CS)^-1 CR`` of the flat system under the statical law."""
    return fs.A - fs.B @ fp.gain


def combined_dnrc_matrix(fs: FlatSystem, fp: FlatPredictor, alpha: float) -> np.ndarray:
    """State matrix of the flat system and its Newton flow stacked on ``(z, v)``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    n, m = fs.state_dim, fs.input_dim
    Abar = np.zeros((n + m, n + m))
    Abar[:n, :n] = fs.A
    Abar[:n, n:] = fs.B
    Abar[n:, :n] = -alpha * fp.gain
    Abar[n:, n:] = -alpha * np.eye(m)
    return Abar

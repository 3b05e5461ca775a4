"""Plant models: cart-pole pendulum, kinematic bicycle, integrator chains."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SingularConfiguration
from .flatcore import FlatSystem, chain_flat_system

MIN_SPEED = 1e-6
MIN_COS = 1e-6


@dataclass(frozen=True, eq=False)
class PlantModel:
    """A plant ``x' = f(x, u)``, ``y = x[output_idx]``, with its flat system.

    ``state_bounds`` / ``input_bounds`` are (lo, hi) boxes describing the
    region where the flat transforms are valid; they are used for sampling.
    ``input_limits`` is the actuator saturation box, or None if unbounded.
    """

    name: str
    state_dim: int
    input_dim: int
    dynamics: Callable[[np.ndarray, np.ndarray], np.ndarray]
    output_idx: tuple[int, ...]
    flat: FlatSystem
    state_bounds: tuple[np.ndarray, np.ndarray]
    input_bounds: tuple[np.ndarray, np.ndarray]
    input_limits: np.ndarray | None = None
    extra_valid: Callable[[np.ndarray, np.ndarray], bool] | None = None
    params: object = None

    def output(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float)[list(self.output_idx)]

    def valid_region(self, x, u) -> bool:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        lo, hi = self.state_bounds
        ulo, uhi = self.input_bounds
        inside = bool(np.all(x >= lo) and np.all(x <= hi)
                      and np.all(u >= ulo) and np.all(u <= uhi))
        if inside and self.extra_valid is not None:
            inside = bool(self.extra_valid(x, u))
        return inside

    def sample_valid(self, rng: np.random.Generator, count: int):
        """Draw ``count`` (x, u) pairs uniformly from the valid box."""
        lo, hi = self.state_bounds
        ulo, uhi = self.input_bounds
        xs = rng.uniform(lo, hi, size=(count, self.state_dim))
        us = rng.uniform(ulo, uhi, size=(count, self.input_dim))
        keep = [i for i in range(count) if self.valid_region(xs[i], us[i])]
        return xs[keep], us[keep]

    def saturate(self, u) -> np.ndarray:
        if self.input_limits is None:
            return u
        return np.clip(u, self.input_limits[:, 0], self.input_limits[:, 1])


# -- cart-pole -------------------------------------------------------------

@dataclass(frozen=True)
class PendulumParams:
    m: float = 0.2
    M: float = 1.0
    l: float = 2.0
    g: float = 9.81

    def __post_init__(self):
        for name in ("m", "M", "l", "g"):
            if getattr(self, name) <= 0:
                raise ValueError(f"pendulum parameter {name} must be positive")


def _cos_checked(theta: float) -> float:
    c = math.cos(theta)
    if abs(c) < MIN_COS:
        raise SingularConfiguration(f"cos(theta) = {c:.2e} at theta = {theta}")
    return c


def pendulum_accel(p: PendulumParams, theta: float, omega: float, force: float) -> float:
    """Angular acceleration; this is also the flat input ``v``."""
    s = math.sin(theta)
    c = _cos_checked(theta)
    inertia = p.M * p.l + p.m * p.l * s * s
    return (force * c + (p.M + p.m) * p.g * s - p.m * p.l * omega * omega * s * c) / inertia


def pendulum_dynamics(p: PendulumParams, x, u) -> np.ndarray:
    theta, omega = np.asarray(x, dtype=float).tolist()
    force = np.asarray(u, dtype=float).reshape(-1).tolist()[0]
    return np.array([omega, pendulum_accel(p, theta, omega, force)])


def pendulum_force(p: PendulumParams, theta: float, omega: float, v: float) -> float:
    """Cart force that produces angular acceleration ``v`` (inverse of the above)."""
    s = math.sin(theta)
    c = _cos_checked(theta)
    inertia = p.M * p.l + p.m * p.l * s * s
    return (v * inertia - (p.M + p.m) * p.g * s + p.m * p.l * omega * omega * s * c) / c


def pendulum_energy(p: PendulumParams, x) -> float:
    """Conserved quantity of the unforced pendulum (cart momentum zero), scaled."""
    theta, omega = float(x[0]), float(x[1])
    s = math.sin(theta)
    return 0.5 * p.l * omega**2 * (p.M + p.m * s * s) + (p.M + p.m) * p.g * math.cos(theta)


def pendulum(params: PendulumParams | None = None) -> PlantModel:
    p = params or PendulumParams()
    base = chain_flat_system(2)

    def gamma_fwd(x, u):
        theta, omega = np.asarray(x, dtype=float).tolist()
        return np.array([pendulum_accel(p, theta, omega, float(u[0]))])

    def gamma_inv(z, v):
        theta, omega = np.asarray(z, dtype=float).tolist()
        return np.array([pendulum_force(p, theta, omega, float(v[0]))])

    def dgamma_du(x, u):
        theta = float(x[0])
        s = math.sin(theta)
        return np.array([[_cos_checked(theta) / (p.M * p.l + p.m * p.l * s * s)]])

    flat = FlatSystem(base.A, base.B, base.C, gamma_fwd=gamma_fwd,
                      gamma_inv=gamma_inv, dgamma_du=dgamma_du)
    return PlantModel(
        name="pendulum",
        state_dim=2,
        input_dim=1,
        dynamics=lambda x, u: pendulum_dynamics(p, x, u),
        output_idx=(0,),
        flat=flat,
        state_bounds=(np.array([-1.4, -5.0]), np.array([1.4, 5.0])),
        input_bounds=(np.array([-100.0]), np.array([100.0])),
        params=p,
    )


# -- kinematic bicycle -----------------------------------------------------

@dataclass(frozen=True)
class BicycleParams:
    L: float = 1.0
    a_limits: tuple[float, float] = (-5.0, 2.0)
    steer_limits: tuple[float, float] = (-math.pi / 4, math.pi / 4)

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("wheelbase L must be positive")
        for lim in (self.a_limits, self.steer_limits):
            if lim[0] > lim[1]:
                raise ValueError(f"bad limits {lim}")
        if max(abs(s) for s in self.steer_limits) >= math.pi / 2:
            raise ValueError("steering limits must stay inside (-pi/2, pi/2)")


def bicycle_dynamics(p: BicycleParams, x, u) -> np.ndarray:
    V, psi = float(x[2]), float(x[3])
    a, steer = float(u[0]), float(u[1])
    return np.array([V * math.cos(psi), V * math.sin(psi), a, V / p.L * math.tan(steer)])


def bicycle_flat_state(x) -> np.ndarray:
    V, psi = float(x[2]), float(x[3])
    return np.array([float(x[0]), float(x[1]), V * math.cos(psi), V * math.sin(psi)])


def bicycle_flat_input(p: BicycleParams, x, u) -> np.ndarray:
    V, psi = float(x[2]), float(x[3])
    a, steer = float(u[0]), float(u[1])
    k = V * V / p.L * math.tan(steer)
    c, s = math.cos(psi), math.sin(psi)
    return np.array([a * c - k * s, a * s + k * c])


def _speed(z) -> float:
    V = math.hypot(float(z[2]), float(z[3]))
    if V <= MIN_SPEED:
        raise SingularConfiguration(f"bicycle speed {V:.2e} too small for the flat transform")
    return V


def bicycle_flat_inverse(p: BicycleParams, z, v):
    """Map flat state and input back to ``(x, u)``; singular at rest."""
    V = _speed(z)
    z3, z4 = float(z[2]), float(z[3])
    v1, v2 = float(v[0]), float(v[1])
    x = np.array([float(z[0]), float(z[1]), V, math.atan2(z4, z3)])
    u = np.array([(z3 * v1 + z4 * v2) / V, math.atan(p.L * (z3 * v2 - z4 * v1) / V**3)])
    return x, u


def bicycle(params: BicycleParams | None = None) -> PlantModel:
    p = params or BicycleParams()
    A = np.zeros((4, 4))
    A[0, 2] = A[1, 3] = 1.0
    B = np.zeros((4, 2))
    B[2, 0] = B[3, 1] = 1.0
    C = np.eye(2, 4)

    def phi_inv(z):
        V = _speed(z)
        return np.array([float(z[0]), float(z[1]), V, math.atan2(float(z[3]), float(z[2]))])

    def dgamma_du(x, u):
        V, psi, steer = float(x[2]), float(x[3]), float(u[1])
        k = V * V / p.L / math.cos(steer) ** 2
        c, s = math.cos(psi), math.sin(psi)
        return np.array([[c, -k * s], [s, k * c]])

    flat = FlatSystem(
        A, B, C,
        phi=bicycle_flat_state,
        phi_inv=phi_inv,
        gamma_fwd=lambda x, u: bicycle_flat_input(p, x, u),
        gamma_inv=lambda z, v: bicycle_flat_inverse(p, z, v)[1],
        dgamma_du=dgamma_du,
    )
    limits = np.array([p.a_limits, p.steer_limits], dtype=float)
    return PlantModel(
        name="bicycle",
        state_dim=4,
        input_dim=2,
        dynamics=lambda x, u: bicycle_dynamics(p, x, u),
        output_idx=(0, 1),
        flat=flat,
        state_bounds=(np.array([-50.0, -50.0, 0.5, -math.pi]),
                      np.array([50.0, 50.0, 20.0, math.pi])),
        input_bounds=(limits[:, 0].copy(), limits[:, 1].copy()),
        input_limits=limits,
        params=p,
    )


# -- integrator chains -----------------------------------------------------

def integrator_chain(p: int) -> PlantModel:
    """Order-``p`` integrator chain; its own flat system."""
    if not 1 <= p <= 6:
        raise ValueError(f"chain order must be in 1..6, got {p}")
    flat = chain_flat_system(p)
    A, B = flat.A, flat.B
    return PlantModel(
        name=f"chain{p}",
        state_dim=p,
        input_dim=1,
        dynamics=lambda x, u: A @ x + B @ np.asarray(u, dtype=float).reshape(-1),
        output_idx=(0,),
        flat=flat,
        state_bounds=(-np.ones(p), np.ones(p)),
        input_bounds=(-np.ones(1), np.ones(1)),
        params=p,
    )


def plant_by_name(name: str, overrides: dict | None = None) -> PlantModel:
    """Resolve "pendulum", "bicycle" or "chain<p>" with optional parameter overrides."""
    overrides = dict(overrides or {})
    if name == "pendulum":
        return pendulum(PendulumParams(**overrides))
    if name == "bicycle":
        for key in ("a_limits", "steer_limits"):
            if key in overrides:
                overrides[key] = tuple(overrides[key])
        return bicycle(BicycleParams(**overrides))
    if name.startswith("chain") and name[5:].isdigit():
        if overrides:
            raise ValueError("integrator chains take no parameters")
        return integrator_chain(int(name[5:]))
    raise ValueError(f"unknown plant {name!r}")

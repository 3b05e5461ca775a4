import math

import numpy as np
import pytest

from flatrack.errors import SingularConfiguration
from flatrack.integrate import rk4_step
from flatrack.plants import (
    BicycleParams,
    PendulumParams,
    bicycle,
    bicycle_dynamics,
    bicycle_flat_input,
    bicycle_flat_inverse,
    integrator_chain,
    pendulum,
    pendulum_dynamics,
    pendulum_energy,
    plant_by_name,
)

P = PendulumParams()


def fd_jacobian(fn, x, h=1e-6):
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.column_stack(cols)


# -- pendulum ----------------------------------------------------------------

def test_pendulum_equilibrium():
    assert np.array_equal(pendulum_dynamics(P, [0.0, 0.0], [0.0]), [0.0, 0.0])


def test_pendulum_free_fall_value():
    theta0 = math.pi / 6
    acc = pendulum_dynamics(P, [theta0, 0.0], [0.0])[1]
    assert acc == pytest.approx(5.886 / 2.1, rel=1e-12)
    assert acc == pytest.approx(2.8029, abs=1e-4)
    assert pendulum_dynamics(P, [-theta0, 0.0], [0.0])[1] == pytest.approx(-acc, rel=1e-14)


def test_pendulum_flat_input_is_angular_acceleration():
    plant = pendulum()
    rng = np.random.default_rng(0)
    for x, u in zip(*plant.sample_valid(rng, 50)):
        assert plant.flat.gamma_fwd(x, u)[0] == pytest.approx(plant.dynamics(x, u)[1], rel=1e-13, abs=1e-13)


def test_pendulum_singular_configuration():
    with pytest.raises(SingularConfiguration):
        pendulum_dynamics(P, [math.pi / 2, 0.0], [1.0])
    with pytest.raises(SingularConfiguration):
        pendulum().flat.dgamma_du(np.array([math.pi / 2, 0.0]), np.zeros(1))


def test_pendulum_round_trip():
    plant = pendulum()
    fs = plant.flat
    xs, us = plant.sample_valid(np.random.default_rng(1), 500)
    assert len(xs) == 500
    for x, u in zip(xs, us):
        assert np.linalg.norm(fs.phi_inv(fs.phi(x)) - x) <= 1e-9 * (1 + np.linalg.norm(x))
        u_back = fs.gamma_inv(fs.phi(x), fs.gamma_fwd(x, u))
        assert np.linalg.norm(u_back - u) <= 1e-9 * (1 + np.linalg.norm(u))


def test_pendulum_dgamma_du_matches_finite_difference():
    plant = pendulum()
    fs = plant.flat
    for x, u in zip(*plant.sample_valid(np.random.default_rng(2), 30)):
        fd = fd_jacobian(lambda uu: fs.gamma_fwd(x, uu), u)
        assert np.allclose(fs.dgamma_du(x, u), fd, rtol=1e-6, atol=1e-9)


def test_pendulum_energy_conserved():
    x = np.array([1.0, 0.5])
    e0 = pendulum_energy(P, x)

    def field(_t, s):
        return pendulum_dynamics(P, s, [0.0])

    for _ in range(10000):
        x = rk4_step(field, x, 1e-4)
    assert abs(pendulum_energy(P, x) - e0) <= 1e-6 * abs(e0)


def test_pendulum_params_must_be_positive():
    with pytest.raises(ValueError):
        PendulumParams(m=0.0)


# -- bicycle -----------------------------------------------------------------

def test_bicycle_straight_line():
    assert np.allclose(bicycle_dynamics(BicycleParams(), [0, 0, 1, 0], [0, 0]), [1, 0, 0, 0])


def test_bicycle_axis_aligned():
    out = bicycle_dynamics(BicycleParams(L=2.0), [0, 0, 2, math.pi / 2], [1, 0])
    assert np.allclose(out, [0, 2, 1, 0], atol=1e-15)


def test_bicycle_flat_inverse_rest_case():
    x, u = bicycle_flat_inverse(BicycleParams(), [0, 0, 1, 0], [0, 0])
    assert np.allclose(x, [0, 0, 1, 0]) and np.allclose(u, [0, 0])


def test_bicycle_flat_inverse_singular_at_rest():
    with pytest.raises(SingularConfiguration):
        bicycle_flat_inverse(BicycleParams(), [0, 0, 0, 0], [1, 0])


def test_bicycle_round_trip():
    plant = bicycle()
    fs = plant.flat
    xs, us = plant.sample_valid(np.random.default_rng(3), 100)
    for x, u in zip(xs, us):
        assert np.linalg.norm(fs.phi_inv(fs.phi(x)) - x) <= 1e-9 * (1 + np.linalg.norm(x))
        _, u_back = bicycle_flat_inverse(plant.params, fs.phi(x), fs.gamma_fwd(x, u))
        assert np.linalg.norm(u_back - u) <= 1e-9 * (1 + np.linalg.norm(u))


def test_bicycle_pure_rotation():
    p = BicycleParams(L=1.5)
    V, w = 3.0, 0.8
    x, u = bicycle_flat_inverse(p, [0, 0, V, 0], [0, w])
    assert u[0] == pytest.approx(0.0, abs=1e-15)
    assert u[1] == pytest.approx(math.atan(p.L * w / V**2))
    # heading rate equals w / V, so the velocity vector turns at the flat acceleration
    assert bicycle_dynamics(p, x, u)[3] == pytest.approx(w / V, rel=1e-12)

    def field(_t, s):
        return bicycle_dynamics(p, s, u)

    h = 1e-4
    fs = bicycle(p).flat
    z_dot = (fs.phi(rk4_step(field, x, h)) - fs.phi(x)) / h
    assert z_dot[2:] == pytest.approx([0.0, w], abs=1e-3)


def test_bicycle_flat_input_along_trajectory():
    """v = d/dt (V cos psi, V sin psi) along a simulated path, by central differences."""
    p = BicycleParams()
    u = np.array([0.7, 0.3])
    x = np.array([0.0, 0.0, 2.0, 0.4])

    def field(_t, s):
        return bicycle_dynamics(p, s, u)

    h = 1e-4
    xs = [x]
    for _ in range(2):
        xs.append(rk4_step(field, xs[-1], h))
    vel = [np.array([s[2] * math.cos(s[3]), s[2] * math.sin(s[3])]) for s in xs]
    fd = (vel[2] - vel[0]) / (2 * h)
    assert np.allclose(fd, bicycle_flat_input(p, xs[1], u), atol=1e-5)


def test_bicycle_params_validation():
    with pytest.raises(ValueError):
        BicycleParams(L=0.0)
    with pytest.raises(ValueError):
        BicycleParams(steer_limits=(-2.0, 2.0))
    with pytest.raises(ValueError):
        BicycleParams(a_limits=(2.0, -5.0))


def test_bicycle_saturation():
    plant = bicycle()
    assert np.allclose(plant.saturate(np.array([10.0, -3.0])), [2.0, -math.pi / 4])
    assert np.array_equal(plant.saturate(np.array([0.1, 0.2])), [0.1, 0.2])


def test_bicycle_dgamma_du_matches_finite_difference():
    plant = bicycle()
    fs = plant.flat
    for x, u in zip(*plant.sample_valid(np.random.default_rng(4), 30)):
        fd = fd_jacobian(lambda uu: fs.gamma_fwd(x, uu), u)
        assert np.allclose(fs.dgamma_du(x, u), fd, rtol=1e-5, atol=1e-6)


# -- flat-dynamics consistency ---------------------------------------------------

@pytest.mark.parametrize("make", [pendulum, bicycle, lambda: integrator_chain(3)])
def test_flat_dynamics_consistency(make):
    plant = make()
    fs = plant.flat
    xs, us = plant.sample_valid(np.random.default_rng(5), 100)
    for x, u in zip(xs, us):
        z_dot = fd_jacobian(fs.phi, x) @ plant.dynamics(x, u)
        expected = fs.A @ fs.phi(x) + fs.B @ fs.gamma_fwd(x, u)
        assert np.allclose(z_dot, expected, atol=1e-5, rtol=1e-6)


# -- chains and lookup ---------------------------------------------------------

def test_integrator_chain_orders():
    assert np.allclose(integrator_chain(1).dynamics(np.array([0.3]), np.array([2.0])), [2.0])
    c2 = integrator_chain(2)
    assert np.allclose(c2.dynamics(np.array([1.0, 2.0]), np.array([3.0])), [2.0, 3.0])
    assert np.array_equal(c2.flat.A, pendulum().flat.A)
    with pytest.raises(ValueError):
        integrator_chain(7)


def test_origin_is_equilibrium():
    for plant in (pendulum(), integrator_chain(4)):
        assert np.array_equal(plant.dynamics(np.zeros(plant.state_dim), np.zeros(plant.input_dim)),
                              np.zeros(plant.state_dim))


def test_plant_by_name():
    assert plant_by_name("pendulum", {"l": 1.0}).params.l == 1.0
    assert plant_by_name("bicycle", {"steer_limits": [-0.5, 0.5]}).params.steer_limits == (-0.5, 0.5)
    assert plant_by_name("chain5").state_dim == 5
    with pytest.raises(ValueError):
        plant_by_name("segway")
    with pytest.raises(ValueError):
        plant_by_name("chain2", {"x": 1})


def test_output_is_coordinate_selection():
    assert np.array_equal(bicycle().output([1.0, 2.0, 3.0, 4.0]), [1.0, 2.0])
    assert np.array_equal(pendulum().output([0.2, -1.0]), [0.2])


def test_bicycle_valid_region_excludes_rest():
    plant = bicycle()
    assert not plant.valid_region([0, 0, 0.0, 0], [0, 0])
    assert plant.valid_region([0, 0, 1.0, 0], [0, 0])

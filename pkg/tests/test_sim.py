import math
import os

import numpy as np
import pytest

from flatrack import densela
from flatrack.controllers import ReferenceSignal
from flatrack.errors import SimulationAborted, SingularConfiguration, StageEvaluationFailed
from flatrack.flatcore import build_predictor
from flatrack.integrate import rk4_step
from flatrack.plants import integrator_chain, pendulum
from flatrack.sim import (
    SimConfig,
    SimTrace,
    compute_metrics,
    prediction_error_probe,
    run_closed_loop,
    write_atomic,
)

# -- rk4 -----------------------------------------------------------------------


def test_rk4_zero_field():
    s = np.array([1.0, -2.0])
    assert np.array_equal(rk4_step(lambda t, x: np.zeros_like(x), s, 0.1), s)


def test_rk4_exponential_decay():
    out = rk4_step(lambda t, x: -x, np.array([1.0]), 0.1)[0]
    assert abs(out - math.exp(-0.1)) < 1e-7
    assert out == pytest.approx(0.9048375, abs=1e-7)


def test_rk4_linear_field_matches_matrix_exponential():
    A = np.array([[0.0, 1.0], [-4.0, -0.5]])
    s = np.array([1.0, 0.0])
    errs = []
    for dt in (0.1, 0.05):
        step = rk4_step(lambda t, x: A @ x, s, dt)
        errs.append(np.linalg.norm(step - densela.mat_exp(A, dt) @ s))
    # local error is O(dt^5): halving dt shrinks it about 32x
    assert errs[0] / errs[1] == pytest.approx(32, rel=0.15)


def test_rk4_local_error_order_richardson():
    def f(t, x):
        return np.array([math.cos(t) * x[0] + math.sin(3 * t)])

    def local_error(dt):
        one = rk4_step(f, np.array([1.0]), dt, 0.2)
        half = rk4_step(f, rk4_step(f, np.array([1.0]), dt / 2, 0.2), dt / 2, 0.2 + dt / 2)
        return abs(one[0] - half[0])

    ratio = local_error(0.04) / local_error(0.02)
    assert 25 < ratio < 40


def test_rk4_wraps_stage_failures():
    def f(t, x):
        if t >= 0.05:
            raise SingularConfiguration("boom")
        return x

    with pytest.raises(StageEvaluationFailed) as info:
        rk4_step(f, np.array([1.0]), 0.1)
    assert info.value.stage == 2
    with pytest.raises(ValueError):
        rk4_step(f, np.array([1.0]), 0.0)


# -- config ----------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(dt=0.0), dict(t_final=1e-4), dict(T=0.0), dict(controller="pid"), dict(alpha=0.0),
])
def test_sim_config_validation(kwargs):
    base = dict(T=0.3, t_final=1.0, x0=[0.1, 0.0])
    base.update(kwargs)
    with pytest.raises(ValueError):
        SimConfig(**base)


def test_sim_config_defaults():
    cfg = SimConfig(T=0.5, t_final=2.0, x0=[0.0])
    assert cfg.steps == 2000
    assert cfg.predictor_step == pytest.approx(0.005)


# -- closed loop -----------------------------------------------------------------

@pytest.mark.parametrize("controller", ["dnrc-flat", "dnrc-generic", "snrc"])
def test_equilibrium_stays_at_rest(controller):
    cfg = SimConfig(T=0.3, t_final=0.2, x0=[0.0, 0.0], u0=[0.0], controller=controller, dt=0.01)
    trace = run_closed_loop(pendulum(), cfg, ReferenceSignal.zero(1))
    assert not np.any(trace.states) and not np.any(trace.inputs) and not np.any(trace.predictions)
    metrics = compute_metrics(trace, ReferenceSignal.zero(1))
    assert metrics.final_output_norm == 0.0 and metrics.steady_state_error == 0.0
    assert metrics.max_input_norm == 0.0 and metrics.prediction_residual_max == 0.0
    assert metrics.settling_time == 0.0


def test_trace_shapes_and_uniform_time(scenarios):
    _, trace, _, _ = scenarios.get("pendulum_T03_a")
    n = len(trace)
    assert n == 10001
    for arr in (trace.states, trace.inputs, trace.outputs, trace.references, trace.predictions,
                trace.sat_flags, trace.jac_flags):
        assert len(arr) == n
    assert np.allclose(np.diff(trace.times), 1e-3)
    assert not trace.jac_flags.any() and not trace.sat_flags.any()


def test_pendulum_converges(scenarios):
    _, trace, metrics, _ = scenarios.get("pendulum_T03_a")
    assert abs(trace.states[0, 0] - math.pi / 6) < 1e-15
    assert np.all(np.abs(trace.outputs[trace.times >= 8.0]) < 1e-2)
    assert metrics.settling_time is not None and metrics.settling_time < 8.0


def test_step_halving(scenarios):
    scenario, trace, _, _ = scenarios.get("pendulum_T03_a")
    plant = scenario.build_plant()
    cfg = scenario.sim_config(plant)
    cfg.dt = cfg.dt / 2
    fine = run_closed_loop(plant, cfg, ReferenceSignal.zero(1))
    assert np.max(np.abs(fine.states[-1] - trace.states[-1])) < 1e-6
    assert np.max(np.abs(fine.inputs[-1] - trace.inputs[-1])) < 1e-6
    # also mid-transient, where the comparison is not trivially at rest
    assert np.max(np.abs(fine.states[2000] - trace.states[1000])) < 1e-6


def test_generic_and_flat_dnrc_agree_on_linear_plant():
    plant = integrator_chain(2)
    r = ReferenceSignal.sinusoid([1.0], [0.5])
    # the fixed-input predictor is exact at any step on a chain, so a coarse one keeps this fast
    cfgs = [SimConfig(T=1.0, t_final=2.0, x0=[0.2, 0.0], u0=[0.0], alpha=10.0, dt=0.01,
                      dt_pred=0.1, controller=c)
            for c in ("dnrc-flat", "dnrc-generic")]
    flat, generic = (run_closed_loop(plant, c, r) for c in cfgs)
    assert np.allclose(flat.states, generic.states, atol=1e-6)
    assert np.allclose(flat.predictions, generic.predictions, atol=1e-6)


def test_aborts_on_singular_configuration():
    cfg = SimConfig(T=0.3, t_final=0.1, x0=[math.pi / 2, 0.0], dt=0.01)
    with pytest.raises(SimulationAborted) as info:
        run_closed_loop(pendulum(), cfg, ReferenceSignal.zero(1))
    assert info.value.step == 0


def test_aborts_on_divergence():
    # fifth-order chain: no speedup factor stabilizes the Newton flow
    cfg = SimConfig(T=0.3, t_final=20.0, x0=[0.1, 0, 0, 0, 0], alpha=10.0, dt=0.01)
    with pytest.raises(SimulationAborted) as info:
        run_closed_loop(integrator_chain(5), cfg, ReferenceSignal.zero(1))
    assert 0 < info.value.step < cfg.steps
    assert "diverged" in str(info.value)


def test_bicycle_snrc_prediction_exactness(scenarios):
    _, trace, metrics, _ = scenarios.get("bicycle_T05")
    assert metrics.unsaturated_steps > 0.9 * len(trace)
    assert metrics.prediction_residual_max <= 1e-8
    # the early transient hits the actuator limits, and those steps are flagged
    assert trace.sat_flags[:100].any()
    assert np.all(trace.states[:, 2] > 0.5)


# -- metrics -----------------------------------------------------------------------

def _constant_trace(c, steps=11):
    times = np.linspace(0, 1, steps)
    y = np.tile(np.asarray(c, dtype=float), (steps, 1))
    zeros = np.zeros_like(y)
    flags = np.zeros(steps, dtype=bool)
    return SimTrace(times, y.copy(), zeros, y, zeros.copy(), y.copy(), flags, flags.copy(), 0.1)


def test_metrics_constant_offset():
    m = compute_metrics(_constant_trace([3.0, 4.0]), ReferenceSignal.zero(2))
    assert m.steady_state_error == pytest.approx(5.0)
    assert m.final_output_norm == pytest.approx(5.0)
    assert m.settling_time is None
    assert m.settle_threshold == 0.01
    assert m.prediction_residual_max == pytest.approx(5.0)


def test_metrics_default_threshold_tracks_reference():
    r = ReferenceSignal.constant([2.0])
    trace = _constant_trace([2.0])
    trace.references[:] = 2.0
    m = compute_metrics(trace, r)
    assert m.settle_threshold == pytest.approx(0.1)
    assert m.steady_state_error == 0.0 and m.settling_time == 0.0


def test_metrics_settling_time():
    trace = _constant_trace([0.0])
    trace.outputs[:4, 0] = 1.0  # error above threshold through t = 0.3
    m = compute_metrics(trace, ReferenceSignal.zero(1))
    assert m.settling_time == pytest.approx(0.4)


def test_metrics_skip_saturated_steps():
    trace = _constant_trace([1.0])
    trace.sat_flags[:] = True
    m = compute_metrics(trace, ReferenceSignal.zero(1))
    assert m.unsaturated_steps == 0 and m.prediction_residual_max == 0.0


# -- CSV ---------------------------------------------------------------------------

def test_csv_layout(scenarios):
    _, trace, _, _ = scenarios.get("pendulum_T03_a")
    text = trace.to_csv()
    lines = text.splitlines()
    assert lines[0] == "t,x1,x2,u1,y1,r1,yhat1,sat_flag"
    assert len(lines) == len(trace) + 1
    first = lines[1].split(",")
    assert first[1] == f"{math.pi / 6:.9g}"
    assert first[-1] == "0"


def test_csv_bicycle_header(scenarios):
    _, trace, _, _ = scenarios.get("bicycle_T05")
    assert trace.csv_header() == "t,x1,x2,x3,x4,u1,u2,y1,y2,r1,r2,yhat1,yhat2,sat_flag"


def test_write_atomic(tmp_path):
    target = tmp_path / "sub" / "out.csv"
    write_atomic(target, "a,b\n")
    write_atomic(target, "c,d\n")
    assert target.read_text() == "c,d\n"
    assert os.listdir(target.parent) == ["out.csv"]


# -- prediction-error probe ------------------------------------------------------------

def test_probe_linear_plant_flat_error_vanishes():
    res = prediction_error_probe(integrator_chain(3), None, [0.2, -0.1, 0.3], [0.5],
                                 [0.05, 0.1, 0.2, 0.4])
    assert np.max(res.ef_norms) <= 1e-12
    assert res.slope_f == pytest.approx(0.0, abs=1e-12)


def test_probe_errors_vanish_with_horizon():
    res = prediction_error_probe(pendulum(), None, [0.3, 0.1], [1.0], [1e-4, 1e-3, 1e-2])
    assert res.ep_norms[0] < res.ep_norms[1] < res.ep_norms[2]
    assert res.ep_norms[0] < 1e-4 and res.ef_norms[0] < 1e-9


def test_probe_ratios_bounded():
    horizons = [0.05, 0.1, 0.2, 0.4]
    res = prediction_error_probe(pendulum(), None, [0.3, 0.1], [1.0], horizons)
    ratio_p = res.ep_norms / res.horizons
    ratio_f = res.ef_norms / res.horizons
    # bounded by a constant on the swept range (the linear-in-T bound holds)
    assert ratio_p.max() < 1.0 and ratio_f.max() < 0.1
    # the nonlinear flat error starts at third order, the output drift at first
    assert ratio_p[0] == pytest.approx(0.1 + 0.5 * 2.18 * 0.05, rel=0.05)
    assert len(res.rows()) == 4


def test_probe_accepts_mapping_and_callable():
    plant = pendulum()
    hs = [0.1, 0.2]
    table = {T: build_predictor(plant.flat, T) for T in hs}
    a = prediction_error_probe(plant, table, [0.3, 0.1], [1.0], hs)
    b = prediction_error_probe(plant, lambda T: table[T], [0.3, 0.1], [1.0], hs)
    assert np.array_equal(a.ef_norms, b.ef_norms)


def test_probe_rejects_bad_horizons():
    with pytest.raises(ValueError):
        prediction_error_probe(pendulum(), None, [0.3, 0.1], [1.0], [0.2, 0.1])
    with pytest.raises(ValueError):
        prediction_error_probe(pendulum(), None, [0.3, 0.1], [1.0], [])

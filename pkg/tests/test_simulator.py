import math
import warnings

import numpy as np
import pytest

from liepid import (
    BiasOrder,
    BiasSpec,
    ControllerKind,
    ErrorFunction,
    Frame,
    GainSet,
    GroupElement,
    GroupId,
    Integrator,
    ReferenceSpec,
    SimConfig,
    SimulationAborted,
    adjoint,
    axis_angle,
    exp_map,
    identity,
    inverse,
    phi,
    simulate,
)
from liepid.controllers import NoConvergenceGuarantee, control_step
from liepid.simulator import (
    SimState,
    integrate_step,
    plant_velocity,
    simulate_first_order,
    simulate_second_order,
)

from conftest import BIAS, Q0, random_element

GAINS = GainSet(kp=0.04, kd=0.2, ki=0.01)
Q0_EL = GroupElement(GroupId.SO3, Q0)


def attitude_pi(**kw):
    base = dict(group=GroupId.SO3, controller=ControllerKind.PI, gains=GAINS, g0=Q0_EL,
                bias=BiasSpec(BIAS, Frame.LEFT, BiasOrder.VELOCITY))
    base.update(kw)
    return SimConfig(**base)


def test_plant_velocity(rng):
    cfg = attitude_pi()
    g = random_element(rng, GroupId.SO3)
    np.testing.assert_array_equal(plant_velocity(cfg, np.zeros(3), g), BIAS)
    np.testing.assert_array_equal(plant_velocity(cfg, -BIAS, g), np.zeros(3))
    cfg_r = attitude_pi(bias=BiasSpec(BIAS, Frame.RIGHT), controller=ControllerKind.CROSSED_PI)
    cmd = rng.normal(size=3)
    np.testing.assert_allclose(plant_velocity(cfg_r, cmd, g), cmd + adjoint(inverse(g)) @ BIAS, atol=1e-16)
    g6 = random_element(rng, GroupId.SE3)
    b6 = rng.normal(size=6)
    cfg6 = SimConfig(GroupId.SE3, ControllerKind.PI, GAINS, bias=BiasSpec(b6, Frame.RIGHT))
    np.testing.assert_allclose(plant_velocity(cfg6, np.zeros(6), g6), adjoint(inverse(g6)) @ b6, atol=1e-14)
    with pytest.raises(ValueError):
        plant_velocity(SimConfig(GroupId.SO3, ControllerKind.PD, GAINS), np.zeros(3), g)


def test_config_validation():
    with pytest.raises(ValueError, match="bias"):
        SimConfig(GroupId.SO3, ControllerKind.PI, GAINS, bias=BiasSpec(BIAS, order=BiasOrder.TORQUE))
    with pytest.raises(ValueError, match="coordinates"):
        SimConfig(GroupId.SE3, ControllerKind.PI, GAINS, bias=BiasSpec(BIAS))
    with pytest.raises(ValueError, match="dt"):
        attitude_pi(dt=0.0)
    with pytest.raises(ValueError, match="t_final"):
        attitude_pi(t_final=0.001)
    with pytest.raises(ValueError, match="record_stride"):
        attitude_pi(record_stride=0)
    with pytest.raises(ValueError, match="xi0"):
        attitude_pi(xi0=[1.0, 0, 0])
    with pytest.raises(ValueError, match="crossed"):
        attitude_pi(controller=ControllerKind.CROSSED_PI, channel=Frame.RIGHT)
    with pytest.raises(ValueError, match="k_i >= k_d"):
        SimConfig(GroupId.SO3, ControllerKind.PID, GainSet(0.04, 0.2, 0.3))
    with pytest.raises(ValueError, match="moving"):
        SimConfig(GroupId.SO3, ControllerKind.PID, GAINS,
                  reference=ReferenceSpec(identity(GroupId.SO3), [0, 0, 0.1]))
    with pytest.raises(ValueError):
        simulate_second_order(attitude_pi(t_final=1.0))
    with pytest.raises(ValueError):
        simulate_first_order(SimConfig(GroupId.SO3, ControllerKind.PD, GAINS, t_final=1.0))


def test_trajectory_layout():
    tr = simulate(attitude_pi(t_final=10.0, record_stride=7))
    assert tr.t[0] == 0.0
    assert np.all(np.diff(tr.t) > 0)
    assert tr.t[-1] == pytest.approx(10.0)
    assert tr.g.shape == (len(tr), 3, 3)
    assert tr.xi is None
    np.testing.assert_array_equal(tr.g[0], Q0)
    assert "initial state is a critical point of phi" in tr.diagnostics


EQUILIBRIA = [
    # (controller, group, bias frame, bias order)
    (ControllerKind.PI, GroupId.SO3, Frame.LEFT, BiasOrder.VELOCITY),
    (ControllerKind.PI, GroupId.SE3, Frame.LEFT, BiasOrder.VELOCITY),
    (ControllerKind.PID, GroupId.SO3, Frame.LEFT, BiasOrder.TORQUE),
    (ControllerKind.PID, GroupId.SE3, Frame.LEFT, BiasOrder.TORQUE),
    (ControllerKind.CROSSED_PI, GroupId.SO3, Frame.RIGHT, BiasOrder.VELOCITY),
    (ControllerKind.CROSSED_PID, GroupId.SO3, Frame.RIGHT, BiasOrder.TORQUE),
    (ControllerKind.CROSSED_PID, GroupId.SE3, Frame.RIGHT, BiasOrder.TORQUE),
]


@pytest.mark.parametrize("integrator", list(Integrator), ids=lambda m: m.value)
@pytest.mark.parametrize("kind,group,frame,order", EQUILIBRIA,
                         ids=lambda x: getattr(x, "value", None))
def test_equilibria_are_stationary(kind, group, frame, order, integrator):
    d = group.dim
    bias = 0.01 * np.arange(1, d + 1)
    cfg = SimConfig(group, kind, GAINS, bias=BiasSpec(bias, frame, order), integral0=-bias / GAINS.ki,
                    dt=0.01, t_final=10.0, record_stride=1, integrator=integrator)
    tr = simulate(cfg)
    assert np.max(np.abs(np.diff(tr.g, axis=0))) <= 1e-12
    assert np.max(np.abs(np.diff(tr.integral, axis=0))) <= 1e-12
    if tr.xi is not None:
        assert np.max(np.abs(tr.xi)) <= 1e-12
    assert np.max(tr.residual) <= 1e-12


def test_p_control_matches_scalar_ode():
    # rotation about a fixed axis: theta' = -kp sin(theta), tan(theta/2) decays as exp(-kp t)
    kp = 0.04
    cfg = SimConfig(GroupId.SO3, ControllerKind.P, GainSet(kp), g0=axis_angle([0, 0, 1], math.pi / 2),
                    dt=0.01, t_final=400.0, record_stride=100)
    tr = simulate(cfg)
    theta = 2 * np.arctan(np.tan(math.pi / 4) * np.exp(-kp * tr.t))
    np.testing.assert_allclose(tr.phi, 1 - np.cos(theta), atol=1e-4)  # O(dt) Euler error
    assert np.all(np.diff(tr.phi) <= 0)
    assert tr.phi[-1] < 1e-6
    fine = simulate(SimConfig(GroupId.SO3, ControllerKind.P, GainSet(kp), g0=axis_angle([0, 0, 1], math.pi / 2),
                              dt=0.01, t_final=400.0, record_stride=100, integrator=Integrator.RKMK4))
    np.testing.assert_allclose(fine.phi, 1 - np.cos(theta), atol=1e-12)


@pytest.mark.parametrize("method", list(Integrator), ids=lambda m: m.value)
@pytest.mark.parametrize("frame", list(Frame), ids=lambda f: f.value)
def test_constant_velocity_is_exact(method, frame, rng):
    for group in GroupId:
        xi = rng.normal(size=group.dim)
        g0 = random_element(rng, group)
        state = SimState(g0, np.zeros(group.dim), np.zeros(group.dim))
        for _ in range(50):
            state = integrate_step(method, state, lambda s: (xi, np.zeros_like(xi), np.zeros_like(xi)), 0.1, frame)
        expected = g0 @ exp_map(5.0 * xi) if frame is Frame.LEFT else exp_map(5.0 * xi) @ g0
        np.testing.assert_allclose(state.g.matrix, expected.matrix, atol=1e-12)


@pytest.mark.parametrize("method", list(Integrator), ids=lambda m: m.value)
@pytest.mark.parametrize("kind", [ControllerKind.PI, ControllerKind.CROSSED_PID], ids=lambda k: k.value)
def test_integrate_step_matches_kernel(method, kind, rng):
    f = ErrorFunction(GroupId.SO3)
    bias = np.array([0.3, -0.5, 0.4])
    g0 = axis_angle([1, 2, 0], 2.5)
    order = BiasOrder.VELOCITY if kind.order == 1 else BiasOrder.TORQUE
    gains = GainSet(1.0, 2.0, 0.5)
    integral0 = np.array([0.1, 0.2, -0.3])
    xi0 = np.array([0.2, 0.0, -0.1]) if kind.order == 2 else None
    cfg = SimConfig(GroupId.SO3, kind, gains, g0=g0, bias=BiasSpec(bias, Frame.RIGHT, order),
                    integral0=integral0, xi0=xi0, dt=0.05, t_final=0.5, record_stride=1, integrator=method)
    tr = simulate(cfg)

    def rates(s):
        cmd, irate = control_step(kind, gains, f, s.g, s.xi, s.integral)
        b = adjoint(inverse(s.g)) @ bias
        if kind.order == 1:
            return cmd + b, np.zeros(3), irate
        return s.xi, cmd + b, irate

    state = SimState(g0, cfg.xi0, integral0)
    for k in range(1, len(tr)):
        state = integrate_step(method, state, rates, 0.05)
        np.testing.assert_allclose(state.g.matrix, tr.g[k], atol=1e-14)
        np.testing.assert_allclose(state.integral, tr.integral[k], atol=1e-14)
        if tr.xi is not None:
            np.testing.assert_allclose(state.xi, tr.xi[k], atol=1e-14)


def _fast_final(method, dt):
    cfg = SimConfig(GroupId.SO3, ControllerKind.CROSSED_PI, GainSet(1.0, ki=0.5), g0=axis_angle([1, 2, 0], 2.5),
                    bias=BiasSpec([0.3, -0.5, 0.4], Frame.RIGHT), dt=dt, t_final=10.0,
                    record_stride=10 ** 9, integrator=method)
    tr = simulate(cfg)
    return tr.g[-1], tr.integral[-1]


def _observed_order(method, dts):
    ref_g, ref_i = _fast_final(Integrator.RKMK4, 1e-3)
    errs = []
    for dt in dts:
        g, i = _fast_final(method, dt)
        errs.append(np.linalg.norm(g - ref_g) + np.linalg.norm(i - ref_i))
    return np.polyfit(np.log(dts), np.log(errs), 1)[0]


def test_lie_euler_is_first_order():
    assert _observed_order(Integrator.LIE_EULER, [0.02, 0.01, 0.005]) == pytest.approx(1.0, abs=0.1)


def test_rkmk4_is_fourth_order():
    assert _observed_order(Integrator.RKMK4, [0.2, 0.1, 0.05]) == pytest.approx(4.0, abs=0.3)


def test_integrators_agree_on_the_pi_run():
    # Richardson-style check on the attitude PI run: lie_euler error halves with dt,
    # rkmk4 at a coarse step already beats lie_euler at a fine one
    def phi_curve(method, dt):
        return simulate(attitude_pi(dt=dt, t_final=300.0, integrator=method, record_stride=int(round(1 / dt)))).phi

    ref = phi_curve(Integrator.RKMK4, 1e-2)
    e1 = np.max(np.abs(phi_curve(Integrator.LIE_EULER, 1e-2) - ref))
    e2 = np.max(np.abs(phi_curve(Integrator.LIE_EULER, 5e-3) - ref))
    assert e2 / e1 == pytest.approx(0.5, abs=0.05)
    e4 = np.max(np.abs(phi_curve(Integrator.RKMK4, 0.1) - ref))
    assert e4 < 1e-3 * e2


def test_recorded_states_stay_on_the_group():
    tr = simulate(attitude_pi())
    for m in tr.g:
        GroupElement(GroupId.SO3, m)
    se3 = simulate(SimConfig(GroupId.SE3, ControllerKind.PI, GAINS,
                             g0=GroupElement.from_rotation(Q0, np.ones(3) / 3),
                             bias=BiasSpec(np.tile(BIAS, 2))))
    for m in se3.g:
        GroupElement(GroupId.SE3, m)


def test_tracking_a_moving_reference():
    chi = np.array([0.05, -0.02, 0.03])
    r0 = axis_angle([0, 1, 0], 0.5)
    cfg = SimConfig(GroupId.SO3, ControllerKind.PI, GainSet(1.0, ki=0.5), g0=axis_angle([1, 0, 0], 2.0),
                    bias=BiasSpec(BIAS), reference=ReferenceSpec(r0, chi), t_final=60.0)
    tr = simulate(cfg)
    assert tr.phi[-1] < 1e-9
    r_final = r0 @ exp_map(60.0 * chi)
    assert phi(ErrorFunction(GroupId.SO3), inverse(r_final) @ tr.element(-1)) < 1e-9
    np.testing.assert_allclose(0.5 * tr.integral[-1], -BIAS, atol=1e-6)


def test_non_finite_state_aborts():
    cfg = SimConfig(GroupId.SO3, ControllerKind.PI, GAINS, bias=BiasSpec([1e308, 1e308, 0.0]), t_final=1.0)
    with pytest.raises(SimulationAborted) as exc:
        simulate(cfg)
    assert exc.value.t >= 0.0


def test_crossed_pi_on_se3_is_flagged():
    cfg = SimConfig(GroupId.SE3, ControllerKind.CROSSED_PI, GAINS, t_final=1.0)
    with pytest.warns(NoConvergenceGuarantee):
        tr = simulate(cfg)
    assert any("no convergence guarantee" in d for d in tr.diagnostics)


BIASED_RUNS = {
    "so3-pi": lambda: attitude_pi(),
    "so3-pid": lambda: SimConfig(GroupId.SO3, ControllerKind.PID, GAINS, g0=Q0_EL,
                                 bias=BiasSpec(BIAS, Frame.LEFT, BiasOrder.TORQUE)),
    "se3-pi": lambda: SimConfig(GroupId.SE3, ControllerKind.PI, GAINS,
                                g0=GroupElement.from_rotation(Q0, np.ones(3) / 3),
                                bias=BiasSpec(np.tile(BIAS, 2))),
}


@pytest.mark.parametrize("name", list(BIASED_RUNS))
def test_biased_runs_reject_the_bias(name):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        tr = simulate(BIASED_RUNS[name]())
    assert tr.max_step_rise <= 1e-9
    assert tr.grad_norm[-1] < 1e-6
    assert tr.residual[-1] < 1e-6


def test_backend_is_reported():
    from liepid import BACKEND

    assert BACKEND in ("numba", "numpy")

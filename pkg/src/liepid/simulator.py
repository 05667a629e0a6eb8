"""Time integration of biased first- and second-order plants on the group.

First order (velocity input)::

    channel velocity = command + bias (transported into the channel frame)

Second order (torque input)::

    channel velocity = xi,   d(xi)/dt = command + bias

The whole loop (rates, integrator step, per-step diagnostics) runs inside a
single kernel, so one run of 150k steps takes well under a second with
numba.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._jit import njit
from .analysis import LyapunovParams, _lyapunov_value, default_params
from .controllers import (
    K_CROSSED_PI,
    K_CROSSED_PID,
    ControllerKind,
    GainSet,
    NoConvergenceGuarantee,
    ReferenceSpec,
    _channel_gradient,
    _control_law,
)
from .error_functions import ErrorFunction, _grad_left, _phi
from .lie_core import (
    Frame,
    GroupElement,
    GroupId,
    _adjoint,
    _bracket,
    _exp,
    _inverse,
    _retract,
    identity,
)


class SimulationAborted(RuntimeError):
    def __init__(self, t: float, msg: str = "non-finite state"):
        super().__init__(f"{msg} at t={t!r}")
        self.t = t


class BiasOrder(enum.Enum):
    VELOCITY = "velocity"
    TORQUE = "torque"

    @property
    def plant_order(self) -> int:
        return 1 if self is BiasOrder.VELOCITY else 2


class Integrator(enum.Enum):
    LIE_EULER = "lie_euler"
    RKMK4 = "rkmk4"


M_LIE_EULER, M_RKMK4 = 0, 1


@dataclass(frozen=True, eq=False)
class BiasSpec:
    """Constant input disturbance, constant in its own ``frame``."""

    vector: np.ndarray
    frame: Frame = Frame.LEFT
    order: BiasOrder = BiasOrder.VELOCITY

    def __post_init__(self):
        v = np.array(self.vector, dtype=float).reshape(-1)
        if v.shape[0] not in (3, 6):
            raise ValueError(f"bias needs 3 or 6 coordinates, got {v.shape[0]}")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)
        object.__setattr__(self, "frame", Frame(self.frame))
        object.__setattr__(self, "order", BiasOrder(self.order))


def _vector(x, d: int, name: str) -> np.ndarray:
    if x is None:
        return np.zeros(d)
    v = np.array(x, dtype=float).reshape(-1)
    if v.shape[0] != d:
        raise ValueError(f"{name} needs {d} coordinates for this group, got {v.shape[0]}")
    return v


@dataclass(frozen=True, eq=False)
class SimConfig:
    group: GroupId
    controller: ControllerKind
    gains: GainSet
    g0: GroupElement | None = None
    bias: BiasSpec | None = None
    error_function: ErrorFunction | None = None
    xi0: np.ndarray | None = None
    integral0: np.ndarray | None = None
    dt: float = 0.01
    t_final: float = 1500.0
    integrator: Integrator = Integrator.LIE_EULER
    record_stride: int = 10
    channel: Frame = Frame.LEFT
    reference: ReferenceSpec | None = None
    lyapunov: LyapunovParams | None = None
    force_gains: bool = False

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        group = GroupId(self.group)
        kind = ControllerKind(self.controller)
        set_("group", group)
        set_("controller", kind)
        set_("integrator", Integrator(self.integrator))
        set_("channel", Frame(self.channel))
        d = group.dim
        if self.g0 is None:
            set_("g0", identity(group))
        elif self.g0.group is not group:
            raise ValueError(f"initial configuration is on {self.g0.group.name}, config group is {group.name}")
        if self.error_function is None:
            set_("error_function", ErrorFunction(group))
        elif self.error_function.group is not group:
            raise ValueError("error function group does not match config group")
        if self.bias is None:
            set_("bias", BiasSpec(np.zeros(d), Frame.LEFT,
                                  BiasOrder.VELOCITY if kind.order == 1 else BiasOrder.TORQUE))
        elif self.bias.vector.shape[0] != d:
            raise ValueError(f"bias needs {d} coordinates for {group.name}, got {self.bias.vector.shape[0]}")
        if self.bias.order.plant_order != kind.order:
            raise ValueError(f"{self.bias.order.value} bias does not enter an order-{kind.order} plant "
                             f"({kind.value} controller)")
        if self.reference is None:
            set_("reference", ReferenceSpec.fixed(group))
        elif self.reference.target.group is not group:
            raise ValueError("reference target group does not match config group")
        if kind.order == 2 and np.any(self.reference.velocity() != 0):
            raise ValueError("moving references are only supported for first-order plants")
        set_("xi0", _vector(self.xi0, d, "xi0"))
        if kind.order == 1 and np.any(self.xi0 != 0):
            raise ValueError("xi0 is a second-order state; leave it unset for first-order plants")
        set_("integral0", _vector(self.integral0, d, "integral0"))
        if kind.crossed and self.channel is not Frame.LEFT:
            raise ValueError("crossed controllers command body-frame (left) velocities only")
        if kind in (ControllerKind.PID, ControllerKind.CROSSED_PID):
            self.gains.check_pid(self.force_gains)
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.t_final >= self.dt:
            raise ValueError(f"t_final must be >= dt, got t_final={self.t_final!r}, dt={self.dt!r}")
        if not (isinstance(self.record_stride, (int, np.integer)) and self.record_stride >= 1):
            raise ValueError(f"record_stride must be a positive integer, got {self.record_stride!r}")
        if self.lyapunov is None:
            set_("lyapunov", default_params(self.gains, kind.order))
        elif kind.order == 2 and self.lyapunov.gamma is None:
            raise ValueError("second-order runs need gamma in the Lyapunov parameters")

    @property
    def order(self) -> int:
        return self.controller.order

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass(frozen=True, eq=False)
class Trajectory:
    config: SimConfig
    t: np.ndarray
    g: np.ndarray
    xi: np.ndarray | None
    integral: np.ndarray
    phi: np.ndarray
    V: np.ndarray
    grad_norm: np.ndarray
    xi_norm: np.ndarray
    residual: np.ndarray
    max_step_rise: float
    max_step_rise_time: float
    diagnostics: list = field(default_factory=list)

    @property
    def lyapunov(self) -> LyapunovParams:
        return self.config.lyapunov

    def __len__(self):
        return len(self.t)

    def element(self, k: int) -> GroupElement:
        return GroupElement(self.config.group, self.g[k])


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit
def _bias_in_channel(g, bias, bias_right, right_channel):
    if bias_right == right_channel:
        return bias.copy()
    if right_channel:
        return _adjoint(g) @ bias
    return _adjoint(_inverse(g)) @ bias


@njit
def _rates(kind, order, right_channel, bias_right, kp, kd, ki, weight, bias, chi, moving,
           g, r, xi, integral):
    crossed = kind == K_CROSSED_PI or kind == K_CROSSED_PID
    h = _inverse(r) @ g
    grad = _channel_gradient(g, _grad_left(h, weight), crossed, right_channel)
    command, integral_rate = _control_law(kind, kp, kd, ki, grad, xi, integral)
    b = _bias_in_channel(g, bias, bias_right, right_channel)
    if order == 1:
        vel = command + b
        if moving:
            if right_channel:
                vel = vel + _adjoint(r) @ chi
            else:
                vel = vel + _adjoint(_inverse(g) @ r) @ chi
        return vel, np.zeros_like(xi), integral_rate
    return xi.copy(), command + b, integral_rate


@njit
def _dexpinv(u, v, right_channel):
    # truncated Bernoulli series; left trivialisation flips the odd term
    uv = _bracket(u, v)
    if right_channel:
        return v - 0.5 * uv + _bracket(u, uv) / 12.0
    return v + 0.5 * uv + _bracket(u, uv) / 12.0


@njit
def _step(method, kind, order, right_channel, bias_right, kp, kd, ki, weight, bias, chi, moving,
          dt, g, r, xi, integral):
    k1g, k1x, k1i = _rates(kind, order, right_channel, bias_right, kp, kd, ki, weight, bias, chi, moving,
                           g, r, xi, integral)
    if method == M_LIE_EULER:
        return (_retract(g, dt * k1g, right_channel), xi + dt * k1x, integral + dt * k1i)
    half = 0.5 * dt
    r_half = r @ _exp(half * chi) if moving else r
    r_full = r @ _exp(dt * chi) if moving else r

    u2 = half * k1g
    k2g, k2x, k2i = _rates(kind, order, right_channel, bias_right, kp, kd, ki, weight, bias, chi, moving,
                           _retract(g, u2, right_channel), r_half, xi + half * k1x, integral + half * k1i)
    k2g = _dexpinv(u2, k2g, right_channel)
    u3 = half * k2g
    k3g, k3x, k3i = _rates(kind, order, right_channel, bias_right, kp, kd, ki, weight, bias, chi, moving,
                           _retract(g, u3, right_channel), r_half, xi + half * k2x, integral + half * k2i)
    k3g = _dexpinv(u3, k3g, right_channel)
    u4 = dt * k3g
    k4g, k4x, k4i = _rates(kind, order, right_channel, bias_right, kp, kd, ki, weight, bias, chi, moving,
                           _retract(g, u4, right_channel), r_full, xi + dt * k3x, integral + dt * k3i)
    k4g = _dexpinv(u4, k4g, right_channel)
    sixth = dt / 6.0
    u = sixth * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
    return (_retract(g, u, right_channel),
            xi + sixth * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
            integral + sixth * (k1i + 2.0 * k2i + 2.0 * k3i + k4i))


@njit
def _diagnostics(kind, order, right_channel, bias_right, ki, weight, alpha, beta, gamma, bias,
                 g, r, xi, integral):
    h = _inverse(r) @ g
    phi_val = _phi(h, weight)
    grad = _grad_left(h, weight)
    b = _bias_in_channel(g, bias, bias_right, right_channel)
    v = _lyapunov_value(order, kind == K_CROSSED_PID, alpha, beta, gamma, ki, phi_val, g, xi, integral, b)
    res = ki * integral + b
    return (phi_val, v, math.sqrt(float(grad @ grad)), math.sqrt(float(xi @ xi)),
            math.sqrt(float(res @ res)))


@njit
def _all_finite(a):
    for x in a.ravel():
        if not math.isfinite(x):
            return False
    return True


@njit
def _simulate(method, kind, order, right_channel, bias_right, kp, kd, ki, weight,
              alpha, beta, gamma, bias, chi, moving, dt, n_steps, stride,
              g0, r0, xi0, integral0):
    d = xi0.shape[0]
    m = g0.shape[0]
    n_rec = n_steps // stride + 1
    if n_steps % stride != 0:
        n_rec += 1
    ts = np.empty(n_rec)
    gs = np.empty((n_rec, m, m))
    xis = np.empty((n_rec, d))
    ints = np.empty((n_rec, d))
    diag = np.empty((n_rec, 5))

    g = g0.copy()
    r = r0.copy()
    xi = xi0.copy()
    integral = integral0.copy()
    r_step = _exp(dt * chi)

    rec = 0
    ts[0] = 0.0
    gs[0] = g
    xis[0] = xi
    ints[0] = integral
    phi_val, v, gn, xn, res = _diagnostics(kind, order, right_channel, bias_right, ki, weight,
                                           alpha, beta, gamma, bias, g, r, xi, integral)
    diag[0, 0] = phi_val
    diag[0, 1] = v
    diag[0, 2] = gn
    diag[0, 3] = xn
    diag[0, 4] = res
    v_prev = v
    max_rise = -np.inf
    max_rise_step = 0

    for k in range(1, n_steps + 1):
        g, xi, integral = _step(method, kind, order, right_channel, bias_right, kp, kd, ki, weight,
                                bias, chi, moving, dt, g, r, xi, integral)
        if moving:
            r = r @ r_step
        if not (_all_finite(g) and _all_finite(xi) and _all_finite(integral)):
            return ts[:rec + 1], gs[:rec + 1], xis[:rec + 1], ints[:rec + 1], diag[:rec + 1], k, max_rise, max_rise_step
        phi_val, v, gn, xn, res = _diagnostics(kind, order, right_channel, bias_right, ki, weight,
                                               alpha, beta, gamma, bias, g, r, xi, integral)
        rise = v - v_prev
        if rise > max_rise:
            max_rise = rise
            max_rise_step = k
        v_prev = v
        if k % stride == 0 or k == n_steps:
            rec += 1
            ts[rec] = k * dt
            gs[rec] = g
            xis[rec] = xi
            ints[rec] = integral
            diag[rec, 0] = phi_val
            diag[rec, 1] = v
            diag[rec, 2] = gn
            diag[rec, 3] = xn
            diag[rec, 4] = res
    return ts, gs, xis, ints, diag, -1, max_rise, max_rise_step


# ---------------------------------------------------------------------------
# public surface
# ---------------------------------------------------------------------------


def _kernel_args(config: SimConfig):
    lp = config.lyapunov
    ref = config.reference
    chi = ref.velocity()
    return dict(
        kind=config.controller.code,
        order=config.order,
        right_channel=config.channel is Frame.RIGHT,
        bias_right=config.bias.frame is Frame.RIGHT,
        kp=float(config.gains.kp),
        kd=float(config.gains.kd),
        ki=float(config.gains.ki),
        weight=float(config.error_function.translation_weight),
        bias=np.ascontiguousarray(config.bias.vector, dtype=float),
        chi=np.ascontiguousarray(chi),
        moving=bool(np.any(chi != 0)),
        alpha=float(lp.alpha),
        beta=float(lp.beta),
        gamma=float(lp.gamma or 0.0),
    )


def plant_velocity(config: SimConfig, command, g: GroupElement) -> np.ndarray:
    """Total first-order velocity in the command channel: command plus transported bias."""
    if config.order != 1:
        raise ValueError("plant_velocity is defined for first-order plants")
    a = _kernel_args(config)
    command = _vector(command, config.group.dim, "command")
    return command + _bias_in_channel(np.ascontiguousarray(g.matrix), a["bias"], a["bias_right"],
                                      a["right_channel"])


def _run(config: SimConfig) -> Trajectory:
    a = _kernel_args(config)
    method = M_RKMK4 if config.integrator is Integrator.RKMK4 else M_LIE_EULER
    diagnostics = []
    if config.controller.crossed and config.controller.order == 1 and config.group is GroupId.SE3:
        msg = "crossed PI on SE3: adjoint is not unitary, no convergence guarantee"
        warnings.warn(msg, NoConvergenceGuarantee, stacklevel=3)
        diagnostics.append(msg)
    with np.errstate(all="ignore"):
        ts, gs, xis, ints, diag, fail, max_rise, rise_step = _simulate(
            method, a["kind"], a["order"], a["right_channel"], a["bias_right"],
            a["kp"], a["kd"], a["ki"], a["weight"], a["alpha"], a["beta"], a["gamma"],
            a["bias"], a["chi"], a["moving"], float(config.dt), config.n_steps, int(config.record_stride),
            np.ascontiguousarray(config.g0.matrix), np.ascontiguousarray(config.reference.target.matrix),
            config.xi0.copy(), config.integral0.copy())
    if fail >= 0:
        raise SimulationAborted(fail * config.dt)
    if diag[0, 2] < 1e-12 and diag[0, 0] > 1e-12:
        diagnostics.append("initial state is a critical point of phi")
    return Trajectory(
        config=config, t=ts, g=gs, xi=xis if config.order == 2 else None, integral=ints,
        phi=diag[:, 0], V=diag[:, 1], grad_norm=diag[:, 2], xi_norm=diag[:, 3], residual=diag[:, 4],
        max_step_rise=float(max_rise), max_step_rise_time=rise_step * config.dt,
        diagnostics=diagnostics,
    )


def simulate_first_order(config: SimConfig) -> Trajectory:
    if config.order != 1:
        raise ValueError(f"{config.controller.value} drives a second-order plant")
    return _run(config)


def simulate_second_order(config: SimConfig) -> Trajectory:
    if config.order != 2:
        raise ValueError(f"{config.controller.value} drives a first-order plant")
    return _run(config)


def simulate(config: SimConfig) -> Trajectory:
    return _run(config)


@dataclass(frozen=True, eq=False)
class SimState:
    g: GroupElement
    xi: np.ndarray
    integral: np.ndarray


def integrate_step(method: Integrator | str, state: SimState, rates, dt: float,
                   frame: Frame = Frame.LEFT) -> SimState:
    """One step of ``method`` for an arbitrary rate function.

    ``rates(state)`` returns ``(velocity, xi_rate, integral_rate)``, the
    velocity being in ``frame``. This is the plain-Python twin of the loop
    kernel and accepts any callable.
    """
    method = Integrator(method)
    right = frame is Frame.RIGHT
    g0 = np.ascontiguousarray(state.g.matrix)

    def at(u, dxi, dint):
        return SimState(GroupElement(state.g.group, _retract(g0, u, right)),
                        state.xi + dxi, state.integral + dint)

    k1g, k1x, k1i = (np.asarray(v, dtype=float) for v in rates(state))
    if method is Integrator.LIE_EULER:
        return at(dt * k1g, dt * k1x, dt * k1i)
    h = 0.5 * dt
    u2 = h * k1g
    k2g, k2x, k2i = (np.asarray(v, dtype=float) for v in rates(at(u2, h * k1x, h * k1i)))
    k2g = _dexpinv(u2, k2g, right)
    u3 = h * k2g
    k3g, k3x, k3i = (np.asarray(v, dtype=float) for v in rates(at(u3, h * k2x, h * k2i)))
    k3g = _dexpinv(u3, k3g, right)
    u4 = dt * k3g
    k4g, k4x, k4i = (np.asarray(v, dtype=float) for v in rates(at(u4, dt * k3x, dt * k3i)))
    k4g = _dexpinv(u4, k4g, right)
    s = dt / 6.0
    return at(s * (k1g + 2 * k2g + 2 * k3g + k4g), s * (k1x + 2 * k2x + 2 * k3x + k4x),
              s * (k1i + 2 * k2i + 2 * k3i + k4i))

"""P, PD, PI, PID and crossed PI/PID control laws on SO(3) and SE(3).

Every law returns a pair ``(command, integral_rate)``. The integral state
integrates the controller's own P (or PD) effort, so for the plain PI and
PID laws ``integral_rate`` is exactly the P/PD part of the command. The
crossed laws are meant for a body-frame command channel facing a bias that
is constant in the inertial frame; they add a bracket term that carries the
integral along with the frame.

Nothing here sees the bias. Integration of the integral state belongs to
the caller (see :mod:`liepid.simulator`).
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from ._jit import njit
from .error_functions import ErrorFunction, GradientForm, gradient
from .lie_core import Frame, GroupElement, GroupId, _adjoint, _bracket, _inverse, identity, inverse, compose


class GainError(ValueError):
    """Gains outside the range where convergence is guaranteed."""


class NoConvergenceGuarantee(UserWarning):
    """Crossed PI on a group whose adjoint is not unitary (SE(3))."""


class ControllerKind(enum.Enum):
    P = "p"
    PD = "pd"
    PI = "pi"
    PID = "pid"
    CROSSED_PI = "crossed_pi"
    CROSSED_PID = "crossed_pid"

    @property
    def code(self) -> int:
        return _KIND_CODES[self]

    @property
    def order(self) -> int:
        """Plant order the law is designed for (1 = velocity, 2 = torque)."""
        return 1 if self in (ControllerKind.P, ControllerKind.PI, ControllerKind.CROSSED_PI) else 2

    @property
    def crossed(self) -> bool:
        return self in (ControllerKind.CROSSED_PI, ControllerKind.CROSSED_PID)

    @property
    def has_integral(self) -> bool:
        return self not in (ControllerKind.P, ControllerKind.PD)


K_P, K_PD, K_PI, K_PID, K_CROSSED_PI, K_CROSSED_PID = range(6)
_KIND_CODES = {
    ControllerKind.P: K_P,
    ControllerKind.PD: K_PD,
    ControllerKind.PI: K_PI,
    ControllerKind.PID: K_PID,
    ControllerKind.CROSSED_PI: K_CROSSED_PI,
    ControllerKind.CROSSED_PID: K_CROSSED_PID,
}


@dataclass(frozen=True)
class GainSet:
    kp: float
    kd: float = 0.0
    ki: float = 0.0

    def __post_init__(self):
        if not self.kp > 0:
            raise GainError(f"kp must be positive, got {self.kp!r}")
        if not self.kd >= 0:
            raise GainError(f"kd must be nonnegative, got {self.kd!r}")
        if not self.ki >= 0:
            raise GainError(f"ki must be nonnegative, got {self.ki!r}")

    def check_pid(self, force: bool = False) -> None:
        """Require ``ki < kd``, the sufficient condition for PID convergence.

        With ``force`` the violation is only warned about.
        """
        if self.ki < self.kd:
            return
        msg = f"k_i >= k_d ({self.ki!r} >= {self.kd!r}) violates the PID stability condition k_i < k_d"
        if force:
            warnings.warn(msg, stacklevel=2)
            return
        raise GainError(msg)


@dataclass(frozen=True)
class ReferenceSpec:
    """Target ``r`` and its body-frame velocity ``chi`` (dr/dt = r chi^)."""

    target: GroupElement
    target_velocity: np.ndarray | None = None

    @classmethod
    def fixed(cls, group: GroupId) -> "ReferenceSpec":
        return cls(identity(group))

    def velocity(self) -> np.ndarray:
        if self.target_velocity is None:
            return np.zeros(self.target.group.dim)
        v = np.asarray(self.target_velocity, dtype=float).reshape(-1)
        if v.shape[0] != self.target.group.dim:
            raise ValueError(f"target velocity needs {self.target.group.dim} coordinates")
        return v


@njit
def _control_law(kind, kp, kd, ki, grad, xi, integral):
    p = -kp * grad
    zero = np.zeros_like(grad)
    if kind == K_P:
        return p, zero
    if kind == K_PD:
        return p - kd * xi, zero
    if kind == K_PI:
        return p + ki * integral, p
    if kind == K_PID:
        u = p - kd * xi
        return u + ki * integral, u
    if kind == K_CROSSED_PI:
        # best guess of the body velocity: P part only, [ki*I, I] = 0 anyway
        return p + ki * integral, p - _bracket(p, integral)
    u = p - kd * xi
    return u + ki * integral, u - _bracket(xi, integral)


@njit
def _channel_gradient(g, grad_l, crossed, right_channel):
    """Gradient in the form the command channel needs, from the left one."""
    if not crossed and not right_channel:
        return grad_l
    ad_inv = _adjoint(_inverse(g))
    grad_r = ad_inv.T @ grad_l
    if right_channel:
        return grad_r
    return ad_inv @ grad_r


def _vec(x, group: GroupId) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape[0] != group.dim:
        raise ValueError(f"{group.name} needs {group.dim} coordinates, got {v.shape[0]}")
    return v


def _zeros_like_grad(f: ErrorFunction) -> np.ndarray:
    return np.zeros(f.group.dim)


def p_command(gains: GainSet, f: ErrorFunction, g: GroupElement,
              form: GradientForm | str = GradientForm.LEFT) -> np.ndarray:
    return -gains.kp * gradient(f, g, form)


def pd_command(gains: GainSet, f: ErrorFunction, g: GroupElement, xi) -> np.ndarray:
    xi = _vec(xi, f.group)
    return -gains.kp * gradient(f, g) - gains.kd * xi


def pi_step(gains: GainSet, f: ErrorFunction, g: GroupElement, integral):
    integral = _vec(integral, f.group)
    return _control_law(K_PI, gains.kp, 0.0, gains.ki, gradient(f, g), _zeros_like_grad(f), integral)


def pid_step(gains: GainSet, f: ErrorFunction, g: GroupElement, xi, integral, force: bool = False):
    gains.check_pid(force)
    xi = _vec(xi, f.group)
    integral = _vec(integral, f.group)
    return _control_law(K_PID, gains.kp, gains.kd, gains.ki, gradient(f, g), xi, integral)


def crossed_pi_step(gains: GainSet, f: ErrorFunction, g: GroupElement, integral):
    """Body-frame PI with the frame-transport correction on the integral.

    Convergence is only guaranteed on SO(3); SE(3) use warns.
    """
    if f.group is GroupId.SE3:
        warnings.warn("crossed PI on SE3: adjoint is not unitary, no convergence guarantee",
                      NoConvergenceGuarantee, stacklevel=2)
    integral = _vec(integral, f.group)
    grad = gradient(f, g, GradientForm.LSTAR)
    return _control_law(K_CROSSED_PI, gains.kp, 0.0, gains.ki, grad, _zeros_like_grad(f), integral)


def crossed_pid_step(gains: GainSet, f: ErrorFunction, g: GroupElement, xi, integral, force: bool = False):
    gains.check_pid(force)
    xi = _vec(xi, f.group)
    integral = _vec(integral, f.group)
    grad = gradient(f, g, GradientForm.LSTAR)
    return _control_law(K_CROSSED_PID, gains.kp, gains.kd, gains.ki, grad, xi, integral)


def crossed_pid_integral_rhs(gains: GainSet, f: ErrorFunction, g: GroupElement, xi, integral,
                             force: bool = False) -> np.ndarray:
    return crossed_pid_step(gains, f, g, xi, integral, force)[1]


def control_step(kind: ControllerKind, gains: GainSet, f: ErrorFunction, g: GroupElement,
                 xi=None, integral=None, frame: Frame = Frame.LEFT):
    """Dispatch to any law; ``frame`` is the command channel (crossed laws are left only)."""
    kind = ControllerKind(kind)
    if kind.crossed and frame is not Frame.LEFT:
        raise ValueError("crossed controllers command body-frame (left) velocities only")
    if kind in (ControllerKind.PID, ControllerKind.CROSSED_PID):
        gains.check_pid()
    xi = _zeros_like_grad(f) if xi is None else _vec(xi, f.group)
    integral = _zeros_like_grad(f) if integral is None else _vec(integral, f.group)
    m = np.ascontiguousarray(g.matrix)
    grad = _channel_gradient(m, gradient(f, g), kind.crossed, frame is Frame.RIGHT)
    return _control_law(kind.code, gains.kp, gains.kd, gains.ki, grad, xi, integral)


def feedforward(ref: ReferenceSpec, g: GroupElement) -> np.ndarray:
    """Body-frame velocity ``Ad_{g^-1 r} chi`` that cancels the target's motion."""
    return _adjoint(np.ascontiguousarray(compose(inverse(g), ref.target).matrix)) @ ref.velocity()

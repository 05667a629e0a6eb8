"""Lyapunov functions, gain feasibility, and convergence reports.

The Lyapunov functions take the true bias as an argument. That is fine for
analysis (the controllers never see it) but it means ``V`` cannot be
computed from controller data alone.

First order::

    V = alpha*phi + beta/2 * |k_i*I + b|^2

Second order::

    V = alpha*phi + beta/2 * |xi|^2 + gamma/2 * |k_i*(I - xi) + b|^2

with ``b`` the bias expressed in the controller's frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._jit import njit
from .controllers import GainSet
from .error_functions import CRITICAL_VALUE, ErrorFunction, phi
from .lie_core import GroupElement, _adjoint

RESIDUAL_TOL = 1e-3
PHI_TOL = 1e-6
XI_TOL = 1e-6
NEAR_CRITICAL_PHI = 1e-3
NEAR_CRITICAL_GRAD = 1e-6


@dataclass(frozen=True)
class LyapunovParams:
    alpha: float
    beta: float
    gamma: float | None = None

    def __post_init__(self):
        for name in ("alpha", "beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


@dataclass(frozen=True)
class BetaInterval:
    low: float
    high: float

    @property
    def empty(self) -> bool:
        return not self.low < self.high

    def __contains__(self, beta: float) -> bool:
        return self.low < beta < self.high

    def geometric_mid(self) -> float:
        return math.sqrt(self.low * self.high)


EMPTY = BetaInterval(math.nan, math.nan)


@njit
def _sq(v):
    return float(v @ v)


@njit
def _lyapunov_value(order, right_transport, alpha, beta, gamma, ki, phi_val, g, xi, integral, bias_c):
    """``bias_c`` is the bias in the controller frame.

    With ``right_transport`` the second-order function is evaluated on the
    inertial-frame copies of every vector (crossed PID).
    """
    if order == 1:
        return alpha * phi_val + 0.5 * beta * _sq(ki * integral + bias_c)
    e = ki * (integral - xi) + bias_c
    if right_transport:
        ad = _adjoint(g)
        xi = ad @ xi
        e = ad @ e
    return alpha * phi_val + 0.5 * beta * _sq(xi) + 0.5 * gamma * _sq(e)


def _vec(x, d: int) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape[0] != d:
        raise ValueError(f"expected {d} coordinates, got {v.shape[0]}")
    return v


def lyapunov_v1(params: LyapunovParams, f: ErrorFunction, g: GroupElement, integral, bias, k_i: float) -> float:
    """First-order V; for the crossed law pass ``Ad_{g^-1} bias_right`` as ``bias``."""
    d = f.group.dim
    integral, bias = _vec(integral, d), _vec(bias, d)
    return params.alpha * phi(f, g) + 0.5 * params.beta * float(np.sum((k_i * integral + bias) ** 2))


def lyapunov_v2(params: LyapunovParams, f: ErrorFunction, g: GroupElement, xi, integral, bias, k_i: float) -> float:
    if params.gamma is None:
        raise ValueError("second-order Lyapunov function needs gamma")
    d = f.group.dim
    xi, integral, bias = _vec(xi, d), _vec(integral, d), _vec(bias, d)
    e = k_i * (integral - xi) + bias
    return (params.alpha * phi(f, g) + 0.5 * params.beta * float(xi @ xi)
            + 0.5 * params.gamma * float(e @ e))


def feasible_beta_interval(k_d: float, k_i: float, gamma: float = 1.0) -> BetaInterval:
    """Open beta-interval on which the second-order V is non-increasing.

    Empty unless ``k_i < k_d``.
    """
    if not (k_d > 0 and k_i > 0 and gamma > 0):
        raise ValueError("k_d, k_i and gamma must be positive")
    delta = k_d * k_d - k_i * k_d
    if delta <= 0:
        return EMPTY
    root = math.sqrt(delta)
    scale = 2.0 * gamma * k_i
    mid = k_d - 0.5 * k_i
    return BetaInterval(scale * (mid - root), scale * (mid + root))


def beta_polynomial(beta: float, k_d: float, k_i: float, gamma: float) -> float:
    """Coefficient of -|xi|^2 in dV/dt; positive exactly on the feasible interval."""
    return -beta * beta / (4.0 * gamma * k_i) + (k_d - 0.5 * k_i) * beta - 0.25 * gamma * k_i ** 3


def default_params(gains: GainSet, order: int) -> LyapunovParams:
    """Parameters making V non-increasing for the given gains.

    Order 1 uses beta = 1, alpha = kp*ki. Order 2 takes the geometric middle
    of the feasible beta-interval with gamma = 1 and alpha = beta*kp. Laws
    without integral action fall back to the classical ``kp*phi`` energy.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order!r}")
    if gains.ki == 0.0:
        return LyapunovParams(gains.kp, 1.0, None if order == 1 else 1.0)
    if order == 1:
        return LyapunovParams(gains.kp * gains.ki, 1.0)
    if gains.kd <= 0:
        raise ValueError("second-order PID needs kd > 0 (k_i < k_d)")
    interval = feasible_beta_interval(gains.kd, gains.ki, 1.0)
    if interval.empty:
        raise ValueError(f"empty beta-interval: k_i < k_d required, got k_i={gains.ki!r}, k_d={gains.kd!r}")
    beta = interval.geometric_mid()
    return LyapunovParams(beta * gains.kp, beta, 1.0)


@dataclass(frozen=True)
class BasinCertificate:
    v0_bound: float
    threshold: float

    @property
    def margin(self) -> float:
        return self.threshold - self.v0_bound

    @property
    def holds(self) -> bool:
        return self.margin > 0


def basin_certificate(params: LyapunovParams, order: int, phi0: float, bias_bound: float,
                      phi_c: float = CRITICAL_VALUE) -> BasinCertificate:
    """Check that no trajectory from ``phi0`` can reach a non-target critical point.

    Starts from a zero integral (and rest, for order 2) with ``|bias|^2 < bias_bound``,
    so ``V0 < alpha*phi0 + c/2*bias_bound`` with ``c = beta`` (order 1) or
    ``gamma`` (order 2). Every critical point other than the target has
    ``V >= alpha*phi_c``; V never increases, so the bound below that certifies.
    """
    c = params.beta if order == 1 else params.gamma
    if c is None:
        raise ValueError("second-order certificate needs gamma")
    return BasinCertificate(params.alpha * phi0 + 0.5 * c * bias_bound, params.alpha * phi_c)


@dataclass(frozen=True)
class ConvergenceReport:
    max_step_rise: float
    max_step_rise_time: float
    final_phi: float
    final_grad_norm: float
    final_residual: float
    final_xi_norm: float | None
    time_to_residual: float | None
    neared_critical_set: bool
    final_position: list | None
    lyapunov: dict
    diagnostics: list = field(default_factory=list)
    uses_true_bias: bool = True

    @property
    def converged(self) -> bool:
        ok = self.final_phi < PHI_TOL and self.final_residual < RESIDUAL_TOL
        if self.final_xi_norm is not None:
            ok = ok and self.final_xi_norm < XI_TOL
        return ok

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["converged"] = self.converged
        return out


def convergence_report(trajectory) -> ConvergenceReport:
    """Summarise a simulated trajectory (see :class:`liepid.simulator.Trajectory`)."""
    t = trajectory.t
    if len(t) == 0:
        raise ValueError("empty trajectory")
    res = trajectory.residual
    above = np.nonzero(res >= RESIDUAL_TOL)[0]
    if len(above) == 0:
        time_to_residual = float(t[0])
    elif above[-1] == len(t) - 1:
        time_to_residual = None
    else:
        time_to_residual = float(t[above[-1] + 1])
    late = t > 0
    near = (np.abs(trajectory.phi - CRITICAL_VALUE) < NEAR_CRITICAL_PHI) & (trajectory.grad_norm < NEAR_CRITICAL_GRAD)
    xi_norm = None if trajectory.xi is None else float(trajectory.xi_norm[-1])
    position = None
    if trajectory.g.shape[1] == 4:
        position = trajectory.g[-1, :3, 3].tolist()
    return ConvergenceReport(
        max_step_rise=float(trajectory.max_step_rise),
        max_step_rise_time=float(trajectory.max_step_rise_time),
        final_phi=float(trajectory.phi[-1]),
        final_grad_norm=float(trajectory.grad_norm[-1]),
        final_residual=float(res[-1]),
        final_xi_norm=xi_norm,
        time_to_residual=time_to_residual,
        neared_critical_set=bool(np.any(near & late)),
        final_position=position,
        lyapunov=trajectory.lyapunov.as_dict(),
        diagnostics=list(trajectory.diagnostics),
    )

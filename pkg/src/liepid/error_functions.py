"""Configuration error functions and their gradients.

``phi(Q) = 1/2 tr(I - Q)`` on SO(3), plus ``w/2 |p|^2`` on SE(3). Gradients
come back in algebra coordinates in one of three forms:

* ``left``  -- w.r.t. body-frame velocity, ``g -> g exp(t xi)``
* ``right`` -- w.r.t. inertial-frame velocity, ``Ad_{g^-1}^T`` applied to left
* ``lstar`` -- ``Ad_{g^-1} Ad_{g^-1}^T`` applied to left; equals ``left`` on SO(3)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ._jit import njit
from .lie_core import GroupElement, GroupId, _adjoint, _inverse

CRITICAL_VALUE = 2.0


class GradientForm(enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    LSTAR = "lstar"


@dataclass(frozen=True)
class ErrorFunction:
    group: GroupId
    translation_weight: float = 1.0

    def __post_init__(self):
        if not self.translation_weight > 0:
            raise ValueError(f"translation_weight must be positive, got {self.translation_weight!r}")


@njit
def _phi(g, weight):
    val = 0.5 * (3.0 - (g[0, 0] + g[1, 1] + g[2, 2]))
    if g.shape[0] == 4:
        p = g[:3, 3]
        val += 0.5 * weight * (p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
    return val


@njit
def _grad_left(g, weight):
    if g.shape[0] == 3:
        out = np.empty(3)
    else:
        out = np.empty(6)
        for j in range(3):
            out[3 + j] = weight * (g[0, j] * g[0, 3] + g[1, j] * g[1, 3] + g[2, j] * g[2, 3])
    out[0] = 0.5 * (g[2, 1] - g[1, 2])
    out[1] = 0.5 * (g[0, 2] - g[2, 0])
    out[2] = 0.5 * (g[1, 0] - g[0, 1])
    return out


@njit
def _to_right(g, grad_l):
    return _adjoint(_inverse(g)).T @ grad_l


@njit
def _to_lstar(g, grad_l):
    ad_inv = _adjoint(_inverse(g))
    return ad_inv @ (ad_inv.T @ grad_l)


def _check(f: ErrorFunction, g: GroupElement) -> np.ndarray:
    if g.group is not f.group:
        raise ValueError(f"error function on {f.group.name} evaluated at a {g.group.name} element")
    return np.ascontiguousarray(g.matrix)


def phi(f: ErrorFunction, g: GroupElement) -> float:
    return float(_phi(_check(f, g), f.translation_weight))


def gradient(f: ErrorFunction, g: GroupElement, form: GradientForm | str = GradientForm.LEFT) -> np.ndarray:
    m = _check(f, g)
    form = GradientForm(form)
    grad = _grad_left(m, f.translation_weight)
    if form is GradientForm.RIGHT:
        return _to_right(m, grad)
    if form is GradientForm.LSTAR:
        return _to_lstar(m, grad)
    return grad


def critical_value(f: ErrorFunction) -> float:
    """Smallest positive value of phi at a critical point (180 degree turns, p = 0)."""
    return CRITICAL_VALUE

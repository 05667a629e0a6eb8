"""Matrix-group arithmetic on SO(3) and SE(3).

Algebra coordinates are plain float arrays: ``w`` (3,) for so(3) and the
stacked ``(w, v)`` (6,) for se(3). Group elements are wrapped in
:class:`GroupElement`, which checks membership once at construction.

The ``_``-prefixed functions are the raw-array kernels used inside the
simulation loop; they carry no validation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._jit import njit

SMALL_ANGLE = 1e-8
CUT_LOCUS_MARGIN = 1e-6
GROUP_TOL = 1e-12
ALGEBRA_TOL = 1e-9


class GroupId(enum.Enum):
    SO3 = "so3"
    SE3 = "se3"

    @property
    def dim(self) -> int:
        return 3 if self is GroupId.SO3 else 6

    @property
    def matrix_size(self) -> int:
        return 3 if self is GroupId.SO3 else 4

    @classmethod
    def from_dim(cls, d: int) -> "GroupId":
        if d == 3:
            return cls.SO3
        if d == 6:
            return cls.SE3
        raise ValueError(f"no group with algebra dimension {d}")


class Frame(enum.Enum):
    """Left = body frame (g^-1 dg/dt), Right = inertial frame (dg/dt g^-1)."""

    LEFT = "left"
    RIGHT = "right"


class GroupError(ValueError):
    """A matrix fails the group or algebra membership checks."""


class CutLocusError(GroupError):
    """Logarithm requested at (or too close to) a rotation by pi."""


# ---------------------------------------------------------------------------
# raw-array kernels
# ---------------------------------------------------------------------------


@njit
def _hat3(w):
    m = np.zeros((3, 3))
    m[0, 1] = -w[2]
    m[0, 2] = w[1]
    m[1, 0] = w[2]
    m[1, 2] = -w[0]
    m[2, 0] = -w[1]
    m[2, 1] = w[0]
    return m


@njit
def _hat(x):
    if x.shape[0] == 3:
        return _hat3(x)
    m = np.zeros((4, 4))
    m[:3, :3] = _hat3(x[:3])
    m[:3, 3] = x[3:]
    return m


@njit
def _vee(m):
    if m.shape[0] == 3:
        out = np.empty(3)
    else:
        out = np.empty(6)
        out[3:] = m[:3, 3]
    out[0] = m[2, 1]
    out[1] = m[0, 2]
    out[2] = m[1, 0]
    return out


@njit
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit
def _rodrigues_coeffs(theta):
    # sin(t)/t, (1-cos t)/t^2, (t-sin t)/t^3
    if not math.isfinite(theta):
        # plain math.sin raises here; NaN lets the simulator abort cleanly
        return math.nan, math.nan, math.nan
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    s = math.sin(theta)
    h = math.sin(0.5 * theta) / theta
    t2 = theta * theta
    # half-angle form: 1 - cos(t) rounds to 0 for t near 1e-8
    return s / theta, 2.0 * h * h, (theta - s) / (t2 * theta)


@njit
def _expm1(x):
    """``exp(x) - I``, kept separate so small steps do not round against the identity."""
    w = x[:3]
    theta = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    a, b, c = _rodrigues_coeffs(theta)
    k = _hat3(w)
    k2 = k @ k
    if x.shape[0] == 3:
        return a * k + b * k2
    out = np.zeros((4, 4))
    out[:3, :3] = a * k + b * k2
    v_mat = np.eye(3) + b * k + c * k2
    out[:3, 3] = v_mat @ np.ascontiguousarray(x[3:])
    return out


@njit
def _exp(x):
    d = _expm1(x)
    return np.eye(d.shape[0]) + d


@njit
def _inverse(g):
    if g.shape[0] == 3:
        return g.T.copy()
    out = np.eye(4)
    rt = g[:3, :3].T.copy()
    out[:3, :3] = rt
    out[:3, 3] = -(rt @ np.ascontiguousarray(g[:3, 3]))
    return out


@njit
def _adjoint(g):
    if g.shape[0] == 3:
        return g.copy()
    r = g[:3, :3].copy()
    out = np.zeros((6, 6))
    out[:3, :3] = r
    out[3:, 3:] = r
    out[3:, :3] = _hat3(g[:3, 3]) @ r
    return out


@njit
def _bracket(a, b):
    if a.shape[0] == 3:
        return _cross(a, b)
    out = np.empty(6)
    out[:3] = _cross(a[:3], b[:3])
    out[3:] = _cross(a[:3], b[3:]) - _cross(b[:3], a[3:])
    return out


@njit
def _retract(g, step, right):
    """``g exp(step)`` for a left-invariant increment, ``exp(step) g`` for right."""
    if right:
        return g + _expm1(step) @ g
    return g + g @ _expm1(step)


# ---------------------------------------------------------------------------
# typed surface
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GroupElement:
    """A rotation (3x3) or rigid motion (4x4 homogeneous) matrix."""

    group: GroupId
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        n = self.group.matrix_size
        if m.shape != (n, n):
            raise GroupError(f"{self.group.name} expects a {n}x{n} matrix, got {m.shape}")
        _check_rotation(m[:3, :3])
        if self.group is GroupId.SE3 and not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise GroupError(f"SE3 bottom row must be exactly (0, 0, 0, 1), got {m[3]}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        if self.group is GroupId.SO3:
            return np.zeros(3)
        return self.matrix[:3, 3]

    @classmethod
    def from_rotation(cls, rotation, translation=None) -> "GroupElement":
        """SO3 element from ``rotation``, or SE3 when ``translation`` is given."""
        if translation is None:
            return cls(GroupId.SO3, rotation)
        m = np.eye(4)
        m[:3, :3] = rotation
        m[:3, 3] = translation
        return cls(GroupId.SE3, m)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return compose(self, other)

    def __repr__(self):
        return f"GroupElement({self.group.name}, {self.matrix.tolist()})"


def _check_rotation(r: np.ndarray) -> None:
    err = np.linalg.norm(r.T @ r - np.eye(3))
    if err > GROUP_TOL:
        raise GroupError(f"rotation block not orthonormal: |R^T R - I|_F = {err:.3e}")
    det = np.linalg.det(r)
    if abs(det - 1.0) > GROUP_TOL:
        raise GroupError(f"rotation block has det {det!r}, expected 1")


def _coords(x, group: GroupId | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape[0] not in (3, 6):
        raise ValueError(f"algebra vector must have 3 or 6 coordinates, got {v.shape[0]}")
    if group is not None and v.shape[0] != group.dim:
        raise ValueError(f"{group.name} algebra vector needs {group.dim} coordinates, got {v.shape[0]}")
    return v


def _same_group(*elements: GroupElement) -> GroupId:
    groups = {e.group for e in elements}
    if len(groups) != 1:
        raise GroupError(f"mixed groups: {sorted(g.name for g in groups)}")
    return groups.pop()


def identity(group: GroupId) -> GroupElement:
    return GroupElement(group, np.eye(group.matrix_size))


def hat(x) -> np.ndarray:
    """Algebra coordinates to algebra matrix."""
    return _hat(_coords(x))


def vee(m) -> np.ndarray:
    """Inverse of :func:`hat`; rejects matrices outside so(3)/se(3)."""
    m = np.asarray(m, dtype=float)
    if m.shape not in ((3, 3), (4, 4)):
        raise GroupError(f"vee expects a 3x3 or 4x4 matrix, got {m.shape}")
    block = m[:3, :3]
    asym = np.linalg.norm(block + block.T)
    if asym > ALGEBRA_TOL:
        raise GroupError(f"not in the algebra: |S + S^T|_F = {asym:.3e}")
    if m.shape == (4, 4) and np.linalg.norm(m[3]) > ALGEBRA_TOL:
        raise GroupError(f"not in se(3): bottom row norm {np.linalg.norm(m[3]):.3e}")
    return _vee(np.ascontiguousarray(m))


def exp_map(x) -> GroupElement:
    v = _coords(x)
    return GroupElement(GroupId.from_dim(v.shape[0]), _exp(v))


def _log_so3(r: np.ndarray) -> np.ndarray:
    # atan2 keeps full precision near 0, where arccos of the trace does not
    axial = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    s = np.linalg.norm(axial)
    c = 0.5 * (np.trace(r) - 1.0)
    theta = math.atan2(s, c)
    if theta > math.pi - CUT_LOCUS_MARGIN:
        raise CutLocusError(f"rotation angle {theta!r} is within {CUT_LOCUS_MARGIN} of pi (cut locus)")
    if s < SMALL_ANGLE:
        return axial * (1.0 + theta * theta / 6.0)
    return axial * (theta / s)


def log_map(g: GroupElement) -> np.ndarray:
    """Algebra coordinates ``x`` with ``exp_map(x) == g`` and rotation angle < pi."""
    w = _log_so3(g.rotation)
    if g.group is GroupId.SO3:
        return w
    theta = float(np.linalg.norm(w))
    k = _hat3(w)
    if theta < SMALL_ANGLE:
        coef = 1.0 / 12.0 + theta * theta / 720.0
    else:
        a, b, _ = _rodrigues_coeffs(theta)
        coef = (1.0 - a / (2.0 * b)) / (theta * theta)
    v_inv = np.eye(3) - 0.5 * k + coef * (k @ k)
    return np.concatenate([w, v_inv @ g.translation])


def compose(g: GroupElement, h: GroupElement) -> GroupElement:
    group = _same_group(g, h)
    return GroupElement(group, g.matrix @ h.matrix)


def inverse(g: GroupElement) -> GroupElement:
    """Closed form: transpose for SO3, (R^T, -R^T p) for SE3."""
    return GroupElement(g.group, _inverse(np.ascontiguousarray(g.matrix)))


def adjoint(g: GroupElement) -> np.ndarray:
    """Matrix of Ad_g on algebra coordinates, so that xi_right = adjoint(g) @ xi_left."""
    return _adjoint(np.ascontiguousarray(g.matrix))


def coadjoint_inverse(g: GroupElement) -> np.ndarray:
    """Ad*_{g^-1} under the Euclidean identification: the transpose of Ad_{g^-1}."""
    return adjoint(inverse(g)).T


def bracket(a, b) -> np.ndarray:
    a = _coords(a)
    b = _coords(b, GroupId.from_dim(a.shape[0]))
    return _bracket(a, b)


def retract(g: GroupElement, xi, frame: Frame, dt: float) -> GroupElement:
    """Advance ``g`` by constant velocity ``xi`` (in ``frame``) over ``dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    step = dt * _coords(xi, g.group)
    return GroupElement(g.group, _retract(np.ascontiguousarray(g.matrix), step, frame is Frame.RIGHT))


def axis_angle(axis, angle: float) -> GroupElement:
    """SO3 rotation by ``angle`` about ``axis`` (normalised here)."""
    axis = np.asarray(axis, dtype=float).reshape(3)
    n = np.linalg.norm(axis)
    if n == 0.0:
        if angle != 0.0:
            raise ValueError("zero rotation axis with nonzero angle")
        return identity(GroupId.SO3)
    return exp_map(axis * (angle / n))

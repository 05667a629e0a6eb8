"""Plain-text run configurations.

One ``key = value`` per line, ``#`` starts a comment, vectors are
comma-separated. ``pi`` may appear in numbers (``pi``, ``-pi/2``, ``2*pi/3``).

Example::

    group = so3
    controller = pi
    kp = 0.04
    ki = 0.01
    bias_frame = left
    bias = 0.01, 0.02, 0.03
    q0 = 1, 1, 1, pi          # axis x,y,z then angle
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import LyapunovParams, default_params
from .controllers import ControllerKind, GainError, GainSet
from .error_functions import ErrorFunction
from .lie_core import Frame, GroupElement, GroupId, axis_angle
from .simulator import BiasOrder, BiasSpec, Integrator, SimConfig

KEYS = (
    "group", "order", "controller", "kp", "ki", "kd", "bias_frame", "bias_order", "bias",
    "q0", "p0", "xi0", "integral0", "dt", "t_final", "integrator", "record_stride",
    "translation_weight", "output_csv", "output_summary", "alpha", "beta", "gamma",
)
REQUIRED = ("group", "controller", "kp")
_VECTOR_KEYS = ("bias", "q0", "p0", "xi0", "integral0")
_INT_KEYS = ("order", "record_stride")
_FLOAT_KEYS = ("kp", "ki", "kd", "dt", "t_final", "translation_weight", "alpha", "beta", "gamma")

_PI = re.compile(r"^([+-]?)(?:(\d+(?:\.\d*)?|\.\d+)\s*\*?\s*)?pi(?:\s*/\s*(\d+(?:\.\d*)?|\.\d+))?$")


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


def parse_number(text: str) -> float:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    m = _PI.match(text.replace(" ", ""))
    if not m:
        raise ValueError(f"not a number: {text!r}")
    sign, factor, divisor = m.groups()
    val = math.pi * (float(factor) if factor else 1.0) / (float(divisor) if divisor else 1.0)
    return -val if sign == "-" else val


def _fmt(x) -> str:
    if isinstance(x, tuple):
        return ", ".join(_fmt(v) for v in x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


@dataclass(frozen=True)
class RunSpec:
    """Validated run description; field names are the config keys."""

    group: str
    controller: str
    kp: float
    order: int
    ki: float = 0.0
    kd: float = 0.0
    bias_frame: str = "left"
    bias_order: str = "velocity"
    bias: tuple = ()
    q0: tuple = (1.0, 0.0, 0.0, 0.0)
    p0: tuple | None = None
    xi0: tuple | None = None
    integral0: tuple = ()
    dt: float = 0.01
    t_final: float = 1500.0
    integrator: str = "lie_euler"
    record_stride: int = 10
    translation_weight: float = 1.0
    output_csv: str | None = None
    output_summary: str | None = None
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None

    def lyapunov(self) -> LyapunovParams:
        return LyapunovParams(self.alpha, self.beta, self.gamma)

    def to_sim_config(self) -> SimConfig:
        group = GroupId(self.group)
        kind = ControllerKind(self.controller)
        rot = axis_angle(self.q0[:3], self.q0[3])
        if group is GroupId.SE3:
            g0 = GroupElement.from_rotation(rot.matrix, self.p0 if self.p0 is not None else np.zeros(3))
        else:
            g0 = rot
        return SimConfig(
            group=group,
            controller=kind,
            gains=GainSet(self.kp, self.kd, self.ki),
            g0=g0,
            bias=BiasSpec(np.array(self.bias), Frame(self.bias_frame), BiasOrder(self.bias_order)),
            error_function=ErrorFunction(group, self.translation_weight),
            xi0=None if self.xi0 is None else np.array(self.xi0),
            integral0=np.array(self.integral0),
            dt=self.dt,
            t_final=self.t_final,
            integrator=Integrator(self.integrator),
            record_stride=self.record_stride,
            lyapunov=self.lyapunov(),
        )

    def replace(self, **changes) -> "RunSpec":
        return build_spec({**self.as_dict(), **changes})

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}


def _check_choice(key, value, choices):
    if value not in choices:
        raise ConfigError(f"{key} must be one of {', '.join(choices)}; got {value!r}")
    return value


def build_spec(raw: dict) -> RunSpec:
    """Apply defaults to ``raw`` (config-key -> typed value) and validate."""
    unknown = sorted(set(raw) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    missing = [k for k in REQUIRED if raw.get(k) is None]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    vals = {k: v for k, v in raw.items() if v is not None}
    for k in _VECTOR_KEYS:
        if k in vals:
            vals[k] = tuple(float(x) for x in vals[k])
    for k in _FLOAT_KEYS:
        if k in vals:
            vals[k] = float(vals[k])

    group = GroupId(_check_choice("group", vals["group"], [g.value for g in GroupId]))
    kind = ControllerKind(_check_choice("controller", vals["controller"], [c.value for c in ControllerKind]))
    d = group.dim
    order = vals.setdefault("order", kind.order)
    if order != kind.order:
        raise ConfigError(f"controller {kind.value} drives an order-{kind.order} plant, config says order={order}")
    vals.setdefault("bias_order", "velocity" if order == 1 else "torque")
    _check_choice("bias_order", vals["bias_order"], [b.value for b in BiasOrder])
    _check_choice("bias_frame", vals.setdefault("bias_frame", "left"), [f.value for f in Frame])
    _check_choice("integrator", vals.setdefault("integrator", "lie_euler"), [m.value for m in Integrator])
    vals.setdefault("bias", (0.0,) * d)
    vals.setdefault("integral0", (0.0,) * d)
    for key, n in (("bias", d), ("integral0", d), ("xi0", d), ("q0", 4), ("p0", 3)):
        if key in vals and len(vals[key]) != n:
            raise ConfigError(f"{key} needs {n} values for {group.value}, got {len(vals[key])}")
    if "p0" in vals and group is not GroupId.SE3:
        raise ConfigError("p0 only applies to se3")
    if "xi0" in vals and order != 2:
        raise ConfigError("xi0 only applies to second-order plants")

    spec_fields = {f.name for f in dataclasses.fields(RunSpec)}
    try:
        gains = GainSet(vals["kp"], vals.get("kd", 0.0), vals.get("ki", 0.0))
        if kind in (ControllerKind.PID, ControllerKind.CROSSED_PID):
            gains.check_pid()
        if any(k in vals for k in ("alpha", "beta", "gamma")):
            for k in ("alpha", "beta") + (("gamma",) if order == 2 else ()):
                if k not in vals:
                    raise ConfigError(f"{k} must be given together with the other Lyapunov parameters")
        else:
            lp = default_params(gains, order)
            vals.update(alpha=lp.alpha, beta=lp.beta)
            if lp.gamma is not None:
                vals["gamma"] = lp.gamma
        spec = RunSpec(**{k: v for k, v in vals.items() if k in spec_fields})
        spec.to_sim_config()
    except ConfigError:
        raise
    except (GainError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return spec


def convert_value(key: str, text: str, line: int | None = None):
    """Typed value of config ``key`` from its text."""
    try:
        if key in _VECTOR_KEYS:
            return tuple(parse_number(p) for p in text.split(","))
        if key in _INT_KEYS:
            return int(text)
        if key in _FLOAT_KEYS:
            return parse_number(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}", line) from exc
    return text.strip().lower() if key not in ("output_csv", "output_summary") else text.strip()


def parse_config(text: str) -> RunSpec:
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        key = key.lower()
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno)
        raw[key] = convert_value(key, value, lineno)
    return build_spec(raw)


def serialize_config(spec: RunSpec) -> str:
    lines = []
    for key in KEYS:
        value = getattr(spec, key)
        if value is None:
            continue
        lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def load_config(path: str | Path) -> RunSpec:
    return parse_config(Path(path).read_text(encoding="utf-8"))

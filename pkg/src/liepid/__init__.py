"""PID control with transported integral action on SO(3) and SE(3)."""

from ._jit import BACKEND
from .lie_core import (
    CutLocusError,
    Frame,
    GroupElement,
    GroupError,
    GroupId,
    adjoint,
    axis_angle,
    bracket,
    compose,
    exp_map,
    hat,
    identity,
    inverse,
    log_map,
    retract,
    vee,
)
from .error_functions import ErrorFunction, GradientForm, critical_value, gradient, phi
from .controllers import ControllerKind, GainError, GainSet, ReferenceSpec
from .analysis import LyapunovParams, convergence_report, default_params, feasible_beta_interval
from .simulator import BiasOrder, BiasSpec, Integrator, SimConfig, SimulationAborted, Trajectory, simulate

__version__ = "0.1.0"

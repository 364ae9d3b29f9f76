"""Discretizations of the accelerated Euler-Lagrange ODE.

The second-order ODE

    X'' + (p + 1)/t X' + C p^2 t^(p-2) grad f(X) = 0

is rewritten as the first-order system

    X' = p/t (Z - X),        Z' = -C p t^(p-1) grad f(X),

and discretized with ``t = delta * k``. All delta factors in the Euler
schemes collapse into ``eps = delta ** p``, so the steppers only need ``k``.

Index convention
----------------
The explicit-implicit z-update evaluates the gradient at the fresh iterate
``x_{k+1}``. With ``convention="k+1"`` (default) its time factor is
``(k+1)^(p-1)``, matching the published matrix form; ``"k"`` uses ``k^(p-1)``.
For the implicit scheme the same switch selects whether the solved system is
indexed by the new iterate (``"k+1"``) or the old one (``"k"``). The explicit
scheme has no implicit term and ignores it.
"""

from __future__ import annotations

import enum
import math
import numbers
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    DimensionMismatch,
    InvalidParameter,
    NoMatrixForm,
    SingularSystem,
    SingularTime,
    ValidationError,
    ZeroTime,
)
from .objective import QuadraticObjective, gradient, to_eigenbasis, from_eigenbasis

CONVENTIONS = ("k", "k+1")


class SchemeKind(enum.Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"
    EXPLICIT_IMPLICIT = "explicit-implicit"
    RK4 = "rk4"
    NESTEROV_C = "nesterov"

    @property
    def has_matrix_form(self) -> bool:
        return self in (SchemeKind.EXPLICIT, SchemeKind.IMPLICIT, SchemeKind.EXPLICIT_IMPLICIT)

    @classmethod
    def parse(cls, name) -> "SchemeKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {"nesterov-c": "nesterov", "runge-kutta": "rk4", "naive": "explicit-implicit"}
        key = aliases.get(key, key)
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValidationError(f"unknown scheme {name!r}")


@dataclass(frozen=True)
class SchemeParams:
    p: float
    C: float = 1.0
    delta: float = 0.01
    convention: str = "k+1"

    def __post_init__(self):
        for name in ("p", "C", "delta"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, numbers.Real) or not math.isfinite(v):
                raise InvalidParameter(f"{name} must be a finite real, got {v!r}")
        if self.p < 2:
            raise InvalidParameter(f"p must be >= 2, got {self.p}")
        if self.C <= 0:
            raise InvalidParameter(f"C must be positive, got {self.C}")
        if self.delta <= 0:
            raise InvalidParameter(f"delta must be positive, got {self.delta}")
        if self.convention not in CONVENTIONS:
            raise InvalidParameter(f"convention must be one of {CONVENTIONS}")

    @property
    def epsilon(self) -> float:
        return self.delta ** self.p

    @property
    def shift(self) -> int:
        return 1 if self.convention == "k+1" else 0

    def violates_c_condition(self, L: float) -> bool:
        """True when ``C >= 1/(eps L)``, outside the regime the bound covers."""
        return self.C * self.epsilon * L >= 1.0

    def violates_step_condition(self, L: float) -> bool:
        """True when ``delta >= 1/L``."""
        return self.delta * L >= 1.0


@dataclass(frozen=True)
class IterateState:
    k: int
    x: np.ndarray
    z: np.ndarray

    @classmethod
    def initial(cls, x0, k0: int = 1) -> "IterateState":
        x0 = np.array(x0, dtype=np.float64).reshape(-1)
        return cls(k0, x0, x0.copy())


@dataclass(frozen=True)
class ModeMatrix:
    """Per-mode 2x2 map from ``(x~_k, z~_k)`` to ``(x~_{k+1}, z~_{k+1})``."""

    m11: float
    m12: float
    m21: float
    m22: float
    a_k: float
    b_k: float
    k: int
    scheme: SchemeKind

    def as_array(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]])

    @property
    def trace(self) -> float:
        return self.m11 + self.m22

    @property
    def det(self) -> float:
        return self.m11 * self.m22 - self.m12 * self.m21


def _check_state(state, obj):
    if state.x.shape != (obj.dim,) or state.z.shape != (obj.dim,):
        raise DimensionMismatch(
            f"state vectors must have length {obj.dim}, got {state.x.shape} and {state.z.shape}"
        )
    if state.k < 1:
        raise ZeroTime(f"Euler steps need k >= 1 (t = delta*k), got k = {state.k}")


def gradient_coefficient(k, params: SchemeParams):
    """``C p eps k^(p-1)``, the z-update weight at index ``k`` (array-friendly)."""
    return params.C * params.p * params.epsilon * np.power(k, params.p - 1.0)


def step_explicit(state: IterateState, params: SchemeParams, obj: QuadraticObjective) -> IterateState:
    _check_state(state, obj)
    k = state.k
    a = params.p / k
    x = state.x + a * (state.z - state.x)
    z = state.z - gradient_coefficient(k, params) * gradient(obj, state.x)
    return IterateState(k + 1, x, z)


def step_explicit_implicit(state: IterateState, params: SchemeParams, obj: QuadraticObjective) -> IterateState:
    _check_state(state, obj)
    k = state.k
    a = params.p / k
    x = state.x + a * (state.z - state.x)
    z = state.z - gradient_coefficient(k + params.shift, params) * gradient(obj, x)
    return IterateState(k + 1, x, z)


def implicit_system_matrix(m: int, params: SchemeParams, mode_eigenvalue: float) -> np.ndarray:
    """``N_m``: maps the new pair back to the old one, ``u_old = N_m u_new``."""
    a = params.p / m
    return np.array([[1.0 + a, -a], [gradient_coefficient(m, params) * mode_eigenvalue, 1.0]])


def step_implicit(state: IterateState, params: SchemeParams, obj: QuadraticObjective) -> IterateState:
    """Solve the backward-Euler pair exactly, one closed-form 2x2 solve per mode."""
    _check_state(state, obj)
    m = state.k + params.shift
    a = params.p / m
    b = gradient_coefficient(m, params) * obj.eigenvalues
    det = 1.0 + a + a * b
    if np.any(np.abs(det) < 1e-14):
        raise SingularSystem(f"implicit system singular at k = {state.k}")
    xt = to_eigenbasis(obj, state.x)
    zt = to_eigenbasis(obj, state.z)
    xn = (xt + a * zt) / det
    zn = ((1.0 + a) * zt - b * xt) / det
    return IterateState(state.k + 1, from_eigenbasis(obj, xn), from_eigenbasis(obj, zn))


def implicit_residual(old: IterateState, new: IterateState, params: SchemeParams, obj: QuadraticObjective):
    """Residuals of the two backward-Euler equations; both vanish for an exact step."""
    m = old.k + params.shift
    a = params.p / m
    r1 = new.x - old.x - a * (new.z - new.x)
    r2 = new.z - old.z + gradient_coefficient(m, params) * gradient(obj, new.x)
    return r1, r2


def transition_matrix(kind, k: int, params: SchemeParams, mode_eigenvalue: float) -> ModeMatrix:
    """Exact 2x2 matrix advancing one eigenmode from index ``k`` to ``k + 1``."""
    kind = SchemeKind.parse(kind)
    if not kind.has_matrix_form:
        raise NoMatrixForm(f"{kind.value} has no transition-matrix form")
    if k < 1:
        raise ZeroTime(f"k must be >= 1, got {k}")
    p = params.p
    if kind is SchemeKind.EXPLICIT:
        a = p / k
        b = float(gradient_coefficient(k, params)) * mode_eigenvalue
        return ModeMatrix(1.0 - a, a, -b, 1.0, a, b, k, kind)
    if kind is SchemeKind.EXPLICIT_IMPLICIT:
        a = p / k
        b = float(gradient_coefficient(k + params.shift, params)) * mode_eigenvalue
        return ModeMatrix(1.0 - a, a, -b * (1.0 - a), 1.0 - a * b, a, b, k, kind)
    m = k + params.shift
    a = p / m
    b = float(gradient_coefficient(m, params)) * mode_eigenvalue
    det = 1.0 + a + a * b
    if abs(det) < 1e-14:
        raise SingularSystem(f"implicit system singular at k = {k}")
    # closed-form inverse of [[1 + a, -a], [b, 1]]
    return ModeMatrix(1.0 / det, a / det, -b / det, (1.0 + a) / det, a, b, k, kind)


def step(kind, state: IterateState, params: SchemeParams, obj: QuadraticObjective) -> IterateState:
    kind = SchemeKind.parse(kind)
    if kind is SchemeKind.EXPLICIT:
        return step_explicit(state, params, obj)
    if kind is SchemeKind.IMPLICIT:
        return step_implicit(state, params, obj)
    if kind is SchemeKind.EXPLICIT_IMPLICIT:
        return step_explicit_implicit(state, params, obj)
    if kind is SchemeKind.RK4:
        t = params.delta * state.k
        x, z = rk4_step(t, state.x, state.z, params, obj, params.delta)
        return IterateState(state.k + 1, x, z)
    return nesterov_c_step(state, obj, 1.0 / obj.L)


# -- continuous-time system ---------------------------------------------------

def vector_field(t: float, x, z, params: SchemeParams, obj: QuadraticObjective):
    if t <= 0:
        raise SingularTime(f"vector field is singular at t = {t}")
    p = params.p
    return p / t * (z - x), -params.C * p * t ** (p - 1.0) * gradient(obj, x)


def rk4_step(t: float, x, z, params: SchemeParams, obj: QuadraticObjective, h: float):
    """One classical RK4 step of size ``h`` from time ``t``; returns ``(x', z')``."""
    if t <= 0 or t + 0.5 * h <= 0 or t + h <= 0:
        raise SingularTime(f"RK4 stages need positive times, got t = {t}, h = {h}")
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    k1x, k1z = vector_field(t, x, z, params, obj)
    k2x, k2z = vector_field(t + 0.5 * h, x + 0.5 * h * k1x, z + 0.5 * h * k1z, params, obj)
    k3x, k3z = vector_field(t + 0.5 * h, x + 0.5 * h * k2x, z + 0.5 * h * k2z, params, obj)
    k4x, k4z = vector_field(t + h, x + h * k3x, z + h * k3z, params, obj)
    x_new = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    z_new = z + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
    return x_new, z_new


@dataclass(frozen=True)
class OdeTrajectory:
    t: np.ndarray
    f_gap: np.ndarray
    x_dist: np.ndarray
    x_final: np.ndarray
    z_final: np.ndarray
    finite: bool


def reference_ode_solve(params: SchemeParams, obj: QuadraticObjective, x0, t0: float,
                        t_end: float, fine_step: float, sample_every: int | None = None) -> OdeTrajectory:
    """Dense fixed-step RK4 solution of the continuous ODE from ``X(t0) = Z(t0) = x0``.

    Integration runs per eigenmode, which is exact for a quadratic. Samples
    are taken every ``sample_every`` fine steps (default: about 4000 samples)
    and always at ``t_end``.
    """
    if t0 <= 0:
        raise SingularTime(f"t0 must be positive, got {t0}")
    if t_end <= t0:
        raise ValidationError("t_end must exceed t0")
    if not (0 < fine_step <= params.delta / 10 * (1 + 1e-12)):
        raise ValidationError(f"fine_step must be in (0, delta/10], got {fine_step}")
    n = int(round((t_end - t0) / fine_step))
    if sample_every is None:
        sample_every = max(1, n // 4000)
    xt = to_eigenbasis(obj, np.asarray(x0, dtype=np.float64)).copy()
    zt = xt.copy()
    cap = n // sample_every + 2
    s_out = np.zeros(cap, dtype=np.int64)
    t_out = np.zeros(cap)
    f_out = np.zeros(cap)
    d_out = np.zeros(cap)
    lam = np.ascontiguousarray(obj.eigenvalues, dtype=np.float64)
    count, finite = _kernels.rk4_modal(lam, xt, zt, float(t0), float(fine_step), n,
                                       float(params.p), float(params.C), int(sample_every),
                                       s_out, t_out, f_out, d_out)
    return OdeTrajectory(t_out[:count].copy(), f_out[:count].copy(), d_out[:count].copy(),
                         from_eigenbasis(obj, xt), from_eigenbasis(obj, zt), bool(finite))


# -- baseline -------------------------------------------------------------------

def nesterov_c_step(state: IterateState, obj: QuadraticObjective, step_size: float) -> IterateState:
    """Nesterov's accelerated gradient for convex functions (baseline).

    ``state.z`` holds the previous iterate ``x_{k-1}``. The update is
    ``y = x_k + (k-1)/(k+2) (x_k - x_{k-1})``, ``x_{k+1} = y - s grad f(y)``.
    """
    if state.x.shape != (obj.dim,) or state.z.shape != (obj.dim,):
        raise DimensionMismatch(f"state vectors must have length {obj.dim}")
    if step_size > 1.0 / obj.L * (1 + 1e-12):
        raise InvalidParameter(f"step size {step_size} exceeds 1/L = {1.0 / obj.L}")
    k = state.k
    beta = (k - 1.0) / (k + 2.0)
    y = state.x + beta * (state.x - state.z)
    return IterateState(k + 1, y - step_size * gradient(obj, y), state.x)


def gradient_descent_step(x, obj: QuadraticObjective, step_size: float) -> np.ndarray:
    return x - step_size * gradient(obj, x)

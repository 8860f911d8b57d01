"""Model equations for Gompertz tumour growth under oncolytic virotherapy.

Two forms are provided. The dimensional system tracks raw virion counts
``Vhat`` and physical rates; the dimensionless system rescales virions by the
burst size and time by ``beta * alpha``, leaving three governing ratios
``m``, ``xi`` and ``gamma`` plus the carrying capacity ``K``::

    dU/dt = m ln(K/U) U - U V / (U + I)
    dI/dt = U V / (U + I) - xi I
    dV/dt = -gamma V + xi I
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_K = 100.0


class ModelDomainError(ValueError):
    """Raised when a state lies outside the domain of the vector field."""


class EquilibriumKind(str, enum.Enum):
    FAILED_TREATMENT = "failed_treatment"
    COEXISTENCE = "coexistence"
    ERADICATION = "eradication"


class Classification(str, enum.Enum):
    STABLE_NODE = "stable_node"
    STABLE_SPIRAL = "stable_spiral"
    UNSTABLE_NODE = "unstable_node"
    UNSTABLE_SPIRAL = "unstable_spiral"
    SADDLE = "saddle"
    INDETERMINATE = "indeterminate"


def _check_positive(**values):
    for name, value in values.items():
        if not (value > 0 and math.isfinite(value)):
            raise ValueError(f"{name} must be a finite positive number, got {value!r}")


@dataclass(frozen=True)
class DimensionalParams:
    """Physical rates of the original model (time in arbitrary units)."""

    r: float
    K: float
    beta: float
    alpha: float
    d_I: float
    d_V: float

    def __post_init__(self):
        _check_positive(r=self.r, K=self.K, beta=self.beta, alpha=self.alpha,
                        d_I=self.d_I, d_V=self.d_V)

    @property
    def beta_hat(self) -> float:
        return self.beta * self.alpha


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless parameters: growth ``m``, potency ``xi``, viral decay ``gamma``."""

    m: float
    xi: float
    gamma: float
    K: float = DEFAULT_K

    def __post_init__(self):
        _check_positive(m=self.m, xi=self.xi, gamma=self.gamma, K=self.K)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {"m": self.m, "xi": self.xi, "gamma": self.gamma, "K": self.K}


@dataclass(frozen=True)
class State:
    """Populations at one instant: uninfected ``U``, infected ``I``, virus ``V``."""

    U: float
    I: float
    V: float

    def __post_init__(self):
        for name in ("U", "I", "V"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and non-negative, got {value!r}")

    def __iter__(self):
        return iter((self.U, self.I, self.V))

    def as_array(self) -> np.ndarray:
        return np.array([self.U, self.I, self.V], dtype=float)

    @property
    def total(self) -> float:
        return self.U + self.I + self.V


def as_state(s) -> State:
    if isinstance(s, State):
        return s
    U, I, V = (float(x) for x in s)
    return State(U, I, V)


@dataclass(frozen=True)
class Equilibrium:
    """An equilibrium point; ``state`` is ``None`` when a component is negative."""

    kind: EquilibriumKind
    values: tuple
    eigenvalues: tuple
    classification: Classification
    physical: bool = True
    notes: str = field(default="", compare=False)

    @property
    def state(self) -> State | None:
        if min(self.values) < 0:
            return None
        return State(*self.values)


def rhs(p: ModelParams, s) -> tuple[float, float, float]:
    """Time derivative of the dimensionless system at state ``s``."""
    U, I, V = as_state(s)
    if U <= 0:
        raise ModelDomainError(f"U must be positive for the Gompertz term, got U={U}")
    total = U + I
    infection = U * V / total
    return (
        p.m * math.log(p.K / U) * U - infection,
        infection - p.xi * I,
        -p.gamma * V + p.xi * I,
    )


def rhs_dimensional(p: DimensionalParams, s) -> tuple[float, float, float]:
    """Time derivative of the dimensional system; ``s`` carries raw virions ``Vhat``."""
    U, I, Vhat = as_state(s)
    if U <= 0:
        raise ModelDomainError(f"U must be positive for the Gompertz term, got U={U}")
    infection = p.beta * U * Vhat / (U + I)
    return (
        p.r * math.log(p.K / U) * U - infection,
        infection - p.d_I * I,
        -p.d_V * Vhat + p.alpha * p.d_I * I,
    )


def nondimensionalize(p: DimensionalParams, rescale_by_K: bool = False) -> ModelParams:
    """Map physical rates onto ``(m, xi, gamma, K)``.

    Time is measured in units of ``1 / (beta * alpha)``. With ``rescale_by_K``
    the populations are additionally expressed as fractions of the carrying
    capacity, so the returned ``K`` is 1 and every equilibrium shrinks by
    ``1/K`` (see :func:`scale_state`).
    """
    bh = p.beta_hat
    return ModelParams(
        m=p.r / bh,
        xi=p.d_I / bh,
        gamma=p.d_V / bh,
        K=1.0 if rescale_by_K else p.K,
    )


def virions_to_state(s, alpha: float) -> State:
    """Convert a ``(U, I, Vhat)`` triple to model units ``V = Vhat / alpha``."""
    U, I, Vhat = as_state(s)
    return State(U, I, Vhat / alpha)


def scale_state(s, K: float) -> State:
    """Express a state as fractions of the carrying capacity."""
    U, I, V = as_state(s)
    return State(U / K, I / K, V / K)


def jacobian(p: ModelParams, s) -> np.ndarray:
    U, I, V = as_state(s)
    if U <= 0:
        raise ModelDomainError(
            "Jacobian is singular at U = 0; use stability.eradication_probe instead")
    return _jacobian_values(p, U, I, V)


def _jacobian_values(p, U, I, V):
    # no sign checks: also used for the non-physical coexistence point (I < 0)
    S = U + I
    # ratios first: S * S underflows once U + I drops below ~1e-154
    u, i, v = U / S, I / S, V / S
    return np.array([
        [p.m * math.log(p.K / U) - p.m - v * i, u * v, -u],
        [v * i, -p.xi - u * v, u],
        [0.0, p.xi, -p.gamma],
    ])


def param_derivative(p: ModelParams, s, name: str) -> np.ndarray:
    """Partial derivative of :func:`rhs` with respect to parameter ``name``."""
    U, I, V = as_state(s)
    if name == "xi":
        return np.array([0.0, -I, I])
    if name == "gamma":
        return np.array([0.0, 0.0, -V])
    if name == "m":
        return np.array([math.log(p.K / U) * U if U > 0 else 0.0, 0.0, 0.0])
    raise ValueError(f"unknown parameter {name!r}")


def coexistence_state(p: ModelParams) -> State | None:
    """Closed-form interior equilibrium; ``None`` when ``I*`` would be negative.

    Use :func:`coexistence_values` to get the raw triple for any ``gamma``.
    """
    U, I, V = coexistence_values(p)
    if I < 0:
        return None
    return State(U, I, V)


def coexistence_values(p: ModelParams) -> tuple[float, float, float]:
    U = p.K * math.exp(p.xi * (p.gamma - 1.0) / (p.m * p.gamma))
    I = U * (1.0 - p.gamma) / p.gamma
    V = p.xi * I / p.gamma
    return U, I, V


def classify_eigenvalues(eigs, tol: float = 1e-12) -> Classification:
    eigs = np.asarray(eigs, dtype=complex)
    re = eigs.real
    scale = max(1.0, float(np.max(np.abs(eigs))))
    if np.any(np.abs(re) <= tol * scale):
        return Classification.INDETERMINATE
    complex_pair = bool(np.any(np.abs(eigs.imag) > tol * scale))
    if np.all(re < 0):
        return Classification.STABLE_SPIRAL if complex_pair else Classification.STABLE_NODE
    if np.all(re > 0):
        return Classification.UNSTABLE_SPIRAL if complex_pair else Classification.UNSTABLE_NODE
    # mixed signs; a complex pair here is a saddle-focus, reported as a spiral
    return Classification.UNSTABLE_SPIRAL if complex_pair else Classification.SADDLE


def equilibria(p: ModelParams) -> list[Equilibrium]:
    """Failed treatment ``(K,0,0)``, coexistence ``(U*,I*,V*)`` and eradication ``(0,0,0)``.

    The coexistence entry is always returned; it is flagged non-physical for
    ``gamma >= 1`` where ``I*`` is non-positive. The origin is a singular
    point of the Jacobian, so its eigenvalues are NaN and its classification
    is left indeterminate.
    """
    failed = State(p.K, 0.0, 0.0)
    eig_f = tuple(complex(z) for z in np.linalg.eigvals(jacobian(p, failed)))
    out = [Equilibrium(EquilibriumKind.FAILED_TREATMENT, tuple(failed), eig_f,
                       classify_eigenvalues(eig_f))]

    U, I, V = coexistence_values(p)
    physical = p.gamma < 1.0
    if U > 0:
        J = _jacobian_values(p, U, I, V)
        eig_c = tuple(complex(z) for z in np.linalg.eigvals(J))
        cls = classify_eigenvalues(eig_c)
    else:
        eig_c = (complex("nan"),) * 3
        cls = Classification.INDETERMINATE
    out.append(Equilibrium(
        EquilibriumKind.COEXISTENCE, (U, I, V), eig_c, cls, physical=physical,
        notes="" if physical else f"non-physical for gamma >= 1 (I* = {I:.6g})",
    ))

    nan3 = (complex("nan"),) * 3
    out.append(Equilibrium(EquilibriumKind.ERADICATION, (0.0, 0.0, 0.0), nan3,
                           Classification.INDETERMINATE,
                           notes="singular Jacobian; see eradication_probe"))
    return out


def rhs_residual(p: ModelParams, s) -> float:
    return float(np.linalg.norm(rhs(p, s)))


def gompertz_solution(p: ModelParams, U0: float, t: float) -> float:
    """Virus-free Gompertz trajectory ``K exp(ln(U0/K) exp(-m t))``."""
    return p.K * math.exp(math.log(U0 / p.K) * math.exp(-p.m * t))


"""Local stability of the three equilibria.

The failed-treatment and coexistence points have closed-form characteristic
cubics, tested with Routh-Hurwitz and split into node/spiral by the cubic
discriminant. The origin is singular (``ln(K/U)`` and ``U/(U+I)``), so its
stability is decided by following the flow from a small positive probe
state (see :func:`eradication_probe`).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .integrator import (ERADICATION_LEVEL, IntegratorConfig, integrate, write_rows)
from .model import (Classification, ModelParams, State, as_state, coexistence_values,
                    jacobian)

DEGENERATE_TOL = 1e-12
DEFAULT_PROBE = State(1e-7, 1e-4, 1e-5)
PROBE_RESCALE = 0.1
PROBE_HORIZON = 5000.0


@dataclass(frozen=True)
class CubicCoefficients:
    """``rho(lam) = a0 lam^3 + a1 lam^2 + a2 lam + a3``."""

    a0: float
    a1: float
    a2: float
    a3: float

    def __post_init__(self):
        if self.a0 == 0:
            raise ValueError("leading coefficient a0 must be non-zero")

    def __iter__(self):
        return iter((self.a0, self.a1, self.a2, self.a3))

    def monic(self) -> tuple[float, float, float]:
        return self.a1 / self.a0, self.a2 / self.a0, self.a3 / self.a0

    def roots(self) -> np.ndarray:
        # np.roots takes eigenvalues of the companion matrix
        return np.roots([self.a0, self.a1, self.a2, self.a3])

    def __call__(self, lam):
        return ((self.a0 * lam + self.a1) * lam + self.a2) * lam + self.a3


def charpoly_failed(p: ModelParams) -> CubicCoefficients:
    """Expanded ``-(lam + m)(lam^2 + (xi+gamma) lam + xi(gamma-1))``."""
    m, xi, g = p.m, p.xi, p.gamma
    b1 = xi + g
    b0 = xi * (g - 1.0)
    return CubicCoefficients(-1.0, -(b1 + m), -(b0 + m * b1), -m * b0)


def charpoly_coexistence(p: ModelParams) -> CubicCoefficients:
    m, xi, g = p.m, p.xi, p.gamma
    return CubicCoefficients(
        -1.0,
        -(g + m + xi),
        g * m * (xi - 1.0) + xi * xi / g - xi * (2.0 * m + xi),
        g * m * xi * (g - 1.0),
    )


class RouthHurwitz(NamedTuple):
    stable: bool
    degenerate: bool
    hurwitz: float


def routh_hurwitz(c: CubicCoefficients) -> RouthHurwitz:
    """All roots in the open left half-plane iff b1 > 0, b3 > 0, b1 b2 - b3 > 0.

    ``b_i = a_i / a0``. For the ``a0 = -1`` convention the last two read
    ``a3 < 0`` and ``(a1 a2 - a0 a3) / a1 < 0``.
    """
    b1, b2, b3 = c.monic()
    h = b1 * b2 - b3
    scale = max(1.0, abs(b1 * b2), abs(b3))
    degenerate = (abs(b1) < DEGENERATE_TOL or abs(b3) < DEGENERATE_TOL
                  or abs(h) < DEGENERATE_TOL * scale)
    return RouthHurwitz(b1 > 0 and b3 > 0 and h > 0, degenerate, h)


def routh_hurwitz_stable(c: CubicCoefficients) -> bool:
    return routh_hurwitz(c).stable


def hopf_function(p: ModelParams) -> float:
    """``a1 a2 - a0 a3`` of the coexistence cubic; zero on the Hopf locus."""
    a0, a1, a2, a3 = charpoly_coexistence(p)
    return a1 * a2 - a0 * a3


def cubic_discriminant(c: CubicCoefficients) -> tuple[float, float]:
    """Discriminant and the magnitude scale of its terms."""
    a, b, cc, d = c
    terms = (18 * a * b * cc * d, -4 * b ** 3 * d, b * b * cc * cc,
             -4 * a * cc ** 3, -27 * a * a * d * d)
    return math.fsum(terms), sum(abs(t) for t in terms)


def classify_coexistence(p: ModelParams) -> Classification:
    c = charpoly_coexistence(p)
    rh = routh_hurwitz(c)
    disc, scale = cubic_discriminant(c)
    if rh.degenerate or abs(disc) <= DEGENERATE_TOL * scale:
        return Classification.INDETERMINATE
    real_roots = disc > 0
    if rh.stable:
        return Classification.STABLE_NODE if real_roots else Classification.STABLE_SPIRAL
    if not real_roots:
        return Classification.UNSTABLE_SPIRAL
    if np.all(c.roots().real > 0):
        return Classification.UNSTABLE_NODE
    return Classification.SADDLE


def _bisect(f, lo, hi, tol):
    flo = f(lo)
    fhi = f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ValueError(f"no sign change on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def node_spiral_switch(m: float, gamma: float, xi_lo: float, xi_hi: float,
                       K: float = 100.0, tol: float = 1e-10) -> float:
    """``xi`` at which the coexistence discriminant changes sign."""
    def disc(xi):
        return cubic_discriminant(charpoly_coexistence(ModelParams(m, xi, gamma, K)))[0]
    return _bisect(disc, xi_lo, xi_hi, tol)


def threshold_contour(m: float, gamma: float, K: float, U_T: float) -> float:
    """Potency ``xi`` whose coexistence equilibrium sits at tumour burden ``U_T``.

    Inverts ``U* = K exp(xi (gamma-1) / (m gamma))``.
    """
    if gamma == 1.0:
        raise ValueError("gamma = 1 has no coexistence branch to invert")
    if not 0 < U_T <= K:
        raise ValueError(f"U_T must lie in (0, K], got {U_T}")
    return m * gamma / (gamma - 1.0) * math.log(U_T / K)


class Verdict(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class ProbeResult:
    """Outcome of probing the origin.

    ``verdict`` is decided dynamically at two probe scales. ``eigenvalues``
    are those of the analytic Jacobian at the probe state; they are kept as
    diagnostics only, since ``m ln(K/U)`` grows without bound as the probe
    shrinks.
    """

    eigenvalues: tuple
    verdict: Verdict
    probe: State
    fates: tuple
    extinction_times: tuple = ()
    details: dict = field(default_factory=dict, compare=False)


def _probe_fate(p: ModelParams, s0: State, horizon: float, cfg):
    """True if the flow from ``s0`` is absorbed at the origin within ``horizon``."""
    K = p.K
    seen = {"high": False, "dipped": False}

    def stop(t, s):
        U, I, V = s
        if U == 0.0:
            return I + V < ERADICATION_LEVEL
        if U > 0.5 * K:
            seen["high"] = True
        elif seen["high"] and U < 1e-6 * K:
            seen["dipped"] = True
        elif seen["dipped"] and U > 1e-3 * K:
            return True  # came back from the neighbourhood of the origin
        return False

    traj = integrate(p, s0, horizon, cfg, stop_when=stop)
    t_ext = next((t for t, name in traj.extinctions if name == "U"), None)
    return traj.final_state.U == 0.0, t_ext


def eradication_probe(p: ModelParams, probe=DEFAULT_PROBE, *,
                      horizon: float = PROBE_HORIZON,
                      cfg: IntegratorConfig | None = None,
                      rescale: float = PROBE_RESCALE) -> ProbeResult:
    """Stability of ``(0, 0, 0)`` from a small positive probe state.

    The flow is followed from ``probe`` and from ``rescale * probe``. The
    origin is Stable when both runs go extinct within ``horizon``, Unstable
    when neither does, and Indeterminate when they disagree.
    """
    probe = as_state(probe)
    if min(probe) <= 0:
        raise ValueError("probe components must be positive")
    eig = tuple(complex(z) for z in np.linalg.eigvals(jacobian(p, probe)))
    small = State(*(rescale * c for c in probe))
    fates, times = [], []
    for s in (probe, small):
        absorbed, t_ext = _probe_fate(p, s, horizon, cfg)
        fates.append(absorbed)
        times.append(t_ext)
    if fates[0] != fates[1]:
        verdict = Verdict.INDETERMINATE
    else:
        verdict = Verdict.STABLE if fates[0] else Verdict.UNSTABLE
    small_eig = tuple(complex(z) for z in np.linalg.eigvals(jacobian(p, small)))
    return ProbeResult(eig, verdict, probe, tuple(fates), tuple(times),
                       {"rescaled_eigenvalues": small_eig, "horizon": horizon})


@dataclass(frozen=True)
class RegionSample:
    params: ModelParams
    stable: bool
    classification: Classification
    Ustar: float
    physical: bool
    degenerate: bool = False


def region_sample(p: ModelParams) -> RegionSample:
    rh = routh_hurwitz(charpoly_coexistence(p))
    Ustar = coexistence_values(p)[0]
    return RegionSample(p, rh.stable, classify_coexistence(p), Ustar,
                        physical=p.gamma < 1.0, degenerate=rh.degenerate)


def scan_region(m_values: Iterable[float], xi_values: Iterable[float],
                gamma_values: Iterable[float], K: float = 100.0,
                n_jobs: int = 1) -> list[RegionSample]:
    """Sample the coexistence stability over a grid, ``m`` outermost, ``gamma`` innermost."""
    grid = [ModelParams(m, xi, g, K) for m in m_values for xi in xi_values
            for g in gamma_values]
    if n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(n_jobs) as ex:
            return list(ex.map(region_sample, grid, chunksize=256))
    return [region_sample(p) for p in grid]


def ustar_band(samples: Iterable[RegionSample], lo: float, hi: float,
               relative: bool = True, stable_only: bool = True) -> list[RegionSample]:
    """Samples whose ``U*`` falls in ``(lo, hi)``; fractions of ``K`` when ``relative``."""
    out = []
    for s in samples:
        u = s.Ustar / s.params.K if relative else s.Ustar
        if lo < u < hi and s.physical and (s.stable or not stable_only):
            out.append(s)
    return out


def write_region_csv(path, samples: Iterable[RegionSample]) -> None:
    write_rows(path, ["m", "xi", "gamma", "stable", "class", "Ustar"],
               ([s.params.m, s.params.xi, s.params.gamma, s.stable,
                 s.classification if s.physical else "non_physical", s.Ustar]
                for s in samples))


def write_contour_csv(path, rows: Iterable[tuple]) -> None:
    """Rows of ``(m, gamma, U_T, xi)``."""
    write_rows(path, ["m", "gamma", "U_T", "xi"], rows)

"""Equilibrium branches, bifurcation points and limit-cycle tracking.

Equilibria are followed by pseudo-arclength continuation in populations
scaled by ``K`` (the system is homogeneous of degree one, so the scaled
problem has ``K = 1`` and identical eigenvalues). Periodic orbits are not
continued; stable cycles are measured by direct simulation instead.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from .integrator import (CYCLE_PEAKS, CYCLE_RTOL, IntegratorConfig, Outcome,
                         find_maxima, integrate, integrate_to_outcome, write_rows)
from .model import ModelParams, _jacobian_values, coexistence_values
from .stability import (PROBE_HORIZON, Verdict, charpoly_coexistence, charpoly_failed,
                        eradication_probe, hopf_function, routh_hurwitz)

PARAMS = ("m", "xi", "gamma")
NEWTON_TOL = 1e-10
NEWTON_MAXITER = 20
DS_MIN = 1e-5
DS_MAX = 1e-2
REFINE_TOL = 1e-6
HOPF_REAL_TOL = 1e-8
FOLD_EIG_TOL = 1e-8


class BranchKind(str, enum.Enum):
    FAILED_TREATMENT = "failed_treatment"
    COEXISTENCE = "coexistence"
    ERADICATION = "eradication"
    PERIODIC_ORBIT = "periodic_orbit"


class PointKind(str, enum.Enum):
    HOPF = "hopf"
    FOLD = "fold"
    BRANCH_POINT = "branch_point"
    GENERALIZED_HOPF = "generalized_hopf"


class Criticality(str, enum.Enum):
    SUPERCRITICAL = "supercritical"
    SUBCRITICAL = "subcritical"
    NOT_APPLICABLE = "not_applicable"


class ContinuationError(RuntimeError):
    """Continuation stalled; ``last_point`` is the last accepted branch point."""

    def __init__(self, message: str, last_point=None):
        super().__init__(message)
        self.last_point = last_point


class BranchPoint(NamedTuple):
    value: float
    U: float
    I: float
    V: float
    stable: bool | None


@dataclass(frozen=True)
class Branch:
    param: str
    kind: BranchKind
    points: tuple
    notes: tuple = ()

    @property
    def values(self) -> np.ndarray:
        return np.array([q.value for q in self.points])

    @property
    def U(self) -> np.ndarray:
        return np.array([q.U for q in self.points])

    def to_csv(self, path) -> None:
        write_rows(path, ["param", "U", "I", "V", "stable"],
                   ((q.value, q.U, q.I, q.V, "" if q.stable is None else q.stable)
                    for q in self.points))


@dataclass(frozen=True)
class BifurcationPoint:
    """A singular point. ``location`` lists ``(name, value)`` of the free parameters."""

    kind: PointKind
    params: ModelParams
    location: tuple
    criticality: Criticality = Criticality.NOT_APPLICABLE
    state: tuple | None = None
    eigenvalues: tuple = ()
    details: dict = field(default_factory=dict, compare=False)

    @property
    def value(self) -> float:
        return self.location[0][1]

    def row(self) -> list:
        (n1, v1), *rest = self.location
        n2, v2 = rest[0] if rest else ("", "")
        return [self.kind, n1, v1, n2, v2, self.criticality]


def write_points_csv(path, points: Iterable[BifurcationPoint]) -> None:
    write_rows(path, ["kind", "param1", "value1", "param2", "value2", "criticality"],
               (b.row() for b in points))


def _check_param(name: str) -> None:
    if name not in PARAMS:
        raise ValueError(f"parameter must be one of {PARAMS}, got {name!r}")


# scaled vector field (K = 1); no sign checks so the branch can pass gamma = 1

def _F(m, xi, g, x):
    u, i, v = x
    inf = u * v / (u + i)
    return np.array([m * math.log(1.0 / u) * u - inf, inf - xi * i, xi * i - g * v])


def _dF(param, x):
    u, i, v = x
    if param == "m":
        return np.array([math.log(1.0 / u) * u, 0.0, 0.0])
    if param == "xi":
        return np.array([0.0, -i, i])
    return np.array([0.0, 0.0, -v])


class _Problem:
    def __init__(self, base: ModelParams, param: str):
        self.base = base.with_(K=1.0)
        self.param = param
        self.K = base.K

    def params(self, lam: float, K: float = 1.0) -> ModelParams:
        return self.base.with_(**{self.param: lam, "K": K})

    def _mxg(self, lam):
        d = {"m": self.base.m, "xi": self.base.xi, "gamma": self.base.gamma}
        d[self.param] = lam
        return d["m"], d["xi"], d["gamma"]

    def F(self, y):
        return _F(*self._mxg(y[3]), y[:3])

    def jac(self, y):
        return _jacobian_values(self.params(y[3]), *y[:3])

    def full_jac(self, y):
        return np.column_stack([self.jac(y), _dF(self.param, y[:3])])

    def admissible(self, y):
        u, i, _ = y[:3]
        return u > 0 and u + i > 0 and y[3] > 0 and np.all(np.isfinite(y))

    def tangent(self, y, prev=None):
        _, _, vt = np.linalg.svd(self.full_jac(y))
        t = vt[-1]
        if prev is not None and t @ prev < 0:
            t = -t
        return t

    def correct(self, y_pred, t):
        """Newton on ``F = 0`` plus the arclength constraint; returns (y, iterations)."""
        y = y_pred.copy()
        for it in range(1, NEWTON_MAXITER + 1):
            if not self.admissible(y):
                return None, it
            G = np.append(self.F(y), t @ (y - y_pred))
            A = np.vstack([self.full_jac(y), t])
            try:
                dy = np.linalg.solve(A, -G)
            except np.linalg.LinAlgError:
                return None, it
            y = y + dy
            if np.max(np.abs(dy)) < NEWTON_TOL and self.admissible(y):
                if np.max(np.abs(self.F(y))) < NEWTON_TOL:
                    return y, it
        return None, NEWTON_MAXITER

    def solve_at(self, x0, lam):
        """Newton with the parameter held fixed."""
        y = np.append(np.asarray(x0, float), lam)
        for _ in range(NEWTON_MAXITER):
            try:
                dx = np.linalg.solve(self.jac(y), -self.F(y))
            except np.linalg.LinAlgError:
                return None
            y[:3] += dx
            if not self.admissible(y):
                return None
            if np.max(np.abs(dx)) < NEWTON_TOL * 1e-2:
                return y
        return y if np.max(np.abs(self.F(y))) < NEWTON_TOL else None

    # test functions
    def hurwitz(self, y):
        c = np.poly(self.jac(y)).real
        return c[1] * c[2] - c[3]

    def det(self, y):
        return float(np.linalg.det(self.jac(y)))

    def fold(self, y, prev_t):
        return self.tangent(y, prev_t)[3]


def _stable_flag(kind: BranchKind, p: ModelParams) -> bool:
    cubic = charpoly_coexistence(p) if kind is BranchKind.COEXISTENCE else charpoly_failed(p)
    return routh_hurwitz(cubic).stable


def _start(kind: BranchKind, p: ModelParams) -> np.ndarray:
    if kind is BranchKind.FAILED_TREATMENT:
        return np.array([1.0, 0.0, 0.0])
    if kind is BranchKind.COEXISTENCE:
        U, I, V = coexistence_values(p)
        return np.array([U, I, V]) / p.K
    raise ValueError("continuation starts only on failed_treatment or coexistence branches")


def _march(prob: _Problem, y0, direction: float, lo: float, hi: float, ds0: float,
           max_points: int):
    """Points from ``y0`` (exclusive) in one direction until the range is left."""
    t = prob.tangent(y0)
    if t[3] * direction < 0 or (t[3] == 0 and direction < 0):
        t = -t
    y, ds = y0, ds0
    out = [(y0, t)]
    notes = []
    while len(out) < max_points:
        y_new, its = prob.correct(y + ds * t, t)
        if y_new is None:
            ds *= 0.5
            if ds < DS_MIN:
                raise ContinuationError(
                    f"step size underflow at {prob.param}={y[3]:.12g}",
                    last_point=(y[3], *(prob.K * y[:3])))
            continue
        lam = y_new[3]
        if lam > hi or lam < lo:
            edge = hi if lam > hi else lo
            yb = prob.solve_at(y[:3] + (y_new[:3] - y[:3]) * (edge - y[3]) / (lam - y[3]), edge)
            if yb is not None and abs(yb[3] - y[3]) > 1e-14:
                out.append((yb, prob.tangent(yb, t)))
            break
        t = prob.tangent(y_new, t)
        out.append((y_new, t))
        y = y_new
        if its <= 3:
            ds = min(ds * 1.5, DS_MAX)
        elif its > 6:
            ds = max(ds * 0.5, DS_MIN)
    else:
        notes.append("max_points reached")
    return out[1:], notes


def _refine(prob: _Problem, ya, ta, yb, test, fa, fb):
    """Root of ``test`` between consecutive branch points, parameterised by arclength."""
    chord = yb - ya
    s_b = float(ta @ chord)
    c_dir = chord / np.linalg.norm(chord)

    def point(s):
        y, _ = prob.correct(ya + s * ta, ta)
        if y is None:
            # near a branch point the extended system is nearly singular
            frac = s / s_b
            y, _ = prob.correct(ya + frac * chord, c_dir)
        if y is None:
            y = prob.solve_at((ya + frac * chord)[:3], ya[3] + frac * chord[3])
        if y is None:
            raise ContinuationError("corrector failed during refinement")
        return y

    def g(s):
        if s <= 0:
            return fa
        if s >= s_b:
            return fb
        return test(point(s))

    s = brentq(g, 0.0, s_b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return point(s) if 0 < s < s_b else (ya if s <= 0 else yb)


def _interp_root(prob: _Problem, seq, f, k):
    """Root of test values ``f`` between points ``k`` and ``k+1`` by local cubic fits.

    Used at branch points, where the extended Newton system is singular and
    the corrector can hop onto the crossing branch.
    """
    idx = list(range(max(k - 1, 0), min(k + 3, len(seq))))
    ys = np.array([seq[j][0] for j in idx])
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(ys, axis=0), axis=1))])
    deg = len(idx) - 1
    fv = np.array([f[j] for j in idx])
    scale = np.abs(fv).max()
    poly = np.polynomial.Polynomial.fit(s, fv / scale, deg)
    a, b = s[idx.index(k)], s[idx.index(k + 1)]
    roots = [r.real for r in poly.roots() if abs(r.imag) < 1e-12 and a <= r.real <= b]
    r = roots[0] if roots else a - f[k] * (b - a) / (f[k + 1] - f[k])
    y = np.array([np.polynomial.Polynomial.fit(s, ys[:, c], deg)(r) for c in range(4)])
    polished = prob.solve_at(y[:3], y[3])
    return polished if polished is not None else y


def continue_equilibrium(p0: ModelParams, which, param: str, range_: Sequence[float], *,
                         ds: float = 1e-3, max_points: int = 100_000):
    """Follow an equilibrium branch of ``which`` kind in ``param`` over ``range_``.

    Returns ``(branch, points)``. Hopf points are sign changes of the
    Hurwitz determinant with a verified imaginary eigenvalue pair, branch
    points are sign changes of ``det J``, and folds are sign changes of the
    parameter component of the tangent.
    """
    which = BranchKind(which)
    _check_param(param)
    lo, hi = (float(v) for v in range_)
    if not 0 < lo < hi:
        raise ValueError("range must satisfy 0 < lo < hi")
    lam0 = getattr(p0, param)
    if not lo <= lam0 <= hi:
        raise ValueError(f"{param}={lam0} outside range [{lo}, {hi}]")
    ds = min(max(ds, DS_MIN), DS_MAX)
    prob = _Problem(p0, param)
    y0 = prob.solve_at(_start(which, p0), lam0)
    if y0 is None:
        raise ContinuationError("could not converge on the starting equilibrium")

    fwd, n1 = _march(prob, y0, +1.0, lo, hi, ds, max_points)
    bwd, n2 = _march(prob, y0, -1.0, lo, hi, ds, max_points)
    t0 = prob.tangent(y0)
    if t0[3] < 0:
        t0 = -t0
    # orient every tangent from the low end of the branch to the high end
    seq = [(y, -t) for y, t in reversed(bwd)] + [(y0, t0)] + fwd

    pts = []
    for y, _ in seq:
        stab = _stable_flag(which, prob.params(y[3], p0.K))
        pts.append(BranchPoint(float(y[3]), *(float(prob.K * c) for c in y[:3]), stab))
    branch = Branch(param, which, tuple(pts), tuple(n1 + n2))
    return branch, _detect(prob, which, seq)


def _detect(prob: _Problem, which: BranchKind, seq) -> list[BifurcationPoint]:
    found = []
    K = prob.K
    tests = [
        (PointKind.HOPF, prob.hurwitz),
        (PointKind.BRANCH_POINT, prob.det),
    ]
    vals = {kind: [f(y) for y, _ in seq] for kind, f in tests}
    fold_vals = [t[3] for _, t in seq]
    for k in range(len(seq) - 1):
        (ya, ta), (yb, _) = seq[k], seq[k + 1]
        for kind, f in tests:
            fa, fb = vals[kind][k], vals[kind][k + 1]
            if fa == 0 or (fa > 0) == (fb > 0):
                continue
            if kind is PointKind.BRANCH_POINT:
                y = _interp_root(prob, seq, vals[kind], k)
            else:
                y = _refine(prob, ya, ta, yb, f, fa, fb)
            J = prob.jac(y)
            eig = np.linalg.eigvals(J)
            if kind is PointKind.HOPF:
                pair = eig[np.abs(eig.imag) > 1e-12]
                if pair.size == 0 or np.abs(pair.real).max() >= HOPF_REAL_TOL:
                    continue  # real pair +-lambda: a neutral saddle, not a Hopf point
            found.append(_point(prob, kind, y, eig, K))
        fa, fb = fold_vals[k], fold_vals[k + 1]
        if fa != 0 and (fa > 0) != (fb > 0):
            y = _refine(prob, ya, ta, yb, lambda z, t0=ta: prob.fold(z, t0), fa, fb)
            eig = np.linalg.eigvals(prob.jac(y))
            if np.abs(eig).min() < FOLD_EIG_TOL:
                found.append(_point(prob, PointKind.FOLD, y, eig, K))
    found.sort(key=lambda b: b.value)
    return found


def _point(prob, kind, y, eig, K) -> BifurcationPoint:
    p = prob.params(float(y[3]), K)
    return BifurcationPoint(kind, p, ((prob.param, float(y[3])),),
                            state=tuple(float(K * c) for c in y[:3]),
                            eigenvalues=tuple(complex(z) for z in eig))


def failed_branch_points(p: ModelParams) -> list[tuple[str, float]]:
    """Parameter values where the failed-treatment cubic has a zero root.

    ``a3 = -m xi (gamma - 1)`` vanishes at ``gamma = 1`` and at ``xi = 0``.
    """
    return [("gamma", 1.0), ("xi", 0.0)]


# eradication branch

def _probe_direction(res) -> bool:
    if res.verdict is Verdict.INDETERMINATE:
        return res.fates[0]
    return res.verdict is Verdict.STABLE


def eradication_branch_stability(p_base: ModelParams, param: str, range_: Sequence[float], *,
                                 n: int = 21, tol: float = 1e-4,
                                 horizon: float = PROBE_HORIZON,
                                 cfg: IntegratorConfig | None = None):
    """Probe the origin over a grid in ``param`` and bisect each stability change.

    Returns ``(branch, folds)``. Grid points where the two probe scales
    disagree carry ``stable=None`` and are listed in ``branch.notes``.
    """
    _check_param(param)
    lo, hi = (float(v) for v in range_)
    if not 0 < lo < hi:
        raise ValueError("range must satisfy 0 < lo < hi")

    def probe(v):
        return eradication_probe(p_base.with_(**{param: v}), horizon=horizon, cfg=cfg)

    grid = np.linspace(lo, hi, n)
    results = [probe(v) for v in grid]
    pts, notes = [], []
    for v, r in zip(grid, results):
        stable = None if r.verdict is Verdict.INDETERMINATE else r.verdict is Verdict.STABLE
        if stable is None:
            notes.append(f"indeterminate at {param}={v:.12g}")
        pts.append(BranchPoint(float(v), 0.0, 0.0, 0.0, stable))

    folds = []
    definite = [(v, _probe_direction(r)) for v, r in zip(grid, results)
                if r.verdict is not Verdict.INDETERMINATE]
    for (a, sa), (b, sb) in zip(definite, definite[1:]):
        if sa == sb:
            continue
        flips = 0
        while b - a > tol:
            mid = 0.5 * (a + b)
            r = probe(mid)
            if r.verdict is Verdict.INDETERMINATE:
                flips += 1
            if _probe_direction(r) == sa:
                a = mid
            else:
                b = mid
        a, b = float(a), float(b)
        x = 0.5 * (a + b)
        folds.append(BifurcationPoint(
            PointKind.FOLD, p_base.with_(**{param: x}), ((param, x),),
            state=(0.0, 0.0, 0.0),
            details={"bracket": (a, b), "stable_above": not sa,
                     "indeterminate_probes": flips}))
    return Branch(param, BranchKind.ERADICATION, tuple(pts), tuple(notes)), folds


# Hopf locus

def _hopf_eigen_ok(p: ModelParams) -> tuple[bool, np.ndarray]:
    U, I, V = coexistence_values(p)
    eig = np.linalg.eigvals(_jacobian_values(p, U, I, V))
    pair = eig[np.abs(eig.imag) > 1e-12]
    ok = pair.size == 2 and np.abs(pair.real).max() < HOPF_REAL_TOL
    return ok, eig


def hopf_points(p: ModelParams, param: str, range_: Sequence[float],
                n_grid: int = 2000) -> list[BifurcationPoint]:
    """Roots of the Hurwitz boundary ``a1 a2 - a0 a3`` in ``param`` over ``range_``.

    Only roots with ``a3 < 0`` and a verified imaginary eigenvalue pair are kept.
    """
    _check_param(param)
    lo, hi = (float(v) for v in range_)
    grid = np.geomspace(lo, hi, n_grid)

    def H(v):
        return hopf_function(p.with_(**{param: v}))

    h = np.array([H(v) for v in grid])
    out = []
    for k in np.nonzero(np.sign(h[:-1]) * np.sign(h[1:]) < 0)[0]:
        v = brentq(H, grid[k], grid[k + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
        q = p.with_(**{param: v})
        if charpoly_coexistence(q).a3 >= 0:
            continue
        ok, eig = _hopf_eigen_ok(q)
        if not ok:
            continue
        out.append(BifurcationPoint(PointKind.HOPF, q, ((param, v),),
                                    state=coexistence_values(q),
                                    eigenvalues=tuple(complex(z) for z in eig)))
    return out


def hopf_locus(fixed: str, value: float, sweep: Iterable[float],
               search: Sequence[float] = (1e-6, 1.0), *, K: float = 100.0,
               base: ModelParams | None = None) -> list[BifurcationPoint]:
    """Hopf curve in the two free parameters with ``fixed`` held at ``value``.

    The first free parameter (in ``m, xi, gamma`` order) takes each value in
    ``sweep``; the second is solved for on ``search``. Sweep values with no
    root contribute nothing, so the curve may be empty.
    """
    _check_param(fixed)
    a, b = [q for q in PARAMS if q != fixed]
    base = base or ModelParams(0.1, 0.01, 0.1, K)
    base = base.with_(**{fixed: value, "K": K})
    if fixed == "gamma" and value >= 1.0:
        return []
    out = []
    for s in sweep:
        for h in hopf_points(base.with_(**{a: float(s)}), b, search):
            out.append(replace(h, location=((a, float(s)), (b, h.value))))
    return out


def bistable_window(p: ModelParams, xi_range: Sequence[float] = (1e-3, 1.0),
                    sn_range: Sequence[float] | None = None, **probe_kw):
    """``(xi_SN, xi_HB)`` and whether ``xi_SN < xi_HB`` opens a bistable window.

    ``xi_HB`` is the first Hopf root in ``xi_range``; ``xi_SN`` the first
    eradication stability change in ``sn_range`` (default ``xi_HB +- 0.05``).
    """
    hopf = hopf_points(p, "xi", xi_range)
    if not hopf:
        return None, None, False
    xi_hb = hopf[0].value
    lo, hi = sn_range or (max(xi_hb - 0.05, 1e-4), xi_hb + 0.05)
    _, folds = eradication_branch_stability(p, "xi", (lo, hi), **probe_kw)
    if not folds:
        return None, xi_hb, False
    xi_sn = folds[0].value
    return xi_sn, xi_hb, xi_sn < xi_hb


# criticality by simulation

def _unstable_side(p: ModelParams, param: str, delta: float) -> int:
    v = getattr(p, param)
    for side in (+1, -1):
        q = p.with_(**{param: v + side * delta})
        if not routh_hurwitz(charpoly_coexistence(q)).stable:
            return side
    return 0


def _hopf_run(p: ModelParams, kick: float, horizon: float, cfg):
    U, I, V = coexistence_values(p)
    rep = integrate_to_outcome(p, (U + kick * p.K, I, V), cfg, horizon=horizon)
    amp = None
    if rep.outcome is Outcome.LIMIT_CYCLE and rep.cycle.U_min > 0:
        amp = math.log(rep.cycle.U_max / rep.cycle.U_min)
    return rep, amp


def classify_hopf(h: BifurcationPoint, param: str | None = None, *, delta: float = 1e-3,
                  kick: float = 1e-3, horizon: float | None = None,
                  cfg: IntegratorConfig | None = None) -> BifurcationPoint:
    """Criticality of a Hopf point by simulation on its unstable side.

    The equilibrium at offsets ``delta`` and ``delta/4`` is perturbed by
    ``kick * K`` in ``U``. A stable cycle whose log-amplitude shrinks with
    the offset is supercritical. Escape to eradication or failed treatment,
    or a cycle that does not shrink, is subcritical.
    """
    param = param or h.location[0][0]
    p = h.params
    side = _unstable_side(p, param, delta)
    diag: dict = {"param": param, "delta": delta}
    if side == 0:
        return replace(h, criticality=Criticality.NOT_APPLICABLE,
                       details={**h.details, **diag, "reason": "no unstable side"})
    v = getattr(p, param)
    omega = max(abs(z.imag) for z in h.eigenvalues) if h.eigenvalues else 0.0
    if horizon is None:
        period = 2 * math.pi / omega if omega > 0 else 100.0
        horizon = max(5000.0, 150 * period)
    runs = []
    for d in (delta, delta / 4):
        q = p.with_(**{param: v + side * d})
        rep, amp = _hopf_run(q, kick, horizon, cfg)
        runs.append((rep.outcome, amp))
    diag["runs"] = [(o.value, a) for o, a in runs]
    escaped = [o in (Outcome.ERADICATION, Outcome.FAILED_TREATMENT) for o, _ in runs]
    (o1, a1), (o2, a2) = runs
    if a1 is not None and a2 is not None:
        crit = Criticality.SUPERCRITICAL if a2 < 0.75 * a1 else Criticality.SUBCRITICAL
    elif any(escaped):
        crit = Criticality.SUBCRITICAL
    else:
        crit = Criticality.NOT_APPLICABLE
    return replace(h, criticality=crit, details={**h.details, **diag})


def locate_generalized_hopf(gamma: float = 0.1, m_range: Sequence[float] = (0.1, 0.5),
                            *, tol: float = 1e-3, K: float = 100.0,
                            xi_range: Sequence[float] = (1e-4, 1.0), **kw) -> BifurcationPoint | None:
    """Bisect the Hopf locus in ``m`` on a change of criticality.

    Returns ``None`` when both ends have the same criticality.
    """
    def crit(m):
        pts = hopf_points(ModelParams(m, 0.01, gamma, K), "xi", xi_range)
        if not pts:
            raise ValueError(f"no Hopf point at m={m}")
        return classify_hopf(pts[0], "xi", **kw)

    lo, hi = (float(x) for x in m_range)
    c_lo, c_hi = crit(lo).criticality, crit(hi).criticality
    if c_lo == c_hi or Criticality.NOT_APPLICABLE in (c_lo, c_hi):
        return None
    inconclusive = []
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        c = crit(mid).criticality
        if c is Criticality.NOT_APPLICABLE:
            inconclusive.append(mid)
            c = c_lo  # move the lower end up; recorded in details
        if c == c_lo:
            lo = mid
        else:
            hi = mid
    m = 0.5 * (lo + hi)
    hp = hopf_points(ModelParams(m, 0.01, gamma, K), "xi", xi_range)[0]
    return BifurcationPoint(PointKind.GENERALIZED_HOPF, hp.params,
                            (("m", m), ("xi", hp.value)), state=hp.state,
                            details={"bracket": (lo, hi), "below": c_lo.value,
                                     "above": c_hi.value, "inconclusive": inconclusive})


# limit cycles

@dataclass(frozen=True)
class CycleMeasurement:
    value: float
    U_max: float
    U_min: float
    period: float
    converged: bool = True


def _measure(p: ModelParams, ic, horizon: float, max_horizon: float, cfg):
    H = horizon
    while True:
        rep = integrate_to_outcome(p, ic, cfg, horizon=H)
        if rep.outcome is not Outcome.UNDETERMINED or H >= max_horizon:
            return rep, H
        H = min(2 * H, max_horizon)


def standard_ic(K: float) -> tuple[float, float, float]:
    return 0.5 * K, 0.1 * K, 0.1 * K


def cycle_measurement(p: ModelParams, param: str, ic=None, *, horizon: float = 3000.0,
                      max_horizon: float = 256000.0,
                      cfg: IntegratorConfig | None = None) -> CycleMeasurement | None:
    ic = ic or standard_ic(p.K)
    rep, H = _measure(p, ic, horizon, max_horizon, cfg)
    v = getattr(p, param)
    if rep.outcome is Outcome.LIMIT_CYCLE:
        c = rep.cycle
        return CycleMeasurement(v, c.U_max, c.U_min, c.period)
    if rep.outcome is not Outcome.UNDETERMINED:
        return None
    traj = integrate(p, ic, H, cfg)
    peaks = find_maxima(traj.times, traj.U)
    if len(peaks) < 2:
        return None
    last = peaks[-CYCLE_PEAKS:]
    tail = traj.times >= last[0][0]
    return CycleMeasurement(v, float(traj.U[tail].max()), float(traj.U[tail].min()),
                            float(np.mean(np.diff([q[0] for q in last]))), converged=False)


def track_cycles(p_base: ModelParams, param: str, values: Iterable[float], *,
                 ic=None, horizon: float = 3000.0, max_horizon: float = 256000.0,
                 cfg: IntegratorConfig | None = None,
                 n_jobs: int = 1) -> list[CycleMeasurement]:
    """Cycle extrema and period at each parameter value; non-oscillatory points are skipped.

    Each run starts from ``ic`` (default ``(0.5K, 0.1K, 0.1K)``); the horizon
    doubles up to ``max_horizon`` while the outcome is undetermined.
    """
    _check_param(param)
    ps = [p_base.with_(**{param: float(v)}) for v in values]
    kw = dict(ic=ic, horizon=horizon, max_horizon=max_horizon, cfg=cfg)
    if n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(n_jobs) as ex:
            futs = [ex.submit(cycle_measurement, q, param, **kw) for q in ps]
            res = [f.result() for f in futs]
    else:
        res = [cycle_measurement(q, param, **kw) for q in ps]
    return [r for r in res if r is not None]


def write_cycles_csv(path, cycles: Iterable[CycleMeasurement]) -> None:
    write_rows(path, ["param", "Umax", "Umin", "period"],
               ((c.value, c.U_max, c.U_min, c.period) for c in cycles))

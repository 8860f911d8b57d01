"""Adaptive integration of the dimensionless model with impulsive viral doses.

Positive populations are advanced in logarithmic coordinates with an
embedded Dormand-Prince 5(4) pair, so relative accuracy holds at every
magnitude: the long-period oscillations of this model spend most of their
time with populations near 1e-130. A population that drops below
``IntegratorConfig.floor`` is declared extinct and pinned to zero, but only
when the resulting zero pattern is invariant under the flow (``U = 0``, or
``I = V = 0``), so a transiently small infected pool is never cut off
while virus and target cells remain.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.signal import find_peaks

from .model import ModelParams, State, as_state, coexistence_values

# Dormand-Prince 5(4) tableau
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                                22 / 525, -1 / 40)

_EXP_CAP = 700.0

ERADICATION_LEVEL = 1e-6
FAILED_U_RTOL = 1e-3
FAILED_IV_LEVEL = 1e-6
COEXISTENCE_VAR = 1e-8
COEXISTENCE_RTOL = 1e-3
CYCLE_RTOL = 0.01
CYCLE_PEAKS = 5


class IntegrationError(RuntimeError):
    """Numerical failure; ``t`` is the time at which the solver gave up."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


@dataclass(frozen=True)
class IntegratorConfig:
    """Solver settings.

    Tolerances apply to log-populations, so ``abs_tol`` is effectively a
    relative tolerance on each population. ``floor`` is the extinction
    threshold; the default sits well below the ~1e-140 troughs of the
    square-wave regime and well above float64 underflow.
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-9
    max_step: float = 5.0
    floor: float = 1e-200
    first_step: float = 1e-2
    min_step: float = 1e-12
    max_steps: int = 5_000_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "first_step", "min_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.floor >= 0:
            raise ValueError("floor must be non-negative")


@dataclass(frozen=True)
class InjectionEvent:
    t: float
    dose: float
    V_before: float
    V_after: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted steps of one integration.

    At an injection time the recorded row holds the post-injection state;
    the pre-injection viral load is kept on the matching ``InjectionEvent``.
    """

    times: np.ndarray
    states: np.ndarray
    events: tuple = ()
    stopped_early: bool = False
    extinctions: tuple = ()

    @property
    def U(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def I(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def V(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def final_state(self) -> State:
        return State(*(float(x) for x in self.states[-1]))

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    def state_at(self, t: float) -> State:
        """State at a recorded time (exact match required)."""
        idx = np.flatnonzero(self.times == t)
        if idx.size == 0:
            raise KeyError(f"t={t} is not a recorded step")
        return State(*(float(x) for x in self.states[idx[-1]]))

    def to_csv(self, path) -> None:
        write_rows(path, ["t", "U", "I", "V"],
                   ([t, *row] for t, row in zip(self.times, self.states)))

    def events_to_csv(self, path) -> None:
        write_rows(path, ["t", "dose"], ([e.t, e.dose] for e in self.events))


def fmt(x) -> str:
    """Fixed 12-significant-digit rendering shared by every CSV writer."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, enum.Enum):
        return str(x.value)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return str(x)


def write_rows(path, header: list[str], rows: Iterable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _log_field(p: ModelParams, alive, sign=1.0):
    m, xi, g, lnK = p.m, p.xi, p.gamma, math.log(p.K)
    aU, aI, aV = alive
    exp = math.exp

    def f(y):
        u, i, v = y
        if aU and aI:
            ls = max(u, i) + math.log1p(exp(-abs(u - i)))
        elif aU:
            ls = u
        else:
            ls = i
        du = di = dv = 0.0
        if aU:
            du = m * (lnK - u)
            if aV:
                du -= exp(min(v - ls, _EXP_CAP))
        if aI:
            di = -xi
            if aU and aV:
                di += exp(min(u + v - i - ls, _EXP_CAP))
        if aV:
            dv = -g
            if aI:
                dv += xi * exp(min(i - v, _EXP_CAP))
        return (sign * du, sign * di, sign * dv)

    return f


def _linear_field(p: ModelParams, sign=1.0):
    m, xi, g, K = p.m, p.xi, p.gamma, p.K

    def f(y):
        U, I, V = (max(c, 0.0) for c in y)
        S = U + I
        inf = U * V / S if S > 0 else 0.0
        growth = m * math.log(K / U) * U if U > 0 else 0.0
        return (sign * (growth - inf), sign * (inf - xi * I), sign * (xi * I - g * V))

    return f


def _dopri_step(f, y, h, k1):
    y0, y1, y2 = y
    a0, a1, a2 = k1
    k2 = f((y0 + h * _A21 * a0, y1 + h * _A21 * a1, y2 + h * _A21 * a2))
    k3 = f(tuple(y[j] + h * (_A31 * k1[j] + _A32 * k2[j]) for j in range(3)))
    k4 = f(tuple(y[j] + h * (_A41 * k1[j] + _A42 * k2[j] + _A43 * k3[j]) for j in range(3)))
    k5 = f(tuple(y[j] + h * (_A51 * k1[j] + _A52 * k2[j] + _A53 * k3[j] + _A54 * k4[j])
                 for j in range(3)))
    k6 = f(tuple(y[j] + h * (_A61 * k1[j] + _A62 * k2[j] + _A63 * k3[j] + _A64 * k4[j]
                             + _A65 * k5[j]) for j in range(3)))
    y_new = tuple(y[j] + h * (_B1 * k1[j] + _B3 * k3[j] + _B4 * k4[j] + _B5 * k5[j]
                              + _B6 * k6[j]) for j in range(3))
    k7 = f(y_new)
    err = tuple(h * (_E1 * k1[j] + _E3 * k3[j] + _E4 * k4[j] + _E5 * k5[j] + _E6 * k6[j]
                     + _E7 * k7[j]) for j in range(3))
    return y_new, k7, err


def _error_norm(err, y, y_new, mask, cfg):
    total = 0.0
    n = 0
    for j in range(3):
        if mask[j]:
            sc = cfg.abs_tol + cfg.rel_tol * max(abs(y[j]), abs(y_new[j]))
            r = abs(err[j]) / sc
            if not r < 1e150:
                return math.inf  # rejected; also covers nan
            total += r * r
            n += 1
    return math.sqrt(total / n) if n else 0.0


STIFF_RATE = 1e8


def _needs_kick(p, U, I, V):
    """Zero components the flow makes positive, or log-rates too fast to resolve."""
    if (I == 0.0 and V > 0.0 and U > 0.0) or (V == 0.0 and I > 0.0):
        return True
    S = U + I
    if U > 0.0 and V > STIFF_RATE * S:
        return True
    if I > 0.0 and U * V > STIFF_RATE * S * I:
        return True
    return V > 0.0 and p.xi * I > STIFF_RATE * V


class _Run:
    """Mutable integration state; one instance per call to :func:`integrate`."""

    def __init__(self, p, s0, cfg, stop_when, reverse):
        self.p = p
        self.cfg = cfg
        self.stop_when = stop_when
        self.sign = -1.0 if reverse else 1.0
        self.lin = list(s0)
        self.t = 0.0
        self.h = cfg.first_step
        self.times = [0.0]
        self.states = [tuple(self.lin)]
        self.extinctions = []
        self.n_steps = 0
        self.log_floor = math.log(cfg.floor) if cfg.floor > 0 else -math.inf
        self.stopped = False

    def record(self):
        if self.times and self.times[-1] == self.t:
            self.states[-1] = tuple(self.lin)
        else:
            self.times.append(self.t)
            self.states.append(tuple(self.lin))

    def _check_stop(self):
        if self.stop_when is not None and self.stop_when(self.t, tuple(self.lin)):
            self.stopped = True

    def _underflow(self, h):
        if h < self.cfg.min_step * max(1.0, abs(self.t)):
            raise IntegrationError(f"step size underflow at t={self.t:.12g}", self.t)

    def _tick(self):
        self.n_steps += 1
        if self.n_steps > self.cfg.max_steps:
            raise IntegrationError(f"exceeded max_steps at t={self.t:.12g}", self.t)

    def kick(self, t_stop):
        """Linear-coordinate steps until no zero component is being forced positive."""
        f = _linear_field(self.p, self.sign)
        cfg = self.cfg
        h = min(t_stop - self.t, 1e-3, self.h)
        y = tuple(self.lin)
        k1 = f(y)
        # populations this far below the state's scale may be driven through zero
        tiny = 1e-12 * max(1.0, sum(y))
        while True:
            self._underflow(h)
            y_new, _, err = _dopri_step(f, y, h, k1)
            norm = _error_norm(err, y, y_new, (True, True, True), cfg)
            if norm <= 1.0 and all(c >= 0.0 or y[j] < tiny for j, c in enumerate(y_new)):
                break
            h *= 0.25
        for j, name in enumerate("UIV"):
            if y_new[j] <= 0.0 and y[j] > 0.0:
                self.extinctions.append((self.t + h, name))
        y_new = tuple(max(c, 0.0) for c in y_new)
        self._tick()
        self.t = self.t + h if t_stop - self.t - h > 1e-15 * max(1.0, t_stop) else t_stop
        self.lin = list(y_new)
        self.record()
        self._check_stop()

    def advance(self, t_stop):
        cfg = self.cfg
        while self.t < t_stop and not self.stopped:
            if _needs_kick(self.p, *self.lin):
                self.kick(t_stop)
                continue
            alive = tuple(c > 0.0 for c in self.lin)
            if not any(alive):
                self.t = t_stop
                self.record()
                return
            f = _log_field(self.p, alive, self.sign)
            y = tuple(math.log(c) if a else 0.0 for c, a in zip(self.lin, alive))
            k1 = f(y)
            while self.t < t_stop and not self.stopped:
                h = min(self.h, cfg.max_step)
                last = self.t + h >= t_stop * (1 - 1e-15) - 1e-15
                if last:
                    h = t_stop - self.t
                y_new, k7, err = _dopri_step(f, y, h, k1)
                norm = _error_norm(err, y, y_new, alive, cfg)
                if not math.isfinite(norm):
                    norm = 1e10
                if norm > 1.0:
                    self.h = h * max(0.2, 0.9 * norm ** -0.2)
                    self._underflow(self.h)
                    continue
                self._tick()
                self.h = h * (5.0 if norm == 0 else min(5.0, max(0.2, 0.9 * norm ** -0.2)))
                self.t = t_stop if last else self.t + h
                y, k1 = y_new, k7
                new_alive = self._extinguish(y, alive)
                self.lin = [math.exp(y[j]) if new_alive[j] else 0.0 for j in range(3)]
                self.record()
                self._check_stop()
                if new_alive != alive:
                    break

    def _extinguish(self, y, alive):
        lf = self.log_floor
        aU, aI, aV = alive
        if aU and y[0] < lf:
            aU = False
        if not aU:
            if aI and y[1] < lf:
                aI = False
            if not aI and aV and y[2] < lf:
                aV = False
        elif aI and aV and y[1] < lf and y[2] < lf:
            aI = aV = False
        new = (aU, aI, aV)
        for j, name in enumerate("UIV"):
            if alive[j] and not new[j]:
                self.extinctions.append((self.t, name))
        return new


def integrate(p: ModelParams, s0, t_end: float, cfg: IntegratorConfig | None = None,
              schedule=None, *, checkpoints: Iterable[float] = (),
              stop_when: Callable | None = None, reverse: bool = False) -> Trajectory:
    """Integrate from ``s0`` over ``[0, t_end]``.

    ``schedule`` is anything with an ``impulses()`` method yielding
    ``(time, dose)`` pairs (see :class:`oncogompertz.protocol.InjectionSchedule`).
    Impulse times and ``checkpoints`` are hit exactly as step boundaries.
    ``stop_when(t, (U, I, V))`` may end the run early. With ``reverse`` the
    negated vector field is integrated (time runs backwards); extinction is
    disabled in that mode.
    """
    cfg = cfg or IntegratorConfig()
    s0 = as_state(s0)
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if reverse:
        cfg = IntegratorConfig(cfg.rel_tol, cfg.abs_tol, cfg.max_step, 0.0, cfg.first_step,
                               cfg.min_step, cfg.max_steps)
    impulses: dict[float, float] = {}
    if schedule is not None:
        for t_imp, dose in schedule.impulses():
            if t_imp < 0 or t_imp > t_end:
                raise ValueError(f"injection at t={t_imp} lies outside [0, {t_end}]")
            impulses[float(t_imp)] = impulses.get(float(t_imp), 0.0) + float(dose)
    stops = sorted({float(t_end), *impulses, *(float(c) for c in checkpoints if 0 < c < t_end)})

    run = _Run(p, s0, cfg, stop_when, reverse)
    events = []

    def inject(t):
        dose = impulses.pop(t, None)
        if dose is None:
            return
        before = run.lin[2]
        run.lin[2] = before + dose
        events.append(InjectionEvent(t, dose, before, run.lin[2]))
        run.record()
        run.h = cfg.first_step

    inject(0.0)
    for t_stop in stops:
        if t_stop <= 0:
            continue
        run.advance(t_stop)
        if run.stopped:
            break
        inject(t_stop)

    return Trajectory(
        times=np.asarray(run.times, dtype=float),
        states=np.asarray(run.states, dtype=float),
        events=tuple(events),
        stopped_early=run.stopped,
        extinctions=tuple(run.extinctions),
    )


class Outcome(str, enum.Enum):
    ERADICATION = "eradication"
    COEXISTENCE = "coexistence"
    LIMIT_CYCLE = "limit_cycle"
    FAILED_TREATMENT = "failed_treatment"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class CycleStats:
    period: float
    U_max: float
    U_min: float
    peak_times: tuple
    peak_values: tuple


@dataclass(frozen=True)
class OutcomeReport:
    outcome: Outcome
    final_state: State
    U_max: float
    U_min: float
    cycle: CycleStats | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)


def _refine_peak(t, y, k):
    """Vertex of the parabola through three samples around index ``k``."""
    t0, t1, t2 = t[k - 1], t[k], t[k + 1]
    y0, y1, y2 = y[k - 1], y[k], y[k + 1]
    d1 = (y1 - y0) / (t1 - t0)
    d2 = (y2 - y1) / (t2 - t1)
    a = (d2 - d1) / (t2 - t0)
    if a >= 0:
        return t1, y1
    tv = 0.5 * (t0 + t1) - d1 / (2 * a)
    if not t0 <= tv <= t2:
        return t1, y1
    return tv, a * (tv - t0) * (tv - t1) + d1 * (tv - t0) + y0


def find_maxima(times, values, rel_prominence: float = 0.05, log: bool = True):
    """Significant local maxima of a sampled signal, refined parabolically.

    With ``log`` the peaks are located on ``ln(values)``; this keeps
    near-zero troughs and plateau noise from producing spurious maxima.
    Returns a list of ``(time, value)``.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 3:
        return []
    if log:
        pos = values > 0
        if not pos.all():
            times, values = times[pos], values[pos]
            if times.size < 3:
                return []
        sig = np.log(values)
    else:
        sig = values
    span = float(sig.max() - sig.min())
    if span < 1e-6:
        return []
    idx, _ = find_peaks(sig, prominence=max(rel_prominence * span, 1e-7))
    out = []
    for k in idx:
        tk, sk = _refine_peak(times, sig, k)
        out.append((float(tk), float(math.exp(sk) if log else sk)))
    return out


def detect_cycle(times, U, n_peaks: int = CYCLE_PEAKS, rtol: float = CYCLE_RTOL):
    """Cycle statistics from the last ``n_peaks`` maxima of ``U``, or ``None``.

    The maxima must agree in height and in spacing to within ``rtol``.
    """
    peaks = find_maxima(times, U)
    if len(peaks) < n_peaks:
        return None
    last = peaks[-n_peaks:]
    pt = np.array([q[0] for q in last])
    pv = np.array([q[1] for q in last])
    gaps = np.diff(pt)
    if gaps.min() <= 0:
        return None
    if (pv.max() - pv.min()) > rtol * pv.max():
        return None
    if (gaps.max() - gaps.min()) > rtol * gaps.max():
        return None
    times = np.asarray(times)
    U = np.asarray(U)
    window = (times >= pt[0]) & (times <= pt[-1])
    return CycleStats(
        period=float(gaps.mean()),
        U_max=float(U[window].max()),
        U_min=float(U[window].min()),
        peak_times=tuple(float(x) for x in pt),
        peak_values=tuple(float(x) for x in pv),
    )


def _tail_mask(times, t_end, fraction):
    return times >= t_end - fraction * t_end


def classify_trajectory(p: ModelParams, traj: Trajectory, horizon: float | None = None,
                        analysis_start: float = 0.0) -> OutcomeReport:
    """Label the asymptotic regime of a trajectory.

    Rules, in order: eradication (``U`` extinct and ``U+I+V`` below 1e-6),
    failed treatment (``U`` within 1e-3 K of ``K`` with ``I+V`` below 1e-6
    and the virus either extinct or unable to grow), coexistence (tail
    variance below 1e-8 and within 1e-3 of the closed-form equilibrium),
    limit cycle (five successive ``U`` maxima agreeing to 1%), otherwise
    undetermined.
    """
    horizon = float(horizon if horizon is not None else traj.t_final)
    t, X = traj.times, traj.states
    sel = t >= analysis_start
    U_win = X[sel, 0] if sel.any() else X[:, 0]
    U_max, U_min = float(U_win.max()), float(U_win.min())
    final = traj.final_state
    diag = {"t_final": traj.t_final, "stopped_early": traj.stopped_early,
            "extinctions": [list(e) for e in traj.extinctions]}

    def report(outcome, cycle=None, **extra):
        diag.update(extra)
        return OutcomeReport(outcome, final, U_max, U_min, cycle, diag)

    # extinction of U is absorbing: I and V can only decay afterwards
    if final.U == 0.0:
        tail = X[_tail_mask(t, traj.t_final, 0.1)]
        if traj.stopped_early or tail.sum(axis=1).max() < ERADICATION_LEVEL:
            return report(Outcome.ERADICATION)
        return report(Outcome.ERADICATION, note="U extinct; residual virus still decaying")

    tail = X[_tail_mask(t, traj.t_final, 0.1) & sel]
    if tail.size:
        near_K = np.abs(tail[:, 0] - p.K).max() < FAILED_U_RTOL * p.K
        no_virus = (tail[:, 1] + tail[:, 2]).max() < FAILED_IV_LEVEL
        virus_gone = final.I == 0.0 and final.V == 0.0
        if near_K and no_virus and (virus_gone or p.gamma > 1.0):
            return report(Outcome.FAILED_TREATMENT)

    if p.gamma < 1.0 and traj.t_final >= 0.5 * horizon:
        tail = X[_tail_mask(t, traj.t_final, 0.2) & sel]
        target = np.array(coexistence_values(p))
        if tail.shape[0] >= 2:
            var_ok = bool((tail.var(axis=0) < COEXISTENCE_VAR).all())
            close = bool((np.abs(X[-1] - target) <= COEXISTENCE_RTOL * np.abs(target)).all())
            if var_ok and close:
                return report(Outcome.COEXISTENCE)

    cyc = detect_cycle(t[sel], X[sel, 0])
    if cyc is not None:
        return report(Outcome.LIMIT_CYCLE, cyc)
    return report(Outcome.UNDETERMINED)


def certain_outcome(p: ModelParams) -> Callable:
    """Stop predicate: true once the remaining evolution is known exactly."""
    K = p.K

    def stop(t, s):
        U, I, V = s
        if U == 0.0 and I + V < ERADICATION_LEVEL:
            return True
        return I == 0.0 and V == 0.0 and abs(U - K) < FAILED_U_RTOL * K

    return stop


def integrate_to_outcome(p: ModelParams, s0, cfg: IntegratorConfig | None = None,
                         schedule=None, horizon: float = 3000.0) -> OutcomeReport:
    last_dose = 0.0
    if schedule is not None:
        times = [t for t, _ in schedule.impulses()]
        last_dose = max(times) if times else 0.0
    traj = integrate(p, s0, horizon, cfg, schedule, stop_when=certain_outcome(p))
    return classify_trajectory(p, traj, horizon, analysis_start=last_dose)

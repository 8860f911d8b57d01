"""Impulsive virus injection protocols and dose/interval sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .integrator import (CycleStats, IntegratorConfig, Outcome, OutcomeReport, Trajectory,
                         certain_outcome, classify_trajectory, find_maxima, integrate,
                         integrate_to_outcome, write_rows)
from .model import ModelParams, State, as_state


class SweepError(RuntimeError):
    pass


@dataclass(frozen=True)
class InjectionSchedule:
    """``n`` impulses of ``D0 / n`` at ``t0, t0 + kappa, ..., t0 + (n-1) kappa``."""

    D0: float
    n: int = 1
    kappa: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        if not (self.D0 > 0 and math.isfinite(self.D0)):
            raise ValueError(f"D0 must be positive, got {self.D0!r}")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if self.n > 1 and not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be positive for n > 1, got {self.kappa!r}")
        if not (self.t0 >= 0 and math.isfinite(self.t0)):
            raise ValueError(f"t0 must be non-negative, got {self.t0!r}")

    @property
    def dose(self) -> float:
        return self.D0 / self.n

    @property
    def t_last(self) -> float:
        return self.t0 + (self.n - 1) * self.kappa

    def times(self) -> list[float]:
        return [self.t0 + k * self.kappa for k in range(int(self.n))]

    def impulses(self):
        d = self.dose
        return [(t, d) for t in self.times()]

    def validate(self, horizon: float) -> None:
        if self.t_last > horizon:
            raise ValueError(f"last injection at t={self.t_last} is past the horizon {horizon}")


def run_protocol(p: ModelParams, s0, sched: InjectionSchedule | None,
                 horizon: float = 3000.0, cfg: IntegratorConfig | None = None,
                 *, stop_early: bool = True) -> tuple[OutcomeReport, Trajectory]:
    """Integrate with injections and classify; extrema are taken after the last dose."""
    if sched is not None:
        sched.validate(horizon)
    stop = certain_outcome(p) if stop_early else None
    traj = integrate(p, s0, horizon, cfg, sched, stop_when=stop)
    start = sched.t_last if sched is not None else 0.0
    return classify_trajectory(p, traj, horizon, analysis_start=start), traj


# kappa sweep

@dataclass(frozen=True)
class KappaRecord:
    kappa: float
    U_max: float
    U_min: float
    V_max: float
    outcome: Outcome


@dataclass(frozen=True)
class KappaSweep:
    baseline: CycleStats
    reference: State
    t_to_min: float
    D0: float
    records: tuple

    def nearest_to_min(self) -> KappaRecord:
        """Record whose first-to-second injection gap is closest to the time of the U minimum."""
        return min(self.records, key=lambda r: abs(r.kappa - self.t_to_min))

    def to_csv(self, path) -> None:
        write_rows(path, ["kappa", "maxU", "minU", "maxV"],
                   ((r.kappa, r.U_max, r.U_min, r.V_max) for r in self.records))


def settle(p: ModelParams, s0, horizon: float, max_horizon: float,
           cfg: IntegratorConfig | None = None) -> OutcomeReport:
    """:func:`integrate_to_outcome`, doubling the horizon while the outcome is undetermined."""
    H = horizon
    while True:
        rep = integrate_to_outcome(p, s0, cfg, horizon=H)
        if rep.outcome is not Outcome.UNDETERMINED or H >= max_horizon:
            return rep
        H = min(2 * H, max_horizon)


def cycle_reference(p: ModelParams, ic, horizon: float = 3000.0,
                    max_horizon: float = 96000.0,
                    cfg: IntegratorConfig | None = None) -> tuple[State, CycleStats, float]:
    """State at a ``U`` maximum of the converged cycle, its stats, and time to the next minimum."""
    rep = settle(p, ic, horizon, max_horizon, cfg)
    if rep.outcome is not Outcome.LIMIT_CYCLE:
        raise SweepError(f"baseline did not converge to a limit cycle ({rep.outcome.value})")
    t_peak = rep.cycle.peak_times[-2]
    ref = integrate(p, ic, t_peak, cfg).final_state
    # locate the minimum over one period from the reference
    one = integrate(p, ref, rep.cycle.period, cfg)
    t_min = float(one.times[int(np.argmin(one.U))])
    return ref, rep.cycle, t_min


def _kappa_point(p, ref, D0, n, kappa, window, tail, max_tail, cfg):
    sched = InjectionSchedule(D0, n, kappa)
    t_last = sched.t_last
    traj = integrate(p, ref, t_last + window, cfg, sched)
    sel = traj.times >= t_last
    X = traj.states[sel]
    # long-term fate: continue from the post-injection state
    after = integrate(p, ref, t_last, cfg, sched).final_state if t_last > 0 else traj.states[0]
    rep = settle(p, after, tail, max_tail, cfg)
    return KappaRecord(float(kappa), float(X[:, 0].max()), float(X[:, 0].min()),
                       float(X[:, 2].max()), rep.outcome)


def kappa_sweep(p: ModelParams, D0: float, kappas: Iterable[float], n: int = 2, *,
                ic=None, window_periods: float = 3.0, tail: float = 3000.0,
                max_tail: float = 96000.0, cfg: IntegratorConfig | None = None,
                n_jobs: int = 1) -> KappaSweep:
    """Vary the gap between injections started at a ``U`` maximum of the cycle.

    Extrema are measured over ``window_periods`` baseline periods after the
    last injection. The long-term outcome is classified from the state right
    after the last injection, with the horizon doubled from ``tail`` up to
    ``max_tail`` while undetermined.
    """
    ic = ic or (0.5 * p.K, 0.1 * p.K, 0.1 * p.K)
    ref, cyc, t_min = cycle_reference(p, ic, cfg=cfg)
    window = window_periods * cyc.period
    ks = sorted(float(k) for k in kappas)
    args = [(p, ref, D0, n, k, window, tail, max_tail, cfg) for k in ks]
    records = _map(_kappa_point, args, n_jobs)
    return KappaSweep(cyc, ref, t_min, D0, tuple(records))


# dosage sweep and basins

@dataclass(frozen=True)
class DoseRecord:
    V0: float
    report: OutcomeReport


@dataclass(frozen=True)
class DosageSweep:
    U0: float
    I0: float
    records: tuple

    def intervals(self) -> list[tuple[Outcome, float, float]]:
        """Maximal runs of equal outcome as ``(outcome, first V0, last V0)``."""
        out: list[tuple[Outcome, float, float]] = []
        for r in self.records:
            o = r.report.outcome
            if out and out[-1][0] is o:
                out[-1] = (o, out[-1][1], r.V0)
            else:
                out.append((o, r.V0, r.V0))
        return out

    def pattern(self) -> list[Outcome]:
        return [o for o, _, _ in self.intervals()]

    def to_csv(self, path) -> None:
        write_rows(path, ["V0", "outcome", "finalU", "finalI", "finalV"],
                   ((r.V0, r.report.outcome, *r.report.final_state) for r in self.records))


def _dose_point(p, s0, horizon, max_horizon, cfg):
    return settle(p, s0, horizon, max_horizon, cfg)


def dosage_sweep(p: ModelParams, U0: float, I0: float,
                 V0_range: Sequence[float] = (20.0, 120.0), steps: int = 11, *,
                 horizon: float = 3000.0, max_horizon: float = 96000.0,
                 cfg: IntegratorConfig | None = None, n_jobs: int = 1) -> DosageSweep:
    """Outcome for each initial viral load on an even grid over ``V0_range``.

    Undetermined runs are repeated with a doubled horizon up to ``max_horizon``.
    """
    lo, hi = (float(v) for v in V0_range)
    if not 0 < lo <= hi:
        raise ValueError("V0 range must be positive and ordered")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    V0s = np.linspace(lo, hi, steps) if steps > 1 else np.array([lo])
    reps = _map(_dose_point, [(p, (U0, I0, float(v)), horizon, max_horizon, cfg) for v in V0s], n_jobs)
    return DosageSweep(float(U0), float(I0),
                       tuple(DoseRecord(float(v), r) for v, r in zip(V0s, reps)))


@dataclass(frozen=True)
class BasinCell:
    U0: float
    V0: float
    outcome: Outcome


def basin_slice(p: ModelParams, U0_values: Iterable[float], V0_values: Iterable[float],
                I0: float = 10.0, *, horizon: float = 3000.0, max_horizon: float = 96000.0,
                cfg: IntegratorConfig | None = None, n_jobs: int = 1) -> list[BasinCell]:
    """Outcome label on a ``(U0, V0)`` grid, ``U0`` outermost."""
    cells = [(float(u), float(v)) for u in U0_values for v in V0_values]
    reps = _map(_dose_point, [(p, (u, I0, v), horizon, max_horizon, cfg) for u, v in cells], n_jobs)
    return [BasinCell(u, v, r.outcome) for (u, v), r in zip(cells, reps)]


def write_basin_csv(path, cells: Iterable[BasinCell]) -> None:
    write_rows(path, ["U0", "V0", "outcome"], ((c.U0, c.V0, c.outcome) for c in cells))


def _map(fn, args: list, n_jobs: int) -> list:
    if n_jobs > 1 and len(args) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(n_jobs) as ex:
            futs = [ex.submit(fn, *a) for a in args]
            return [f.result() for f in futs]
    return [fn(*a) for a in args]

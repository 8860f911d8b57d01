import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oncogompertz.integrator import Outcome, integrate
from oncogompertz.model import ModelParams
from oncogompertz.protocol import (InjectionSchedule, SweepError, basin_slice, cycle_reference,
                                   dosage_sweep, kappa_sweep, run_protocol, write_basin_csv)

SUB = ModelParams(0.5, 0.136, 0.1)


@pytest.mark.parametrize("kw", [dict(D0=0.0), dict(D0=-1.0), dict(D0=1.0, n=0),
                                dict(D0=1.0, n=1.5), dict(D0=1.0, n=2),
                                dict(D0=1.0, t0=-1.0), dict(D0=float("inf"))])
def test_schedule_validation(kw):
    with pytest.raises(ValueError):
        InjectionSchedule(**kw)


def test_schedule_times():
    s = InjectionSchedule(12.0, 3, 4.0, 1.0)
    assert s.times() == [1.0, 5.0, 9.0]
    assert s.impulses() == [(1.0, 4.0), (5.0, 4.0), (9.0, 4.0)]
    with pytest.raises(ValueError):
        s.validate(8.0)


@settings(max_examples=30, deadline=None)
@given(D0=st.floats(1e-3, 500.0), n=st.integers(1, 6), kappa=st.floats(0.1, 30.0),
       t0=st.floats(0.0, 20.0))
def test_total_injected_dose_is_exact(D0, n, kappa, t0):
    sched = InjectionSchedule(D0, n, kappa, t0)
    traj = integrate(ModelParams(0.1, 0.06, 0.1), (50.0, 10.0, 10.0),
                     sched.t_last + 1.0, schedule=sched)
    assert len(traj.events) == n
    jumps = sum(e.V_after - e.V_before for e in traj.events)
    assert jumps == pytest.approx(D0, rel=4 * n * np.finfo(float).eps)


def test_single_dose_at_start_is_raised_initial_condition():
    p = ModelParams(0.1, 0.06, 0.1)
    a, _ = run_protocol(p, (50.0, 10.0, 10.0), InjectionSchedule(20.0), 2000.0, stop_early=False)
    b, _ = run_protocol(p, (50.0, 10.0, 30.0), None, 2000.0, stop_early=False)
    assert a.outcome is b.outcome
    np.testing.assert_allclose(tuple(a.final_state), tuple(b.final_state), rtol=1e-10)


def test_cycle_reference_requires_cycle():
    with pytest.raises(SweepError):
        cycle_reference(ModelParams(0.1, 0.01, 0.1), (50.0, 10.0, 10.0))


@pytest.mark.slow
def test_outcome_invariant_in_cycle_regime():
    p = ModelParams(0.2, 0.06915, 0.1)
    for D0 in (5.0, 50.0):
        sweep = kappa_sweep(p, D0, [10.0, 40.0, 80.0])
        assert {r.outcome for r in sweep.records} == {Outcome.LIMIT_CYCLE}
        assert all(r.U_min <= r.U_max for r in sweep.records)


@pytest.mark.parametrize("s0,expected", [((60.0, 10.0, 40.0), Outcome.COEXISTENCE),
                                         ((40.0, 10.0, 5.0), Outcome.ERADICATION)])
def test_bistable_initial_conditions(s0, expected):
    rep, _ = run_protocol(SUB, s0, None, 40000.0)
    assert rep.outcome is expected


def test_basin_reproducible_and_ordered(tmp_path):
    U0s, V0s = [40.0, 60.0], [5.0, 40.0]
    a = basin_slice(SUB, U0s, V0s)
    b = basin_slice(SUB, U0s, V0s)
    assert a == b
    assert [(c.U0, c.V0) for c in a] == [(u, v) for u in U0s for v in V0s]
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_basin_csv(pa, a)
    write_basin_csv(pb, b)
    assert pa.read_bytes() == pb.read_bytes()


@pytest.mark.slow
def test_basin_single_valued_outside_window():
    # xi_HB is about 0.1388 at m = 0.5
    cells = basin_slice(SUB.with_(xi=0.15), [20.0, 50.0, 80.0, 100.0], [5.0, 40.0, 100.0])
    assert {c.outcome for c in cells} == {Outcome.ERADICATION}


def test_dosage_sweep_high_tumour_load_eradicates():
    sweep = dosage_sweep(SUB.with_(xi=0.138), 100.0, 10.0)
    assert sweep.pattern() == [Outcome.ERADICATION]
    assert [r.V0 for r in sweep.records] == pytest.approx(np.linspace(20, 120, 11))


def test_dosage_sweep_intervals_partition_grid():
    sweep = dosage_sweep(SUB.with_(xi=0.138), 50.0, 10.0, steps=6)
    iv = sweep.intervals()
    assert iv[0][1] == 20.0 and iv[-1][2] == 120.0
    assert all(a[0] is not b[0] for a, b in zip(iv, iv[1:]))
    assert set(sweep.pattern()) <= {Outcome.ERADICATION, Outcome.COEXISTENCE}


def test_dosage_sweep_validation():
    with pytest.raises(ValueError):
        dosage_sweep(SUB, 50.0, 10.0, (120.0, 20.0))
    with pytest.raises(ValueError):
        dosage_sweep(SUB, 50.0, 10.0, steps=0)

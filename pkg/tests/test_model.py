import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oncogompertz.model import (Classification, DimensionalParams, EquilibriumKind,
                                ModelDomainError, ModelParams, State, classify_eigenvalues,
                                coexistence_state, coexistence_values, equilibria,
                                gompertz_solution, jacobian, nondimensionalize,
                                param_derivative, rhs, rhs_dimensional, scale_state,
                                virions_to_state)

P = ModelParams(0.1, 0.01, 0.1)
USTAR_REF = 100.0 * math.exp(-0.9)  # 40.6569659740599


def test_rhs_hand_computed():
    du, di, dv = rhs(P, (50.0, 10.0, 10.0))
    inf = 50.0 * 10.0 / 60.0
    assert du == pytest.approx(0.1 * math.log(2.0) * 50.0 - inf, rel=1e-14)
    assert di == pytest.approx(inf - 0.1, rel=1e-14)
    assert dv == pytest.approx(-1.0 + 0.1, rel=1e-14)


def test_rhs_rejects_zero_tumour():
    with pytest.raises(ModelDomainError):
        rhs(P, (0.0, 1.0, 1.0))
    with pytest.raises(ModelDomainError):
        jacobian(P, (0.0, 1.0, 1.0))


@pytest.mark.parametrize("bad", [(-1.0, 0, 0), (1.0, float("nan"), 0), (1.0, 0, float("inf"))])
def test_state_validation(bad):
    with pytest.raises(ValueError):
        State(*bad)


@pytest.mark.parametrize("field", ["m", "xi", "gamma", "K"])
def test_params_must_be_positive(field):
    kw = {"m": 0.1, "xi": 0.01, "gamma": 0.1, "K": 100.0, field: 0.0}
    with pytest.raises(ValueError):
        ModelParams(**kw)


def test_nondimensionalize():
    d = DimensionalParams(r=0.2, K=1e6, beta=0.5, alpha=4.0, d_I=0.1, d_V=0.3)
    p = nondimensionalize(d)
    assert (p.m, p.xi, p.gamma, p.K) == pytest.approx((0.1, 0.05, 0.15, 1e6))
    assert nondimensionalize(d, rescale_by_K=True).K == 1.0


def test_dimensional_matches_dimensionless_in_scaled_time():
    d = DimensionalParams(r=0.3, K=100.0, beta=0.2, alpha=5.0, d_I=0.05, d_V=0.4)
    p = nondimensionalize(d)
    s_dim = (30.0, 5.0, 40.0)  # raw virions
    s = virions_to_state(s_dim, d.alpha)
    f_dim = np.array(rhs_dimensional(d, s_dim))
    f = np.array(rhs(p, s))
    # d/dt' = (1/beta_hat) d/dt, and V = Vhat / alpha
    np.testing.assert_allclose(f_dim[:2] / d.beta_hat, f[:2], rtol=1e-13)
    np.testing.assert_allclose(f_dim[2] / d.alpha / d.beta_hat, f[2], rtol=1e-13)


def test_scaling_by_K_is_a_symmetry():
    s = State(30.0, 20.0, 5.0)
    f = np.array(rhs(P, s))
    f1 = np.array(rhs(P.with_(K=1.0), scale_state(s, P.K)))
    np.testing.assert_allclose(f1 * P.K, f, rtol=1e-13)


def test_coexistence_closed_form():
    U, I, V = coexistence_values(P)
    assert U == pytest.approx(USTAR_REF, rel=1e-13)
    assert I == pytest.approx(U * 9.0, rel=1e-13)
    assert V == pytest.approx(0.01 * I / 0.1, rel=1e-13)
    assert max(abs(x) for x in rhs(P, (U, I, V))) < 1e-12


@given(m=st.floats(1e-3, 2.0), xi=st.floats(1e-3, 1.0), g=st.floats(1e-3, 0.999))
def test_coexistence_is_an_equilibrium(m, xi, g):
    p = ModelParams(m, xi, g)
    s = coexistence_state(p)
    if s is None or s.U < 1e-250:
        return
    f = np.array(rhs(p, s))
    assert np.all(np.abs(f) <= 1e-9 * max(1.0, s.total))


def test_equilibria_structure():
    eqs = equilibria(P)
    assert [e.kind for e in eqs] == [EquilibriumKind.FAILED_TREATMENT,
                                     EquilibriumKind.COEXISTENCE, EquilibriumKind.ERADICATION]
    failed, coex, erad = eqs
    assert failed.values == (100.0, 0.0, 0.0)
    assert coex.physical and coex.values[0] == pytest.approx(USTAR_REF)
    assert coex.classification is Classification.STABLE_NODE
    assert failed.classification is Classification.SADDLE
    assert erad.classification is Classification.INDETERMINATE
    assert all(math.isnan(z.real) for z in erad.eigenvalues)


def test_coexistence_flagged_non_physical_at_gamma_one_and_above():
    for g in (1.0, 1.5):
        coex = equilibria(P.with_(gamma=g))[1]
        assert not coex.physical
        if g > 1:
            assert coex.values[1] < 0 and coex.state is None
    assert coexistence_state(P.with_(gamma=1.5)) is None


def test_failed_treatment_eigenvalues_closed_form():
    for xi, g in [(0.01, 0.1), (0.2, 0.5), (0.05, 2.0)]:
        p = ModelParams(0.1, xi, g)
        eig = np.sort_complex(np.linalg.eigvals(jacobian(p, (p.K, 0, 0))))
        quad = np.roots([1.0, xi + g, xi * (g - 1.0)])
        expected = np.sort_complex(np.concatenate([[-0.1], quad]).astype(complex))
        np.testing.assert_allclose(eig, expected, atol=1e-12)


def _fd_jacobian(p, s, h=1e-6):
    x = np.array(s, float)
    J = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        step = h * max(1.0, abs(x[j]))
        e[j] = step
        J[:, j] = (np.array(rhs(p, x + e)) - np.array(rhs(p, x - e))) / (2 * step)
    return J


@given(U=st.floats(1e-2, 150.0), I=st.floats(0.0, 150.0), V=st.floats(0.0, 150.0),
       m=st.floats(1e-3, 1.0), xi=st.floats(1e-3, 1.0), g=st.floats(1e-3, 2.0))
def test_jacobian_matches_finite_differences(U, I, V, m, xi, g):
    p = ModelParams(m, xi, g)
    s = (U, I + 1e-3, V + 1e-3)  # keep central differences inside the domain
    J = jacobian(p, s)
    Jfd = _fd_jacobian(p, s)
    np.testing.assert_allclose(J, Jfd, atol=1e-6 * max(1.0, np.abs(J).max()), rtol=1e-6)


@pytest.mark.parametrize("name", ["m", "xi", "gamma"])
def test_param_derivative(name):
    s = (30.0, 20.0, 5.0)
    h = 1e-7
    v = getattr(P, name)
    fd = (np.array(rhs(P.with_(**{name: v + h}), s)) - np.array(rhs(P.with_(**{name: v - h}), s))) / (2 * h)
    np.testing.assert_allclose(param_derivative(P, s, name), fd, atol=1e-6)


def test_gompertz_solution_limits():
    assert gompertz_solution(P, 10.0, 0.0) == pytest.approx(10.0)
    assert gompertz_solution(P, 10.0, 1e3) == pytest.approx(100.0)


@pytest.mark.parametrize("eigs,expected", [
    ([-1, -2, -3], Classification.STABLE_NODE),
    ([-1, -0.1 + 1j, -0.1 - 1j], Classification.STABLE_SPIRAL),
    ([1, 2, 3], Classification.UNSTABLE_NODE),
    ([-1, 0.1 + 1j, 0.1 - 1j], Classification.UNSTABLE_SPIRAL),
    ([-1, 2, -3], Classification.SADDLE),
    ([-1, 0.0, -3], Classification.INDETERMINATE),
])
def test_classify_eigenvalues(eigs, expected):
    assert classify_eigenvalues(eigs) is expected

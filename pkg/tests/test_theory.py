import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from patrolgrad import theory
from oracles import R_at
from patrolgrad.ipa import grad_J

E = np.array([1.0, 0.0, 0.0, 1.0])


def test_case_one_substitution():
    m = theory.build_cycle_map(0.3, 1.0, 0.3, 1.0)
    (L1, U1), *_ = m.parts
    assert L1[0, 0] == pytest.approx(-3 / 7, abs=1e-15)
    assert L1[1, 1] == pytest.approx(-3 / 7, abs=1e-15)
    assert U1[0] == pytest.approx(10 / 7, abs=1e-15)


def test_composition_matches_formula():
    m = theory.build_cycle_map(0.2, 1.5, 0.4, 2.0)
    (L1, U1), (L2, U2), (L3, U3), (L4, U4) = m.parts
    assert np.allclose(m.Lam, L4 @ L3 @ L2 @ L1, atol=1e-14)
    U = L4 @ L3 @ L2 @ U1 + L4 @ L3 @ U2 + L4 @ U3 + U4
    assert np.allclose(m.U, U, atol=1e-14)


def test_equal_rates_rejected():
    with pytest.raises(ValueError):
        theory.build_cycle_map(1.0, 1.0, 0.3, 1.0)
    with pytest.raises(ValueError):
        theory.closed_form_eigenvalues(1.0)


@pytest.mark.parametrize("rho", [0.05, 0.1, 0.2, 0.3, 0.4, 0.45, 0.49])
def test_homogeneous_equilibrium(rho):
    m = theory.build_cycle_map(rho, 1.0, rho, 1.0)
    x = theory.equilibrium(m)
    assert np.max(np.abs(x - E)) < 1e-10
    assert np.max(np.abs((np.eye(4) - m.Lam) @ x - m.U)) < 1e-12


@given(B=st.tuples(st.floats(0.2, 10.0), st.floats(0.2, 10.0)),
       frac=st.tuples(st.floats(0.01, 0.49), st.floats(0.01, 0.49)))
@settings(max_examples=60)
def test_heterogeneous_equilibrium(B, frac):
    A = (B[0] * frac[0], B[1] * frac[1])
    m = theory.build_cycle_map(A[0], B[0], A[1], B[1])
    ref = scipy.linalg.solve(np.eye(4) - m.Lam, m.U)
    assert np.allclose(ref, E, atol=1e-8)
    assert np.allclose(theory.equilibrium(m), ref, atol=1e-8)


def test_singular_equilibrium_reported():
    m = theory.build_cycle_map(0.5, 1.0, 0.5, 1.0)
    with pytest.raises(np.linalg.LinAlgError):
        theory.equilibrium(m)
    assert theory.spectral_report(0.5, 1.0).equilibrium is None


def test_unit_modulus_at_half():
    assert abs(theory.spectral_report(0.5, 1.0).max_norm - 1.0) < 1e-6
    assert theory.spectral_report(0.3, 1.0).max_norm < 1.0


def test_grid_monotone_and_closed_form():
    reps = theory.spectral_scan(np.round(np.arange(1, 10) * 0.05, 12))
    norms = [r.max_norm for r in reps]
    assert all(b > a for a, b in zip(norms, norms[1:]))
    for r in reps:
        assert theory.eig_match_error(r.eigenvalues, r.closed_form) < 1e-8


@given(rho=st.floats(0.01, 0.95).filter(lambda r: abs(r - 0.5) > 1e-3))
@settings(max_examples=60)
def test_closed_form_anywhere(rho):
    r = theory.spectral_report(rho, 1.0)
    assert theory.eig_match_error(r.eigenvalues, r.closed_form) < 1e-8


def test_repeated_pairs():
    z = theory.closed_form_eigenvalues(0.3)
    assert z[0] == z[1] and z[2] == z[3]
    eig = np.linalg.eigvals(theory.build_cycle_map(0.3, 1, 0.3, 1).Lam)
    for w in z[::2]:
        assert np.sum(np.abs(eig - w) < 1e-6) == 2


def test_critical_ratio():
    assert abs(theory.critical_rho() - 0.5) < 1e-3


def test_iteration_converges():
    it = theory.converge_gradients(theory.build_cycle_map(0.3, 1, 0.3, 1), 200)
    assert not it.diverged
    assert it.xs.shape == (201, 4)
    assert np.max(np.abs(it.xs[-1] - E)) < 1e-3


def test_fixed_point_stationary():
    m = theory.build_cycle_map(0.3, 1, 0.3, 1)
    it = theory.converge_gradients(m, 25, x0=theory.equilibrium(m))
    assert np.max(np.abs(it.xs - E)) < 1e-12


def test_divergence_flagged():
    it = theory.converge_gradients(theory.build_cycle_map(0.6, 1, 0.6, 1), 200)
    assert it.diverged and it.diverged_at is not None
    assert len(it.xs) == it.diverged_at + 1


def test_cycle_period_matches_engine():
    spec = theory.two_target_mission(0.3, 1, 0.3, 1, horizon=200.0)
    seq = grad_J(spec).sim.sequences[0]
    assert seq[:4] == [1, 2, 1, 2]
    assert theory.cycle_period(0.3, 1, 0.3, 1) == pytest.approx(5.0)
    assert theory.cycle_period(0.6, 1, 0.6, 1) == np.inf


@pytest.mark.parametrize("params", [(0.3, 1, 0.3, 1), (0.2, 1.5, 0.4, 2.0), (0.1, 1, 0.35, 1)])
def test_exact_map_matches_engine(params):
    xs, _ = theory.engine_cycles(*params, cycles=40)
    m = theory.exact_cycle_map(*params)
    # the first boundary carries the transient from the initial state; start from it
    pred = theory.converge_gradients(m, len(xs) - 2, xs[1]).xs
    assert np.max(np.abs(pred - xs[1:])) < 1e-10


def test_engine_limit_differs_from_printed_equilibrium():
    xs, _ = theory.engine_cycles(0.3, 1, 0.3, 1, cycles=200)
    eig = np.abs(np.linalg.eigvals(theory.exact_cycle_map(0.3, 1, 0.3, 1).Lam))
    assert np.isclose(eig.max(), 1.0)
    assert np.max(np.abs(xs[-1] - xs[-2])) < 1e-10
    assert np.max(np.abs(xs[-1] - E)) > 0.1


def test_along_event_pins_departing_target():
    xs, _ = theory.engine_cycles(0.2, 1.5, 0.4, 2.0, cycles=30)
    ev = theory.along_event(xs, 0.2, 1.5, 0.4)
    assert np.allclose(ev[:, 0], 1.0, atol=1e-12) and np.allclose(ev[:, 1], 0.0, atol=1e-12)
    assert np.max(np.abs(ev[-1] - E)) < 1e-10


def test_along_event_matches_finite_differences():
    spec = theory.two_target_mission(0.3, 1, 0.3, 1, horizon=80.0)
    theta0 = np.where(np.isfinite(spec.theta0), 0.0, np.inf)

    def departures(theta):
        sim = grad_J(spec, theta, record=True).sim
        return sim, [e.time for e in sim.events if e.kind.startswith("DEP") and e.target == 1]

    ev = theory.along_event(theory.engine_cycle_gradients(spec), 0.3, 1.0, 0.3)
    s0, t0 = departures(theta0)
    h = 1e-6
    for q in (0, 1):
        th = theta0.copy()
        th[q, q, 0] += h
        s1, t1 = departures(th)
        for k in (1, 2, 5):
            fd = [(R_at(s1, i, t1[k]) - R_at(s0, i, t0[k])) / h for i in (0, 1)]
            assert fd[0] == pytest.approx(ev[k, q], abs=1e-5)
            assert fd[1] == pytest.approx(ev[k, 2 + q], abs=1e-5)


def test_sequential_map_misses_intermediate_cycles():
    xs, _ = theory.engine_cycles(0.3, 1, 0.3, 1, cycles=20)
    ev = theory.along_event(xs, 0.3, 1.0, 0.3)
    m = theory.build_cycle_map(0.3, 1, 0.3, 1)
    step = [np.max(np.abs(m.Lam @ ev[k] + m.U - ev[k + 1])) for k in range(5)]
    assert max(step) > 1e-2

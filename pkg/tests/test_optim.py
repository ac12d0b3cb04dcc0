"""Damped least-squares solver: scalar and batched paths."""

import numpy as np
import pytest

from psbp.core import NumericalError
from psbp.optim import (
    LMConfig,
    REASON_MAX_ITER,
    REASON_RESIDUAL,
    REASON_STEP,
    finite_difference_jacobian,
    levenberg_marquardt,
    levenberg_marquardt_batch,
)


def test_linear_residual_converges():
    result = levenberg_marquardt(lambda x: x - 3.0, np.array([10.0]))
    assert result.converged
    assert result.x[0] == pytest.approx(3.0, abs=1e-10)
    assert result.reason in (REASON_RESIDUAL, REASON_STEP)


def test_scalar_quadratic_root():
    result = levenberg_marquardt(lambda x: x * x - 4.0, np.array([1.0]))
    assert result.converged
    assert result.x[0] == pytest.approx(2.0, abs=1e-8)


def test_rosenbrock_valley():
    def residual(v):
        return np.array([1.0 - v[0], 10.0 * (v[1] - v[0] ** 2)])

    def jacobian(v):
        return np.array([[-1.0, 0.0], [-20.0 * v[0], 10.0]])

    result = levenberg_marquardt(residual, np.array([-1.2, 1.0]), jacobian=jacobian,
                                 config=LMConfig(max_iter=200))
    assert result.converged
    assert np.allclose(result.x, [1.0, 1.0], atol=1e-6)
    assert result.residual_norm < 1e-8


def test_finite_difference_fallback_matches_analytic():
    def residual(v):
        return np.array([np.sin(v[0]) + v[1] ** 2, v[0] * v[1]])

    r1 = levenberg_marquardt(residual, np.array([0.5, 0.5]))
    r2 = levenberg_marquardt(
        residual, np.array([0.5, 0.5]),
        jacobian=lambda v: np.array([[np.cos(v[0]), 2 * v[1]], [v[1], v[0]]]),
    )
    assert r1.converged and r2.converged
    assert np.allclose(r1.x, r2.x, atol=1e-6)


def test_zero_residual_at_start_returns_immediately():
    result = levenberg_marquardt(lambda x: x - 5.0, np.array([5.0]))
    assert result.converged
    assert result.iterations == 0
    assert result.reason == REASON_RESIDUAL


def test_stationary_point_stops_on_step_tolerance():
    # constant residual: gradient is zero, the damped step is zero
    result = levenberg_marquardt(lambda x: np.array([1.0]), np.array([2.0]),
                                 jacobian=lambda x: np.array([[0.0]]))
    assert result.converged
    assert result.reason == REASON_STEP
    assert result.x[0] == 2.0


def test_nonfinite_start_raises():
    with pytest.raises(NumericalError):
        levenberg_marquardt(lambda x: np.array([np.inf]), np.array([0.0]))


def test_wrong_signed_jacobian_stalls_safely():
    # a wrong-signed Jacobian pushes uphill; damping shrinks the step until
    # the step tolerance stops the solver where it stands
    result = levenberg_marquardt(lambda x: x, np.array([1.0]),
                                 jacobian=lambda x: np.array([[-1.0]]))
    assert result.converged
    assert result.reason == REASON_STEP
    assert result.x[0] == 1.0


def test_damping_escalation_raises():
    # a huge inconsistent Jacobian keeps proposing large non-improving steps,
    # so the damping factor escalates past its ceiling
    with pytest.raises(NumericalError):
        levenberg_marquardt(lambda x: np.array([1e30]), np.array([1.0]),
                            jacobian=lambda x: np.array([[1e15]]))


def test_max_iter_reported():
    # tiny iteration budget on a slow problem
    result = levenberg_marquardt(
        lambda v: np.array([1.0 - v[0], 10.0 * (v[1] - v[0] ** 2)]),
        np.array([-1.2, 1.0]), config=LMConfig(max_iter=2))
    assert not result.converged
    assert result.reason == REASON_MAX_ITER


def test_finite_difference_jacobian_accuracy():
    def residual(v):
        return np.array([v[0] ** 3, np.exp(v[1]), v[0] * v[1]])

    x = np.array([1.5, -0.5])
    jac = finite_difference_jacobian(residual, x)
    exact = np.array([
        [3 * x[0] ** 2, 0.0],
        [0.0, np.exp(x[1])],
        [x[1], x[0]],
    ])
    assert np.allclose(jac, exact, atol=1e-7)


def test_batch_matches_scalar_solver():
    rng = np.random.default_rng(42)
    targets = rng.uniform(-3.0, 3.0, size=(50, 2))

    def residual(x, idx):
        return x - targets[idx]

    def jacobian(x, idx):
        return np.broadcast_to(np.eye(2), (len(idx), 2, 2)).copy()

    x0 = rng.standard_normal((50, 2))
    x, rnorm, converged, failed = levenberg_marquardt_batch(residual, jacobian, x0)
    assert converged.all()
    assert not failed.any()
    assert np.allclose(x, targets, atol=1e-10)
    for i in [0, 17, 49]:
        scalar = levenberg_marquardt(lambda v, i=i: v - targets[i], x0[i])
        assert np.allclose(x[i], scalar.x, atol=1e-9)


def test_batch_nonlinear_problems():
    rng = np.random.default_rng(5)
    roots = rng.uniform(0.5, 2.0, size=20)

    def residual(x, idx):
        return x**2 - roots[idx][:, None] ** 2

    def jacobian(x, idx):
        return (2.0 * x)[:, :, None]

    x0 = np.full((20, 1), 1.0)
    x, rnorm, converged, failed = levenberg_marquardt_batch(residual, jacobian, x0)
    assert converged.all() and not failed.any()
    assert np.allclose(x[:, 0], roots, atol=1e-8)


def test_batch_flags_failures_without_poisoning_others():
    # problem 0 pairs a constant huge residual with a huge Jacobian, so its
    # damping escalates past the ceiling; problem 1 is a plain linear solve
    def residual(x, idx):
        r = x - 4.0
        r[idx == 0] = 1e30
        return r

    def jacobian(x, idx):
        j = np.ones((len(idx), 1, 1))
        j[idx == 0] = 1e15
        return j

    x0 = np.array([[1.0], [1.0]])
    x, rnorm, converged, failed = levenberg_marquardt_batch(residual, jacobian, x0)
    assert failed[0] and not converged[0]
    assert converged[1] and not failed[1]
    assert x[1, 0] == pytest.approx(4.0, abs=1e-10)


def test_batch_project_keeps_iterates_feasible():
    seen = []

    def residual(x, idx):
        seen.append(x.copy())
        return x - 5.0

    def jacobian(x, idx):
        return np.ones((len(idx), 1, 1))

    def project(x):
        return np.clip(x, -1.0, 1.0)

    x, rnorm, converged, failed = levenberg_marquardt_batch(
        residual, jacobian, np.array([[0.0]]), project=project)
    assert all(np.all(np.abs(s) <= 1.0) for s in seen)
    assert x[0, 0] == pytest.approx(1.0)

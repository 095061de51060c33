import numpy as np
import pytest
from scipy.optimize import minimize

from munidistress.models import class_weights, train_svm
from munidistress.models.svm import kkt_violations, solve_dual


def test_two_points_boundary_at_midpoint():
    X = np.array([[-1.0], [1.0]])
    m = train_svm(X, None, "linear", 10.0, y=[0, 1])
    assert m.decision_function(np.array([[0.0]]))[0] == pytest.approx(0.0, abs=1e-9)
    assert m.weights[0] == pytest.approx(1.0, abs=1e-9)


def test_kkt_conditions_hold(rng):
    X = rng.normal(size=(80, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=80) > 0).astype(int)
    upper = 1.0 * class_weights(y).per_row(y)
    alpha, bias, ok, _ = solve_dual(X, y, upper)
    assert ok
    ys = np.where(y == 1, 1.0, -1.0)
    dec = X @ (X.T @ (alpha * ys)) + bias
    assert np.max(kkt_violations(alpha, dec, y, upper)) < 2e-3
    assert abs(np.dot(alpha, ys)) < 1e-9
    assert np.all((alpha >= 0) & (alpha <= upper + 1e-12))


def test_dual_objective_matches_generic_solver(rng):
    X = rng.normal(size=(25, 2))
    y = (X[:, 0] - X[:, 1] + 0.4 * rng.normal(size=25) > 0).astype(int)
    ys = np.where(y == 1, 1.0, -1.0)
    upper = np.full(25, 0.7)
    Q = (ys[:, None] * ys[None, :]) * (X @ X.T)
    f = lambda a: 0.5 * a @ Q @ a - a.sum()
    ref = minimize(f, np.zeros(25), jac=lambda a: Q @ a - 1, method="SLSQP",
                   bounds=[(0, 0.7)] * 25,
                   constraints=[{"type": "eq", "fun": lambda a: a @ ys, "jac": lambda a: ys}],
                   options={"ftol": 1e-12, "maxiter": 500})
    alpha, *_ = solve_dual(X, y, upper, tol=1e-6)
    assert f(alpha) == pytest.approx(ref.fun, abs=1e-6)


def test_rbf_separates_xor():
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], float)
    y = np.array([0, 0, 1, 1])
    m = train_svm(X, None, "rbf", 10.0, 1.0, y=y)
    assert np.array_equal((m.decision_function(X) >= 0).astype(int), y)


def test_linear_cannot_separate_xor():
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], float)
    y = np.array([0, 0, 1, 1])
    m = train_svm(X, None, "linear", 10.0, y=y)
    assert not np.array_equal((m.decision_function(X) >= 0).astype(int), y)


def test_argument_checks():
    X = np.array([[0.0], [1.0]])
    with pytest.raises(ValueError):
        train_svm(X, None, "rbf", 1.0, None, y=[0, 1])
    with pytest.raises(ValueError):
        train_svm(X, None, "linear", -1.0, y=[0, 1])
    with pytest.raises(ValueError):
        train_svm(X, None, "poly", 1.0, y=[0, 1])

"""Class-weighted L1/L2 logistic regression.

Objective, with n rows and per-row class weight w_i:

    (1/n) sum_i w_i * logloss(y_i, sigmoid(x_i . beta + b)) + R(beta) / (C n)

where R is ||beta||_1 or 0.5 ||beta||_2^2 and the intercept b is unpenalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .common import unpack

OBJ_TOL = 1e-8
GRAD_TOL = 1e-6
MAX_ITER = 10_000


@dataclass(frozen=True)
class LogisticModel:
    coefficients: np.ndarray
    intercept: float
    penalty: str
    C: float
    column_names: tuple[str, ...]
    converged: bool = True
    n_iter: int = 0

    family = "logistic"

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return X @ self.coefficients + self.intercept

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))

    @property
    def params(self) -> dict:
        return {"penalty": self.penalty, "C": self.C}


def _check_penalty(penalty: str) -> str:
    p = penalty.lower()
    if p not in ("l1", "l2"):
        raise ValueError(f"penalty must be 'l1' or 'l2', got {penalty!r}")
    return p


def objective(theta, X, y, sample_weight, penalty="l2", C=1.0) -> float:
    """Penalized objective at theta = (beta..., intercept)."""
    penalty = _check_penalty(penalty)
    n = X.shape[0]
    beta, b = theta[:-1], theta[-1]
    z = X @ beta + b
    loss = np.dot(sample_weight, np.logaddexp(0.0, z) - y * z) / n
    lam = 1.0 / (C * n)
    if penalty == "l2":
        return float(loss + lam * 0.5 * np.dot(beta, beta))
    return float(loss + lam * np.abs(beta).sum())


def smooth_gradient(theta, X, y, sample_weight) -> np.ndarray:
    """Gradient of the weighted mean log-loss (no penalty)."""
    n = X.shape[0]
    r = sample_weight * (expit(X @ theta[:-1] + theta[-1]) - y) / n
    return np.append(X.T @ r, r.sum())


def gradient(theta, X, y, sample_weight, penalty="l2", C=1.0) -> np.ndarray:
    """Gradient of the L2 objective; for L1 the (sub)gradient using sign(beta)."""
    penalty = _check_penalty(penalty)
    lam = 1.0 / (C * X.shape[0])
    g = smooth_gradient(theta, X, y, sample_weight)
    if penalty == "l2":
        g[:-1] += lam * theta[:-1]
    else:
        g[:-1] += lam * np.sign(theta[:-1])
    return g


def optimality(theta, X, y, sample_weight, penalty, C) -> float:
    """Infinity norm of the minimum-norm subgradient."""
    lam = 1.0 / (C * X.shape[0])
    g = smooth_gradient(theta, X, y, sample_weight)
    if penalty == "l2":
        g[:-1] += lam * theta[:-1]
        return float(np.max(np.abs(g)))
    beta = theta[:-1]
    gb = g[:-1]
    sub = np.where(beta != 0, gb + lam * np.sign(beta),
                   np.sign(gb) * np.maximum(np.abs(gb) - lam, 0.0))
    return float(max(np.max(np.abs(sub), initial=0.0), abs(g[-1])))


def _hessian(theta, Xa, sample_weight):
    p = expit(Xa @ theta)
    d = sample_weight * p * (1 - p) / Xa.shape[0]
    return (Xa * d[:, None]).T @ Xa


def _newton_l2(X, y, sw, C, max_iter):
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    lam = 1.0 / (C * n)
    reg = np.full(d + 1, lam)
    reg[-1] = 0.0
    theta = np.zeros(d + 1)
    f = objective(theta, X, y, sw, "l2", C)
    for it in range(1, max_iter + 1):
        g = smooth_gradient(theta, X, y, sw) + reg * theta
        if np.max(np.abs(g)) < GRAD_TOL:
            return theta, True, it - 1
        H = _hessian(theta, Xa, sw) + np.diag(reg)
        H[np.diag_indices_from(H)] += 1e-12
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(H, g, rcond=None)[0]
        slope = float(g @ step)
        t = 1.0
        while True:
            cand = theta + t * step
            f_new = objective(cand, X, y, sw, "l2", C)
            if f_new <= f + 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        theta, f_old, f = cand, f, f_new
        if f_old - f < OBJ_TOL:
            return theta, True, it
    return theta, False, max_iter


def _soft(x, t):
    return np.sign(x) * max(abs(x) - t, 0.0)


def one_hot_groups(X, names) -> list[np.ndarray]:
    """Column groups named ``parent=level`` whose indicators sum to one on every row."""
    by_parent: dict[str, list[int]] = {}
    for j, name in enumerate(names):
        if "=" in name:
            by_parent.setdefault(name.split("=", 1)[0], []).append(j)
    return [np.array(cols) for cols in by_parent.values()
            if len(cols) > 1 and np.all(X[:, cols].sum(axis=1) == 1.0)]


def _prox_quadratic_cd(g, H, beta, lam, groups=(), sweeps=100, tol=1e-13):
    """Minimise g.d + 0.5 d'Hd + lam*||beta + d_beta||_1 by coordinate descent.

    The last coordinate is the unpenalized intercept. A complete one-hot
    group plus the intercept spans a direction the smooth part cannot see;
    after each sweep that direction is minimised in closed form (shift the
    group by minus its median, the intercept by the opposite amount), which
    single-coordinate moves can only approach by zig-zagging.
    """
    m = len(g)
    d = np.zeros(m)
    Hd = np.zeros(m)
    diag = np.diag(H).copy()
    gl = g.tolist()
    bl = list(beta) + [0.0]
    for _ in range(sweeps):
        max_change = 0.0
        for j in range(m):
            hjj = diag[j]
            if hjj <= 0:
                continue
            grad_j = gl[j] + Hd[j]
            if j == m - 1:
                new = d[j] - grad_j / hjj
            else:
                # minimise over u = beta_j + d_j
                u = bl[j] + d[j]
                u_new = _soft(u - grad_j / hjj, lam / hjj)
                new = u_new - bl[j]
            delta = new - d[j]
            if delta != 0.0:
                d[j] = new
                Hd += delta * H[:, j]
                change = abs(delta) * np.sqrt(hjj)
                if change > max_change:
                    max_change = change
        for cols in groups:
            shift = -float(np.median(np.asarray(bl)[cols] + d[cols]))
            if shift != 0.0:
                d[cols] += shift
                d[-1] -= shift
                Hd += shift * (H[:, cols].sum(axis=1) - H[:, -1])
                change = abs(shift) * np.sqrt(max(diag[-1], 0.0))
                if change > max_change:
                    max_change = change
        if max_change < tol:
            break
    return d


def _prox_newton_l1(X, y, sw, C, max_iter, groups=()):
    n, dim = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    lam = 1.0 / (C * n)
    theta = np.zeros(dim + 1)
    f = objective(theta, X, y, sw, "l1", C)
    for it in range(1, max_iter + 1):
        if optimality(theta, X, y, sw, "l1", C) < GRAD_TOL:
            return theta, True, it - 1
        g = smooth_gradient(theta, X, y, sw)
        H = _hessian(theta, Xa, sw)
        H[np.diag_indices_from(H)] += 1e-12
        step = _prox_quadratic_cd(g, H, theta[:-1], lam, groups)
        l1_old = np.abs(theta[:-1]).sum()
        decrease = g @ step + lam * (np.abs(theta[:-1] + step[:-1]).sum() - l1_old)
        t = 1.0
        while True:
            cand = theta + t * step
            f_new = objective(cand, X, y, sw, "l1", C)
            if f_new <= f + 1e-4 * t * min(decrease, 0.0) or t < 1e-10:
                break
            t *= 0.5
        theta, f_old, f = cand, f, f_new
        if f_old - f < OBJ_TOL:
            return theta, True, it
    return theta, False, max_iter


def _fista(X, y, sw, penalty, C, max_iter):
    """Accelerated proximal gradient with adaptive restart (reference solver)."""
    n, dim = X.shape
    lam = 1.0 / (C * n)
    Xa = np.hstack([X, np.ones((n, 1))])
    # Lipschitz bound of the smooth part: max w / 4 * ||Xa||_2^2 / n
    L = np.max(sw) * np.linalg.norm(Xa, 2) ** 2 / (4 * n)
    if penalty == "l2":
        L += lam
    step = 1.0 / L
    theta = np.zeros(dim + 1)
    z = theta.copy()
    t = 1.0
    f = objective(theta, X, y, sw, penalty, C)
    for it in range(1, max_iter + 1):
        g = smooth_gradient(z, X, y, sw)
        if penalty == "l2":
            g[:-1] += lam * z[:-1]
            new = z - step * g
        else:
            new = z - step * g
            new[:-1] = np.sign(new[:-1]) * np.maximum(np.abs(new[:-1]) - step * lam, 0.0)
        f_new = objective(new, X, y, sw, penalty, C)
        if f_new > f:  # restart momentum
            t = 1.0
            z = theta
            continue
        t_next = (1 + np.sqrt(1 + 4 * t * t)) / 2
        z = new + ((t - 1) / t_next) * (new - theta)
        theta, t = new, t_next
        f = f_new
        if optimality(theta, X, y, sw, penalty, C) < GRAD_TOL:
            return theta, True, it
    return theta, False, max_iter


def train_logistic(X, weights=None, penalty="l2", C=1.0, *, y=None, column_names=None,
                   solver="newton", max_iter=MAX_ITER) -> LogisticModel:
    """Fit the class-weighted penalized logistic model.

    ``X`` is a FeatureMatrix or an array (then ``y`` is required); ``weights``
    is a ClassWeights, a per-row weight vector, or None for unit weights.
    ``solver="fista"`` runs the first-order reference solver instead.
    """
    penalty = _check_penalty(penalty)
    if C <= 0:
        raise ValueError("C must be positive")
    X, y, sw, names = unpack(X, y, weights, column_names)
    y = y.astype(float)
    if solver == "fista":
        theta, ok, it = _fista(X, y, sw, penalty, C, max_iter)
    elif penalty == "l2":
        theta, ok, it = _newton_l2(X, y, sw, C, max_iter)
    else:
        theta, ok, it = _prox_newton_l1(X, y, sw, C, max_iter, one_hot_groups(X, names))
    return LogisticModel(theta[:-1].copy(), float(theta[-1]), penalty, float(C), names, ok, it)

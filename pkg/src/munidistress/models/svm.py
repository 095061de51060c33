"""Soft-margin SVM trained by sequential minimal optimization.

Dual: min 0.5 a'Qa - sum(a)  s.t.  0 <= a_i <= C * w_{y_i},  y'a = 0,
with Q_ij = y_i y_j k(x_i, x_j) and y in {-1, +1}. Working pairs are picked
with second-order information; the solver stops once the maximal KKT
violation drops below ``tol``.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .common import unpack

TAU = 1e-12
KKT_TOL = 1e-3
MAX_EPOCHS = 100


@dataclass(frozen=True)
class SvmModel:
    kernel: str
    C: float
    gamma: float | None
    bias: float
    column_names: tuple[str, ...]
    weights: np.ndarray | None = None  # linear kernel
    support_vectors: np.ndarray | None = None  # rbf kernel
    dual_coef: np.ndarray | None = None  # alpha_i * y_i for the support vectors
    converged: bool = True
    n_iter: int = 0

    family = "svm"

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        if self.kernel == "linear":
            return X @ self.weights + self.bias
        out = np.empty(X.shape[0])
        sv_sq = np.einsum("ij,ij->i", self.support_vectors, self.support_vectors)
        for start in range(0, X.shape[0], 2048):
            block = X[start:start + 2048]
            sq = np.einsum("ij,ij->i", block, block)
            d2 = sq[:, None] + sv_sq[None, :] - 2 * block @ self.support_vectors.T
            out[start:start + 2048] = np.exp(-self.gamma * np.maximum(d2, 0.0)) @ self.dual_coef
        return out + self.bias

    @property
    def params(self) -> dict:
        p = {"kernel": self.kernel, "C": self.C}
        if self.kernel == "rbf":
            p["gamma"] = self.gamma
        return p


def normalize_kernel(kernel: str) -> str:
    k = kernel.lower().replace("-", "_").replace(" ", "_")
    if k in ("linear",):
        return "linear"
    if k in ("rbf", "radial_basis", "radial_basis_function"):
        return "rbf"
    raise ValueError(f"unknown kernel {kernel!r}")


class _KernelRows:
    def __init__(self, X, kernel, gamma, cache_rows=1024):
        self.X = X
        self.kernel = kernel
        self.gamma = gamma
        self.sq = np.einsum("ij,ij->i", X, X)
        self.cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self.cache_rows = cache_rows

    def diag(self) -> np.ndarray:
        if self.kernel == "linear":
            return self.sq.copy()
        return np.ones(len(self.X))

    def row(self, i: int) -> np.ndarray:
        r = self.cache.get(i)
        if r is not None:
            self.cache.move_to_end(i)
            return r
        dots = self.X @ self.X[i]
        if self.kernel == "linear":
            r = dots
        else:
            r = np.exp(-self.gamma * np.maximum(self.sq + self.sq[i] - 2 * dots, 0.0))
        self.cache[i] = r
        if len(self.cache) > self.cache_rows:
            self.cache.popitem(last=False)
        return r


def _solve(K: _KernelRows, y: np.ndarray, upper: np.ndarray, tol: float, max_iter: int):
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = K.diag()
    yf = y.astype(float)
    it = 0
    converged = False
    while it < max_iter:
        at_up = alpha >= upper
        at_low = alpha <= 0
        in_up = np.where(y > 0, ~at_up, ~at_low)
        in_low = np.where(y > 0, ~at_low, ~at_up)
        score = -yf * G
        if not in_up.any() or not in_low.any():
            converged = True
            break
        up_scores = np.where(in_up, score, -np.inf)
        i = int(np.argmax(up_scores))
        m = up_scores[i]
        low_scores = np.where(in_low, score, np.inf)
        M = low_scores.min()
        if m - M < tol:
            converged = True
            break
        Ki = K.row(i)
        b = m - score
        cand = in_low & (b > 0)
        a = QD[i] + QD - 2 * Ki
        a = np.where(a > 0, a, TAU)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        Kj = K.row(j)
        Ci, Cj = upper[i], upper[j]
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2 * (-Ki[j])
            quad = quad if quad > 0 else TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > Ci - Cj:
                if ai > Ci:
                    ai, aj = Ci, Ci - diff
            elif aj > Cj:
                aj, ai = Cj, Cj + diff
        else:
            quad = QD[i] + QD[j] - 2 * Ki[j]
            quad = quad if quad > 0 else TAU
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > Ci:
                if ai > Ci:
                    ai, aj = Ci, total - Ci
            elif aj < 0:
                aj, ai = 0.0, total
            if total > Cj:
                if aj > Cj:
                    aj, ai = Cj, total - Cj
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        dai, daj = ai - ai_old, aj - aj_old
        G += yf * (yf[i] * dai * Ki + yf[j] * daj * Kj)
        it += 1
    rho = _rho(alpha, G, yf, upper)
    return alpha, -rho, converged, it


def _rho(alpha, G, y, upper):
    yG = y * G
    at_up = alpha >= upper
    at_low = alpha <= 0
    free = ~at_up & ~at_low
    if free.any():
        return float(yG[free].mean())
    ub_mask = (at_up & (y < 0)) | (at_low & (y > 0))
    lb_mask = (at_up & (y > 0)) | (at_low & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    if np.isinf(ub) or np.isinf(lb):
        return float(ub if np.isfinite(ub) else lb if np.isfinite(lb) else 0.0)
    return float((ub + lb) / 2)


def train_svm(X, weights=None, kernel="linear", C=1.0, gamma=None, *, y=None,
              column_names=None, tol=KKT_TOL, max_epochs=MAX_EPOCHS) -> SvmModel:
    kernel = normalize_kernel(kernel)
    if C <= 0:
        raise ValueError("C must be positive")
    if kernel == "rbf" and not (gamma and gamma > 0):
        raise ValueError("rbf kernel needs a positive gamma")
    X, y01, sw, names = unpack(X, y, weights, column_names)
    y = np.where(y01 == 1, 1, -1)
    upper = C * sw
    alpha, bias, ok, it = solve_dual(X, y01, upper, kernel, gamma, tol, max_epochs)
    coef = alpha * y
    if kernel == "linear":
        return SvmModel("linear", float(C), None, bias, names, weights=X.T @ coef,
                        converged=ok, n_iter=it)
    sv = alpha > 0
    return SvmModel("rbf", float(C), float(gamma), bias, names,
                    support_vectors=X[sv].copy(), dual_coef=coef[sv].copy(),
                    converged=ok, n_iter=it)


def solve_dual(X, y01, upper, kernel="linear", gamma=None, tol=KKT_TOL,
               max_epochs=MAX_EPOCHS):
    """Raw SMO solution: (alpha, bias, converged, iterations)."""
    X = np.asarray(X, float)
    y = np.where(np.asarray(y01) == 1, 1, -1)
    return _solve(_KernelRows(X, normalize_kernel(kernel), gamma), y,
                  np.asarray(upper, float), tol, max_epochs * len(y))


def kkt_violations(alpha, decision, y01, upper) -> np.ndarray:
    """Per-sample violation of the complementary-slackness conditions."""
    y = np.where(np.asarray(y01) == 1, 1.0, -1.0)
    margin = y * np.asarray(decision)
    at_low = alpha <= 0
    at_up = alpha >= upper
    free = ~at_low & ~at_up
    v = np.zeros(len(y))
    v[at_low] = np.maximum(0.0, 1.0 - margin[at_low])
    v[at_up] = np.maximum(0.0, margin[at_up] - 1.0)
    v[free] = np.abs(margin[free] - 1.0)
    return v

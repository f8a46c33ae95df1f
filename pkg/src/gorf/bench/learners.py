"""Linear learners trained on lifted features, plus task metrics.

Ridge regression uses a dense symmetric solve. The classifier is an
L2-regularized squared-hinge SVM solved by Newton steps in the primal and
stopped on a relative duality gap; multiclass problems use one-vs-rest.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..exceptions import ConvergenceError, DataError

__all__ = [
    "train_ridge",
    "predict_ridge",
    "RidgeRegression",
    "train_linear_svm",
    "LinearSVM",
    "relative_error",
    "accuracy",
    "rmse",
    "IllConditionedWarning",
]

DEFAULT_C = 1000.0


class IllConditionedWarning(UserWarning):
    pass


def relative_error(K_exact, K_approx):
    """``||K - K_hat||_F / ||K||_F``."""
    K = np.asarray(K_exact, dtype=float)
    Kh = np.asarray(K_approx, dtype=float)
    if K.shape != Kh.shape:
        raise ValueError(f"shape mismatch {K.shape} vs {Kh.shape}")
    denom = np.linalg.norm(K)
    if denom == 0:
        raise ZeroDivisionError("exact matrix has zero Frobenius norm")
    return float(np.linalg.norm(K - Kh) / denom)


def accuracy(y_true, y_pred):
    return float(np.mean(np.asarray(y_true) == np.asarray(y_pred)))


def rmse(y_pred, y_true):
    d = np.asarray(y_pred, dtype=float) - np.asarray(y_true, dtype=float)
    return float(math.sqrt(np.mean(d * d)))


# --------------------------------------------------------------------------
# Ridge
# --------------------------------------------------------------------------

def train_ridge(F, y, lam):
    """``(F^T F + lam I)^{-1} F^T y``."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float)
    A = F.T @ F
    A[np.diag_indices_from(A)] += lam
    rhs = F.T @ y
    cond = np.linalg.cond(A)
    if cond > 1e12:
        warnings.warn(f"ridge system condition number {cond:.3g} exceeds 1e12",
                      IllConditionedWarning, stacklevel=2)
    return linalg.solve(A, rhs, assume_a="pos")


def predict_ridge(w, F):
    return np.asarray(F, dtype=float) @ w


class RidgeRegression(RegressorMixin, BaseEstimator):
    """Ridge regression; ``alpha`` defaults to ``1 / (2 C)`` with ``C = 1000``.

    With ``fit_intercept`` the features and targets are centered first, so
    the intercept is not penalized.
    """

    def __init__(self, alpha=None, fit_intercept=True):
        self.alpha = alpha
        self.fit_intercept = fit_intercept

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        lam = 1.0 / (2.0 * DEFAULT_C) if self.alpha is None else float(self.alpha)
        if self.fit_intercept:
            xm, ym = X.mean(axis=0), y.mean()
        else:
            xm, ym = np.zeros(X.shape[1]), 0.0
        self.coef_ = train_ridge(X - xm, y - ym, lam)
        self.intercept_ = float(ym - xm @ self.coef_)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X, dtype=float) @ self.coef_ + self.intercept_


# --------------------------------------------------------------------------
# Squared-hinge SVM
# --------------------------------------------------------------------------

def _svm_binary(X, y, C, tol, max_iter):
    """Minimize ``w.w/2 + C sum max(0, 1 - y_i w.x_i)^2`` for ``y`` in {-1, +1}."""
    n, p = X.shape
    w = np.zeros(p)

    def primal(w, f):
        xi = np.maximum(0.0, 1.0 - y * f)
        return 0.5 * w @ w + C * xi @ xi, xi

    f = X @ w
    P, xi = primal(w, f)
    for _ in range(max_iter):
        # Duality gap with alpha_i = 2 C xi_i.
        alpha = 2.0 * C * xi
        v = X.T @ (alpha * y)
        D = alpha.sum() - 0.5 * v @ v - alpha @ alpha / (4.0 * C)
        if P - D <= tol * max(abs(P), 1.0):
            return w
        active = xi > 0
        Xa = X[active]
        grad = w - 2.0 * C * Xa.T @ (y[active] * xi[active])
        H = 2.0 * C * Xa.T @ Xa
        H[np.diag_indices_from(H)] += 1.0
        step = linalg.solve(H, grad, assume_a="pos")
        df = X @ step
        t, decrease = 1.0, grad @ step
        while True:
            cand = w - t * step
            Pc, xic = primal(cand, f - t * df)
            if Pc <= P - 1e-4 * t * decrease or t < 1e-10:
                break
            t *= 0.5
        w, f, P, xi = cand, f - t * df, Pc, xic
    raise ConvergenceError(f"SVM did not reach duality gap {tol} in {max_iter} Newton steps")


def train_linear_svm(F, y, C=DEFAULT_C, tol=1e-4, max_iter=100, fit_intercept=True):
    """One-vs-rest squared-hinge SVM. Returns ``(classes, W)`` with one column per class.

    With ``fit_intercept`` a constant feature is appended (and regularized),
    so ``W`` has one extra row.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    F = np.asarray(F, dtype=float)
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise DataError("all training labels are identical")
    X = np.hstack([F, np.ones((F.shape[0], 1))]) if fit_intercept else F
    targets = [classes[1]] if classes.size == 2 else list(classes)
    W = np.column_stack([
        _svm_binary(X, np.where(y == c, 1.0, -1.0), C, tol, max_iter) for c in targets
    ])
    return classes, W


class LinearSVM(ClassifierMixin, BaseEstimator):
    """Linear classifier with squared hinge loss and L2 penalty."""

    def __init__(self, C=DEFAULT_C, tol=1e-4, max_iter=100, fit_intercept=True):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        self.fit_intercept = fit_intercept

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        self.classes_, self.coef_ = train_linear_svm(
            X, y, self.C, self.tol, self.max_iter, self.fit_intercept
        )
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        if self.fit_intercept:
            X = np.hstack([X, np.ones((X.shape[0], 1))])
        scores = X @ self.coef_
        return scores[:, 0] if scores.shape[1] == 1 else scores

    def predict(self, X):
        scores = self.decision_function(X)
        if scores.ndim == 1:
            return np.where(scores > 0, self.classes_[1], self.classes_[0])
        return self.classes_[np.argmax(scores, axis=1)]

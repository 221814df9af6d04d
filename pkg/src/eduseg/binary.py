"""Independent per-position classifiers: logistic regression and a linear SVM."""

from __future__ import annotations

import numba
import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ValidationError
from .validation import CLASSES, check_binary_data, decode_labels, warn_if_degenerate


def _signs(y):
    return np.where(y == 1, 1.0, -1.0)


def auto_class_weights(y):
    """``w_k = N / (2 * N_k)`` for k in (C, B); returns ``(w_C, w_B)``."""
    y = np.asarray(y)
    n = len(y)
    counts = np.bincount(y, minlength=2).astype(float)
    return tuple(n / (2.0 * c) if c else 1.0 for c in counts)


# ------------------------------------------------------------------ logistic

def logistic_objective(theta, X, y, l2):
    """Log loss plus ``l2/2 ||w||^2``; ``theta = [w..., bias]``, bias unpenalized."""
    w, bias = theta[:-1], theta[-1]
    s = _signs(y)
    margin = s * (np.asarray(X @ w).ravel() + bias)
    loss = np.logaddexp(0.0, -margin).sum() + 0.5 * l2 * float(w @ w)
    coef = -s * _sigmoid(-margin)
    grad = np.empty_like(theta)
    grad[:-1] = np.asarray(X.T @ coef).ravel() + l2 * w
    grad[-1] = coef.sum()
    return float(loss), grad


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def train_logistic(X, y, l2=1.0, max_iter=100, tol=1e-4, init=None):
    X, y = check_binary_data(X, y)
    warn_if_degenerate(y)
    x0 = np.zeros(X.shape[1] + 1) if init is None else np.asarray(init, dtype=float)
    res = minimize(logistic_objective, x0, args=(X, y, l2), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": tol, "ftol": 0.0})
    return res.x[:-1].copy(), float(res.x[-1]), res


# ------------------------------------------------------------------ SVM

@numba.njit(cache=True)
def _dual_cd(indptr, indices, data, y, upper, qdiag, w, alpha, max_iter, tol, seed):
    # Coordinate descent on the hinge-loss dual; bias is the last column of w.
    n = y.shape[0]
    order = np.arange(n)
    np.random.seed(seed)
    it = 0
    for it in range(max_iter):
        np.random.shuffle(order)
        pg_max = -np.inf
        pg_min = np.inf
        for j in range(n):
            i = order[j]
            if qdiag[i] <= 0.0:
                continue
            g = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                g += w[indices[k]] * data[k]
            g = y[i] * g - 1.0
            if alpha[i] == 0.0:
                pg = min(g, 0.0)
            elif alpha[i] == upper[i]:
                pg = max(g, 0.0)
            else:
                pg = g
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if pg != 0.0:
                old = alpha[i]
                alpha[i] = min(max(old - g / qdiag[i], 0.0), upper[i])
                d = (alpha[i] - old) * y[i]
                for k in range(indptr[i], indptr[i + 1]):
                    w[indices[k]] += d * data[k]
        if pg_max - pg_min < tol:
            return it + 1
    return it + 1


def _with_bias_column(X):
    return sp.hstack([X, np.ones((X.shape[0], 1))], format="csr")


def svm_objective(theta, X, y, C, class_weights):
    """``1/2 ||theta||^2 + C * sum_i cw_i * hinge_i`` with the bias inside ``theta``."""
    s = _signs(y)
    margin = s * (np.asarray(X @ theta[:-1]).ravel() + theta[-1])
    cw = np.where(y == 1, class_weights[1], class_weights[0])
    return 0.5 * float(theta @ theta) + C * float((cw * np.maximum(0.0, 1.0 - margin)).sum())


def train_svm(X, y, C=1.0, class_weights="auto", max_iter=1000, tol=1e-4, random_state=0):
    """Returns ``(weights, bias, class_weights, n_epochs)``."""
    X, y = check_binary_data(X, y)
    warn_if_degenerate(y)
    if isinstance(class_weights, str):
        if class_weights != "auto":
            raise ValueError(f"unknown class_weights {class_weights!r}")
        class_weights = auto_class_weights(y)
    elif class_weights is None:
        class_weights = (1.0, 1.0)
    class_weights = tuple(float(c) for c in class_weights)
    if min(class_weights) <= 0:
        raise ValidationError("class weights must be strictly positive")
    Xb = _with_bias_column(X)
    s = _signs(y)
    upper = C * np.where(y == 1, class_weights[1], class_weights[0])
    qdiag = np.asarray(Xb.multiply(Xb).sum(axis=1)).ravel()
    theta = np.zeros(Xb.shape[1])
    alpha = np.zeros(len(y))
    epochs = _dual_cd(Xb.indptr.astype(np.int64), Xb.indices.astype(np.int64), Xb.data, s,
                      upper, qdiag, theta, alpha, int(max_iter), float(tol), int(random_state))
    return theta[:-1].copy(), float(theta[-1]), class_weights, int(epochs)


# ------------------------------------------------------------------ estimators

class _LinearBinary(ClassifierMixin, BaseEstimator):

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X, _ = check_binary_data(X, n_features=self.n_features_in_)
        return np.asarray(X @ self.coef_).ravel() + self.intercept_

    def predict_indices(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)

    def predict(self, X):
        return np.array(decode_labels(self.predict_indices(X)))


class LogisticRegressionClassifier(_LinearBinary):
    """L2-regularized logistic regression (``l2 = 1/C`` of the usual ``C``).

    Predicts ``B`` only when the probability strictly exceeds 0.5.
    """

    kind = "logistic"

    def __init__(self, l2=1.0, max_iter=100, tol=1e-4):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y, init=None):
        w, b, res = train_logistic(X, y, l2=self.l2, max_iter=self.max_iter, tol=self.tol,
                                   init=init)
        self.coef_, self.intercept_ = w, b
        self.n_features_in_ = len(w)
        self.classes_ = np.array(CLASSES)
        self.class_weights_ = (1.0, 1.0)
        self.loss_ = float(res.fun)
        self.n_iter_ = int(res.nit)
        return self

    def predict_proba(self, X):
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])


class LinearSVMClassifier(_LinearBinary):
    """Hinge-loss linear SVM with ``N / (2 N_k)`` class weights by default.

    Trained by dual coordinate descent; the bias is an extra unit feature and
    therefore regularized.
    """

    kind = "svm"

    def __init__(self, C=1.0, class_weight="auto", max_iter=1000, tol=1e-4, random_state=0):
        self.C = C
        self.class_weight = class_weight
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_binary_data(X, y)
        w, b, cw, epochs = train_svm(X, y, C=self.C, class_weights=self.class_weight,
                                     max_iter=self.max_iter, tol=self.tol,
                                     random_state=self.random_state)
        self.coef_, self.intercept_ = w, b
        self.n_features_in_ = len(w)
        self.classes_ = np.array(CLASSES)
        self.class_weights_ = cw
        self.n_iter_ = epochs
        self.loss_ = svm_objective(np.append(w, b), X, y, self.C, cw)
        return self

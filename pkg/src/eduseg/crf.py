"""Two-label linear-chain CRF over sparse per-position feature vectors.

Score of a label sequence ``y`` for an instance with feature rows ``x_t``::

    begin[y_0] + sum_t x_t @ emission[:, y_t] + sum_{t>0} transition[y_{t-1}, y_t]

Label index 0 is ``C`` and 1 is ``B``.  All inference runs in log space over a
padded batch of chains, so training touches every sentence with a handful of
vectorized steps per chain position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ValidationError
from .validation import (
    CLASSES,
    check_matrix,
    check_sequences,
    decode_labels,
    warn_if_degenerate,
)

N_LABELS = 2


@dataclass
class CrfWeights:
    emission: np.ndarray    # (n_features, 2)
    transition: np.ndarray  # (2, 2), [previous, current]
    begin: np.ndarray       # (2,)

    @classmethod
    def zeros(cls, n_features):
        return cls(np.zeros((n_features, N_LABELS)), np.zeros((N_LABELS, N_LABELS)),
                   np.zeros(N_LABELS))

    @property
    def n_features(self):
        return self.emission.shape[0]

    def ravel(self):
        return np.concatenate([self.emission.ravel(), self.transition.ravel(), self.begin])

    @classmethod
    def unravel(cls, theta, n_features):
        k = n_features * N_LABELS
        return cls(theta[:k].reshape(n_features, N_LABELS),
                   theta[k:k + 4].reshape(N_LABELS, N_LABELS), theta[k + 4:k + 6])

    def check(self):
        for name in ("emission", "transition", "begin"):
            if not np.isfinite(getattr(self, name)).all():
                raise ValidationError(f"non-finite {name} weights")
        return self


def log_potentials(weights, x):
    """Per-position emission scores ``(T, 2)`` plus the shared transition/begin scores."""
    x = check_matrix(x, weights.n_features)
    return np.asarray(x @ weights.emission), weights.transition, weights.begin


def sequence_score(emit, transition, begin, labels):
    labels = np.asarray(labels)
    if len(labels) == 0:
        return 0.0
    score = begin[labels[0]] + emit[np.arange(len(labels)), labels].sum()
    return float(score + transition[labels[:-1], labels[1:]].sum())


class _Batch:
    """Several chains laid out as one stacked matrix plus a padded index grid."""

    def __init__(self, X):
        self.lengths = np.array([x.shape[0] for x in X], dtype=np.int64)
        keep = self.lengths > 0
        self.keep = np.flatnonzero(keep)
        lengths = self.lengths[keep]
        self.n = len(lengths)
        self.tmax = int(lengths.max()) if self.n else 0
        self.X = (sp.vstack([X[i] for i in self.keep], format="csr")
                  if self.n else None)
        self.mask = np.arange(self.tmax)[None, :] < lengths[:, None]
        self.rows, self.cols = np.nonzero(self.mask)  # row-major == stacked order
        self.last = lengths - 1

    def pad(self, flat):
        out = np.zeros((self.n, self.tmax, N_LABELS))
        out[self.rows, self.cols] = flat
        return out

    def split(self, padded_or_flat, flat=True):
        """Back to a list aligned with the original instances (empty for length 0)."""
        if flat:
            data = padded_or_flat
        else:
            data = padded_or_flat[self.rows, self.cols]
        out = [np.zeros((0,) + data.shape[1:], dtype=data.dtype) for _ in self.lengths]
        offsets = np.concatenate([[0], np.cumsum(self.lengths[self.keep])])
        for j, i in enumerate(self.keep):
            out[i] = data[offsets[j]:offsets[j + 1]]
        return out


def _lse2(a, axis):
    return np.logaddexp(np.take(a, 0, axis=axis), np.take(a, 1, axis=axis))


def _forward_backward_padded(emit, mask, transition, begin):
    n, tmax, _ = emit.shape
    alpha = np.empty_like(emit)
    beta = np.zeros_like(emit)
    alpha[:, 0] = begin + emit[:, 0]
    for t in range(1, tmax):
        new = _lse2(alpha[:, t - 1, :, None] + transition[None], axis=1) + emit[:, t]
        alpha[:, t] = np.where(mask[:, t, None], new, alpha[:, t - 1])
    for t in range(tmax - 2, -1, -1):
        new = _lse2(transition[None] + (emit[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
        beta[:, t] = np.where(mask[:, t + 1, None], new, 0.0)
    log_z = _lse2(alpha[:, -1], axis=1)
    marg = np.exp(alpha + beta - log_z[:, None, None]) * mask[:, :, None]
    if tmax > 1:
        pair = (alpha[:, :-1, :, None] + transition[None, None]
                + (emit[:, 1:] + beta[:, 1:])[:, :, None, :] - log_z[:, None, None, None])
        pair = np.exp(pair) * mask[:, 1:, None, None]
    else:
        pair = np.zeros((n, 0, N_LABELS, N_LABELS))
    return log_z, marg, pair


def forward_backward(emit, transition, begin):
    """Exact inference for one chain.

    Returns ``(log_partition, marginals (T, 2), pairwise (T - 1, 2, 2))`` where
    ``pairwise[t, a, b]`` is the probability of labels ``a`` at ``t`` and ``b`` at ``t + 1``.
    """
    emit = np.asarray(emit, dtype=float)
    if emit.ndim != 2 or emit.shape[0] < 1:
        raise ValueError("forward_backward needs a chain of length >= 1")
    mask = np.ones((1, emit.shape[0]), dtype=bool)
    log_z, marg, pair = _forward_backward_padded(emit[None], mask, np.asarray(transition),
                                                 np.asarray(begin))
    return float(log_z[0]), marg[0], pair[0]


def _viterbi_padded(emit, mask, transition, begin):
    """Best path per chain; among equal scores the lexicographically smallest (C < B)."""
    n, tmax, _ = emit.shape
    suffix = np.zeros_like(emit)  # best score of positions t.. given label at t
    suffix[:, tmax - 1] = emit[:, tmax - 1]
    for t in range(tmax - 2, -1, -1):
        cont = (transition[None] + suffix[:, t + 1][:, None, :]).max(axis=2)
        suffix[:, t] = emit[:, t] + np.where(mask[:, t + 1, None], cont, 0.0)
    path = np.zeros((n, tmax), dtype=np.int64)
    path[:, 0] = np.argmax(begin[None] + suffix[:, 0], axis=1)
    for t in range(1, tmax):
        prev = path[:, t - 1]
        path[:, t] = np.argmax(transition[prev] + suffix[:, t], axis=1)
    best = (begin[None] + suffix[:, 0]).max(axis=1)
    return path * mask, best


def viterbi_decode(emit, transition, begin):
    """Best label-index path for one chain and its score."""
    emit = np.asarray(emit, dtype=float)
    if emit.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    mask = np.ones((1, emit.shape[0]), dtype=bool)
    path, best = _viterbi_padded(emit[None], mask, np.asarray(transition), np.asarray(begin))
    return path[0], float(best[0])


def viterbi(weights, x):
    """Best ``"B"``/``"C"`` sequence for one instance."""
    emit, trans, begin = log_potentials(weights, x)
    return decode_labels(viterbi_decode(emit, trans, begin)[0])


class _Objective:
    """Regularized negative log-likelihood over a fixed training set."""

    def __init__(self, X, y, n_features, l2):
        self.batch = _Batch(X)
        self.n_features = n_features
        self.l2 = l2
        b = self.batch
        if b.n:
            gold = np.concatenate([y[i] for i in b.keep])
            self.gold_onehot = np.zeros((len(gold), N_LABELS))
            self.gold_onehot[np.arange(len(gold)), gold] = 1.0
            # Empirical counts are fixed; precompute them once.
            self.emp_emission = np.asarray(b.X.T @ self.gold_onehot)
            gp = np.zeros((b.n, b.tmax), dtype=np.int64)
            gp[b.rows, b.cols] = gold
            self.gold_padded = gp
            self.emp_begin = np.bincount(gp[:, 0], minlength=N_LABELS).astype(float)
            valid = b.mask[:, 1:]
            self.emp_trans = np.zeros((N_LABELS, N_LABELS))
            np.add.at(self.emp_trans, (gp[:, :-1][valid], gp[:, 1:][valid]), 1.0)

    def __call__(self, theta):
        w = CrfWeights.unravel(theta, self.n_features)
        loss = 0.5 * self.l2 * float(theta @ theta)
        grad = self.l2 * theta.copy()
        b = self.batch
        if not b.n:
            return loss, grad
        flat = np.asarray(b.X @ w.emission)
        emit = b.pad(flat)
        log_z, marg, pair = _forward_backward_padded(emit, b.mask, w.transition, w.begin)
        gold_score = ((flat * self.gold_onehot).sum()
                      + (self.emp_trans * w.transition).sum()
                      + (self.emp_begin * w.begin).sum())
        loss += float(log_z.sum() - gold_score)
        g = CrfWeights.unravel(grad, self.n_features)  # views into grad
        g.emission += np.asarray(b.X.T @ marg[b.rows, b.cols]) - self.emp_emission
        g.transition += pair.sum(axis=(0, 1)) - self.emp_trans
        g.begin += marg[:, 0].sum(axis=0) - self.emp_begin
        return loss, grad


def nll_and_gradient(weights, X, y, l2=1.0):
    """``sum(log Z - gold score) + l2/2 ||w||^2`` and its gradient as :class:`CrfWeights`."""
    if y is None or any(lab is None for lab in y):
        raise ValueError("nll_and_gradient needs gold labels for every instance")
    X, y, n_features = check_sequences(X, y, weights.n_features)
    loss, grad = _Objective(X, y, n_features, l2)(weights.ravel())
    return loss, CrfWeights.unravel(grad, n_features)


def train_crf(X, y, n_features=None, l2=1.0, max_iter=200, tol=1e-5, init=None):
    """Fit weights by L-BFGS on the convex objective.

    Returns ``(weights, info)``; ``info`` holds the loss after every iteration.
    """
    X, y, n_features = check_sequences(X, y, n_features)
    if not X:
        raise ValueError("no training instances")
    warn_if_degenerate(np.concatenate(y) if y else np.zeros(0))
    objective = _Objective(X, y, n_features, l2)
    x0 = CrfWeights.zeros(n_features).ravel() if init is None else init.ravel().astype(float)
    curve = [objective(x0)[0]]
    result = minimize(objective, x0, jac=True, method="L-BFGS-B",
                      callback=lambda intermediate_result: curve.append(intermediate_result.fun),
                      options={"maxiter": max_iter, "gtol": tol, "ftol": 0.0})
    weights = CrfWeights.unravel(result.x.copy(), n_features).check()
    info = {"loss": float(result.fun), "n_iter": int(result.nit), "loss_curve": curve,
            "converged": bool(result.success), "message": str(result.message)}
    return weights, info


class LinearChainCRF(BaseEstimator):
    """Linear-chain CRF estimator.

    ``X`` is a list of per-sentence instances (CSR matrices with one row per
    label position, or lists of ``{feature_id: value}`` dicts); ``y`` is a list
    of ``"B"``/``"C"`` sequences.

    Parameters
    ----------
    l2 : float
        Strength of the squared-norm penalty ``l2 / 2 * ||w||^2``.
    max_iter : int
        L-BFGS iteration cap.
    tol : float
        Projected-gradient stopping threshold.
    """

    def __init__(self, l2=1.0, max_iter=200, tol=1e-5):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y, init=None):
        weights, info = train_crf(X, y, l2=self.l2, max_iter=self.max_iter, tol=self.tol,
                                  init=init)
        self.weights_ = weights
        self.n_features_in_ = weights.n_features
        self.classes_ = np.array(CLASSES)
        self.loss_ = info["loss"]
        self.loss_curve_ = info["loss_curve"]
        self.n_iter_ = info["n_iter"]
        return self

    def _batch_emissions(self, X):
        check_is_fitted(self, "weights_")
        X, _, _ = check_sequences(X, n_features=self.n_features_in_)
        batch = _Batch(X)
        emit = batch.pad(np.asarray(batch.X @ self.weights_.emission)) if batch.n else None
        return batch, emit

    def predict_indices(self, X):
        batch, emit = self._batch_emissions(X)
        if not batch.n:
            return [np.zeros(0, dtype=np.int64) for _ in batch.lengths]
        path, _ = _viterbi_padded(emit, batch.mask, self.weights_.transition, self.weights_.begin)
        return batch.split(path, flat=False)

    def predict(self, X):
        return [decode_labels(p) for p in self.predict_indices(X)]

    def predict_marginals(self, X):
        """Per-position label probabilities, columns ordered as ``classes_``."""
        batch, emit = self._batch_emissions(X)
        if not batch.n:
            return [np.zeros((0, N_LABELS)) for _ in batch.lengths]
        _, marg, _ = _forward_backward_padded(emit, batch.mask, self.weights_.transition,
                                              self.weights_.begin)
        return batch.split(marg, flat=False)

"""Input checks shared by the estimators."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp

from .corpus import B, C
from .exceptions import DegenerateDataWarning, ValidationError

CLASSES = (C, B)  # column order everywhere: index 0 = C, index 1 = B


def encode_labels(labels):
    """``"B"``/``"C"`` strings (or 0/1 ints) -> int array with B = 1."""
    arr = np.asarray(list(labels))
    if arr.size == 0:
        return np.zeros(0, dtype=np.int64)
    if arr.dtype.kind in "iub":
        if not np.isin(arr, (0, 1)).all():
            raise ValidationError("integer labels must be 0 (C) or 1 (B)")
        return arr.astype(np.int64)
    bad = set(arr.tolist()) - {B, C}
    if bad:
        raise ValidationError(f"unknown labels {sorted(bad)}")
    return (arr == B).astype(np.int64)


def decode_labels(ints):
    return tuple(B if v else C for v in ints)


def vectors_to_csr(vectors, n_features):
    """A list of ``{id: value}`` feature vectors -> CSR matrix."""
    indptr, indices, data = [0], [], []
    for vec in vectors:
        for fid in sorted(vec):
            if not 0 <= fid < n_features:
                raise ValidationError(f"feature id {fid} outside 0..{n_features - 1}")
            indices.append(fid)
            data.append(float(vec[fid]))
        indptr.append(len(indices))
    return sp.csr_matrix((np.asarray(data, dtype=float), np.asarray(indices, dtype=np.int64),
                          np.asarray(indptr)), shape=(len(vectors), n_features))


def check_matrix(x, n_features=None):
    """Coerce one instance (CSR, dense array or list of dict vectors) to CSR."""
    if isinstance(x, list) and (not x or isinstance(x[0], dict)):
        if n_features is None:
            n_features = 1 + max((max(v) for v in x if v), default=-1)
        return vectors_to_csr(x, n_features)
    x = sp.csr_matrix(x, dtype=float)
    if n_features is not None and x.shape[1] != n_features:
        raise ValidationError(f"expected {n_features} features, got {x.shape[1]}")
    if x.nnz and not np.isfinite(x.data).all():
        raise ValidationError("feature values must be finite")
    return x


def check_sequences(X, y=None, n_features=None):
    """Validate a list of per-sentence instances and optional label sequences."""
    if isinstance(X, sp.spmatrix) or (isinstance(X, np.ndarray) and X.ndim == 2):
        raise ValidationError("expected a list of per-sequence feature matrices")
    X = list(X)
    if n_features is None:
        for x in X:
            if not isinstance(x, list):
                n_features = x.shape[1]
                break
        else:
            n_features = 1 + max((max(v) for x in X for v in x if v), default=-1)
    X = [check_matrix(x, n_features) for x in X]
    if y is None:
        return X, None, n_features
    y = [encode_labels(lab) for lab in y]
    if len(y) != len(X):
        raise ValidationError(f"{len(X)} sequences but {len(y)} label sequences")
    for k, (x, lab) in enumerate(zip(X, y)):
        if x.shape[0] != len(lab):
            raise ValidationError(f"sequence {k}: {x.shape[0]} positions but {len(lab)} labels")
    return X, y, n_features


def check_binary_data(X, y=None, n_features=None):
    """2-D sparse/dense sample matrix and optional labels for the binary classifiers."""
    if isinstance(X, list) and X and isinstance(X[0], dict):
        X = check_matrix(X, n_features)
    elif isinstance(X, list):
        X = sp.vstack([check_matrix(x, n_features) for x in X], format="csr") if X else \
            sp.csr_matrix((0, n_features or 0))
    else:
        X = check_matrix(X, n_features)
    if y is None:
        return X, None
    y = encode_labels(y)
    if X.shape[0] != len(y):
        raise ValidationError(f"{X.shape[0]} samples but {len(y)} labels")
    return X, y


def warn_if_degenerate(y):
    if len(y) == 0 or y.min() == y.max():
        warnings.warn("training data contains a single label only", DegenerateDataWarning,
                      stacklevel=3)
        return True
    return False

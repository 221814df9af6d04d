import itertools
import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from eduseg.crf import (
    CrfWeights,
    LinearChainCRF,
    forward_backward,
    nll_and_gradient,
    sequence_score,
    train_crf,
    viterbi,
    viterbi_decode,
)
from eduseg.exceptions import DegenerateDataWarning, ValidationError


def random_potentials(rng, T, scale=2.0):
    return (rng.normal(scale=scale, size=(T, 2)), rng.normal(scale=scale, size=(2, 2)),
            rng.normal(scale=scale, size=2))


def brute_force(emit, trans, begin):
    T = emit.shape[0]
    paths = list(itertools.product((0, 1), repeat=T))
    scores = np.array([sequence_score(emit, trans, begin, p) for p in paths])
    log_z = np.logaddexp.reduce(scores)
    probs = np.exp(scores - log_z)
    marg = np.zeros((T, 2))
    pair = np.zeros((max(T - 1, 0), 2, 2))
    for p, pr in zip(paths, probs):
        marg[np.arange(T), p] += pr
        for t in range(T - 1):
            pair[t, p[t], p[t + 1]] += pr
    best = max(range(len(paths)), key=lambda k: (scores[k], [-v for v in paths[k]]))
    return log_z, marg, pair, np.array(paths[best]), scores[best]


def random_data(rng, n, n_features=6, max_len=7, density=0.4):
    X, y = [], []
    for _ in range(n):
        T = int(rng.integers(1, max_len + 1))
        X.append(sp.random(T, n_features, density=density, random_state=rng, format="csr"))
        y.append(tuple(rng.choice(["B", "C"], size=T)))
    return X, y


@pytest.mark.parametrize("T", range(1, 9))
def test_inference_matches_enumeration(T):
    rng = np.random.default_rng(T)
    for _ in range(20):
        emit, trans, begin = random_potentials(rng, T)
        log_z, marg, pair = forward_backward(emit, trans, begin)
        bz, bm, bp, bpath, bscore = brute_force(emit, trans, begin)
        assert abs(log_z - bz) < 1e-9
        np.testing.assert_allclose(marg, bm, atol=1e-9)
        np.testing.assert_allclose(pair, bp, atol=1e-9)
        path, score = viterbi_decode(emit, trans, begin)
        assert abs(score - bscore) < 1e-9
        assert np.array_equal(path, bpath)


def test_marginals_are_consistent():
    rng = np.random.default_rng(0)
    emit, trans, begin = random_potentials(rng, 10)
    _, marg, pair = forward_backward(emit, trans, begin)
    np.testing.assert_allclose(marg.sum(axis=1), 1.0)
    np.testing.assert_allclose(pair.sum(axis=2), marg[:-1], atol=1e-12)
    np.testing.assert_allclose(pair.sum(axis=1), marg[1:], atol=1e-12)


def test_large_potentials_are_stable():
    rng = np.random.default_rng(1)
    emit, trans, begin = random_potentials(rng, 30, scale=300.0)
    log_z, marg, _ = forward_backward(emit, trans, begin)
    assert np.isfinite(log_z) and np.isfinite(marg).all()
    _, score = viterbi_decode(emit, trans, begin)
    assert log_z >= score - 1e-9


def test_empty_chain_rejected():
    with pytest.raises(ValueError):
        forward_backward(np.zeros((0, 2)), np.zeros((2, 2)), np.zeros(2))


def test_ties_resolve_to_c():
    path, _ = viterbi_decode(np.zeros((5, 2)), np.zeros((2, 2)), np.zeros(2))
    assert list(path) == [0] * 5
    w = CrfWeights.zeros(3)
    assert viterbi(w, sp.csr_matrix((4, 3))) == ("C",) * 4


def test_shift_invariance():
    rng = np.random.default_rng(2)
    emit, trans, begin = random_potentials(rng, 6)
    z, m, _ = forward_backward(emit, trans, begin)
    z2, m2, _ = forward_backward(emit + 3.0, trans, begin)
    assert abs(z2 - z - 18.0) < 1e-9
    np.testing.assert_allclose(m, m2, atol=1e-12)
    assert np.array_equal(viterbi_decode(emit, trans, begin)[0],
                          viterbi_decode(emit, trans + 1.5, begin - 2.0)[0])


def test_gradient_finite_differences():
    rng = np.random.default_rng(3)
    X, y = random_data(rng, 15)
    w = CrfWeights(rng.normal(size=(6, 2)), rng.normal(size=(2, 2)), rng.normal(size=2))
    loss, grad = nll_and_gradient(w, X, y, l2=0.7)
    theta, g = w.ravel(), grad.ravel()
    eps = 1e-6
    for k in range(len(theta)):
        up, dn = theta.copy(), theta.copy()
        up[k] += eps
        dn[k] -= eps
        fd = (nll_and_gradient(CrfWeights.unravel(up, 6), X, y, 0.7)[0]
              - nll_and_gradient(CrfWeights.unravel(dn, 6), X, y, 0.7)[0]) / (2 * eps)
        assert abs(fd - g[k]) <= 1e-4 * max(1.0, abs(fd))


def test_loss_matches_enumeration():
    rng = np.random.default_rng(4)
    X, y = random_data(rng, 5)
    w = CrfWeights(rng.normal(size=(6, 2)), rng.normal(size=(2, 2)), rng.normal(size=2))
    loss, _ = nll_and_gradient(w, X, y, l2=0.0)
    expected = 0.0
    for x, lab in zip(X, y):
        emit = np.asarray(x @ w.emission)
        gold = [1 if v == "B" else 0 for v in lab]
        expected += brute_force(emit, w.transition, w.begin)[0] - sequence_score(
            emit, w.transition, w.begin, gold)
    assert abs(loss - expected) < 1e-9


def test_moment_matching_at_optimum():
    rng = np.random.default_rng(5)
    X, y = random_data(rng, 40)
    l2 = 0.5
    w, _ = train_crf(X, y, l2=l2, max_iter=500, tol=1e-9)
    expected = np.zeros((6, 2))
    empirical = np.zeros((6, 2))
    for x, lab in zip(X, y):
        dense = x.toarray()
        emit = dense @ w.emission
        marg = brute_force(emit, w.transition, w.begin)[1]
        gold = np.array([[v == "C", v == "B"] for v in lab], dtype=float)
        expected += dense.T @ marg
        empirical += dense.T @ gold
    # Stationarity: model expectations + l2 * w equal the empirical counts.
    np.testing.assert_allclose(expected + l2 * w.emission, empirical, atol=2e-3)


def test_convexity_different_inits():
    rng = np.random.default_rng(6)
    X, y = random_data(rng, 30)
    a, ia = train_crf(X, y, l2=1.0, max_iter=500, tol=1e-9)
    init = CrfWeights(rng.normal(scale=3, size=(6, 2)), rng.normal(size=(2, 2)),
                      rng.normal(size=2))
    b, ib = train_crf(X, y, l2=1.0, max_iter=500, tol=1e-9, init=init)
    assert abs(ia["loss"] - ib["loss"]) < 1e-6
    np.testing.assert_allclose(a.ravel(), b.ravel(), atol=1e-3)


def test_loss_curve_non_increasing():
    rng = np.random.default_rng(7)
    X, y = random_data(rng, 30)
    _, info = train_crf(X, y, l2=0.1)
    curve = np.array(info["loss_curve"])
    assert (np.diff(curve) <= 1e-8 * np.abs(curve[:-1])).all()


def test_estimator_learns_transition_pattern():
    # Alternating labels with uninformative features must be picked up by transitions.
    X = [sp.csr_matrix(np.ones((6, 1))) for _ in range(20)]
    y = [("B", "C") * 3 for _ in range(20)]
    crf = LinearChainCRF(l2=0.01).fit(X, y)
    assert crf.predict(X[:2]) == y[:2]
    marg = crf.predict_marginals(X[:1])[0]
    np.testing.assert_allclose(marg.sum(axis=1), 1.0)
    assert crf.get_params() == {"l2": 0.01, "max_iter": 200, "tol": 1e-5}


def test_empty_instance_predicts_empty():
    X = [sp.csr_matrix(np.eye(2)), sp.csr_matrix((0, 2))]
    crf = LinearChainCRF().fit(X[:1], [("B", "C")])
    out = crf.predict(X)
    assert len(out[0]) == 2 and out[1] == ()


def test_degenerate_warning_and_all_c():
    X = [sp.csr_matrix(np.eye(3)) for _ in range(4)]
    with pytest.warns(DegenerateDataWarning):
        crf = LinearChainCRF().fit(X, [("C",) * 3] * 4)
    assert crf.predict(X) == [("C",) * 3] * 4


def test_bad_inputs():
    X = [sp.csr_matrix(np.eye(3))]
    with pytest.raises(ValueError):
        LinearChainCRF().fit(X, [("B", "C")])
    with pytest.raises(ValueError):
        LinearChainCRF().fit(X, [("B", "X", "C")])
    w = CrfWeights.zeros(2)
    w.begin[0] = np.nan
    with pytest.raises(ValidationError):
        w.check()


def test_dict_instances_equal_csr():
    rng = np.random.default_rng(8)
    X, y = random_data(rng, 10)
    dicts = [[{int(j): float(v) for j, v in zip(r.indices, r.data)} for r in x] for x in X]
    w = LinearChainCRF().fit(X, y).weights_
    la, _ = nll_and_gradient(w, X, y)
    lb, _ = nll_and_gradient(w, dicts, y)
    assert abs(la - lb) < 1e-10


def test_moment_matching_separable_unregularized():
    # More features than positions; with l2=0 the optimum pushes expectations onto the data.
    X = [sp.csr_matrix(np.eye(4)), sp.csr_matrix(np.eye(4)[::-1])]
    y = [("B", "C", "C", "B"), ("C", "B", "B", "C")]
    w, _ = train_crf(X, y, l2=0.0, max_iter=3000, tol=1e-7)
    _, grad = nll_and_gradient(w, X, y, l2=0.0)
    assert np.abs(grad.ravel()).max() < 1e-4


def test_separable_training_accuracy():
    rng = np.random.default_rng(9)
    X, y = [], []
    for _ in range(30):
        lab = rng.integers(0, 2, size=int(rng.integers(1, 8)))
        dense = np.column_stack([lab, 1 - lab, np.ones(len(lab))]).astype(float)
        X.append(sp.csr_matrix(dense))
        y.append(tuple("B" if v else "C" for v in lab))
    assert LinearChainCRF().fit(X, y).predict(X) == y


def test_log_potentials_linear():
    from eduseg.crf import log_potentials
    w = CrfWeights.zeros(2)
    w.emission[0, 1] = 2.0
    emit, _, _ = log_potentials(w, sp.csr_matrix([[1.0, 0.0]]))
    assert emit.tolist() == [[0.0, 2.0]]
    emit2, _, _ = log_potentials(w, sp.csr_matrix([[2.0, 0.0]]))
    assert emit2[0, 1] == 2 * emit[0, 1]
    with pytest.raises(ValidationError):
        log_potentials(w, sp.csr_matrix((1, 3)))


def test_trivial_length_one():
    log_z, marg, _ = forward_backward(np.zeros((1, 2)), np.zeros((2, 2)), np.zeros(2))
    assert abs(log_z - np.log(2)) < 1e-15 and marg.tolist() == [[0.5, 0.5]]
    loss, _ = nll_and_gradient(CrfWeights.zeros(1), [sp.csr_matrix([[1.0]])], [("B",)], l2=0.0)
    assert abs(loss - np.log(2)) < 1e-15
    with pytest.raises(ValueError):
        nll_and_gradient(CrfWeights.zeros(1), [sp.csr_matrix([[1.0]])], None)

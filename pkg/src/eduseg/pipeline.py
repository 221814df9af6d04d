"""One- and two-pass segmentation across the CRF, LR and SVM frameworks."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import __version__
from .binary import LinearSVMClassifier, LogisticRegressionClassifier
from .corpus import Corpus, labels_to_spans, spans_to_labels
from .crf import CrfWeights, LinearChainCRF
from .eval import prf
from .exceptions import ModelError, ValidationError
from .features import FeatureExtractor, FeatureVocabulary
from .validation import decode_labels, encode_labels

FRAMEWORKS = ("crf", "lr", "svm")
ABLATIONS = {"full": (True, True), "-p": (False, True), "-g": (True, False), "-pg": (False, False)}
MODEL_FORMAT = "eduseg.model"
MODEL_VERSION = 1

_DEFAULTS = {"crf": {"max_iter": 200, "tol": 1e-5},
             "lr": {"max_iter": 100, "tol": 1e-4},
             "svm": {"max_iter": 1000, "tol": 1e-4}}


def _as_xy(sentences, spans=None):
    if isinstance(sentences, Corpus):
        if spans is None:
            spans = sentences.spans
        sentences = sentences.sentences
    return list(sentences), spans


@dataclass
class _Pass:
    extractor: FeatureExtractor
    model: object
    fingerprint: str = ""
    diagnostics: dict = field(default_factory=dict)


class EduSegmenter(BaseEstimator):
    """Sentence -> EDU spans segmenter with optional second pass.

    ``fit(sentences, spans)`` trains pass 1 on basic and contextual features;
    with ``global_features`` on it then decodes the training sentences with
    pass 1, derives global features from that output and trains pass 2.

    Parameters
    ----------
    framework : {"crf", "lr", "svm"}
    pairing : bool
        Describe both tokens around a position (``False`` describes the
        following token only).
    global_features : bool
        Enable the second pass.
    contextual : bool
        Append the neighboring positions' features.
    l2 : float
        Penalty for the CRF and logistic regression.
    C : float
        SVM penalty.
    max_iter, tol : optional
        Optimizer limits; ``None`` picks a per-framework default.
    min_feature_count : int
        Drop features seen at fewer training positions.
    crossfold_pass1 : int
        ``0`` decodes the training set with the pass-1 model trained on it;
        ``k >= 2`` uses out-of-fold pass-1 predictions from ``k`` document folds.
    random_state : int
        Seeds the SVM coordinate order and the fold assignment.
    """

    def __init__(self, framework="crf", pairing=True, global_features=True, contextual=True,
                 l2=1.0, C=1.0, max_iter=None, tol=None, min_feature_count=1,
                 crossfold_pass1=0, random_state=0):
        self.framework = framework
        self.pairing = pairing
        self.global_features = global_features
        self.contextual = contextual
        self.l2 = l2
        self.C = C
        self.max_iter = max_iter
        self.tol = tol
        self.min_feature_count = min_feature_count
        self.crossfold_pass1 = crossfold_pass1
        self.random_state = random_state

    # -------------------------------------------------------------- building blocks

    def _new_model(self):
        if self.framework not in FRAMEWORKS:
            raise ValueError(f"framework must be one of {FRAMEWORKS}, got {self.framework!r}")
        d = _DEFAULTS[self.framework]
        max_iter = d["max_iter"] if self.max_iter is None else self.max_iter
        tol = d["tol"] if self.tol is None else self.tol
        if self.framework == "crf":
            return LinearChainCRF(l2=self.l2, max_iter=max_iter, tol=tol)
        if self.framework == "lr":
            return LogisticRegressionClassifier(l2=self.l2, max_iter=max_iter, tol=tol)
        return LinearSVMClassifier(C=self.C, max_iter=max_iter, tol=tol,
                                   random_state=self.random_state)

    def _new_extractor(self, global_features):
        return FeatureExtractor(pairing=self.pairing, global_features=global_features,
                                contextual=self.contextual,
                                min_feature_count=self.min_feature_count)

    @staticmethod
    def _fit_model(model, X, labels):
        if isinstance(model, LinearChainCRF):
            model.fit(X, labels)
        else:
            model.fit(_stack(X), np.concatenate([encode_labels(lab) for lab in labels]))
        return model

    @staticmethod
    def _decode(model, X):
        """Label-index arrays, one per sentence."""
        if isinstance(model, LinearChainCRF):
            return model.predict_indices(X)
        sizes = [x.shape[0] for x in X]
        flat = model.predict_indices(_stack(X)) if sum(sizes) else np.zeros(0, dtype=np.int64)
        return np.split(flat, np.cumsum(sizes)[:-1]) if sizes else []

    def _train_pass(self, sentences, labels, initial=None):
        extractor = self._new_extractor(initial is not None)
        X = extractor.fit_transform(sentences, initial=initial)
        model = self._fit_model(self._new_model(), X, labels)
        diag = {"n_features": extractor.n_features_, "n_iter": int(model.n_iter_),
                "loss": float(model.loss_)}
        return _Pass(extractor, model, extractor.fingerprint(), diag), X

    def _pass1_oof(self, sentences, labels, k):
        docs = sorted({s.doc_id for s in sentences})
        if len(docs) < k:
            raise ValidationError(f"cross-fold pass 1 needs >= {k} documents, got {len(docs)}")
        order = np.random.default_rng(self.random_state).permutation(len(docs))
        fold_of = {docs[j]: f % k for f, j in enumerate(order)}
        folds = np.array([fold_of[s.doc_id] for s in sentences])
        out = [None] * len(sentences)
        for f in range(k):
            train = np.flatnonzero(folds != f)
            held = np.flatnonzero(folds == f)
            p, _ = self._train_pass([sentences[i] for i in train], [labels[i] for i in train])
            Xh = p.extractor.transform([sentences[i] for i in held])
            for i, lab in zip(held, self._decode(p.model, Xh)):
                out[i] = lab
        return out

    # -------------------------------------------------------------- estimator API

    def fit(self, X, y=None):
        sentences, spans = _as_xy(X, y)
        if not sentences:
            raise ValueError("cannot train on an empty corpus")
        if spans is None or any(s is None for s in spans):
            raise ValidationError("training needs gold EDU spans for every sentence")
        if len(spans) != len(sentences):
            raise ValidationError("one span list per sentence is required")
        labels = [spans_to_labels(sp_, len(s)) for s, sp_ in zip(sentences, spans)]
        pass1, X1 = self._train_pass(sentences, labels)
        self.passes_ = [pass1]
        if self.global_features:
            if self.crossfold_pass1 and self.crossfold_pass1 >= 2:
                pred = self._pass1_oof(sentences, labels, int(self.crossfold_pass1))
            else:
                pred = self._decode(pass1.model, X1)
            initial = [labels_to_spans(decode_labels(p), len(s)) for s, p in zip(sentences, pred)]
            pass2, _ = self._train_pass(sentences, labels, initial=initial)
            self.passes_.append(pass2)
        return self

    def _check_fingerprints(self):
        for k, p in enumerate(self.passes_):
            if p.extractor.fingerprint() != p.fingerprint:
                raise ModelError(f"pass {k + 1}: feature fingerprint mismatch")

    def predict_labels(self, X, return_first_pass=False):
        """``"B"``/``"C"`` sequences per sentence (and optionally the pass-1 output)."""
        check_is_fitted(self, "passes_")
        self._check_fingerprints()
        sentences, _ = _as_xy(X)
        p1 = self.passes_[0]
        first = self._decode(p1.model, p1.extractor.transform(sentences))
        first = [decode_labels(p) for p in first]
        final = first
        if len(self.passes_) > 1:
            p2 = self.passes_[1]
            initial = [labels_to_spans(lab, len(s)) for s, lab in zip(sentences, first)]
            X2 = p2.extractor.transform(sentences, initial=initial)
            final = [decode_labels(p) for p in self._decode(p2.model, X2)]
        return (final, first) if return_first_pass else final

    def predict(self, X):
        sentences, _ = _as_xy(X)
        labels = self.predict_labels(sentences)
        return [labels_to_spans(lab, len(s)) for s, lab in zip(sentences, labels)]

    def score(self, X, y=None):
        """B-class F1 (percent)."""
        sentences, spans = _as_xy(X, y)
        gold = [spans_to_labels(sp_, len(s)) for s, sp_ in zip(sentences, spans)]
        return prf(gold, self.predict_labels(sentences)).b.f1

    @property
    def n_passes(self):
        check_is_fitted(self, "passes_")
        return len(self.passes_)

    # -------------------------------------------------------------- persistence

    def to_dict(self, run_config=None):
        check_is_fitted(self, "passes_")
        passes = []
        for p in self.passes_:
            passes.append({
                "feature_config": p.extractor.config.to_dict(),
                "min_feature_count": p.extractor.min_feature_count,
                "vocabulary": list(p.extractor.vocabulary_.inverse),
                "fingerprint": p.fingerprint,
                "diagnostics": p.diagnostics,
                "model": _model_to_dict(p.model),
            })
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "eduseg_version": __version__,
                "framework": self.framework, "params": self.get_params(),
                "run_config": run_config or {}, "passes": passes}

    def save(self, path, run_config=None):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(run_config), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != MODEL_FORMAT:
            raise ModelError("not an eduseg model file")
        if data.get("version") != MODEL_VERSION:
            raise ModelError(f"unsupported model version {data.get('version')}")
        seg = cls(**data["params"])
        passes = []
        for k, entry in enumerate(data["passes"]):
            cfg = entry["feature_config"]
            ex = FeatureExtractor(pairing=cfg["pairing"], global_features=cfg["global_features"],
                                  contextual=cfg["contextual"],
                                  min_feature_count=entry.get("min_feature_count", 1))
            ex.vocabulary_ = FeatureVocabulary(entry["vocabulary"], frozen=True)
            ex.n_features_ = len(ex.vocabulary_)
            if ex.fingerprint() != entry["fingerprint"]:
                raise ModelError(f"pass {k + 1}: feature fingerprint mismatch")
            model = _model_from_dict(entry["model"], ex.n_features_)
            passes.append(_Pass(ex, model, entry["fingerprint"], entry.get("diagnostics", {})))
        if (len(passes) == 2) != bool(seg.global_features):
            raise ModelError("pass count does not match the global-feature setting")
        if len(passes) == 2 and not passes[1].extractor.global_features:
            raise ModelError("pass 2 must use global features")
        if passes[0].extractor.global_features:
            raise ModelError("pass 1 cannot use global features")
        seg.passes_ = passes
        return seg

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ModelError(f"{path}: not valid JSON ({exc.msg})") from exc
        return cls.from_dict(data)


def _stack(X):
    return sp.vstack(X, format="csr") if X else sp.csr_matrix((0, 0))


def _model_to_dict(model):
    if isinstance(model, LinearChainCRF):
        w = model.weights_
        return {"kind": "crf", "params": model.get_params(), "emission": w.emission.tolist(),
                "transition": w.transition.tolist(), "begin": w.begin.tolist()}
    return {"kind": model.kind, "params": model.get_params(), "coef": model.coef_.tolist(),
            "intercept": model.intercept_, "class_weights": list(model.class_weights_)}


def _model_from_dict(d, n_features):
    kind = d.get("kind")
    if kind == "crf":
        m = LinearChainCRF(**d["params"])
        emission = np.asarray(d["emission"], dtype=float).reshape(-1, 2)
        if emission.shape[0] != n_features:
            raise ModelError("emission matrix does not match the vocabulary size")
        m.weights_ = CrfWeights(emission, np.asarray(d["transition"], dtype=float),
                                np.asarray(d["begin"], dtype=float)).check()
        m.n_features_in_ = n_features
        m.classes_ = np.array(["C", "B"])
        m.n_iter_, m.loss_ = 0, float("nan")
        return m
    if kind in ("logistic", "svm"):
        m = (LogisticRegressionClassifier if kind == "logistic" else LinearSVMClassifier)(
            **d["params"])
        m.coef_ = np.asarray(d["coef"], dtype=float)
        if m.coef_.shape != (n_features,):
            raise ModelError("weight vector does not match the vocabulary size")
        if not np.isfinite(m.coef_).all():
            raise ModelError("non-finite weights")
        m.intercept_ = float(d["intercept"])
        m.class_weights_ = tuple(d["class_weights"])
        m.n_features_in_ = n_features
        m.classes_ = np.array(["C", "B"])
        return m
    raise ModelError(f"unknown model kind {kind!r}")


# ------------------------------------------------------------------ functional API

def train_two_pass(corpus, framework="crf", pairing=True, global_features=True, **params):
    return EduSegmenter(framework=framework, pairing=pairing, global_features=global_features,
                        **params).fit(corpus)


def train_one_pass(corpus, framework="crf", pairing=True, **params):
    return train_two_pass(corpus, framework, pairing, False, **params)


def segment(model, sentence):
    """EDU spans of one sentence; single-token sentences skip decoding."""
    if len(sentence) == 1:
        return ((1, 1),)
    return model.predict([sentence])[0]


# ------------------------------------------------------------------ ablation grid

def ablation_label(framework, ablation):
    name = framework.upper()
    return name if ablation == "full" else f"{name}^{ablation}"


@dataclass
class AblationCell:
    framework: str
    ablation: str
    report: object
    predictions: list

    @property
    def name(self):
        return ablation_label(self.framework, self.ablation)

    def as_dict(self):
        return {"framework": self.framework, "ablation": self.ablation, "model": self.name,
                "B": {"precision": self.report.b.precision, "recall": self.report.b.recall,
                      "f1": self.report.b.f1},
                "macro_f1": self.report.macro_f1}


def _run_cell(args):
    framework, ablation, train, test, params = args
    pairing, global_features = ABLATIONS[ablation]
    model = EduSegmenter(framework=framework, pairing=pairing, global_features=global_features,
                         **params).fit(train)
    pred = model.predict_labels(test.sentences)
    return AblationCell(framework, ablation, prf(test.labels(), pred), pred)


def run_ablation_grid(train, test, frameworks=FRAMEWORKS, ablations=tuple(ABLATIONS),
                      workers=1, **params):
    """Train and score every framework x ablation cell; rows in full, -p, -g, -pg order."""
    overlap = set(train.doc_ids) & set(test.doc_ids)
    if overlap:
        raise ValidationError(f"train and test share documents: {sorted(overlap)[:5]}")
    if not train.has_gold or not test.has_gold:
        raise ValidationError("both corpora need gold EDU spans")
    jobs = [(f, a, train, test, params) for a in ablations for f in frameworks]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(j) for j in jobs]


def render_ablation(cells):
    width = max(len("Model"), *(len(c.name) for c in cells))
    lines = [f"{'Model':<{width}}  {'Precision':>9}  {'Recall':>6}  {'F1 score':>8}"]
    last = None
    for c in cells:
        if last is not None and c.ablation != last:
            lines.append("-" * len(lines[0]))
        last = c.ablation
        r = c.report.b
        lines.append(f"{c.name:<{width}}  {r.precision:>9.1f}  {r.recall:>6.1f}  {r.f1:>8.1f}")
    return "\n".join(lines)


def default_workers():
    return os.cpu_count() or 1


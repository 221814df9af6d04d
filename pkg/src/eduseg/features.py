"""Feature extraction for boundary positions.

Position ``i`` (1-based, ``1 <= i <= n - 1``) sits between tokens ``i`` and
``i + 1``.  With pairing on, both tokens are described under the ``L:`` and
``R:`` roles; with pairing off only token ``i + 1`` is described, under ``T:``.

A feature item is either a string (binary indicator) or a ``(name, value)``
pair for real-valued features.  Strings are namespaced with colons and never
contain whitespace.
"""

from __future__ import annotations

import hashlib
import json
import weakref
from collections import Counter
from itertools import chain, repeat
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import check_spans
from .exceptions import StateError, ValidationError
from .syntax import (
    count_constituents_over,
    largest_constituent_ending_at,
    largest_constituent_starting_at,
    lowest_spanning_subtree,
    production_rule,
)

ABSENT = "ABSENT"
END = "END"
DISTANCE_BUCKETS = 5


@dataclass(frozen=True)
class FeatureConfig:
    pairing: bool = True
    global_features: bool = False
    contextual: bool = True
    context_window: int = 1

    def __post_init__(self):
        if self.context_window != 1:
            raise ValueError("only a context window of 1 is supported")

    def to_dict(self):
        return asdict(self)

    def fingerprint(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def bucket(value):
    return str(value) if value < DISTANCE_BUCKETS else f"{DISTANCE_BUCKETS}+"


def _rule_string(node):
    return production_rule(node).replace(" -> ", "->").replace(" ", "+")


_token_cache = weakref.WeakKeyDictionary()


def _token_strings(sentence):
    """Unprefixed basic strings for every token, cached per sentence."""
    cached = _token_cache.get(sentence)
    if cached is not None:
        return cached
    tree = sentence.tree
    n = len(sentence)
    out = []
    for tok in sentence.tokens:
        k = tok.index
        s = largest_constituent_starting_at(tree, k)
        e = largest_constituent_ending_at(tree, k)
        out.append([
            f"pos={tok.pos}",
            f"lemma={tok.lemma}",
            f"bos={int(k == 1)}",
            f"eos={int(k == n)}",
            f"start_tag={s.label}",
            f"start_depth={s.depth}",
            f"start_rule={_rule_string(s)}",
            f"end_tag={e.label}",
            f"end_depth={e.depth}",
            f"end_rule={_rule_string(e)}",
        ])
    _token_cache[sentence] = out
    return out


def _scope(position, n, pairing):
    if not 1 <= position <= n - 1:
        raise IndexError(f"label position {position} outside 1..{n - 1}")
    if pairing:
        return (("L:", position), ("R:", position + 1))
    return (("T:", position + 1),)


def basic_features(sentence, position, pairing=True):
    strings = _token_strings(sentence)
    items = []
    for role, k in _scope(position, len(sentence), pairing):
        items.extend(role + s for s in strings[k - 1])
    return items


def _edu_starts(boundaries, n):
    spans = check_spans(boundaries, n)
    return [s for s, _ in spans]


def _neighbors(starts, k, n):
    """Nearest EDU start at-or-before ``k`` and strictly after ``k`` (``n + 1`` sentinel)."""
    left = 1
    right = n + 1
    for s in starts:
        if s <= k:
            left = s
        else:
            right = s
            break
    return left, right


def _global_for_token(sentence, k, starts, role):
    tree = sentence.tree
    n = len(sentence)
    lb, rb = _neighbors(starts, k, n)
    left_tok = sentence.tokens[lb - 1]
    items = [f"{role}lb_pos={left_tok.pos}", f"{role}lb_lemma={left_tok.lemma}"]
    if rb <= n:
        right_tok = sentence.tokens[rb - 1]
        items += [f"{role}rb_pos={right_tok.pos}", f"{role}rb_lemma={right_tok.lemma}"]
    else:
        items += [f"{role}rb_pos={END}", f"{role}rb_lemma={END}"]
    ldist, rdist = k - lb, rb - k
    items += [
        f"{role}ldist={bucket(ldist)}",
        f"{role}rdist={bucket(rdist)}",
        (f"{role}ldist_raw", float(ldist)),
        (f"{role}rdist_raw", float(rdist)),
        f"{role}lcons={bucket(count_constituents_over(tree, lb, k))}",
        f"{role}rcons={bucket(count_constituents_over(tree, k, rb - 1))}",
        f"{role}lspan_tag={lowest_spanning_subtree(tree, lb, k).label}",
        f"{role}rspan_tag={lowest_spanning_subtree(tree, k, rb - 1).label}",
    ]
    return items


def global_features(sentence, position, boundaries, pairing=True):
    """Features derived from an initial segmentation ``boundaries`` (EDU spans)."""
    n = len(sentence)
    starts = _edu_starts(boundaries, n)
    items = []
    for role, k in _scope(position, n, pairing):
        items.extend(_global_for_token(sentence, k, starts, role))
    return items


def _prefixed(items, prefix):
    return [prefix + it if isinstance(it, str) else (prefix + it[0], it[1]) for it in items]


def contextualize(vectors):
    """Append each neighbor's own items under ``prev:`` / ``next:``."""
    out = []
    last = len(vectors) - 1
    for p, own in enumerate(vectors):
        row = list(own)
        row += _prefixed(vectors[p - 1], "prev:") if p > 0 else ["prev:" + ABSENT]
        row += _prefixed(vectors[p + 1], "next:") if p < last else ["next:" + ABSENT]
        out.append(row)
    return out


def sentence_features(sentence, config, boundaries=None):
    """Item lists for every label position of ``sentence`` under ``config``."""
    n = len(sentence)
    if config.global_features:
        if boundaries is None:
            raise ValueError("global features need an initial segmentation")
        starts = _edu_starts(boundaries, n)
    elif boundaries is not None:
        raise ValueError("an initial segmentation was given but global features are off")
    rows = []
    for i in range(1, n):
        items = basic_features(sentence, i, config.pairing)
        if config.global_features:
            for role, k in _scope(i, n, config.pairing):
                items.extend(_global_for_token(sentence, k, starts, role))
        rows.append(items)
    if config.contextual and rows:
        rows = contextualize(rows)
    return rows


def _item_name(item):
    return item if isinstance(item, str) else item[0]


class FeatureVocabulary:
    """Bidirectional feature-string <-> dense id map."""

    def __init__(self, strings=(), frozen=False):
        self.forward = {}
        self.inverse = []
        self.frozen = False
        for s in strings:
            self.intern(s)
        self.frozen = frozen

    def __len__(self):
        return len(self.inverse)

    def __contains__(self, s):
        return s in self.forward

    def get(self, s):
        return self.forward.get(s)

    def intern(self, s):
        fid = self.forward.get(s)
        if fid is not None:
            return fid
        if self.frozen:
            raise StateError(f"cannot intern {s!r} into a frozen vocabulary")
        if not s or any(ch.isspace() for ch in s):
            raise ValidationError(f"feature string {s!r} is empty or contains whitespace")
        fid = len(self.inverse)
        self.forward[s] = fid
        self.inverse.append(s)
        return fid

    def freeze(self):
        self.frozen = True
        return self

    @classmethod
    def from_counts(cls, rows, min_count=1):
        """Vocabulary of names seen at >= ``min_count`` positions, in first-seen order."""
        if min_count <= 1:
            keys = dict.fromkeys(chain.from_iterable(rows))
            names = dict.fromkeys(k if k.__class__ is str else k[0] for k in keys)
            return cls(names, frozen=True)
        counts = Counter()
        for row in rows:
            counts.update({_item_name(it) for it in row})
        return cls((s for s in counts if counts[s] >= min_count), frozen=True)

    def fingerprint(self):
        h = hashlib.sha256()
        for s in self.inverse:
            h.update(s.encode())
            h.update(b"\n")
        return h.hexdigest()[:16]


def index(items, vocab, training=False):
    """Map items to a sparse ``{id: value}`` vector; unseen names are dropped at inference."""
    if training and vocab.frozen:
        raise StateError("training-mode indexing needs an unfrozen vocabulary")
    if not training and not vocab.frozen:
        raise StateError("inference-mode indexing needs a frozen vocabulary")
    vec = {}
    for it in items:
        name, value = (it, 1.0) if isinstance(it, str) else it
        fid = vocab.intern(name) if training else vocab.get(name)
        if fid is not None:
            vec[fid] = float(value)
    return {k: v for k, v in vec.items() if v != 0.0}


def rows_to_csr(rows, vocab):
    """Index item lists against a frozen vocabulary into a CSR matrix.

    Duplicate names in a row collapse to one entry (the first occurrence).
    """
    n_rows, n_features = len(rows), len(vocab)
    flat = list(chain.from_iterable(rows))
    get = vocab.forward.get
    ids = np.fromiter(map(get, flat, repeat(-1)), dtype=np.int64, count=len(flat))
    data = np.ones(len(flat))
    for j in np.flatnonzero(ids < 0):
        it = flat[j]
        if it.__class__ is not str:
            fid = get(it[0])
            if fid is not None:
                ids[j] = fid
                data[j] = float(it[1])
    row_of = np.repeat(np.arange(n_rows, dtype=np.int64),
                       np.fromiter(map(len, rows), dtype=np.int64, count=n_rows))
    keep = (ids >= 0) & (data != 0.0)
    row_of, ids, data = row_of[keep], ids[keep], data[keep]
    _, first = np.unique(row_of * max(n_features, 1) + ids, return_index=True)
    row_of, ids, data = row_of[first], ids[first], data[first]
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(row_of, minlength=n_rows), out=indptr[1:])
    return sp.csr_matrix((data, ids, indptr), shape=(n_rows, n_features))


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Sentence -> sparse position-by-feature matrix transformer.

    ``fit`` builds the vocabulary; ``transform`` returns one CSR matrix per
    sentence with ``len(sentence) - 1`` rows.  When ``global_features`` is on,
    pass the initial segmentations (EDU spans per sentence) as ``initial``.
    """

    def __init__(self, pairing=True, global_features=False, contextual=True,
                 min_feature_count=1):
        self.pairing = pairing
        self.global_features = global_features
        self.contextual = contextual
        self.min_feature_count = min_feature_count

    @property
    def config(self):
        return FeatureConfig(pairing=self.pairing, global_features=self.global_features,
                             contextual=self.contextual)

    def extract(self, sentences, initial=None):
        config = self.config
        if config.global_features:
            if initial is None:
                raise ValueError("global features need initial segmentations")
            if len(initial) != len(sentences):
                raise ValidationError("one initial segmentation per sentence is required")
            return [sentence_features(s, config, b) for s, b in zip(sentences, initial)]
        return [sentence_features(s, config) for s in sentences]

    def fit(self, sentences, y=None, initial=None):
        self.fit_transform(sentences, y, initial=initial)
        return self

    def fit_transform(self, sentences, y=None, initial=None):
        if self.min_feature_count < 1:
            raise ValueError("min_feature_count must be >= 1")
        rows = self.extract(sentences, initial)
        self.vocabulary_ = FeatureVocabulary.from_counts(
            (r for sent_rows in rows for r in sent_rows), self.min_feature_count)
        self.n_features_ = len(self.vocabulary_)
        return [rows_to_csr(r, self.vocabulary_) for r in rows]

    def transform(self, sentences, initial=None):
        check_is_fitted(self, "vocabulary_")
        return [rows_to_csr(r, self.vocabulary_) for r in self.extract(sentences, initial)]

    def fingerprint(self):
        check_is_fitted(self, "vocabulary_")
        return self.config.fingerprint() + "-" + self.vocabulary_.fingerprint()

"""Seeded synthetic corpora whose boundaries follow a known rule.

A boundary is inserted before token ``k`` when

* token ``k - 1`` is a comma and token ``k`` is a subordinator (the pair),
* token ``k - 2`` is not a blocker, and
* at least ``min_gap`` tokens separate ``k`` from the previous boundary.

Trees are a deterministic chunking of the tag sequence, so they add no
information beyond the tags; the pairing window and the global distance
features are what separate the ablation settings.
"""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, Sentence, boundaries_to_spans
from .syntax import ParseTree

_OPEN_CLASS = {
    "DT": ["the", "a", "this", "every"],
    "NN": [f"noun{i}" for i in range(12)],
    "VB": [f"verb{i}" for i in range(8)],
    "JJ": [f"adj{i}" for i in range(6)],
    "IN": ["of", "in", "on", "with"],
    "RB": ["very", "often", "soon"],
    "PRP": ["he", "she", "they"],
}
_SUBORDINATORS = ["that", "because", "which", "although"]
_BLOCKERS = ["not", "never", "hardly"]
_PHRASES = ["NP", "VP", "PP", "S"]


_CHUNK_LABEL = {"SUB": "SBAR", "NEG": "ADVP", "DT": "NP", "NN": "NP", "JJ": "NP",
                "PRP": "NP", "VB": "VP", "IN": "PP", "RB": "ADVP"}


def _chunk_tree(tags, words):
    """``S`` over comma-delimited chunks, each labeled by its first tag."""
    children, chunk = [], []

    def flush():
        if chunk:
            label = _CHUNK_LABEL.get(chunk[0][0], "X")
            children.append((label, [(t, [w]) for t, w in chunk]))
            chunk.clear()

    for t, w in zip(tags, words):
        if t in (",", "."):
            flush()
            children.append((t, [w]))
        else:
            chunk.append((t, w))
    flush()
    return ParseTree.from_nested(("S", children))


def _sample_tokens(rng, length, p_comma, p_sub_after_comma, p_sub, p_block):
    tags, words = [], []
    tag_names = list(_OPEN_CLASS)
    for k in range(length):
        after_comma = bool(tags) and tags[-1] == ","
        u = rng.random()
        if k == length - 1:
            tags.append(".")
            words.append(".")
        elif k > 0 and after_comma and u < p_sub_after_comma:
            tags.append("SUB")
            words.append(_SUBORDINATORS[int(rng.integers(len(_SUBORDINATORS)))])
        elif k > 0 and not after_comma and u < p_comma:
            tags.append(",")
            words.append(",")
        elif u < p_comma + p_sub:
            tags.append("SUB")
            words.append(_SUBORDINATORS[int(rng.integers(len(_SUBORDINATORS)))])
        elif u < p_comma + p_sub + p_block:
            tags.append("NEG")
            words.append(_BLOCKERS[int(rng.integers(len(_BLOCKERS)))])
        else:
            t = tag_names[int(rng.integers(len(tag_names)))]
            tags.append(t)
            words.append(_OPEN_CLASS[t][int(rng.integers(len(_OPEN_CLASS[t])))])
    return tags, words


def rule_boundaries(tags, min_gap):
    """Token indices (1-based) that start an EDU under the generating rule."""
    last = 1
    out = []
    for k in range(2, len(tags) + 1):
        pair = tags[k - 2] == "," and tags[k - 1] == "SUB"
        blocked = k >= 3 and tags[k - 3] == "NEG"
        if pair and not blocked and k - last >= min_gap:
            out.append(k)
            last = k
    return out


def make_corpus(n_sentences=5000, seed=0, min_length=8, max_length=20, min_gap=4,
                sentences_per_doc=10, p_comma=0.2, p_sub_after_comma=0.6, p_sub=0.05,
                p_block=0.08, doc_prefix="syn"):
    """Generate sentences with gold spans; ``doc_id`` groups consecutive sentences."""
    rng = np.random.default_rng(seed)
    sentences, spans = [], []
    for s in range(n_sentences):
        length = int(rng.integers(min_length, max_length + 1))
        tags, words = _sample_tokens(rng, length, p_comma, p_sub_after_comma, p_sub, p_block)
        tree = _chunk_tree(tags, words)
        doc_id = f"{doc_prefix}{s // sentences_per_doc:05d}"
        sent = Sentence.from_tree(tree, doc_id, s % sentences_per_doc)
        sentences.append(sent)
        spans.append(boundaries_to_spans(rule_boundaries(tags, min_gap), length))
    return Corpus(sentences, spans)


def train_test_split(corpus, test_fraction=0.2):
    """Split by document: the last ``test_fraction`` of documents form the test set."""
    docs = corpus.doc_ids
    cut = int(round(len(docs) * (1 - test_fraction)))
    return corpus.subset(docs[:cut]), corpus.subset(docs[cut:])

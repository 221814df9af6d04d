"""Token-level boundary metrics, error contingency tables and significance tests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, rankdata

from .corpus import B, C
from .exceptions import AlignmentError


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class PrfReport:
    """Per-class and macro-averaged scores, as percentages in [0, 100]."""

    b: ClassScores
    c: ClassScores
    macro_precision: float
    macro_recall: float
    macro_f1: float
    undefined: frozenset = field(default_factory=frozenset)

    def as_dict(self):
        def cls(s):
            return {"precision": s.precision, "recall": s.recall, "f1": s.f1,
                    "tp": s.tp, "fp": s.fp, "fn": s.fn}
        return {"B": cls(self.b), "C": cls(self.c),
                "macro": {"precision": self.macro_precision, "recall": self.macro_recall,
                          "f1": self.macro_f1},
                "undefined": sorted(self.undefined)}


def _flatten_aligned(gold, pred):
    gold, pred = list(gold), list(pred)
    if len(gold) != len(pred):
        raise AlignmentError(f"{len(gold)} gold sequences but {len(pred)} predicted")
    g_all, p_all = [], []
    for k, (g, p) in enumerate(zip(gold, pred)):
        g, p = list(g), list(p)
        if len(g) != len(p):
            raise AlignmentError(f"sentence {k}: {len(g)} gold labels but {len(p)} predicted")
        g_all.extend(g)
        p_all.extend(p)
    return np.array(g_all, dtype=object), np.array(p_all, dtype=object)


def _class_scores(g, p, label, name, undefined):
    tp = int(np.sum((g == label) & (p == label)))
    fp = int(np.sum((g != label) & (p == label)))
    fn = int(np.sum((g == label) & (p != label)))

    def ratio(num, den, what):
        if den == 0:
            undefined.add(f"{name}.{what}")
            return 0.0
        return 100.0 * num / den

    prec = ratio(tp, tp + fp, "precision")
    rec = ratio(tp, tp + fn, "recall")
    if prec + rec == 0:
        undefined.add(f"{name}.f1")
        f1 = 0.0
    else:
        f1 = 2 * prec * rec / (prec + rec)
    return ClassScores(prec, rec, f1, tp, fp, fn)


def prf(gold, pred):
    """Precision/recall/F1 for the B and C classes over aligned label sequences."""
    g, p = _flatten_aligned(gold, pred)
    undefined = set()
    b = _class_scores(g, p, B, "B", undefined)
    c = _class_scores(g, p, C, "C", undefined)
    return PrfReport(b, c, (b.precision + c.precision) / 2, (b.recall + c.recall) / 2,
                     (b.f1 + c.f1) / 2, frozenset(undefined))


def error_indicators(gold, pred):
    g, p = _flatten_aligned(gold, pred)
    return g != p


@dataclass(frozen=True)
class ErrorContingency:
    """Rows index model A (no error, error), columns model B."""

    table: np.ndarray

    @property
    def total(self):
        return int(self.table.sum())

    @property
    def row_totals(self):
        return self.table.sum(axis=1)

    @property
    def col_totals(self):
        return self.table.sum(axis=0)

    def as_dict(self):
        t = self.table
        return {"a_ok_b_ok": int(t[0, 0]), "a_ok_b_err": int(t[0, 1]),
                "a_err_b_ok": int(t[1, 0]), "a_err_b_err": int(t[1, 1]),
                "a_errors": int(t[1].sum()), "b_errors": int(t[:, 1].sum()),
                "total": self.total}


def error_contingency(errors_a, errors_b):
    a = np.asarray(errors_a, dtype=bool).ravel()
    b = np.asarray(errors_b, dtype=bool).ravel()
    if a.shape != b.shape:
        raise AlignmentError(f"error indicators cover {a.size} vs {b.size} tokens")
    table = np.array([[np.sum(~a & ~b), np.sum(~a & b)],
                      [np.sum(a & ~b), np.sum(a & b)]], dtype=np.int64)
    return ErrorContingency(table)


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # sum of ranks of positive differences
    p_value: float
    n: int
    method: str
    degenerate: bool = False


EXACT_MAX_N = 12


def wilcoxon_signed_rank(a, b, method="auto"):
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped.  ``method="auto"`` enumerates all sign
    assignments for ``n <= 12`` and uses the tie- and continuity-corrected
    normal approximation otherwise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise AlignmentError("paired samples differ in length")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, "degenerate", degenerate=True)
    if n < 5:
        raise ValueError(f"need at least 5 non-zero differences, got {n}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "approx"
    mean = n * (n + 1) / 4.0
    if method == "exact":
        if n > 20:
            raise ValueError("exact enumeration is limited to n <= 20")
        signs = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
        dist = signs @ ranks
        dev = abs(w_plus - mean)
        p = float(np.mean(np.abs(dist - mean) >= dev - 1e-9))
    elif method == "approx":
        _, counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - (counts ** 3 - counts).sum() / 48.0
        if var <= 0:
            return WilcoxonResult(w_plus, 1.0, n, method, degenerate=True)
        # 0.5 continuity correction toward the mean.
        z = max(abs(w_plus - mean) - 0.5, 0.0) / np.sqrt(var)
        p = float(2 * norm.sf(z))
    else:
        raise ValueError(f"unknown method {method!r}")
    return WilcoxonResult(w_plus, min(1.0, p), n, method)


def per_document_f1(doc_ids, gold, pred):
    """B-class F1 per document; ``doc_ids`` gives the document of each sentence."""
    groups = {}
    for doc, g, p in zip(doc_ids, gold, pred):
        groups.setdefault(doc, ([], []))
        groups[doc][0].append(g)
        groups[doc][1].append(p)
    return {doc: prf(g, p).b.f1 for doc, (g, p) in groups.items()}


# ------------------------------------------------------------------ rendering

def _fmt(x):
    return f"{x:.1f}"


def render_b_table(reports):
    """``{model: PrfReport}`` -> B-class precision/recall/F1 table."""
    width = max([len("Model")] + [len(m) for m in reports])
    lines = [f"{'Model':<{width}}  {'Precision':>9}  {'Recall':>6}  {'F1 score':>8}"]
    for name, r in reports.items():
        lines.append(f"{name:<{width}}  {_fmt(r.b.precision):>9}  {_fmt(r.b.recall):>6}  "
                     f"{_fmt(r.b.f1):>8}")
    return "\n".join(lines)


def render_class_table(reports):
    """B, C and macro-average rows per model."""
    width = max([len("Model")] + [len(m) for m in reports])
    lines = [f"{'Model':<{width}}  {'Class':<9}  {'Prec':>5}  {'Rec':>5}  {'F1':>5}"]
    for name, r in reports.items():
        rows = [("B", r.b.precision, r.b.recall, r.b.f1),
                ("C", r.c.precision, r.c.recall, r.c.f1),
                ("Macro-Avg", r.macro_precision, r.macro_recall, r.macro_f1)]
        for k, (cls, p, rc, f) in enumerate(rows):
            label = name if k == 0 else ""
            lines.append(f"{label:<{width}}  {cls:<9}  {_fmt(p):>5}  {_fmt(rc):>5}  {_fmt(f):>5}")
    return "\n".join(lines)


def render_contingency(ct, name_a="A", name_b="B"):
    t = ct.table
    w = max(len(name_a), 6)
    rows = [
        f"{'':<{w}}  {'':<6}  {name_b:^17}",
        f"{'':<{w}}  {'':<6}  {'~Error':>8} {'Error':>8}  {'Total':>8}",
        f"{name_a:<{w}}  {'~Error':<6}  {t[0, 0]:>8} {t[0, 1]:>8}  {t[0].sum():>8}",
        f"{'':<{w}}  {'Error':<6}  {t[1, 0]:>8} {t[1, 1]:>8}  {t[1].sum():>8}",
        f"{'':<{w}}  {'Total':<6}  {t[:, 0].sum():>8} {t[:, 1].sum():>8}  {t.sum():>8}",
    ]
    return "\n".join(rows)

"""Sentences, gold EDU boundaries, and the file formats that carry them.

Label sequences use ``"B"``/``"C"`` strings.  Entry ``i`` (0-based) governs the
position before token ``i + 2``; the sentence-initial token is never labeled.
EDU spans are 1-based inclusive ``(start, end)`` token pairs.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import AlignmentError, FormatError, ValidationError
from .syntax import ParseTree, parse_bracketed_tree

B = "B"
C = "C"

RECORD_FORMAT = "eduseg.sentence"
RECORD_VERSION = 1

_WS = re.compile(r"\s+")

# Opt-in only: PTB escapes that differ from raw text.
PTB_ESCAPES = {
    "-LRB-": "(", "-RRB-": ")", "-LSB-": "[", "-RSB-": "]",
    "-LCB-": "{", "-RCB-": "}", "``": '"', "''": '"',
}


@dataclass(frozen=True)
class Token:
    index: int
    form: str
    lemma: str
    pos: str

    def __post_init__(self):
        if self.index < 1:
            raise ValidationError(f"token index must be >= 1, got {self.index}")
        if not self.form:
            raise ValidationError(f"token {self.index} has an empty form")


@dataclass(frozen=True, eq=False)
class Sentence:
    tokens: tuple
    tree: ParseTree
    doc_id: str = ""
    sent_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        for k, tok in enumerate(self.tokens, start=1):
            if tok.index != k:
                raise ValidationError(f"token indices not contiguous at {k}: {tok.index}")
        if len(self.tree) != len(self.tokens):
            raise ValidationError(
                f"tree has {len(self.tree)} leaves but sentence has {len(self.tokens)} tokens")
        for tok, word in zip(self.tokens, self.tree.words):
            if tok.form != word:
                raise ValidationError(f"token {tok.index} {tok.form!r} != tree leaf {word!r}")

    @classmethod
    def from_tree(cls, tree, doc_id="", sent_id=0, lemmas=None):
        """Tokens come verbatim from the tree leaves; lemmas default to lowercase forms."""
        if isinstance(tree, str):
            tree = parse_bracketed_tree(tree)
        words, tags = tree.words, tree.pos_tags
        if lemmas is None:
            lemmas = [w.lower() for w in words]
        elif len(lemmas) != len(words):
            raise ValidationError("lemma count does not match token count")
        tokens = tuple(Token(k, w, l, p) for k, (w, l, p) in enumerate(zip(words, lemmas, tags), 1))
        return cls(tokens, tree, doc_id, sent_id)

    def __len__(self):
        return len(self.tokens)

    @property
    def forms(self):
        return [t.form for t in self.tokens]

    def __repr__(self):
        return f"Sentence({self.doc_id!r}, {self.sent_id}, {' '.join(self.forms)!r})"


def check_spans(spans, n):
    """Validate that ``spans`` partition ``1..n``; returns them as a tuple of pairs."""
    spans = tuple((int(s), int(e)) for s, e in spans)
    if n < 1:
        raise ValidationError("a sentence needs at least one token")
    if not spans:
        raise ValidationError("no EDU spans given")
    expected = 1
    for s, e in spans:
        if s != expected or e < s:
            raise ValidationError(f"spans {spans} do not partition 1..{n}")
        expected = e + 1
    if expected != n + 1:
        raise ValidationError(f"spans {spans} do not partition 1..{n}")
    return spans


def check_labels(labels, n):
    labels = tuple(labels)
    if len(labels) != n - 1:
        raise ValidationError(f"expected {n - 1} labels for {n} tokens, got {len(labels)}")
    bad = set(labels) - {B, C}
    if bad:
        raise ValidationError(f"unknown labels {sorted(bad)}")
    return labels


def spans_to_labels(spans, n):
    spans = check_spans(spans, n)
    starts = {s for s, _ in spans}
    return tuple(B if k in starts else C for k in range(2, n + 1))


def labels_to_spans(labels, n):
    labels = check_labels(labels, n)
    starts = [1] + [k for k, lab in enumerate(labels, start=2) if lab == B]
    ends = [s - 1 for s in starts[1:]] + [n]
    return tuple(zip(starts, ends))


def spans_to_boundaries(spans):
    """Token indices (excluding 1) at which an EDU starts."""
    return [s for s, _ in spans[1:]]


def boundaries_to_spans(boundaries, n):
    starts = sorted(set(boundaries))
    if starts and (starts[0] < 2 or starts[-1] > n):
        raise ValidationError(f"boundary indices {starts} outside 2..{n}")
    starts = [1] + starts
    ends = [s - 1 for s in starts[1:]] + [n]
    return tuple(zip(starts, ends))


def bracketed_text(sentence, spans):
    """Render ``[ w w ] [ w ]`` with one bracket pair per EDU."""
    forms = sentence.forms
    return " ".join("[ " + " ".join(forms[s - 1:e]) + " ]" for s, e in spans)


def _squash(text, escapes):
    if escapes:
        text = " ".join(escapes.get(w, w) for w in text.split())
    return _WS.sub("", text)


def align_document(sentences, edu_texts, ptb_escapes=False):
    """Map EDU strings onto the tokens of consecutive sentences.

    Returns one span tuple per sentence.  Whitespace is ignored on both sides.
    An EDU that crosses a sentence boundary rejects the whole document.
    """
    escapes = PTB_ESCAPES if ptb_escapes else None
    token_chars, token_ends, owners = [], [], []
    offset = 0
    for si, sent in enumerate(sentences):
        for tok in sent.tokens:
            chars = _squash(tok.form, escapes)
            token_chars.append(chars)
            offset += len(chars)
            token_ends.append(offset)
            owners.append((si, tok.index))
    token_stream = "".join(token_chars)
    edu_pieces = [_squash(t, escapes) for t in edu_texts]
    edu_stream = "".join(edu_pieces)

    if token_stream != edu_stream:
        diverge = next((k for k, (a, b) in enumerate(zip(token_stream, edu_stream)) if a != b),
                       min(len(token_stream), len(edu_stream)))
        tok_pos = next((t for t, end in enumerate(token_ends) if end > diverge), len(token_ends) - 1)
        si, ti = owners[tok_pos] if owners else (0, 0)
        form = sentences[si].tokens[ti - 1].form if owners else ""
        raise AlignmentError(
            f"EDU text diverges from tokens at sentence {si}, token {ti} ({form!r}); "
            f"char offset {diverge}")

    end_to_token = {end: t for t, end in enumerate(token_ends)}
    edu_starts = set()  # global token positions (0-based) starting an EDU
    cursor = 0
    for k, piece in enumerate(edu_pieces):
        if not piece:
            continue
        if cursor not in end_to_token and cursor != 0:
            raise AlignmentError(f"EDU {k} starts inside a token")
        edu_starts.add(0 if cursor == 0 else end_to_token[cursor] + 1)
        cursor += len(piece)
        if cursor not in end_to_token:
            si, ti = owners[next(t for t, end in enumerate(token_ends) if end > cursor)]
            raise AlignmentError(f"EDU {k} ends inside token {ti} of sentence {si}")

    result = []
    first = 0
    for si, sent in enumerate(sentences):
        n = len(sent)
        if first not in edu_starts:
            raise AlignmentError(
                f"an EDU crosses into sentence {si} (doc {sent.doc_id!r}); document rejected")
        local = [t - first + 1 for t in sorted(edu_starts) if first < t < first + n]
        result.append(boundaries_to_spans(local, n))
        first += n
    return result


def align_edu_strings(sentence, edu_texts, ptb_escapes=False):
    return align_document([sentence], edu_texts, ptb_escapes=ptb_escapes)[0]


@dataclass
class Corpus:
    """Parallel lists of sentences and (optional) gold EDU spans."""

    sentences: list
    spans: list = field(default=None)

    def __post_init__(self):
        self.sentences = list(self.sentences)
        if self.spans is None:
            self.spans = [None] * len(self.sentences)
        self.spans = [None if s is None else check_spans(s, len(sent))
                      for sent, s in zip(self.sentences, self.spans)]
        if len(self.spans) != len(self.sentences):
            raise ValidationError("spans and sentences differ in length")

    def __len__(self):
        return len(self.sentences)

    @property
    def has_gold(self):
        return all(s is not None for s in self.spans)

    @property
    def doc_ids(self):
        return list(dict.fromkeys(s.doc_id for s in self.sentences))

    def labels(self):
        return [spans_to_labels(sp, len(s)) for s, sp in zip(self.sentences, self.spans)]

    def subset(self, doc_ids):
        keep = set(doc_ids)
        pairs = [(s, sp) for s, sp in zip(self.sentences, self.spans) if s.doc_id in keep]
        return Corpus([p[0] for p in pairs], [p[1] for p in pairs])

    def stats(self):
        """Document, sentence, EDU and in-sentence boundary counts."""
        edus = sum(len(sp) for sp in self.spans if sp is not None)
        boundaries = sum(lab.count(B) for lab in self.labels()) if self.has_gold else None
        return {
            "documents": len(self.doc_ids),
            "sentences": len(self.sentences),
            "edus": edus if self.has_gold else None,
            "boundaries": boundaries,
        }

    def check_bookkeeping(self):
        st = self.stats()
        if st["boundaries"] != st["edus"] - st["sentences"]:
            raise ValidationError(f"boundary bookkeeping violated: {st}")
        return st


# ---------------------------------------------------------------- file formats

def _documents(lines):
    doc = []
    for line in lines:
        line = line.strip()
        if not line:
            if doc:
                yield doc
                doc = []
            continue
        doc.append(line)
    if doc:
        yield doc


def read_parse_file(path):
    """One bracketed tree per line; blank lines separate documents."""
    with open(path, encoding="utf-8") as fh:
        docs = []
        for d, lines in enumerate(_documents(fh)):
            trees = []
            for k, line in enumerate(lines):
                try:
                    trees.append(parse_bracketed_tree(line))
                except FormatError as exc:
                    raise FormatError(f"{path}: document {d}, tree {k}: {exc}") from exc
            docs.append(trees)
    return docs


def read_edu_file(path):
    """One EDU text per line; blank lines separate documents."""
    with open(path, encoding="utf-8") as fh:
        return list(_documents(fh))


def _build_docs(parse_docs, edu_docs, doc_ids, ptb_escapes):
    if edu_docs is not None and len(edu_docs) != len(parse_docs):
        raise AlignmentError(
            f"{len(parse_docs)} parse documents but {len(edu_docs)} EDU documents")
    sentences, spans = [], []
    for d, trees in enumerate(parse_docs):
        doc_id = doc_ids[d]
        sents = [Sentence.from_tree(t, doc_id, k) for k, t in enumerate(trees)]
        sentences.extend(sents)
        if edu_docs is None:
            spans.extend([None] * len(sents))
            continue
        try:
            spans.extend(align_document(sents, edu_docs[d], ptb_escapes=ptb_escapes))
        except AlignmentError as exc:
            raise AlignmentError(f"document {doc_id!r}: {exc}") from exc
    return Corpus(sentences, spans)


def load_parse_and_edus(parse_path, edu_path=None, doc_ids=None, ptb_escapes=False):
    parse_docs = read_parse_file(parse_path)
    edu_docs = read_edu_file(edu_path) if edu_path is not None else None
    if doc_ids is None:
        stem = Path(parse_path).stem
        doc_ids = [f"{stem}#{d}" for d in range(len(parse_docs))]
    return _build_docs(parse_docs, edu_docs, doc_ids, ptb_escapes)


def load_manifest(path, ptb_escapes=False):
    """JSON object mapping doc_id -> {"parse": path, "edus": path}; paths relative to it."""
    base = Path(path).parent
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    parse_docs, edu_docs, ids = [], [], []
    for doc_id in sorted(manifest):
        entry = manifest[doc_id]
        trees = [t for doc in read_parse_file(base / entry["parse"]) for t in doc]
        parse_docs.append(trees)
        edu_docs.append([e for doc in read_edu_file(base / entry["edus"]) for e in doc])
        ids.append(doc_id)
    return _build_docs(parse_docs, edu_docs, ids, ptb_escapes)


def sentence_to_record(sentence, spans=None):
    return {
        "format": RECORD_FORMAT,
        "version": RECORD_VERSION,
        "doc_id": sentence.doc_id,
        "sent_id": sentence.sent_id,
        "tokens": [{"form": t.form, "lemma": t.lemma, "pos": t.pos} for t in sentence.tokens],
        "tree": sentence.tree.to_bracketed(),
        "boundaries": None if spans is None else spans_to_boundaries(spans),
    }


def record_to_sentence(record):
    """Returns ``(sentence, spans_or_None)``."""
    if record.get("format") != RECORD_FORMAT:
        raise FormatError(f"not an {RECORD_FORMAT} record")
    if record.get("version") != RECORD_VERSION:
        raise FormatError(f"unsupported record version {record.get('version')}")
    tree = parse_bracketed_tree(record["tree"])
    toks = record["tokens"]
    if [t["form"] for t in toks] != tree.words:
        raise ValidationError("record tokens do not match the tree leaves")
    if [t["pos"] for t in toks] != tree.pos_tags:
        raise ValidationError("record POS tags do not match the tree preterminals")
    sentence = Sentence.from_tree(tree, record["doc_id"], int(record["sent_id"]),
                                  lemmas=[t.get("lemma") or t["form"].lower() for t in toks])
    bnd = record.get("boundaries")
    spans = None if bnd is None else boundaries_to_spans(bnd, len(sentence))
    return sentence, spans


def iter_jsonl(lines):
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {lineno}: {exc.msg}", offset=exc.pos) from exc
        try:
            yield record_to_sentence(record)
        except (FormatError, ValidationError) as exc:
            raise type(exc)(f"line {lineno}: {exc}") from exc


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        pairs = list(iter_jsonl(fh))
    return Corpus([p[0] for p in pairs], [p[1] for p in pairs])


def write_jsonl(corpus, fh):
    for sent, spans in zip(corpus.sentences, corpus.spans):
        fh.write(json.dumps(sentence_to_record(sent, spans), ensure_ascii=False) + "\n")


def load_corpus(path, edu_path=None, ptb_escapes=False):
    """Dispatch on suffix: ``.jsonl`` records, ``.json`` manifest, else a parse file."""
    path = Path(path)
    if path.suffix == ".jsonl":
        return read_jsonl(path)
    if path.suffix == ".json":
        return load_manifest(path, ptb_escapes=ptb_escapes)
    return load_parse_and_edus(path, edu_path, ptb_escapes=ptb_escapes)

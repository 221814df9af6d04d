"""Command-line front end: ``eduseg {train,segment,evaluate,ablate,convert,synth}``."""

from __future__ import annotations

import argparse
import io
import json
import sys
import time
import warnings
from pathlib import Path

from . import __version__
from .corpus import (
    Corpus,
    bracketed_text,
    iter_jsonl,
    load_corpus,
    load_parse_and_edus,
    sentence_to_record,
    spans_to_labels,
    write_jsonl,
    _build_docs,
    _documents,
)
from .eval import (
    error_contingency,
    error_indicators,
    per_document_f1,
    prf,
    render_class_table,
    render_contingency,
    wilcoxon_signed_rank,
)
from .exceptions import AlignmentError, EduSegError, FormatError
from .pipeline import (
    ABLATIONS,
    FRAMEWORKS,
    EduSegmenter,
    default_workers,
    render_ablation,
    run_ablation_grid,
)
from .syntax import parse_bracketed_tree
from .synthetic import make_corpus, train_test_split

RUN_FORMAT = "eduseg.run"

# Options that may also come from --config; value is the fallback default.
MODEL_OPTIONS = {
    "framework": "crf",
    "pairing": True,
    "global_features": True,
    "contextual": True,
    "l2": 1.0,
    "C": 1.0,
    "max_iter": None,
    "tol": None,
    "min_feature_count": 1,
    "crossfold_pass1": 0,
    "seed": 0,
}


class CliError(Exception):
    pass


# ------------------------------------------------------------------ parser

def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--framework", choices=FRAMEWORKS)
    g.add_argument("--no-pairing", dest="pairing", action="store_false", default=None,
                   help="describe only the token after each position")
    g.add_argument("--no-global", dest="global_features", action="store_false", default=None,
                   help="one pass only")
    g.add_argument("--no-context", dest="contextual", action="store_false", default=None,
                   help="drop neighbor-position features")
    g.add_argument("--l2", type=float, help="CRF / logistic penalty (default 1.0)")
    g.add_argument("--C", dest="C", type=float, help="SVM penalty (default 1.0)")
    g.add_argument("--max-iter", type=int, help="optimizer cap (default per framework)")
    g.add_argument("--tol", type=float, help="stopping tolerance (default per framework)")
    g.add_argument("--min-feature-count", type=int)
    g.add_argument("--crossfold-pass1", type=int, metavar="K",
                   help="out-of-fold pass-1 predictions from K document folds")
    g.add_argument("--seed", type=int, help="random seed (default 0)")


def _add_corpus_flags(p, help_text):
    p.add_argument("corpus", help=help_text + " (.jsonl, .json manifest, or parse file)")
    p.add_argument("--edus", help="EDU text file paired with a parse file")


def build_parser():
    parser = argparse.ArgumentParser(prog="eduseg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"eduseg {__version__}")
    parser.add_argument("--config", help="JSON file of option defaults; flags win")
    parser.add_argument("--ptb-escapes", action="store_true", default=None,
                        help="treat -LRB- and friends as brackets when aligning EDU text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a segmentation model")
    _add_corpus_flags(p, "training corpus")
    p.add_argument("-o", "--output", required=True, help="model file to write")
    _add_model_flags(p)

    p = sub.add_parser("segment", help="segment sentences with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("input", nargs="?", default="-",
                   help="corpus file, or '-' for JSONL records / bracketed trees on stdin")
    p.add_argument("--edus", help=argparse.SUPPRESS)
    p.add_argument("--format", choices=("jsonl", "text"), default="jsonl")
    p.add_argument("-o", "--output", help="write here instead of stdout")

    p = sub.add_parser("evaluate", help="score predicted segmentations against gold")
    p.add_argument("gold")
    p.add_argument("pred", help="output of 'segment' (or any JSONL corpus)")
    p.add_argument("--compare", help="second prediction file: error table and Wilcoxon test")
    p.add_argument("--name", default="A", help="label of the first prediction set")
    p.add_argument("--compare-name", default="B")
    p.add_argument("--edus", help="EDU file paired with a parse-file gold corpus")
    p.add_argument("--json", dest="json_out", help="also write the report as JSON here")

    p = sub.add_parser("ablate", help="framework x {full,-p,-g,-pg} grid")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--train", help="training corpus")
    src.add_argument("--synthetic", type=int, metavar="N",
                     help="generate an N-sentence synthetic corpus and split it by document")
    p.add_argument("--test", help="test corpus (required with --train)")
    p.add_argument("--train-edus")
    p.add_argument("--test-edus")
    p.add_argument("--frameworks", help="comma-separated subset (default: crf,lr,svm)")
    p.add_argument("--ablations", help="comma-separated subset (default: full,-p,-g,-pg)")
    p.add_argument("--workers", type=int, help="parallel grid cells (default: all cores)")
    p.add_argument("--json", dest="json_out", help="write machine-readable results here")
    _add_model_flags(p)

    p = sub.add_parser("convert", help="parse + EDU files -> JSONL corpus")
    p.add_argument("parse")
    p.add_argument("--edus")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus as JSONL")
    p.add_argument("-n", "--sentences", type=int, default=5000)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", required=True)
    return parser


# ------------------------------------------------------------------ config

def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError(f"config {path} must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    if "random_state" in cfg:
        cfg.setdefault("seed", cfg.pop("random_state"))
    return cfg


def resolve(args, keys):
    """Flag value, else config value, else built-in default."""
    cfg = args._config
    unknown = set(cfg) - set(MODEL_OPTIONS) - {"workers", "ptb_escapes", "frameworks", "ablations"}
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key in keys:
        val = getattr(args, key, None)
        if val is None:
            val = cfg.get(key, MODEL_OPTIONS.get(key))
        out[key] = val
    return out


def _model_params(resolved):
    params = dict(resolved)
    params["random_state"] = params.pop("seed")
    return params


def _header(command, config):
    return {"format": RUN_FORMAT, "command": command, "eduseg_version": __version__,
            "config": config}


# ------------------------------------------------------------------ I/O helpers

def _log(msg):
    print(msg, file=sys.stderr)


def _ptb(args):
    return bool(args.ptb_escapes if args.ptb_escapes is not None
                else args._config.get("ptb_escapes", False))


def _read_corpus(path, edus=None, ptb_escapes=False):
    if not Path(path).exists():
        raise CliError(f"no such file: {path}")
    if Path(path).suffix == ".jsonl":
        with open(path, encoding="utf-8") as fh:
            return _records_corpus(fh)
    return load_corpus(path, edus, ptb_escapes=ptb_escapes)


def _records_corpus(lines):
    """JSONL corpus records; run headers written by ``segment`` are skipped."""
    kept = [ln for ln in lines if ln.strip() and not _is_header(ln)]
    pairs = list(iter_jsonl(kept))
    return Corpus([p[0] for p in pairs], [p[1] for p in pairs])


def _is_header(line):
    if RUN_FORMAT not in line:
        return False
    try:
        return json.loads(line).get("format") == RUN_FORMAT
    except (json.JSONDecodeError, AttributeError):
        return False


def _read_stdin_sentences(text):
    stripped = text.lstrip()
    if not stripped:
        return Corpus([], [])
    if stripped.startswith("{"):
        return _records_corpus(io.StringIO(text))
    docs = []
    for d, lines in enumerate(_documents(io.StringIO(text))):
        trees = []
        for k, line in enumerate(lines):
            try:
                trees.append(parse_bracketed_tree(line))
            except FormatError as exc:
                raise FormatError(f"stdin: document {d}, tree {k}: {exc}") from exc
        docs.append(trees)
    return _build_docs(docs, None, [f"stdin#{d}" for d in range(len(docs))], False)


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", encoding="utf-8")


# ------------------------------------------------------------------ commands

def cmd_train(args):
    resolved = resolve(args, MODEL_OPTIONS)
    corpus = _read_corpus(args.corpus, args.edus, _ptb(args))
    if not len(corpus):
        raise CliError(f"{args.corpus}: empty training corpus")
    stats = corpus.stats()
    _log(f"corpus: {stats['documents']} documents, {stats['sentences']} sentences, "
         f"{stats['edus']} EDUs, {stats['boundaries']} boundaries")
    t0 = time.perf_counter()
    model = EduSegmenter(**_model_params(resolved)).fit(corpus)
    for k, p in enumerate(model.passes_, start=1):
        d = p.diagnostics
        _log(f"pass {k}: {d['n_features']} features, {d['n_iter']} iterations, "
             f"final loss {d['loss']:.6g}")
    _log(f"trained in {time.perf_counter() - t0:.1f}s")
    model.save(args.output, run_config=_header("train", resolved))
    _log(f"wrote {args.output}")
    return 0


def cmd_segment(args):
    model = EduSegmenter.load(args.model)
    if args.input == "-":
        corpus = _read_stdin_sentences(sys.stdin.read())
    else:
        corpus = _read_corpus(args.input, args.edus)
    if not len(corpus):
        return 0
    spans = model.predict(corpus.sentences)
    config = {"model": str(args.model), "input": args.input, "format": args.format,
              "model_params": model.get_params()}
    out = _open_out(args.output)
    try:
        header = json.dumps(_header("segment", config), sort_keys=True)
        out.write(header + "\n" if args.format == "jsonl" else f"# {header}\n")
        for sent, sp_ in zip(corpus.sentences, spans):
            text = bracketed_text(sent, sp_)
            if args.format == "text":
                out.write(text + "\n")
            else:
                rec = sentence_to_record(sent, sp_)
                rec["spans"] = [list(s) for s in sp_]
                rec["edus"] = text
                out.write(json.dumps(rec, ensure_ascii=False) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    _log(f"segmented {len(corpus)} sentences")
    return 0


def _aligned_labels(gold, pred, what):
    if len(gold) != len(pred):
        raise AlignmentError(f"{what}: {len(pred)} sentences but gold has {len(gold)}")
    out = []
    for g, p, gs, ps in zip(gold.sentences, pred.sentences, gold.spans, pred.spans):
        name = f"{g.doc_id}/{g.sent_id}"
        if (g.doc_id, g.sent_id) != (p.doc_id, p.sent_id) or g.forms != p.forms:
            raise AlignmentError(f"{what}: sentence {name} does not match "
                                 f"{p.doc_id}/{p.sent_id}")
        if ps is None:
            raise AlignmentError(f"{what}: sentence {name} has no segmentation")
        out.append(spans_to_labels(ps, len(p)))
    return out


def cmd_evaluate(args):
    gold = _read_corpus(args.gold, args.edus, _ptb(args))
    if not gold.has_gold:
        raise CliError(f"{args.gold}: gold corpus lacks EDU segmentation")
    gold_labels = gold.labels()
    pred = _aligned_labels(gold, _read_corpus(args.pred), args.pred)
    reports = {args.name: prf(gold_labels, pred)}
    result = {"reports": {args.name: reports[args.name].as_dict()}}
    other = None
    if args.compare:
        other = _aligned_labels(gold, _read_corpus(args.compare), args.compare)
        reports[args.compare_name] = prf(gold_labels, other)
        result["reports"][args.compare_name] = reports[args.compare_name].as_dict()
    config = {"gold": args.gold, "pred": args.pred, "compare": args.compare}
    lines = ["# " + json.dumps(_header("evaluate", config), sort_keys=True),
             render_class_table(reports)]
    if other is not None:
        ct = error_contingency(error_indicators(gold_labels, pred),
                               error_indicators(gold_labels, other))
        result["contingency"] = ct.as_dict()
        lines += ["", render_contingency(ct, args.name, args.compare_name)]
        docs = [s.doc_id for s in gold.sentences]
        fa = per_document_f1(docs, gold_labels, pred)
        fb = per_document_f1(docs, gold_labels, other)
        keys = sorted(fa)
        try:
            w = wilcoxon_signed_rank([fa[k] for k in keys], [fb[k] for k in keys])
            result["wilcoxon"] = {"p_value": w.p_value, "n": w.n, "method": w.method,
                                  "statistic": w.statistic, "degenerate": w.degenerate}
            lines += ["", f"Wilcoxon signed-rank (per-document B F1): p = {w.p_value:.4g} "
                          f"(n = {w.n}, {w.method})"]
        except ValueError as exc:
            result["wilcoxon"] = None
            _log(f"wilcoxon test skipped: {exc}")
    print("\n".join(lines))
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump({"header": _header("evaluate", config), **result}, fh, indent=2,
                      sort_keys=True)
    return 0


def _split_list(value, allowed, what):
    items = [v.strip() for v in (value.split(",") if isinstance(value, str) else value)]
    bad = [v for v in items if v not in allowed]
    if bad or not items:
        raise CliError(f"unknown {what}: {bad}; choose from {list(allowed)}")
    return tuple(items)


def cmd_ablate(args):
    resolved = resolve(args, MODEL_OPTIONS)
    cfg = args._config
    frameworks = _split_list(args.frameworks or cfg.get("frameworks", FRAMEWORKS),
                             FRAMEWORKS, "frameworks")
    ablations = _split_list(args.ablations or cfg.get("ablations", tuple(ABLATIONS)),
                            ABLATIONS, "ablations")
    workers = args.workers if args.workers is not None else cfg.get("workers", default_workers())
    if args.synthetic is not None:
        train, test = train_test_split(make_corpus(args.synthetic, seed=resolved["seed"]))
        source = {"synthetic": args.synthetic}
    else:
        if not args.test:
            raise CliError("--test is required with --train")
        train = _read_corpus(args.train, args.train_edus, _ptb(args))
        test = _read_corpus(args.test, args.test_edus, _ptb(args))
        source = {"train": args.train, "test": args.test}
    params = _model_params(resolved)
    for key in ("framework", "pairing", "global_features"):
        params.pop(key)
    config = {**source, **resolved, "frameworks": list(frameworks),
              "ablations": list(ablations), "workers": workers}
    t0 = time.perf_counter()
    cells = run_ablation_grid(train, test, frameworks, ablations, workers=workers, **params)
    _log(f"grid of {len(cells)} cells in {time.perf_counter() - t0:.1f}s")
    print("# " + json.dumps(_header("ablate", config), sort_keys=True))
    print(render_ablation(cells))
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump({"header": _header("ablate", config),
                       "cells": [c.as_dict() for c in cells]}, fh, indent=2, sort_keys=True)
    return 0


def cmd_convert(args):
    corpus = load_parse_and_edus(args.parse, args.edus, ptb_escapes=_ptb(args))
    with open(args.output, "w", encoding="utf-8") as fh:
        write_jsonl(corpus, fh)
    stats = corpus.stats()
    _log(f"wrote {stats['sentences']} sentences from {stats['documents']} documents")
    return 0


def cmd_synth(args):
    seed = args.seed if args.seed is not None else args._config.get("seed", 0)
    corpus = make_corpus(args.sentences, seed=seed)
    with open(args.output, "w", encoding="utf-8") as fh:
        write_jsonl(corpus, fh)
    _log(f"wrote {len(corpus)} synthetic sentences (seed {seed})")
    return 0


COMMANDS = {"train": cmd_train, "segment": cmd_segment, "evaluate": cmd_evaluate,
            "ablate": cmd_ablate, "convert": cmd_convert, "synth": cmd_synth}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args._config = _load_config(args.config)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            warnings.showwarning = _show_warning
            return COMMANDS[args.command](args)
    except (CliError, EduSegError, OSError, ValueError, KeyError) as exc:
        _log(f"eduseg {args.command}: error: {exc}")
        return 1


def _show_warning(message, category, filename, lineno, file=None, line=None):
    _log(f"warning: {message}")


if __name__ == "__main__":
    sys.exit(main())

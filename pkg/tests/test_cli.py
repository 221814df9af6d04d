import io
import json
import subprocess
import sys

import pytest

from eduseg.cli import main
from eduseg.corpus import Corpus, labels_to_spans, read_jsonl, spans_to_labels, write_jsonl

from conftest import DATA

FIG = str(DATA / "figures.jsonl")


def run(argv, capsys, stdin=None, monkeypatch=None):
    if stdin is not None:
        monkeypatch.setattr(sys, "stdin", io.StringIO(stdin))
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def fig2_file(figure2, tmp_path):
    path = tmp_path / "fig2.jsonl"
    with open(path, "w") as fh:
        write_jsonl(figure2, fh)
    return str(path)


def read_model(path):
    with open(path) as fh:
        return json.load(fh)


def test_train_one_pass(tmp_path, capsys):
    model = tmp_path / "m.json"
    code, out, err = run(["train", FIG, "-o", str(model), "--framework", "crf", "--no-global"],
                         capsys)
    assert code == 0 and out == ""
    assert "pass 1:" in err and "features" in err and "pass 2" not in err
    data = read_model(model)
    assert len(data["passes"]) == 1
    assert data["run_config"]["config"]["global_features"] is False
    assert data["run_config"]["config"]["seed"] == 0


def test_train_svm_two_pass(tmp_path, capsys):
    model = tmp_path / "m.json"
    assert run(["train", FIG, "-o", str(model), "--framework", "svm"], capsys)[0] == 0
    data = read_model(model)
    assert len(data["passes"]) == 2
    assert all(p["model"]["kind"] == "svm" for p in data["passes"])


def test_train_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        run(["train", FIG, "-o", str(path), "--framework", "svm", "--seed", "3"], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"framework": "lr", "l2": 0.25, "global_features": False}))
    model = tmp_path / "m.json"
    run(["--config", str(cfg), "train", FIG, "-o", str(model), "--l2", "0.5"], capsys)
    conf = read_model(model)["run_config"]["config"]
    assert conf["framework"] == "lr" and conf["l2"] == 0.5 and conf["global_features"] is False
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, err = run(["--config", str(cfg), "train", FIG, "-o", str(model)], capsys)
    assert code == 1 and "bogus" in err


def test_segment_figure2_text(fig2_file, tmp_path, capsys):
    model = tmp_path / "m.json"
    run(["train", fig2_file, "-o", str(model)], capsys)
    code, out, _ = run(["segment", "--model", str(model), fig2_file, "--format", "text"],
                       capsys)
    assert code == 0
    header, text = out.splitlines()
    assert header.startswith("# ") and json.loads(header[2:])["command"] == "segment"
    assert text.startswith("[ Some analysts are concerned , however , ] [ that ")
    assert text.count("[") == 3 and " ] [ to " in text


def test_segment_jsonl_round_trip(fig2_file, tmp_path, capsys, figure2):
    model = tmp_path / "m.json"
    run(["train", fig2_file, "-o", str(model)], capsys)
    pred = tmp_path / "pred.jsonl"
    run(["segment", "--model", str(model), fig2_file, "-o", str(pred)], capsys)
    lines = pred.read_text().splitlines()
    assert json.loads(lines[0])["format"] == "eduseg.run"
    rec = json.loads(lines[1])
    spans = tuple(tuple(s) for s in rec["spans"])
    n = len(rec["tokens"])
    assert labels_to_spans(spans_to_labels(spans, n), n) == spans == figure2.spans[0]


def test_segment_stdin(tmp_path, capsys, monkeypatch):
    model = tmp_path / "m.json"
    run(["train", FIG, "-o", str(model), "--framework", "lr"], capsys)
    code, out, _ = run(["segment", "--model", str(model)], capsys, stdin="", monkeypatch=monkeypatch)
    assert code == 0 and out == ""
    trees = "(S (NP (DT The) (NN cat)) (VP (VBD sat)))\n(S (NN Yes))\n"
    code, out, _ = run(["segment", "--model", str(model), "-", "--format", "text"], capsys,
                       stdin=trees, monkeypatch=monkeypatch)
    assert code == 0 and out.splitlines()[2] == "[ Yes ]"


def test_segment_fingerprint_mismatch(tmp_path, capsys):
    model = tmp_path / "m.json"
    run(["train", FIG, "-o", str(model)], capsys)
    data = read_model(model)
    data["passes"][0]["fingerprint"] = "0" * 33
    model.write_text(json.dumps(data))
    code, out, err = run(["segment", "--model", str(model), FIG], capsys)
    assert code == 1 and out == "" and "fingerprint" in err


def test_evaluate_identical(capsys, tmp_path):
    report = tmp_path / "r.json"
    code, out, _ = run(["evaluate", FIG, FIG, "--compare", FIG, "--json", str(report)], capsys)
    assert code == 0
    data = json.loads(report.read_text())
    b = data["reports"]["A"]["B"]
    assert b["precision"] == b["recall"] == b["f1"] == 100.0
    ct = data["contingency"]
    assert ct["a_ok_b_err"] == ct["a_err_b_ok"] == 0 and ct["total"] == 22 + 23 + 11
    assert "Macro-Avg" in out and "Total" in out


def test_evaluate_hand_computed(figures, tmp_path, capsys):
    # Drop one gold boundary and add a wrong one in the Figure 2 sentence.
    spans = list(figures.spans)
    spans[0] = ((1, 3), (4, 15), (16, 23))
    pred = tmp_path / "pred.jsonl"
    with open(pred, "w") as fh:
        write_jsonl(Corpus(figures.sentences, spans), fh)
    report = tmp_path / "r.json"
    run(["evaluate", FIG, str(pred), "--json", str(report)], capsys)
    b = json.loads(report.read_text())["reports"]["A"]["B"]
    p, r = 3 / 4 * 100, 3 / 4 * 100
    assert abs(b["f1"] - 2 * p * r / (p + r)) < 1e-9


def test_evaluate_misaligned(tmp_path, capsys, figures):
    pred = tmp_path / "pred.jsonl"
    with open(pred, "w") as fh:
        write_jsonl(Corpus(figures.sentences[::-1], figures.spans[::-1]), fh)
    code, _, err = run(["evaluate", FIG, str(pred)], capsys)
    assert code == 1 and "wsj_0616/0" in err


def test_ablate_synthetic(tmp_path, capsys):
    out_json = tmp_path / "grid.json"
    code, out, _ = run(["ablate", "--synthetic", "200", "--frameworks", "lr",
                        "--ablations=full,-pg", "--workers", "1", "--json", str(out_json)],
                       capsys)
    assert code == 0
    cells = json.loads(out_json.read_text())["cells"]
    assert [c["model"] for c in cells] == ["LR", "LR^-pg"]
    assert "LR^-pg" in out


def test_ablate_errors(capsys):
    assert run(["ablate", "--train", FIG, "--test", FIG], capsys)[0] == 1
    assert run(["ablate", "--train", FIG], capsys)[0] == 1
    assert run(["ablate", "--synthetic", "50", "--frameworks", "tree"], capsys)[0] == 1


def test_convert_and_synth(tmp_path, capsys, figures):
    out = tmp_path / "c.jsonl"
    code, _, _ = run(["convert", str(DATA / "figures.parse"), "--edus",
                      str(DATA / "figures.edus"), "-o", str(out)], capsys)
    assert code == 0
    assert read_jsonl(out).spans == figures.spans
    syn = tmp_path / "s.jsonl"
    assert run(["synth", "-n", "30", "-o", str(syn)], capsys)[0] == 0
    assert len(read_jsonl(syn)) == 30


def test_bad_paths(tmp_path, capsys):
    code, _, err = run(["train", str(tmp_path / "missing.jsonl"), "-o", "x"], capsys)
    assert code == 1 and "missing.jsonl" in err
    bad = tmp_path / "bad.parse"
    bad.write_text("(S (NN a)\n")
    assert run(["train", str(bad), "-o", str(tmp_path / "m")], capsys)[0] == 1


def test_console_script_exit_code(tmp_path):
    res = subprocess.run([sys.executable, "-m", "eduseg.cli", "segment", "--model",
                          str(tmp_path / "nope.json")], capture_output=True, text=True,
                         stdin=subprocess.DEVNULL)
    assert res.returncode == 1 and res.stdout == "" and "error" in res.stderr

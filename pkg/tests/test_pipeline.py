import warnings

import numpy as np
import pytest

from eduseg.corpus import Corpus, Sentence, spans_to_labels
from eduseg.eval import prf
from eduseg.exceptions import DegenerateDataWarning, ModelError, ValidationError
from eduseg.pipeline import (
    ABLATIONS,
    FRAMEWORKS,
    EduSegmenter,
    render_ablation,
    run_ablation_grid,
    segment,
    train_one_pass,
    train_two_pass,
)
from eduseg.synthetic import make_corpus, train_test_split


def flat_sentence(tags, doc, k):
    inner = " ".join(f"({t} w{i})" for i, t in enumerate(tags))
    return Sentence.from_tree(f"(S {inner})", doc_id=doc, sent_id=k)


def separable_corpus(n=60, seed=0, prefix="sep"):
    """Boundary before every SUB token (never the first)."""
    rng = np.random.default_rng(seed)
    sents, spans = [], []
    for k in range(n):
        tags = ["NN"] + list(rng.choice(["NN", "VB", "DT", "SUB"], size=int(rng.integers(3, 9))))
        starts = [1] + [i + 1 for i, t in enumerate(tags) if t == "SUB" and i > 0]
        sents.append(flat_sentence(tags, f"{prefix}{k // 5}", k % 5))
        spans.append(tuple(zip(starts, [s - 1 for s in starts[1:]] + [len(tags)])))
    return Corpus(sents, spans)


def every_third_corpus(n=30):
    sents, spans = [], []
    for k in range(n):
        length = 7 + 3 * (k % 3)
        sents.append(flat_sentence(["NN"] * length, f"d{k}", 0))
        spans.append(tuple((s, min(s + 2, length)) for s in range(1, length + 1, 3)))
    return Corpus(sents, spans)


@pytest.mark.parametrize("framework", FRAMEWORKS)
@pytest.mark.parametrize("ablation", list(ABLATIONS))
def test_figure_overfit(figure1, figure2, framework, ablation):
    pairing, global_features = ABLATIONS[ablation]
    for corpus in (figure2, figure1):
        model = train_two_pass(corpus, framework, pairing, global_features)
        assert model.predict(corpus) == list(corpus.spans)


def test_no_global_is_one_pass(figures):
    a = train_two_pass(figures, "crf", True, False)
    b = train_one_pass(figures, "crf")
    assert a.n_passes == b.n_passes == 1
    assert a.predict_labels(figures) == b.predict_labels(figures)
    np.testing.assert_array_equal(a.passes_[0].model.weights_.emission,
                                  b.passes_[0].model.weights_.emission)
    full = train_two_pass(figures, "crf")
    assert full.n_passes == 2
    assert not full.passes_[0].extractor.global_features
    assert full.passes_[1].extractor.global_features


def test_distance_features_carry_weight():
    corpus = every_third_corpus()
    model = train_two_pass(corpus, "crf")
    p2 = model.passes_[1]
    vocab = p2.extractor.vocabulary_.inverse
    ids = [i for i, n in enumerate(vocab) if "dist" in n]
    assert ids
    assert np.abs(p2.model.weights_.emission[ids]).sum() > 1e-3


def test_gold_global_features_do_not_hurt_training_f1():
    corpus = make_corpus(300, seed=3)
    gold = corpus.labels()
    for framework in FRAMEWORKS:
        seg = EduSegmenter(framework=framework, global_features=False).fit(corpus)
        first = seg.predict_labels(corpus)
        p2, X2 = seg._train_pass(corpus.sentences, gold, initial=list(corpus.spans))
        oracle = [tuple("B" if v else "C" for v in p) for p in seg._decode(p2.model, X2)]
        assert prf(gold, oracle).b.f1 >= prf(gold, first).b.f1


def test_all_c_model_gives_single_edu(figures):
    corpus = Corpus(figures.sentences, [((1, len(s)),) for s in figures.sentences])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDataWarning)
        model = train_two_pass(corpus, "crf")
    for s in figures.sentences:
        assert segment(model, s) == ((1, len(s)),)


def test_single_token_sentence(figures):
    model = train_one_pass(figures, "lr")
    one = Sentence.from_tree("(S (NN Yes))")
    assert segment(model, one) == ((1, 1),)
    assert model.predict([one]) == [((1, 1),)]


def test_deterministic_and_round_trip(figures, tmp_path):
    for framework in FRAMEWORKS:
        a = train_two_pass(figures, framework)
        b = train_two_pass(figures, framework)
        pa, pb = tmp_path / f"{framework}a.json", tmp_path / f"{framework}b.json"
        a.save(pa)
        b.save(pb)
        assert pa.read_bytes() == pb.read_bytes()
        loaded = EduSegmenter.load(pa)
        assert loaded.predict(figures) == a.predict(figures)
        loaded.save(tmp_path / "again.json")
        assert (tmp_path / "again.json").read_bytes() == pa.read_bytes()


def test_fingerprint_mismatch(figures, tmp_path):
    model = train_two_pass(figures, "crf")
    data = model.to_dict()
    data["passes"][1]["vocabulary"][0] = "tampered"
    with pytest.raises(ModelError):
        EduSegmenter.from_dict(data)
    model.passes_[0].extractor.vocabulary_.inverse.append("extra")
    with pytest.raises(ModelError):
        model.predict(figures)


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(format="other"),
    lambda d: d.update(version=99),
    lambda d: d["passes"].pop(),
    lambda d: d["passes"][0]["model"].update(kind="tree"),
])
def test_bad_model_files(figures, mutate):
    data = train_two_pass(figures, "svm").to_dict()
    mutate(data)
    with pytest.raises(ModelError):
        EduSegmenter.from_dict(data)


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{not json")
    with pytest.raises(ModelError):
        EduSegmenter.load(p)


def test_fit_errors(figures):
    with pytest.raises(ValueError):
        EduSegmenter().fit([])
    with pytest.raises(ValidationError):
        EduSegmenter().fit(Corpus(figures.sentences))
    with pytest.raises(ValueError):
        EduSegmenter(framework="tree").fit(figures)


def test_estimator_api(figures):
    seg = EduSegmenter(framework="lr", l2=0.5)
    assert seg.get_params()["l2"] == 0.5
    seg.fit(figures)
    assert seg.score(figures) == 100.0
    final, first = seg.predict_labels(figures, return_first_pass=True)
    assert len(final) == len(first) == len(figures)


def test_crossfold_pass1():
    corpus = make_corpus(200, seed=1)
    seg = EduSegmenter(framework="lr", crossfold_pass1=3).fit(corpus)
    assert seg.n_passes == 2
    assert seg.score(corpus) > 50
    with pytest.raises(ValidationError):
        EduSegmenter(crossfold_pass1=50).fit(corpus)


def test_grid_on_separable_data():
    train, test = separable_corpus(60, 0, "tr"), separable_corpus(20, 1, "te")
    cells = run_ablation_grid(train, test)
    assert len(cells) == 12
    assert [c.ablation for c in cells[::3]] == list(ABLATIONS)
    for c in cells:
        assert c.report.b.f1 == 100.0, c.name
        assert set(c.as_dict()["B"]) == {"precision", "recall", "f1"}
    text = render_ablation(cells)
    assert "CRF^-pg" in text and len(text.splitlines()) == 1 + 12 + 3


def test_grid_distance_signal_and_overlap():
    corpus = make_corpus(600, seed=2)
    train, test = train_test_split(corpus)
    cells = run_ablation_grid(train, test, frameworks=("crf",), ablations=("full", "-g"))
    full, no_global = (c.report.b.f1 for c in cells)
    assert full >= no_global
    with pytest.raises(ValidationError):
        run_ablation_grid(train, train)
    with pytest.raises(ValidationError):
        run_ablation_grid(train, Corpus(test.sentences))


def test_grid_parallel_matches_serial():
    train, test = separable_corpus(30, 0, "tr"), separable_corpus(10, 1, "te")
    a = run_ablation_grid(train, test, frameworks=("lr",), workers=1)
    b = run_ablation_grid(train, test, frameworks=("lr",), workers=2)
    assert [c.predictions for c in a] == [c.predictions for c in b]

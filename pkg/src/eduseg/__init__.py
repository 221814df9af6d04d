"""Two-pass, pair-centered discourse segmentation into elementary discourse units."""

__version__ = "0.1.0"

from .corpus import Corpus, Sentence, Token, labels_to_spans, spans_to_labels  # noqa: E402
from .pipeline import EduSegmenter, run_ablation_grid, segment  # noqa: E402
from .syntax import ParseTree, parse_bracketed_tree  # noqa: E402

__all__ = ["Corpus", "Sentence", "Token", "ParseTree", "parse_bracketed_tree",
           "labels_to_spans", "spans_to_labels", "EduSegmenter", "segment",
           "run_ablation_grid", "__version__"]

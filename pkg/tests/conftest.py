from pathlib import Path

import pytest

from eduseg.corpus import Corpus, read_jsonl

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def figures():
    """Figure 2 (wsj_0616), Figure 1 (wsj_0623) and a one-EDU sentence."""
    return read_jsonl(DATA / "figures.jsonl")


@pytest.fixture(scope="session")
def figure2(figures):
    return Corpus([figures.sentences[0]], [figures.spans[0]])


@pytest.fixture(scope="session")
def figure1(figures):
    return Corpus([figures.sentences[1]], [figures.spans[1]])


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)

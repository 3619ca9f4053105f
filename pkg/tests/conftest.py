import pytest

from rtlleak.design import corpus_dir, corpus_graph, corpus_manifest, graph_from_source


@pytest.fixture(scope="session")
def manifest():
    return corpus_manifest()


@pytest.fixture(scope="session")
def corpus():
    return corpus_dir()


@pytest.fixture
def build():
    """Graph from inline Verilog."""
    def _build(text, secret=None, random=(), top=None):
        return graph_from_source(text, top, secret, random)
    return _build


def design_path(name):
    return str(corpus_dir() / corpus_manifest()[name]["file"])


def design_graph(name):
    return corpus_graph(name)


# -- acceptance reporting -------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])

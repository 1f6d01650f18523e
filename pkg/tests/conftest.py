import numpy as np
import pytest

from scoreclust.score_space import DistanceMatrix

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, passed: bool, detail: str = "") -> None:
    _ACCEPTANCE.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dist(rng, n, ids=None):
    return DistanceMatrix(rng.random(n * (n - 1) // 2), ids)


@pytest.fixture
def three():
    # d(A,B)=1, d(A,C)=4, d(B,C)=2
    return DistanceMatrix([1.0, 4.0, 2.0], ["A", "B", "C"])


def kruskal_weights(square: np.ndarray) -> np.ndarray:
    """MST edge weights by Kruskal's algorithm on a full matrix."""
    n = square.shape[0]
    edges = sorted((square[i, j], i, j) for i in range(n) for j in range(i + 1, n))
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    out = []
    for w, i, j in edges:
        a, b = find(i), find(j)
        if a != b:
            parent[a] = b
            out.append(w)
    return np.array(out)


def parse_newick(text: str):
    """Parse Newick into (clade frozenset of leaf names -> node height).

    Heights are recovered from branch lengths relative to the leaves, which
    sit at height 0.
    """
    text = text.strip()
    assert text.endswith(";")
    pos = 0

    def label():
        nonlocal pos
        if text[pos] == "'":
            pos += 1
            out = []
            while True:
                if text[pos] == "'":
                    if pos + 1 < len(text) and text[pos + 1] == "'":
                        out.append("'")
                        pos += 2
                        continue
                    pos += 1
                    return "".join(out)
                out.append(text[pos])
                pos += 1
        start = pos
        while text[pos] not in ",():;":
            pos += 1
        return text[start:pos]

    def length():
        nonlocal pos
        if text[pos] != ":":
            return 0.0
        pos += 1
        start = pos
        while text[pos] not in ",();":
            pos += 1
        return float(text[start:pos])

    clades = {}

    def node():
        # returns (leafset, height)
        nonlocal pos
        if text[pos] == "(":
            pos += 1
            kids = []
            while True:
                leaves, h = node()
                kids.append((leaves, h + length()))
                if text[pos] == ",":
                    pos += 1
                    continue
                assert text[pos] == ")"
                pos += 1
                break
            leaves = frozenset().union(*(k[0] for k in kids))
            heights = [k[1] for k in kids]
            assert max(heights) - min(heights) < 1e-6 * max(1.0, max(heights))
            clades[leaves] = heights[0]
            return leaves, heights[0]
        return frozenset([label()]), 0.0

    node()
    assert text[pos] == ";"
    return clades

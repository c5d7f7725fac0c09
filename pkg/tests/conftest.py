import numpy as np
import pytest

from hgmda.graph import EdgeType, HeteroGraph


def random_hetero(seed: int, max_nodes: int = 60, density: float = 0.08, dims=(4, 3)) -> HeteroGraph:
    """Two node types ``a`` (target) and ``b``; relations a->a, b->a, a->b."""
    r = np.random.default_rng(seed)
    na = int(r.integers(3, max_nodes // 2 + 1))
    nb = int(r.integers(2, max_nodes // 2 + 1))
    kinds = [EdgeType("link", "a", "a"), EdgeType("feeds", "b", "a"), EdgeType("tags", "a", "b")]
    sizes = {"a": na, "b": nb}
    edges = {}
    for et in kinds:
        m = r.random((sizes[et.src], sizes[et.dst])) < density
        if et.src == et.dst:
            np.fill_diagonal(m, False)
        edges[et.name] = np.argwhere(m)
    feats = {"a": r.normal(size=(na, dims[0])), "b": r.normal(size=(nb, dims[1]))}
    return HeteroGraph(sizes, kinds, edges, feats, target_type="a")


def dense_skeleton(g: HeteroGraph) -> np.ndarray:
    """Undirected simple adjacency built directly from the edge lists."""
    n = g.total_nodes
    a = np.zeros((n, n), dtype=np.int64)
    for et in g.edge_types:
        for s, d in g.edges[et.name]:
            i, j = g.offsets[et.src] + s, g.offsets[et.dst] + d
            if i != j:
                a[i, j] = a[j, i] = 1
    return a


def tiny_graph() -> HeteroGraph:
    """Eight ``a`` nodes and four ``b`` nodes with a fixed edge set."""
    kinds = [EdgeType("link", "a", "a"), EdgeType("feeds", "b", "a")]
    edges = {
        "link": np.array([[0, 1], [1, 2], [2, 0], [2, 3], [3, 4], [4, 5], [5, 6], [6, 7], [7, 5]]),
        "feeds": np.array([[0, 0], [0, 3], [1, 3], [1, 4], [2, 6], [3, 7], [3, 1]]),
    }
    r = np.random.default_rng(3)
    feats = {"a": r.normal(size=(8, 3)), "b": r.normal(size=(4, 2))}
    return HeteroGraph({"a": 8, "b": 4}, kinds, edges, feats, target_type="a")


@pytest.fixture
def tiny():
    return tiny_graph()


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

from __future__ import annotations

import pytest

from srp_diot.ontology import OntologyTree, tree_from_parents

# A small imaging taxonomy.  T9 groups the three low-resolution picture
# cameras T11, T12 and T13.
FIG1_PARENTS = [None, 0, 0, 0, 1, 1, 2, 2, 5, 4, 4, 9, 9, 9, 5]
FIG1_LABELS = ["Imaging"] + [f"T{i}" for i in range(1, 15)]

# Root with five children; the second child has three children of its own.
FIG2_PARENTS = [None, 0, 0, 0, 0, 0, 2, 2, 2]


def label_index(tree: OntologyTree, label: str) -> int:
    return next(n.node_index for n in tree.nodes if n.label == label)


@pytest.fixture
def fig1_tree() -> OntologyTree:
    return tree_from_parents(FIG1_PARENTS, FIG1_LABELS)


@pytest.fixture
def fig2_tree() -> OntologyTree:
    return tree_from_parents(FIG2_PARENTS)


def brute_ancestors(tree: OntologyTree, i: int) -> list[int]:
    """Node itself and every ancestor, walking parent pointers."""
    out = [i]
    while tree.nodes[out[-1]].parent_index is not None:
        out.append(tree.nodes[out[-1]].parent_index)
    return out


def brute_lca(tree: OntologyTree, a: int, b: int) -> tuple[int, int, int]:
    up_a = brute_ancestors(tree, a)
    up_b = brute_ancestors(tree, b)
    set_b = set(up_b)
    for dist_a, node in enumerate(up_a):
        if node in set_b:
            return node, dist_a, up_b.index(node)
    raise AssertionError("trees always share the root")


# --- acceptance reporting ---------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[number] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        verdict, title, detail = _CRITERIA[number]
        line = f"criterion {number}: {verdict}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))

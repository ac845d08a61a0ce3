import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import SIX_LEAF_NEWICK, SIX_LEAF_ORDER  # noqa: E402

from priorclust.tree import parse_tree, tree_to_ultrametric  # noqa: E402


@pytest.fixture
def six_leaf_tree():
    return parse_tree(SIX_LEAF_NEWICK)


@pytest.fixture
def six_leaf_ultrametric(six_leaf_tree):
    return tree_to_ultrametric(six_leaf_tree, SIX_LEAF_ORDER)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])

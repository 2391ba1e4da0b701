import numpy as np
import pytest

from homagg.gradient import SparsityProfile, ValueLaw, gen_synthetic

ACCEPTANCE_LINES: list[str] = []


def int_gradient(n, sparsity, seed, bits=8):
    return gen_synthetic(n, SparsityProfile(sparsity, value_law=ValueLaw.INTEGER, seed=seed,
                                            int_bits=bits))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def _find(name):
    import importlib.util

    try:
        return importlib.util.find_spec(name)
    except (ImportError, ValueError):
        return None


def import_closure(module: str, package: str = "homagg") -> set[str]:
    """Package-internal modules reachable from ``module`` by absolute static imports."""
    import ast

    seen: set[str] = set()
    stack = [module]
    while stack:
        name = stack.pop()
        if name in seen:
            continue
        seen.add(name)
        parts = name.split(".")
        stack.extend(".".join(parts[:i]) for i in range(1, len(parts)))
        spec = _find(name)
        if spec is None or spec.origin is None:
            continue
        tree = ast.parse(open(spec.origin).read())
        for node in ast.walk(tree):
            if isinstance(node, ast.Import):
                targets = [a.name for a in node.names]
            elif isinstance(node, ast.ImportFrom) and node.module:
                targets = [node.module] + [f"{node.module}.{a.name}" for a in node.names]
            else:
                continue
            stack.extend(t for t in targets
                         if t.split(".")[0] == package and _find(t) is not None)
    return seen

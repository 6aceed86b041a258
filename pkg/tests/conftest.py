import numpy as np
import pytest

from poisonlab.ingestion import split
from poisonlab.mixture import ComponentSpec, MixtureSpec, make_gaussian_benchmark
from poisonlab.subgroups import component_schema, derive_subgroups, with_component_annotations


def simple_spec(weights, label_probs, dim=2, spread=5.0):
    comps = [ComponentSpec(i, (spread * i,) + (0.0,) * (dim - 1), (0.5,) * dim, p)
             for i, p in enumerate(label_probs)]
    return MixtureSpec(tuple(comps), tuple(weights))


@pytest.fixture(scope="session")
def small_benchmark():
    """Six-subgroup Gaussian benchmark split 80/20 with subgroups derived."""
    spec, ds = make_gaussian_benchmark(n_subgroups=6, points_per_subgroup_range=(20, 30), seed=11)
    ds = with_component_annotations(ds, spec.k)
    tr, va = split(ds, 0.2, seed=5)
    groups = derive_subgroups(tr, component_schema(spec.k), 0, 1, va)
    return spec, tr, va, groups


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria register their verdicts here; printed again after the run
CRITERIA: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> str:
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} {detail}"
    CRITERIA.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fimrate.scenario import ScenarioParams, build_scenario  # noqa: E402

LAM = 299792458.0 / 3.5e9


def small_params(n_x=4, n_z=4, k=2, **kw):
    return ScenarioParams(n_x=n_x, n_z=n_z, n_users=k, **kw)


def random_problem(seed, n_x=4, n_z=4, k=2, **kw):
    """Scenario problem plus a random in-box morph and an in-budget power vector."""
    rng = np.random.default_rng(seed)
    sc = build_scenario(small_params(n_x, n_z, k, **kw), seed, 0)
    problem = sc.problem()
    y = rng.uniform(0.0, problem.geometry.y_max, problem.geometry.n_elements)
    ctx = problem.context(y)
    p = rng.uniform(0.2, 1.0, k) / ctx.traces
    p *= rng.uniform(0.3, 0.9) * problem.p_max / float(p @ ctx.traces)
    return problem, y, p


@pytest.fixture
def lam():
    return LAM


ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one acceptance line; the summary hook prints them all at the end."""
    def record(number, name, ok, detail):
        line = f"criterion {number} {name}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)

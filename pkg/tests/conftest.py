import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--full-scale", action="store_true", default=False,
                     help="run the full 1,715,000-case simulation acceptance check")


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in config.acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    def record(number, title, ok, detail=""):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}"
        if detail:
            line += f": {detail}"
        print(line)
        request.config.acceptance_lines.append(line)
        return ok
    return record


def pytest_collection_modifyitems(config, items):
    if config.getoption("--full-scale"):
        return
    skip = pytest.mark.skip(reason="needs --full-scale")
    for item in items:
        if "full_scale" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


REDUCED_POINTS = 500
REDUCED_ITERS = 200


@pytest.fixture(scope="session")
def reduced_runs():
    """The 500-point, T=200 simulation for every loss, computed once per session."""
    import time

    from boxreg.losses import LossKind
    from boxreg.simulator import SimulationConfig, generate_cases, simulate

    runs = {}
    for kind in LossKind:
        cfg = SimulationConfig(n_points=REDUCED_POINTS, max_iters=REDUCED_ITERS, loss=kind)
        start = time.perf_counter()
        E = simulate(cfg)
        runs[kind] = {"cfg": cfg, "E": E, "seconds": time.perf_counter() - start}
    runs["cases"] = generate_cases(runs[LossKind.IOU]["cfg"])
    return runs

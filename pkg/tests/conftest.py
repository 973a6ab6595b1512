import logging

import pytest

from firesale_mfg import DESK_GRID, picard_solve, scenario


@pytest.fixture(autouse=True)
def _quiet_solver_logs(caplog):
    caplog.set_level(logging.ERROR, logger="firesale_mfg")


# desk-grid equilibria are shared across modules; each takes a few seconds
_CACHE = {}


def solved(n, regulated=True, **params):
    key = (n, regulated, tuple(sorted(params.items())))
    if key not in _CACHE:
        cfg = scenario(n, DESK_GRID, regulated=regulated)
        if params:
            cfg = cfg.with_params(**params)
        _CACHE[key] = picard_solve(cfg)
    return _CACHE[key]


@pytest.fixture(scope="session")
def desk_solve():
    return solved


# criterion number -> (passed, detail), filled by the acceptance tests
ACCEPTANCE = {}


def record(n, passed, detail):
    ACCEPTANCE[n] = (bool(passed), detail)
    print(f"criterion {n}: {'PASS' if passed else 'FAIL'} ({detail})")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

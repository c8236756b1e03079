from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from dsprior.grammar import Cfg, build_ds_grammar, read_grammar

DATA = Path(str(resources.files("dsprior").joinpath("data")))
FIXTURE_NAMES = ("fig1", "fig1_extended", "publications")


def load_fixture(name: str) -> Cfg:
    return read_grammar(DATA / f"{name}.grammar")


@pytest.fixture
def fig1() -> Cfg:
    return load_fixture("fig1")


@pytest.fixture
def fig1x() -> Cfg:
    return load_fixture("fig1_extended")


@pytest.fixture
def pubs() -> Cfg:
    return load_fixture("publications")


@pytest.fixture
def gw0(fig1):
    return build_ds_grammar(fig1)


WORKED_DS = ("s0", "np0", "np1", "typenp0", "cp0", "relnp0", "entitynp0")


# -- acceptance reporting ------------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    n, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if rep.passed else "FAIL"
    ACCEPTANCE[n] = f"{status} criterion {n}: {title}" + (f" [{detail}]" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])

import dataclasses
from pathlib import Path

import pytest

from codednet import builtin
from codednet.phy import PhyLayer
from codednet.scenario import build_scenario, load_scenario

ROOT = Path(__file__).resolve().parents[1]
FIG1 = ROOT / "scenarios" / "fig1.json"

# acceptance criteria report lines, filled by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def fig1():
    return load_scenario(FIG1)


@pytest.fixture(scope="session")
def fig1_layer(fig1):
    return PhyLayer(fig1.model, fig1.channel.noise, fig1.phy)


@pytest.fixture(scope="session")
def relay3():
    return build_scenario(builtin.scenario_dict("relay3"))


@pytest.fixture(scope="session")
def relay3_layer(relay3):
    return PhyLayer(relay3.model, relay3.channel.noise, relay3.phy)


def with_channel(name, **channel):
    """Built-in scenario with channel fields replaced."""
    raw = builtin.scenario_dict(name)
    raw["channel"].update(channel)
    if channel.get("distribution") not in (None, "table"):
        raw["channel"].pop("atoms", None)
        raw["channel"].pop("probs", None)
    return build_scenario(raw)


def short(cfg, **kw):
    return dataclasses.replace(cfg, **kw)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

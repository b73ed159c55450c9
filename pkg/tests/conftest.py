import numpy as np
import pytest

from quadsampler.robot_model import load_dataset, nominal_configuration
from quadsampler.simulator import build_model


@pytest.fixture(scope="session")
def dataset():
    return load_dataset()


@pytest.fixture(scope="session")
def models(dataset):
    return {m.name: m for m in dataset.models}


@pytest.fixture(scope="session")
def a1(models):
    return models["a1"]


@pytest.fixture(scope="session")
def anymal_c(models):
    return models["anymal_c"]


@pytest.fixture(scope="session")
def a1_sim(a1):
    cfg = nominal_configuration(a1).replace(pd_gains=np.tile([35.0, 0.5], (12, 1)))
    return build_model(cfg, a1)


@pytest.fixture(scope="session")
def anymal_sim(anymal_c):
    cfg = nominal_configuration(anymal_c).replace(pd_gains=np.tile([85.0, 0.5], (12, 1)))
    return build_model(cfg, anymal_c)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record and print one acceptance line; returns ``ok`` for asserting."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])
    capman = request.config.pluginmanager.get_plugin("capturemanager")

    def _report(num, title, ok, detail, elapsed):
        line = f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail} ({elapsed:.1f} s)"
        lines.append(line)
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

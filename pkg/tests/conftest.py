import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def toy_world(seed: int = 7, template: str = "occlusion"):
    from cohff.harness.config import RunConfig, with_changes
    from cohff.harness.pipeline import prepare_world
    cfg = with_changes(RunConfig(), seed=seed, template=template)
    return cfg, prepare_world(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

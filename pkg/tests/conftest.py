import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_world():
    """Tiny geography, superpopulation, frame and one sample shared across tests."""
    from fhvs.design import SampleConfig, draw_sample
    from fhvs.frame import FrameConfig, build_frame, build_geography, gen_superpopulation, outcome_kind_for

    geog = build_geography(12, 3, seed=3)
    icar = geog.icar()
    params = gen_superpopulation(geog, "1", seed=3, icar=icar)
    frame = build_frame(geog, FrameConfig(), seed=3)
    table = draw_sample(frame, params, outcome_kind_for("1"), SampleConfig(), seed=4)
    return {"geog": geog, "icar": icar, "params": params, "frame": frame, "table": table}


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])

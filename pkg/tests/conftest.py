import pytest

from qcfold import scenario
from qcfold.pipeline import build_pipeline

import logbook


@pytest.fixture
def log_handler():
    handler = logbook.TestHandler(level=logbook.DEBUG)

    with handler.applicationbound():
        yield handler


@pytest.fixture(scope="session")
def built():
    pipelines = {}

    def build(name):
        if name not in pipelines:
            pipelines[name] = build_pipeline(scenario.load(name))

        return pipelines[name]

    return build


@pytest.fixture(scope="session")
def halfplane_scenario():
    return scenario.load("halfplane-default")


@pytest.fixture(scope="session")
def halfplane_pipeline(built):
    return built("halfplane-default")


@pytest.fixture(scope="session")
def halfplane_map(halfplane_pipeline):
    return halfplane_pipeline.global_map


@pytest.fixture(scope="session", params=scenario.bundled())
def bundled_pipeline(request, built):
    return built(request.param)

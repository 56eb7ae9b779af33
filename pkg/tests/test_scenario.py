import pytest

from qcfold import scenario
from qcfold.dynamics import Correspondence
from qcfold.interpolation import FoldProfile, ModulusMatching


def test_bundled_scenarios():
    assert scenario.bundled() == ["halfplane-conjugacy", "halfplane-default", "sector-default"]


def test_load_bundled(halfplane_scenario):
    assert halfplane_scenario.name == "halfplane-default"
    assert halfplane_scenario.window == 24
    assert halfplane_scenario.net.R == 2.0
    assert halfplane_scenario.audit.max_hits == 6
    assert halfplane_scenario.audit.max_quasiconstant is None
    assert halfplane_scenario.fold_profile is FoldProfile.COSH
    assert halfplane_scenario.modulus_matching is ModulusMatching.STRETCH
    assert halfplane_scenario.dynamics.conjugacy is None
    assert len(halfplane_scenario.config_hash) == 64


def test_defaults():
    config = scenario.parse({})

    assert config.name == "unnamed"
    assert config.riemann.resolution == 1024
    assert config.audit.rho_values == (1.0, 0.5, 0.25)
    assert [tract.label for tract in config.build_model().tracts] == ["0:half_plane"]


def test_load_from_path(tmp_path):
    path = tmp_path / "small.json"
    path.write_text('{"name": "small", "window": 6, "riemann": {"resolution": 256}}')
    config = scenario.load(path)

    assert (config.name, config.window, config.riemann.resolution) == ("small", 6, 256)


def test_load_missing_or_malformed(tmp_path):
    with pytest.raises(scenario.ConfigError):
        scenario.load(tmp_path / "missing.json")

    broken = tmp_path / "broken.json"
    broken.write_text("{window: 3")

    with pytest.raises(scenario.ConfigError):
        scenario.load(broken)


@pytest.mark.parametrize(
    "data",
    [
        {"widow": 3},
        {"net": {"Q": 1}},
        {"model": {"tracts": [{"kind": "half_plane", "radius": 1.0}]}},
    ],
)
def test_unknown_keys(data):
    with pytest.raises(scenario.ConfigError, match="unknown keys"):
        scenario.parse(data)


@pytest.mark.parametrize(
    "data",
    [
        {"window": "24"},
        {"window": True},
        {"net": {"R": "four"}},
        {"model": {"disjoint_type": 1}},
        {"model": {"tracts": []}},
        {"audit": {"rho_values": [1.0, "half"]}},
        {"audit": {"max_hits": "six"}},
        {"audit": {"max_hits": 6.5}},
        {"riemann": []},
    ],
)
def test_wrong_types(data):
    with pytest.raises(scenario.ConfigError):
        scenario.parse(data)


@pytest.mark.parametrize(
    "data",
    [
        {"schema_version": 2},
        {"window": 0},
        {"riemann": {"resolution": 32}},
        {"net": {"R": -1.0}},
        {"net": {"S": -1}},
        {"audit": {"max_hits": 1}},
        {"audit": {"max_quasiconstant": 0.5}},
        {"audit": {"margin": 1.5}},
        {"audit": {"rho_values": [1.0, 2.0]}},
        {"dynamics": {"julia_resolution": 4096}},
        {"interpolation": {"fold_profile": "sine"}},
        {"model": {"tracts": [{"kind": "sector", "p": 0.5}]}},
        {"model": {"tracts": [{"kind": "spiral"}]}},
    ],
)
def test_out_of_range_values(data):
    with pytest.raises(scenario.ConfigError):
        scenario.parse(data)


def test_config_hash():
    first = scenario.parse({"net": {"R": 4}})
    second = scenario.parse({"net": {"R": 4.0}})

    assert first.config_hash == second.config_hash
    assert scenario.parse({"window": 12}).config_hash != first.config_hash
    assert scenario.parse({"window": 12}).model_hash == first.model_hash


def test_ramp_shift_correspondence():
    config = scenario.parse(
        {"dynamics": {"conjugacy": {"correspondence": {"kind": "ramp_shift", "shift": 0.2, "start": 1.0, "stop": 2.0}}}}
    )

    assert config.correspondence() == Correspondence(shift=0.2, start=1.0, stop=2.0)


@pytest.mark.parametrize(
    "correspondence",
    [
        {"kind": "ramp_shift", "start": 0.5},
        {"kind": "twist"},
    ],
)
def test_invalid_correspondence(correspondence):
    with pytest.raises(scenario.ConfigError):
        scenario.parse({"dynamics": {"conjugacy": {"correspondence": correspondence}}})


def test_unseparated_net():
    config = scenario.parse({"net": {"R": 0, "S": 0}})

    assert (config.net.R, config.net.S) == (0.0, 0)


def test_regression_pins():
    config = scenario.parse({"audit": {"max_hits": 7, "max_quasiconstant": 4}})

    assert config.audit.max_hits == 7
    assert config.audit.max_quasiconstant == 4.0
    assert scenario.parse({"audit": {"max_hits": None}}).audit.max_hits is None


def test_bundled_conjugacy_scenario():
    config = scenario.load("halfplane-conjugacy")

    assert config.dynamics.samples == 10_000
    assert config.correspondence() == Correspondence(shift=0.5, start=1.0, stop=2.0)
    assert config.model_hash == scenario.load("halfplane-default").model_hash

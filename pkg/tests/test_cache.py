from qcfold import cache
import numpy as np

import hashlib
import json


def test_dump_json_is_deterministic(tmp_path):
    first = cache.dump_json(tmp_path / "a.json", {"b": 1, "a": [1.5, 2]})
    second = cache.dump_json(tmp_path / "nested" / "b.json", {"a": [1.5, 2], "b": 1})

    assert first.read_bytes() == second.read_bytes()
    assert json.loads(first.read_text()) == {"a": [1.5, 2], "b": 1}


def test_manifest(tmp_path):
    figure = tmp_path / "figures" / "tracts.png"
    figure.parent.mkdir()
    figure.write_bytes(b"not really a png")
    report = cache.dump_json(tmp_path / "report.json", {"passed": True})

    manifest = cache.write_manifest(tmp_path, [figure, report, report, tmp_path / "gone.json"], "abc")
    payload = json.loads(manifest.read_text())

    assert payload["config_hash"] == "abc"
    assert payload["artifacts"] == {
        "figures/tracts.png": hashlib.sha256(b"not really a png").hexdigest(),
        "report.json": cache.file_digest(report),
    }


def test_riemann_cache(tmp_path, halfplane_scenario, halfplane_pipeline):
    store = cache.ArtifactCache(tmp_path / "cache")
    riemann = halfplane_pipeline.riemann
    model_hash = halfplane_scenario.model_hash

    assert store.load_riemann(model_hash, riemann.resolution, riemann.model) is None

    path = store.store_riemann(model_hash, riemann)
    assert path.is_file()
    assert path.name.startswith("riemann-v")

    loaded = store.load_riemann(model_hash, riemann.resolution, riemann.model)
    z = np.array([0.5, -2.0 + 3.0j])
    assert np.array_equal(loaded.interior_evaluator(z), riemann.interior_evaluator(z))
    assert store.load_riemann(model_hash, riemann.resolution // 2, riemann.model) is None


def test_disabled_cache(tmp_path, halfplane_scenario, halfplane_pipeline):
    store = cache.ArtifactCache(tmp_path / "cache", enabled=False)
    riemann = halfplane_pipeline.riemann

    assert store.store_riemann(halfplane_scenario.model_hash, riemann) is None
    assert store.load_riemann(halfplane_scenario.model_hash, riemann.resolution, riemann.model) is None
    assert not (tmp_path / "cache").exists()

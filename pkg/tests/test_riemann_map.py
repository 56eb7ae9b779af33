import pytest

from qcfold import model_domain as md, riemann_map as rmap
from qcfold.hyperbolic_disk import DomainError
import numpy as np


def oracle(z):
    """
    Exact map of `{Re z < 3}` onto the disk with `Ψ(0) = 0`, `Ψ'(0) > 0`.
    """

    return z / (6.0 - z)


@pytest.fixture
def riemann(halfplane_pipeline):
    return halfplane_pipeline.riemann


def test_normalization(riemann):
    assert abs(riemann.interior_evaluator(0.0)) < 1e-9

    derivative = riemann.derivative(0.0)
    assert abs(derivative.imag) < 1e-6
    assert derivative.real == pytest.approx(1.0 / 6.0, rel=1e-3)


def test_matches_half_plane_oracle(riemann):
    y = np.linspace(-10.0, 10.0, 41)
    z = np.concatenate([3.0 - d + 1j * y for d in (0.05, 0.5, 2.0, 6.0)])

    assert np.max(np.abs(riemann.interior_evaluator(z) - oracle(z))) < 1e-3


def test_values_in_disk(riemann):
    z = np.array([-40.0, -3.0 + 9.0j, 2.9 - 30.0j, 1.0j])

    assert np.all(np.abs(riemann.interior_evaluator(z)) < 1)


def test_boundary_angle(riemann):
    t = np.linspace(-60.0, 60.0, 121)
    theta = riemann.boundary_angle(0, t)

    assert np.all(np.diff(theta) > 0)
    assert np.all(riemann.boundary_angle(0, t, derivative=1) > 0)
    assert np.allclose(np.exp(1j * theta), oracle(3.0 + 1j * t), atol=1e-3)

    with pytest.raises(ValueError):
        riemann.boundary_angle(0, t, derivative=2)


def test_boundary_layer_meets_boundary_data(riemann):
    t = np.array([-5.0, 0.0, 7.0])
    inside = riemann.interior_evaluator(3.0 - 1e-9 + 1j * t)

    assert np.allclose(inside, np.exp(1j * riemann.boundary_angle(0, t)), atol=1e-7)


def test_inverse(riemann, log_handler):
    assert riemann.inverse_evaluator(0.25) == pytest.approx(1.2, abs=1e-3)

    for w in (0.0, 0.3j, -0.7 + 0.2j):
        z = riemann.inverse_evaluator(w)
        assert abs(riemann.interior_evaluator(z) - w) < 1e-8

    with pytest.raises(DomainError):
        riemann.inverse_evaluator(1.0)


def test_reflection_continues_the_map(riemann):
    model = riemann.model
    z = np.array([3.5 + 1.0j, 3.9 - 4.0j, 2.5 + 0.5j])

    assert np.allclose(rmap.reflect_extend(riemann, model, z), oracle(z), atol=1e-3)

    with pytest.raises(DomainError):
        rmap.reflect_extend(riemann, model, 4.5)


def test_pushforward_partition(riemann):
    arcs = rmap.pushforward_partition(riemann, riemann.model, 0, window=4)

    assert len(arcs) == 8
    # consecutive images share endpoints
    for first, second in zip(arcs[:-1], arcs[1:]):
        assert np.mod(second.theta_lo - first.theta_hi + np.pi, 2 * np.pi) - np.pi == pytest.approx(0.0, abs=1e-12)

    assert rmap.adjacent_length_ratio(arcs) >= 1.0

    with pytest.raises(rmap.BuildError):
        rmap.pushforward_partition(riemann, riemann.model, 0, window=10_000)


def test_save_and_load(riemann, tmp_path):
    path = tmp_path / "riemann.npz"
    riemann.save(path)
    loaded = rmap.DiscreteRiemannMap.load(path, riemann.model)

    z = np.array([0.5, -2.0 + 3.0j, 2.99 + 1.0j])
    assert np.array_equal(loaded.interior_evaluator(z), riemann.interior_evaluator(z))
    assert loaded.resolution == riemann.resolution


def test_load_ignores_other_versions(riemann, tmp_path, monkeypatch):
    path = tmp_path / "riemann.npz"
    riemann.save(path)
    monkeypatch.setattr(rmap, "CACHE_VERSION", rmap.CACHE_VERSION + 1)

    assert rmap.DiscreteRiemannMap.load(path, riemann.model) is None


def test_build_rejects_bad_input():
    model = md.Model(tracts=md.catalogue_tract("half_plane", c=2.0))

    with pytest.raises(rmap.BuildError):
        rmap.build_riemann_map(model, resolution=32)

    overlapping = md.Model(tracts=md.catalogue_tract("half_plane", c=0.5), disjoint_type=False)

    with pytest.raises(rmap.BuildError):
        rmap.build_riemann_map(overlapping, resolution=128)


def test_sector_map_is_monotone():
    model = md.Model(tracts=md.catalogue_tract("sector", p=2.0, c=2.0))
    riemann = rmap.build_riemann_map(model, resolution=256)
    t = np.linspace(-50.0, 50.0, 101)

    assert np.all(np.diff(riemann.boundary_angle(0, t)) > 0)
    assert abs(riemann.interior_evaluator(0.0)) < 1e-9

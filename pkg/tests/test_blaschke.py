import pytest

from qcfold import blaschke
from qcfold.hyperbolic_disk import ArcOnCircle, geodesic_top_point, hyperbolic_distance
import numpy as np

TWO_PI = 2 * np.pi


@pytest.fixture
def product():
    return blaschke.BlaschkeProduct(zeros=np.array([0.5 + 0j, -0.3 + 0.6j, 0.9j, 0j]))


@pytest.fixture
def chain():
    edges = np.concatenate([-np.geomspace(1.0, 1e-3, 12), np.geomspace(1e-3, 1.0, 12)])
    return [ArcOnCircle.between(lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]


def test_single_factor():
    B = blaschke.BlaschkeProduct(zeros=np.array([0.5 + 0j]))

    assert blaschke.blaschke_eval(B, 1.0) == pytest.approx(-1.0)
    assert blaschke.boundary_arg_derivative(B, 0.0) == pytest.approx(3.0)
    assert B(0.5) == 0


def test_zero_at_origin_contributes_z():
    B = blaschke.BlaschkeProduct(zeros=np.array([0j]))
    z = np.array([0.3 + 0.1j, -0.5j])

    assert np.allclose(B(z), z)


def test_unimodular_on_circle(product):
    theta = np.linspace(0, TWO_PI, 97)

    assert np.allclose(np.abs(product(np.exp(1j * theta))), 1.0)
    assert np.all(np.abs(product(product.zeros)) < 1e-15)


def test_rejects_zeros_off_disk():
    with pytest.raises(ValueError):
        blaschke.BlaschkeProduct(zeros=np.array([1.0 + 0j]))


def test_boundary_phase_lifts_argument(product):
    theta = np.linspace(-3.0, 9.0, 301)
    phase = blaschke.boundary_phase(product, theta)

    assert np.allclose(np.exp(1j * phase), product(np.exp(1j * theta)))
    assert np.all(np.diff(phase) > 0)
    assert blaschke.boundary_phase(product, 1.0 + TWO_PI) - blaschke.boundary_phase(product, 1.0) == pytest.approx(
        TWO_PI * product.zeros.size
    )


def test_derivative_identity(product):
    theta = np.random.default_rng(3).uniform(0, TWO_PI, 200)
    h = 1e-6
    finite = (blaschke.boundary_phase(product, theta + h) - blaschke.boundary_phase(product, theta - h)) / (2 * h)

    assert np.allclose(finite, blaschke.boundary_arg_derivative(product, theta), rtol=1e-6)


def test_selection_on_empty_input():
    with pytest.raises(blaschke.EmptyArcSetError):
        blaschke.select_zero_set([], R=4.0, S=1)


def test_selection_is_a_separated_net(chain):
    B = blaschke.select_zero_set(chain, R=2.0, S=1)
    tops = [geodesic_top_point(chain[ref.step]).a for ref in B.net]

    assert len(B.net) >= 2
    for i, first in enumerate(tops):
        for second in tops[i + 1 :]:
            assert hyperbolic_distance(first, second) >= 2.0

    # every arc of the chain is within R of the net, so the net is maximal
    for arc in chain:
        top = geodesic_top_point(arc).a
        assert min(hyperbolic_distance(top, kept) for kept in tops) < 2.0


def test_selection_prefers_shorter_neighbours(chain):
    B = blaschke.select_zero_set(chain, R=2.0, S=1)

    for ref in B.selected:
        assert B.zeros.size == len(B.selected)
        assert any(abs(ref.step - kept.step) <= 1 for kept in B.net)

    for kept in B.net:
        window = range(max(0, kept.step - 1), min(len(chain), kept.step + 2))
        shortest = min(chain[k].length for k in window)
        assert any(chain[ref.step].length == shortest for ref in B.selected if abs(ref.step - kept.step) <= 1)


def test_selection_hypothesis(chain, log_handler):
    B = blaschke.select_zero_set(chain, R=0.1, S=1)

    assert not B.hypothesis_holds
    assert log_handler.has_warnings

    with pytest.raises(blaschke.SelectionError):
        blaschke.select_zero_set(chain, R=0.1, S=1, enforce_separation_hypothesis=True)


def test_selection_accepts_several_chains(chain):
    rotated = [arc.rotate(np.pi) for arc in chain]
    B = blaschke.select_zero_set((chain, rotated), R=2.0, S=1)

    assert {ref.chain for ref in B.selected} == {0, 1}


def test_harmonic_sums():
    arc = ArcOnCircle.between(0.0, 1.0)
    B = blaschke.BlaschkeProduct(zeros=np.array([geodesic_top_point(arc).a]))
    sums = blaschke.harmonic_sums(B, [arc])

    assert sums.epsilon == pytest.approx(0.5)
    assert sums.mu == pytest.approx(0.5)
    assert sums.mean_derivative[0] == pytest.approx(np.pi)


def test_tail_bound(product):
    a = 0.95 * np.exp(0.4j)
    theta = np.linspace(0, TWO_PI, 257)
    z = np.exp(1j * theta)
    extended = blaschke.BlaschkeProduct(zeros=np.append(product.zeros, a))
    error = np.max(np.abs(extended(z) - product(z)))

    assert error <= blaschke.tail_bound(product, a, theta) + 1e-12


def test_partition_property_counts():
    endpoints = TWO_PI * np.array([-2.0, -0.5, 1.0, 2.5])
    partition = blaschke.LevelPartition(
        tract=0, endpoints=endpoints, windings=np.arange(4), phase=lambda y: np.asarray(y)
    )
    report = blaschke.verify_partition_property(partition, window=2)

    assert report.passed
    assert (report.min_hits, report.max_hits) == (2, 3)
    assert (report.interval_min_hits, report.interval_max_hits) == (1, 2)


def test_partition_property_detects_short_intervals():
    endpoints = TWO_PI * np.array([-2.0, -1.8, -0.5, 1.0])
    partition = blaschke.LevelPartition(
        tract=0, endpoints=endpoints, windings=np.arange(4), phase=lambda y: np.asarray(y)
    )
    report = blaschke.verify_partition_property(partition, window=2)

    assert not report.passed
    assert report.min_hits == 1
    assert report.offending == ("J[-2] contains K[0]",)


def test_level_partition(halfplane_pipeline):
    partition = halfplane_pipeline.partitions[0]
    window = halfplane_pipeline.scenario.window

    assert np.all(np.diff(partition.endpoints) > 0)
    assert np.all(np.diff(partition.windings) == 1)
    assert np.allclose(partition.phase(partition.endpoints), TWO_PI * partition.windings, atol=1e-8)
    assert partition.endpoints[0] >= -TWO_PI * window
    assert partition.endpoints[-1] <= TWO_PI * window

    k = len(partition.intervals) // 2
    lo, hi = partition.intervals[k]
    assert partition.alpha(k, np.array([lo, hi])) == pytest.approx([0.0, 1.0], abs=1e-8)


def test_default_partition_property(halfplane_pipeline):
    report = blaschke.verify_partition_property(halfplane_pipeline.partitions[0], halfplane_pipeline.scenario.window)

    assert report.passed
    assert report.min_hits >= 2
    assert report.interval_min_hits >= 1


def test_json_export(halfplane_pipeline):
    payload = halfplane_pipeline.blaschke.to_json()

    assert len(payload["zeros"]) == halfplane_pipeline.blaschke.zeros.size
    assert payload["hypothesis_holds"] in (True, False)


def test_zero_separation_keeps_every_arc():
    arcs = [ArcOnCircle.between(k * TWO_PI / 8, (k + 1) * TWO_PI / 8) for k in range(8)]
    B = blaschke.select_zero_set(arcs, R=0.0, S=0)

    assert B.zeros.size == 8
    assert len(B.net) == 8
    assert B.hypothesis_holds


def test_sparse_zero_set_has_no_level_partition(halfplane_pipeline):
    single = blaschke.BlaschkeProduct(zeros=np.array([0j]))

    with pytest.raises(blaschke.PartitionError, match="too sparse"):
        blaschke.level_partition(single, halfplane_pipeline.riemann, halfplane_pipeline.model, 0, window=24)


def test_harmonic_sums_over_bundled_arcs(bundled_pipeline):
    sums = blaschke.harmonic_sums(bundled_pipeline.blaschke, bundled_pipeline.arcs)
    margin = bundled_pipeline.scenario.audit.margin

    assert sums.sums.size == sum(len(chain) for chain in bundled_pipeline.arcs)
    assert 0 < sums.epsilon <= sums.mu < 1 - margin
    assert np.all(sums.mean_derivative > 0)


def test_bundled_partition_property(bundled_pipeline):
    for partition in bundled_pipeline.partitions:
        report = blaschke.verify_partition_property(partition, bundled_pipeline.scenario.window)

        assert report.passed, report.offending
        assert partition.endpoints.size >= 2

import pytest

from qcfold import hyperbolic_disk as hd
import numpy as np
from scipy import optimize


def test_arc_between_normalizes():
    arc = hd.ArcOnCircle.between(-0.5, 0.5)

    assert arc.theta_lo == pytest.approx(2 * np.pi - 0.5)
    assert arc.length == pytest.approx(1.0)
    assert arc.contains(0.0)
    assert not arc.contains(np.pi)


@pytest.mark.parametrize("length", [0.0, 2 * np.pi, -1.0])
def test_arc_between_rejects_improper(length):
    with pytest.raises(hd.DomainError):
        hd.ArcOnCircle.between(1.0, 1.0 + length)


@pytest.mark.parametrize("center", [0.0, 1.0, np.pi, 5.0])
@pytest.mark.parametrize("length", [0.01, 1.0, np.pi, 5.0, 6.2])
def test_top_point_has_half_measure(center, length):
    arc = hd.ArcOnCircle.between(center - 0.5 * length, center + 0.5 * length)
    top = hd.geodesic_top_point(arc)

    assert abs(top.a) < 1
    assert hd.harmonic_measure_arc(arc, top.a) == pytest.approx(0.5, abs=1e-10)


def test_top_point_of_semicircle_is_origin():
    arc = hd.ArcOnCircle.between(0.0, np.pi)

    assert abs(hd.geodesic_top_point(arc).a) < 1e-12


def test_geodesic_points_lie_on_geodesic():
    arc = hd.ArcOnCircle.between(0.3, 1.7)
    top = hd.geodesic_top_point(arc).a
    points = hd.geodesic_point(arc, np.array([-2.0, -0.5, 0.0, 0.5, 2.0]))

    assert points[2] == pytest.approx(top)
    # every point of the geodesic sees the arc with measure one half
    assert np.allclose(hd.harmonic_measure_arc(arc, points), 0.5, atol=1e-10)
    assert np.allclose(hd.hyperbolic_distance(top, points), [2.0, 0.5, 0.0, 0.5, 2.0], atol=1e-10)


def test_hyperbolic_distance_from_origin():
    assert hd.hyperbolic_distance(0.0, 0.5) == pytest.approx(np.arctanh(0.5))

    with pytest.raises(hd.DomainError):
        hd.hyperbolic_distance(0.0, 1.0)


def test_mobius_to_zero():
    a = 0.3 + 0.4j

    assert abs(hd.mobius_to_zero(a, a)) < 1e-15
    assert abs(hd.mobius_to_zero(a, np.exp(0.7j))) == pytest.approx(1.0)


@pytest.mark.parametrize("a", [0.0, 0.5j, -0.9 + 0.1j, 0.99])
def test_harmonic_measure_matches_quadrature(a):
    arc = hd.ArcOnCircle.between(0.2, 2.3)

    assert hd.harmonic_measure_arc(arc, a) == pytest.approx(hd.poisson_integral(arc, a), abs=1e-10)


def test_harmonic_measure_of_complementary_arcs():
    arc = hd.ArcOnCircle.between(0.2, 2.3)
    other = hd.ArcOnCircle.between(2.3, 0.2 + 2 * np.pi)
    a = np.array([0.1, -0.3j, 0.8 + 0.1j])

    assert np.allclose(hd.harmonic_measure_arc(arc, a) + hd.harmonic_measure_arc(other, a), 1.0)


def test_closest_point_symmetry():
    rng = np.random.default_rng(7)

    for _ in range(200):
        first, gap, second, _ = rng.dirichlet(np.ones(4)) * (2 * np.pi - 0.04) + 0.01
        lo = rng.uniform(0, 2 * np.pi)
        I = hd.ArcOnCircle.between(lo, lo + first)
        J = hd.ArcOnCircle.between(lo + first + gap, lo + first + gap + second)

        left = hd.harmonic_measure_arc(I, hd.closest_point_to_arc(J, I))
        right = hd.harmonic_measure_arc(J, hd.closest_point_to_arc(I, J))

        assert left == pytest.approx(right, abs=1e-8)


def test_closest_point_rejects_overlap():
    with pytest.raises(hd.DomainError):
        hd.closest_point_to_arc(hd.ArcOnCircle.between(0, 1), hd.ArcOnCircle.between(0.5, 2))

    with pytest.raises(hd.DomainError):
        hd.closest_point_to_arc(hd.ArcOnCircle.between(0, 1), hd.ArcOnCircle.between(1, 2))


def test_arc_distance_and_separation():
    I = hd.ArcOnCircle.between(0.0, 1.0)
    J = hd.ArcOnCircle.between(1.5, 2.0)

    assert not hd.arcs_overlap(I, J)
    assert hd.arc_distance(I, J) == pytest.approx(0.5)
    assert hd.is_epsilon_separated(I, J, 0.5)
    assert not hd.is_epsilon_separated(I, J, 0.6)
    assert hd.arc_distance(I, hd.ArcOnCircle.between(0.5, 3.0)) == 0.0


def test_decay_exponent_of_shrinking_arcs():
    I = hd.ArcOnCircle.between(-0.5, 0.5)
    top = hd.geodesic_top_point(I).a
    distances, measures = [], []

    for length in np.geomspace(0.1, 1e-5, 16):
        J = hd.ArcOnCircle.between(np.pi - 0.5 * length, np.pi + 0.5 * length)
        distances.append(hd.hyperbolic_distance(top, hd.geodesic_top_point(J).a))
        measures.append(hd.harmonic_measure_arc(J, top))

    # ω decays like e^{-2ρ} for this metric
    assert hd.decay_exponent(distances, measures) == pytest.approx(2.0, rel=0.1)


def test_harnack_bound():
    z, w = 0.1, 0.6j
    arc = hd.ArcOnCircle.between(0.0, 0.3)
    ratio = hd.harmonic_measure_arc(arc, z) / hd.harmonic_measure_arc(arc, w)

    assert ratio <= hd.harnack_bound(z, w)
    assert 1 / ratio <= hd.harnack_bound(z, w)


def test_closest_point_matches_numerical_minimum():
    I = hd.ArcOnCircle.between(0.0, 1.0)
    J = hd.ArcOnCircle.between(2.0, 3.5)

    def gap(st):
        return hd.hyperbolic_distance(hd.geodesic_point(I, st[0]), hd.geodesic_point(J, st[1]))

    found = optimize.minimize(
        gap, x0=[0.0, 0.0], method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-14, "maxiter": 4000}
    )

    assert found.success
    assert abs(hd.geodesic_point(I, found.x[0]) - hd.closest_point_to_arc(I, J)) < 1e-5

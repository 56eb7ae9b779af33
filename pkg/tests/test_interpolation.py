import pytest

from qcfold import interpolation as itp
from qcfold.blaschke import LevelPartition
import numpy as np

TWO_PI = 2 * np.pi


@pytest.fixture
def plan():
    return itp.align_partitions(TWO_PI * np.array([-5.5, -0.5, 3.2, 6.7]), window=8)


def smooth_alpha(y):
    t = np.asarray(y) / TWO_PI
    return t + 0.05 * np.sin(TWO_PI * t)


def test_fold_profiles():
    y = np.array([0.0, np.pi / 2, np.pi, TWO_PI])

    assert np.allclose(itp.FoldProfile.COSH(y), [1.0, 0.0, -1.0, 1.0])
    assert np.allclose(itp.FoldProfile.TENT(y), [1.0, 0.0, -1.0, 1.0])

    for profile in itp.FoldProfile:
        assert np.allclose(profile(-y - 0.3), profile(y + 0.3))


def test_modulus_matching():
    w = np.e * np.exp(1j * np.array([0.0, 1.0, -2.5]))

    assert np.allclose(itp.match_modulus(w, itp.ModulusMatching.STRETCH), np.exp(1j * np.array([0.0, 1.0, -2.5])))
    assert np.allclose(itp.match_modulus(w, itp.ModulusMatching.SCALE), w)
    assert itp.ModulusMatching.STRETCH.w_bound == 1.0
    assert itp.ModulusMatching.SCALE.w_bound == pytest.approx(np.e)


@pytest.mark.parametrize(
    "fx, fy, expected",
    [
        (1.0, 1j, (1.0, 1.0)),
        (2.0, 2j, (2.0, 2.0)),
        (3.0, 1j, (3.0, 1.0)),
        (1.0, -1j, (1.0, -1.0)),
    ],
)
def test_singular_values(fx, fy, expected):
    assert np.allclose(itp.singular_values(fx, fy), expected)


def test_psi1_linearizes_the_phase():
    psi1 = itp.build_psi1((0.0, TWO_PI), smooth_alpha)
    y = np.linspace(0.3, 6.0, 9)

    assert np.allclose(psi1(1 + 1j * y), 1 + 1j * TWO_PI * smooth_alpha(y))
    assert np.allclose(psi1(2 + 1j * y), 2 + 1j * y)

    x = np.linspace(1.0, 2.0, 5)
    assert np.allclose(psi1(x + 0j), x)
    assert np.allclose(psi1(x + 1j * TWO_PI), x + 1j * TWO_PI)
    # a translation outside its interval
    assert psi1(1.5 + 10j) == pytest.approx(1.5 + 10j)


def test_psi1_inverse():
    psi1 = itp.build_psi1((0.0, TWO_PI), smooth_alpha)
    z = np.array([1.2 + 0.5j, 1.5 + 3.0j, 1.9 + 6.0j, 1.0 + 2.0j])

    assert np.allclose(psi1.inverse(psi1(z)), z, atol=1e-10)
    assert 1.0 <= psi1.max_dilatation < 1.5


@pytest.mark.parametrize(
    "alpha",
    [
        lambda y: np.asarray(y) / (2 * TWO_PI),
        lambda y: np.asarray(y) / TWO_PI + 0.5 * np.sin(np.asarray(y)),
    ],
)
def test_psi1_rejects_bad_phase(alpha):
    with pytest.raises(itp.MonotonicityError):
        itp.build_psi1((0.0, TWO_PI), alpha)


def test_alignment(plan):
    assert plan.initial.tolist() == [-6, -1, 3, 6]
    assert plan.lattice.tolist() == [-6, -1, 2, 5]
    assert plan.gaps.tolist() == [4, 2, 2]
    assert np.all(np.abs(plan.displacement) <= 1)
    assert plan.blocks == ((-5, -4, -3, -2), (0, 1), (3, 4))
    assert plan.pairs(0) == [(-5, -2), (-4, -3)]
    assert plan.classify([-6, -5, -1, 0, 2, 5, 7]).tolist() == [1, 2, 1, 2, 1, 0, 0]


def test_alignment_rejects_shared_intervals():
    with pytest.raises(itp.AlignmentError):
        itp.align_partitions(TWO_PI * np.array([0.1, 0.5, 2.0]), window=4)


def test_alignment_of_default_partition(halfplane_pipeline):
    plan = halfplane_pipeline.assemblies[0].plan

    assert np.all(plan.gaps % 2 == 0)
    assert np.all(plan.gaps >= 0)
    assert np.all(np.abs(plan.displacement) <= 1)


def test_psi2_maps_endpoints_onto_lattice(plan):
    psi2 = itp.build_psi2(plan)

    assert np.allclose(psi2(1 + 1j * plan.endpoints), 1 + 1j * TWO_PI * plan.lattice)
    assert np.allclose(psi2(2 + 1j * plan.endpoints), 2 + 1j * plan.endpoints)

    below = plan.endpoints[0] - 1.0
    assert psi2(1 + 1j * below) == pytest.approx(1 + 1j * (TWO_PI * plan.lattice[0] - 1.0))

    z = np.array([1.3 - 20.0j, 1.7 + 5.0j, 1.5 + 40.0j])
    assert np.allclose(psi2.inverse(psi2(z)), z)


@pytest.mark.parametrize("n_block", [-2, 1, 3])
def test_psi3_rejects_bad_blocks(n_block):
    with pytest.raises(itp.FoldingError):
        itp.build_psi3(0.0, n_block)


def test_psi3_pairs_slit_sides():
    psi3 = itp.build_psi3(0.0, 2)
    s = np.array([0.0, 0.25, 0.5, 1.0])
    upper = psi3(psi3.slit_point(s), side=itp.Side.UPPER)
    lower = psi3(psi3.slit_point(s), side=itp.Side.LOWER)

    assert psi3.center == pytest.approx(4 * np.pi)
    assert np.allclose(upper.imag + lower.imag, 8 * np.pi)
    assert np.allclose(upper.real, 1.0)
    assert np.allclose(lower.real, 1.0)
    assert np.allclose(upper.imag, [6 * np.pi, 5.5 * np.pi, 5 * np.pi, 4 * np.pi])


@pytest.mark.parametrize("n_block", [2, 4])
def test_psi3_fixes_three_sides(n_block):
    base = TWO_PI * 3
    psi3 = itp.build_psi3(base, n_block)
    H = psi3.height
    x = np.array([1.2, 1.5, 1.8])
    y = base + H * np.array([0.1, 0.4, 0.7, 0.95])

    assert np.allclose(psi3(x + 1j * base), x + 1j * base)
    assert np.allclose(psi3(x + 1j * (base + H)), x + 1j * (base + H))
    assert np.allclose(psi3(2 + 1j * y), 2 + 1j * y)
    # the left side maps linearly onto J_K
    assert np.allclose(psi3(1 + 1j * y), 1 + 1j * (base + (y - base) / (1 + n_block)))


def test_psi3_inverse_off_the_slit():
    psi3 = itp.build_psi3(0.0, 2)
    z = np.array([1.8 + 1.0j, 1.3 + 2.0j, 1.9 + 17.0j, 1.1 + 15.0j, 1.6 + 15.0j])

    assert np.allclose(psi3.inverse(psi3(z)), z)


def test_psi3_dilatation_depends_on_block_size_only():
    first = itp.build_psi3(0.0, 4)
    second = itp.build_psi3(TWO_PI * 11, 4)

    assert np.allclose(first.beltrami(), second.beltrami())
    assert first.max_dilatation == pytest.approx(second.max_dilatation)
    assert np.all(np.abs(first.beltrami()) < 1)
    assert itp.build_psi3(0.0, 0).max_dilatation == pytest.approx(1.0)


def test_folding_map(plan):
    folding = itp.build_folding(plan)

    assert [fold.n_block for fold in folding.folds] == [4, 2, 2]
    z = np.array([0.5 + 3.0j, 2.0 - 20.0j, 2.0 + 30.0j, 3.0 + 1.0j])
    assert np.allclose(folding(z), z)


def test_sigma(plan):
    folded = 0.5
    kept = -TWO_PI + 0.7

    assert itp.sigma_j(1 + 1j * folded, plan) == pytest.approx(np.e * np.cos(folded))
    assert itp.sigma_j(1 + 1j * kept, plan) == pytest.approx(np.exp(1 + 1j * kept))
    assert itp.sigma_j(2 + 1j * folded, plan) == pytest.approx(np.exp(2 + 1j * folded))
    assert itp.sigma_j(1 + 1j * folded, plan, itp.FoldProfile.TENT) == pytest.approx(
        np.e * itp.FoldProfile.TENT(folded)
    )


def test_assembly_is_exponential_on_right_edge(halfplane_pipeline):
    assembly = halfplane_pipeline.assemblies[0]
    lo, hi = assembly.window
    y = np.linspace(lo + 1.0, hi - 1.0, 37)

    expected = itp.match_modulus(np.exp(2 + 1j * y), assembly.matching)
    assert np.allclose(assembly(2 + 1j * y), expected)
    assert np.allclose(itp.compose_gj(2 + 1j * y, assembly), expected)


def test_assembly_is_bounded_on_left_edge(halfplane_pipeline):
    assembly = halfplane_pipeline.assemblies[0]
    lo, hi = assembly.window
    y = np.linspace(lo + 0.1, hi - 0.1, 301)

    assert np.all(np.abs(assembly(1 + 1j * y)) <= assembly.matching.w_bound + 1e-9)


def test_assembly_export(halfplane_pipeline):
    assembly = halfplane_pipeline.assemblies[0]
    payload = assembly.to_json()

    assert payload["tract"] == 0
    assert set(payload["stage_dilatation"]) == {"psi1", "psi2", "psi3"}
    assert payload["plan"]["lattice"] == assembly.plan.lattice.tolist()


def test_linearize_needs_two_level_points():
    partition = LevelPartition(tract=0, endpoints=np.array([1.5]), windings=np.array([0]), phase=np.asarray)

    with pytest.raises(itp.MonotonicityError, match="no level interval"):
        itp.linearize_partition(partition)


def test_alignment_of_bundled_partitions(bundled_pipeline):
    for partition in bundled_pipeline.partitions:
        plan = itp.align_partitions(partition, bundled_pipeline.scenario.window)

        assert np.all(plan.gaps % 2 == 0)
        assert np.all(np.abs(plan.displacement) <= 1)

    assert bundled_pipeline.assemblies is not None, bundled_pipeline.failure


def test_piecewise_map_is_abstract():
    with pytest.raises(TypeError):
        itp.PiecewiseMap()

    assert issubclass(itp.FoldingMap, itp.PiecewiseMap)


def test_psi3_slit_has_one_edge_per_pair():
    psi3 = itp.build_psi3(0.0, 4)
    s = np.arange(3) / 2
    upper = psi3(psi3.slit_point(s), side=itp.Side.UPPER)
    lower = psi3(psi3.slit_point(s), side=itp.Side.LOWER)

    assert np.allclose(upper, 1 + 1j * np.pi * np.array([10.0, 8.0, 6.0]))
    assert np.allclose(lower, 1 + 1j * np.pi * np.array([2.0, 4.0, 6.0]))
    assert np.count_nonzero(psi3.upper) == 4 // 2 + 3

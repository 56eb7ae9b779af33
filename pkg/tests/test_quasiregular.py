import pytest

from qcfold import quasiregular as qr
from qcfold.interpolation import E
import numpy as np


def test_classify(halfplane_map):
    region, index, tau = halfplane_map.classify(np.array([5.0 + 1j, 3.5 + 1j, 0.0, 3.5 + 1000j]))

    assert region.tolist() == [qr.Region.OUTER, qr.Region.BAND, qr.Region.W, qr.Region.UNRESOLVED]
    assert index.tolist() == [0, 0, -1, 0]
    assert tau[0] == pytest.approx(3.0 + 1j)


def test_g_is_the_model_far_out(halfplane_map):
    z = np.array([5.0 + 1j, 4.5 - 7j, 9.0 + 0.3j])

    assert np.allclose(qr.g_eval(halfplane_map, z), np.exp(z - 2.0))
    assert halfplane_map(5.0) == pytest.approx(np.exp(3.0))


def test_g_is_nan_where_unresolved(halfplane_map):
    assert np.isnan(qr.g_eval(halfplane_map, 3.5 + 1000j))


def test_g_is_bounded_on_w(halfplane_map):
    z = np.array([0.0, -5.0 + 3.0j, 2.5 - 10.0j, 2.9 + 40.0j])

    assert np.all(np.abs(halfplane_map(z)) < halfplane_map.w_bound)


def test_beltrami_of_holomorphic_map():
    sample = qr.beltrami_of(np.exp, np.array([0.3 + 0.2j, -1.0 + 2.0j, 2.0 - 1.0j]))

    assert not np.any(sample.flagged)
    assert np.all(sample.modulus < 1e-6)


def test_beltrami_of_conjugate_linear_map():
    sample = qr.beltrami_of(lambda z: z + 0.5 * np.conj(z), np.array([0.0, 1.0 + 1.0j, -3.0j]))

    assert not np.any(sample.flagged)
    assert np.allclose(sample.mu, 0.5)


def test_dilatation_report_fields():
    report = qr.DilatationReport(
        band_sup=0.5,
        elsewhere_sup=1e-9,
        band_samples=10,
        elsewhere_samples=10,
        flagged=0,
        worst=("tract 0 at tau = 1.5: |mu| = 0.5",),
        margin=1e-3,
        holomorphic_tolerance=1e-6,
    )

    assert report.quasiconstant == pytest.approx(3.0)
    assert report.passed
    assert report.offending == ()

    leaky = qr.DilatationReport(**{**report.__dict__, "elsewhere_sup": 1e-3})
    assert not leaky.passed
    assert leaky.offending == ("|mu| = 0.001 off the band",)

    pinned = qr.DilatationReport(**{**report.__dict__, "max_quasiconstant": 2.5})
    assert not pinned.passed
    assert pinned.offending == ("K = 3 exceeds the pinned 2.5",)
    assert qr.DilatationReport(**{**report.__dict__, "max_quasiconstant": 3.5}).passed


def test_dilatation_of_default_map(halfplane_map):
    report = qr.dilatation_report(halfplane_map, grid=8)

    assert report.passed
    assert 1.0 < report.quasiconstant < float("inf")
    assert report.band_samples > 0
    assert report.elsewhere_samples > 0


def test_singular_values_of_default_map(halfplane_map):
    report = qr.singular_value_audit(halfplane_map, grid=8)

    assert report.passed
    assert report.slit_max <= E + 1e-9
    assert report.w_max < 1.0
    assert report.outer_min > E**2


def test_continuity_of_default_map(halfplane_map):
    report = qr.continuity_audit(halfplane_map, samples=64)

    assert report.passed, report.offending


def test_scaling_report():
    report = qr.ScalingReport(rhos=(1.0, 0.5), quasiconstants=(2.0, 10.0))

    assert report.normalized == pytest.approx((2.0, 2.5))
    assert report.passed

    failing = qr.ScalingReport(rhos=(1.0, 0.5), quasiconstants=(2.0, 40.0))
    assert not failing.passed
    assert len(failing.offending) == 1


def test_rho_scaling_of_default_map(halfplane_map):
    report = qr.rho_scaling_audit(halfplane_map, rhos=(1.0, 0.5), grid=4)

    assert report.rhos == (1.0, 0.5)
    assert report.passed

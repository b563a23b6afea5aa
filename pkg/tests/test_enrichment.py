import numpy as np
import pytest

from app.discretization.sipg import assemble_mass
from app.errors import DependentBasisError
from app.reduction.enrichment import (
    EnrichmentMethod,
    baseline,
    check_independence,
    expand,
    extrapolate,
    principal_angles,
    saim,
)
from app.reduction.pod import MassFactor, m_orthonormalize


@pytest.fixture
def mass(small_space):
    return assemble_mass(small_space)


@pytest.fixture
def bases(mass, rng):
    """Two M-orthonormal three-column bases"""
    n = mass.shape[0]
    Psi1 = m_orthonormalize(rng.standard_normal((n, 3)), mass)
    Psi2 = m_orthonormalize(Psi1 + 0.3 * rng.standard_normal((n, 3)), mass)
    return Psi1, Psi2


def test_method_parsing():
    assert EnrichmentMethod.parse("extpod") is EnrichmentMethod.EXTPOD
    assert EnrichmentMethod.parse(" SAIM ") is EnrichmentMethod.SAIM
    with pytest.raises(ValueError):
        EnrichmentMethod.parse("POD2")


def test_baseline_copies_columns(bases):
    Psi, _ = bases
    result = baseline(Psi, 0.01)
    assert result.method is EnrichmentMethod.BPOD
    np.testing.assert_array_equal(result.columns, Psi)
    assert result.columns is not Psi


def test_extrapolate_zero_step_and_zero_sensitivity(bases, mass, rng):
    Psi, _ = bases
    Psi_mu = rng.standard_normal(Psi.shape)
    np.testing.assert_array_equal(extrapolate(Psi, Psi_mu, 0.0, mass).columns, Psi)
    np.testing.assert_array_equal(extrapolate(Psi, np.zeros_like(Psi), 3.0, mass).columns, Psi)


def test_extrapolate_is_affine(bases, mass, rng):
    Psi, _ = bases
    Psi_mu = rng.standard_normal(Psi.shape)
    a = extrapolate(Psi, Psi_mu, 1e-3, mass, source_parameter=0.01)
    b = extrapolate(Psi, Psi_mu, 2e-3, mass)
    ab = extrapolate(Psi, Psi_mu, 3e-3, mass)
    np.testing.assert_allclose(a.columns + b.columns - Psi, ab.columns, atol=1e-12)
    assert a.target_parameter == pytest.approx(0.011)


def test_extrapolate_shape_mismatch(bases):
    Psi, _ = bases
    with pytest.raises(ValueError):
        extrapolate(Psi, Psi[:, :2], 0.1)


def test_expand_keeps_leading_block(bases, mass, rng):
    Psi, _ = bases
    result = expand(Psi, rng.standard_normal(Psi.shape), mass)
    assert result.size == 6
    np.testing.assert_array_equal(result.columns[:, :3], Psi)


def test_expand_rejects_sensitivity_inside_span(bases, mass):
    Psi, _ = bases
    rotation = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(DependentBasisError) as info:
        expand(Psi, Psi @ rotation, mass)
    assert info.value.column >= 3


def test_check_independence(bases, mass):
    Psi, _ = bases
    check_independence(Psi, mass)
    with pytest.raises(DependentBasisError):
        check_independence(np.hstack([Psi, Psi[:, :1]]), mass)


def test_principal_angles_of_identical_spans(bases, mass):
    Psi, _ = bases
    rotated = Psi @ np.linalg.qr(np.arange(9.0).reshape(3, 3) + np.eye(3))[0]
    assert np.all(principal_angles(Psi, rotated, mass) < 1e-8)
    factor = MassFactor.from_matrix(mass)
    assert np.all(principal_angles(Psi, rotated, factor) < 1e-8)


@pytest.mark.parametrize("endpoint", [0, 1])
def test_saim_recovers_anchor_spans(bases, mass, endpoint):
    Psi1, Psi2 = bases
    mu1, mu2 = 1.0 / 125.0, 1.0 / 75.0
    target = (mu1, mu2)[endpoint]
    anchor = (Psi1, Psi2)[endpoint]
    result = saim(Psi1, Psi2, mu1, mu2, target, mass)
    assert result.method is EnrichmentMethod.SAIM
    assert result.size == 3
    assert np.all(principal_angles(result.columns, anchor, mass) <= 1e-8)


def test_saim_interpolates_angles(bases, mass):
    Psi1, Psi2 = bases
    mu1, mu2 = 0.0, 1.0
    theta = principal_angles(Psi1, Psi2, mass)
    result = saim(Psi1, Psi2, mu1, mu2, 0.25, mass)
    np.testing.assert_allclose(principal_angles(result.columns, Psi1, mass), np.sort(0.25 * theta),
                               atol=1e-8)
    # Interpolated columns stay M-orthonormal
    M = mass.toarray()
    np.testing.assert_allclose(result.columns.T @ M @ result.columns, np.eye(3), atol=1e-10)


def test_saim_with_coincident_anchors(bases, mass):
    Psi1, _ = bases
    result = saim(Psi1, Psi1, 0.0, 1.0, 0.5, mass)
    assert np.all(np.isfinite(result.columns))
    assert np.all(principal_angles(result.columns, Psi1, mass) <= 1e-8)


def test_saim_argument_checks(bases, mass):
    Psi1, Psi2 = bases
    with pytest.raises(ValueError):
        saim(Psi1, Psi2, 0.0, 1.0, 1.5, mass)
    with pytest.raises(ValueError):
        saim(Psi1, Psi2, 1.0, 1.0, 1.0, mass)
    with pytest.raises(ValueError):
        saim(Psi1, Psi2[:, :2], 0.0, 1.0, 0.5, mass)


def test_euclidean_saim_endpoint(rng):
    Psi1 = np.linalg.qr(rng.standard_normal((10, 2)))[0]
    Psi2 = np.linalg.qr(rng.standard_normal((10, 2)))[0]
    result = saim(Psi1, Psi2, 0.0, 1.0, 1.0, euclidean=True)
    assert np.all(principal_angles(result.columns, Psi2) <= 1e-8)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scs_lab import gaussian_models as gm
from scs_lab.errors import ContainerFormatError, InvalidCovarianceError

from conftest import random_orthonormal


# ---------------------------------------------------------------- spectra

def test_power_decay_direct_values():
    spec = gm.power_decay_spectrum(3, 1.0)
    np.testing.assert_allclose(spec.eigenvalues, [1.0, 0.5, 1.0 / 3.0])


def test_power_decay_alpha3_entry():
    spec = gm.power_decay_spectrum(64, 3.0)
    assert spec.eigenvalues[7] == pytest.approx(8.0**-3)
    assert spec.eigenvalues[7] == pytest.approx(0.001953125)


def test_power_decay_rejects_bad_args():
    with pytest.raises(ValueError):
        gm.power_decay_spectrum(4, 0.0)
    with pytest.raises(ValueError):
        gm.power_decay_spectrum(0, 1.0)
    with pytest.raises(ValueError):
        gm.power_decay_spectrum(4, -2.0)


@given(n=st.integers(1, 80), alpha=st.floats(0.01, 8.0))
def test_power_decay_strictly_decreasing(n, alpha):
    lam = gm.power_decay_spectrum(n, alpha).eigenvalues
    assert np.all(np.diff(lam) < 0) or n == 1


def test_spectrum_validation():
    with pytest.raises(ValueError):
        gm.Spectrum(np.array([1.0, 2.0]))  # increasing
    with pytest.raises(ValueError):
        gm.Spectrum(np.array([1.0, -0.1]))
    with pytest.raises(ValueError):
        gm.Spectrum(np.array([]))


def test_spectrum_energy_helpers():
    spec = gm.Spectrum(np.array([4.0, 1.0]))
    assert spec.total_energy == 5.0
    assert spec.tail_energy(1) == 1.0
    assert spec.tail_energy(2) == 0.0


# ---------------------------------------------------------------- rotation_2d

def test_rotation_identity():
    np.testing.assert_allclose(gm.rotation_2d(0.0), np.eye(2))


def test_rotation_quarter_turn():
    np.testing.assert_allclose(gm.rotation_2d(np.pi / 2), [[0, -1], [1, 0]], atol=1e-15)


def test_rotation_eighth_turn():
    r = gm.rotation_2d(np.pi / 4)
    np.testing.assert_allclose(np.abs(r), np.sqrt(2) / 2 * np.ones((2, 2)))


@given(theta=st.floats(-10.0, 10.0))
def test_rotation_determinant(theta):
    assert np.linalg.det(gm.rotation_2d(theta)) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- rotate_spectrum

def test_rotate_isotropic_invariance():
    rng = np.random.default_rng(0)
    b = random_orthonormal(2, rng)
    np.testing.assert_allclose(gm.rotate_spectrum(gm.Spectrum(np.ones(2)), b), np.eye(2), atol=1e-12)


def test_rotate_identity_basis():
    np.testing.assert_allclose(
        gm.rotate_spectrum(gm.Spectrum(np.array([4.0, 1.0])), np.eye(2)), np.diag([4.0, 1.0])
    )


def test_rotate_quarter_turn_swaps_diagonal():
    cov = gm.rotate_spectrum(gm.Spectrum(np.array([4.0, 1.0])), gm.rotation_2d(np.pi / 2))
    np.testing.assert_allclose(cov, np.diag([1.0, 4.0]), atol=1e-12)


def test_rotate_rejects_nonorthonormal():
    with pytest.raises(ValueError):
        gm.rotate_spectrum(gm.Spectrum(np.array([1.0, 0.5])), np.array([[1.0, 0.0], [1.0, 1.0]]))


# ---------------------------------------------------------------- make_gaussian

def test_make_gaussian_identity():
    model = gm.make_gaussian(np.zeros(2), np.eye(2), reg_epsilon=0.0)
    np.testing.assert_allclose(model.spectrum.eigenvalues, [1.0, 1.0])
    assert model.log_det == pytest.approx(0.0)
    np.testing.assert_allclose(np.abs(model.pca_basis), np.eye(2))


def test_make_gaussian_diagonal():
    model = gm.make_gaussian(np.zeros(2), np.diag([4.0, 1.0]), reg_epsilon=0.0)
    np.testing.assert_allclose(model.spectrum.eigenvalues, [4.0, 1.0])
    assert model.log_det == pytest.approx(np.log(4.0))


def test_make_gaussian_rotated_round_trip():
    b = gm.rotation_2d(np.deg2rad(30.0))
    cov = gm.rotate_spectrum(gm.Spectrum(np.array([4.0, 1.0])), b)
    model = gm.make_gaussian(np.zeros(2), cov, reg_epsilon=0.0)
    np.testing.assert_allclose(model.spectrum.eigenvalues, [4.0, 1.0], rtol=1e-12)
    assert np.max(np.abs(model.covariance - cov)) < 1e-12


def test_make_gaussian_rejects_asymmetric():
    with pytest.raises(InvalidCovarianceError):
        gm.make_gaussian(np.zeros(2), np.array([[1.0, 0.4], [0.1, 1.0]]))


def test_make_gaussian_rejects_negative_spectrum():
    with pytest.raises(InvalidCovarianceError):
        gm.make_gaussian(np.zeros(2), np.diag([1.0, -0.5]))


def test_make_gaussian_floors_small_eigenvalues():
    model = gm.make_gaussian(np.zeros(3), np.diag([3.0, 0.0, 0.0]), reg_epsilon=1e-6)
    floor = 1e-6 * 3.0 / 3
    assert np.all(model.spectrum.eigenvalues >= floor)
    assert np.isfinite(model.log_det)


def test_make_gaussian_keeps_degenerate_when_unregularized():
    model = gm.make_gaussian(np.zeros(3), np.diag([3.0, 1.0, 0.0]), reg_epsilon=0.0)
    assert model.spectrum.eigenvalues[-1] == 0.0
    assert model.log_det == -np.inf
    assert not model.is_invertible()


def test_eigenvector_sign_canonicalization():
    rng = np.random.default_rng(3)
    b = random_orthonormal(5, rng)
    cov = gm.rotate_spectrum(gm.Spectrum(np.array([5.0, 4.0, 3.0, 2.0, 1.0])), b)
    model = gm.make_gaussian(np.zeros(5), cov)
    for col in model.pca_basis.T:
        assert col[np.argmax(np.abs(col))] > 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 8))
def test_factorization_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    b = random_orthonormal(n, rng)
    lam = np.sort(rng.uniform(0.1, 5.0, n))[::-1]
    cov = gm.rotate_spectrum(gm.Spectrum(lam), b)
    model = gm.make_gaussian(np.zeros(n), cov, reg_epsilon=0.0)
    np.testing.assert_allclose(model.spectrum.eigenvalues, lam, rtol=1e-9)
    rebuilt = gm.rotate_spectrum(model.spectrum, model.pca_basis)
    assert np.linalg.norm(rebuilt - cov) <= 1e-9 * np.linalg.norm(cov)


# ---------------------------------------------------------------- anti_diagonal_pair

def test_anti_diagonal_pair_2d():
    first, second = gm.anti_diagonal_pair(2, gm.Spectrum(np.array([4.0, 1.0])))
    np.testing.assert_allclose(first.covariance, np.diag([4.0, 1.0]))
    np.testing.assert_allclose(second.covariance, np.diag([1.0, 4.0]))


def test_anti_diagonal_pair_isotropic():
    first, second = gm.anti_diagonal_pair(3, gm.Spectrum(np.ones(3)))
    np.testing.assert_allclose(first.covariance, np.eye(3))
    np.testing.assert_allclose(second.covariance, np.eye(3))


def test_anti_diagonal_pair_reverses_spectrum():
    spec = gm.power_decay_spectrum(4, 3.0)
    _, second = gm.anti_diagonal_pair(4, spec)
    np.testing.assert_allclose(np.diag(second.covariance), spec.eigenvalues[::-1])


def test_anti_diagonal_pair_rejects_1d():
    with pytest.raises(ValueError):
        gm.anti_diagonal_pair(1, gm.Spectrum(np.ones(1)))


# ---------------------------------------------------------------- sampling

def test_sample_degenerate_zero_covariance():
    model = gm.make_gaussian(np.zeros(3), np.zeros((3, 3)), reg_epsilon=0.0)
    x = gm.sample(model, 10, np.random.default_rng(0))
    assert np.all(x == 0.0)


def test_sample_empirical_covariance_isotropic():
    model = gm.make_gaussian(np.zeros(2), np.eye(2), reg_epsilon=0.0)
    x = gm.sample(model, 100000, np.random.default_rng(1))
    emp = x.T @ x / x.shape[0]
    assert np.linalg.norm(emp - np.eye(2)) / np.linalg.norm(np.eye(2)) < 0.03


def test_sample_deterministic_given_seed():
    model = gm.make_gaussian(np.zeros(4), np.diag([4.0, 3.0, 2.0, 1.0]), reg_epsilon=0.0)
    a = gm.sample(model, 5, np.random.default_rng(42))
    b = gm.sample(model, 5, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)


def test_sample_consistency_rotated_model():
    rng = np.random.default_rng(7)
    b = random_orthonormal(6, rng)
    lam = gm.power_decay_spectrum(6, 1.5)
    model = gm.make_gaussian(np.arange(6.0), gm.rotate_spectrum(lam, b), reg_epsilon=0.0)
    x = gm.sample(model, 100000, np.random.default_rng(8))
    centered = x - model.mean
    emp = centered.T @ centered / x.shape[0]
    rel = np.linalg.norm(emp - model.covariance) / np.linalg.norm(model.covariance)
    assert rel < 0.05


# ---------------------------------------------------------------- mixtures & container

def test_gmm_validation():
    m2 = gm.make_gaussian(np.zeros(2), np.eye(2))
    m3 = gm.make_gaussian(np.zeros(3), np.eye(3))
    with pytest.raises(ValueError):
        gm.Gmm((m2, m3))
    with pytest.raises(ValueError):
        gm.Gmm(())
    mix = gm.Gmm((m2, m2))
    assert len(mix) == 2 and mix.dim == 2


def test_gmm_container_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    models = []
    for j in range(3):
        b = random_orthonormal(4, rng)
        lam = np.sort(rng.uniform(0.5, 4.0, 4))[::-1]
        models.append(gm.make_gaussian(rng.standard_normal(4), gm.rotate_spectrum(gm.Spectrum(lam), b)))
    mix = gm.Gmm(tuple(models))
    path = tmp_path / "mix.gmm"
    gm.save_gmm(mix, path)
    loaded = gm.load_gmm(path)
    assert len(loaded) == 3
    for orig, back in zip(mix.models, loaded.models):
        np.testing.assert_array_equal(back.mean, orig.mean)
        np.testing.assert_allclose(back.covariance, orig.covariance, rtol=0, atol=1e-14)


def test_gmm_container_truncation_detected(tmp_path):
    mix = gm.Gmm((gm.make_gaussian(np.zeros(2), np.eye(2)),))
    path = tmp_path / "mix.gmm"
    gm.save_gmm(mix, path)
    blob = path.read_bytes()
    bad = tmp_path / "bad.gmm"
    bad.write_bytes(blob[:-8])
    with pytest.raises(ContainerFormatError):
        gm.load_gmm(bad)
    bad.write_bytes(blob[:6])
    with pytest.raises(ContainerFormatError):
        gm.load_gmm(bad)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from derev import (ArrayGeometry, blocking_matrix, diffuse_coherence,
                   steering_vector, uniform_linear_array)

from conftest import random_complex


def two_mic_array(spacing=0.04):
    return ArrayGeometry(mic_positions=np.array([[0.0, 0, 0],
                                                 [spacing, 0, 0]]))


class TestGeometry:
    def test_uniform_linear_array(self):
        geom = uniform_linear_array()
        assert geom.num_mics == 8
        assert geom.pairwise_distances()[0, 1] == pytest.approx(0.04)

    def test_rejects_duplicate_positions(self):
        with pytest.raises(ValueError):
            ArrayGeometry(mic_positions=np.zeros((2, 3)))

    def test_rejects_single_mic(self):
        with pytest.raises(ValueError):
            ArrayGeometry(mic_positions=np.array([[0.0, 0, 0]]))

    def test_rejects_bad_reference(self):
        with pytest.raises(ValueError):
            uniform_linear_array(4, reference_index=4)


class TestSteeringVector:
    def test_broadside_all_ones(self):
        geom = uniform_linear_array()
        d = steering_vector(geom, np.pi / 2, 0.0, 3000.0)
        np.testing.assert_allclose(d, np.ones(8), atol=1e-14)

    def test_endfire_quadrature(self):
        # 2-mic, 4 cm, f = c / (4 * spacing): quarter-wavelength spacing puts
        # the far mic a quarter cycle late
        d = steering_vector(two_mic_array(), np.pi, 0.0, 2143.75)
        np.testing.assert_allclose(d, [1.0, -1.0j], atol=1e-12)

    def test_dc_all_ones(self):
        geom = uniform_linear_array()
        for az in (0.0, 1.0, 2.5):
            np.testing.assert_allclose(steering_vector(geom, az, 0.0, 0.0),
                                       np.ones(8))

    def test_reference_entry_exactly_one(self):
        geom = uniform_linear_array(reference_index=3)
        d = steering_vector(geom, 0.3, 0.1, 5000.0)
        assert d[3] == 1.0 + 0.0j

    def test_reflection_about_broadside_conjugates(self):
        geom = uniform_linear_array()
        for az in (0.2, 0.9, 1.4):
            d1 = steering_vector(geom, az, 0.0, 2500.0)
            d2 = steering_vector(geom, np.pi - az, 0.0, 2500.0)
            np.testing.assert_allclose(d1, d2.conj(), atol=1e-12)


class TestDiffuseCoherence:
    def test_dc_all_ones(self):
        geom = uniform_linear_array()
        np.testing.assert_allclose(diffuse_coherence(geom, 0.0),
                                   np.ones((8, 8)))

    def test_unit_diagonal_any_frequency(self):
        geom = uniform_linear_array()
        for f in (100.0, 1000.0, 7900.0):
            np.testing.assert_allclose(np.diag(diffuse_coherence(geom, f)),
                                       np.ones(8))

    def test_zero_crossing(self):
        # 2*f*d/c = 1 at f = 4287.5 Hz for 4 cm spacing
        gamma = diffuse_coherence(uniform_linear_array(), 4287.5)
        assert abs(gamma[0, 1]) < 1e-12

    def test_symmetric_real(self):
        gamma = diffuse_coherence(uniform_linear_array(), 3000.0)
        np.testing.assert_allclose(gamma, gamma.T.conj())
        assert np.abs(gamma.imag).max() == 0.0


class TestBlockingMatrix:
    def test_two_mic_difference(self):
        b = blocking_matrix(np.array([1.0, 1.0]))
        assert abs(np.vdot(b[:, 0], np.array([1.0, 1.0]))) < 1e-12
        # single column proportional to the normalized difference
        ref = np.array([1.0, -1.0]) / np.sqrt(2.0)
        assert abs(abs(np.vdot(ref, b[:, 0])) - 1.0) < 1e-12

    def test_random_complex_contract(self):
        rng = np.random.default_rng(3)
        d = random_complex(rng, 8)
        b = blocking_matrix(d)
        assert np.linalg.norm(b.conj().T @ d) < 1e-12 * np.linalg.norm(d)
        assert np.linalg.norm(b.conj().T @ b - np.eye(7)) < 1e-12

    def test_axis_vector_spans_remaining_axes(self):
        m = 6
        d = np.zeros(m, dtype=complex)
        d[0] = 1.0
        b = blocking_matrix(d)
        projector = b @ b.conj().T
        for j in range(1, m):
            e = np.zeros(m, dtype=complex)
            e[j] = 1.0
            assert np.linalg.norm(projector @ e - e) < 1e-12

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            blocking_matrix(np.zeros(4, dtype=complex))

    @settings(deadline=None, max_examples=60)
    @given(m=st.sampled_from([2, 4, 8]), seed=st.integers(0, 2 ** 32 - 1))
    def test_blocking_property(self, m, seed):
        rng = np.random.default_rng(seed)
        d = random_complex(rng, m)
        b = blocking_matrix(d)
        assert np.linalg.norm(b.conj().T @ d) < 1e-12 * np.linalg.norm(d)
        assert np.linalg.norm(b.conj().T @ b - np.eye(m - 1)) < 1e-12


class TestBinModels:
    def test_count_and_dc(self, bin_models):
        assert len(bin_models) == 257
        np.testing.assert_allclose(bin_models[0].gamma, np.ones((8, 8)))

    def test_every_bin_blocks_target(self, bin_models):
        for model in bin_models:
            resid = np.linalg.norm(model.blocking.conj().T @ model.d)
            assert resid < 1e-12 * np.linalg.norm(model.d)

    def test_psi_identity_and_gamma_psd(self, bin_models):
        for model in bin_models[::16]:
            np.testing.assert_array_equal(model.psi, np.eye(8))
            evals = np.linalg.eigvalsh(model.gamma.real)
            assert evals.min() > -1e-12

    def test_reference_normalization(self, bin_models):
        for model in bin_models[::16]:
            assert model.d[0] == 1.0 + 0.0j

    def test_blocked_matrices_cached(self, bin_models):
        model = bin_models[40]
        bh = model.blocking.conj().T
        np.testing.assert_allclose(model.gamma_blocked,
                                   bh @ model.gamma @ model.blocking)
        np.testing.assert_allclose(model.psi_blocked,
                                   bh @ model.psi @ model.blocking)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kahlervae import linalg
from kahlervae.errors import NonHermitianInput, NotPD, NotPSD

from conftest import random_complex


def random_psd(rng, d, jitter=0.0):
    j = random_complex(rng, d, d)
    return j.conj().T @ j + jitter * np.eye(d)


class TestSqrtFactor:
    def test_identity(self):
        gamma = linalg.hermitian_sqrt_factor(np.eye(3))
        assert np.allclose(gamma.conj().T @ gamma, np.eye(3), atol=1e-14)

    def test_diagonal_reconstructs(self):
        s = np.diag([4.0, 9.0]).astype(complex)
        gamma = linalg.hermitian_sqrt_factor(s)
        # unique only up to a unitary on the left: compare the Gram product
        assert np.allclose(gamma.conj().T @ gamma, s, atol=1e-12)

    def test_random_psd_reconstruction(self, rng):
        s = random_psd(rng, 5)
        gamma = linalg.hermitian_sqrt_factor(s)
        rel = np.linalg.norm(gamma.conj().T @ gamma - s) / np.linalg.norm(s)
        assert rel < 1e-10

    def test_gram_idempotent_in_psd_cone(self, rng):
        s = random_psd(rng, 4)
        g1 = linalg.hermitian_sqrt_factor(s)
        s2 = g1.conj().T @ g1
        g2 = linalg.hermitian_sqrt_factor(s2)
        assert np.allclose(g2.conj().T @ g2, s2, atol=1e-10)

    def test_rejects_indefinite(self):
        with pytest.raises(NotPSD):
            linalg.hermitian_sqrt_factor(np.diag([1.0, -0.5]).astype(complex))


class TestLogDet:
    def test_identity_is_zero(self):
        assert linalg.logdet_hermitian(np.eye(5)) == pytest.approx(0.0, abs=1e-14)

    def test_analytic_diagonal(self):
        s = np.diag([np.e, np.e**2]).astype(complex)
        assert linalg.logdet_hermitian(s) == pytest.approx(3.0, rel=1e-12)

    def test_diagonal_vector_fast_path(self):
        assert linalg.logdet_hermitian(np.array([np.e, np.e**2])) == pytest.approx(3.0)

    def test_matches_eigenvalue_oracle(self, rng):
        s = random_psd(rng, 6, jitter=0.5)
        expected = float(np.sum(np.log(np.linalg.eigvalsh(s))))
        assert linalg.logdet_hermitian(s) == pytest.approx(expected, rel=1e-9)

    def test_rejects_singular(self):
        with pytest.raises(NotPD):
            linalg.logdet_hermitian(np.diag([1.0, 0.0]).astype(complex))


class TestMinEigenvalue:
    def test_identity(self):
        assert linalg.min_eigenvalue(np.eye(4)) == pytest.approx(1.0)

    def test_indefinite_diagonal(self):
        assert linalg.min_eigenvalue(np.diag([-1.0, 5.0])) == pytest.approx(-1.0)

    def test_gram_matrices_are_psd(self, rng):
        j = random_complex(rng, 7, 4)
        assert linalg.min_eigenvalue(j.conj().T @ j) >= -1e-12

    def test_rejects_non_hermitian(self, rng):
        m = random_complex(rng, 3, 3)
        m[0, 1] += 10.0
        with pytest.raises(NonHermitianInput):
            linalg.min_eigenvalue(m)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_trace_cyclic_invariance(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 6))
    a = random_complex(rng, d, d)
    b = random_complex(rng, d, d)
    sig = np.diag(rng.uniform(0.5, 2.0, size=d)).astype(complex)
    t1 = np.trace(a @ sig @ b @ sig)
    t2 = np.trace(sig @ b @ sig @ a)
    assert abs(t1 - t2) <= 1e-12 * max(abs(t1), 1.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_logdet_factorization_vs_eigenvalues(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 7))
    s = random_psd(rng, d, jitter=0.3)
    via_chol = linalg.logdet_hermitian(s)
    via_eig = float(np.sum(np.log(np.linalg.eigvalsh(s))))
    assert via_chol == pytest.approx(via_eig, rel=1e-9)


def test_hermitian_part_projects(rng):
    m = random_complex(rng, 4, 4)
    h = linalg.hermitian_part(m)
    assert np.allclose(h, h.conj().T)

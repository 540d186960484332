import numpy as np
import pytest

from ringpair import qstate

from conftest import random_density_matrix


class TestTensor:
    def test_identity_product(self):
        np.testing.assert_allclose(qstate.tensor(qstate.I2, qstate.I2), np.eye(4))

    def test_zz_eigenstate(self):
        zz = qstate.tensor(qstate.PAULI_Z, qstate.PAULI_Z)
        ket00 = qstate.two_qubit_ket("0", "0")
        np.testing.assert_allclose(zz @ ket00, ket00)

    def test_rank_one_projector_product(self):
        p0 = qstate.projector(qstate.ket("0"))
        p1 = qstate.projector(qstate.ket("1"))
        proj = qstate.tensor(p0, p1)
        np.testing.assert_allclose(proj, qstate.projector(qstate.two_qubit_ket("0", "1")))
        assert np.trace(proj) == pytest.approx(1.0)

    def test_dimensions_multiply(self):
        a = np.ones((2, 3))
        b = np.ones((4, 5))
        assert qstate.tensor(a, b).shape == (8, 15)


class TestValidator:
    def test_accepts_bell_state(self):
        qstate.validate_density_matrix(qstate.projector(qstate.bell_phi_plus()))

    def test_rejects_non_hermitian(self):
        rho = np.eye(4, dtype=complex) / 4
        rho[0, 1] = 1e-6
        with pytest.raises(ValueError, match="Hermitian"):
            qstate.validate_density_matrix(rho)

    def test_rejects_bad_trace(self):
        with pytest.raises(ValueError, match="trace"):
            qstate.validate_density_matrix(np.eye(4, dtype=complex) / 2)

    def test_rejects_negative_eigenvalue(self):
        rho = np.diag([0.7, 0.5, -0.2, 0.0]).astype(complex)
        with pytest.raises(ValueError, match="eigenvalue"):
            qstate.validate_density_matrix(rho)

    def test_is_density_matrix(self, rng):
        assert qstate.is_density_matrix(random_density_matrix(rng))
        assert not qstate.is_density_matrix(np.eye(4))


class TestPurity:
    def test_bell_state_pure(self):
        assert qstate.purity(qstate.projector(qstate.bell_phi_plus())) == pytest.approx(1.0)

    def test_maximally_mixed(self):
        assert qstate.purity(np.eye(4) / 4) == pytest.approx(0.25)

    def test_range_on_random_states(self, rng):
        for _ in range(200):
            p = qstate.purity(random_density_matrix(rng))
            assert 0.25 - 1e-12 <= p <= 1.0 + 1e-12


class TestMatrixSqrt:
    def test_identity(self):
        np.testing.assert_allclose(qstate.matrix_sqrt(np.eye(4)), np.eye(4))

    def test_uniform_diagonal(self):
        np.testing.assert_allclose(
            qstate.matrix_sqrt(np.diag([0.25] * 4)), np.diag([0.5] * 4))

    def test_square_reproduces_input(self, rng):
        # Eigendecomposition oracle: sqrt squared must return the original.
        for _ in range(50):
            rho = random_density_matrix(rng)
            root = qstate.matrix_sqrt(rho)
            assert np.linalg.norm(root @ root - rho) <= 1e-10

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError, match="PSD"):
            qstate.matrix_sqrt(np.diag([1.0, -0.5, 0.2, 0.3]))

    def test_clamps_tiny_negatives(self):
        root = qstate.matrix_sqrt(np.diag([1.0, -5e-11, 0.0, 0.0]))
        assert np.all(np.isfinite(root))


class TestFidelity:
    def test_identical_states(self, rng):
        for _ in range(20):
            rho = random_density_matrix(rng)
            assert qstate.fidelity(rho, rho) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal_pure_states(self):
        a = qstate.projector(qstate.two_qubit_ket("0", "0"))
        b = qstate.projector(qstate.two_qubit_ket("1", "1"))
        assert qstate.fidelity(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_bell_vs_maximally_mixed(self):
        # Closed form: F = sqrt(<phi|I/4|phi>) = sqrt(1/4) = 0.5.
        phi = qstate.projector(qstate.bell_phi_plus())
        assert qstate.fidelity(phi, np.eye(4) / 4) == pytest.approx(0.5, abs=1e-12)

    def test_symmetric(self, rng):
        for _ in range(50):
            a = random_density_matrix(rng)
            b = random_density_matrix(rng)
            assert abs(qstate.fidelity(a, b) - qstate.fidelity(b, a)) <= 1e-9

    def test_rejects_unphysical_input(self):
        with pytest.raises(ValueError):
            qstate.fidelity(np.diag([1.5, -0.5, 0.0, 0.0]), np.eye(4) / 4)


class TestKets:
    def test_all_labels_normalised(self):
        for label in ("0", "1", "+", "-", "+i", "-i"):
            assert np.linalg.norm(qstate.ket(label)) == pytest.approx(1.0, abs=1e-12)

    def test_plus_minus_orthogonal(self):
        assert abs(np.vdot(qstate.ket("+"), qstate.ket("-"))) == pytest.approx(0.0, abs=1e-12)

    def test_unknown_label(self):
        with pytest.raises(ValueError, match="label"):
            qstate.ket("x")


class TestSerialisation:
    def test_roundtrip(self, rng):
        rho = random_density_matrix(rng)
        again = qstate.rho_from_json(qstate.rho_to_json(rho))
        np.testing.assert_allclose(again, rho, atol=1e-15)

    def test_rejects_unphysical_json(self):
        doc = {"re": (np.eye(4) * 2).tolist(), "im": np.zeros((4, 4)).tolist()}
        with pytest.raises(ValueError):
            qstate.rho_from_json(doc)

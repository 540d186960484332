"""Two-qubit complex linear algebra: kets, density matrices, and state metrics.

Everything here is a pure function over plain numpy arrays. Density matrices
are 4x4 complex ndarrays in the computational basis {|00>, |01>, |10>, |11>},
with the first tensor factor the signal qubit and the second the idler.
"""

from __future__ import annotations

import numpy as np

# Validation tolerances for physical density matrices.
HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
EIGENVALUE_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

_SINGLE_QUBIT_KETS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "+i": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "-i": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}


def ket(label):
    """Return the named single-qubit ket; labels are 0, 1, +, -, +i, -i."""
    try:
        return _SINGLE_QUBIT_KETS[label].copy()
    except KeyError:
        raise ValueError(f"unknown ket label {label!r}") from None


def two_qubit_ket(signal_label, idler_label):
    """Product ket |signal, idler> as a length-4 vector."""
    return np.kron(ket(signal_label), ket(idler_label))


def bell_phi_plus():
    """(|00> + |11>)/sqrt(2)."""
    v = np.zeros(4, dtype=complex)
    v[0] = v[3] = 1 / np.sqrt(2)
    return v


def projector(vec):
    """Rank-one projector |v><v| of a normalised vector."""
    v = np.asarray(vec, dtype=complex)
    return np.outer(v, v.conj())


def tensor(a, b):
    """Kronecker product of two matrices (or vectors)."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def validate_density_matrix(rho, herm_tol=HERMITICITY_TOL, trace_tol=TRACE_TOL,
                            eig_tol=EIGENVALUE_TOL):
    """Check Hermiticity, unit trace, and positivity; return rho as complex ndarray.

    Raises ValueError describing the first violated property. The positivity
    check allows eigenvalues down to -eig_tol to absorb round-off.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    herm = np.linalg.norm(rho - rho.conj().T)
    if herm > herm_tol:
        raise ValueError(f"not Hermitian: ||rho - rho^dag|| = {herm:.3e}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"trace is {tr:.15g}, expected 1")
    evals = np.linalg.eigvalsh(rho)
    if evals.min() < -eig_tol:
        raise ValueError(f"negative eigenvalue {evals.min():.3e}")
    return rho


def is_density_matrix(rho):
    """True if validate_density_matrix accepts rho."""
    try:
        validate_density_matrix(rho)
    except ValueError:
        return False
    return True


def purity(rho):
    """Tr(rho^2); 1 for pure states, 0.25 for the two-qubit maximally mixed state."""
    rho = np.asarray(rho, dtype=complex)
    return float(np.real(np.trace(rho @ rho)))


def matrix_sqrt(rho, eig_tol=EIGENVALUE_TOL):
    """Positive semi-definite square root via eigendecomposition.

    Eigenvalues in [-eig_tol, 0) are treated as round-off and clamped to zero;
    anything more negative raises ValueError.
    """
    rho = np.asarray(rho, dtype=complex)
    evals, vecs = np.linalg.eigh(rho)
    if evals.min() < -eig_tol:
        raise ValueError(f"matrix is not PSD: eigenvalue {evals.min():.3e}")
    evals = np.clip(evals, 0.0, None)
    return (vecs * np.sqrt(evals)) @ vecs.conj().T


def fidelity(rho_a, rho_b):
    """State fidelity Tr sqrt(sqrt(a) b sqrt(a)), symmetric, in [0, 1]."""
    a = validate_density_matrix(rho_a)
    b = validate_density_matrix(rho_b)
    sa = matrix_sqrt(a)
    inner = sa @ b @ sa
    evals = np.linalg.eigvalsh(inner)
    f = float(np.sqrt(np.clip(evals, 0.0, None)).sum())
    return min(max(f, 0.0), 1.0)


def rho_to_json(rho):
    """Serialise a density matrix to {"re": [[...]], "im": [[...]]}."""
    rho = np.asarray(rho, dtype=complex)
    return {"re": rho.real.tolist(), "im": rho.imag.tolist()}


def rho_from_json(obj, validate=True):
    """Inverse of rho_to_json; validates physicality unless validate=False."""
    rho = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    if validate:
        validate_density_matrix(rho)
    return rho

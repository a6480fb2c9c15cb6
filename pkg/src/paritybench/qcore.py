"""Dense complex operator algebra for few-qubit systems.

Operators and states are plain complex128 numpy arrays. Conventions used
throughout the package:

* qubit 0 is the leftmost tensor factor (most significant bit of the
  computational-basis index), so ``pauli("ZZI")`` acts on qubits 0 and 1;
* when a reference qubit is present it is always the last tensor factor;
* Pauli strings are text labels over the alphabet ``I X Y Z``.

Systems never exceed 5 qubits (dimension 32), so everything is dense and
eigendecomposition-based.
"""

from __future__ import annotations

from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .tolerances import DEFAULT, Tolerances

PAULI_LETTERS = "IXYZ"

_P1 = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# sigma_minus lowers |1> to |0>; used for relaxation dissipators
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)


def pauli(label: str) -> np.ndarray:
    """Tensor product of single-qubit Pauli matrices for a text label.

    ``pauli("ZZ")`` is diag(1, -1, -1, 1); qubit 0 is the leftmost letter.
    """
    if not label:
        raise ValueError("empty Pauli label")
    bad = set(label) - set(PAULI_LETTERS)
    if bad:
        raise ValueError(f"invalid Pauli letters {sorted(bad)} in label {label!r}")
    return reduce(np.kron, (_P1[c] for c in label))


def kron(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of one or more operators (left factor most significant)."""
    if not ops:
        raise ValueError("kron needs at least one operator")
    return reduce(np.kron, ops)


def ket(bits: str) -> np.ndarray:
    """Computational-basis column vector for a bit string, e.g. ket("010")."""
    n = len(bits)
    v = np.zeros(2**n, dtype=complex)
    v[int(bits, 2)] = 1.0
    return v


def projector(vec: np.ndarray) -> np.ndarray:
    """Rank-one projector |v><v| of a (not necessarily normalized) vector."""
    v = np.asarray(vec, dtype=complex).ravel()
    return np.outer(v, v.conj())


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def expect(op: np.ndarray, rho: np.ndarray) -> float:
    """Real part of Tr(op @ rho)."""
    return float(np.trace(op @ rho).real)


def embed(n: int, site_ops: dict[int, np.ndarray]) -> np.ndarray:
    """n-qubit operator acting as the given single-qubit operators on selected sites.

    ``embed(3, {1: SIGMA_MINUS})`` is I (x) sigma_minus (x) I.
    """
    factors = [site_ops.get(q, _P1["I"]) for q in range(n)]
    return reduce(np.kron, factors)


def partial_trace(m: np.ndarray, keep: Iterable[int], dims: Sequence[int]) -> np.ndarray:
    """Partial trace keeping the listed subsystems (in their original order).

    `dims` lists the factor dimensions, leftmost factor first; their product
    must equal the matrix dimension.
    """
    m = np.asarray(m)
    dims = list(dims)
    keep = sorted(set(keep))
    n = len(dims)
    if int(np.prod(dims)) != m.shape[0] or m.shape[0] != m.shape[1]:
        raise ValueError(f"dims {dims} incompatible with matrix shape {m.shape}")
    if not keep or any(k < 0 or k >= n for k in keep):
        raise ValueError(f"keep={keep} is not a nonempty subset of range({n})")
    t = m.reshape(dims + dims)
    # trace out discarded factors from the right to keep axis bookkeeping simple
    for q in reversed(range(n)):
        if q not in keep:
            t = np.trace(t, axis1=q, axis2=q + (t.ndim // 2))
    d_keep = int(np.prod([dims[k] for k in keep]))
    return t.reshape(d_keep, d_keep)


def is_hermitian(m: np.ndarray, tol: float) -> bool:
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def is_density_matrix(m: np.ndarray, tols: Tolerances = DEFAULT) -> bool:
    """Hermitian within tols.hermiticity, unit trace within tols.trace_one,
    minimum eigenvalue >= tols.eigenvalue_floor."""
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    if not is_hermitian(m, tols.hermiticity):
        return False
    if abs(np.trace(m).real - 1.0) > tols.trace_one or abs(np.trace(m).imag) > tols.trace_one:
        return False
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return bool(w.min() >= tols.eigenvalue_floor)


def assert_density_matrix(m: np.ndarray, tols: Tolerances = DEFAULT, what: str = "state") -> None:
    if not is_density_matrix(m, tols):
        raise ValueError(f"{what} is not a valid density matrix")


def psd_project(h: np.ndarray, tols: Tolerances = DEFAULT) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix (negative eigenvalues clipped)."""
    if not is_hermitian(h, tols.psd_input_hermiticity):
        raise ValueError("psd_project requires a Hermitian input")
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    w = np.maximum(w, 0.0)
    return (v * w) @ v.conj().T


def spectral_projectors(label: str) -> tuple[np.ndarray, np.ndarray]:
    """Projectors (P+, P-) onto the +1/-1 eigenspaces of a non-identity Pauli string."""
    if set(label) == {"I"}:
        raise ValueError("all-identity Pauli has no -1 eigenspace")
    p = pauli(label)
    eye = np.eye(p.shape[0], dtype=complex)
    return 0.5 * (eye + p), 0.5 * (eye - p)


def labels_commute(a: str, b: str) -> bool:
    """Whether two Pauli strings commute (even number of anticommuting sites)."""
    if len(a) != len(b):
        raise ValueError("Pauli labels of unequal length")
    anti = sum(1 for x, y in zip(a, b) if x != "I" and y != "I" and x != y)
    return anti % 2 == 0

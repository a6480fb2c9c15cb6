"""Stabilizer code definitions, encoded eigenstates, and syndrome extraction.

Two codes are provided: the 3-qubit bit-flip code (stabilizers ZZI, IZZ) and
the 4-qubit relaxation code (ZZII, IIZZ, XXXX). A degenerate single-qubit
"code" backs the unencoded baseline so the same recovery machinery applies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import qcore
from .tolerances import DEFAULT, Tolerances

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class StabilizerCode:
    name: str
    n: int
    stabilizers: tuple[str, ...]
    logical_zero: np.ndarray
    logical_one: np.ndarray
    # present only for codes with a textbook lookup decoder
    syndrome_table: dict[tuple[int, ...], str] | None = field(default=None)

    @property
    def dim(self) -> int:
        return 2**self.n

    def validate(self, tols: Tolerances = DEFAULT) -> None:
        """Check stabilizer/logical-state consistency exactly (amplitudes are
        rational over sqrt(2), so 1e-12 is an honest bound)."""
        for v in (self.logical_zero, self.logical_one):
            if abs(np.linalg.norm(v) - 1.0) > tols.logical_state:
                raise ValueError(f"{self.name}: logical state not normalized")
        if abs(np.vdot(self.logical_zero, self.logical_one)) > tols.logical_state:
            raise ValueError(f"{self.name}: logical states not orthogonal")
        for a in self.stabilizers:
            s = qcore.pauli(a)
            for v in (self.logical_zero, self.logical_one):
                if np.max(np.abs(s @ v - v)) > tols.logical_state:
                    raise ValueError(f"{self.name}: stabilizer {a} does not fix the code space")
        for i, a in enumerate(self.stabilizers):
            for b in self.stabilizers[i + 1:]:
                if not qcore.labels_commute(a, b):
                    raise ValueError(f"{self.name}: stabilizers {a}, {b} do not commute")


@lru_cache(maxsize=None)
def bit_flip_code() -> StabilizerCode:
    code = StabilizerCode(
        name="bit_flip",
        n=3,
        stabilizers=("ZZI", "IZZ"),
        logical_zero=qcore.ket("000"),
        logical_one=qcore.ket("111"),
        syndrome_table={
            (+1, +1): "III",
            (-1, +1): "XII",
            (-1, -1): "IXI",
            (+1, -1): "IIX",
        },
    )
    code.validate()
    return code


@lru_cache(maxsize=None)
def relaxation_code() -> StabilizerCode:
    code = StabilizerCode(
        name="relaxation",
        n=4,
        stabilizers=("ZZII", "IIZZ", "XXXX"),
        logical_zero=(qcore.ket("0000") + qcore.ket("1111")) / SQRT2,
        logical_one=(qcore.ket("0011") + qcore.ket("1100")) / SQRT2,
        syndrome_table=None,
    )
    code.validate()
    return code


@lru_cache(maxsize=None)
def unencoded_qubit() -> StabilizerCode:
    """Trivial one-qubit 'code' (no stabilizers) for the unencoded baseline."""
    code = StabilizerCode(
        name="unencoded",
        n=1,
        stabilizers=(),
        logical_zero=qcore.ket("0"),
        logical_one=qcore.ket("1"),
        syndrome_table=None,
    )
    code.validate()
    return code


def by_name(name: str) -> StabilizerCode:
    try:
        return {"bit_flip": bit_flip_code,
                "relaxation": relaxation_code,
                "unencoded": unencoded_qubit}[name]()
    except KeyError:
        raise ValueError(f"unknown code {name!r}") from None


def encoding_isometry(code: StabilizerCode) -> np.ndarray:
    """(2^n, 2) isometry whose columns are the logical basis states."""
    return np.stack([code.logical_zero, code.logical_one], axis=1)


def encoded_eigenstate(code: StabilizerCode, sigma: str, tau: int) -> np.ndarray:
    """Encoded tau-eigenstate of the logical single-qubit Pauli sigma."""
    if sigma not in ("X", "Y", "Z"):
        raise ValueError(f"sigma must be X, Y, or Z, got {sigma!r}")
    if tau not in (+1, -1):
        raise ValueError(f"tau must be +1 or -1, got {tau!r}")
    zero, one = code.logical_zero, code.logical_one
    if sigma == "Z":
        return zero.copy() if tau == +1 else one.copy()
    if sigma == "X":
        return (zero + tau * one) / SQRT2
    return (zero + tau * 1j * one) / SQRT2


def reference_entangled_state(code: StabilizerCode) -> np.ndarray:
    """|phi> = (|0bar>|0>_R + |1bar>|1>_R)/sqrt(2) on 2^n * 2 dimensions.

    The reference qubit is the last tensor factor.
    """
    return (np.kron(code.logical_zero, qcore.ket("0"))
            + np.kron(code.logical_one, qcore.ket("1"))) / SQRT2


def syndrome_of(code: StabilizerCode, error: str) -> tuple[int, ...]:
    """Sign picked up by each stabilizer when commuted through the error."""
    if len(error) != code.n:
        raise ValueError(f"error label {error!r} has wrong length for n={code.n}")
    return tuple(+1 if qcore.labels_commute(s, error) else -1 for s in code.stabilizers)

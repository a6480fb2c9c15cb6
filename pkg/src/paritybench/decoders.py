"""Textbook QEC baseline: integrate the measurement records, threshold to a
hard syndrome, apply the lookup correction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qcore
from .codes import StabilizerCode, reference_entangled_state
from .sme import TrajectoryRecord


@dataclass(frozen=True)
class SyndromeEstimate:
    signs: tuple[int, ...]
    integrated_values: tuple[float, ...]


def integrate_currents(rec: TrajectoryRecord, window: tuple[float, float] | None = None
                       ) -> SyndromeEstimate:
    """Average each current over the window and threshold at zero (ties -> +1)."""
    t_end = rec.steps * rec.dt
    if window is None:
        window = (0.0, t_end)
    t0, t1 = window
    eps = 1e-9 * rec.dt
    if t0 < -eps or t1 > t_end + eps or t1 <= t0:
        raise ValueError(f"window {window} outside record duration [0, {t_end}]")
    # sample k covers [k dt, (k+1) dt); take samples fully inside the window
    k0 = int(np.ceil(t0 / rec.dt - 1e-9))
    k1 = int(np.floor(t1 / rec.dt + 1e-9))
    if k1 <= k0:
        raise ValueError(f"window {window} contains no samples at dt={rec.dt}")
    means = rec.currents[:, k0:k1].mean(axis=1)
    signs = tuple(+1 if v >= 0 else -1 for v in means)
    return SyndromeEstimate(signs=signs, integrated_values=tuple(float(v) for v in means))


def textbook_correct(code: StabilizerCode, s: SyndromeEstimate) -> str:
    """Lookup-table correction for the thresholded syndrome."""
    if code.syndrome_table is None:
        raise ValueError(f"code {code.name!r} has no syndrome table")
    return code.syndrome_table[s.signs]


def textbook_fidelity(rec: TrajectoryRecord, code: StabilizerCode,
                      window: tuple[float, float] | None = None) -> float:
    """<phi| C rho C |phi> after applying the lookup correction C to the
    record's final (reference-entangled) state. No SDP involved."""
    est = integrate_currents(rec, window)
    label = textbook_correct(code, est)
    c = np.kron(qcore.pauli(label), np.eye(2, dtype=complex))
    phi = reference_entangled_state(code)
    v = c @ phi
    return float(np.real(v.conj() @ rec.final_state @ v))

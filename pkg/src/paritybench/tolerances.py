"""Centralized numerical tolerance constants.

Every validation threshold used across the package lives in this one record so
that tests and callers agree on what "Hermitian", "trace one", or "feasible"
means numerically.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    hermiticity: float = 1e-10          # density-matrix Hermiticity check
    trace_one: float = 1e-9             # |Tr(rho) - 1| bound for density matrices
    eigenvalue_floor: float = -1e-9     # minimum eigenvalue allowed for density matrices
    psd_input_hermiticity: float = 1e-8  # Hermiticity required of psd_project input
    logical_state: float = 1e-12        # exactness of code-state stabilizer conditions
    parity_overlay_rel: float = 1e-9    # relative coincidence of even-parity amplitudes
    sdp_psd_floor: float = -1e-7        # minimum eigenvalue of an accepted Choi matrix
    sdp_tp_defect: float = 1e-6         # ||Tr_out(Choi) - I||_F for an accepted solution
    sdp_gap: float = 1e-6               # default solver fixed-point residual target
    state_positivity_floor: float = -1e-6  # Euler-Maruyama conditional-state eigenvalue floor


DEFAULT = Tolerances()

"""Dispersive-readout parameter layer.

Maps circuit-QED drive/cavity parameters to the qubit-state-dependent
coherent-state amplitudes of the resonator field, and reduces those to the two
effective rates the time-evolution engine consumes:

* ``gamma_meas``: rate at which the homodyne record distinguishes even from
  odd two-qubit parity, kappa * |alpha_even - mean(alpha_odd)|^2 / 2;
* ``gamma_deph_odd``: residual dephasing inside the odd-parity subspace from
  the imperfect overlap of the two odd pointer states,
  kappa * |alpha_01 - alpha_10|^2 / 2.

These are steady-state distinguishability rates (adiabatic elimination of the
cavity); transients are neglected. All frequencies are angular (rad/s);
constructors accept laboratory Hz values via ``*_over_2pi`` keys.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .tolerances import DEFAULT, Tolerances

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CqedParams:
    chi: float            # dispersive shift (rad/s)
    kappa: float          # resonator loss rate (rad/s)
    epsilon_m: float      # measurement drive amplitude (rad/s)
    omega_r: float        # resonator frequency (rad/s)
    omega_m: float        # measurement drive frequency (rad/s)
    eta: float = 1.0      # detection efficiency
    g_over_delta: float = 0.1  # lambda = g/Delta, sets the critical photon number

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")

    @classmethod
    def from_hz(cls, *, chi_over_2pi: float, kappa_over_2pi: float,
                epsilon_m_over_2pi: float, omega_r_over_2pi: float = 0.0,
                omega_m_over_2pi: float = 0.0, eta: float = 1.0,
                g_over_delta: float = 0.1) -> "CqedParams":
        """Build from laboratory frequencies given in Hz (values are X/2pi)."""
        return cls(
            chi=TWO_PI * chi_over_2pi,
            kappa=TWO_PI * kappa_over_2pi,
            epsilon_m=TWO_PI * epsilon_m_over_2pi,
            omega_r=TWO_PI * omega_r_over_2pi,
            omega_m=TWO_PI * omega_m_over_2pi,
            eta=eta,
            g_over_delta=g_over_delta,
        )


@dataclass(frozen=True)
class EffectiveRates:
    gamma_meas: float      # parity-measurement rate (1/s)
    gamma_deph_odd: float  # odd-subspace dephasing rate (1/s)

    def __post_init__(self):
        if self.gamma_meas < 0 or self.gamma_deph_odd < 0:
            raise ValueError("effective rates must be nonnegative")


def _amplitude(p: CqedParams, shift: float) -> complex:
    den = p.omega_r + shift - p.omega_m - 0.5j * p.kappa
    if den == 0:
        raise ValueError("zero denominator: drive exactly on the shifted, lossless resonance")
    return -p.epsilon_m / den


def coherent_amplitudes(p: CqedParams, sigma: int) -> complex:
    """Stationary cavity amplitude alpha_sigma for a single qubit in state sigma."""
    if sigma not in (0, 1):
        raise ValueError("sigma must be 0 or 1")
    return _amplitude(p, (-1) ** sigma * p.chi)


def two_qubit_amplitudes(p: CqedParams, chi1: float, chi2: float, state: str) -> complex:
    """Stationary cavity amplitude for a two-qubit state in {'00','01','10','11'}."""
    if state not in ("00", "01", "10", "11"):
        raise ValueError(f"state must be a two-bit string, got {state!r}")
    b1, b2 = int(state[0]), int(state[1])
    return _amplitude(p, (-1) ** b1 * chi1 + (-1) ** b2 * chi2)


def critical_photon_number(p: CqedParams) -> float:
    """n_crit = (Delta/2g)^2 = 1/(4 lambda^2)."""
    return 1.0 / (4.0 * p.g_over_delta**2)


def derive_effective_rates(p: CqedParams, chi1: float, chi2: float,
                           tols: Tolerances = DEFAULT) -> EffectiveRates:
    """Reduce the four pointer-state amplitudes to (gamma_meas, gamma_deph_odd).

    Requires the even-parity amplitudes to coincide (the parity-measurement
    arrangement); warns when the mean photon number exceeds a tenth of the
    critical photon number, where the dispersive description degrades.
    """
    alphas = {s: two_qubit_amplitudes(p, chi1, chi2, s) for s in ("00", "01", "10", "11")}
    a00, a01, a10, a11 = alphas["00"], alphas["01"], alphas["10"], alphas["11"]
    scale = max(abs(a00), abs(a11), 1e-300)
    if abs(a00 - a11) > tols.parity_overlay_rel * scale:
        raise ValueError(
            "even-parity pointer states do not overlay; amplitudes "
            f"alpha_00={a00:.6g}, alpha_01={a01:.6g}, alpha_10={a10:.6g}, alpha_11={a11:.6g}"
        )
    n_max = max(abs(a) ** 2 for a in alphas.values())
    n_crit = critical_photon_number(p)
    if n_max > n_crit / 10.0 * (1.0 + 1e-9):
        warnings.warn(
            f"mean photon number {n_max:.3g} exceeds n_crit/10 = {n_crit / 10.0:.3g}; "
            "dispersive approximation is strained",
            stacklevel=2,
        )
    a_even = a00
    a_odd_mean = 0.5 * (a01 + a10)
    gamma_meas = p.kappa * abs(a_even - a_odd_mean) ** 2 / 2.0
    gamma_deph_odd = p.kappa * abs(a01 - a10) ** 2 / 2.0
    return EffectiveRates(gamma_meas=gamma_meas, gamma_deph_odd=gamma_deph_odd)

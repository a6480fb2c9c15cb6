import numpy as np
import pytest

from paritybench.cqed import (CqedParams, coherent_amplitudes, critical_photon_number,
                              derive_effective_rates, two_qubit_amplitudes)


def params(chi=1.5, kappa=1.0, eps=0.5, om_r=0.0, om_m=0.0, lam=0.05):
    return CqedParams(chi=chi, kappa=kappa, epsilon_m=eps, omega_r=om_r,
                      omega_m=om_m, g_over_delta=lam)


def test_single_qubit_amplitude_on_resonance():
    p = params()
    a0 = coherent_amplitudes(p, 0)
    assert a0 == pytest.approx(-p.epsilon_m / (p.chi - 0.5j * p.kappa))


def test_chi_to_zero_amplitudes_coincide():
    p = params(chi=0.0)
    assert coherent_amplitudes(p, 0) == pytest.approx(coherent_amplitudes(p, 1))


def test_chi_sign_swap_exchanges_amplitudes():
    p = params()
    pm = params(chi=-p.chi)
    assert coherent_amplitudes(p, 0) == pytest.approx(coherent_amplitudes(pm, 1))
    assert coherent_amplitudes(p, 1) == pytest.approx(coherent_amplitudes(pm, 0))


def test_amplitude_rejections():
    with pytest.raises(ValueError):
        params(kappa=0.0)  # lossless resonator would put the drive on a pole
    with pytest.raises(ValueError):
        coherent_amplitudes(params(), 2)
    with pytest.raises(ValueError):
        two_qubit_amplitudes(params(), 1.0, -1.0, "2")


def test_parity_arrangement_even_states_overlay():
    # opposite dispersive shifts: the 00 and 11 pointer states coincide,
    # the odd pair does not (and cannot)
    p = params()
    chi1, chi2 = 1.5, -1.5
    a = {s: two_qubit_amplitudes(p, chi1, chi2, s) for s in ("00", "01", "10", "11")}
    assert a["00"] == pytest.approx(a["11"])
    assert abs(a["01"] - a["10"]) > 1e-6
    rates = derive_effective_rates(p, chi1, chi2)
    assert rates.gamma_deph_odd > 0.0
    assert rates.gamma_meas > 0.0


def test_no_coupling_no_rates():
    p = params()
    a = {s: two_qubit_amplitudes(p, 0.0, 0.0, s) for s in ("00", "01", "10", "11")}
    assert len({complex(round(v.real, 12), round(v.imag, 12)) for v in a.values()}) == 1
    rates = derive_effective_rates(p, 0.0, 0.0)
    assert rates.gamma_meas == pytest.approx(0.0)
    assert rates.gamma_deph_odd == pytest.approx(0.0)


def test_rates_reject_non_overlaid_even_states():
    p = params()
    with pytest.raises(ValueError, match="alpha_00"):
        derive_effective_rates(p, 1.5, -1.0)


def test_gamma_meas_quadratic_in_drive():
    p1 = params(eps=0.3)
    p2 = params(eps=0.6)
    r1 = derive_effective_rates(p1, 1.5, -1.5)
    r2 = derive_effective_rates(p2, 1.5, -1.5)
    assert r2.gamma_meas == pytest.approx(4.0 * r1.gamma_meas, rel=1e-12)
    assert r2.gamma_deph_odd == pytest.approx(4.0 * r1.gamma_deph_odd, rel=1e-12)


def test_gamma_meas_invariant_under_global_phase():
    # flipping the drive sign rotates every pointer amplitude by pi
    p = params()
    base = derive_effective_rates(p, 1.5, -1.5)
    neg = CqedParams(chi=p.chi, kappa=p.kappa, epsilon_m=-p.epsilon_m,
                     omega_r=p.omega_r, omega_m=p.omega_m, g_over_delta=p.g_over_delta)
    r_neg = derive_effective_rates(neg, 1.5, -1.5)
    assert r_neg.gamma_meas == pytest.approx(base.gamma_meas)
    assert r_neg.gamma_deph_odd == pytest.approx(base.gamma_deph_odd)


def test_photon_number_guard_warns():
    # strong drive at small critical photon number must warn
    p = CqedParams(chi=1.5, kappa=1.0, epsilon_m=5.0, omega_r=0.0, omega_m=0.0,
                   g_over_delta=0.3)
    assert critical_photon_number(p) == pytest.approx(1.0 / 0.36)
    with pytest.warns(UserWarning, match="photon"):
        derive_effective_rates(p, 1.5, -1.5)


def test_from_hz_conversion():
    p = CqedParams.from_hz(chi_over_2pi=120e6, kappa_over_2pi=50e6,
                           epsilon_m_over_2pi=40e6)
    assert p.chi == pytest.approx(2 * np.pi * 120e6)
    assert p.kappa == pytest.approx(2 * np.pi * 50e6)


def test_paper_scale_rates_are_fast_compared_to_flips():
    # chi/2pi = 120 MHz, kappa/2pi = 50 MHz, eps/2pi = 39 MHz: the derived
    # measurement rate must resolve parity well within a typical flip time
    p = CqedParams.from_hz(chi_over_2pi=120e6, kappa_over_2pi=50e6,
                           epsilon_m_over_2pi=39e6)
    rates = derive_effective_rates(p, p.chi, -p.chi)
    gamma_x = 2 * np.pi * 5e6
    assert rates.gamma_meas > 10 * gamma_x
    assert 0 < rates.gamma_deph_odd < rates.gamma_meas

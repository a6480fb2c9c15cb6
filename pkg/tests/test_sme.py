import numpy as np
import pytest

from paritybench import qcore
from paritybench.codes import bit_flip_code, reference_entangled_state
from paritybench.sme import (MeasurementSetup, NoiseModel, Propagator, derive_seeds,
                             integrate_conditioned, integrate_sme,
                             integrate_unconditional, lindblad_step, run_ensemble,
                             trajectory_rng)
from _oracles import iid_x_channel_omega, trace_distance

GAMMA_X = 2 * np.pi * 5e6
GAMMA_M = 3.741e8
GAMMA_D = 1.624e7
DT = 0.05e-9


def standard_setup(eta=1.0):
    return MeasurementSetup(operators=("ZZI", "IZZ"), gamma_meas=GAMMA_M,
                            gamma_deph_odd=GAMMA_D, eta=eta)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(gamma_x=-1.0)
    with pytest.warns(UserWarning, match="one at a time"):
        NoiseModel(gamma_x=1.0, gamma_1=1.0)


def test_measurement_setup_validation():
    with pytest.raises(ValueError):
        MeasurementSetup(operators=("ZZZ",), gamma_meas=1.0, gamma_deph_odd=0.0, eta=1.0)
    with pytest.raises(ValueError):
        MeasurementSetup(operators=("ZXI",), gamma_meas=1.0, gamma_deph_odd=0.0, eta=1.0)
    with pytest.raises(ValueError):
        MeasurementSetup(operators=("ZZI",), gamma_meas=1.0, gamma_deph_odd=0.0, eta=1.5)


def test_lindblad_step_no_generator():
    rho = np.eye(2, dtype=complex) / 2
    out = lindblad_step(rho, NoiseModel(), None, 1e-9)
    np.testing.assert_allclose(out, rho, atol=1e-15)


def test_lindblad_step_rejects_non_density():
    with pytest.raises(ValueError):
        lindblad_step(np.eye(2, dtype=complex), NoiseModel(), None, 1e-9)


def test_lindblad_step_bit_flip_closed_form():
    gamma, t = 2.0, 0.4
    steps = 4000
    rho = qcore.projector(qcore.ket("0"))
    model = NoiseModel(gamma_x=gamma)
    for _ in range(steps):
        rho = lindblad_step(rho, model, None, t / steps)
    p = (1 - np.exp(-2 * gamma * t)) / 2
    np.testing.assert_allclose(np.diag(rho).real, [1 - p, p], atol=1e-4)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)


def test_integrate_unconditional_closed_forms():
    gamma, t = 2.0, 0.3
    rho = integrate_unconditional(qcore.ket("0"), NoiseModel(gamma_x=gamma), t, t / 10_000)
    exact = np.diag([(1 + np.exp(-2 * gamma * t)) / 2, (1 - np.exp(-2 * gamma * t)) / 2])
    assert np.max(np.abs(rho - exact)) < 1e-4 * np.max(np.abs(exact))
    g1, t1 = 1.7, 0.5
    rho = integrate_unconditional(qcore.ket("1"), NoiseModel(gamma_1=g1), t1, t1 / 10_000)
    assert rho[1, 1].real == pytest.approx(np.exp(-g1 * t1), rel=1e-4)


def test_integrate_unconditional_dephasing_convention():
    # off-diagonals decay at gamma_phi
    gphi, t = 3.0, 0.2
    plus = (qcore.ket("0") + qcore.ket("1")) / np.sqrt(2)
    rho = integrate_unconditional(plus, NoiseModel(gamma_phi=gphi), t, t / 10_000)
    assert rho[0, 1].real == pytest.approx(0.5 * np.exp(-gphi * t), rel=1e-4)


def test_integrate_unconditional_zero_time_and_trace():
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    rho = integrate_unconditional(phi, NoiseModel(gamma_x=GAMMA_X), 0.0, DT)
    np.testing.assert_allclose(rho, qcore.projector(phi), atol=1e-15)
    rho = integrate_unconditional(phi, NoiseModel(gamma_x=GAMMA_X), 8e-9, DT, n_system=3)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-8)


def test_unconditional_matches_exact_pauli_mixture():
    # bit-flip model on the encoded entangled state equals the 8-term X-pattern
    # mixture with p(t) = (1 - exp(-2 gamma t))/2, within O(dt): the error must
    # be small and shrink linearly with the step
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    t = 6e-9
    p = (1 - np.exp(-2 * GAMMA_X * t)) / 2
    exact = iid_x_channel_omega(code, p)
    errs = {}
    for dt in (DT, DT / 4):
        rho = integrate_unconditional(phi, NoiseModel(gamma_x=GAMMA_X), t, dt, n_system=3)
        errs[dt] = trace_distance(rho, exact)
    assert errs[DT / 4] < 1e-3
    assert errs[DT / 4] < errs[DT] / 2.5  # first-order in dt


def test_dt_must_divide_T():
    with pytest.raises(ValueError, match="divide"):
        integrate_unconditional(qcore.ket("0"), NoiseModel(), 1.0, 0.3)


def test_stability_guard():
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    with pytest.raises(ValueError, match="stability"):
        integrate_sme(phi, NoiseModel(), standard_setup(), 1e-9, 1e-9, seed=1, n_system=3)


def test_sme_zero_noise_zero_measurement():
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    setup = MeasurementSetup(operators=(), gamma_meas=0.0, gamma_deph_odd=0.0, eta=1.0)
    rec = integrate_sme(phi, NoiseModel(), setup, 2e-9, DT, seed=5, n_system=3)
    np.testing.assert_allclose(rec.final_state, qcore.projector(phi), atol=1e-12)
    assert rec.currents.shape == (0, 40)


def test_sme_qnd_eigenstate():
    # code states are parity eigenstates: every trajectory is frozen and the
    # time-averaged currents estimate +1 within the nominal noise band
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    setup = standard_setup()
    steps = 400
    rec = integrate_sme(phi, NoiseModel(), setup, steps * DT, DT, seed=42, n_system=3)
    np.testing.assert_allclose(rec.final_state, qcore.projector(phi), atol=1e-10)
    sigma_sample = 1.0 / (2 * np.sqrt(setup.eta * setup.gamma_meas * DT))
    band = 4 * sigma_sample / np.sqrt(steps)
    for jbar in rec.currents.mean(axis=1):
        assert abs(jbar - 1.0) < band


def test_sme_qnd_martingale_expectations():
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    setup = standard_setup()
    prop = Propagator(3, NoiseModel(), setup, DT, with_reference=True)
    seeds = derive_seeds(7, 8)
    dw = np.stack([trajectory_rng(s).standard_normal((200, 2)) * np.sqrt(DT) for s in seeds])
    _, _, snaps = prop.run(np.broadcast_to(qcore.projector(phi), (8, 16, 16)), 200,
                           dw=dw, snapshot_steps=(50, 100, 200))
    for k in range(3):
        ev = np.einsum("mij,bkji->bkm", prop.meas_ops, snaps[:, k][:, None]).real
        np.testing.assert_allclose(ev, 1.0, atol=1e-8)


def test_sme_eta_zero_equals_unconditional():
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    setup = standard_setup(eta=0.0)
    model = NoiseModel(gamma_x=GAMMA_X)
    uncond = integrate_unconditional(phi, model, 4e-9, DT, setup=setup, n_system=3)
    for seed in (1, 2, 3):
        rec = integrate_sme(phi, model, setup, 4e-9, DT, seed=seed, n_system=3)
        assert rec.pure_noise_currents
        np.testing.assert_allclose(rec.final_state, uncond, atol=1e-13)
    # flagged currents are zero-mean unit-variance white samples
    rec = integrate_sme(phi, model, setup, 4e-9, DT, seed=9, n_system=3)
    assert abs(rec.currents.mean()) < 5 / np.sqrt(rec.currents.size)


def test_sme_trace_drift_bound():
    # pre-normalization drift is first order in the innovation; bound it by
    # 10x its nominal magnitude (the renormalized engine never accumulates it)
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    setup = standard_setup()
    model = NoiseModel(gamma_x=GAMMA_X)
    prop = Propagator(3, model, setup, DT, with_reference=True)
    rng = np.random.default_rng(3)
    rho = qcore.projector(phi)[None]
    c = prop.innovation_coeff
    total_rate = 3 * GAMMA_X + 2 * GAMMA_M + 2 * GAMMA_D
    for _ in range(200):
        dw = rng.standard_normal((1, 2)) * np.sqrt(DT)
        ev = np.einsum("mij,bji->bm", prop.meas_ops, rho).real
        dy = 2 * c * DT * ev + dw
        out = prop._kraus_step(rho, dy)
        drift = abs(np.trace(out[0]).real - np.trace(rho[0]).real)
        bound = 10 * (2 * c * np.abs(dw).sum() + (total_rate * DT) ** 2)
        assert drift < bound
        rho = out / np.trace(out[0]).real


def test_sme_positivity_of_stored_states():
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    setup = standard_setup()
    model = NoiseModel(gamma_x=GAMMA_X)
    recs = run_ensemble(phi, model, setup, 12e-9, DT, count=32, master_seed=21, n_system=3)
    for rec in recs:
        w = np.linalg.eigvalsh(rec.final_state)
        assert w.min() >= -1e-6
        assert np.trace(rec.final_state).real == pytest.approx(1.0, abs=1e-9)


def test_run_ensemble_determinism_and_seed_derivation():
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    setup = standard_setup()
    model = NoiseModel(gamma_x=GAMMA_X)
    a = run_ensemble(phi, model, setup, 2e-9, DT, count=5, master_seed=77, n_system=3)
    b = run_ensemble(phi, model, setup, 2e-9, DT, count=5, master_seed=77, n_system=3)
    for ra, rb in zip(a, b):
        assert ra.seed == rb.seed
        np.testing.assert_array_equal(ra.final_state, rb.final_state)
        np.testing.assert_array_equal(ra.currents, rb.currents)
    # trajectory l is independent of the ensemble size (seed stream property)
    big = run_ensemble(phi, model, setup, 2e-9, DT, count=9, master_seed=77, n_system=3)
    np.testing.assert_array_equal(a[3].final_state, big[3].final_state)
    # count=1 equals a direct single-trajectory run with the derived seed
    single = integrate_sme(phi, model, setup, 2e-9, DT,
                           seed=int(derive_seeds(77, 1)[0]), n_system=3)
    np.testing.assert_array_equal(a[0].final_state, single.final_state)
    with pytest.raises(ValueError):
        run_ensemble(phi, model, setup, 2e-9, DT, count=0, master_seed=1, n_system=3)


def test_filter_replay_reproduces_trajectory():
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    setup = standard_setup()
    model = NoiseModel(gamma_x=GAMMA_X)
    rec = integrate_sme(phi, model, setup, 4e-9, DT, seed=99, n_system=3)
    refiltered = integrate_conditioned(phi, rec.currents, model, setup, DT, n_system=3)
    np.testing.assert_allclose(refiltered, rec.final_state, atol=1e-12)


@pytest.mark.slow
def test_sme_ensemble_mean_matches_unconditional_at_full_efficiency():
    # the conditional ensemble averages to the unconditional state for any eta
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    setup = standard_setup()
    model = NoiseModel(gamma_x=GAMMA_X)
    t, n = 10e-9, 768
    recs = run_ensemble(phi, model, setup, t, DT, count=n, master_seed=5, n_system=3)
    states = np.stack([r.final_state for r in recs])
    mean_state = states.mean(axis=0)
    uncond = integrate_unconditional(phi, model, t, DT, setup=setup, n_system=3)
    td = trace_distance(mean_state, uncond)
    # bootstrap scale of the mean's trace-distance fluctuation
    rng = np.random.default_rng(0)
    boots = []
    for _ in range(40):
        idx = rng.integers(0, n, size=n)
        boots.append(trace_distance(states[idx].mean(axis=0), mean_state))
    se = float(np.sqrt(np.mean(np.square(boots))))
    assert td <= 3 * se


@pytest.mark.slow
def test_sme_weak_convergence_halving_dt():
    # halving dt moves the ensemble-mean fidelity by less than the MC error
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    model = NoiseModel(gamma_x=GAMMA_X)
    t, n = 8e-9, 1000

    def mean_fidelity(dt):
        setup = standard_setup()
        recs = run_ensemble(phi, model, setup, t, dt, count=n, master_seed=13, n_system=3)
        f = np.array([np.real(phi.conj() @ r.final_state @ phi) for r in recs])
        return f.mean(), f.std(ddof=1) / np.sqrt(n)

    f1, se1 = mean_fidelity(DT)
    f2, se2 = mean_fidelity(DT / 2)
    # the two ensembles use independent increments, so the difference carries
    # both the discretization bias and ~1.4x the single-run MC error; the bias
    # must be lost in that noise
    assert abs(f1 - f2) < 2 * np.hypot(se1, se2)

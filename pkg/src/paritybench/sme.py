"""Time-evolution engines: deterministic Lindblad and diffusive stochastic
master equation with homodyne parity records.

Conventions
-----------
* Noise dissipators (per system qubit q, identity on the reference factor):
  sqrt(gamma_x) X_q for symmetric bit flips, sqrt(gamma_1) sigma-_q for
  relaxation, sqrt(gamma_phi/2) Z_q for pure dephasing (off-diagonals decay at
  gamma_phi).
* Each continuously measured parity operator S_i contributes a deterministic
  dissipator at rate gamma_meas plus, with detection efficiency eta, the Ito
  innovation sqrt(eta*gamma_meas) (S_i rho + rho S_i - 2<S_i> rho) dW_i.
* The recorded current is normalized so its time average estimates the parity
  eigenvalue directly: J_i(t_k) = <S_i>(t_k) + dW_i / (2 sqrt(eta*gamma_meas) dt).
  At eta = 0 that normalization is singular; the record is then stored as the
  unit-variance white samples dW_i/sqrt(dt) and flagged as pure noise.
* Each measured pair also carries an odd-parity dephasor (Z_a - Z_b)/2 at rate
  gamma_deph_odd, which dephases exactly the superpositions of the two odd
  pointer states and acts trivially on even-parity states.
* Integration uses the positivity-preserving first-order Kraus step

      rho' = M rho M' + (1-eta) dt sum_i Gm S_i rho S_i + dt sum_j g_j L_j rho L_j'
      M    = 1 - dt G/2 + sum_i sqrt(eta Gm) S_i dY_i,   G = sum(rates * L'L),

  with the observed increment dY_i = 2 sqrt(eta Gm) <S_i> dt + dW_i and
  per-step renormalization, plus a stability guard dt * gamma_meas <= 0.1.
  Expanded to first order this reproduces the Euler-Maruyama form
  drho = sum g D[L] rho dt + sqrt(eta Gm)(S rho + rho S - 2<S> rho) dW, but the
  update stays a physical state for any noise realization (a bare
  Euler-Maruyama step does not: measurement kicks of order sqrt(Gm dt) push
  the state out of the cone and the innovation then diverges).

Reproducibility: trajectory ``l`` of an ensemble draws its Wiener increments
from ``numpy.random.Philox`` keyed by the 64-bit word
``SeedSequence(master_seed).generate_state(count, dtype=uint64)[l]``, a
counter-based derivation independent of execution order and worker count.
The same u64 seed is persisted in trajectory files, so any stored trajectory
can be regenerated exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import qcore
from .tolerances import DEFAULT, Tolerances

#: trajectories are integrated in fixed-size batches; the batch layout is a
#: property of the ensemble (never of the worker count) so outputs are
#: byte-identical at any parallelism level
CHUNK_SIZE = 128

MAX_DT_GAMMA_MEAS = 0.1


@dataclass(frozen=True)
class NoiseModel:
    gamma_x: float = 0.0    # per-qubit symmetric bit-flip rate (1/s)
    gamma_1: float = 0.0    # per-qubit relaxation rate (1/s)
    gamma_phi: float = 0.0  # per-qubit pure dephasing rate (1/s)

    def __post_init__(self):
        if min(self.gamma_x, self.gamma_1, self.gamma_phi) < 0:
            raise ValueError("noise rates must be nonnegative")
        if self.gamma_x > 0 and self.gamma_1 > 0:
            warnings.warn("both gamma_x and gamma_1 are nonzero; the benchmark "
                          "scenarios use one at a time", stacklevel=2)


@dataclass(frozen=True)
class MeasurementSetup:
    operators: tuple[str, ...]   # two-qubit parity labels, e.g. ("ZZI", "IZZ")
    gamma_meas: float            # measurement rate per operator (1/s)
    gamma_deph_odd: float        # odd-subspace dephasing rate per pair (1/s)
    eta: float                   # detection efficiency

    def __post_init__(self):
        if self.gamma_meas < 0 or self.gamma_deph_odd < 0:
            raise ValueError("measurement rates must be nonnegative")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        for op in self.operators:
            if op.count("Z") != 2 or set(op) - {"I", "Z"}:
                raise ValueError(f"{op!r} is not a two-qubit parity label")
        for i, a in enumerate(self.operators):
            for b in self.operators[i + 1:]:
                if not qcore.labels_commute(a, b):
                    raise ValueError(f"measured operators {a}, {b} do not commute")


@dataclass(eq=False)
class TrajectoryRecord:
    seed: int
    dt: float
    steps: int
    currents: np.ndarray                 # (n_ops, steps)
    final_state: np.ndarray              # (D, D), renormalized
    pure_noise_currents: bool = False    # eta = 0 convention flag


def derive_seeds(master_seed: int, count: int) -> np.ndarray:
    """Per-trajectory u64 seeds from the documented counter-based derivation."""
    return np.random.SeedSequence(master_seed).generate_state(count, dtype=np.uint64)


def trajectory_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _with_reference(op: np.ndarray, with_reference: bool) -> np.ndarray:
    return np.kron(op, np.eye(2, dtype=complex)) if with_reference else op


def build_dissipators(n: int, model: NoiseModel, setup: MeasurementSetup | None,
                      with_reference: bool) -> list[tuple[float, np.ndarray]]:
    """(rate, L) pairs for the deterministic Lindblad part."""
    out: list[tuple[float, np.ndarray]] = []
    for q in range(n):
        if model.gamma_x > 0:
            out.append((model.gamma_x, _with_reference(qcore.embed(n, {q: qcore.pauli("X")}), with_reference)))
        if model.gamma_1 > 0:
            out.append((model.gamma_1, _with_reference(qcore.embed(n, {q: qcore.SIGMA_MINUS}), with_reference)))
        if model.gamma_phi > 0:
            out.append((model.gamma_phi / 2.0, _with_reference(qcore.embed(n, {q: qcore.pauli("Z")}), with_reference)))
    if setup is not None:
        for op in setup.operators:
            if setup.gamma_meas > 0:
                out.append((setup.gamma_meas, _with_reference(qcore.pauli(op), with_reference)))
            if setup.gamma_deph_odd > 0:
                a, b = (i for i, c in enumerate(op) if c == "Z")
                deph = 0.5 * (qcore.embed(n, {a: qcore.pauli("Z")}) - qcore.embed(n, {b: qcore.pauli("Z")}))
                out.append((setup.gamma_deph_odd, _with_reference(deph, with_reference)))
    return out


class Propagator:
    """Precomputed one-step propagator over batches of density matrices.

    States are (B, D, D) complex arrays; all operators are fixed at
    construction. The same instance serves recording mode (Wiener increments
    supplied, currents returned) and filtering mode (currents supplied, the
    observed increments are reconstructed from them).
    """

    def __init__(self, n: int, model: NoiseModel, setup: MeasurementSetup | None,
                 dt: float, with_reference: bool):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if setup is not None and dt * setup.gamma_meas > MAX_DT_GAMMA_MEAS + 1e-12:
            raise ValueError(f"dt*gamma_meas = {dt * setup.gamma_meas:.3g} exceeds the "
                             f"stability guard {MAX_DT_GAMMA_MEAS}")
        self.n = n
        self.dt = dt
        self.dim = 2**n * (2 if with_reference else 1)
        self.setup = setup
        diss = build_dissipators(n, model, setup, with_reference)
        self._ls = [(rate, L, L.conj().T) for rate, L in diss]
        g = np.zeros((self.dim, self.dim), dtype=complex)
        for rate, L, Ld in self._ls:
            g += rate * (Ld @ L)
        self._g = g
        self._m_base = np.eye(self.dim, dtype=complex) - 0.5 * dt * g
        if setup is not None and setup.operators:
            self.meas_ops = np.stack([_with_reference(qcore.pauli(op), with_reference)
                                      for op in setup.operators])
            self.innovation_coeff = float(np.sqrt(setup.eta * setup.gamma_meas))
        else:
            self.meas_ops = np.zeros((0, self.dim, self.dim), dtype=complex)
            self.innovation_coeff = 0.0
        self.n_ops = self.meas_ops.shape[0]
        # fixed Kraus factors sqrt(rate*dt) L for the noise/dephasing channels,
        # plus the undetected fraction of the measurement channels
        kraus = [np.sqrt(rate * dt) * L for rate, L, _ in self._ls
                 if setup is None or not self._is_meas_op(L)]
        if setup is not None and setup.operators and setup.gamma_meas > 0:
            resid = (1.0 - setup.eta) * setup.gamma_meas * dt
            if resid > 0:
                kraus.extend(np.sqrt(resid) * s for s in self.meas_ops)
        self._kraus = [(k, k.conj().T) for k in kraus]

    def _is_meas_op(self, L: np.ndarray) -> bool:
        for s in getattr(self, "meas_ops", ()):
            if L.shape == s.shape and np.array_equal(L, s):
                return True
        return False

    def deterministic_increment(self, rho: np.ndarray) -> np.ndarray:
        """dt * sum_j rate_j D[L_j] rho for a (B, D, D) batch (textbook Euler)."""
        dt = self.dt
        drho = (-0.5 * dt) * (self._g @ rho + rho @ self._g)
        for rate, L, Ld in self._ls:
            drho += (rate * dt) * (L @ rho @ Ld)
        return drho

    def _kraus_step(self, rho: np.ndarray, dy: np.ndarray | None) -> np.ndarray:
        """One positivity-preserving step; dy is (B, n_ops) or None."""
        if dy is not None and self.innovation_coeff > 0.0:
            m = self._m_base + np.einsum(
                "bm,mij->bij", self.innovation_coeff * dy, self.meas_ops)
        else:
            m = self._m_base
        out = m @ rho @ m.conj().swapaxes(-1, -2)
        for k, kd in self._kraus:
            out += k @ rho @ kd
        return out

    def run(self, rho0: np.ndarray, steps: int, dw: np.ndarray | None = None,
            given_currents: np.ndarray | None = None,
            snapshot_steps: tuple[int, ...] = (),
            record_currents: bool = False):
        """Propagate a batch for `steps` steps.

        dw: (B, steps, n_ops) Wiener increments (recording mode).
        given_currents: (B, n_ops, steps) recorded currents (filtering mode).
        Returns (rho_final, currents or None, snapshots (B, K, D, D)).
        """
        rho = np.array(rho0, dtype=complex)
        squeeze = rho.ndim == 2
        if squeeze:
            rho = rho[None]
        b = rho.shape[0]
        c = self.innovation_coeff
        dt = self.dt
        currents = np.empty((b, self.n_ops, steps)) if record_currents and self.n_ops else None
        snaps = np.empty((b, len(snapshot_steps), self.dim, self.dim), dtype=complex)
        snap_pos = {s: i for i, s in enumerate(snapshot_steps)}
        if 0 in snap_pos:
            snaps[:, snap_pos[0]] = rho
        for k in range(steps):
            dy = None
            if self.n_ops:
                if c > 0.0:
                    # per-operator expectations <S_i>, shape (B, n_ops)
                    ev = np.einsum("mij,bji->bm", self.meas_ops, rho).real
                    if given_currents is not None:
                        dy = given_currents[:, :, k] * (2.0 * c * dt)
                    else:
                        dy = 2.0 * c * dt * ev + dw[:, k, :]
                    if currents is not None:
                        currents[:, :, k] = dy / (2.0 * c * dt)
                elif currents is not None:
                    # eta = 0: no innovation; record flagged unit-variance noise
                    currents[:, :, k] = dw[:, k, :] / np.sqrt(dt)
            rho = self._kraus_step(rho, dy)
            rho = 0.5 * (rho + rho.conj().transpose(0, 2, 1))
            tr = np.einsum("bii->b", rho).real
            rho /= tr[:, None, None]
            if (k + 1) in snap_pos:
                snaps[:, snap_pos[k + 1]] = rho
        if squeeze:
            rho = rho[0]
            snaps = snaps[0]
            currents = currents[0] if currents is not None else None
        return rho, currents, snaps


def _steps_for(T: float, dt: float) -> int:
    steps = int(round(T / dt)) if T > 0 else 0
    if abs(steps * dt - T) > 1e-9 * max(T, dt):
        raise ValueError(f"dt={dt} does not divide T={T} within rounding")
    return steps


def lindblad_step(rho: np.ndarray, model: NoiseModel, setup: MeasurementSetup | None,
                  dt: float, n_system: int | None = None,
                  tols: Tolerances = DEFAULT) -> np.ndarray:
    """One deterministic step d_rho = sum_j gamma_j D[L_j] rho dt.

    `n_system` gives the number of system qubits when the state carries a
    trailing reference factor (dissipators then act as identity on it); by
    default the layout is inferred from the measured-operator labels, or the
    whole state is treated as system qubits.
    """
    rho = np.asarray(rho, dtype=complex)
    qcore.assert_density_matrix(rho, tols, what="lindblad_step input")
    n, with_reference = _layout_for_state(rho.shape[0], setup, n_system)
    prop = Propagator(n, model, setup, dt, with_reference)
    return rho + prop.deterministic_increment(rho[None])[0]


def integrate_unconditional(state0: np.ndarray, model: NoiseModel, T: float, dt: float,
                            setup: MeasurementSetup | None = None,
                            n_system: int | None = None) -> np.ndarray:
    """Deterministic Lindblad evolution of a pure initial state vector.

    With `setup` given, the measurement and odd-dephasing dissipators are
    included (the eta = 0 / ensemble-averaged dynamics).
    """
    state0 = np.asarray(state0, dtype=complex).ravel()
    rho = qcore.projector(state0)
    steps = _steps_for(T, dt)
    if steps == 0:
        return rho
    n, with_reference = _layout_for_state(state0.size, setup, n_system)
    # unconditional dynamics carries no detection: run the engine's
    # zero-innovation path (measurement channels become plain dissipators),
    # which the eta = 0 conditional evolution reproduces exactly
    if setup is not None and setup.eta != 0.0:
        setup = replace(setup, eta=0.0)
    prop = Propagator(n, model, setup, dt, with_reference)
    rho, _, _ = prop.run(rho[None], steps)
    return rho[0]


def _layout_for_state(dim: int, setup: MeasurementSetup | None,
                      n_system: int | None) -> tuple[int, bool]:
    n_total = int(round(np.log2(dim)))
    if 2**n_total != dim:
        raise ValueError(f"state dimension {dim} is not a power of two")
    if n_system is not None:
        if n_system not in (n_total, n_total - 1):
            raise ValueError(f"n_system={n_system} incompatible with dim {dim}")
        return n_system, n_system == n_total - 1
    if setup is not None and setup.operators:
        n = len(setup.operators[0])
        if n not in (n_total, n_total - 1):
            raise ValueError(f"operator labels of length {n} incompatible with dim {dim}")
        return n, n == n_total - 1
    return n_total, False


def integrate_sme(state0: np.ndarray, model: NoiseModel, setup: MeasurementSetup,
                  T: float, dt: float, seed: int,
                  n_system: int | None = None) -> TrajectoryRecord:
    """One homodyne trajectory, fully reproducible from `seed`."""
    state0 = np.asarray(state0, dtype=complex).ravel()
    steps = _steps_for(T, dt)
    n, with_reference = _layout_for_state(state0.size, setup, n_system)
    prop = Propagator(n, model, setup, dt, with_reference)
    rng = trajectory_rng(seed)
    dw = rng.standard_normal((1, steps, prop.n_ops)) * np.sqrt(dt)
    rho, currents, _ = prop.run(qcore.projector(state0)[None], steps, dw=dw,
                                record_currents=True)
    if currents is None:
        currents = np.zeros((prop.n_ops, steps))
    else:
        currents = currents[0]
    return TrajectoryRecord(
        seed=int(seed), dt=dt, steps=steps, currents=currents,
        final_state=rho[0], pure_noise_currents=setup.eta == 0.0 and prop.n_ops > 0,
    )


def integrate_conditioned(state0: np.ndarray, currents: np.ndarray, model: NoiseModel,
                          setup: MeasurementSetup, dt: float,
                          n_system: int | None = None) -> np.ndarray:
    """Conditional (filtered) state of `state0` given a recorded current set.

    The innovation at each step is reconstructed from the recorded current and
    the evolving state's own expectation values, which is the Bayesian update
    for an arbitrary initial state sharing the same record. At eta = 0 the
    record carries no information and the evolution is the deterministic one.
    """
    state0 = np.asarray(state0, dtype=complex).ravel()
    currents = np.asarray(currents, dtype=float)
    steps = currents.shape[-1]
    n, with_reference = _layout_for_state(state0.size, setup, n_system)
    prop = Propagator(n, model, setup, dt, with_reference)
    if setup.eta == 0.0:
        return integrate_unconditional(state0, model, steps * dt, dt, setup=setup,
                                       n_system=n_system)
    rho, _, _ = prop.run(qcore.projector(state0)[None], steps,
                         given_currents=currents[None] if currents.ndim == 2 else currents)
    return rho[0]


def run_ensemble(state0: np.ndarray, model: NoiseModel, setup: MeasurementSetup,
                 T: float, dt: float, count: int, master_seed: int,
                 n_system: int | None = None) -> list[TrajectoryRecord]:
    """Ensemble of trajectories with per-trajectory derived seeds.

    Trajectories are integrated in fixed CHUNK_SIZE batches; results depend
    only on (master_seed, count), never on execution order or worker count.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    state0 = np.asarray(state0, dtype=complex).ravel()
    steps = _steps_for(T, dt)
    n, with_reference = _layout_for_state(state0.size, setup, n_system)
    seeds = derive_seeds(master_seed, count)
    prop = Propagator(n, model, setup, dt, with_reference)
    rho0 = qcore.projector(state0)
    records: list[TrajectoryRecord] = []
    for start in range(0, count, CHUNK_SIZE):
        chunk = seeds[start:start + CHUNK_SIZE]
        b = len(chunk)
        dw = np.empty((b, steps, prop.n_ops))
        for i, s in enumerate(chunk):
            dw[i] = trajectory_rng(s).standard_normal((steps, prop.n_ops)) * np.sqrt(dt)
        rho, currents, _ = prop.run(np.broadcast_to(rho0, (b, *rho0.shape)), steps,
                                    dw=dw, record_currents=True)
        for i, s in enumerate(chunk):
            cur = currents[i] if currents is not None else np.zeros((prop.n_ops, steps))
            records.append(TrajectoryRecord(
                seed=int(s), dt=dt, steps=steps, currents=cur, final_state=rho[i],
                pure_noise_currents=setup.eta == 0.0 and prop.n_ops > 0))
    return records

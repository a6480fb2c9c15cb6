"""Shot sampling for the delayed-tomography estimator.

This module is the "laboratory" stage: prepare a random encoded Pauli
eigenstate, run the monitored evolution, measure one random Pauli observable.
It deliberately knows nothing about recovery maps; everything recovery-related
happens in a later processing stage (`paritybench.estimator.fidelity`).

All randomness of a shot derives from a single 64-bit seed through a fixed
draw order (sigma, tau coin, observable label, Wiener increments, Born draw),
so a persisted (seed, sigma, tau, k, nu) log line is enough to regenerate the
trajectory exactly during post-processing.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .. import qcore
from ..codes import StabilizerCode, encoded_eigenstate
from ..sme import (MeasurementSetup, NoiseModel, TrajectoryRecord, derive_seeds,
                   trajectory_rng, Propagator, _steps_for)

SIGMAS = ("I", "X", "Y", "Z")


@dataclass(eq=False)
class ShotRecord:
    seed: int
    sigma: str                      # single-qubit Pauli letter, 'I' sentinel allowed
    tau: int                        # stored +1 for the identity sentinel
    k_label: str                    # n-qubit observable label
    nu: int                         # measured eigenvalue
    trajectory: TrajectoryRecord | None = None
    recovery: Any = None            # RecoveryChoi, attached post hoc


def _draw_preparation(rng: np.random.Generator, code: StabilizerCode):
    """Fixed draw order shared by sampling and replay."""
    sigma = SIGMAS[int(rng.integers(0, 4))]
    coin = +1 if int(rng.integers(0, 2)) == 0 else -1
    k_label = "".join(qcore.PAULI_LETTERS[i] for i in rng.integers(0, 4, size=code.n))
    if sigma == "I":
        prep = code.logical_zero if coin == +1 else code.logical_one
        tau = +1
    else:
        prep = encoded_eigenstate(code, sigma, coin)
        tau = coin
    return sigma, tau, k_label, prep


def _simulate(rng: np.random.Generator, prep: np.ndarray, code: StabilizerCode,
              model: NoiseModel, setup: MeasurementSetup, T: float, dt: float,
              seed: int) -> TrajectoryRecord:
    steps = _steps_for(T, dt)
    prop = Propagator(code.n, model, setup, dt, with_reference=False)
    dw = rng.standard_normal((1, steps, prop.n_ops)) * np.sqrt(dt)
    rho, currents, _ = prop.run(qcore.projector(prep)[None], steps, dw=dw,
                                record_currents=True)
    cur = currents[0] if currents is not None else np.zeros((prop.n_ops, steps))
    return TrajectoryRecord(seed=int(seed), dt=dt, steps=steps, currents=cur,
                            final_state=rho[0],
                            pure_noise_currents=setup.eta == 0.0 and prop.n_ops > 0)


def sample_shot(code: StabilizerCode, model: NoiseModel, setup: MeasurementSetup,
                T: float, dt: float, seed: int) -> ShotRecord:
    """One laboratory shot: steps 1-3 of the delayed-tomography protocol."""
    rng = trajectory_rng(seed)
    sigma, tau, k_label, prep = _draw_preparation(rng, code)
    rec = _simulate(rng, prep, code, model, setup, T, dt, seed)
    if set(k_label) == {"I"}:
        nu = +1  # identity observable has only the +1 outcome
    else:
        b_k = qcore.pauli(k_label)
        e = float(np.real(np.trace(b_k @ rec.final_state)))
        p_plus = min(max(0.5 * (1.0 + e), 0.0), 1.0)
        nu = +1 if rng.random() < p_plus else -1
    return ShotRecord(seed=int(seed), sigma=sigma, tau=tau, k_label=k_label, nu=nu,
                      trajectory=rec)


def replay_shot_trajectory(code: StabilizerCode, model: NoiseModel,
                           setup: MeasurementSetup, T: float, dt: float,
                           seed: int) -> tuple[str, int, str, TrajectoryRecord]:
    """Regenerate (sigma, tau, k_label, trajectory) of a logged shot from its seed.

    The Born draw is *not* replayed; the measured nu lives in the log.
    """
    rng = trajectory_rng(seed)
    sigma, tau, k_label, prep = _draw_preparation(rng, code)
    rec = _simulate(rng, prep, code, model, setup, T, dt, seed)
    return sigma, tau, k_label, rec


def sample_shots(code: StabilizerCode, model: NoiseModel, setup: MeasurementSetup,
                 T: float, dt: float, count: int, master_seed: int) -> list[ShotRecord]:
    seeds = derive_seeds(master_seed, count)
    return [sample_shot(code, model, setup, T, dt, int(s)) for s in seeds]


def write_shot_log(path: str | Path, shots: list[ShotRecord]) -> None:
    """One shot per line: seed, sigma, tau, k, nu (comma-delimited)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("seed,sigma,tau,k,nu\n")
        for s in shots:
            fh.write(f"{s.seed},{s.sigma},{s.tau:+d},{s.k_label},{s.nu:+d}\n")


def read_shot_log(path: str | Path) -> list[ShotRecord]:
    shots: list[ShotRecord] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "seed,sigma,tau,k,nu":
            raise ValueError(f"{path} is not a shot log")
        for line in fh:
            if not line.strip():
                continue
            seed, sigma, tau, k_label, nu = line.strip().split(",")
            shots.append(ShotRecord(seed=int(seed), sigma=sigma, tau=int(tau),
                                    k_label=k_label, nu=int(nu)))
    return shots

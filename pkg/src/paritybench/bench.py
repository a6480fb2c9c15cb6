"""Benchmark orchestration: experiment configuration, the four fidelity curves
(optimal recovery with and without measurement, textbook decoding, unencoded
baseline), detection-efficiency sweeps, and CSV/manifest emission.

One ensemble run serves every cutoff time: each trajectory is integrated once
with state snapshots (and current prefixes) taken at the grid times, exactly
as a single laboratory record would be analyzed at different cutoffs.

Determinism: trajectories are partitioned into fixed chunks (sme.CHUNK_SIZE)
keyed only by the master seed and the trajectory index; worker processes
compute whole chunks, so emitted tables are byte-identical for any worker
count.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import __version__, qcore
from .codes import StabilizerCode, by_name, reference_entangled_state, unencoded_qubit
from .cqed import CqedParams, derive_effective_rates
from .recovery import average_fidelity, solve_optimal_recovery_batch
from .sme import (CHUNK_SIZE, MeasurementSetup, NoiseModel, Propagator,
                  derive_seeds, trajectory_rng)

THREADS_ENV = "PARITYBENCH_THREADS"

MEASURED_OPERATORS = {
    "bit_flip": ("ZZI", "IZZ"),
    "relaxation": ("ZZII", "IIZZ"),  # the X-type stabilizer is not measured
}


@dataclass(frozen=True)
class ExperimentConfig:
    code: str = "bit_flip"
    gamma_x: float = 0.0            # angular rates, 1/s
    gamma_1: float = 0.0
    gamma_phi: float = 0.0
    cqed: CqedParams | None = None
    gamma_meas: float | None = None      # direct override of the cqed reduction
    gamma_deph_odd: float | None = None
    eta: float = 1.0
    T: float = 48e-9                # seconds
    dt: float = 0.05e-9
    trajectories: int = 2000
    master_seed: int = 2026
    time_grid_ns: tuple[float, ...] = (6, 12, 18, 24, 30, 36, 42, 48)
    etas: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    t_star_ns: float = 48.0
    solver_tol: float = 1e-6
    shots: int = 2000

    def validate(self) -> None:
        by_name(self.code)
        if self.code not in MEASURED_OPERATORS:
            raise ValueError(f"no measured-operator layout for code {self.code!r}")
        if self.trajectories < 1:
            raise ValueError("trajectories must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.T <= 0 or self.dt <= 0:
            raise ValueError("T and dt must be positive")
        for t in self.time_grid_ns:
            if not 0.0 <= t * 1e-9 <= self.T + 1e-15:
                raise ValueError(f"grid time {t} ns outside [0, T]")
        if list(self.time_grid_ns) != sorted(set(self.time_grid_ns)):
            raise ValueError("time_grid_ns must be strictly increasing")
        self.grid_steps()
        self.noise_model()
        self.measurement_setup()

    def noise_model(self) -> NoiseModel:
        return NoiseModel(gamma_x=self.gamma_x, gamma_1=self.gamma_1,
                          gamma_phi=self.gamma_phi)

    def effective_rates(self) -> tuple[float, float]:
        if self.gamma_meas is not None:
            return self.gamma_meas, (self.gamma_deph_odd or 0.0)
        if self.cqed is None:
            raise ValueError("config needs either cqed parameters or a gamma_meas override")
        rates = derive_effective_rates(self.cqed, self.cqed.chi, -self.cqed.chi)
        return rates.gamma_meas, rates.gamma_deph_odd

    def measurement_setup(self, eta: float | None = None) -> MeasurementSetup:
        gm, gd = self.effective_rates()
        return MeasurementSetup(operators=MEASURED_OPERATORS[self.code],
                                gamma_meas=gm, gamma_deph_odd=gd,
                                eta=self.eta if eta is None else eta)

    def grid_steps(self) -> list[int]:
        steps = []
        for t in self.time_grid_ns:
            k = int(round(t * 1e-9 / self.dt))
            if abs(k * self.dt - t * 1e-9) > 1e-6 * self.dt:
                raise ValueError(f"grid time {t} ns is not a multiple of dt")
            steps.append(k)
        return steps


_CONFIG_KEYS = {
    "code": ("code", str),
    "gamma_x_over_2pi": ("gamma_x", lambda v: 2 * np.pi * float(v)),
    "gamma_1_over_2pi": ("gamma_1", lambda v: 2 * np.pi * float(v)),
    "gamma_phi_over_2pi": ("gamma_phi", lambda v: 2 * np.pi * float(v)),
    "gamma_meas": ("gamma_meas", float),
    "gamma_deph_odd": ("gamma_deph_odd", float),
    "eta": ("eta", float),
    "T_ns": ("T", lambda v: float(v) * 1e-9),
    "dt_ns": ("dt", lambda v: float(v) * 1e-9),
    "trajectories": ("trajectories", int),
    "master_seed": ("master_seed", int),
    "time_grid_ns": ("time_grid_ns", lambda v: tuple(float(x) for x in v)),
    "etas": ("etas", lambda v: tuple(float(x) for x in v)),
    "t_star_ns": ("t_star_ns", float),
    "solver_tol": ("solver_tol", float),
    "shots": ("shots", int),
}

_CQED_KEYS = ("chi_over_2pi", "kappa_over_2pi", "epsilon_m_over_2pi",
              "omega_r_over_2pi", "omega_m_over_2pi", "g_over_delta")


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a validated config from the documented JSON keys.

    Laboratory frequencies are given in Hz under ``*_over_2pi`` keys and
    converted to angular rates; direct ``gamma_meas``/``gamma_deph_odd``
    overrides are plain 1/s rates.
    """
    kwargs: dict = {}
    cqed_kwargs: dict = {}
    for key, value in raw.items():
        if key in _CONFIG_KEYS:
            name, conv = _CONFIG_KEYS[key]
            kwargs[name] = conv(value)
        elif key in _CQED_KEYS:
            cqed_kwargs[key] = float(value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    if cqed_kwargs:
        eta = kwargs.get("eta", 1.0)
        cqed_kwargs.setdefault("omega_r_over_2pi", 0.0)
        cqed_kwargs.setdefault("omega_m_over_2pi", 0.0)
        kwargs["cqed"] = CqedParams.from_hz(eta=eta, **cqed_kwargs)
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "0")) or (os.cpu_count() or 1)
    return max(1, threads)


# ---------------------------------------------------------------------------
# chunk workers (module-level for pickling)

def _chunk_seeds(cfg: ExperimentConfig, start: int, stop: int) -> np.ndarray:
    return derive_seeds(cfg.master_seed, cfg.trajectories)[start:stop]


def _measured_chunk(args) -> tuple[int, np.ndarray, np.ndarray]:
    """Simulate one chunk and analyze it at every grid time.

    Returns (chunk_start, f_e (B, K), textbook f_e (B, K) or empty).
    """
    cfg, eta, start, stop = args
    code = by_name(cfg.code)
    setup = cfg.measurement_setup(eta=eta)
    model = cfg.noise_model()
    grid = cfg.grid_steps()
    steps = max(grid) if grid else 0
    phi = reference_entangled_state(code)
    rho0 = qcore.projector(phi)
    seeds = _chunk_seeds(cfg, start, stop)
    b = len(seeds)
    prop = Propagator(code.n, model, setup, cfg.dt, with_reference=True)
    dw = np.empty((b, steps, prop.n_ops))
    for i, s in enumerate(seeds):
        dw[i] = trajectory_rng(s).standard_normal((steps, prop.n_ops)) * np.sqrt(cfg.dt)
    _, currents, snaps = prop.run(np.broadcast_to(rho0, (b, *rho0.shape)), steps,
                                  dw=dw, snapshot_steps=tuple(grid),
                                  record_currents=True)
    # optimal recovery at each cutoff, warm-starting along the grid
    f_e = np.empty((b, len(grid)))
    warm = None
    for k in range(len(grid)):
        if grid[k] == 0:
            f_e[:, k] = 1.0
            continue
        f_ek, _, warm = solve_optimal_recovery_batch(snaps[:, k], code,
                                                     tol=cfg.solver_tol, warm=warm)
        f_e[:, k] = f_ek
    # textbook decoding from the integrated record prefix [0, t_k]
    tb = np.empty((b, len(grid))) if code.syndrome_table is not None else np.empty((b, 0))
    if code.syndrome_table is not None:
        corr_vecs = {}
        for signs, label in code.syndrome_table.items():
            c = np.kron(qcore.pauli(label), np.eye(2, dtype=complex))
            corr_vecs[signs] = c @ phi
        csum = np.cumsum(currents, axis=2) if currents is not None else None
        for k, gstep in enumerate(grid):
            if gstep == 0 or csum is None:
                # no record yet: thresholding picks the all-plus syndrome
                v = corr_vecs[tuple([+1] * len(setup.operators))]
                tb[:, k] = np.real(np.einsum("i,bij,j->b", v.conj(), snaps[:, k], v))
                continue
            means = csum[:, :, gstep - 1] / gstep
            signs = np.where(means >= 0, 1, -1)
            for i in range(b):
                v = corr_vecs[tuple(int(x) for x in signs[i])]
                tb[i, k] = float(np.real(v.conj() @ snaps[i, k] @ v))
    return start, f_e, tb


def _run_measured(cfg: ExperimentConfig, eta: float, threads: int
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Per-trajectory (f_e, textbook f_e) arrays of shape (N, K)."""
    tasks = [(cfg, eta, s, min(s + CHUNK_SIZE, cfg.trajectories))
             for s in range(0, cfg.trajectories, CHUNK_SIZE)]
    results: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    if threads <= 1 or len(tasks) == 1:
        for t in tasks:
            start, f_e, tb = _measured_chunk(t)
            results[start] = (f_e, tb)
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for start, f_e, tb in pool.map(_measured_chunk, tasks):
                results[start] = (f_e, tb)
    starts = [t[2] for t in tasks]
    f_e = np.concatenate([results[s][0] for s in starts])
    tb = np.concatenate([results[s][1] for s in starts])
    return f_e, tb


def _deterministic_fe(cfg: ExperimentConfig, code: StabilizerCode,
                      setup: MeasurementSetup | None) -> np.ndarray:
    """Snapshot the unconditional evolution and solve one SDP per grid time."""
    model = cfg.noise_model()
    grid = cfg.grid_steps()
    steps = max(grid) if grid else 0
    phi = reference_entangled_state(code)
    prop = Propagator(code.n, model,
                      replace(setup, eta=0.0) if setup is not None else None,
                      cfg.dt, with_reference=True)
    _, _, snaps = prop.run(qcore.projector(phi)[None], steps,
                           snapshot_steps=tuple(grid))
    f_e = np.empty(len(grid))
    for k, gstep in enumerate(grid):
        if gstep == 0:
            f_e[k] = 1.0
            continue
        fe, _, _ = solve_optimal_recovery_batch(snaps[0, k][None], code,
                                                tol=cfg.solver_tol)
        f_e[k] = fe[0]
    return f_e


@dataclass
class CurveTable:
    label: str
    x_name: str                      # "t_ns" or "eta"
    rows: list[tuple[float, float, float, int]]  # (x, fbar, stderr, n_traj)

    def to_csv(self) -> str:
        lines = [f"{self.x_name},fbar,stderr,n_traj"]
        for x, fbar, err, n in self.rows:
            lines.append(f"{x:.12g},{fbar:.12g},{err:.12g},{n}")
        return "\n".join(lines) + "\n"


def _fe_rows(xs, f_e: np.ndarray, n_traj: int) -> list[tuple[float, float, float, int]]:
    """Average-fidelity rows from per-trajectory entanglement fidelities (N, K)."""
    rows = []
    for k, x in enumerate(xs):
        fe_k = f_e[:, k]
        mean = average_fidelity(float(fe_k.mean()))
        err = float(fe_k.std(ddof=1) / np.sqrt(len(fe_k)) * (2.0 / 3.0)) if len(fe_k) > 1 else 0.0
        rows.append((float(x), mean, err, n_traj))
    return rows


def run_curve_f2(cfg: ExperimentConfig, threads: int = 1) -> CurveTable:
    """Optimal recovery conditioned on the measurement record (blue curve)."""
    f_e, _ = _run_measured(cfg, cfg.eta, threads)
    return CurveTable("fbar2_measured", "t_ns",
                      _fe_rows(cfg.time_grid_ns, f_e, cfg.trajectories))


def run_curve_textbook(cfg: ExperimentConfig, threads: int = 1) -> CurveTable:
    """Threshold-and-lookup decoding of the same records (purple curve)."""
    code = by_name(cfg.code)
    if code.syndrome_table is None:
        raise ValueError(f"textbook decoding needs a syndrome table; code {cfg.code!r} has none")
    _, tb = _run_measured(cfg, cfg.eta, threads)
    return CurveTable("textbook", "t_ns",
                      _fe_rows(cfg.time_grid_ns, tb, cfg.trajectories))


def run_curves_measured(cfg: ExperimentConfig, threads: int = 1
                        ) -> tuple[CurveTable, CurveTable | None]:
    """Both record-based curves from one shared ensemble."""
    f_e, tb = _run_measured(cfg, cfg.eta, threads)
    t2 = CurveTable("fbar2_measured", "t_ns",
                    _fe_rows(cfg.time_grid_ns, f_e, cfg.trajectories))
    ttb = None
    if tb.shape[1]:
        ttb = CurveTable("textbook", "t_ns",
                         _fe_rows(cfg.time_grid_ns, tb, cfg.trajectories))
    return t2, ttb


def run_curve_f1(cfg: ExperimentConfig) -> CurveTable:
    """Optimal recovery without any measurement (green curve); deterministic."""
    code = by_name(cfg.code)
    f_e = _deterministic_fe(cfg, code, setup=None)
    rows = [(float(t), average_fidelity(float(f)), 0.0, 0)
            for t, f in zip(cfg.time_grid_ns, f_e)]
    return CurveTable("fbar1_no_measurement", "t_ns", rows)


def run_curve_unencoded(cfg: ExperimentConfig) -> tuple[CurveTable, CurveTable]:
    """Single unencoded qubit under the same noise: SDP-recovered and bare decay."""
    code = unencoded_qubit()
    model = cfg.noise_model()
    grid = cfg.grid_steps()
    steps = max(grid) if grid else 0
    phi = reference_entangled_state(code)
    prop = Propagator(1, model, None, cfg.dt, with_reference=True)
    _, _, snaps = prop.run(qcore.projector(phi)[None], steps, snapshot_steps=tuple(grid))
    rows_sdp, rows_bare = [], []
    for k, (t, gstep) in enumerate(zip(cfg.time_grid_ns, grid)):
        omega = snaps[0, k]
        bare = float(np.real(phi.conj() @ omega @ phi))
        if gstep == 0:
            fe = 1.0
        else:
            fe_arr, _, _ = solve_optimal_recovery_batch(omega[None], code,
                                                        tol=cfg.solver_tol)
            fe = float(fe_arr[0])
        rows_sdp.append((float(t), average_fidelity(fe), 0.0, 0))
        rows_bare.append((float(t), average_fidelity(bare), 0.0, 0))
    return (CurveTable("unencoded_sdp", "t_ns", rows_sdp),
            CurveTable("unencoded_bare", "t_ns", rows_bare))


def run_eta_sweep(cfg: ExperimentConfig, etas: tuple[float, ...] | None = None,
                  t_star_ns: float | None = None, threads: int = 1) -> CurveTable:
    """F_bar_2 at a fixed cutoff versus detection efficiency, same seed family."""
    etas = cfg.etas if etas is None else etas
    t_star = cfg.t_star_ns if t_star_ns is None else t_star_ns
    sweep_cfg = replace(cfg, time_grid_ns=(t_star,))
    rows = []
    for eta in etas:
        f_e, _ = _run_measured(sweep_cfg, float(eta), threads)
        fe = f_e[:, 0]
        mean = average_fidelity(float(fe.mean()))
        err = float(fe.std(ddof=1) / np.sqrt(len(fe)) * (2.0 / 3.0)) if len(fe) > 1 else 0.0
        rows.append((float(eta), mean, err, cfg.trajectories))
    return CurveTable("eta_sweep", "eta", rows)


def write_manifest(out_dir: str, command: str, cfg: ExperimentConfig,
                   raw_config: dict | None, outputs: list[str],
                   wall_time_s: float) -> str:
    cfg_dict = asdict(cfg)
    if cfg_dict.get("cqed") is not None:
        cfg_dict["cqed"] = asdict(cfg.cqed)
    blob = json.dumps(raw_config if raw_config is not None else cfg_dict,
                      sort_keys=True).encode()
    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "config": cfg_dict,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "master_seed": cfg.master_seed,
        "wall_time_s": round(wall_time_s, 3),
        "outputs": outputs,
    }
    path = os.path.join(out_dir, "run_manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def run_bench(cfg: ExperimentConfig, out_dir: str, threads: int = 1,
              raw_config: dict | None = None) -> list[str]:
    """Full curve suite; returns the list of files written."""
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    tables: list[CurveTable] = []
    t2, ttb = run_curves_measured(cfg, threads)
    tables.append(t2)
    if ttb is not None:
        tables.append(ttb)
    tables.append(run_curve_f1(cfg))
    tables.extend(run_curve_unencoded(cfg))
    outputs = []
    for table in tables:
        path = os.path.join(out_dir, f"{table.label}.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(table.to_csv())
        outputs.append(path)
    write_manifest(out_dir, "bench", cfg, raw_config, outputs, time.time() - t0)
    return outputs

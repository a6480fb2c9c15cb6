"""Command-line interface.

Subcommands:
  simulate   produce a trajectory ensemble file
  recover    SDP recovery pass over a stored ensemble -> per-trajectory F_e CSV
  textbook   threshold-and-lookup decoding over a stored ensemble -> CSV
  estimate   delayed-tomography pipeline (shot log, then offline processing)
  bench      full curve suite (measured/unmeasured optimal, textbook, unencoded)
  sweep-eta  fidelity at a fixed cutoff versus detection efficiency

Thread count comes from --threads or the PARITYBENCH_THREADS environment
variable; outputs are byte-identical for any thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import bench, trajfile
from .codes import by_name, reference_entangled_state
from .estimator import (attach_recoveries, estimate_average_fe, read_shot_log,
                        sample_shots, write_shot_log)
from .sme import run_ensemble


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="JSON experiment config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override master seed (u64)")
    p.add_argument("--trajectories", type=int, default=None, help="override ensemble size")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker processes (default: ${bench.THREADS_ENV} or cpu count)")


def _load(args) -> tuple[bench.ExperimentConfig, dict]:
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    cfg = bench.config_from_dict(raw)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if getattr(args, "trajectories", None) is not None:
        cfg = replace(cfg, trajectories=args.trajectories)
    return cfg, raw


def _cmd_simulate(args) -> int:
    cfg, raw = _load(args)
    os.makedirs(args.out, exist_ok=True)
    t0 = time.time()
    code = by_name(cfg.code)
    setup = cfg.measurement_setup()
    records = run_ensemble(reference_entangled_state(code), cfg.noise_model(), setup,
                           cfg.T, cfg.dt, cfg.trajectories, cfg.master_seed,
                           n_system=code.n)
    path = os.path.join(args.out, "trajectories.pbtrj")
    trajfile.write_ensemble(path, records, header={
        "code": cfg.code,
        "master_seed": cfg.master_seed,
        "T": cfg.T,
        "operators": list(setup.operators),
        "eta": setup.eta,
        "gamma_meas": setup.gamma_meas,
        "gamma_deph_odd": setup.gamma_deph_odd,
        "gamma_x": cfg.gamma_x,
        "gamma_1": cfg.gamma_1,
        "gamma_phi": cfg.gamma_phi,
    })
    bench.write_manifest(args.out, "simulate", cfg, raw, [path], time.time() - t0)
    print(f"wrote {cfg.trajectories} trajectories to {path}")
    return 0


def _cmd_recover(args) -> int:
    from .recovery import solve_optimal_recovery_batch
    t0 = time.time()
    header, records = trajfile.read_ensemble(args.traj)
    code = by_name(header["code"])
    tol = args.tol
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "recoveries.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("seed,f_e\n")
        for start in range(0, len(records), 256):
            batch = records[start:start + 256]
            omegas = np.stack([r.final_state for r in batch])
            f_es, _, _ = solve_optimal_recovery_batch(omegas, code, tol=tol)
            for rec, fe in zip(batch, f_es):
                fh.write(f"{rec.seed},{fe:.12g}\n")
    print(f"wrote {path} ({len(records)} trajectories, {time.time() - t0:.1f}s)")
    return 0


def _cmd_textbook(args) -> int:
    from .decoders import integrate_currents, textbook_correct, textbook_fidelity
    header, records = trajfile.read_ensemble(args.traj)
    code = by_name(header["code"])
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "textbook_decode.csv")
    n_ops = header["n_ops"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        sign_cols = ",".join(f"sign_{i}" for i in range(n_ops))
        fh.write(f"seed,{sign_cols},fidelity\n")
        for rec in records:
            est = integrate_currents(rec)
            fid = textbook_fidelity(rec, code)
            signs = ",".join(f"{s:+d}" for s in est.signs)
            fh.write(f"{rec.seed},{signs},{fid:.12g}\n")
    print(f"wrote {path}")
    return 0


def _cmd_estimate(args) -> int:
    cfg, raw = _load(args)
    code = by_name(cfg.code)
    setup = cfg.measurement_setup()
    model = cfg.noise_model()
    os.makedirs(args.out, exist_ok=True)
    t0 = time.time()
    outputs = []
    shots = None
    if args.from_log:
        shots = read_shot_log(args.from_log)
    else:
        n_shots = args.shots or cfg.shots
        shots = sample_shots(code, model, setup, cfg.T, cfg.dt, n_shots, cfg.master_seed)
        log_path = os.path.join(args.out, "shots.csv")
        write_shot_log(log_path, shots)
        outputs.append(log_path)
        print(f"sampled {len(shots)} shots -> {log_path}")
    if args.stage in ("process", "all"):
        attach_recoveries(shots, code, model, setup, cfg.T, cfg.dt, tol=cfg.solver_tol)
        est, err = estimate_average_fe(shots, code)
        result = {
            "shots": len(shots),
            "estimate_f_e": est,
            "stderr": err,
            "estimate_fbar": bench.average_fidelity(est),
        }
        res_path = os.path.join(args.out, "estimate.json")
        with open(res_path, "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs.append(res_path)
        print(f"F_e estimate = {est:.6f} +/- {err:.6f} (Fbar = {result['estimate_fbar']:.6f})")
    bench.write_manifest(args.out, "estimate", cfg, raw, outputs, time.time() - t0)
    return 0


def _cmd_bench(args) -> int:
    cfg, raw = _load(args)
    threads = bench.resolve_threads(args.threads)
    outputs = bench.run_bench(cfg, args.out, threads=threads, raw_config=raw)
    for path in outputs:
        print(f"wrote {path}")
    return 0


def _cmd_sweep_eta(args) -> int:
    cfg, raw = _load(args)
    threads = bench.resolve_threads(args.threads)
    etas = tuple(float(x) for x in args.etas.split(",")) if args.etas else None
    os.makedirs(args.out, exist_ok=True)
    t0 = time.time()
    table = bench.run_eta_sweep(cfg, etas=etas, t_star_ns=args.t_star, threads=threads)
    path = os.path.join(args.out, "eta_sweep.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(table.to_csv())
    bench.write_manifest(args.out, "sweep-eta", cfg, raw, [path], time.time() - t0)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paritybench", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="produce a trajectory ensemble file")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("recover", help="SDP recovery pass over stored trajectories")
    p.add_argument("--traj", required=True, help="trajectory file from `simulate`")
    p.add_argument("--out", required=True)
    p.add_argument("--tol", type=float, default=None, help="solver tolerance")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_recover)

    p = sub.add_parser("textbook", help="threshold-and-lookup decoding of stored trajectories")
    p.add_argument("--traj", required=True, help="trajectory file from `simulate`")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_textbook)

    p = sub.add_parser("estimate", help="delayed-tomography estimator pipeline")
    _add_common(p)
    p.add_argument("--shots", type=int, default=None, help="number of shots")
    p.add_argument("--stage", choices=("simulate", "process", "all"), default="all",
                   help="simulate: write the shot log only; process: resume from a log")
    p.add_argument("--from-log", default=None, help="existing shot log to process")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("bench", help="full benchmark curve suite")
    _add_common(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("sweep-eta", help="fidelity vs detection efficiency")
    _add_common(p)
    p.add_argument("--etas", default=None, help="comma-separated efficiencies")
    p.add_argument("--t-star", type=float, default=None, help="cutoff time in ns")
    p.set_defaults(func=_cmd_sweep_eta)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

import sys
import json
import logging
import argparse
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

from clsi_lab.config import (
    get_settings,
    load_generator_config,
    load_state,
    load_system_config,
    write_json,
)
from clsi_lab.errors import ClsiLabError
from clsi_lab.lindblad import build_generator, evolve, spectral_gap, zero_multiplicity
from clsi_lab.fixedpoint import commutant_basis, commutant_dimension
from clsi_lab.entropy import decay_curve
from clsi_lab.mlsi import estimate_mlsi
from clsi_lab.liegroup import build_system, transfer_lindbladian
from clsi_lab.ccgeom import cc_diameter
from clsi_lab.design import find_design
from clsi_lab.interval import (
    REFERENCE_CONSTANTS,
    build_interval,
    interval_mlsi_estimate,
    interval_spectral_gap,
    parse_density,
)
from clsi_lab.bound import full_pipeline
from clsi_lab.linalg import matrix_to_json

# Load environment variables from a .env file
load_dotenv(override=True)
settings = get_settings()

# * Set up logging in the clsi_lab.log file
log = logging.getLogger("clsi_lab")
log_handler = logging.FileHandler(settings.log_file)
log_handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
log.addHandler(log_handler)
log.setLevel(settings.log_level)

# * Also log to console
console_handler = logging.StreamHandler()
console_handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
log.addHandler(console_handler)


###############################################################################
# SUBCOMMANDS
###############################################################################

def print_conventions(lambda_est, label="MLSI"):
    print(f"{label} [2D: inf I/(2D)] = {lambda_est:.6g}")
    print(f"{label} [D:  inf I/D]    = {2 * lambda_est:.6g}")


def run_evolve(args):
    cfg = load_generator_config(args.generator)
    gen = build_generator(cfg.operators(), dim=cfg.dim)
    rho_t = evolve(gen, load_state(args.state), args.time)
    payload = {"t": args.time, "state": matrix_to_json(rho_t)}
    if args.out:
        write_json(args.out, payload)
    else:
        print(json.dumps(payload))


def run_fixedpoint(args):
    cfg = load_generator_config(args.generator)
    gen = build_generator(cfg.operators(), dim=cfg.dim)
    basis = commutant_basis(gen)
    payload = {
        "dimension": basis.d,
        "commutant_dimension": commutant_dimension(cfg.operators(), dim=cfg.dim),
        "zero_multiplicity": zero_multiplicity(gen),
        "gap": spectral_gap(gen),
        "basis": [matrix_to_json(b) for b in basis.basis],
    }
    print(f"dim N = {basis.d}, gap = {payload['gap']:.6g}")
    if args.out:
        write_json(args.out, payload)


def run_decay(args):
    cfg = load_generator_config(args.generator)
    gen = build_generator(cfg.operators(), dim=cfg.dim)
    curve = decay_curve(gen, load_state(args.state), np.linspace(0.0, args.t_max, args.steps + 1),
                        max_workers=settings.max_workers)
    if not curve.is_monotone():
        log.warning("relative entropy is not monotone along the computed curve")
    curve.to_csv(args.out, lam=args.lam)
    print(f"wrote {len(curve.times)} points to {args.out}")


def run_mlsi(args):
    cfg = load_generator_config(args.generator)
    gen = build_generator(cfg.operators(), dim=cfg.dim)
    if args.ancilla > settings.ancilla_cap:
        raise ValueError(f"ancilla {args.ancilla} exceeds the configured cap {settings.ancilla_cap}")
    estimate = estimate_mlsi(gen, args.ancilla, n_samples=args.samples, opt_budget=args.budget,
                             seed=args.seed, max_workers=settings.max_workers)
    print_conventions(estimate.lambda_est)
    print(f"spectral gap = {estimate.gap:.6g}")
    if args.out:
        write_json(args.out, estimate.to_dict())


def run_diameter(args):
    h, _ = build_system(load_system_config(args.system))
    estimate = cc_diameter(h, n_targets=args.targets, K=args.segments, opt_budget=args.budget,
                           seed=args.seed, max_workers=settings.max_workers, progress=settings.progress)
    print(f"d_X <= {estimate.d_x:.6g} (attained at {estimate.argmax.label})")
    if args.out:
        write_json(args.out, estimate.to_dict())


def run_design(args):
    config = load_system_config(args.rep)
    h, rep = build_system(config)
    basis = commutant_basis(build_generator(transfer_lindbladian(rep, h)))
    design = find_design(rep, basis, pool_size=args.pool, seed=args.seed)
    print(f"design with m = {design.m} elements ({design.source}), residual {design.residual:.3e}")
    if args.out:
        write_json(args.out, design.to_dict())


def run_interval(args):
    density = parse_density(args.density, args.n)
    w = build_interval(density, args.grid, args.periodic)
    estimate = interval_mlsi_estimate(w, args.matrix_dim, n_samples=args.samples, opt_budget=args.budget,
                                      seed=args.seed, max_workers=settings.max_workers)
    print_conventions(estimate.lambda_est, "MLSI(interval)")
    print(f"open-interval figure = {estimate.lambda_open:.6g}, gap = {interval_spectral_gap(w):.6g}")
    if args.out:
        payload = estimate.to_dict()
        payload["references"] = REFERENCE_CONSTANTS
        write_json(args.out, payload)


def run_pipeline(args):
    config = load_system_config(args.config)
    report = full_pipeline(config, settings, seed=args.seed,
                           emit_curves=Path(args.emit_curves) if args.emit_curves else None)
    print(f"bound (stated) = {report.bound_stated:.6g}")
    print(f"bound (proof)  = {report.bound_proof:.6g}")
    print_conventions(report.lambda_est)
    print(f"gap = {report.gap:.6g}, max violation = {max(report.violations.values(), default=0.0):.3e}")
    write_json(args.out, report.to_dict())


COMMANDS = {
    "evolve": run_evolve,
    "fixedpoint": run_fixedpoint,
    "decay": run_decay,
    "mlsi": run_mlsi,
    "diameter": run_diameter,
    "design": run_design,
    "interval": run_interval,
    "pipeline": run_pipeline,
}


###############################################################################
# ENTRY POINT
###############################################################################

def build_parser():
    parser = argparse.ArgumentParser(
        prog="clsi-lab",
        description="Complete logarithmic Sobolev constants of symmetric quantum Markov semigroups."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="Evolve a state under T_t.")
    p.add_argument("-g", "--gen", "--generator", dest="generator", required=True,
                   help="Generator JSON {dim, jumps}.")
    p.add_argument("-s", "--state", required=True, help="State JSON {state}.")
    p.add_argument("-t", "--t", "--time", dest="time", type=float, default=1.0, help="Evolution time.")
    p.add_argument("-o", "--out", help="Output JSON.")

    p = sub.add_parser("fixedpoint", help="Fixed-point algebra and spectral gap.")
    p.add_argument("-g", "--gen", "--generator", dest="generator", required=True,
                   help="Generator JSON {dim, jumps}.")
    p.add_argument("-o", "--out", help="Output JSON.")

    p = sub.add_parser("decay", help="Relative entropy decay curve as CSV.")
    p.add_argument("-g", "--gen", "--generator", dest="generator", required=True,
                   help="Generator JSON {dim, jumps}.")
    p.add_argument("-s", "--state", required=True, help="State JSON {state}.")
    p.add_argument("-tm", "--tmax", dest="t_max", type=float, default=2.0, help="Last time on the grid.")
    p.add_argument("-st", "--steps", type=int, default=40, help="Number of time steps after t=0.")
    p.add_argument("-l", "--lambda", dest="lam", type=float, default=None,
                   help="MLSI constant (2D convention); adds the e^{-2 lambda t} D(0) bound column.")
    p.add_argument("-o", "--out", required=True, help="Output CSV.")

    p = sub.add_parser("mlsi", help="Numerical MLSI/CLSI estimate.")
    p.add_argument("-g", "--gen", "--generator", dest="generator", required=True,
                   help="Generator JSON {dim, jumps}.")
    p.add_argument("-m", "--ancilla", type=int, default=1, help="Ancilla dimension.")
    p.add_argument("-n", "--samples", type=int, default=100, help="Number of sampled states.")
    p.add_argument("-b", "--budget", type=int, default=20, help="Local search iterations per start.")
    p.add_argument("-sd", "--seed", type=int, default=settings.seed, help="Random seed.")
    p.add_argument("-o", "--out", help="Output JSON.")

    p = sub.add_parser("diameter", help="Carnot-Caratheodory diameter upper bound.")
    p.add_argument("-sy", "--system", required=True, help="System JSON.")
    p.add_argument("-nt", "--targets", type=int, default=64, help="Number of Haar-sampled targets.")
    p.add_argument("-k", "--segments", type=int, default=12, help="Path segments.")
    p.add_argument("-b", "--budget", type=int, default=200, help="Optimizer iterations per penalty stage.")
    p.add_argument("-sd", "--seed", type=int, default=settings.seed, help="Random seed.")
    p.add_argument("-o", "--out", help="Output JSON.")

    p = sub.add_parser("design", help="Finite averaging design for E_N.")
    p.add_argument("-r", "--rep", required=True, help="System JSON naming the representation.")
    p.add_argument("-p", "--pool", type=int, default=2000, help="Initial Haar pool size.")
    p.add_argument("-sd", "--seed", type=int, default=settings.seed, help="Random seed.")
    p.add_argument("-o", "--out", help="Output JSON.")

    p = sub.add_parser("interval", help="MLSI estimate on a weighted interval.")
    p.add_argument("-d", "--density", default="1", help="Density in x with parameter n, e.g. 'x^(n-1)'.")
    p.add_argument("-n", "--n", type=float, default=None, help="Value of n in the density.")
    p.add_argument("-gr", "--grid", type=int, default=256, help="Number of grid cells.")
    p.add_argument("-pe", "--periodic", action="store_true", help="Identify the endpoints.")
    p.add_argument("-md", "--matrix-dim", type=int, default=1, help="Matrix size of the densities.")
    p.add_argument("-ns", "--samples", type=int, default=64, help="Number of sampled densities.")
    p.add_argument("-b", "--budget", type=int, default=50, help="Local search iterations per start.")
    p.add_argument("-sd", "--seed", type=int, default=settings.seed, help="Random seed.")
    p.add_argument("-o", "--out", help="Output JSON.")

    p = sub.add_parser("pipeline", help="Theorem bound, numerical estimates and decay verification.")
    p.add_argument("-c", "--config", required=True, help="System JSON.")
    p.add_argument("-sd", "--seed", type=int, default=settings.seed, help="Random seed.")
    p.add_argument("-ec", "--emit-curves", default=None, help="Directory for per-state decay CSVs.")
    p.add_argument("-o", "--out", default="report.json", help="Output report JSON.")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (ClsiLabError, ValueError, OSError) as e:
        log.error(f"{args.command} failed: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

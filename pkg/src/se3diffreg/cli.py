"""Command-line entry point: ``se3diffreg {gen,schedule,diffuse,register,bench}``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys

import numpy as np

from . import __version__, bench, data, lie
from .errors import Se3DiffRegError
from .forward import DiffusionConfig, diffuse
from .metrics import pose_error
from .reverse import MODES, ReverseConfig, run_inference
from .schedule import KINDS, make_schedule, respace, write_csv

SEED_ENV = "SE3DIFFREG_SEED"
DEFAULT_STEPS = 200
DEFAULT_GAMMA = 0.1
DEFAULT_INFER_STEPS = 5


def default_seed() -> int:
    value = os.environ.get(SEED_ENV)
    if value is None:
        return 0
    try:
        return int(value)
    except ValueError:
        raise SystemExit(f"{SEED_ENV} must be an integer, got {value!r}")


def _add_schedule_flags(p, defaults=True):
    p.add_argument("--schedule", choices=KINDS, default="cosine" if defaults else None,
                   help="noise schedule (default: cosine)")
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS if defaults else None,
                   help="diffusion steps T (default: 200)")


def _add_surrogate_flags(p, defaults=True):
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument("--surrogate", choices=bench.SURROGATES, default=d("icp"),
                   help="registration model used as denoiser (default: icp)")
    p.add_argument("--icp-iters", type=int, default=d(50))
    p.add_argument("--trim", type=float, default=d(0.1), help="ICP trim fraction")
    p.add_argument("--oracle-rot-sigma", type=float, default=d(0.0))
    p.add_argument("--oracle-trans-sigma", type=float, default=d(0.0))
    p.add_argument("--oracle-scaled", action="store_true", default=d(False),
                   help="scale oracle noise by the current misalignment")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="se3diffreg", description="SE(3) diffusion point-cloud registration.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--shape", choices=data.SHAPES, default="composite")
    g.add_argument("--n", type=int, default=10, help="number of pairs")
    g.add_argument("--n-source", type=int, default=512)
    g.add_argument("--n-model", type=int, default=1024)
    g.add_argument("--max-rot", type=float, default=1.0, help="radians")
    g.add_argument("--max-trans", type=float, default=0.1)
    g.add_argument("--partial", type=float, default=0.7)
    g.add_argument("--noise", type=float, default=0.001)
    g.add_argument("--occlusion", type=int, default=1, help="occlusion patches")
    g.add_argument("--format", choices=("xyz", "ply"), default="xyz")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out-dir", required=True)

    s = sub.add_parser("schedule", help="dump schedule coefficients as CSV")
    s.add_argument("--kind", choices=KINDS, default="cosine")
    s.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    s.add_argument("--infer-steps", type=int, default=None, help="respace to K steps")
    s.add_argument("--out", default="-")

    d = sub.add_parser("diffuse", help="sample the forward process for a pair")
    d.add_argument("--pair", required=True, help="pair manifest (JSON)")
    d.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    _add_schedule_flags(d)
    d.add_argument("--seed", type=int, default=None)
    d.add_argument("--out", default="-")

    r = sub.add_parser("register", help="register a source cloud to a model cloud")
    r.add_argument("--source", required=True)
    r.add_argument("--model", required=True)
    _add_surrogate_flags(r)
    _add_schedule_flags(r)
    r.add_argument("--infer-steps", type=int, default=DEFAULT_INFER_STEPS)
    r.add_argument("--mode", choices=MODES, default="deterministic")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--truth", help="pair manifest supplying h0 (and correspondences)")
    r.add_argument("--trace", help="write the per-step trajectory CSV here")

    b = sub.add_parser("bench", help="benchmark single-shot vs reverse-diffusion registration")
    b.add_argument("--dataset", required=True, help="directory written by 'gen'")
    b.add_argument("--config", help="JSON file of BenchConfig fields")
    _add_surrogate_flags(b, defaults=False)
    _add_schedule_flags(b, defaults=False)
    b.add_argument("--gamma", type=float, default=None)
    b.add_argument("--infer-steps", type=int, default=None)
    b.add_argument("--mode", choices=MODES, default=None)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--repeats", type=int, default=None)
    b.add_argument("--methods", default=None,
                   help="comma-separated subset of single_shot,reverse")
    b.add_argument("--workers", type=int, default=None)
    b.add_argument("--out-dir", default=None)
    return parser


def parse_args(argv=None):
    """Parse ``argv``; usage errors exit with status 2."""
    return build_parser().parse_args(argv)


def bench_config(args) -> bench.BenchConfig:
    """Built-in defaults, overlaid by the config file, overlaid by flags."""
    cfg = bench.BenchConfig(seed=default_seed())
    if args.config:
        cfg = bench.config_from_dict(bench.load_config_file(args.config), cfg)
    flags = {
        "dataset_dir": args.dataset,
        "surrogate": args.surrogate,
        "icp_iters": args.icp_iters,
        "trim": args.trim,
        "oracle_rot_sigma": args.oracle_rot_sigma,
        "oracle_trans_sigma": args.oracle_trans_sigma,
        "oracle_scaled": args.oracle_scaled or None,
        "schedule": args.schedule,
        "steps": args.steps,
        "gamma": args.gamma,
        "infer_steps": args.infer_steps,
        "mode": args.mode,
        "seed": args.seed,
        "repeats": args.repeats,
        "methods": tuple(m.strip() for m in args.methods.split(",") if m.strip())
        if args.methods is not None else None,
        "workers": args.workers,
        "out_dir": args.out_dir,
    }
    return bench.config_from_dict({k: v for k, v in flags.items() if v is not None}, cfg)


def _surrogate_from_args(args):
    return bench.BenchConfig(
        surrogate=args.surrogate, icp_iters=args.icp_iters, trim=args.trim,
        oracle_rot_sigma=args.oracle_rot_sigma, oracle_trans_sigma=args.oracle_trans_sigma,
        oracle_scaled=args.oracle_scaled).surrogate_kind()


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def cmd_gen(args):
    seed = default_seed() if args.seed is None else args.seed
    spec = data.GenSpec(shape=args.shape, n_source=args.n_source, n_model=args.n_model,
                        max_rot=args.max_rot, max_trans=args.max_trans,
                        partial_fraction=args.partial, noise_sigma=args.noise,
                        occlusion_patches=args.occlusion, seed=seed)
    pairs = data.generate_dataset(spec, args.n)
    data.save_dataset(pairs, args.out_dir, cloud_ext="." + args.format)
    print(f"wrote {len(pairs)} pairs to {args.out_dir}")


def cmd_schedule(args):
    sched = make_schedule(args.kind, args.steps)
    if args.infer_steps is not None:
        sched = respace(sched, args.infer_steps)
    fh, own = _open_out(args.out)
    try:
        write_csv(sched, fh)
    finally:
        if own:
            fh.close()


CHAIN_HEADER = ["t", "rot_rad", "trans_norm"] + [f"h{i}{j}" for i in range(3) for j in range(4)]


def cmd_diffuse(args):
    seed = default_seed() if args.seed is None else args.seed
    pair = data.load_pair(args.pair)
    cfg = DiffusionConfig(schedule=make_schedule(args.schedule, args.steps),
                          gamma=args.gamma, seed=seed)
    rng = np.random.default_rng(seed)
    ident = lie.RigidTransform.identity()
    fh, own = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHAIN_HEADER)
        for t in range(1, cfg.schedule.T + 1):
            h = diffuse(cfg, pair.h0, t, rng)
            rot, trans = lie.geodesic_distance(ident, h)
            w.writerow([t, format(rot, ".9g"), format(trans, ".9g")]
                       + [format(v, ".9g") for v in h.matrix[:3].reshape(-1)])
    finally:
        if own:
            fh.close()


def cmd_register(args):
    seed = default_seed() if args.seed is None else args.seed
    source = data.load_cloud(args.source)
    model = data.load_cloud(args.model)
    truth = corr = None
    if args.truth:
        pair = data.load_pair(args.truth)
        truth, corr = pair.h0, pair.correspondences
    sched = respace(make_schedule(args.schedule, args.steps), args.infer_steps)
    cfg = ReverseConfig(schedule=sched, mode=args.mode, surrogate=_surrogate_from_args(args),
                        seed=seed)
    h, traj = run_inference(cfg, source, model, truth=truth,
                            rng=np.random.default_rng(seed), correspondences=corr)
    for row in h.matrix:
        print(" ".join(format(v, ".12g") for v in row))
    if truth is not None:
        err = pose_error(h, truth)
        print(f"# RE {err.re_deg:.6g} deg  TE {err.te:.6g}", file=sys.stderr)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step_index", "t", "re_deg", "te", "residual"])
            for st in traj:
                re = "" if st.re is None else format(math.degrees(st.re), ".9g")
                te = "" if st.te is None else format(st.te, ".9g")
                w.writerow([st.step_index, st.t, re, te, format(st.residual, ".9g")])


def cmd_bench(args):
    cfg = bench_config(args)
    rows, reports = bench.run_bench(cfg)
    for method, rep in reports.items():
        print(rep.table(method))
    failed = sum(not r.converged for r in rows)
    if failed:
        print(f"{failed} run(s) did not converge or failed", file=sys.stderr)
    if cfg.out_dir:
        bench.write_outputs(rows, reports, cfg.out_dir, cfg)
    else:
        bench.write_rows(rows, sys.stdout)


COMMANDS = {
    "gen": cmd_gen,
    "schedule": cmd_schedule,
    "diffuse": cmd_diffuse,
    "register": cmd_register,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except Se3DiffRegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


"""Command-line interface: ``fgs-wave <subcommand>``.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("fgs_wave")


def _set_threads(n):
    if n:
        import numba
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))


def cmd_sweep(args):
    from .config import load_sweep_doc
    from .experiments import SweepConfig, emit_outputs, run_sweep
    doc = load_sweep_doc(args.config) if args.config else {}
    if "config" in doc:
        doc = doc["config"]
    if args.scenario:
        doc["scenario"] = args.scenario
    if "scenario" not in doc:
        raise ConfigError("give --scenario or a config file naming one")
    for key in ("velocity", "repetitions", "M0", "seed", "dt"):
        v = getattr(args, key)
        if v is not None:
            doc[key] = v
    if args.k:
        doc["k_values"] = args.k
    if args.M:
        doc["M_values"] = args.M
    if args.figures:
        doc["figures"] = True
    if args.dump_fields:
        doc["dump_fields"] = True
    cfg = SweepConfig.from_dict(doc)
    result = run_sweep(cfg, progress=lambda msg: print(msg, file=sys.stderr, flush=True))
    paths = emit_outputs(result, args.out)
    for row in result.summary:
        print(f"k={row['k']:g}\tM={row['M']}\trms_E_S={row['rms_E_S']:.5e}")
    print(f"wrote {len(paths)} files to {args.out}", file=sys.stderr)


def cmd_compare(args):
    from .reconstruction import energy_norm_diff, read_field
    e = energy_norm_diff(read_field(args.fgs), read_field(args.ref))
    print(f"energy_norm_diff {e.value:.10e}")
    print(f"dt_l2 {e.dt_l2:.10e}")
    print(f"grad_l2 {e.grad_l2:.10e}")


def _run(args):
    from .config import load_run_config
    from .pipeline import from_run_config
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.M is not None:
        cfg.M = args.M
    return cfg, from_run_config(cfg)


def cmd_sample(args):
    from .rays import Branch
    from .sampling import derive_seed
    cfg, run = _run(args)
    branch = Branch.parse(args.branch)
    b = run.draw(cfg.M, derive_seed(cfg.seed, int(branch)))
    d = b.dim
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow([f"q_{j + 1}" for j in range(d)] + [f"p_{j + 1}" for j in range(d)] + ["pi"])
        for q, p, pi in zip(b.q, b.p, b.pi):
            w.writerow([repr(float(v)) for v in (*q, *p, pi)])
    finally:
        if args.out:
            out.close()


def cmd_traj(args):
    from .rays import trajectory_history
    cfg, run = _run(args)
    q = np.array(args.q, dtype=float)
    p = np.array(args.p, dtype=float)
    if q.size != cfg.dim or p.size != cfg.dim:
        raise ConfigError(f"--q and --p need {cfg.dim} components")
    rows = trajectory_history((q, p), args.branch, cfg.velocity, cfg.t_final, cfg.dt, args.stride,
                              cfg.momentum_sign)
    d = cfg.dim
    head = (["t"] + [f"Q_{j + 1}" for j in range(d)] + [f"P_{j + 1}" for j in range(d)]
            + ["re_a", "im_a", "re_detZ", "im_detZ"])
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(head)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    finally:
        if args.out:
            out.close()


def cmd_reconstruct(args):
    from .reconstruction import energy_norm, write_field
    cfg, run = _run(args)
    f, tm = run.field(cfg.M, cfg.seed)
    paths = write_field(f, args.out, args.stem)
    print(f"energy_norm {energy_norm(f).value:.10e}")
    print(json.dumps({"timings": tm.as_dict(), "files": [str(p) for p in paths]}, indent=2))


def cmd_reference(args):
    from .config import load_run_config
    from .reconstruction import energy_norm, write_field
    from .reference import ReferenceConfig, solve_reference
    cfg = load_run_config(args.config)
    f = solve_reference(ReferenceConfig(cfg.data, cfg.velocity, cfg.t_final, cfg.grid, dt=args.dt))
    paths = write_field(f, args.out, args.stem)
    print(f"energy_norm {energy_norm(f).value:.10e}")
    print(json.dumps({"files": [str(p) for p in paths]}, indent=2))


def cmd_schema(args):
    from .config import dump_schemas
    for p in dump_schemas(args.out):
        print(p)


def build_parser():
    ap = argparse.ArgumentParser(prog="fgs-wave", description="Frozen Gaussian sampling for wave equations")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--threads", type=int, default=None, help="numba worker threads")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="sampling-error sweep over (k, M)")
    s.add_argument("--config", help="sweep JSON (or a manifest.json from a previous run)")
    s.add_argument("--out", required=True)
    s.add_argument("--scenario")
    s.add_argument("--velocity", choices=["c1", "c2"])
    s.add_argument("--k", type=float, nargs="+")
    s.add_argument("--M", type=int, nargs="+")
    s.add_argument("--repetitions", type=int)
    s.add_argument("--M0", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--dt", type=float)
    s.add_argument("--figures", action="store_true")
    s.add_argument("--dump-fields", action="store_true")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("compare", help="energy-norm difference of two grid dumps")
    s.add_argument("--fgs", required=True)
    s.add_argument("--ref", required=True)
    s.set_defaults(func=cmd_compare)

    for name, fn, helptext in (("sample", cmd_sample, "write one sample batch as CSV"),
                               ("traj", cmd_traj, "trajectory history for one phase point as CSV"),
                               ("reconstruct", cmd_reconstruct, "FGS wavefield dump from a run config")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True)
        s.add_argument("--seed", type=int)
        s.add_argument("--M", type=int)
        s.set_defaults(func=fn)
        if name == "sample":
            s.add_argument("--branch", default="+")
            s.add_argument("--out")
        elif name == "traj":
            s.add_argument("--q", type=float, nargs="+", required=True)
            s.add_argument("--p", type=float, nargs="+", required=True)
            s.add_argument("--branch", default="+")
            s.add_argument("--stride", type=int, default=100)
            s.add_argument("--out")
        else:
            s.add_argument("--out", required=True)
            s.add_argument("--stem", default="fgs")

    s = sub.add_parser("reference", help="spectral reference wavefield dump from a run config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--stem", default="reference")
    s.add_argument("--dt", type=float)
    s.set_defaults(func=cmd_reference)

    s = sub.add_parser("schema", help="write the configuration JSON schemas")
    s.add_argument("--out", default="docs")
    s.set_defaults(func=cmd_schema)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _set_threads(args.threads)
        args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        t = getattr(exc, "time", None)
        where = f" (t={t:g})" if t is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

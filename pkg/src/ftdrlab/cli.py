"""Command-line interface: field runs, row dumps, bound reports, comparisons.

Exit status: 0 success, 2 configuration/validation failure, 1 compute error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, bounds, fields, tangent
from .config import ConfigError, load_config
from .fieldgrid import FieldGridFormatError, read_fieldgrid, write_fieldgrid
from .flows import FlowError, IntegratorConfig, flow_map, make_linear
from .ulam import estimate_rows

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_CONFIG = 2


def _resolve_threads(value) -> int:
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("FTDRLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"FTDRLAB_THREADS={env!r} is not an integer")
    return 1


def _apply_overrides(run, args):
    if getattr(args, "tau", None) is not None:
        run.tau = float(args.tau)
        if run.tau == 0.0:
            raise ConfigError("--tau must be nonzero")
    if getattr(args, "seed", None) is not None:
        run.master_seed = int(args.seed)
    if run.cfg.dt > abs(run.tau):
        raise ConfigError(f"dt = {run.cfg.dt:g} exceeds |tau| = {abs(run.tau):g}")
    return run


def cmd_field(args) -> int:
    run = _apply_overrides(load_config(args.config), args)
    threads = _resolve_threads(args.threads)
    field = fields.compute_field(
        run.spec, run.partition, run.t0, run.tau, run.diagnostic, run.plan,
        run.cfg, run.master_seed, divergence_kind=run.divergence,
        threads=threads, slice_axis=run.slice_axis,
        slice_value=run.slice_value)
    out = Path(args.out or "field.fgrid")
    write_fieldgrid(field, out)
    sidecar = out.with_suffix(out.suffix + ".meta.json")
    with open(sidecar, "w") as fh:
        json.dump({"diagnostic": field.diagnostic, "t0": field.t0,
                   "tau": field.tau, "seed": field.seed,
                   "threads": threads, "meta": field.meta},
                  fh, indent=2, sort_keys=True, default=str)
    n_bad = int(np.sum(~np.isfinite(field.values)))
    print(f"wrote {out} ({field.values.size} boxes, {n_bad} NaN) and {sidecar}")
    return EXIT_OK


def cmd_row(args) -> int:
    run = _apply_overrides(load_config(args.config), args)
    n = run.partition.n_boxes
    if not 0 <= args.box < n:
        raise ConfigError(f"--box must be in [0, {n})")
    row = estimate_rows(run.spec, run.partition, [args.box], run.t0, run.tau,
                        run.plan, run.cfg, run.master_seed)[0]
    out = Path(args.out or "row.csv")
    axes = "jx,jy,jz"[: 3 * run.partition.dim - 1]
    with open(out, "w") as fh:
        fh.write(f"# ftdr-lab row dump: box={row.source_box} "
                 f"samples_total={row.samples_total} "
                 f"outside_count={row.outside_count} "
                 f"bin_sizes={','.join(repr(b) for b in row.bin_sizes)}\n")
        fh.write(f"{axes},count,probability\n")
        for key in sorted(row.counts):
            c = row.counts[key]
            cells = ",".join(str(j) for j in key)
            fh.write(f"{cells},{c},{c / row.samples_total!r}\n")
    print(f"wrote {out} ({len(row.counts)} bins, "
          f"outside mass {row.outside_mass:.6g})")
    return EXIT_OK


def cmd_validate(args) -> int:
    out_dir = Path(args.out or "reports")
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = bounds.standard_suite(seed=args.seed or 0)
    bad = 0
    for rep in reports:
        stem = rep.name.split("(")[0]
        (out_dir / f"{stem}.json").write_text(rep.to_json() + "\n")
        (out_dir / f"{stem}.txt").write_text(rep.to_text() + "\n")
        status = rep.verdict
        if status != "AS_EXPECTED":
            bad += 1
        print(f"{rep.name:45s} {status}")
    print(f"wrote {2 * len(reports)} report files to {out_dir}")
    return EXIT_OK if bad == 0 else EXIT_COMPUTE


def cmd_compare(args) -> int:
    a = read_fieldgrid(args.field_a)
    b = read_fieldgrid(args.field_b)
    rho = fields.rank_correlation(a, b)
    common = int(np.sum(np.isfinite(a.values) & np.isfinite(b.values)))
    print(f"spearman rho = {rho:.6f} over {common} boxes "
          f"({a.diagnostic} vs {b.diagnostic})")
    return EXIT_OK


def _oracle_rows():
    rk4 = IntegratorConfig("rk4", 1e-3)
    rows = []

    decay = flow_map(make_linear([[-1.0]]), 0.0, 1.0, (2.0,), cfg=rk4)[0]
    rows.append(("flow map: dx=-x, x0=2, tau=1", decay, 2.0 * math.exp(-1.0)))

    sad = make_linear([[0.3, 0.0], [0.0, -0.3]])
    rows.append(("saddle ftle_max (lam=0.3)",
                 tangent.ftle_max(sad, 0.0, 2.0, (0.0, 0.0), 0, rk4), 0.3))
    rows.append(("saddle ftle_min",
                 tangent.ftle_min(sad, 0.0, 2.0, (0.0, 0.0), 0, rk4), -0.3))

    img = flow_map(sad, 0.0, 2.0, (0.3, -0.2), cfg=rk4)
    rows.append(("backward-at-image vs -ftle_min",
                 tangent.ftle_max(sad, 2.0, -2.0, img, 0, rk4),
                 -tangent.ftle_min(sad, 0.0, 2.0, (0.3, -0.2), 0, rk4)))

    lin = make_linear([[0.4]])
    rows.append(("volume functional J(p=3), dx=0.4x, tau=2",
                 tangent.sum_exponents_functional(lin, 0.0, 2.0, (1.0,), 3.0,
                                                  1, rk4), 1.2))

    from .divergence import (KL, HELLINGER, DiscreteDistribution, divergence,
                             donsker_varadhan_lb, phi_eval)
    p = DiscreteDistribution({0: 1.0})
    q = DiscreteDistribution({0: 0.5, 1: 0.5})
    rows.append(("KL((1,0) || (1/2,1/2))", divergence(KL, p, q), math.log(2.0)))
    rows.append(("Hellinger((1,0) || (1/2,1/2))", divergence(HELLINGER, p, q),
                 2.0 - math.sqrt(2.0)))
    p2 = DiscreteDistribution({0: 0.3, 1: 0.7})
    q2 = DiscreteDistribution({0: 0.6, 1: 0.4})
    tight = donsker_varadhan_lb(p2, q2, {0: math.log(0.5), 1: math.log(1.75)})
    rows.append(("DV bound at f=log(p/q)", tight, divergence(KL, p2, q2)))
    rows.append(("phi_KL(0) limit", phi_eval(KL, 0.0), 1.0))
    return rows


def cmd_oracle(args) -> int:
    rows = _oracle_rows()
    width = max(len(r[0]) for r in rows)
    print(f"{'oracle':{width}s}  {'computed':>18s}  {'expected':>18s}  {'|err|':>9s}")
    worst = 0.0
    for name, got, expect in rows:
        err = abs(got - expect)
        worst = max(worst, err)
        print(f"{name:{width}s}  {got:18.12f}  {expect:18.12f}  {err:9.2e}")
    print(f"max |err| = {worst:.2e}")
    return EXIT_OK if worst < 1e-6 else EXIT_COMPUTE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftdr-lab",
        description="Finite-time divergence-rate and FTLE fields for "
                    "deterministic and stochastic flows.")
    parser.add_argument("--version", action="version",
                        version=f"ftdr-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="INI run config")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (or env FTDRLAB_THREADS)")
        p.add_argument("--tau", type=float, default=None,
                       help="override the configured time window")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured master seed")

    p = sub.add_parser("field", help="compute a diagnostic field -> FieldGrid v1")
    common(p)
    p.add_argument("--out", default=None, help="output path (default field.fgrid)")
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("row", help="dump a single transfer-operator row as CSV")
    common(p)
    p.add_argument("--box", type=int, required=True, help="flat box index")
    p.add_argument("--out", default=None, help="output path (default row.csv)")
    p.set_defaults(func=cmd_row)

    p = sub.add_parser("validate", help="run the inequality validation suite")
    p.add_argument("--out", default=None, help="report directory (default reports)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="Spearman rank correlation of two fields")
    p.add_argument("field_a")
    p.add_argument("field_b")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("oracle", help="print the analytic oracle table")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FieldGridFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FlowError, OverflowError, ValueError) as exc:
        print(f"compute error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

    bellcert gen ideal|scrambled|noisy [options] -o device.json
    bellcert stats device.json
    bellcert verify device.json [--tol-gate T] [--tol-cert T] [--format json|text] [--out report.json]
    bellcert report report.json

Exit codes: 0 success / certified, 1 refused, 2 bad input.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__, devices, io
from .engine import Refusal, Tolerances, self_test
from .errors import BellCertError
from .statistics import compare_tables, ideal_probability_table, no_signalling_check, probability_table

log = logging.getLogger("bellcert")

EXIT_OK, EXIT_REFUSED, EXIT_INPUT = 0, 1, 2
MAX_DIM_ENV = "BELLCERT_MAX_DIM"


class InputError(Exception):
    pass


def default_max_dim() -> int:
    raw = os.environ.get(MAX_DIM_ENV)
    if raw is None:
        return devices.MAX_SIDE_DIM
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"{MAX_DIM_ENV}={raw!r} is not an integer") from None


def _max_dim(args) -> int:
    if args.max_dim is None:
        return default_max_dim()
    if args.max_dim > devices.MAX_SIDE_DIM:
        log.warning("dimension cap raised to %d; dense algebra cost grows quickly", args.max_dim)
    return args.max_dim


def cmd_gen(args) -> int:
    cap = _max_dim(args)
    if args.kind == "ideal":
        d = devices.embed_ideal()
    else:
        if args.kind == "scrambled" or args.base == "scrambled":
            d = devices.scramble(args.ga, args.gb, args.pad_a, args.pad_b, seed=args.seed, max_dim=cap)
        else:
            d = devices.embed_ideal()
        if args.kind == "noisy":
            d = devices.perturb(d, args.noise, args.eps, seed=args.seed)
    text = io.dumps_device(d)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)
    return EXIT_OK


def cmd_stats(args) -> int:
    d = io.parse_device(args.device, _max_dim(args))
    real = probability_table(d)
    ref = ideal_probability_table()
    rep = compare_tables(real, ref, args.tol_gate)
    rows = io.table_rows(real, ref, rep)
    ok, signalling = no_signalling_check(real)
    if args.format == "json":
        doc = {"entries": rows, "max_abs_deviation": rep.max_abs_deviation,
               "worst_entry": [rep.worst_entry[0].label(), rep.worst_entry[1].label()],
               "no_signalling": {"passed": ok, "max_violation": signalling}}
        sys.stdout.write(io.dumps_report(io._plain(doc)))
        return EXIT_OK
    worst = (rep.worst_entry[0].label(), rep.worst_entry[1].label())
    print(f"{'a':>10} {'b':>10} {'p':>22} {'ideal':>22} {'deviation':>10}")
    for r in rows:
        mark = "  <-- worst" if (r["a"], r["b"]) == worst else ""
        print(f"{r['a']:>10} {r['b']:>10} {r['p']:>22.17g} {r['ideal']:>22.17g} {r['deviation']:>10.3e}{mark}")
    print(f"max deviation {rep.max_abs_deviation:.3e} at a={worst[0]} b={worst[1]}")
    print(f"no-signalling violation {signalling:.3e}")
    return EXIT_OK


def _verify_one(path: str, tol: Tolerances, cap: int) -> tuple[int, dict]:
    d = io.parse_device(path, cap)
    result = self_test(d, tol)
    doc = io.build_report(d, result, tol, source=str(path))
    return (EXIT_REFUSED if isinstance(result, Refusal) else EXIT_OK), doc


def cmd_verify(args) -> int:
    tol = Tolerances(gate=args.tol_gate, cert=args.tol_cert)
    cap = _max_dim(args)
    if args.out and len(args.devices) > 1:
        raise InputError("--out takes a single device; use --out-dir for several")
    code = EXIT_OK
    for path in args.devices:
        rc, doc = _verify_one(path, tol, cap)
        code = max(code, rc)
        if args.out:
            Path(args.out).write_text(io.dumps_report(doc))
        if args.out_dir:
            Path(args.out_dir).mkdir(parents=True, exist_ok=True)
            Path(args.out_dir, Path(path).stem + ".report.json").write_text(io.dumps_report(doc))
        sys.stdout.write(io.dumps_report(doc) if args.format == "json" else io.render_report(doc))
    return code


def cmd_report(args) -> int:
    try:
        doc = json.loads(Path(args.report).read_text())
        text = io.dumps_report(doc) if args.format == "json" else io.render_report(doc)
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise InputError(f"{args.report}: not a report file ({e})") from None
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bellcert", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"bellcert {__version__}")
    p.add_argument("--max-dim", type=int, default=None,
                   help=f"per-side dimension cap (default ${MAX_DIM_ENV} or {devices.MAX_SIDE_DIM})")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a device file")
    g.add_argument("kind", choices=("ideal", "scrambled", "noisy"))
    g.add_argument("--ga", type=int, default=1, help="garbage dimension on side A")
    g.add_argument("--gb", type=int, default=1, help="garbage dimension on side B")
    g.add_argument("--pad-a", type=int, default=0)
    g.add_argument("--pad-b", type=int, default=0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--kind", dest="noise", choices=("angle_tilt", "state_perturb"), default="angle_tilt",
                   help="perturbation for 'noisy'")
    g.add_argument("--eps", type=float, default=0.05)
    g.add_argument("--base", choices=("ideal", "scrambled"), default="ideal",
                   help="device that 'noisy' perturbs")
    g.add_argument("-o", "--output", default=None)
    g.set_defaults(func=cmd_gen)

    def add_tols(sp):
        sp.add_argument("--tol-gate", type=float, default=Tolerances.gate)
        sp.add_argument("--tol-cert", type=float, default=Tolerances.cert)

    s = sub.add_parser("stats", help="print the 36-entry table against the ideal one")
    s.add_argument("device")
    s.add_argument("--format", choices=("json", "text"), default="text")
    add_tols(s)
    s.set_defaults(func=cmd_stats)

    v = sub.add_parser("verify", help="run the self-test")
    v.add_argument("devices", nargs="+")
    v.add_argument("--format", choices=("json", "text"), default="text")
    v.add_argument("--out", default=None, help="write the JSON report here")
    v.add_argument("--out-dir", default=None, help="write one JSON report per device here")
    add_tols(v)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="render a saved JSON report")
    r.add_argument("report")
    r.add_argument("--format", choices=("json", "text"), default="text")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="bellcert: %(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, BellCertError, OSError, ValueError) as e:
        print(f"bellcert: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # the exit-code contract has no slot for crashes
        print(f"bellcert: internal error: {e!r}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

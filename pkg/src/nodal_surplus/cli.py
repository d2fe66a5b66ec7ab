"""Command-line front end: ``nodal-surplus {spectrum,hist,verify}``.

Exit codes: 0 success, 1 validation error, 2 verification failure, 3 IO error.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .builtins import builtin
from .graph import GraphError, MetricGraph, block_decomposition, format_graph, load_graph, parse_length
from .secular import SecularSystem
from .spectrum import ScanTooCoarse, SpectralScanConfig, scan_spectrum
from .stats import (
    TooFewSamples,
    binomial_pmf,
    conditional_tables,
    distribution_diagnostics,
    estimate_distribution,
    surplus_samples,
)

EXIT_OK, EXIT_INVALID, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3


class UsageError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {(",".join(map(str, k)) if isinstance(k, tuple) else str(k)): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _dump_json(obj) -> str:
    # json writes floats with repr, the shortest string that round-trips exactly
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------------------
# configuration


def _graph_from_args(args) -> tuple[MetricGraph, str]:
    if (args.graph is None) == (args.builtin is None):
        raise UsageError("give exactly one of --graph and --builtin")
    if args.graph is not None:
        g = load_graph(args.graph)  # OSError propagates as an IO failure
        label = str(args.graph)
    else:
        g = builtin(args.builtin)
        label = args.builtin
    if args.lengths:
        try:
            ls = [parse_length(t) for t in args.lengths.split(",") if t.strip()]
        except ValueError as exc:
            raise UsageError(f"bad --lengths: {exc}") from None
        if len(ls) != g.E:
            raise UsageError(f"--lengths gives {len(ls)} values for {g.E} edges")
        g = g.with_lengths(ls)
    return g, label


def _scan_config(args, default_N: int | None = None) -> SpectralScanConfig:
    N, K = args.num_eigenvalues, args.kmax
    if N is not None and K is not None:
        raise UsageError("give at most one of --num-eigenvalues and --kmax")
    if N is None and K is None:
        if default_N is None:
            raise UsageError("give one of --num-eigenvalues and --kmax")
        N = default_N
    return SpectralScanConfig(N=N, K=K, oversample=args.oversample, workers=args.workers)


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# ---------------------------------------------------------------------------
# subcommands


SPECTRUM_DOC = [
    "n: eigenvalue index counted with multiplicity (first index of a degenerate group)",
    "k: square root of the eigenvalue",
    "mult: multiplicity",
    "class: generic | loop_state | zero_mode | degenerate | vertex_vanishing",
    "phi: number of interior zeros of the eigenfunction (generic rows only)",
    "sigma_direct: phi - (n - 1)",
    "sigma_morse: Morse index of the flux Hessian (sum over blocks)",
    "s1..: local surplus of each cyclic block",
    "nodal columns are empty for non-generic, flagged or excluded rows",
]


def cmd_spectrum(args) -> int:
    g, label = _graph_from_args(args)
    cfg = _scan_config(args)
    spec = scan_spectrum(g, cfg)
    sysm = SecularSystem(g)
    blocks = block_decomposition(g, sysm.cut)
    samples = surplus_samples(spec, sysm, blocks)
    nb = len(blocks.blocks)
    nodal: dict[int, list] = {}
    for j, row in enumerate(samples.index):
        if samples.excluded[j]:
            continue
        nodal[int(row)] = [int(samples.phi[j]), int(samples.sigma_direct[j]), int(samples.sigma_morse[j])] + [
            int(v) for v in samples.local[j]
        ]
    cols = ["n", "k", "mult", "class", "phi", "sigma_direct", "sigma_morse"] + [f"s{b + 1}" for b in range(nb)]
    names = spec.class_names
    rows = []
    for i in range(len(spec)):
        vals = nodal.get(i, [None] * (3 + nb))
        rows.append([int(spec.n[i]), float(spec.k[i]), int(spec.multiplicity[i]), str(names[i])] + vals)

    meta = {
        "version": __version__,
        "graph": label,
        "lengths": [float(v) for v in spec.lengths],
        "beta": g.beta,
        "blocks": [list(b.edges) for b in blocks.blocks],
        "records": len(spec),
    }
    if args.format == "json":
        out = dict(meta, columns=cols, rows=rows, diagnostics=spec.diagnostics)
        _write(_dump_json(out), args.output)
    else:
        buf = io.StringIO()
        buf.write(f"# nodal-surplus {__version__} spectrum graph={label} records={len(spec)}\n")
        buf.write("# lengths=" + ",".join(_fmt(v) for v in spec.lengths) + "\n")
        for line in SPECTRUM_DOC:
            buf.write(f"# {line}\n")
        buf.write(",".join(cols) + "\n")
        for r in rows:
            buf.write(",".join("" if v is None else _fmt(v) for v in r) + "\n")
        _write(buf.getvalue(), args.output)
    return EXIT_OK


def cmd_hist(args) -> int:
    g, label = _graph_from_args(args)
    if args.num_generic is not None:
        if args.num_eigenvalues is not None or args.kmax is not None:
            raise UsageError("--num-generic excludes --num-eigenvalues and --kmax")
        cfg = SpectralScanConfig(N=1, oversample=args.oversample, workers=args.workers)
        d = estimate_distribution(g, cfg, n_generic=args.num_generic)
    else:
        d = estimate_distribution(g, _scan_config(args, default_N=10000))
    diag = distribution_diagnostics(d)
    out = {
        "version": __version__,
        "graph": label,
        "lengths": [float(v) for v in g.lengths],
        "n_records": d.n_records,
        **diag,
        "binomial": binomial_pmf(d.beta).tolist(),
        "block_betas": list(d.block_betas),
        "joint": d.joint,
        "exclusions": d.exclusions,
        "conditionals": [
            {key: c[key] for key in ("block", "beta", "table", "gaps", "asymmetry")} for c in conditional_tables(d)
        ],
    }
    _write(_dump_json(out), args.output)
    if args.bins_csv:
        buf = io.StringIO()
        buf.write(f"# nodal-surplus {__version__} hist graph={label} samples={d.n_samples}\n")
        buf.write("sigma,count,P,binomial\n")
        pb = binomial_pmf(d.beta)
        for s in range(d.beta + 1):
            buf.write(f"{s},{int(d.counts[s])},{_fmt(float(d.P[s]))},{_fmt(float(pb[s]))}\n")
        Path(args.bins_csv).write_text(buf.getvalue())
    return EXIT_OK


def cmd_verify(args) -> int:
    from .identities import verify_suite

    g, label = _graph_from_args(args)
    name = args.builtin.strip().lower() if args.builtin and not args.lengths else None
    checks = verify_suite(g, seed=args.seed, n_points=args.points, name=name, tamper=args.tamper)
    ok = all(c.passed for c in checks)
    if args.format == "json":
        report = {
            "version": __version__,
            "graph": label,
            "seed": args.seed,
            "passed": ok,
            "checks": [
                {"name": c.name, "value": c.value, "threshold": c.threshold, "passed": c.passed, "note": c.note}
                for c in checks
            ],
        }
        _write(_dump_json(report), args.output)
    else:
        lines = [f"# nodal-surplus {__version__} verify graph={label} seed={args.seed}"]
        lines += [c.line() for c in checks]
        lines.append("ALL PASS" if ok else f"{sum(not c.passed for c in checks)} FAILED")
        _write("\n".join(lines) + "\n", args.output)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_show(args) -> int:
    g, _ = _graph_from_args(args)
    _write(format_graph(g), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nodal-surplus", description="Nodal surplus statistics on quantum graphs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scan=True):
        src = sp.add_argument_group("graph")
        src.add_argument("--graph", metavar="FILE", help="graph description file")
        src.add_argument("--builtin", metavar="NAME",
                         help="figure8, dumbbell, chain1221, chain321 or pumpkin-chain:p1,p2,...")
        src.add_argument("--lengths", help="comma separated edge lengths (accepts pi, e, sqrt2, 3/2, ...)")
        sp.add_argument("--output", "-o", help="output path (default stdout)")
        if scan:
            sp.add_argument("-N", "--num-eigenvalues", type=int)
            sp.add_argument("--kmax", type=float)
            sp.add_argument("--oversample", type=int, default=8)
            sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("spectrum", help="eigenvalue table with nodal data")
    common(sp)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("hist", help="surplus distribution summary (JSON)")
    common(sp)
    sp.add_argument("--num-generic", type=int, help="scan until this many generic records exist")
    sp.add_argument("--bins-csv", help="also write the histogram as CSV")
    sp.set_defaults(func=cmd_hist)

    sp = sub.add_parser("verify", help="run the identity suite")
    common(sp, scan=False)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--points", type=int, default=1000, help=argparse.SUPPRESS)
    sp.add_argument("--format", choices=("text", "json"), default="text")
    sp.add_argument("--tamper", action="store_true", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("show", help="print the graph in file format")
    common(sp, scan=False)
    sp.set_defaults(func=cmd_show)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"nodal-surplus: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, GraphError, ScanTooCoarse, TooFewSamples, ValueError) as exc:
        print(f"nodal-surplus: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

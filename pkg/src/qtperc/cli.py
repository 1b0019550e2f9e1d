"""Command-line entry point: ``qtperc <command> --spec FILE --params ...``.

Exit codes: 0 success (including an uncertified ``certify`` run), 2 usage or
parameter error, 3 graph-spec parse error, 4 enumeration limit or vertex
budget exceeded, 5 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from importlib import resources

from .certificate import DEFAULT_MARGIN_FLOOR, bisect_q_psi, find_certifying_sets
from .exact_engine import DEFAULT_ENUMERATION_LIMIT, EnumerationLimitError, ParamVector, psi_value
from .graph_model import (
    BudgetExceededError,
    GraphSpecError,
    generate_ball,
    parse_graph_spec,
    vertex_orbits,
    vertex_to_json,
)
from .monte_carlo import estimate_chi_truncated, estimate_one_arm, russo_consistency
from .surface_scan import SweepConfig, csv_header, sweep_surface

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SPEC = 3
EXIT_LIMIT = 4
EXIT_IO = 5

COMMANDS = ("psi", "certify", "bound-q", "one-arm", "chi", "russo-check", "sweep")


class UsageError(Exception):
    pass


def bundled_specs() -> list[str]:
    return sorted(
        p.name for p in resources.files("qtperc").joinpath("specs").iterdir()
        if p.name.endswith(".json")
    )


def load_spec(path: str):
    """Load a graph spec from ``path``, falling back to the bundled examples by name."""
    if os.path.exists(path):
        with open(path) as fh:
            text = fh.read()
    else:
        name = os.path.basename(path)
        if not name.endswith(".json"):
            name += ".json"
        bundled = resources.files("qtperc").joinpath("specs", name)
        if not bundled.is_file():
            raise FileNotFoundError(path)
        text = bundled.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphSpecError(f"invalid JSON: {exc}") from exc
    return parse_graph_spec(doc)


def parse_floats(tokens) -> list[float]:
    out = []
    for tok in tokens or ():
        for part in str(tok).split(","):
            if part.strip():
                try:
                    out.append(float(part))
                except ValueError:
                    raise UsageError(f"not a number: {part!r}") from None
    return out


def _params(spec, tokens) -> ParamVector:
    values = parse_floats(tokens)
    if len(values) != spec.colour_count:
        raise UsageError(f"--params needs {spec.colour_count} values, got {len(values)}")
    try:
        return ParamVector(tuple(values))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _root(spec, type_index):
    reps = vertex_orbits(spec)
    if not 0 <= type_index < len(reps):
        raise UsageError(f"--root-type must be in 0..{len(reps) - 1}")
    return reps[type_index]


def cmd_psi(args, spec):
    params = _params(spec, args.params)
    x = _root(spec, args.root_type)
    region = generate_ball(spec, x, args.radius)
    res = psi_value(region, params, x, limit=args.limit, threads=args.threads)
    return {
        "command": "psi",
        "params": list(params.values),
        "root": vertex_to_json(x),
        "radius": args.radius,
        "psi": res.value,
        "region_size": len(region),
        "region_edge_count": res.region_edge_count,
        "boundary_edge_count": len(res.per_edge_terms),
        "enumeration_limit": args.limit,
    }


def cmd_certify(args, spec):
    params = _params(spec, args.params)
    report = find_certifying_sets(spec, params, args.max_radius, margin_floor=args.margin_floor,
                                  limit=args.limit, threads=args.threads)
    doc = {"command": "certify", **report.to_dict()}
    if report.certified:
        doc["psi"] = report.certificate.max_psi
    doc["enumeration_limit"] = args.limit
    return doc


def cmd_bound_q(args, spec):
    p_fixed = parse_floats(args.params)
    if len(p_fixed) != spec.colour_count - 1:
        raise UsageError(f"--params needs the {spec.colour_count - 1} fixed parameters p_1..p_(N-1)")
    try:
        ParamVector(tuple(p_fixed) + (0.0,))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    bound = bisect_q_psi(spec, p_fixed, args.max_radius, args.tol, margin_floor=args.margin_floor,
                         limit=args.limit, threads=args.threads)
    return {"command": "bound-q", **bound.to_dict()}


def cmd_one_arm(args, spec):
    params = _params(spec, args.params)
    est = estimate_one_arm(spec, params, _root(spec, args.root_type), args.k, args.replicas,
                           args.seed, threads=args.threads, engine=args.engine)
    return {"command": "one-arm", **est.to_dict()}


def cmd_chi(args, spec):
    params = _params(spec, args.params)
    est = estimate_chi_truncated(spec, params, _root(spec, args.root_type), args.m, args.replicas,
                                 args.seed, threads=args.threads, engine=args.engine)
    return {"command": "chi", **est.to_dict()}


def cmd_russo(args, spec):
    params = _params(spec, args.params)
    try:
        rep = russo_consistency(spec, params, _root(spec, args.root_type), args.n, args.colour,
                                args.h, args.replicas, args.seed, threads=args.threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return {"command": "russo-check", **rep.to_dict()}


def cmd_sweep(args, spec):
    n_fixed = spec.colour_count - 1
    if n_fixed < 1:
        raise UsageError("sweep needs a spec with at least 2 colours")
    grid = []
    for tok in args.grid:
        point = parse_floats([tok])
        if len(point) != n_fixed:
            raise UsageError(f"grid point {tok!r} needs {n_fixed} comma-separated values")
        grid.append(point)
    config = SweepConfig(
        max_radius=args.max_radius, cert_tol=args.cert_tol, k=args.k, replicas=args.replicas,
        mc_tol=args.mc_tol, seed=args.seed, threshold=args.threshold, limit=args.limit,
        threads=args.threads,
    )
    out_csv = args.out if args.out and args.format == "csv" else None
    records = sweep_surface(spec, grid, config, out_csv=out_csv)
    if out_csv is not None:
        return None
    return {
        "command": "sweep",
        "columns": csv_header(n_fixed),
        "records": [
            {
                "p_fixed": list(r.p_fixed), "q_certified": r.q_certified, "q_mc": r.q_mc,
                "q_mc_err": r.q_mc_err, "R_used": r.R_used, "k_used": r.k_used,
                "replicas": r.replicas, "seed": r.seed, "flags": list(r.flags),
            }
            for r in records
        ],
    }


HANDLERS = {
    "psi": cmd_psi,
    "certify": cmd_certify,
    "bound-q": cmd_bound_q,
    "one-arm": cmd_one_arm,
    "chi": cmd_chi,
    "russo-check": cmd_russo,
    "sweep": cmd_sweep,
}


def render(doc: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    flat = {k: json.dumps(v) if isinstance(v, (dict, list)) else v for k, v in sorted(doc.items())}
    writer = csv.DictWriter(buf, fieldnames=list(flat))
    writer.writeheader()
    writer.writerow(flat)
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qtperc",
        description="Finite-volume subcriticality certificates and Monte Carlo checks "
        "for inhomogeneous bond percolation on quasi-transitive coloured graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_params=True):
        p.add_argument("--spec", required=True,
                       help="graph-spec JSON file, or the name of a bundled spec "
                       f"({', '.join(bundled_specs())})")
        if with_params:
            p.add_argument("--params", nargs="*", default=[],
                           help="retention probabilities by colour, last one is q "
                           "(space- or comma-separated)")
        p.add_argument("--root-type", type=int, default=0, help="vertex type of the root")
        p.add_argument("--out", help="write the result here instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--limit", type=int, default=DEFAULT_ENUMERATION_LIMIT,
                       help="largest block (in edges) enumerated exactly")
        return p

    def mc(p):
        p.add_argument("--replicas", type=int, default=10_000)
        p.add_argument("--seed", type=int, default=0)
        return p

    p = common(sub.add_parser("psi", help="psi on the ball of a given radius"))
    p.add_argument("--radius", type=int, default=0)

    p = common(sub.add_parser("certify", help="search balls for a subcriticality certificate"))
    p.add_argument("--max-radius", type=int, default=2)
    p.add_argument("--margin-floor", type=float, default=DEFAULT_MARGIN_FLOOR)

    p = common(sub.add_parser("bound-q", help="certified lower bound on the critical q"))
    p.add_argument("--max-radius", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--margin-floor", type=float, default=DEFAULT_MARGIN_FLOOR)

    p = mc(common(sub.add_parser("one-arm", help="Monte Carlo one-arm probability")))
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--engine", choices=("auto", "batch", "explore"), default="auto")

    p = mc(common(sub.add_parser("chi", help="Monte Carlo truncated mean cluster size")))
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--engine", choices=("auto", "batch", "explore"), default="auto")

    p = mc(common(sub.add_parser("russo-check", help="finite differences vs pivotal edges")))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--colour", type=int, default=1)
    p.add_argument("--h", type=float, default=0.01)

    p = mc(common(sub.add_parser("sweep", help="certified and Monte Carlo critical surface"),
                  with_params=False))
    p.add_argument("--grid", nargs="+", required=True,
                   help="fixed-parameter points, each p_1,...,p_(N-1)")
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--max-radius", type=int, default=2)
    p.add_argument("--cert-tol", type=float, default=1e-4)
    p.add_argument("--mc-tol", type=float, default=0.005)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(replicas=20_000)
    return parser


def run(argv=None, stdout=None) -> int:
    """Parse ``argv``, dispatch, write the result; return the exit status."""
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args.spec)
    except GraphSpecError as exc:
        print(f"error: graph spec: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"error: cannot read spec: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        doc = HANDLERS[args.command](args, spec)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EnumerationLimitError, BudgetExceededError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if doc is None:
        return EXIT_OK
    doc["spec_hash"] = spec.spec_hash()
    text = render(doc, args.format)
    try:
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            stdout.write(text)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

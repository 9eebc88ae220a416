"""Command-line front end: ``minkgauss <subcommand> --config <path> [--out DIR] [--seed N] [--order {2,4}]``.

Exit status is 0 when every enabled analysis passes, 1 when one fails or
reports a precondition failure, and 2 for an invalid configuration (in
which case nothing is written).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .acceptance import run_criteria
from .figure import emit_klein_figure
from .graphs import SampledGraph
from .hull import DegenerateHullError
from .legendre import essential_hull
from .pipeline import dumps, gradient_cloud, run
from .scenario import ANALYSES, BUILTIN, ScenarioError, load_scenario

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

_ONLY = {
    "reconstruct": ("reconstruct",),
    "legendre": ("legendre",),
    "theorem": ("theorem_check",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minkgauss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "analyze": "run every analysis enabled in the scenario",
        "reconstruct": "frame reconstruction and alignment only",
        "legendre": "boundary finiteness sweep, essential hull and Fenchel-Young check",
        "theorem": "gradient image against the essential hull over growing charts",
        "figure": "SVG of the essential hull and the Gauss image",
        "selftest": "run the acceptance suite and write selftest.json",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", default="hyperboloid-full",
                       help=f"scenario JSON path or built-in name ({', '.join(BUILTIN)}); default hyperboloid-full")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed for random ensembles")
        p.add_argument("--order", type=int, choices=(2, 4), default=None, help="finite-difference order")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "figure":
            p.add_argument("--poincare", action="store_true", help="draw in the Poincare disc")
    return parser


def _scenario(args):
    sc = load_scenario(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ScenarioError("seed must be non-negative")
        sc.seed = args.seed
    if args.order is not None:
        sc.order = args.order
    if args.command in _ONLY:
        sc.analyses = {a: a in _ONLY[args.command] for a in ANALYSES}
    if args.command == "figure" and args.poincare:
        sc.figure = dict(sc.figure, poincare=True)
    # sampled inputs are read now so that a bad path is a configuration error
    sc.surface_graph()
    return sc


def _out_dir(args, name: str) -> Path:
    if args.out is not None:
        return args.out
    return Path("minkgauss-out") / name


def _figure(sc, out: Path) -> int:
    s = sc.surface_graph()
    if isinstance(s, SampledGraph):
        print("figure: sampled surfaces cannot be swept on the circle", file=sys.stderr)
        return EXIT_FAIL
    out.mkdir(parents=True, exist_ok=True)
    try:
        domains = [essential_hull(s, int(sc.legendre["angles"]), float(sc.legendre["R"]),
                                  sc.tolerances["delta_margin"])]
    except DegenerateHullError as exc:
        print(f"figure: degenerate hull ({exc}); drawing the Gauss image only", file=sys.stderr)
        domains = []
    path = emit_klein_figure(out / "figure.svg", domains, [gradient_cloud(s, sc.chart.u_max)],
                             poincare=bool(sc.figure["poincare"]), title=sc.name)
    print(path)
    return EXIT_OK


def _selftest(seed: int, out: Path) -> int:
    results = run_criteria(seed)
    out.mkdir(parents=True, exist_ok=True)
    (out / "selftest.json").write_text(dumps({"seed": seed, "criteria": results}))
    for r in results:
        print(f"criterion {r['criterion']}: {'PASS' if r['passed'] else 'FAIL'}  {r['name']}")
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        seed = 0 if args.seed is None else args.seed
        if seed < 0:
            print("configuration error: seed must be non-negative", file=sys.stderr)
            return EXIT_CONFIG
        return _selftest(seed, _out_dir(args, "selftest"))
    try:
        sc = _scenario(args)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else Path(sc.output) if sc.output else _out_dir(args, sc.name)
    if args.command == "figure":
        return _figure(sc, out)
    report = run(sc, out)
    for name, entry in report.analyses.items():
        line = f"{name}: {entry['status']}"
        if "message" in entry:
            line += f" ({entry['message']})"
        print(line)
    print(f"report: {out / 'report.json'}")
    return report.exit_status


if __name__ == "__main__":
    sys.exit(main())

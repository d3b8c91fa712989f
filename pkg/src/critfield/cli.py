"""``critfield`` command line.

Exit codes: 0 success, 1 error (bad input, usage), 2 a property check failed.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import schemas
from .conditions import condition_report, mu_scan
from .critical import manifold_critical_points
from .experiments import offset_betti_scan, reproduce_counterexample_P4, run_perturbation_study, run_sampling_study
from .scenarios import get_scenario
from .svg import loglog_plot, scene_plot, step_plot

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

log = logging.getLogger("critfield")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _write_json(out: Path, name: str, kind: str, body: dict) -> Path:
    doc = schemas.document(kind, body)
    schemas.validate(doc, schemas.SCHEMAS[kind])
    path = out / name
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


def _write_text(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text, encoding="utf-8")
    return path


# -- commands -----------------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    sc = get_scenario(args.scenario)
    cs = manifold_critical_points(sc, n_per_chart=args.per_chart)
    rep = condition_report(sc, cs, scan=not args.no_scan)
    out = args.output_dir
    _write_json(out, "critical_points.json", "critical_set", {"scenario": sc.name, **cs.to_dict()})
    _write_json(out, "conditions.json", "condition_report", rep)
    if sc.D == 2:
        curves = [sc.charts[c].eval(sc.charts[c].grid(400)) for c in range(len(sc.charts))]
        pts = [("critical points", cs.locations)] if len(cs) else []
        _write_text(out, "scene.svg", scene_plot(curves, pts, title=sc.name))
    status = "all conditions hold" if rep["overall"] else f"failed: {', '.join(rep['failed']) or 'none found'}"
    print(f"{sc.name}: {len(cs)} critical point(s); {status}")
    return EXIT_OK if rep["overall"] else EXIT_FAIL


def cmd_sample_study(args) -> int:
    eps = args.eps
    if any(a <= b for a, b in zip(eps, eps[1:])):
        raise UsageError("--eps must be strictly decreasing")
    sc = get_scenario(args.scenario)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        study = run_sampling_study(sc, eps, tau=args.tau)
    body = study.to_dict()
    body["seed"] = args.seed
    body["warnings"] = [str(w.message) for w in caught]
    out = args.output_dir
    _write_json(out, "sampling_study.json", "sampling_study", body)
    rows = study.csv_rows()
    with open(out / "sampling_study.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    near = [(r.eps, max(p["d_M"] for p in r.near)) for r in study.runs if r.near]
    far = [(r.eps, max(p["distance"] for p in r.far)) for r in study.runs if r.far]
    series = []
    if near:
        series.append(("near: max d_M", *map(list, zip(*near)), study.near_fit))
    if far:
        series.append(("far: max d to Z(M)", *map(list, zip(*far)), study.far_fit))
    _write_text(out, "sampling_study.svg", loglog_plot(series, title=f"sampling study, {sc.name}", xlabel="eps",
                                                       ylabel="distance"))
    failed = [k for k, v in study.checks.items() if not v["pass"]]
    print(f"{sc.name}: " + ("all checks pass" if not failed else f"failed checks: {', '.join(failed)}"))
    return EXIT_OK if study.passed else EXIT_FAIL


def cmd_counterexample(args) -> int:
    rep = reproduce_counterexample_P4()
    sc = get_scenario("paper_cubic")
    cs = manifold_critical_points(sc)
    cp = cs.within((0.0, 0.0), 0.5)[0]
    scan = mu_scan(sc, cp)
    rep["scan"] = scan.to_dict()
    out = args.output_dir
    _write_json(out, "counterexample.json", "counterexample", rep)
    from .fits import ScalingFit

    fit = ScalingFit(**{k: tuple(v) if isinstance(v, list) else v for k, v in rep["fit"].items()})
    series = [("|grad| at p(x)", [r["distance_to_z0"] for r in rep["rows"]], [r["gradient_norm"] for r in rep["rows"]], fit)]
    if scan.fit is not None:
        series.append(("core-axis scan", scan.distances, scan.gradient_norms, scan.fit))
    _write_text(out, "counterexample.svg", loglog_plot(series, title="degenerate cubic", xlabel="distance to z0",
                                                       ylabel="gradient norm"))
    print("ratio |grad|/(3x^2): " + ", ".join(f"x={r['x']:g}: {r['ratio_to_3x2']:.4f}" for r in rep["rows"]))
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def cmd_perturb(args) -> int:
    study = run_perturbation_study(args.scenario, args.amp)
    out = args.output_dir
    _write_json(out, "perturbation.json", "perturbation_study", study.to_dict())
    amps = [r["amplitude"] for r in study.results]
    disp = [r["max_displacement"] for r in study.results]
    _write_text(out, "perturbation.svg", loglog_plot([("max displacement", amps, disp, None)],
                                                     title=f"perturbation, {study.scenario}",
                                                     xlabel="amplitude", ylabel="displacement"))
    for r in study.results:
        msg = "bijection" if r["bijection"] else "; ".join(w["kind"] + " at " + str(np.round(w["z"], 6).tolist())
                                                          for w in r["witnesses"])
        print(f"amp={r['amplitude']:g}: {msg}")
    return EXIT_OK if study.passed else EXIT_FAIL


def cmd_offsets(args) -> int:
    offsets = None
    if args.max_offset is not None:
        offsets = np.round(np.arange(args.grid, args.max_offset + args.grid / 2, args.grid), 12)
    scan = offset_betti_scan(args.scenario, args.grid, offsets)
    out = args.output_dir
    _write_json(out, "offsets.json", "offset_scan", scan.to_dict())
    _write_text(out, "offsets.svg", step_plot(scan.offsets, [("betti0", scan.betti0), ("betti1", scan.betti1)],
                                              title=f"offset Betti numbers, {scan.scenario}", xlabel="offset",
                                              ylabel="count", markers=scan.change_radii))
    print(f"{scan.scenario}: changes at {scan.change_radii}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------------

SCENARIO_HELP = ("scenario shorthand (circle:r, ellipse:a,b, sphere:r, ellipsoid:a,b,c, torus:R,r, paper_cubic, "
                 "paper_cubic_perturbed:a) or a scenario JSON file")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="critfield", description="Critical points of distance functions and their genericity checks.",
                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scenario_default=None):
        if scenario_default is not False:
            sp.add_argument("--scenario", default=scenario_default, required=scenario_default is None,
                            help=SCENARIO_HELP)
        sp.add_argument("--output-dir", "-o", type=Path, default=Path("."), help="directory for outputs")
        sp.add_argument("--seed", type=int, default=0, help="recorded in outputs; all algorithms are deterministic")
        sp.formatter_class = argparse.ArgumentDefaultsHelpFormatter

    a = sub.add_parser("analyze", help="critical points and conditions P1-P4")
    common(a)
    a.add_argument("--per-chart", type=int, default=2048, help="discretisation points per chart")
    a.add_argument("--no-scan", action="store_true", help="skip the mu-scan slope cross-check")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sample-study", help="critical points of farthest-point samples")
    common(s)
    s.add_argument("--eps", type=_floats, required=True, help="comma separated, decreasing")
    s.add_argument("--tau", type=_positive, default=None, help="reach override (default: scenario metadata)")
    s.set_defaults(func=cmd_sample_study)

    c = sub.add_parser("counterexample", help="gradient growth near the degenerate cubic critical point")
    common(c, scenario_default=False)
    c.set_defaults(func=cmd_counterexample)

    q = sub.add_parser("perturb", help="match critical points before and after perturbation")
    common(q)
    q.add_argument("--amp", type=_floats, required=True, help="comma separated amplitudes")
    q.set_defaults(func=cmd_perturb)

    o = sub.add_parser("offsets", help="Betti numbers of rasterised offsets of a plane curve")
    common(o)
    o.add_argument("--grid", type=_positive, default=0.01, help="grid step")
    o.add_argument("--max-offset", type=_positive, default=None, help="largest offset (default 1.5)")
    o.set_defaults(func=cmd_offsets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.output_dir.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"critfield: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, KeyError, json.JSONDecodeError, RuntimeError) as exc:
        print(f"critfield: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

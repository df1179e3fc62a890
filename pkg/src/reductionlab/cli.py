"""Command-line front end: coupling energies, scenario runs, sweeps, planning.

Exit codes: 0 ok, 2 schema/usage error, 3 quadrature convergence failure,
4 stable superposition (no trigger can fire).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

from . import __version__
from .constants import resolve_constants
from .massdist import (
    ConvergenceError,
    QuadratureConfig,
    UniformSphere,
    distribution_from_dict,
    pair_eg,
    sphere_pair_eg,
    total_mass,
)
from .reduction import RampProfile, StableSuperpositionError, Superposition, TableProfile
from .report import (
    evaluate_scenario,
    svg_line_plot,
    write_rows_csv,
)
from .scenarios import (
    ProfileSet,
    Scenario,
    build_named,
    build_one_changing,
    delayed_detector_sweep,
    required_trials,
)
from . import solidstate

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_CONVERGENCE = 3
EXIT_STABLE = 4


class SchemaError(ValueError):
    pass


def _load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise SchemaError(f"{path}: no such file")
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}")


def load_distribution(path: str):
    obj = _load_json(path)
    try:
        return distribution_from_dict(obj)
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}")


def _profile_from_dict(obj: dict, where: str):
    kind = obj.get("type")
    if kind == "constant":
        from .reduction import CONSTANT
        return CONSTANT
    if kind == "ramp":
        try:
            return RampProfile(float(obj["t_on"]), float(obj.get("t_rise", 0.0)))
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"{where}: bad ramp profile: {exc}")
    if kind == "table":
        try:
            return TableProfile(tuple((float(t), float(f)) for t, f in obj["points"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{where}: bad table profile: {exc}")
    raise SchemaError(f"{where}.type: expected constant|ramp|table, got {kind!r}")


def scenario_from_dict(obj: dict, where: str = "$") -> Scenario:
    """Scenario from its JSON description; state indices in files are 1-based."""
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    if "builder" in obj:
        try:
            return build_named(obj["builder"], **obj.get("params", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{where}.builder: {exc}")
    for key in ("name", "weights", "couplings"):
        if key not in obj:
            raise SchemaError(f"{where}.{key}: missing required field")
    try:
        sup = Superposition(tuple(float(w) for w in obj["weights"]),
                            tuple(tuple(float(e) for e in row) for row in obj["couplings"]))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}")
    n = sup.n
    overrides = {}
    for k, entry in enumerate(obj.get("profiles", [])):
        whr = f"{where}.profiles[{k}]"
        pair = entry.get("pair")
        if (not isinstance(pair, (list, tuple)) or len(pair) != 2
                or not all(isinstance(i, int) and 1 <= i <= n for i in pair)):
            raise SchemaError(f"{whr}.pair: expected two 1-based state indices <= {n}")
        i, j = pair[0] - 1, pair[1] - 1
        overrides[(i, j)] = _profile_from_dict(entry, whr)
    expected = None
    if "expected" in obj:
        expected = {}
        for k, entry in enumerate(obj["expected"]):
            whr = f"{where}.expected[{k}]"
            states = entry.get("states")
            if (not isinstance(states, (list, tuple)) or not states
                    or not all(isinstance(i, int) and 1 <= i <= n for i in states)):
                raise SchemaError(f"{whr}.states: expected 1-based state indices <= {n}")
            try:
                p = float(entry["probability"])
            except (KeyError, ValueError):
                raise SchemaError(f"{whr}.probability: missing or not a number")
            expected[tuple(sorted(i - 1 for i in states))] = \
                (p, str(entry.get("provenance", "")))
        total = sum(p for p, _ in expected.values())
        if abs(total - 1.0) > 1e-9:
            raise SchemaError(f"{where}.expected: probabilities sum to {total!r}, expected 1")
    return Scenario(str(obj["name"]), sup, ProfileSet(overrides=overrides),
                    expected, str(obj.get("notes", "")))


def load_scenario(path: str) -> tuple:
    obj = _load_json(path)
    return scenario_from_dict(obj, path), obj


# ---------------------------------------------------------------------------
# commands


def cmd_eg(args) -> int:
    consts = resolve_constants(args.constants)
    cfg = QuadratureConfig(grid_resolution=args.resolution,
                           singularity_scheme=args.scheme,
                           rel_tolerance=args.tolerance)
    d1 = load_distribution(args.dist_a)
    d2 = load_distribution(args.dist_b)
    eg = pair_eg(d1, d2, cfg, consts)
    print(f"E_G = {eg!r} J")
    print(f"rate = {eg / consts.hbar!r} 1/s")
    if isinstance(d1, UniformSphere) and isinstance(d2, UniformSphere) \
            and d1.mass == d2.mass and d1.diameter == d2.diameter:
        sep = math.dist(d1.center, d2.center)
        ana = sphere_pair_eg(d1.mass, d1.diameter, sep, consts, cfg)
        print(f"analytic sphere pair = {ana!r} J")
        if ana > 0:
            print(f"relative difference = {abs(eg - ana) / ana:.3e}")
    print(f"masses: {total_mass(d1)!r} kg vs {total_mass(d2)!r} kg")
    return EXIT_OK


def cmd_run(args) -> int:
    consts = resolve_constants(args.constants)
    if args.scenario:
        scenario, source = load_scenario(args.scenario)
    elif args.builder:
        params = {}
        for item in args.param or []:
            if "=" not in item:
                raise SchemaError(f"--param {item!r}: expected key=value")
            key, value = item.split("=", 1)
            params[key] = value
        scenario = build_named(args.builder, **params)
        source = {"builder": args.builder, "params": params}
    else:
        raise SchemaError("give a scenario file or --builder NAME")
    start = time.perf_counter()
    report = evaluate_scenario(scenario, args.method, consts,
                               seed=args.seed, trials=args.trials, source=source)
    report.wall_clock_s = time.perf_counter() - start
    payload = report.csv_bytes()
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload.decode("utf-8"))
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    return EXIT_OK


def cmd_sweep(args) -> int:
    consts = resolve_constants(args.constants)
    if args.kind == "solid-eg":
        mat = solidstate.material(args.material)
        geo = solidstate.RodGeometry(diameter=args.rod_diameter)
        if args.dx_min <= 0:
            raise SchemaError("--dx-min must be > 0 (log-spaced sweep)")
        n = args.points
        ratio = (args.dx_max / args.dx_min) ** (1.0 / (n - 1))
        dxs = [args.dx_min * ratio ** k for k in range(n)]
        curve = solidstate.solid_eg_curve(args.mass, mat, args.temperature, geo,
                                          dxs, consts)
        rows = [(dx, eg, eg / consts.hbar) for dx, eg in curve]
        header = ("displacement_m", "eg_j", "rate_per_s")
        xs = [r[0] for r in rows]
        ys = [r[2] for r in rows]
        title = f"coupling rate vs displacement ({args.mass} kg {args.material})"
        labels = ("displacement [m]", "rate [1/s]")
        log_axes = (True, True)
    elif args.kind == "delayed":
        delays = [args.dt_min + (args.dt_max - args.dt_min) * k / (args.points - 1)
                  for k in range(args.points)]
        result = delayed_detector_sweep(args.n, args.e_plateau, delays,
                                        rise=args.rise, consts=consts)
        rows = [(pt.delay, pt.p_first) for pt in result.points]
        header = ("delay_s", "p_first_detector")
        xs = [r[0] for r in rows]
        ys = [r[1] for r in rows]
        title = f"prompt-detector probability vs shift delay (n={args.n})"
        labels = ("delay [s]", "p({1})")
        log_axes = (False, False)
        print(f"fitted decay rate = {result.fitted_rate!r} 1/s")
        print(f"fitted lifetime = {result.fitted_lifetime!r} s")
    elif args.kind == "one-changing-n":
        ns = [int(v) for v in args.n_values.split(",")]
        rows = []
        for n in ns:
            scn = build_one_changing(n, args.e_plateau)
            from .reduction import cascade_distribution
            dist = cascade_distribution(scn.superposition)
            rows.append((float(n), float(dist[(0,)])))
        header = ("n_detectors", "p_first_detector")
        xs = [r[0] for r in rows]
        ys = [r[1] for r in rows]
        title = "prompt-detector probability vs detector count"
        labels = ("n detectors", "p({1})")
        log_axes = (False, False)
    else:
        raise SchemaError(f"unknown sweep kind {args.kind!r}")
    if args.out:
        write_rows_csv(args.out, header, rows)
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(repr(float(v)) for v in row))
    if args.svg:
        svg = svg_line_plot(xs, ys, title, labels[0], labels[1],
                            log_x=log_axes[0], log_y=log_axes[1])
        with open(args.svg, "w", encoding="utf-8") as fh:
            fh.write(svg)
    return EXIT_OK


def cmd_plan(args) -> int:
    plan = required_trials(args.accuracy, args.efficiency)
    print(f"successful measurements needed: {plan.n_successful}")
    print(f"total measurements at efficiency {args.efficiency}: {plan.n_total}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reductionlab",
        description="Gravitational state-reduction model: coupling energies, "
                    "trigger races, reduction probabilities.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_eg = sub.add_parser("eg", help="coupling energy of two mass distributions")
    p_eg.add_argument("dist_a", help="JSON distribution file (state 1)")
    p_eg.add_argument("dist_b", help="JSON distribution file (state 2)")
    p_eg.add_argument("--tolerance", type=float, default=1e-3)
    p_eg.add_argument("--resolution", type=int, default=16)
    p_eg.add_argument("--scheme", choices=("cell_average", "offset_midpoint"),
                      default="cell_average")
    p_eg.add_argument("--constants", default=None)
    p_eg.set_defaults(func=cmd_eg)

    p_run = sub.add_parser("run", help="evaluate a scenario")
    p_run.add_argument("scenario", nargs="?", help="JSON scenario file")
    p_run.add_argument("--builder", default=None,
                       help="all-changing | one-changing | two-detector-overlap | "
                            "continuous-medium | mutation-star | delayed")
    p_run.add_argument("--param", action="append", metavar="KEY=VALUE")
    p_run.add_argument("--method", choices=("static", "timedep", "cascade", "mc"),
                       default="cascade")
    p_run.add_argument("--trials", type=int, default=100_000)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", default=None, help="CSV output path")
    p_run.add_argument("--report", default=None, help="JSON metadata path")
    p_run.add_argument("--constants", default=None)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="parameter sweeps with CSV/SVG output")
    p_sweep.add_argument("kind", choices=("solid-eg", "delayed", "one-changing-n"))
    p_sweep.add_argument("--mass", type=float, default=0.1)
    p_sweep.add_argument("--material", default="iron")
    p_sweep.add_argument("--temperature", type=float, default=300.0)
    p_sweep.add_argument("--rod-diameter", type=float, default=0.01)
    p_sweep.add_argument("--dx-min", type=float, default=1e-13)
    p_sweep.add_argument("--dx-max", type=float, default=1e-8)
    p_sweep.add_argument("--n", type=int, default=4)
    p_sweep.add_argument("--e-plateau", type=float, default=1e-26)
    p_sweep.add_argument("--dt-min", type=float, default=0.0)
    p_sweep.add_argument("--dt-max", type=float, default=5e-8)
    p_sweep.add_argument("--rise", type=float, default=0.0)
    p_sweep.add_argument("--n-values", default="2,4,8,16,32")
    p_sweep.add_argument("--points", type=int, default=40)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--svg", default=None)
    p_sweep.add_argument("--constants", default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_plan = sub.add_parser("plan", help="measurement count for a target accuracy")
    p_plan.add_argument("--accuracy", type=float, required=True)
    p_plan.add_argument("--efficiency", type=float, default=1.0)
    p_plan.set_defaults(func=cmd_plan)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}; last estimates {exc.estimates}",
              file=sys.stderr)
        return EXIT_CONVERGENCE
    except StableSuperpositionError as exc:
        print(f"stable superposition: {exc}", file=sys.stderr)
        return EXIT_STABLE


if __name__ == "__main__":
    sys.exit(main())

# src/cli.py
"""
Command-line front end: parameter parsing, experiment dispatch, CSV and SVG output.

Exit codes: 0 success, 1 usage error, 2 numeric or domain failure, 3 failed checks.
"""
import argparse
import csv
import logging
import math
import re
import sys
from contextlib import contextmanager

import numpy as np

from . import analysis
from . import checks
from . import config
from . import dynamics
from . import legendre
from . import model
from .errors import ContactFlowError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_CHECKS = 3

CONVENTION_NAMES = {"plus": legendre.PLUS_YDX, "minus": legendre.MINUS_YDX}
VARIANT_NAMES = {
    "squared": dynamics.SQUARED,
    "cubic": dynamics.CUBIC,
    "quadratic": dynamics.QUADRATIC,
    "linear": dynamics.LINEAR,
}
PRUNE_NAMES = {"none": "none", "unstable": "unstable", "unstable-metastable": "unstable_metastable"}
SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
# a value such as -0.2,-0.05 or -1e-2 or -.5
NEGATIVE_VALUE = re.compile(r"^-\.?\d")


class UsageError(Exception):
    """Bad flag combination or unreadable input detected after parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- Formatting helpers ---

def fmt(value) -> str:
    """17 significant digits; empty for None and nan."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return ""
        return format(float(value), config.FLOAT_FORMAT)
    return str(value)


@contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


def write_csv(path: str | None, header: list[str], rows) -> int:
    with _output(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow([fmt(v) for v in row])
            count += 1
    logger.info("Output: wrote %d rows to %s", count, path or "stdout")
    return count


def write_svg(path: str, polylines: list[np.ndarray]) -> None:
    """One polyline per array of (u, v) points, v pointing up, viewBox fitted to the data."""
    finite = [p[np.all(np.isfinite(p), axis=1)] for p in polylines]
    finite = [p for p in finite if len(p)]
    if not finite:
        raise UsageError("Nothing finite to draw")
    stacked = np.vstack(finite)
    u_min, v_min = stacked.min(axis=0)
    u_max, v_max = stacked.max(axis=0)
    width = max(u_max - u_min, 1e-12)
    height = max(v_max - v_min, 1e-12)
    pad = 0.02 * max(width, height)
    view = (u_min - pad, -v_max - pad, width + 2 * pad, height + 2 * pad)
    stroke = 0.003 * max(width, height)
    lines = [
        '<svg xmlns="http://www.w3.org/2000/svg" viewBox="' + " ".join(f"{v:.9g}" for v in view) + '">',
    ]
    for i, points in enumerate(finite):
        coords = " ".join(f"{u:.9g},{-v:.9g}" for u, v in points)
        color = SVG_COLORS[i % len(SVG_COLORS)]
        lines.append(f'  <polyline fill="none" stroke="{color}" stroke-width="{stroke:.9g}" points="{coords}"/>')
    lines.append("</svg>")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    logger.info("Output: wrote %d polylines to %s", len(finite), path)


def parse_grid(text: str) -> np.ndarray:
    """'start:stop:num' (inclusive linspace) or a comma-separated list of numbers."""
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            n = int(num)
            if n < 1:
                raise ValueError
            return np.linspace(float(start), float(stop), n)
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid '{text}' (use start:stop:num or a comma list)") from None
    if not values:
        raise argparse.ArgumentTypeError("empty grid")
    return np.array(values)


def parse_int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer list '{text}'") from None


# --- Parameters ---

def _add_params(parser: argparse.ArgumentParser, with_field: bool) -> None:
    group = parser.add_argument_group("parameters", "dimensionless --j0bar/--x, or raw --beta/--j0/--field")
    group.add_argument("--j0bar", type=float, help="dimensionless coupling beta*J0")
    if with_field:
        group.add_argument("--x", type=float, help="dimensionless field beta*H")
    group.add_argument("--beta", type=float, help="inverse temperature")
    group.add_argument("--j0", type=float, help="coupling J0")
    group.add_argument("--field", type=float, help="external field H")


def resolve_params(args, with_field: bool) -> tuple[model.ModelParams, float | None]:
    raw = [args.beta, args.j0, args.field]
    dimensionless = [args.j0bar, getattr(args, "x", None)]
    if any(v is not None for v in dimensionless) and any(v is not None for v in raw):
        raise UsageError("--j0bar/--x and --beta/--j0/--field are mutually exclusive")
    if args.j0bar is not None:
        params = model.ModelParams(j0bar=args.j0bar)
        x = getattr(args, "x", None)
    elif args.beta is not None and args.j0 is not None:
        params = model.ModelParams.from_raw(args.beta, args.j0, args.field)
        x = params.field_x()
    else:
        raise UsageError("give --j0bar, or both --beta and --j0")
    if with_field and x is None:
        raise UsageError("a field is required (--x, or --field with --beta/--j0)")
    return params, x


def _psi0(args) -> dynamics.Psi0:
    kind = args.psi0 or ("exponential" if args.psi0_rate is not None else "constant")
    return dynamics.Psi0(kind, args.psi0_const, args.psi0_rate or 0.0)


# --- Subcommands ---

def cmd_branches(args) -> int:
    params, x = resolve_params(args, with_field=True)
    roots = model.solve_branches(params, x)
    write_csv(
        args.out,
        ["mu", "y_star", "z", "stability", "degenerate"],
        ((r.mu, r.y_star, r.z, r.stability, r.degenerate) for r in roots),
    )
    return EXIT_OK


def cmd_curve(args) -> int:
    params, _ = resolve_params(args, with_field=False)
    if not args.n >= 2:
        raise UsageError("--n must be at least 2")
    grid = np.linspace(args.ymin, args.ymax, args.n)
    convention = CONVENTION_NAMES[args.convention]
    curve = legendre.sample_curve(params, grid, convention)
    write_csv(
        args.out,
        ["x", "y", "z", "j0bar", "convention"],
        ((x, y, z, params.j0bar, convention) for x, y, z in zip(curve.x, curve.y, curve.z)),
    )
    return EXIT_OK


def read_curve(path: str) -> legendre.LegendreCurve:
    """Rebuilds a curve written by `curve`; the sampling parameter is the magnetization."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from None
    if not rows:
        raise UsageError(f"{path} holds no samples")
    try:
        x = [float(r["x"]) for r in rows]
        y = [float(r["y"]) for r in rows]
        z = [float(r["z"]) for r in rows]
        couplings = {r["j0bar"] for r in rows}
        conventions = {r["convention"] for r in rows}
    except (KeyError, ValueError, TypeError) as e:
        raise UsageError(f"{path} is not a curve file ({e})") from None
    if len(couplings) != 1 or len(conventions) != 1:
        raise UsageError(f"{path} mixes several couplings or conventions")
    convention = conventions.pop()
    if convention not in legendre.CONVENTIONS:
        raise UsageError(f"{path} has an unknown convention '{convention}'")
    params = model.ModelParams(j0bar=float(couplings.pop()))
    magnetization = np.array(y) if convention == legendre.PLUS_YDX else -np.array(y)
    return legendre.LegendreCurve(x, y, z, convention, params, magnetization)


def curve_branches(curve: legendre.LegendreCurve, prune: str) -> list[legendre.Branch]:
    """Split and prune a curve of either convention; MinusYdx branches carry the negated y."""
    if curve.convention == legendre.PLUS_YDX:
        return legendre.prune(legendre.split_branches(curve, curve.params), prune)
    plus = legendre.LegendreCurve(curve.x, curve.parameter, curve.z, legendre.PLUS_YDX, curve.params, curve.parameter)
    branches = legendre.prune(legendre.split_branches(plus, curve.params), prune)
    return [legendre.Branch(b.mu, b.interval, b.x, -b.y, b.z, b.role, b.single_valued) for b in branches]


def cmd_project(args) -> int:
    curve = read_curve(args.input)
    u, v = legendre.PLANES[args.plane]
    prune = PRUNE_NAMES[args.prune]
    if prune == "none":
        polylines = legendre.project(curve, args.plane)
        labels = [("", "Curve")]
    else:
        branches = curve_branches(curve, prune)
        polylines = legendre.project(branches, args.plane)
        labels = [(b.mu, b.interval) for b in branches]

    def rows():
        for (mu, interval), points in zip(labels, polylines):
            for a, b in points:
                yield mu, interval, a, b

    write_csv(args.out, ["mu", "interval", u, v], rows())
    if args.svg:
        write_svg(args.svg, polylines)
    return EXIT_OK


def cmd_flow(args) -> int:
    params, x = resolve_params(args, with_field=True)
    variant = dynamics.HamiltonianVariant(VARIANT_NAMES[args.variant], _psi0(args))
    y0 = args.y0 if args.y0 is not None else model.solve_branches(params, x)[0].y_star
    settings = dynamics.IntegratorConfig(step=args.dt, t_max=args.t_max)
    trajectory = dynamics.integrate(variant, params, dynamics.ContactState(x, y0, args.z0), settings=settings)
    regions, values, rates = dynamics.lyapunov_series(variant, params, trajectory)
    write_csv(
        args.out,
        ["t", "x", "y", "z", "region", "V", "dVdt"],
        zip(trajectory.t, trajectory.x, trajectory.y, trajectory.z, regions, values, rates),
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    params, _ = resolve_params(args, with_field=False)
    x_min = args.x_min if args.x_min is not None else -args.x_max
    try:
        sweep = analysis.hysteresis_sweep(params, x_min, args.x_max, args.steps)
    except ValueError as e:
        if isinstance(e, ContactFlowError):
            raise
        raise UsageError(str(e)) from None
    write_csv(
        args.out,
        ["step", "direction", "x", "y", "z"],
        ((i, d, x, y, z) for i, (d, x, y, z) in enumerate(zip(sweep.directions, sweep.schedule, sweep.y_path, sweep.z_path))),
    )
    logger.info("Sweep: jumps at %s, loop area %s", [fmt(j) for j in sweep.jump_points], fmt(sweep.loop_area))
    return EXIT_OK


def cmd_basin(args) -> int:
    params, _ = resolve_params(args, with_field=False)
    kind = VARIANT_NAMES[args.variant]
    if kind == dynamics.LINEAR:
        raise UsageError("basin maps need a three-branch variant")
    if args.anchor not in (1, 2, 3):
        raise UsageError("--anchor must be 1, 2 or 3")
    variant = dynamics.HamiltonianVariant(kind, _psi0(args))
    amap = analysis.attractor_map(variant, params, args.x_grid, args.offsets, anchor=args.anchor)
    write_csv(
        args.out,
        ["x", "offset", "y0", "z0", "y", "z", "mu", "gap", "status"],
        ((p.x, p.offset, p.y0, p.z0, p.y, p.z, p.mu, p.gap, p.status) for p in amap.limits),
    )
    if args.svg:
        polylines = []
        for off in amap.offsets:
            side = sorted((p for p in amap.settled() if p.offset == off), key=lambda p: p.x)
            polylines.append(np.array([(p.x, p.z) for p in side]).reshape(-1, 2))
        write_svg(args.svg, polylines)
    return EXIT_OK


def cmd_audit(args) -> int:
    if not args.n_list:
        raise UsageError("--n-list needs at least one N")
    try:
        rows = analysis.saddle_point_audit(args.beta, args.j0, args.field, args.n_list)
    except ValueError as e:
        if isinstance(e, ContactFlowError):
            raise
        raise UsageError(str(e)) from None
    write_csv(args.out, ["n", "exact", "saddle", "gap"], ((r.n, r.exact, r.saddle, r.gap) for r in rows))
    return EXIT_OK


def cmd_toy(args) -> int:
    xs = args.x_grid
    y_plus, y_minus, z_plus, z_minus = legendre.toy_cusp_curve(xs)
    write_csv(
        args.out,
        ["x", "y_plus", "y_minus", "z_plus", "z_minus"],
        zip(xs, y_plus, y_minus, z_plus, z_minus),
    )
    return EXIT_OK


def cmd_generate(args) -> int:
    f, df = legendre.GENERATORS[args.generator]
    convention = CONVENTION_NAMES[args.convention]
    curve = legendre.generated_curve(f, df, args.delta_grid, convention)
    write_csv(
        args.out,
        ["delta", "x", "y", "z", "convention"],
        ((d, x, y, z, convention) for d, x, y, z in zip(curve.parameter, curve.x, curve.y, curve.z)),
    )
    if args.svg:
        write_svg(args.svg, legendre.project(curve, args.plane))
    return EXIT_OK


def cmd_field(args) -> int:
    params, x = resolve_params(args, with_field=True)
    variant = dynamics.HamiltonianVariant(VARIANT_NAMES[args.variant], _psi0(args))
    pf = analysis.projected_field(variant, params, x, args.y_grid, args.z_grid)
    write_csv(args.out, ["y", "z", "ydot", "zdot"], pf.rows())
    if args.svg:
        # unit arrows scaled to a fraction of the mesh spacing
        length = 0.4 * min(np.min(np.diff(pf.y_grid)), np.min(np.diff(pf.z_grid)))
        speed = np.where(pf.speed > 0, pf.speed, 1.0)
        polylines = []
        for (y, z, ydot, zdot), s in zip(pf.rows(), speed.ravel()):
            polylines.append(np.array([(y, z), (y + length * ydot / s, z + length * zdot / s)]))
        for _, psi in pf.fixed.values():
            polylines.append(np.array([(pf.y_grid[0], psi), (pf.y_grid[-1], psi)]))
        write_svg(args.svg, polylines)
    return EXIT_OK


def cmd_check(args) -> int:
    results = checks.run_checks(args.level)
    write_csv(None, ["name", "passed", "margin", "detail"], ((r.name, r.passed, r.margin, r.detail) for r in results))
    failures = [r for r in results if not r.passed]
    if failures:
        for r in failures:
            print(f"FAILED {r.name}: {r.detail}", file=sys.stderr)
        return EXIT_CHECKS
    return EXIT_OK


# --- Parser ---

def _add_psi0(parser: argparse.ArgumentParser, default: str | None = None) -> None:
    if default is None:
        text = "weight psi0(x) of the Hamiltonian (default constant, or exponential with --psi0-rate)"
    else:
        text = f"weight psi0(x) of the Hamiltonian (default {default}; constant weight via --psi0 constant)"
    parser.add_argument("--psi0", choices=dynamics.PSI0_KINDS, default=default, help=text)
    parser.add_argument("--psi0-const", type=float, default=1.0, help="scale of psi0 (default 1)")
    parser.add_argument("--psi0-rate", type=float, default=None, help="rate of an exponential psi0")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="contactflow", description="Contact-geometric thermodynamics of the Husimi-Temperley model.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("branches", help="equilibrium roots at one field")
    _add_params(p, with_field=True)
    p.add_argument("--format", choices=["csv"], default="csv")
    p.add_argument("--out", default=None, help="output CSV (default stdout)")
    p.set_defaults(handler=cmd_branches)

    p = sub.add_parser("curve", help="sample the Legendre curve")
    _add_params(p, with_field=False)
    p.add_argument("--ymin", type=float, default=config.DEFAULT_Y_MIN)
    p.add_argument("--ymax", type=float, default=config.DEFAULT_Y_MAX)
    p.add_argument("--n", type=int, default=config.DEFAULT_Y_POINTS)
    p.add_argument("--convention", choices=sorted(CONVENTION_NAMES), default="plus")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_curve)

    p = sub.add_parser("project", help="project a curve file to a plane")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--plane", choices=sorted(legendre.PLANES), required=True)
    p.add_argument("--prune", choices=list(PRUNE_NAMES), default="none")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(handler=cmd_project)

    p = sub.add_parser("flow", help="integrate one trajectory of a stability Hamiltonian")
    p.add_argument("--variant", choices=list(VARIANT_NAMES), required=True)
    _add_params(p, with_field=True)
    p.add_argument("--z0", type=float, required=True)
    p.add_argument("--y0", type=float, default=None, help="initial y (default y* of the most stable branch)")
    _add_psi0(p)
    p.add_argument("--dt", type=float, default=config.DEFAULT_STEP)
    p.add_argument("--t-max", type=float, default=config.DEFAULT_T_MAX)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_flow)

    p = sub.add_parser("sweep", help="quasi-static hysteresis sweep")
    _add_params(p, with_field=False)
    p.add_argument("--x-max", type=float, required=True)
    p.add_argument("--x-min", type=float, default=None, help="default -x_max")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("basin", help="attractor map over a grid of fields and offsets")
    p.add_argument("--variant", choices=list(VARIANT_NAMES), required=True)
    _add_params(p, with_field=False)
    p.add_argument("--x-grid", type=parse_grid, required=True)
    p.add_argument("--offsets", type=parse_grid, required=True)
    p.add_argument("--anchor", type=int, default=2, help="branch the offsets are measured from")
    _add_psi0(p, default="balanced")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(handler=cmd_basin)

    p = sub.add_parser("audit", help="exact finite-N free energy against the saddle point")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--j0", type=float, required=True)
    p.add_argument("--field", type=float, required=True)
    p.add_argument("--n-list", type=parse_int_list, required=True)
    p.add_argument("--out", default=None, help="output CSV (default stdout)")
    p.set_defaults(handler=cmd_audit)

    p = sub.add_parser("toy", help="closed-form cusp of dz - y dx")
    p.add_argument("--x-grid", type=parse_grid, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_toy)

    p = sub.add_parser("generate", help="Legendre curve generated by f(delta) through z = y^2 - f(delta)")
    p.add_argument("--generator", choices=sorted(legendre.GENERATORS), required=True)
    p.add_argument("--delta-grid", type=parse_grid, required=True)
    p.add_argument("--convention", choices=sorted(CONVENTION_NAMES), default="minus")
    p.add_argument("--plane", choices=sorted(legendre.PLANES), default="xz", help="plane of the --svg drawing")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("field", help="contact vector field projected to the (y, z)-plane at one field")
    p.add_argument("--variant", choices=list(VARIANT_NAMES), required=True)
    _add_params(p, with_field=True)
    p.add_argument("--y-grid", type=parse_grid, required=True)
    p.add_argument("--z-grid", type=parse_grid, required=True)
    _add_psi0(p)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(handler=cmd_field)

    p = sub.add_parser("check", help="run the invariant check suite")
    p.add_argument("--level", choices=checks.LEVELS, default="quick")
    p.set_defaults(handler=cmd_check)
    return parser


def _join_negative_values(argv: list[str]) -> list[str]:
    """Rewrites '--flag -0.5:0.5:41' as '--flag=-0.5:0.5:41'."""
    joined = []
    i = 0
    while i < len(argv):
        token = argv[i]
        if (
            token.startswith("--") and "=" not in token and i + 1 < len(argv)
            and NEGATIVE_VALUE.match(argv[i + 1])
        ):
            joined.append(f"{token}={argv[i + 1]}")
            i += 2
            continue
        joined.append(token)
        i += 1
    return joined


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_join_negative_values(argv))
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    config.configure_logging()
    try:
        return args.handler(args)
    except UsageError as e:
        print(f"contactflow {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ContactFlowError as e:
        print(f"contactflow {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

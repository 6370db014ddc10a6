# src/checks.py
"""
Invariant check suite behind `check --level quick|full`.

Every check returns an analysis.CheckResult; a failed check never raises.
"""
import logging
import math

import numpy as np

from . import analysis
from . import config
from . import dynamics
from . import legendre
from . import model
from .analysis import CheckResult
from .errors import ContactFlowError, PhaseError

logger = logging.getLogger(__name__)

LEVELS = ("quick", "full")
COUPLINGS = (0.6, 1.0, 2.0)


def _result(name: str, worst: float, limit: float, detail: str) -> CheckResult:
    return CheckResult(name, bool(worst < limit), limit - worst, detail)


# --- model ---

def check_root_residuals(quick: bool) -> CheckResult:
    worst_residual = 0.0
    worst_inverse = 0.0
    for j in COUPLINGS:
        params = model.ModelParams(j0bar=j)
        for x in np.linspace(-1.5, 1.5, 201 if quick else 1001):
            for root in model.solve_branches(params, float(x)):
                worst_residual = max(worst_residual, abs(model.self_consistency_residual(params, x, root.y_star)))
                worst_inverse = max(worst_inverse, abs(model.x_of_y(params, root.y_star) - x))
    passed = worst_residual < 1e-12 and worst_inverse < 1e-10
    return CheckResult(
        "root_residuals", passed, min(1e-12 - worst_residual, 1e-10 - worst_inverse),
        f"max residual {worst_residual:.2e}, max |x(y*) - x| {worst_inverse:.2e}",
    )


def check_root_counts(quick: bool) -> CheckResult:
    misses = 0
    for j in COUPLINGS:
        params = model.ModelParams(j0bar=j)
        x_sp = model.spinodal_field(params)
        for x in np.linspace(-2.0 * x_sp, 2.0 * x_sp, 250 if quick else 1000):
            expected = 3 if abs(x) < x_sp else 1
            if abs(abs(x) - x_sp) > 1e-9 and len(model.solve_branches(params, float(x))) != expected:
                misses += 1
    return CheckResult("root_counts", misses == 0, float(-misses), f"{misses} x values with the wrong root count")


def check_antisymmetry_and_labels(quick: bool) -> CheckResult:
    problems = []
    params = model.ModelParams(j0bar=1.0)
    x_sp = model.spinodal_field(params)
    for x in np.linspace(0.0, 1.5, 101 if quick else 501)[1:]:
        plus = model.solve_branches(params, float(x))
        minus = model.solve_branches(params, float(-x))
        for a, b in zip(plus, minus):
            if a.y_star != -b.y_star or a.z != b.z or a.mu != b.mu:
                problems.append(f"x={x:.4g} mu={a.mu}")
        if x < x_sp and not (plus[0].y_star > 0 and minus[0].y_star < 0):
            problems.append(f"x={x:.4g} arg-min label")
    return CheckResult("antisymmetry_and_labels", not problems, float(-len(problems)), "; ".join(problems[:5]) or "exact mirror images")


def check_critical_point(quick: bool) -> CheckResult:
    lo, hi = 0.3, 0.8
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if len(model.solve_branches(model.ModelParams(j0bar=mid), 0.0)) == 3:
            hi = mid
        else:
            lo = mid
    error = abs(0.5 * (lo + hi) - 0.5)
    return _result("critical_point", error, 1e-9, f"count transition at j0bar={0.5 * (lo + hi):.12f}")


def check_saddle_audit(quick: bool) -> CheckResult:
    misses = []
    for beta in (0.4, 1.0):
        rows = analysis.saddle_point_audit(beta, 1.0, 0.1, [64, 256, 1024] if quick else [64, 256, 1024, 4096])
        gaps = [r.gap for r in rows]
        if not all(b < a for a, b in zip(gaps, gaps[1:])):
            misses.append(f"beta={beta}: {gaps}")
    return CheckResult("saddle_audit", not misses, float(-len(misses)), "; ".join(misses) or "gap strictly decreasing")


# --- legendre ---

def check_contact_residual(quick: bool) -> CheckResult:
    worst = 0.0
    ys = np.linspace(-0.9999, 0.9999, 2000 if quick else 10000)
    for j in COUPLINGS:
        worst = max(worst, float(np.max(np.abs(legendre.contact_residual(model.ModelParams(j0bar=j), ys)))))
    return _result("contact_residual", worst, 1e-10, f"max |dz/dy + y dx/dy| = {worst:.2e}")


def discrete_order(params: model.ModelParams, n: int = 201, lo: float = -0.9, hi: float = 0.9) -> float:
    """Observed order of the discrete contact residual over two grid halvings."""
    errors = []
    for k in range(3):
        curve = legendre.sample_curve(params, np.linspace(lo, hi, (n - 1) * 2 ** k + 1))
        errors.append(float(np.max(legendre.discrete_contact_residual(curve))))
    return min(math.log2(errors[0] / errors[1]), math.log2(errors[1] / errors[2]))


def check_discrete_order(quick: bool) -> CheckResult:
    order = min(discrete_order(model.ModelParams(j0bar=j)) for j in COUPLINGS)
    return CheckResult("discrete_residual_order", order >= 1.9, order - 1.9, f"observed order {order:.3f}")


def check_discrete_residual_bound(quick: bool) -> CheckResult:
    worst = 0.0
    for j in COUPLINGS:
        residual, steps = legendre.interior_contact_residual(legendre.sample_curve(model.ModelParams(j0bar=j)))
        worst = max(worst, float(np.max(residual / (config.RESIDUAL_STEP_FACTOR * steps ** 2))))
    return _result(
        "discrete_residual_bound", worst, 1.0,
        f"max residual / (10 h^2) = {worst:.3f} on |y| <= {config.RESIDUAL_INTERIOR_Y}",
    )


def check_singularities(quick: bool) -> CheckResult:
    params = model.ModelParams(j0bar=1.0)
    grid = legendre.default_y_grid()
    found = legendre.projected_singularities(params, grid)
    expected = model.spinodal_points(params)
    step = grid[1] - grid[0]
    if len(found) != 2:
        return CheckResult("projected_singularities", False, -1.0, f"found {found}")
    error = max(abs(a - b) for a, b in zip(found, expected))
    return _result("projected_singularities", error, step, f"found {found}")


def check_branches(quick: bool) -> CheckResult:
    params = model.ModelParams(j0bar=1.0)
    curve = legendre.sample_curve(params)
    branches = legendre.split_branches(curve, params)
    problems = []
    for label, interval in zip((legendre.I_MINUS, legendre.I_PLUS), legendre.intervals(params)):
        by_mu = {b.mu: b for b in branches if b.interval == label}
        xs = interval.lo + (interval.hi - interval.lo) * np.linspace(0.05, 0.95, 25)
        z = [np.interp(xs, by_mu[mu].x, by_mu[mu].z) for mu in (1, 2, 3)]
        exact = np.array([[r.z for r in model.solve_branches(params, float(x))] for x in xs]).T
        if not (np.all(z[0] < z[1]) and np.all(z[1] < z[2])):
            problems.append(f"ordering on {label}")
        elif np.max(np.abs(np.array(z) - exact)) > 1e-5:
            problems.append(f"branch values on {label} off by {np.max(np.abs(np.array(z) - exact)):.2e}")
    for mode in legendre.PRUNE_MODES:
        once = legendre.prune(branches, mode)
        if [(b.mu, b.interval) for b in legendre.prune(once, mode)] != [(b.mu, b.interval) for b in once]:
            problems.append(f"prune {mode} not idempotent")
    plus = {b.mu: b for b in branches if b.interval == legendre.I_PLUS}
    minus = {b.mu: b for b in branches if b.interval == legendre.I_MINUS}
    for mu in (2, 3):
        # samples within rounding of x = 0 may land on either side
        left = np.abs(minus[mu].x) > 1e-9
        right = np.abs(plus[mu].x) > 1e-9
        mirror_x = -minus[mu].x[left][::-1]
        if len(mirror_x) != right.sum() or not np.allclose(mirror_x, plus[mu].x[right], atol=1e-10):
            problems.append(f"reflection mu={mu} x")
        elif not (
            np.allclose(-minus[mu].y[left][::-1], plus[mu].y[right], atol=1e-9)
            and np.allclose(minus[mu].z[left][::-1], plus[mu].z[right], atol=1e-9)
        ):
            problems.append(f"reflection mu={mu}")
    return CheckResult("branch_structure", not problems, float(-len(problems)), "; ".join(problems) or "ordered, idempotent, symmetric")


def check_toy(quick: bool) -> CheckResult:
    y_plus, y_minus, z_plus, z_minus = legendre.toy_cusp_curve(-0.125)
    xs = np.linspace(-0.125, 2.0, 2001)[1:]
    r_plus, r_minus = legendre.toy_contact_residual(xs)
    worst = float(max(np.max(np.abs(r_plus)), np.max(np.abs(r_minus))))
    passed = y_plus == y_minus == 0.0625 and z_plus == z_minus and worst < 1e-10
    return CheckResult("toy_cusp", passed, 1e-10 - worst, f"joint y={y_plus}, max residual {worst:.2e}")


def check_generated_curves(quick: bool) -> CheckResult:
    deltas = np.linspace(-1.0, 1.0, 2001)
    worst = 0.0
    for name, (f, df) in legendre.GENERATORS.items():
        for convention in legendre.CONVENTIONS:
            curve = legendre.generated_curve(f, df, deltas, convention)
            worst = max(worst, float(np.max(legendre.discrete_contact_residual(curve))))
    # log-cosh under dz + y dx is the equilibrium curve at j0bar = 1
    f, df = legendre.GENERATORS["logcosh"]
    curve = legendre.generated_curve(f, df, deltas, legendre.PLUS_YDX)
    params = model.ModelParams(j0bar=1.0)
    drift = float(np.max(np.abs(curve.z - model.pseudo_free_energy(params, curve.x, curve.y))))
    drift = max(drift, float(np.max(np.abs(curve.x - model.x_of_y(params, curve.y)))))
    passed = worst < 1e-5 and drift < 1e-12
    return CheckResult(
        "generated_curves", passed, 1e-5 - worst,
        f"max discrete residual {worst:.2e}, log-cosh vs equilibrium curve {drift:.1e}",
    )


# --- dynamics ---

def linear_rk4_order(c: float = 1.0, d: float = 2.0, t_end: float = 2.0, step: float = 0.05) -> float:
    errors = []
    for h in (step, step / 2):
        y, z = dynamics.rk4_linear(c, d, 0.3, 1.0, h, t_end)
        ey, ez = dynamics.linearized_solution(c, d, 0.3, 1.0, t_end)
        errors.append(max(abs(y - ey), abs(z - ez)))
    return math.log2(errors[0] / errors[1])


def check_linear_order(quick: bool) -> CheckResult:
    order = linear_rk4_order()
    return CheckResult("linearized_rk4_order", order >= 3.9, order - 3.9, f"observed order {order:.3f}")


def check_generic_agreement(quick: bool) -> CheckResult:
    params = model.ModelParams(j0bar=1.0)
    rng = np.random.default_rng(7)
    worst = 0.0
    n = 100 if quick else 1000
    for kind in (dynamics.SQUARED, dynamics.CUBIC, dynamics.QUADRATIC):
        variant = dynamics.HamiltonianVariant(kind, dynamics.Psi0("exponential", 1.0, 0.5))
        for x in rng.uniform(0.05, 0.5, 5):
            h = dynamics.variant_hamiltonian(variant, params, float(x))
            for y, z in zip(rng.uniform(-1, 1, n // 15 + 1), rng.uniform(-1.5, -0.5, n // 15 + 1)):
                state = dynamics.ContactState(float(x), float(y), float(z))
                a = dynamics.vector_field(variant, params, state)
                b = dynamics.generic_vector_field(h, dynamics.PLUS_YDX, state)
                worst = max(worst, max(abs(p - q) for p, q in zip(a, b)))
    return _result("generic_agreement", worst, 1e-12, f"max component difference {worst:.2e}")


def theorem_checks(quick: bool) -> list[CheckResult]:
    params = model.ModelParams(j0bar=1.0)
    kinds = (dynamics.SQUARED,) if quick else (dynamics.SQUARED, dynamics.CUBIC, dynamics.QUADRATIC)
    results = []
    for kind in kinds:
        report = analysis.verify_theorems(params, dynamics.HamiltonianVariant(kind), budget=36 if quick else 400)
        results.extend(CheckResult(f"{kind.lower()}_{c.name}", c.passed, c.margin, c.detail) for c in report.checks)
    return results


# --- analysis ---

def check_sweep(quick: bool) -> list[CheckResult]:
    params = model.ModelParams(j0bar=1.0)
    x_sp = model.spinodal_field(params)
    steps = 61 if quick else 121
    sweep = analysis.hysteresis_sweep(params, -0.6, 0.6, steps)
    grid = sweep.schedule[1] - sweep.schedule[0]
    jumps = sorted(sweep.jump_points)
    jump_ok = len(jumps) == 2 and abs(jumps[0] + x_sp) <= grid and abs(jumps[1] - x_sp) <= grid
    outside = {}
    worst = 0.0
    for x, y, direction in zip(sweep.schedule, sweep.y_path, sweep.directions):
        if abs(x) > x_sp:
            key = round(float(x), 9)
            if key in outside and outside[key][1] != direction:
                worst = max(worst, abs(outside[key][0] - y))
            outside.setdefault(key, (y, direction))
    try:
        analysis.hysteresis_sweep(model.ModelParams(j0bar=0.4), -0.6, 0.6, steps)
        high_t = False
    except PhaseError:
        high_t = True
    return [
        CheckResult("hysteresis_jumps", jump_ok, grid - max([abs(abs(j) - x_sp) for j in jumps] or [math.inf]), f"jumps at {jumps}, x_sp={x_sp:.6f}"),
        CheckResult("hysteresis_area", sweep.loop_area > 0, sweep.loop_area, f"loop area {sweep.loop_area:.6g}"),
        _result("sweep_reversibility", worst, 1e-8, f"max |y_up - y_down| outside the loop {worst:.2e}"),
        CheckResult("sweep_phase_error", high_t, 0.0, "PhaseError at j0bar=0.4" if high_t else "no PhaseError at j0bar=0.4"),
    ]


def check_attractor(quick: bool) -> list[CheckResult]:
    params = model.ModelParams(j0bar=1.0)
    variant = dynamics.HamiltonianVariant(dynamics.SQUARED, dynamics.Psi0("balanced"))
    xs = np.linspace(-0.5, 0.5, 21 if quick else 41)
    amap = analysis.attractor_map(variant, params, xs, [-0.2, -0.05])
    settled = amap.settled()
    on_psi1 = all(p.mu == 1 for p in settled)
    gap = amap.max_gap()
    y0 = model.solve_branches(params, 0.0)[0].y_star
    jump = analysis.kink_jump(amap)
    return [
        CheckResult(
            "attractor_cusp", on_psi1 and gap < 1e-6 and len(settled) == 2 * (len(xs) - 1), 1e-6 - gap,
            f"{len(settled)} settled, all on psi_1: {on_psi1}, max gap {gap:.2e}",
        ),
        _result("attractor_kink", abs(jump - 2.0 * y0), 2e-3 if quick else 1e-3, f"jump {jump:.6f} vs 2 y*(0+) = {2 * y0:.6f}"),
    ]


CHECKS = [
    check_root_residuals,
    check_root_counts,
    check_antisymmetry_and_labels,
    check_critical_point,
    check_saddle_audit,
    check_contact_residual,
    check_discrete_order,
    check_discrete_residual_bound,
    check_singularities,
    check_branches,
    check_toy,
    check_generated_curves,
    check_linear_order,
    check_generic_agreement,
    theorem_checks,
    check_sweep,
    check_attractor,
]


def run_checks(level: str = "quick") -> list[CheckResult]:
    if level not in LEVELS:
        raise ValueError(f"Unknown check level '{level}'. Use one of {LEVELS}")
    quick = level == "quick"
    results = []
    for check in CHECKS:
        try:
            outcome = check(quick)
        except ContactFlowError as e:
            outcome = CheckResult(check.__name__.removeprefix("check_"), False, -math.inf, f"raised {type(e).__name__}: {e}")
        results.extend(outcome if isinstance(outcome, list) else [outcome])
    for r in results:
        logger.info("Check: %-32s %s (margin %.3g)", r.name, "pass" if r.passed else "FAIL", r.margin)
    return results

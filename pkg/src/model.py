# src/model.py
"""
Dimensionless Husimi-Temperley thermodynamics.

All core functions take the dimensionless coupling j0bar = beta*J0 and the
dimensionless field x = beta*H. Raw (beta, J0, H) values are converted once,
through ModelParams.from_raw.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, logsumexp

from . import config
from .errors import ConvergenceError, DomainError

logger = logging.getLogger(__name__)

# --- Labels ---
MOST_STABLE = "MostStable"
METASTABLE = "Metastable"
UNSTABLE = "Unstable"

HIGH_TEMPERATURE = "HighTemperature"
CRITICAL = "Critical"
LOW_TEMPERATURE = "LowTemperature"

MAX_EXACT_N = 1_000_000
SPINODAL_X_TOL = 1e-14
# largest float below 1; tanh saturates to 1.0 for |2 j y + x| above about 19
Y_EDGE = float(np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class ModelParams:
    """Coupling j0bar > 0, optionally with the raw inputs it was derived from."""
    j0bar: float
    beta: float | None = None
    j0: float | None = None
    field: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.j0bar) or self.j0bar <= 0:
            raise DomainError(f"j0bar must be a positive finite number, got {self.j0bar}")
        if self.beta is not None and self.beta <= 0:
            raise DomainError(f"beta must be positive, got {self.beta}")
        if self.beta is not None and self.j0 is not None:
            if not math.isclose(self.j0bar, self.beta * self.j0, rel_tol=1e-12, abs_tol=0.0):
                raise DomainError(
                    f"j0bar={self.j0bar} does not match beta*j0={self.beta * self.j0}"
                )

    @classmethod
    def from_raw(cls, beta: float, j0: float, field: float | None = None) -> "ModelParams":
        return cls(j0bar=beta * j0, beta=beta, j0=j0, field=field)

    def field_x(self) -> float | None:
        """Dimensionless field beta*H, when raw inputs were given."""
        if self.beta is None or self.field is None:
            return None
        return self.beta * self.field


@dataclass(frozen=True)
class BranchRoot:
    mu: int
    y_star: float
    z: float
    stability: str
    degenerate: bool = False


def ln2cosh(u):
    """ln(2 cosh u) without overflow: |u| + log1p(exp(-2|u|))."""
    a = np.abs(u)
    return a + np.log1p(np.exp(-2.0 * a))


def _check_open_unit(y) -> np.ndarray:
    arr = np.asarray(y, dtype=float)
    if not np.all(np.abs(arr) < 1.0):
        raise DomainError("y must lie strictly inside (-1, 1)")
    return arr


# --- Pseudo-free energy and derivatives ---

def pseudo_free_energy(params: ModelParams, x, y):
    j = params.j0bar
    return j * y * y - ln2cosh(2.0 * j * y + x)


def dpsi_dx(params: ModelParams, x, y):
    return -np.tanh(2.0 * params.j0bar * y + x)


def dpsi_dy(params: ModelParams, x, y):
    j = params.j0bar
    return 2.0 * j * (y - np.tanh(2.0 * j * y + x))


def _sech2(u):
    # 1/cosh^2 through exp(-2|u|) so large |u| underflows to 0
    e = np.exp(-2.0 * np.abs(u))
    return 4.0 * e / (1.0 + e) ** 2


def d2psi_dx2(params: ModelParams, x, y):
    return -_sech2(2.0 * params.j0bar * y + x)


def d2psi_dy2(params: ModelParams, x, y):
    j = params.j0bar
    return 2.0 * j - 4.0 * j * j * _sech2(2.0 * j * y + x)


def self_consistency_residual(params: ModelParams, x, y):
    return y - np.tanh(2.0 * params.j0bar * y + x)


# --- Equilibrium curve x(y) ---

def x_of_y(params: ModelParams, y_star):
    """Field at which y_star solves the self-consistent equation. Odd in y_star."""
    y = _check_open_unit(y_star)
    result = -2.0 * params.j0bar * y + np.arctanh(y)
    return result if result.ndim else float(result)


def dx_dy(params: ModelParams, y_star):
    y = _check_open_unit(y_star)
    result = 1.0 / (1.0 - y * y) - 2.0 * params.j0bar
    return result if result.ndim else float(result)


def classify_phase(params: ModelParams) -> str:
    gap = 2.0 * params.j0bar - 1.0
    if abs(gap) <= config.CRITICAL_BAND:
        return CRITICAL
    return LOW_TEMPERATURE if gap > 0 else HIGH_TEMPERATURE


def spinodal_points(params: ModelParams) -> tuple[float, float] | None:
    """(y_minus, y_plus) = -/+ sqrt(1 - 1/(2 j0bar)), or None outside the low-temperature phase."""
    if classify_phase(params) != LOW_TEMPERATURE:
        return None
    s = math.sqrt(1.0 - 1.0 / (2.0 * params.j0bar))
    return -s, s


def spinodal_field(params: ModelParams) -> float | None:
    """Positive spinodal image x_sp = x_of_y(y_minus); the 3-root window is (-x_sp, x_sp)."""
    points = spinodal_points(params)
    # single-valued curve: one root anywhere in (-1, 1)
    if points is None:
        return None
    return x_of_y(params, points[0])


def small_y_approx(params: ModelParams, x: float) -> float:
    denom = 1.0 - 2.0 * params.j0bar
    if abs(denom) <= config.CRITICAL_BAND:
        raise DomainError("small_y_approx is undefined at the critical coupling 2*j0bar = 1")
    return x / denom


# --- Root solver ---

def _polish(params: ModelParams, a: float, lo: float, hi: float) -> float:
    """Bracketed root of y - tanh(2 j y + a) on [lo, hi], kept inside (-1, 1)."""
    y = _bracketed_root(params, a, lo, hi)
    return min(max(y, -Y_EDGE), Y_EDGE)


def _bracketed_root(params: ModelParams, a: float, lo: float, hi: float) -> float:
    """Brent on [lo, hi], polished by Newton."""
    j = params.j0bar

    def residual(y):
        return y - math.tanh(2.0 * j * y + a)

    if residual(lo) == 0.0:
        return lo
    if residual(hi) == 0.0:
        return hi

    def newton(y, r):
        slope = 1.0 - 2.0 * j * (1.0 - math.tanh(2.0 * j * y + a) ** 2)
        return y if slope == 0.0 else y - r / slope

    y = brentq(residual, lo, hi, xtol=config.BRACKET_XTOL, maxiter=config.MAX_ITER)
    for _ in range(config.MAX_ITER):
        r = residual(y)
        if abs(r) < config.RESIDUAL_TOL:
            # one more step takes the residual to rounding level
            final = newton(y, r)
            return final if lo <= final <= hi and abs(residual(final)) <= abs(r) else y
        step_to = newton(y, r)
        if not lo <= step_to <= hi or step_to == y:
            break
        y = step_to
    # Newton stalled next to a spinodal; fall back to a full-precision bracket
    y = brentq(residual, lo, hi, xtol=1e-300, maxiter=config.MAX_ITER)
    if abs(residual(y)) >= config.RESIDUAL_TOL:
        raise ConvergenceError(
            f"Solver: residual {residual(y):.3e} above {config.RESIDUAL_TOL} for x={a}, bracket [{lo}, {hi}]"
        )
    return y


def _roots_nonnegative(params: ModelParams, a: float) -> tuple[list[float], float | None]:
    """Roots for a >= 0 sorted by y, plus the merged spinodal root if there is one."""
    points = spinodal_points(params)
    # single-valued curve: one root anywhere in (-1, 1)
    if points is None:
        return [_polish(params, a, -1.0, 1.0)], None
    y_minus, y_plus = points
    x_sp = x_of_y(params, y_minus)
    # the outer root on the positive side always exists for a >= 0
    right = _polish(params, a, y_plus, 1.0)
    # past the spinodal image only the outer root survives
    if a > x_sp + SPINODAL_X_TOL * max(1.0, x_sp):
        return [right], None
    if abs(a - x_sp) <= SPINODAL_X_TOL * max(1.0, x_sp):
        return [y_minus, right], y_minus
    # exact mirror images at zero field
    if a == 0.0:
        return [-right, 0.0, right], None
    left = _polish(params, a, -1.0, y_minus)
    middle = _polish(params, a, y_minus, y_plus)
    # a vanishing dx/dy means two roots coalesced at the spinodal
    if abs(dx_dy(params, left)) < config.DEGENERATE_DX_DY or abs(dx_dy(params, middle)) < config.DEGENERATE_DX_DY:
        merged = 0.5 * (left + middle)
        return [merged, right], merged
    return [left, middle, right], None


def solve_branches(params: ModelParams, x: float) -> list[BranchRoot]:
    """
    Equilibrium roots of y = tanh(2 j0bar y + x), labeled by pseudo-free energy.

    Roots are found on the monotone segments of x_of_y; negative x is solved
    as its mirror image so the result is exactly antisymmetric. mu=1 is the
    arg-min of z; at x=0 the positive outer root takes mu=1.
    """
    if not math.isfinite(x):
        raise DomainError(f"x must be finite, got {x}")
    a = abs(x)
    ys, merged = _roots_nonnegative(params, a)
    if x < 0:
        ys = [-y for y in ys]
        merged = -merged if merged is not None else None
    entries = [(float(pseudo_free_energy(params, x, y)), y) for y in ys]
    entries.sort(key=lambda e: (e[0], -e[1]))

    roots = []
    for mu, (z, y) in enumerate(entries, start=1):
        degenerate = merged is not None and y == merged
        if len(entries) == 3:
            stability = (MOST_STABLE, METASTABLE, UNSTABLE)[mu - 1]
        elif mu == 1:
            stability = MOST_STABLE
        else:
            stability = METASTABLE
        roots.append(BranchRoot(mu=mu, y_star=float(y), z=z, stability=stability, degenerate=degenerate))
    logger.debug("Solver: j0bar=%g x=%.17g -> %d root(s)", params.j0bar, x, len(roots))
    return roots


# --- Partition function ---

def exact_free_energy_per_spin(n: int, beta: float, j0: float, field: float) -> float:
    """
    -(1/(N beta)) ln Z with Z summed over magnetization sectors:
    Z = sum_k C(N,k) exp(beta J0 (N-2k)^2 / N + beta H (N-2k)).
    """
    if int(n) != n or n < 1 or n > MAX_EXACT_N:
        raise DomainError(f"n must be an integer in [1, {MAX_EXACT_N}], got {n}")
    if beta <= 0:
        raise DomainError(f"beta must be positive, got {beta}")
    n = int(n)
    k = np.arange(n + 1, dtype=float)
    m = n - 2.0 * k
    log_binom = gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
    log_terms = log_binom + beta * j0 * m * m / n + beta * field * m
    return float(-logsumexp(log_terms) / (n * beta))


def saddle_free_energy_per_spin(beta: float, j0: float, field: float) -> float:
    """Large-N limit psi(beta H, y*_1) / beta of the free energy per spin."""
    params = ModelParams.from_raw(beta, j0, field)
    most_stable = solve_branches(params, params.field_x())[0]
    return most_stable.z / beta


if __name__ == "__main__":
    demo = ModelParams(j0bar=1.0)
    print(f"Phase: {classify_phase(demo)}, spinodals: {spinodal_points(demo)}, x_sp: {spinodal_field(demo)}")
    for root in solve_branches(demo, 0.1):
        print(f"  mu={root.mu} y*={root.y_star:+.6f} psi={root.z:.6f} {root.stability}")

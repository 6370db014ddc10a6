# src/legendre.py
"""
Legendre curves of the contact form dz +/- y dx: sampling, projections,
branch decomposition over I+/I-, pruning and the closed-form toy cusp.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from . import config
from . import model
from .errors import DomainError, PhaseError

logger = logging.getLogger(__name__)

PLUS_YDX = "PlusYdx"
MINUS_YDX = "MinusYdx"
CONVENTIONS = (PLUS_YDX, MINUS_YDX)

I_PLUS = "IPlus"
I_MINUS = "IMinus"
WHOLE = "Whole"

PRUNE_MODES = ("none", "unstable", "unstable_metastable")
PLANES = {"xz": ("x", "z"), "xy": ("x", "y"), "yz": ("y", "z")}

ROLES = {1: model.MOST_STABLE, 2: model.METASTABLE, 3: model.UNSTABLE}


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LegendrePoint:
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class Interval:
    """Open interval; membership uses strict inequalities."""
    lo: float
    hi: float

    def __contains__(self, x) -> bool:
        return self.lo < x < self.hi


@dataclass(frozen=True)
class LegendreCurve:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    convention: str = PLUS_YDX
    params: model.ModelParams | None = None
    parameter: np.ndarray | None = None

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ValueError(f"Unknown contact form convention '{self.convention}'")
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        parameter = self.y if self.parameter is None else self.parameter
        object.__setattr__(self, "parameter", _frozen(parameter))
        if not (len(self.x) == len(self.y) == len(self.z) == len(self.parameter)):
            raise ValueError("Curve coordinate arrays must have equal length")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def samples(self) -> list[LegendrePoint]:
        return [LegendrePoint(float(a), float(b), float(c)) for a, b, c in zip(self.x, self.y, self.z)]


@dataclass(frozen=True)
class Branch:
    mu: int
    interval: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    role: str
    single_valued: bool = False

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


# --- Sampling ---

def default_y_grid() -> np.ndarray:
    return np.linspace(config.DEFAULT_Y_MIN, config.DEFAULT_Y_MAX, config.DEFAULT_Y_POINTS)


def sample_curve(params: model.ModelParams, y_grid=None, convention: str = PLUS_YDX) -> LegendreCurve:
    """
    Samples (x_of_y(y), y, psi(x_of_y(y), y)) over a strictly increasing grid.

    With the MinusYdx convention the stored y-coordinate is the negated
    magnetization, which is the same curve written for dz - y dx.
    """
    grid = default_y_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise DomainError("y_grid must be a 1-D grid with at least two points")
    if not np.all(np.abs(grid) < 1.0):
        raise DomainError("y_grid must lie strictly inside (-1, 1)")
    if not np.all(np.diff(grid) > 0):
        raise DomainError("y_grid must be strictly increasing")
    x = model.x_of_y(params, grid)
    z = model.pseudo_free_energy(params, x, grid)
    y_coord = grid if convention == PLUS_YDX else -grid
    return LegendreCurve(x=x, y=y_coord, z=z, convention=convention, params=params, parameter=grid)


def graph_curve(psi, dpsi, x_grid, convention: str = PLUS_YDX) -> LegendreCurve:
    """Legendre curve generated by a single-valued function: z = psi(x), y = -/+ psi'(x)."""
    xs = np.asarray(x_grid, dtype=float)
    slope = np.asarray(dpsi(xs), dtype=float)
    y = -slope if convention == PLUS_YDX else slope
    return LegendreCurve(x=xs, y=y, z=np.asarray(psi(xs), dtype=float), convention=convention, parameter=xs)


def generated_curve(f, df, delta_grid, convention: str = MINUS_YDX) -> LegendreCurve:
    """
    Legendre curve generated by f(delta) through z = y^2 - f(delta).

    For dz - y dx, delta = 2y - x and y = f'(delta); for dz + y dx,
    delta = -2y - x and y = -f'(delta). Either way the curve is
    parametrized by delta as x = 2 f'(delta) - delta, z = f'(delta)^2 - f(delta).
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"Unknown contact form convention '{convention}'")
    d = np.asarray(delta_grid, dtype=float)
    if d.ndim != 1 or len(d) < 2:
        raise DomainError("delta_grid must be a 1-D grid with at least two points")
    if not np.all(np.diff(d) > 0):
        raise DomainError("delta_grid must be strictly increasing")
    value = np.asarray(f(d), dtype=float)
    slope = np.asarray(df(d), dtype=float)
    if not (np.all(np.isfinite(value)) and np.all(np.isfinite(slope))):
        raise DomainError("The generator is not finite on the whole delta_grid")
    y = slope if convention == MINUS_YDX else -slope
    return LegendreCurve(
        x=2.0 * slope - d, y=y, z=slope * slope - value, convention=convention, parameter=d
    )


def _log_cosh(d):
    return np.logaddexp(d, -d)


# name -> (f, f'); 'logcosh' gives the equilibrium curve at j0bar = 1 under dz + y dx
GENERATORS = {
    "cubic": (lambda d: d ** 3 / 3.0, lambda d: d * d),
    "quartic": (lambda d: d ** 4 / 4.0, lambda d: d ** 3),
    "logcosh": (_log_cosh, np.tanh),
}


# --- Tangent and contact residuals ---

def tangent_vector(params: model.ModelParams, y: float) -> tuple[float, float, float]:
    """(dx/dy, 1, dz/dy) along the equilibrium curve; the y-component never vanishes."""
    slope = model.dx_dy(params, y)
    x = model.x_of_y(params, y)
    return slope, 1.0, slope * float(model.dpsi_dx(params, x, y))


def contact_residual(params: model.ModelParams, y):
    """dz/dy + y dx/dy from analytic derivatives; zero up to rounding on the curve."""
    x = model.x_of_y(params, y)
    slope = model.dx_dy(params, y)
    dz = model.dpsi_dx(params, x, y) * slope + model.dpsi_dy(params, x, y)
    return dz + np.asarray(y) * slope


def discrete_contact_residual(curve: LegendreCurve) -> np.ndarray:
    """|dz -/+ y_mid dx| / |d parameter| for each adjacent pair (second order in the step)."""
    dx = np.diff(curve.x)
    dz = np.diff(curve.z)
    y_mid = 0.5 * (curve.y[1:] + curve.y[:-1])
    sign = 1.0 if curve.convention == PLUS_YDX else -1.0
    return np.abs(dz + sign * y_mid * dx) / np.abs(np.diff(curve.parameter))


def interior_contact_residual(curve: LegendreCurve, limit: float = config.RESIDUAL_INTERIOR_Y) -> tuple[np.ndarray, np.ndarray]:
    """
    Discrete residuals of the pairs with both parameters in [-limit, limit], and their steps.

    The leading error is |x''(y)| h^2 / 12, which grows without bound as |y| -> 1;
    on |y| <= 0.9 it stays below 10 h^2.
    """
    inside = np.abs(curve.parameter) <= limit
    pairs = inside[1:] & inside[:-1]
    steps = np.abs(np.diff(curve.parameter))
    return discrete_contact_residual(curve)[pairs], steps[pairs]


def projected_singularities(params: model.ModelParams, y_grid=None) -> list[float]:
    """Parameters where dx/dy changes sign, i.e. where the projected tangent vanishes."""
    grid = default_y_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
    slope = model.dx_dy(params, grid)
    found = []
    for i in np.flatnonzero(np.sign(slope[:-1]) * np.sign(slope[1:]) < 0):
        found.append(brentq(lambda y: model.dx_dy(params, y), grid[i], grid[i + 1], xtol=1e-15))
    found.extend(float(grid[i]) for i in np.flatnonzero(slope == 0.0))
    return sorted(found)


# --- Branches ---

def intervals(params: model.ModelParams) -> tuple[Interval, Interval]:
    """(I-, I+) = ((-x_sp, 0), (0, x_sp))."""
    x_sp = model.spinodal_field(params)
    if x_sp is None:
        raise PhaseError(f"No multivalued region at j0bar={params.j0bar} (needs 2*j0bar > 1)")
    return Interval(-x_sp, 0.0), Interval(0.0, x_sp)


def _segments(curve: LegendreCurve, params: model.ModelParams) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """The three monotone pieces of the curve, each as (x ascending, y, z)."""
    y_minus, y_plus = model.spinodal_points(params)
    m = curve.parameter
    masks = (m <= y_minus, (m >= y_minus) & (m <= y_plus), m >= y_plus)
    pieces = []
    for mask in masks:
        x, y, z = curve.x[mask], curve.y[mask], curve.z[mask]
        order = np.argsort(x, kind="stable")
        pieces.append((x[order], y[order], z[order]))
    return pieces


def _matched_grid(pieces, lo: float, hi: float) -> np.ndarray:
    """Sample x values of the middle piece inside (lo, hi) covered by every piece."""
    lo = max([lo] + [p[0][0] for p in pieces])
    hi = min([hi] + [p[0][-1] for p in pieces])
    xs = pieces[1][0]
    return np.unique(xs[(xs > lo) & (xs < hi)])


def split_branches(curve: LegendreCurve, params: model.ModelParams, strict: bool = False) -> list[Branch]:
    """
    Labels the curve's single-valued branches psi_1 < psi_2 < psi_3 on I- and I+.

    Each monotone piece is resampled with a monotone cubic onto common x values
    and the pieces are labeled by their z ordering. The mu=1 branch continues past
    the spinodal image with the outer piece. In the high-temperature phase one
    branch labeled 'Whole' is returned (PhaseError with strict=True).
    """
    if curve.convention != PLUS_YDX:
        raise ValueError("split_branches expects a PlusYdx curve")
    if model.classify_phase(params) != model.LOW_TEMPERATURE:
        if strict:
            raise PhaseError(f"j0bar={params.j0bar} has a single-valued equilibrium curve")
        logger.warning("Branches: j0bar=%g is not in the low-temperature phase; returning one branch", params.j0bar)
        order = np.argsort(curve.x, kind="stable")
        return [Branch(1, WHOLE, curve.x[order], curve.y[order], curve.z[order], model.MOST_STABLE, single_valued=True)]
    if len(curve) < config.MIN_SPLIT_POINTS:
        raise DomainError(f"split_branches needs at least {config.MIN_SPLIT_POINTS} samples, got {len(curve)}")

    pieces = _segments(curve, params)
    # every monotone piece needs two samples for the monotone cubic
    short = [i for i, (x, _, _) in enumerate(pieces) if len(x) < 2]
    if short:
        raise DomainError(
            f"split_branches needs samples on both sides of each spinodal; pieces {short} have fewer than 2 "
            f"(parameter range [{curve.parameter.min():g}, {curve.parameter.max():g}])"
        )
    i_minus, i_plus = intervals(params)
    interps = [(PchipInterpolator(x, y), PchipInterpolator(x, z)) for x, y, z in pieces]
    branches = []
    for label, interval, outer in ((I_MINUS, i_minus, 0), (I_PLUS, i_plus, 2)):
        xs = _matched_grid(pieces, interval.lo, interval.hi)
        if len(xs) < 2:
            raise DomainError(f"Curve samples do not cover enough of {label} to match the three pieces")
        ys = np.array([fy(xs) for fy, _ in interps])
        zs = np.array([fz(xs) for _, fz in interps])
        # pieces do not cross inside the interval; rank them where they are well apart
        rank = np.argsort(zs[:, len(xs) // 2], kind="stable")
        for mu in (1, 2, 3):
            pick = rank[mu - 1]
            bx, by, bz = xs, ys[pick], zs[pick]
            if mu == 1:
                px, py, pz = pieces[outer]
                beyond = px < xs[0] if label == I_MINUS else px > xs[-1]
                if label == I_MINUS:
                    bx, by, bz = np.concatenate([px[beyond], bx]), np.concatenate([py[beyond], by]), np.concatenate([pz[beyond], bz])
                else:
                    bx, by, bz = np.concatenate([bx, px[beyond]]), np.concatenate([by, py[beyond]]), np.concatenate([bz, pz[beyond]])
            branches.append(Branch(mu, label, bx, by, bz, ROLES[mu]))
    logger.info("Branches: split %d samples into %d branches", len(curve), len(branches))
    return branches


def prune(branches: list[Branch], mode: str = "none") -> list[Branch]:
    """Drops mu=3 ('unstable') or mu=2 and mu=3 ('unstable_metastable')."""
    if mode not in PRUNE_MODES:
        raise ValueError(f"Unknown prune mode '{mode}'. Use one of {PRUNE_MODES}")
    if mode == "none":
        return list(branches)
    dropped = {3} if mode == "unstable" else {2, 3}
    return [b for b in branches if b.mu not in dropped]


def project(items, plane: str) -> list[np.ndarray]:
    """Coordinate drop to a plane; one (n, 2) polyline per curve or branch, no resampling."""
    if plane not in PLANES:
        raise ValueError(f"Unknown plane '{plane}'. Use one of {sorted(PLANES)}")
    if isinstance(items, LegendreCurve):
        items = [items]
    if not items:
        raise ValueError("Nothing to project")
    u, v = PLANES[plane]
    return [np.column_stack([getattr(item, u), getattr(item, v)]) for item in items]


def wave_front_crossings(curve: LegendreCurve, params: model.ModelParams) -> list[float]:
    """x values where two pieces of the wave front cross each other (apex of the triangle)."""
    if model.classify_phase(params) != model.LOW_TEMPERATURE:
        return []
    pieces = _segments(curve, params)
    crossings = []
    for a in range(3):
        for b in range(a + 1, 3):
            xa, _, za = pieces[a]
            xb, _, zb = pieces[b]
            lo, hi = max(xa[0], xb[0]), min(xa[-1], xb[-1])
            # pieces touch at the cusps; only interior sign changes are crossings
            trim = 0.01 * (hi - lo)
            lo, hi = lo + trim, hi - trim
            xs = np.union1d(xa, xb)
            xs = xs[(xs > lo) & (xs < hi)]
            if len(xs) < 2:
                continue
            gap = PchipInterpolator(xa, za)(xs) - PchipInterpolator(xb, zb)(xs)
            for i in np.flatnonzero(np.sign(gap[:-1]) * np.sign(gap[1:]) < 0):
                t = gap[i] / (gap[i] - gap[i + 1])
                crossings.append(float(xs[i] + t * (xs[i + 1] - xs[i])))
    return sorted(crossings)


# --- Toy cusp (dz - y dx) ---

def _toy_branches(x):
    xs = np.asarray(x, dtype=float)
    if np.any(xs < -0.125):
        raise DomainError("The toy cusp exists only for x >= -1/8")
    s = np.sqrt(1.0 + 8.0 * xs)
    y_plus = (4.0 * xs + 1.0 + s) / 8.0
    y_minus = (4.0 * xs + 1.0 - s) / 8.0
    return xs, s, y_plus, y_minus


def toy_cusp_curve(x):
    """
    Both branches (y+, y-, z+, z-) of the cusp y = (2y - x)^2 with z = y^2 - (2y - x)^3 / 3.

    The branches join at x = -1/8 where y = 1/16.
    """
    xs, _, y_plus, y_minus = _toy_branches(x)
    d_plus = 2.0 * y_plus - xs
    d_minus = 2.0 * y_minus - xs
    z_plus = y_plus ** 2 - d_plus ** 3 / 3.0
    z_minus = y_minus ** 2 - d_minus ** 3 / 3.0
    if xs.ndim == 0:
        return float(y_plus), float(y_minus), float(z_plus), float(z_minus)
    return y_plus, y_minus, z_plus, z_minus


def toy_contact_residual(x):
    """dz/dx - y on each branch (dz - y dx pulled back), from closed-form derivatives."""
    xs, s, y_plus, y_minus = _toy_branches(x)
    out = []
    # the slopes diverge at the joint x = -1/8; the residual there is nan
    with np.errstate(divide="ignore", invalid="ignore"):
        for y, sign in ((y_plus, 1.0), (y_minus, -1.0)):
            dy = 0.5 * (1.0 + sign / s)
            d = 2.0 * y - xs
            dd = 2.0 * dy - 1.0
            out.append(2.0 * y * dy - d * d * dd - y)
    return out[0], out[1]


def sample_toy_curve(delta_grid) -> LegendreCurve:
    """The toy cusp parametrized by delta = 2y - x: (2 delta^2 - delta, delta^2, delta^4 - delta^3/3)."""
    f, df = GENERATORS["cubic"]
    return generated_curve(f, df, delta_grid, MINUS_YDX)


if __name__ == "__main__":
    params = model.ModelParams(j0bar=1.0)
    curve = sample_curve(params)
    print(f"Curve: {len(curve)} samples, max discrete residual {discrete_contact_residual(curve).max():.3e}")
    print(f"Singular parameters: {projected_singularities(params)}")
    print(f"Wave front crossings: {wave_front_crossings(curve, params)}")
    for branch in split_branches(curve, params):
        print(f"  {branch.interval} mu={branch.mu} {branch.role}: {len(branch.x)} points")

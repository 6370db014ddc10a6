# src/dynamics.py
"""
Contact Hamiltonian vector fields on (x, y, z) and their integration.

The stability Hamiltonians all have the form

    h(x, z) = s * psi0(x) * prod_i (z - R_i(x))

where the roots R_i are branch values psi_mu(x) (with repeats) and s = +/-1.
They do not depend on y, so xdot = dh/dy = 0 and the flow runs in the
(y, z)-plane at frozen x. Branch values are solved once per trajectory.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import config
from . import model
from .errors import BlowupError, DomainError, RegionError

logger = logging.getLogger(__name__)

PLUS_YDX = "PlusYdx"
MINUS_YDX = "MinusYdx"

SQUARED = "Squared"
CUBIC = "Cubic"
QUADRATIC = "Quadratic"
LINEAR = "Linear"

# sign s and branch labels (with multiplicity) of each variant
VARIANT_FACTORS = {
    SQUARED: (-1.0, (1, 2, 2)),
    CUBIC: (-1.0, (1, 2, 3)),
    QUADRATIC: (1.0, (1, 2)),
    LINEAR: (-1.0, (1,)),
}

OFF_REGION = "OffRegion"

PSI0_KINDS = ("constant", "exponential", "balanced")


@dataclass(frozen=True)
class Psi0:
    """
    Positive weight psi0(x) multiplying the Hamiltonian.

    constant:    scale
    exponential: scale * exp(rate * x)
    balanced:    scale / |dPi/dz at psi_1|, so the mu=1 linear rate equals scale at every x
    """
    kind: str = "constant"
    scale: float = 1.0
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in PSI0_KINDS:
            raise ValueError(f"Unknown psi0 kind '{self.kind}'. Use one of {PSI0_KINDS}")
        if not math.isfinite(self.scale) or self.scale <= 0:
            raise DomainError(f"psi0 scale must be positive, got {self.scale}")
        if not math.isfinite(self.rate):
            raise DomainError(f"psi0 rate must be finite, got {self.rate}")

    def evaluate(self, x: float, roots, droots) -> tuple[float, float]:
        """(psi0, dpsi0/dx) at x, given the variant's root values and slopes there."""
        if self.kind == "constant":
            return self.scale, 0.0
        if self.kind == "exponential":
            value = self.scale * math.exp(self.rate * x)
            return value, self.rate * value
        lead, dlead = roots[0], droots[0]
        slope = 1.0
        log_derivative = 0.0
        for r, dr in zip(roots[1:], droots[1:]):
            slope *= lead - r
            log_derivative += (dlead - dr) / (lead - r)
        value = self.scale / abs(slope)
        return value, -value * log_derivative


@dataclass(frozen=True)
class HamiltonianVariant:
    kind: str = SQUARED
    psi0: Psi0 = field(default_factory=Psi0)

    def __post_init__(self):
        if self.kind not in VARIANT_FACTORS:
            raise ValueError(f"Unknown Hamiltonian variant '{self.kind}'. Use one of {sorted(VARIANT_FACTORS)}")

    @property
    def fixed_branches(self) -> tuple[int, ...]:
        return tuple(sorted(set(VARIANT_FACTORS[self.kind][1])))


@dataclass(frozen=True)
class ContactState:
    x: float
    y: float
    z: float
    t: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z, self.t)):
            raise DomainError(f"Contact state must be finite, got {self}")


@dataclass(frozen=True)
class ContactHamiltonian:
    """A scalar h(x, y, z) with its three partial derivatives."""
    value: Callable[[float, float, float], float]
    dx: Callable[[float, float, float], float]
    dy: Callable[[float, float, float], float]
    dz: Callable[[float, float, float], float]


@dataclass(frozen=True)
class BranchValues:
    """psi_mu(x), dpsi_mu/dx = -y*_mu and y*_mu for mu = 1.. at one x."""
    x: float
    psi: tuple[float, ...]
    dpsi: tuple[float, ...]
    y: tuple[float, ...]

    @property
    def psi21(self) -> float:
        return self.psi[1] - self.psi[0]


@dataclass(frozen=True)
class FlowFrame:
    """Everything the vector field needs at a frozen x."""
    x: float
    sign: float
    roots: tuple[float, ...]
    droots: tuple[float, ...]
    psi0: float
    dpsi0: float
    branches: BranchValues
    labels: tuple[int, ...]


@dataclass(frozen=True)
class LinearCoefficients:
    mu: int
    c: float
    d: float
    d_displayed: float | None


@dataclass
class IntegratorConfig:
    step: float = config.DEFAULT_STEP
    t_max: float = config.DEFAULT_T_MAX
    tolerance: float = config.TERMINAL_TOL
    window: int = config.TERMINAL_WINDOW
    blowup: float = config.BLOWUP_BOUND
    # "branch": distance to the nearest fixed branch; "increment": per-step change
    criterion: str = "branch"

    def __post_init__(self):
        if not self.step > 0 or not self.t_max > 0:
            raise DomainError("step and t_max must be positive")
        if self.criterion not in ("branch", "increment"):
            raise ValueError(f"Unknown terminal criterion '{self.criterion}'")


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    variant: HamiltonianVariant
    step: float
    terminated_early: bool = False

    def __len__(self) -> int:
        return len(self.t)

    @property
    def states(self) -> list[ContactState]:
        return [ContactState(float(a), float(b), float(c), float(t)) for t, a, b, c in zip(self.t, self.x, self.y, self.z)]

    @property
    def final(self) -> ContactState:
        return ContactState(float(self.x[-1]), float(self.y[-1]), float(self.z[-1]), float(self.t[-1]))


@dataclass
class BatchRelaxation:
    y: np.ndarray
    z: np.ndarray
    t_end: np.ndarray
    converged: np.ndarray
    blown_up: np.ndarray
    lyapunov_margin: np.ndarray


# --- Generic contact vector field ---

def generic_vector_field(h: ContactHamiltonian, convention: str, state: ContactState) -> tuple[float, float, float]:
    """Components of X_h for dz + y dx (PlusYdx) or dz - y dx (MinusYdx)."""
    x, y, z = state.x, state.y, state.z
    hx, hy, hz = h.dx(x, y, z), h.dy(x, y, z), h.dz(x, y, z)
    zdot = h.value(x, y, z) - y * hy
    if convention == PLUS_YDX:
        return hy, -hx + y * hz, zdot
    if convention == MINUS_YDX:
        return -hy, hx + y * hz, zdot
    raise ValueError(f"Unknown contact form convention '{convention}'")


# --- Branch values at a frozen x ---

def branch_functions(params: model.ModelParams, x: float) -> BranchValues:
    """The three branch values and slopes at x inside I- or I+."""
    x_sp = model.spinodal_field(params)
    if x_sp is None:
        raise RegionError(f"No I+/I- intervals at j0bar={params.j0bar}")
    if not (-x_sp < x < 0.0 or 0.0 < x < x_sp):
        raise RegionError(f"x={x} lies outside I- = ({-x_sp}, 0) and I+ = (0, {x_sp})")
    roots = model.solve_branches(params, x)
    if len(roots) != 3:
        raise RegionError(f"x={x} is too close to the spinodal image to separate three branches")
    return BranchValues(
        x=x,
        psi=tuple(r.z for r in roots),
        dpsi=tuple(-r.y_star for r in roots),
        y=tuple(r.y_star for r in roots),
    )


def _single_branch(params: model.ModelParams, x: float) -> BranchValues:
    root = model.solve_branches(params, x)[0]
    return BranchValues(x=x, psi=(root.z,), dpsi=(-root.y_star,), y=(root.y_star,))


def flow_frame(variant: HamiltonianVariant, params: model.ModelParams, x: float) -> FlowFrame:
    sign, labels = VARIANT_FACTORS[variant.kind]
    if variant.kind == LINEAR:
        if x == 0.0:
            raise RegionError("The single-branch flow is undefined on the removed plane x = 0")
        branches = _single_branch(params, x)
    else:
        branches = branch_functions(params, x)
    roots = tuple(branches.psi[mu - 1] for mu in labels)
    droots = tuple(branches.dpsi[mu - 1] for mu in labels)
    psi0, dpsi0 = variant.psi0.evaluate(x, roots, droots)
    return FlowFrame(x, sign, roots, droots, psi0, dpsi0, branches, labels)


# --- Variant vector fields ---

def _products(roots, z):
    """prod_i (z - R_i) and the products leaving out one factor each."""
    u = [z - r for r in roots]
    partial = []
    for i in range(len(u)):
        term = 1.0
        for j, uj in enumerate(u):
            if j != i:
                term = term * uj
        partial.append(term)
    return partial[0] * u[0], partial, u


def _field(frame_sign, roots, droots, psi0, dpsi0, y, z):
    """(ydot, zdot) of the variant flow; works on floats and on numpy arrays alike."""
    prod, partial, _ = _products(roots, z)
    drift = 0.0
    for dr, term in zip(droots, partial):
        drift = drift + (dr + y) * term
    ydot = frame_sign * (-dpsi0 * prod + psi0 * drift)
    zdot = frame_sign * psi0 * prod
    return ydot, zdot


def _frame_field(frame: FlowFrame, y, z):
    return _field(frame.sign, frame.roots, frame.droots, frame.psi0, frame.dpsi0, y, z)


def vector_field(variant: HamiltonianVariant, params: model.ModelParams, state: ContactState) -> tuple[float, float, float]:
    frame = flow_frame(variant, params, state.x)
    ydot, zdot = _frame_field(frame, state.y, state.z)
    return 0.0, ydot, zdot


def planar_field(variant: HamiltonianVariant, params: model.ModelParams, x: float, y, z) -> tuple[np.ndarray, np.ndarray]:
    """(ydot, zdot) at frozen x for arrays of y and z, broadcast together."""
    frame = flow_frame(variant, params, x)
    y, z = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(z, dtype=float))
    ydot, zdot = _frame_field(frame, y, z)
    return np.broadcast_to(ydot, y.shape).copy(), np.broadcast_to(zdot, y.shape).copy()


def variant_hamiltonian(variant: HamiltonianVariant, params: model.ModelParams, x: float) -> ContactHamiltonian:
    """h and its partials for states at the given x (the branch values are frozen there)."""
    frame = flow_frame(variant, params, x)

    def value(_x, _y, z):
        prod, _, _ = _products(frame.roots, z)
        return frame.sign * frame.psi0 * prod

    def dx(_x, _y, z):
        prod, partial, _ = _products(frame.roots, z)
        moving = sum(dr * term for dr, term in zip(frame.droots, partial))
        return frame.sign * (frame.dpsi0 * prod - frame.psi0 * moving)

    def dz(_x, _y, z):
        _, partial, _ = _products(frame.roots, z)
        return frame.sign * frame.psi0 * sum(partial)

    return ContactHamiltonian(value=value, dx=dx, dy=lambda _x, _y, _z: 0.0, dz=dz)


def jacobian(variant: HamiltonianVariant, params: model.ModelParams, state: ContactState) -> np.ndarray:
    """Analytic Jacobian of (ydot, zdot) with respect to (y, z)."""
    frame = flow_frame(variant, params, state.x)
    return _frame_jacobian(frame, state.y, state.z)


def _frame_jacobian(frame: FlowFrame, y: float, z: float) -> np.ndarray:
    _, partial, u = _products(frame.roots, z)
    dprod = sum(partial)
    cross = 0.0
    for i, dr in enumerate(frame.droots):
        dterm = 0.0
        for j in range(len(u)):
            if j == i:
                continue
            term = 1.0
            for k, uk in enumerate(u):
                if k not in (i, j):
                    term *= uk
            dterm += term
        cross += (dr + y) * dterm
    s = frame.sign
    return np.array([
        [s * frame.psi0 * dprod, s * (-frame.dpsi0 * dprod + frame.psi0 * cross)],
        [0.0, s * frame.psi0 * dprod],
    ])


# --- Regions and Lyapunov functions ---

def classify_region(params: model.ModelParams, state: ContactState, kind: str | None = None) -> str:
    """
    D1 when z < psi_2, otherwise D2 (closed below); for the Cubic variant z > psi_2
    is D3. OffRegion outside I- and I+, including the removed plane x = 0.
    """
    x_sp = model.spinodal_field(params)
    if x_sp is None or not (-x_sp < state.x < 0.0 or 0.0 < state.x < x_sp):
        return OFF_REGION
    try:
        branches = branch_functions(params, state.x)
    except RegionError:
        return OFF_REGION
    suffix = "Plus" if state.x > 0 else "Minus"
    psi2 = branches.psi[1]
    if state.z < psi2:
        return "D1" + suffix
    if kind == CUBIC and state.z > psi2:
        return "D3" + suffix
    return "D2" + suffix


def _lyapunov_target(kind: str, region: str) -> tuple[int, bool]:
    """(branch label, quadratic?) of the Lyapunov function used in a region."""
    base = region[:2]
    if kind == LINEAR or base == "D1":
        return 1, True
    if base == "D2" and kind == SQUARED:
        return 2, False
    if base == "D3" and kind == CUBIC:
        return 3, True
    raise RegionError(f"No Lyapunov function for the {kind} variant in {region}")


def lyapunov(variant: HamiltonianVariant, params: model.ModelParams, region: str, state: ContactState) -> tuple[float, float]:
    """
    (V, dV/dt): V = (z - psi_mu)^2 / 2 with rate (z - psi_mu) h, or V = z - psi_2
    with rate h for the Squared variant above psi_2.
    """
    actual = classify_region(params, state, variant.kind)
    if actual != region or region == OFF_REGION:
        raise RegionError(f"State {state} lies in {actual}, not {region}")
    mu, quadratic = _lyapunov_target(variant.kind, region)
    frame = flow_frame(variant, params, state.x)
    _, h = _frame_field(frame, state.y, state.z)
    gap = state.z - frame.branches.psi[mu - 1]
    if quadratic:
        return 0.5 * gap * gap, gap * h
    return gap, h


def lyapunov_series(
    variant: HamiltonianVariant, params: model.ModelParams, trajectory: Trajectory
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """
    Region, V and dV/dt at every recorded state of a frozen-x trajectory.
    V and dV/dt are nan where the region has no Lyapunov function.
    """
    x = float(trajectory.x[0])
    frame = flow_frame(variant, params, x)
    y, z = np.asarray(trajectory.y), np.asarray(trajectory.z)
    _, h = _frame_field(frame, y, z)
    if classify_region(params, ContactState(x, float(y[0]), float(z[0])), variant.kind) == OFF_REGION:
        regions = [OFF_REGION] * len(z)
    else:
        suffix = "Plus" if x > 0 else "Minus"
        psi2 = branch_functions(params, x).psi[1]
        regions = []
        for zi in z:
            if zi < psi2:
                regions.append("D1" + suffix)
            elif variant.kind == CUBIC and zi > psi2:
                regions.append("D3" + suffix)
            else:
                regions.append("D2" + suffix)
    values = np.full(len(z), np.nan)
    rates = np.full(len(z), np.nan)
    for i, region in enumerate(regions):
        try:
            mu, quadratic = _lyapunov_target(variant.kind, region)
        except RegionError:
            continue
        gap = z[i] - frame.branches.psi[mu - 1]
        values[i], rates[i] = (0.5 * gap * gap, gap * h[i]) if quadratic else (gap, h[i])
    return regions, values, rates


# --- Linearization ---

def _displayed_d(kind: str, mu: int, psi0: float, dpsi0: float, b: BranchValues) -> float | None:
    p, dp = b.psi, b.dpsi
    p21, p31, p32 = p[1] - p[0], (p[2] - p[0]) if len(p) > 2 else 0.0, (p[2] - p[1]) if len(p) > 2 else 0.0
    d21, d31, d32 = dp[1] - dp[0], (dp[2] - dp[0]) if len(dp) > 2 else 0.0, (dp[2] - dp[1]) if len(dp) > 2 else 0.0
    if kind == SQUARED and mu == 1:
        return dpsi0 * p21 ** 2 + psi0 * p21 * d21
    if kind == CUBIC and mu == 1:
        return dpsi0 * p21 * p31 + psi0 * d21 * p31 + psi0 * p21 * d31
    if kind == CUBIC and mu == 2:
        return -(dpsi0 * p21 * p32 + psi0 * d21 * p32 + psi0 * p21 * d32)
    if kind == CUBIC and mu == 3:
        return dpsi0 * p31 * p32 + psi0 * d31 * p32 + psi0 * p31 * d32
    if kind == QUADRATIC and mu == 1:
        return dpsi0 * p21 + psi0 * d21
    if kind == QUADRATIC and mu == 2:
        return -(dpsi0 * p21 + psi0 * d21)
    return None


def linearized_coefficients(variant: HamiltonianVariant, params: model.ModelParams, x: float, mu: int) -> LinearCoefficients:
    """
    c and d of Zdot = -c Z, Ydot = -c Y + d Z at the fixed branch mu.

    d comes from the analytic Jacobian; d_displayed is the per-variant closed form
    (it differs for Squared mu=1 by the factor on psi0 psi21 psi21').
    """
    if mu not in variant.fixed_branches:
        raise ValueError(f"mu={mu} is not a fixed branch of the {variant.kind} variant")
    frame = flow_frame(variant, params, x)
    branches = frame.branches
    jac = _frame_jacobian(frame, branches.y[mu - 1], branches.psi[mu - 1])
    c = -float(jac[1, 1])
    d = float(jac[0, 1])
    shown = _displayed_d(variant.kind, mu, frame.psi0, frame.dpsi0, branches)
    return LinearCoefficients(mu=mu, c=c, d=d, d_displayed=shown)


def linearized_solution(c: float, d: float, Y0: float, Z0: float, t: float) -> tuple[float, float]:
    decay = math.exp(-c * t)
    return (Y0 + d * Z0 * t) * decay, Z0 * decay


# --- Integration ---

def _rk4(frame_sign, roots, droots, psi0, dpsi0, y, z, dt):
    k1y, k1z = _field(frame_sign, roots, droots, psi0, dpsi0, y, z)
    k2y, k2z = _field(frame_sign, roots, droots, psi0, dpsi0, y + 0.5 * dt * k1y, z + 0.5 * dt * k1z)
    k3y, k3z = _field(frame_sign, roots, droots, psi0, dpsi0, y + 0.5 * dt * k2y, z + 0.5 * dt * k2z)
    k4y, k4z = _field(frame_sign, roots, droots, psi0, dpsi0, y + dt * k3y, z + dt * k3z)
    return (
        y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
        z + dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z),
    )


def _near_fixed(z, fixed_psi, tolerance: float):
    """True where z is within tolerance of any fixed branch value; works on scalars and arrays."""
    near = np.zeros(np.shape(z), dtype=bool)
    for psi in fixed_psi:
        near |= np.abs(z - psi) < tolerance
    return near


def rk4_linear(c: float, d: float, Y0: float, Z0: float, step: float, t_end: float) -> tuple[float, float]:
    """Fixed-step RK4 on Ydot = -c Y + d Z, Zdot = -c Z up to t_end."""
    y, z = Y0, Z0
    n = int(round(t_end / step))
    for _ in range(n):
        k1y, k1z = -c * y + d * z, -c * z
        y2, z2 = y + 0.5 * step * k1y, z + 0.5 * step * k1z
        k2y, k2z = -c * y2 + d * z2, -c * z2
        y3, z3 = y + 0.5 * step * k2y, z + 0.5 * step * k2z
        k3y, k3z = -c * y3 + d * z3, -c * z3
        y4, z4 = y + step * k3y, z + step * k3z
        k4y, k4z = -c * y4 + d * z4, -c * z4
        y += step / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        z += step / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
    return y, z


def integrate(
    variant: HamiltonianVariant,
    params: model.ModelParams,
    state0: ContactState,
    step: float = config.DEFAULT_STEP,
    t_max: float = config.DEFAULT_T_MAX,
    settings: IntegratorConfig | None = None,
    leave_radius: float | None = None,
) -> Trajectory:
    """
    Classical RK4 of (y, z) at frozen x, recording every state.

    Stops early once z stays within tolerance of a fixed branch value psi_mu
    for `window` consecutive steps, or, with leave_radius,
    once |z - z0| exceeds it. Raises BlowupError when |y| or |z| exceeds the
    bound.
    """
    settings = settings or IntegratorConfig(step=step, t_max=t_max)
    dt = settings.step
    frame = flow_frame(variant, params, state0.x)
    fixed_psi = [frame.branches.psi[mu - 1] for mu in sorted(set(frame.labels))]
    args = (frame.sign, frame.roots, frame.droots, frame.psi0, frame.dpsi0)

    y, z = float(state0.y), float(state0.z)
    ys, zs = [y], [z]
    n_steps = int(round(settings.t_max / dt))
    quiet = 0
    early = False
    for _ in range(n_steps):
        y_new, z_new = _rk4(*args, y, z, dt)
        # |y| and |z| bounded, else the run is a blow-up
        if not (abs(y_new) <= settings.blowup and abs(z_new) <= settings.blowup):
            raise BlowupError(
                f"Trajectory left |y|,|z| <= {settings.blowup:g} at t={len(ys) * dt:.6g} (x={state0.x})"
            )
        # settling is judged on z alone
        if settings.criterion == "branch":
            settled = bool(_near_fixed(z_new, fixed_psi, settings.tolerance))
        else:
            settled = abs(z_new - z) < settings.tolerance and abs(y_new - y) < settings.tolerance
        y, z = y_new, z_new
        ys.append(y)
        zs.append(z)
        # consecutive quiet steps; any excursion resets the count
        quiet = quiet + 1 if settled else 0
        if quiet >= settings.window or (leave_radius is not None and abs(z - state0.z) > leave_radius):
            early = True
            break
    n = len(ys)
    t = state0.t + dt * np.arange(n)
    logger.debug("Flow: %s at x=%g ran %d steps (early stop: %s)", variant.kind, state0.x, n - 1, early)
    return Trajectory(t=t, x=np.full(n, state0.x), y=np.array(ys), z=np.array(zs), variant=variant, step=dt, terminated_early=early)


def relax_many(
    variant: HamiltonianVariant,
    params: model.ModelParams,
    xs,
    y0,
    z0,
    settings: IntegratorConfig | None = None,
    lyapunov_regions: list[str] | None = None,
) -> BatchRelaxation:
    """
    Integrates many trajectories at once, one frozen x each, and returns the
    terminal states. With lyapunov_regions given, also tracks the smallest
    slack tol*(1+|V|) - (V_new - V_old) seen along each trajectory.
    """
    settings = settings or IntegratorConfig(step=config.ANALYSIS_STEP, t_max=config.ANALYSIS_T_MAX, criterion="increment")
    xs = np.asarray(xs, dtype=float)
    frames = [flow_frame(variant, params, float(x)) for x in xs]
    sign = frames[0].sign if frames else 1.0
    roots = [np.array([f.roots[i] for f in frames]) for i in range(len(VARIANT_FACTORS[variant.kind][1]))]
    droots = [np.array([f.droots[i] for f in frames]) for i in range(len(roots))]
    psi0 = np.array([f.psi0 for f in frames])
    dpsi0 = np.array([f.dpsi0 for f in frames])
    fixed_psi = [np.array([f.branches.psi[mu - 1] for f in frames]) for mu in variant.fixed_branches]

    y = np.array(y0, dtype=float)
    z = np.array(z0, dtype=float)
    n = len(xs)
    active = np.ones(n, dtype=bool)
    blown = np.zeros(n, dtype=bool)
    quiet = np.zeros(n, dtype=int)
    t_end = np.zeros(n)
    margin = np.full(n, np.inf)

    target = None
    if lyapunov_regions is not None:
        picks = [_lyapunov_target(variant.kind, r) for r in lyapunov_regions]
        all_psi = [np.array([f.branches.psi[k] for f in frames]) for k in range(len(frames[0].branches.psi))] if frames else []
        target = np.array([all_psi[mu - 1][i] for i, (mu, _) in enumerate(picks)]) if frames else np.array([])
        quadratic = np.array([q for _, q in picks], dtype=bool)

        def lyap(zv):
            gap = zv - target
            return np.where(quadratic, 0.5 * gap * gap, gap)

        v_old = lyap(z)

    dt = settings.step
    n_steps = int(round(settings.t_max / dt))
    for k in range(1, n_steps + 1):
        if not active.any():
            break
        with np.errstate(over="ignore", invalid="ignore"):
            y_new, z_new = _rk4(sign, roots, droots, psi0, dpsi0, y, z, dt)
        bad = active & ~((np.abs(y_new) <= settings.blowup) & (np.abs(z_new) <= settings.blowup))
        if bad.any():
            blown |= bad
            active &= ~bad
            t_end[bad] = k * dt
        if settings.criterion == "branch":
            settled = _near_fixed(z_new, fixed_psi, settings.tolerance)
        else:
            settled = (np.abs(z_new - z) < settings.tolerance) & (np.abs(y_new - y) < settings.tolerance)
        y = np.where(active, y_new, y)
        z = np.where(active, z_new, z)
        if target is not None:
            v_new = lyap(z)
            slack = config.LYAPUNOV_REL_TOL * (1.0 + np.abs(v_old)) - (v_new - v_old)
            margin = np.where(active, np.minimum(margin, slack), margin)
            v_old = v_new
        quiet = np.where(active, np.where(settled, quiet + 1, 0), quiet)
        done = active & (quiet >= settings.window)
        t_end[active] = k * dt
        active &= ~done
    converged = ~blown & (quiet >= settings.window)
    logger.info("Flow: relaxed %d trajectories (%d settled, %d blown up)", n, int(converged.sum()), int(blown.sum()))
    return BatchRelaxation(y=y, z=z, t_end=t_end, converged=converged, blown_up=blown, lyapunov_margin=margin)


if __name__ == "__main__":
    params = model.ModelParams(j0bar=1.0)
    variant = HamiltonianVariant(SQUARED)
    b = branch_functions(params, 0.3)
    start = ContactState(0.3, b.y[0], b.psi[0] - 0.2)
    trajectory = integrate(variant, params, start, step=1e-2, t_max=200.0)
    end = trajectory.final
    print(f"Flow: z(T)={end.z:.12f}, psi_1={b.psi[0]:.12f}, gap={abs(end.z - b.psi[0]):.2e}")
    for mu in variant.fixed_branches:
        coeffs = linearized_coefficients(variant, params, 0.3, mu)
        print(f"  mu={mu}: c={coeffs.c:.6f} d={coeffs.d:.6f} displayed d={coeffs.d_displayed}")

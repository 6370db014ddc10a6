# tests/test_dynamics.py
import math

import numpy as np
import pytest

from src import dynamics, model
from src.checks import linear_rk4_order
from src.errors import BlowupError, DomainError, RegionError


@pytest.fixture
def low():
    return model.ModelParams(j0bar=1.0)


@pytest.fixture
def squared():
    return dynamics.HamiltonianVariant(dynamics.SQUARED)


def _const(value):
    return lambda x, y, z: value


def test_generic_vector_field_examples():
    state = dynamics.ContactState(0.3, -0.4, 1.5)
    h_y = dynamics.ContactHamiltonian(lambda x, y, z: y, _const(0.0), _const(1.0), _const(0.0))
    assert dynamics.generic_vector_field(h_y, dynamics.PLUS_YDX, state) == (1.0, 0.0, 0.0)
    h_z = dynamics.ContactHamiltonian(lambda x, y, z: z, _const(0.0), _const(0.0), _const(1.0))
    assert dynamics.generic_vector_field(h_z, dynamics.PLUS_YDX, state) == (0.0, -0.4, 1.5)
    zero = dynamics.ContactHamiltonian(_const(0.0), _const(0.0), _const(0.0), _const(0.0))
    assert dynamics.generic_vector_field(zero, dynamics.MINUS_YDX, state) == (0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        dynamics.generic_vector_field(zero, "dz", state)


def test_contact_state_must_be_finite():
    with pytest.raises(DomainError):
        dynamics.ContactState(0.1, math.nan, 0.0)


def test_branch_functions(low):
    b = dynamics.branch_functions(low, 0.3)
    root = model.solve_branches(low, 0.3)[0]
    assert b.dpsi[0] == -root.y_star < 0
    assert b.psi21 > 0
    assert dynamics.branch_functions(low, 1e-4).psi21 < 1e-3
    for x in (0.0, 0.6, -0.6):
        with pytest.raises(RegionError):
            dynamics.branch_functions(low, x)
    with pytest.raises(RegionError):
        dynamics.branch_functions(model.ModelParams(j0bar=0.4), 0.1)


def test_psi0_kinds(low):
    assert dynamics.Psi0().evaluate(0.3, (1.0,), (0.0,)) == (1.0, 0.0)
    value, slope = dynamics.Psi0("exponential", 2.0, 0.5).evaluate(0.4, (1.0,), (0.0,))
    assert value == pytest.approx(2.0 * math.exp(0.2))
    assert slope == pytest.approx(0.5 * value)
    with pytest.raises(ValueError):
        dynamics.Psi0("gaussian")
    with pytest.raises(DomainError):
        dynamics.Psi0(scale=-1.0)


def test_balanced_psi0_sets_unit_rate(low):
    for kind in (dynamics.SQUARED, dynamics.CUBIC, dynamics.QUADRATIC):
        variant = dynamics.HamiltonianVariant(kind, dynamics.Psi0("balanced", 1.5))
        for x in (0.1, 0.3, -0.2):
            assert dynamics.linearized_coefficients(variant, low, x, 1).c == pytest.approx(1.5, rel=1e-9)


def test_vector_field_signs(low, squared):
    b = dynamics.branch_functions(low, 0.3)
    for mu in (1, 2):
        on_branch = dynamics.ContactState(0.3, b.y[mu - 1], b.psi[mu - 1])
        assert dynamics.vector_field(squared, low, on_branch) == pytest.approx((0.0, 0.0, 0.0), abs=1e-14)
    between = dynamics.ContactState(0.3, 0.0, b.psi[0] + 0.5 * b.psi21)
    assert dynamics.vector_field(squared, low, between)[2] < 0
    below = dynamics.ContactState(0.3, 0.0, b.psi[0] - 0.1)
    assert dynamics.vector_field(squared, low, below)[2] > 0


def test_specific_field_agrees_with_generic(low):
    variant = dynamics.HamiltonianVariant(dynamics.CUBIC, dynamics.Psi0("exponential", 1.0, 0.7))
    h = dynamics.variant_hamiltonian(variant, low, 0.25)
    for y, z in [(0.3, -1.2), (-0.8, -0.9), (0.95, -1.05)]:
        state = dynamics.ContactState(0.25, y, z)
        assert dynamics.vector_field(variant, low, state) == pytest.approx(
            dynamics.generic_vector_field(h, dynamics.PLUS_YDX, state), abs=1e-12
        )


def test_linear_variant_needs_nonzero_field(low):
    variant = dynamics.HamiltonianVariant(dynamics.LINEAR)
    with pytest.raises(RegionError):
        dynamics.vector_field(variant, low, dynamics.ContactState(0.0, 0.0, 0.0))
    # defined outside I+ where only one equilibrium exists
    root = model.solve_branches(low, 0.8)[0]
    state = dynamics.ContactState(0.8, root.y_star, root.z)
    assert dynamics.vector_field(variant, low, state) == pytest.approx((0.0, 0.0, 0.0), abs=1e-14)


def test_integrate_relaxes_to_most_stable(low, squared):
    b = dynamics.branch_functions(low, 0.3)
    start = dynamics.ContactState(0.3, b.y[0], b.psi[0] - 0.2)
    trajectory = dynamics.integrate(squared, low, start, step=1e-2, t_max=200.0)
    assert abs(trajectory.final.z - b.psi[0]) < 1e-6
    assert abs(trajectory.final.y - b.y[0]) < 1e-6
    assert np.max(np.abs(trajectory.x - 0.3)) <= 1e-14
    assert trajectory.terminated_early
    assert len(trajectory) < 20001
    assert trajectory.t[-1] < 150.0


def test_integrate_approaches_metastable_from_above(low, squared):
    b = dynamics.branch_functions(low, 0.3)
    start = dynamics.ContactState(0.3, b.y[1], b.psi[1] + 0.1)
    trajectory = dynamics.integrate(squared, low, start, step=1e-2, t_max=200.0)
    gap = trajectory.z - b.psi[1]
    assert np.all(gap >= 0)
    assert np.all(np.diff(gap) <= 0)
    assert gap[-1] < 0.02


def test_integrate_fixed_point_stays_put(low, squared):
    b = dynamics.branch_functions(low, 0.2)
    start = dynamics.ContactState(0.2, b.y[0], b.psi[0])
    trajectory = dynamics.integrate(squared, low, start, step=1e-2, t_max=1.0)
    np.testing.assert_allclose(trajectory.z, b.psi[0], atol=1e-14)
    assert len(trajectory.states) == len(trajectory)


def test_integrate_blows_up_above_quadratic_branch(low):
    variant = dynamics.HamiltonianVariant(dynamics.QUADRATIC)
    b = dynamics.branch_functions(low, 0.3)
    with pytest.raises(BlowupError):
        dynamics.integrate(variant, low, dynamics.ContactState(0.3, b.y[1], b.psi[1] + 0.05), step=1e-2, t_max=200.0)


def test_integrator_config_validation():
    with pytest.raises(DomainError):
        dynamics.IntegratorConfig(step=0.0)
    with pytest.raises(ValueError):
        dynamics.IntegratorConfig(criterion="energy")


def test_relax_many_matches_integrate(low, squared):
    xs = [0.25, 0.3, -0.4]
    frames = [dynamics.branch_functions(low, x) for x in xs]
    y0 = [b.y[1] for b in frames]
    z0 = [b.psi[1] - 0.05 for b in frames]
    settings = dynamics.IntegratorConfig(step=1e-2, t_max=300.0, criterion="increment")
    batch = dynamics.relax_many(squared, low, xs, y0, z0, settings)
    assert batch.converged.all()
    assert not batch.blown_up.any()
    for i, x in enumerate(xs):
        single = dynamics.integrate(squared, low, dynamics.ContactState(x, y0[i], z0[i]), settings=settings)
        assert batch.z[i] == pytest.approx(single.final.z, abs=1e-10)
        assert batch.z[i] == pytest.approx(frames[i].psi[0], abs=1e-8)


def test_relax_many_branch_criterion_stops_early(low, squared):
    xs = [0.3, -0.3]
    frames = [dynamics.branch_functions(low, x) for x in xs]
    settings = dynamics.IntegratorConfig(step=1e-2, t_max=200.0)
    batch = dynamics.relax_many(squared, low, xs, [b.y[0] for b in frames], [b.psi[0] - 0.2 for b in frames], settings)
    assert batch.converged.all()
    assert np.all(batch.t_end < 200.0)
    for i, b in enumerate(frames):
        single = dynamics.integrate(squared, low, dynamics.ContactState(xs[i], b.y[0], b.psi[0] - 0.2), settings=settings)
        assert single.terminated_early
        assert batch.t_end[i] == pytest.approx(single.t[-1], abs=0.05)


@pytest.mark.parametrize("mu, expected", [(1, "D1Plus"), (2, "D2Plus")])
def test_classify_region(low, mu, expected):
    b = dynamics.branch_functions(low, 0.3)
    assert dynamics.classify_region(low, dynamics.ContactState(0.3, 0.0, b.psi[mu - 1])) == expected


def test_classify_region_off_and_cubic(low):
    assert dynamics.classify_region(low, dynamics.ContactState(0.0, 0.2, -1.0)) == dynamics.OFF_REGION
    assert dynamics.classify_region(low, dynamics.ContactState(0.7, 0.2, -1.0)) == dynamics.OFF_REGION
    b = dynamics.branch_functions(low, -0.3)
    state = dynamics.ContactState(-0.3, 0.0, b.psi[1] + 0.01)
    assert dynamics.classify_region(low, state, dynamics.CUBIC) == "D3Minus"
    assert dynamics.classify_region(low, state) == "D2Minus"


def test_lyapunov(low, squared):
    b = dynamics.branch_functions(low, 0.3)
    on_branch = dynamics.ContactState(0.3, b.y[0], b.psi[0])
    assert dynamics.lyapunov(squared, low, "D1Plus", on_branch) == (0.0, 0.0)
    between = dynamics.ContactState(0.3, 0.0, b.psi[0] + 0.3 * b.psi21)
    value, rate = dynamics.lyapunov(squared, low, "D1Plus", between)
    assert value > 0 and rate < 0
    above = dynamics.ContactState(0.3, 0.0, b.psi[1] + 0.1)
    value, rate = dynamics.lyapunov(squared, low, "D2Plus", above)
    assert value == pytest.approx(0.1) and rate < 0
    with pytest.raises(RegionError):
        dynamics.lyapunov(squared, low, "D2Plus", between)


def test_lyapunov_series_is_non_increasing(low, squared):
    b = dynamics.branch_functions(low, 0.3)
    trajectory = dynamics.integrate(squared, low, dynamics.ContactState(0.3, b.y[0], b.psi[0] + 0.5 * b.psi21), step=1e-2, t_max=50.0)
    regions, values, rates = dynamics.lyapunov_series(squared, low, trajectory)
    assert set(regions) == {"D1Plus"}
    assert np.all(np.diff(values) <= 1e-12 * (1 + values[:-1]))
    assert np.all(rates <= 0)


def test_linearized_coefficients(low, squared):
    b = dynamics.branch_functions(low, 0.3)
    coeffs = dynamics.linearized_coefficients(squared, low, 0.3, 1)
    assert coeffs.c == pytest.approx(b.psi21 ** 2)
    assert coeffs.c > 0
    assert dynamics.linearized_coefficients(squared, low, 0.3, 2).c == pytest.approx(0.0, abs=1e-12)
    cubic = dynamics.HamiltonianVariant(dynamics.CUBIC)
    assert dynamics.linearized_coefficients(cubic, low, 0.3, 2).c < 0
    assert dynamics.linearized_coefficients(squared, low, 0.01, 1).c < 1e-3
    with pytest.raises(ValueError):
        dynamics.linearized_coefficients(squared, low, 0.3, 3)


def test_displayed_d_matches_jacobian_except_squared_mu1(low):
    psi0 = dynamics.Psi0("exponential", 1.0, 0.4)
    cubic = dynamics.HamiltonianVariant(dynamics.CUBIC, psi0)
    for mu in (1, 2, 3):
        coeffs = dynamics.linearized_coefficients(cubic, low, 0.25, mu)
        assert coeffs.d == pytest.approx(coeffs.d_displayed, rel=1e-10)
    squared = dynamics.HamiltonianVariant(dynamics.SQUARED, psi0)
    coeffs = dynamics.linearized_coefficients(squared, low, 0.25, 1)
    assert coeffs.d != pytest.approx(coeffs.d_displayed, rel=1e-6)


@pytest.mark.parametrize(
    "c, d, y0, z0, t, expected",
    [
        (1.0, 0.0, 0.0, 1.0, 0.0, (0.0, 1.0)),
        (1.0, 0.0, 0.0, 1.0, math.log(2.0), (0.0, 0.5)),
        (1.0, 2.0, 0.0, 1.0, 1.0, (2.0 / math.e, 1.0 / math.e)),
    ],
)
def test_linearized_solution(c, d, y0, z0, t, expected):
    assert dynamics.linearized_solution(c, d, y0, z0, t) == pytest.approx(expected)


def test_rk4_linear_is_fourth_order():
    assert linear_rk4_order() >= 3.9

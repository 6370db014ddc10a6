# tests/test_model.py
import math

import numpy as np
import pytest

from src import model
from src.errors import DomainError


@pytest.fixture
def low():
    return model.ModelParams(j0bar=1.0)


def test_params_validation():
    with pytest.raises(DomainError):
        model.ModelParams(j0bar=0.0)
    with pytest.raises(DomainError):
        model.ModelParams(j0bar=math.nan)
    with pytest.raises(DomainError):
        model.ModelParams(j0bar=1.0, beta=2.0, j0=1.0)


def test_from_raw_converts_once():
    params = model.ModelParams.from_raw(0.5, 2.0, 0.2)
    assert params.j0bar == 1.0
    assert params.field_x() == pytest.approx(0.1)
    assert model.ModelParams(j0bar=1.0).field_x() is None


@pytest.mark.parametrize(
    "x, y, expected",
    [
        (0.0, 0.0, -math.log(2.0)),
        (0.1, 0.5, 0.25 - math.log(2.0 * math.cosh(1.1))),
        (100.0, 0.9, 0.81 - (101.8 + math.log1p(math.exp(-203.6)))),
    ],
)
def test_pseudo_free_energy(low, x, y, expected):
    assert model.pseudo_free_energy(low, x, y) == pytest.approx(expected, rel=1e-14, abs=1e-15)


def test_derivatives(low):
    assert model.dpsi_dx(low, 0.0, 0.0) == 0.0
    ys = np.linspace(-0.99, 0.99, 101)
    assert np.all(model.d2psi_dx2(low, 0.3, ys) < 0)
    assert abs(model.dpsi_dy(low, 0.1, 0.9663)) < 1e-3
    # d2psi/dy2 changes sign: not convex in y
    assert model.d2psi_dy2(low, 0.0, 0.0) < 0 < model.d2psi_dy2(low, 0.0, 0.95)


def test_x_of_y(low):
    assert model.x_of_y(low, 0.0) == 0.0
    assert model.x_of_y(low, 0.5) == pytest.approx(-1.0 + 0.5 * math.log(3.0), abs=1e-15)
    assert model.x_of_y(low, -0.5) == pytest.approx(0.450694, abs=1e-6)
    assert isinstance(model.x_of_y(low, 0.5), float)
    with pytest.raises(DomainError):
        model.x_of_y(low, 1.0)


def test_dx_dy(low):
    assert model.dx_dy(low, 0.0) == -1.0
    s = math.sqrt(0.5)
    assert abs(model.dx_dy(low, s)) < 1e-12
    assert abs(model.dx_dy(low, -s)) < 1e-12
    assert np.all(model.dx_dy(model.ModelParams(j0bar=0.4), np.linspace(-0.999, 0.999, 2001)) > 0)


@pytest.mark.parametrize(
    "j0bar, expected",
    [(0.5, model.CRITICAL), (1.0, model.LOW_TEMPERATURE), (0.4, model.HIGH_TEMPERATURE)],
)
def test_classify_phase(j0bar, expected):
    assert model.classify_phase(model.ModelParams(j0bar=j0bar)) == expected


def test_spinodals():
    lo, hi = model.spinodal_points(model.ModelParams(j0bar=1.0))
    assert lo == pytest.approx(-math.sqrt(0.5), abs=1e-12)
    assert hi == pytest.approx(math.sqrt(0.5), abs=1e-12)
    assert model.spinodal_points(model.ModelParams(j0bar=0.6))[1] == pytest.approx(0.4082483, abs=1e-7)
    assert model.spinodal_points(model.ModelParams(j0bar=0.4)) is None
    assert model.spinodal_field(model.ModelParams(j0bar=1.0)) == pytest.approx(0.53284, abs=1e-5)


def test_solve_branches_at_zero(low):
    roots = model.solve_branches(low, 0.0)
    ys = sorted(r.y_star for r in roots)
    assert ys[1] == 0.0
    assert ys[2] == pytest.approx(0.9575, abs=1e-4)
    assert ys[0] == -ys[2]
    # tie at x = 0 goes to the positive root
    assert roots[0].y_star > 0
    assert roots[0].stability == model.MOST_STABLE


def test_solve_branches_three_roots(low):
    roots = model.solve_branches(low, 0.1)
    assert len(roots) == 3
    by_mu = {r.mu: r for r in roots}
    assert by_mu[1].y_star == pytest.approx(0.966, abs=5e-4)
    assert by_mu[2].y_star == pytest.approx(-0.946, abs=5e-4)
    assert by_mu[3].y_star == pytest.approx(-0.100, abs=5e-3)
    assert [r.stability for r in roots] == [model.MOST_STABLE, model.METASTABLE, model.UNSTABLE]
    assert by_mu[1].z < by_mu[2].z < by_mu[3].z
    for r in roots:
        assert abs(model.self_consistency_residual(low, 0.1, r.y_star)) < 1e-12
        assert abs(model.x_of_y(low, r.y_star) - 0.1) < 1e-10


def test_solve_branches_high_temperature():
    roots = model.solve_branches(model.ModelParams(j0bar=0.4), 0.1)
    assert len(roots) == 1
    assert roots[0].stability == model.MOST_STABLE


def test_solve_branches_antisymmetric(low):
    for x in (0.05, 0.3, 0.52, 0.9):
        plus = model.solve_branches(low, x)
        minus = model.solve_branches(low, -x)
        assert [r.y_star for r in plus] == [-r.y_star for r in minus]
        assert [r.z for r in plus] == [r.z for r in minus]


def test_solve_branches_at_spinodal_image(low):
    x_sp = model.spinodal_field(low)
    roots = model.solve_branches(low, x_sp)
    assert len(roots) == 2
    merged = [r for r in roots if r.degenerate]
    assert len(merged) == 1
    assert merged[0].mu == 2
    assert merged[0].stability == model.METASTABLE
    assert merged[0].y_star == pytest.approx(-math.sqrt(0.5))


def test_solve_branches_rejects_nonfinite(low):
    with pytest.raises(DomainError):
        model.solve_branches(low, math.inf)


@pytest.mark.parametrize("j0bar, x", [(1.0, 40.0), (1.0, -40.0), (0.4, 25.0)])
def test_solve_branches_saturated_field_stays_inside(j0bar, x):
    params = model.ModelParams(j0bar=j0bar)
    (root,) = model.solve_branches(params, x)
    assert -1.0 < root.y_star < 1.0
    assert abs(root.y_star) == model.Y_EDGE
    assert math.isfinite(model.x_of_y(params, root.y_star))
    assert math.isfinite(root.z)


def test_small_y_approx():
    high = model.ModelParams(j0bar=0.4)
    assert model.small_y_approx(high, 0.0) == 0.0
    assert model.small_y_approx(high, 0.02) == pytest.approx(0.1)
    assert model.small_y_approx(model.ModelParams(j0bar=1.0), 0.02) == pytest.approx(-0.02)
    assert model.small_y_approx(high, 0.02) == pytest.approx(model.solve_branches(high, 0.02)[0].y_star, abs=5e-3)
    with pytest.raises(DomainError):
        model.small_y_approx(model.ModelParams(j0bar=0.5), 0.01)


def test_exact_free_energy_small_n():
    assert model.exact_free_energy_per_spin(1, 1.0, 1.0, 0.0) == pytest.approx(-1.0 - math.log(2.0))
    assert model.exact_free_energy_per_spin(2, 1.0, 1.0, 0.0) == pytest.approx(-0.5 * math.log(2 * math.e ** 2 + 2))
    beta, h = 0.7, 0.3
    assert model.exact_free_energy_per_spin(1, beta, 1.0, h) == pytest.approx(
        -(beta + math.log(2 * math.cosh(beta * h))) / beta
    )


def test_exact_free_energy_rejects_bad_n():
    with pytest.raises(DomainError):
        model.exact_free_energy_per_spin(0, 1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        model.exact_free_energy_per_spin(2.5, 1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        model.exact_free_energy_per_spin(4, -1.0, 1.0, 0.0)


def test_saddle_free_energy():
    saddle = model.saddle_free_energy_per_spin(1.0, 1.0, 0.1)
    root = model.solve_branches(model.ModelParams(j0bar=1.0), 0.1)[0]
    assert saddle == pytest.approx(root.z)
    assert model.exact_free_energy_per_spin(4096, 1.0, 1.0, 0.1) == pytest.approx(saddle, abs=1e-2)

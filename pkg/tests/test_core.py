#!/usr/bin/env python3
"""Tests for the time grid, potentials, cost model, initial states and norms."""

import math
import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core import (
    CostModel,
    DimensionError,
    DoubleWellPotential,
    InitialStates,
    InitialStateSource,
    NonFiniteError,
    QuadraticPotential,
    TimeGrid,
    ZeroPotential,
    as_control_matrix,
    as_price_vector,
    norm_control,
    norm_price,
    potential_d1,
    potential_d2,
    potential_eval,
    potential_to_dict,
)


def test_time_grid_conventions():
    grid = TimeGrid(1.0, 4)
    assert grid.dt == 0.25
    assert_allclose(grid.node_times(), [0.0, 0.25, 0.5, 0.75, 1.0])
    assert_allclose(grid.left_times(), [0.0, 0.25, 0.5, 0.75])
    assert grid.node_times()[-1] == 1.0


def test_time_grid_node_times_are_not_accumulated():
    grid = TimeGrid(1.0, 1000)
    times = grid.node_times()
    assert times[-1] == 1.0
    assert times[500] == 0.5


@pytest.mark.parametrize("horizon,steps", [(1.0, 0), (1.0, -3), (0.0, 10), (-1.0, 10), (math.inf, 10)])
def test_time_grid_rejects_invalid(horizon, steps):
    with pytest.raises(ValueError):
        TimeGrid(horizon, steps)


def test_potential_values():
    z = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    assert_allclose(ZeroPotential().value(z), 0.0)
    assert_allclose(QuadraticPotential(10.0, 0.0).value(z), 5.0 * z * z)
    well = DoubleWellPotential(50.0, 0.25, 0.75)
    assert well.value(0.25) == 0.0
    assert well.value(0.75) == 0.0
    assert_allclose(well.value(0.5), 25.0 * 0.0625 ** 2)
    assert well.centres == (0.25, 0.75)


@pytest.mark.parametrize("potential", [
    ZeroPotential(),
    QuadraticPotential(10.0, 0.3),
    DoubleWellPotential(50.0, 0.25, 0.75),
])
def test_potential_derivatives_match_central_differences(potential):
    z = np.linspace(-0.5, 1.5, 41)
    h = 1e-6
    d1 = (potential_eval(potential, z + h) - potential_eval(potential, z - h)) / (2 * h)
    d2 = (potential_d1(potential, z + h) - potential_d1(potential, z - h)) / (2 * h)
    assert_allclose(potential_d1(potential, z), d1, rtol=1e-7, atol=1e-7)
    assert_allclose(potential_d2(potential, z), d2, rtol=1e-7, atol=1e-7)


def random_potential(rng):
    kind = rng.integers(3)
    if kind == 0:
        return ZeroPotential()
    if kind == 1:
        return QuadraticPotential(float(rng.uniform(0, 20)), float(rng.uniform(-1, 1)))
    return DoubleWellPotential(float(rng.uniform(0, 60)), float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)))


def test_potential_derivatives_on_random_samples():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        potential = random_potential(rng)
        z = float(rng.uniform(-1.25, 1.25))
        h = 1e-5 * max(1.0, abs(z))
        d1 = potential_d1(potential, z)
        d2 = potential_d2(potential, z)
        fd1 = (potential_eval(potential, z + h) - potential_eval(potential, z - h)) / (2 * h)
        fd2 = (potential_d1(potential, z + h) - potential_d1(potential, z - h)) / (2 * h)
        assert abs(fd1 - d1) <= 1e-7 * max(1.0, abs(d1)), (potential, z)
        assert abs(fd2 - d2) <= 1e-7 * max(1.0, abs(d2)), (potential, z)


def test_potential_rejects_negative_weight():
    with pytest.raises(ValueError):
        QuadraticPotential(-1.0)
    with pytest.raises(ValueError):
        DoubleWellPotential(math.nan, 0.0, 1.0)


def test_potential_to_dict():
    assert potential_to_dict(ZeroPotential()) == {'kind': 'zero'}
    assert potential_to_dict(QuadraticPotential(10.0, 0.5)) == {'kind': 'quadratic', 'r': 10.0, 'y': 0.5}
    assert potential_to_dict(DoubleWellPotential(50.0, 0.25, 0.75))['kind'] == 'double_well'


def test_cost_model_running_cost():
    cost = CostModel(2.0, QuadraticPotential(4.0, 1.0))
    assert_allclose(cost.running_cost(np.array([1.0, 2.0]), np.array([1.0, 3.0])), [1.0, 9.0 + 2.0])


@pytest.mark.parametrize("c0", [0.0, -1.0, math.nan])
def test_cost_model_requires_positive_c0(c0):
    with pytest.raises(ValueError):
        CostModel(c0)


def test_evenly_spaced_initial_states():
    states = InitialStates.evenly_spaced(0.0, 1.0, 5)
    assert_allclose(states.samples, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert states.source is InitialStateSource.EVENLY_SPACED
    assert states.count == 5
    assert states.mean() == 0.5
    assert InitialStates.evenly_spaced(0.0, 1.0, 1).samples.tolist() == [0.5]


def test_initial_states_are_read_only():
    states = InitialStates.explicit([0.1, 0.2])
    with pytest.raises(ValueError):
        states.samples[0] = 1.0


def test_initial_states_reject_non_finite():
    with pytest.raises(NonFiniteError):
        InitialStates.explicit([0.0, math.inf])


def test_initial_states_from_file(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("x\n0.1\n0.5\n0.9\n")
    states = InitialStates.from_file(path)
    assert_allclose(states.samples, [0.1, 0.5, 0.9])
    assert states.to_dict()['path'] == str(path)

    headerless = tmp_path / "y.csv"
    headerless.write_text("1.5\n2.5\n")
    assert_allclose(InitialStates.from_file(headerless).samples, [1.5, 2.5])


def test_initial_states_from_file_reports_bad_row(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("x\n0.1\nabc\n")
    with pytest.raises(ValueError, match="row 2"):
        InitialStates.from_file(path)


def test_initial_states_from_file_rejects_missing_values(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("x\n0.1\nnan\n")
    with pytest.raises(NonFiniteError):
        InitialStates.from_file(path)
    path.write_text("x\n0.1\nNA\n")
    with pytest.raises(ValueError, match="row 2"):
        InitialStates.from_file(path)


def test_array_validation():
    grid = TimeGrid(1.0, 3)
    with pytest.raises(DimensionError):
        as_price_vector(np.zeros(4), grid)
    with pytest.raises(DimensionError):
        as_control_matrix(np.zeros((2, 4)), grid)
    with pytest.raises(DimensionError):
        as_control_matrix(np.zeros((2, 3)), grid, agents=3)
    with pytest.raises(NonFiniteError):
        as_price_vector([0.0, math.nan, 0.0], grid)


def test_norms_on_constant_fields():
    grid = TimeGrid(2.0, 8)
    assert_allclose(norm_price(np.full(8, 3.0), grid), 3.0 * math.sqrt(2.0))
    assert_allclose(norm_control(np.full((4, 8), 3.0), grid), 3.0 * math.sqrt(2.0))


def test_norms_are_consistent_under_refinement():
    # piecewise-constant refinement of the same function keeps the norm
    coarse = TimeGrid(1.0, 4)
    fine = TimeGrid(1.0, 8)
    omega = np.array([1.0, -2.0, 0.5, 4.0])
    assert norm_price(omega, coarse) == norm_price(np.repeat(omega, 2), fine)
    alpha = np.array([[1.0, 2.0, 3.0, 4.0], [0.0, -1.0, 0.5, 2.0]])
    assert norm_control(alpha, coarse) == norm_control(np.repeat(alpha, 2, axis=1), fine)


def test_norm_price_scales_with_absolute_factor():
    grid = TimeGrid(1.0, 4)
    omega = np.array([1.0, 2.0, 3.0, 4.0])
    assert_allclose(norm_price(omega, grid), math.sqrt(30.0 / 4.0))
    base = norm_price(omega, grid)
    for s in (-2.0, 0.5, 0.25, -8.0):
        assert norm_price(s * omega, grid) == abs(s) * base
    for s in (-3.0, 0.1, 7.5):
        assert_allclose(norm_price(s * omega, grid), abs(s) * base, rtol=1e-14)
    assert norm_price(0.0 * omega, grid) == 0.0

#!/usr/bin/env python3
"""Agreement of the tape, adjoint and finite-difference gradient backends."""

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
    QuadraticPotential,
    TimeGrid,
    ZeroPotential,
)
from src.grad import (
    AdjointBackend,
    FiniteDifferenceBackend,
    TapeBackend,
    grad_alpha,
    parse_backend,
)
from src.objective import lagrangian


def random_potential(rng):
    kind = rng.integers(3)
    if kind == 0:
        return ZeroPotential()
    if kind == 1:
        return QuadraticPotential(float(rng.uniform(0, 20)), float(rng.uniform(-1, 1)))
    a = float(rng.uniform(0, 0.5))
    return DoubleWellPotential(float(rng.uniform(0, 60)), a, a + float(rng.uniform(0.1, 0.8)))


def random_instance(seed):
    rng = np.random.default_rng(seed)
    agents = int(rng.integers(1, 6))
    steps = int(rng.integers(1, 33))
    grid = TimeGrid(float(rng.uniform(0.5, 2.0)), steps)
    cost = CostModel(float(rng.uniform(0.2, 3.0)), random_potential(rng), random_potential(rng))
    omega = rng.standard_normal(steps)
    alpha = 0.5 * rng.standard_normal((agents, steps))
    supply = rng.standard_normal(steps)
    x = rng.uniform(0.0, 1.0, agents)
    return omega, alpha, supply, cost, x, grid


@pytest.mark.parametrize("seed", range(100))
def test_tape_matches_adjoint(seed):
    omega, alpha, supply, cost, x, grid = random_instance(seed)
    tape = grad_alpha(TapeBackend(), omega, alpha, supply, cost, x, grid)
    adjoint = grad_alpha(AdjointBackend(), omega, alpha, supply, cost, x, grid)
    assert tape.shape == alpha.shape
    assert_allclose(tape, adjoint, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("seed", range(100))
def test_tape_matches_central_differences(seed):
    omega, alpha, supply, cost, x, grid = random_instance(seed)
    tape = grad_alpha(TapeBackend(), omega, alpha, supply, cost, x, grid)
    fd = grad_alpha(FiniteDifferenceBackend(), omega, alpha, supply, cost, x, grid)
    assert_allclose(fd, tape, rtol=1e-5, atol=1e-7)


def test_terminal_quadratic_gradient_by_hand():
    # p = r2 * (z_N - y2); dL/dalpha = -(dt/M) (c0 alpha + omega + p)
    grid = TimeGrid(1.0, 2)
    cost = CostModel(1.0, ZeroPotential(), QuadraticPotential(10.0, 0.0))
    alpha = np.array([[1.0, -1.0]])
    omega = np.array([0.5, 0.25])
    gradient = grad_alpha(AdjointBackend(), omega, alpha, np.zeros(2), cost, [2.0], grid)
    p = 10.0 * 2.0
    assert_allclose(gradient, [[-0.5 * (1.0 + 0.5 + p), -0.5 * (-1.0 + 0.25 + p)]])


def test_running_cost_enters_only_later_states():
    grid = TimeGrid(1.0, 3)
    cost = CostModel(1.0, QuadraticPotential(1.0, 0.0), ZeroPotential())
    alpha = np.zeros((1, 3))
    gradient = grad_alpha(AdjointBackend(), np.zeros(3), alpha, np.zeros(3), cost, [3.0], grid)
    dt = grid.dt
    # z stays at 3; V'(z) = 3 at z_1, z_2
    assert_allclose(gradient, [[-dt * dt * 6.0, -dt * dt * 3.0, 0.0]], atol=1e-15)


def test_backend_parsing():
    assert isinstance(parse_backend('tape'), TapeBackend)
    assert isinstance(parse_backend('adjoint'), AdjointBackend)
    assert isinstance(parse_backend('fd'), FiniteDifferenceBackend)
    with pytest.raises(ValueError):
        parse_backend('jax')
    with pytest.raises(ValueError):
        FiniteDifferenceBackend(step=0.0)


def test_unknown_backend_object():
    grid = TimeGrid(1.0, 2)
    with pytest.raises(TypeError):
        grad_alpha(object(), np.zeros(2), np.zeros((1, 2)), np.zeros(2), CostModel(1.0), [0.0], grid)


def test_dimension_mismatch():
    grid = TimeGrid(1.0, 2)
    with pytest.raises(DimensionError):
        grad_alpha(AdjointBackend(), np.zeros(3), np.zeros((1, 2)), np.zeros(2), CostModel(1.0), [0.0], grid)
    with pytest.raises(DimensionError):
        grad_alpha(AdjointBackend(), np.zeros(2), np.zeros((2, 2)), np.zeros(2), CostModel(1.0), [0.0], grid)


def test_finite_difference_step_underflow():
    grid = TimeGrid(1.0, 2)
    with pytest.raises(FloatingPointError):
        grad_alpha(FiniteDifferenceBackend(step=1e-300), np.zeros(2), np.ones((1, 2)),
                   np.zeros(2), CostModel(1.0), [0.0], grid)


@pytest.mark.parametrize("backend", [TapeBackend(), AdjointBackend()], ids=['tape', 'adjoint'])
def test_gradient_without_potentials_is_exact(backend):
    rng = np.random.default_rng(17)
    grid = TimeGrid(1.5, 12)
    agents = 4
    cost = CostModel(0.8)
    omega = rng.standard_normal(12)
    alpha = rng.standard_normal((agents, 12))
    x = rng.uniform(0.0, 1.0, agents)

    gradient = grad_alpha(backend, omega, alpha, np.zeros(12), cost, x, grid)
    expected = -(grid.horizon / (agents * grid.steps)) * (cost.c0 * alpha + omega)
    assert_allclose(gradient, expected, rtol=1e-14, atol=1e-16)
    again = grad_alpha(backend, omega, alpha, np.zeros(12), cost, x, grid)
    assert np.array_equal(gradient, again)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_step_does_not_decrease_objective(seed):
    omega, alpha, supply, cost, x, grid = random_instance(seed)
    gradient = grad_alpha(AdjointBackend(), omega, alpha, supply, cost, x, grid)
    before = lagrangian(omega, alpha, supply, cost, x, grid).total
    after = lagrangian(omega, alpha + 1e-4 * gradient, supply, cost, x, grid).total
    assert after >= before - 1e-10

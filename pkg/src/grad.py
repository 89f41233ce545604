"""
Gradient of the discrete objective with respect to the controls.

Three interchangeable backends produce the same M x N matrix:

- ``TapeBackend``: records the objective on a ``Tape`` and sweeps it backward.
- ``AdjointBackend``: the hand-derived discrete adjoint recursion,

      dL/dalpha[m][l] = -(1/M) * dt * ( c0*alpha[m][l] + omega[l] + p[m][l] ),
      p[m][l] = dt * sum_{j=l+1}^{N-1} V'(z[m][j]) + g'(z[m][N]),

  evaluated with one reverse cumulative sum per agent.
- ``FiniteDifferenceBackend``: central differences of the objective, for checks.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import ArrayLike

from .core import (
    ControlMatrix,
    CostModel,
    TimeGrid,
    as_control_matrix,
    as_price_vector,
    as_supply_vector,
    ensure_finite,
)
from .objective import initial_samples, lagrangian, rollout
from .tape import Tape


@dataclass(frozen=True)
class TapeBackend:
    name: str = 'tape'


@dataclass(frozen=True)
class AdjointBackend:
    name: str = 'adjoint'


@dataclass(frozen=True)
class FiniteDifferenceBackend:
    step: float = 1e-6
    name: str = 'fd'

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"finite-difference step must be positive, got {self.step!r}")


GradientBackend = Union[TapeBackend, AdjointBackend, FiniteDifferenceBackend]

BACKENDS = {
    'tape': TapeBackend,
    'adjoint': AdjointBackend,
    'fd': FiniteDifferenceBackend,
}


def parse_backend(name: str) -> GradientBackend:
    try:
        return BACKENDS[name]()
    except KeyError:
        raise ValueError(f"Unknown gradient backend {name!r}; choose one of {sorted(BACKENDS)}") from None


def grad_alpha(
    backend: GradientBackend,
    omega: ArrayLike,
    alpha: ArrayLike,
    supply: ArrayLike,
    cost: CostModel,
    x,
    grid: TimeGrid,
) -> ControlMatrix:
    """Gradient of the discrete objective with respect to every alpha[m][l]."""
    samples = initial_samples(x)
    omega = as_price_vector(omega, grid)
    supply = as_supply_vector(supply, grid)
    alpha = as_control_matrix(alpha, grid, agents=samples.size)

    match backend:
        case TapeBackend():
            gradient = tape_gradient(omega, alpha, supply, cost, samples, grid)
        case AdjointBackend():
            gradient = adjoint_gradient(omega, alpha, cost, samples, grid)
        case FiniteDifferenceBackend(step=step):
            gradient = finite_difference_gradient(omega, alpha, supply, cost, samples, grid, step)
        case _:
            raise TypeError(f"Unknown gradient backend: {type(backend).__name__}")

    ensure_finite(gradient, f"{backend.name} gradient")
    return gradient


def record_objective(tape: Tape, omega, alpha, supply, cost: CostModel, samples, grid: TimeGrid):
    """Record the discrete objective on ``tape``; returns (alpha leaf, total node)."""
    dt = grid.dt
    a = tape.leaf(alpha)
    w = tape.constant(omega)
    x0 = tape.constant(samples)

    z = tape.cumsum(tape.affine(a, scale=dt), initial=x0)
    z_running = tape.take(z, (slice(None), slice(None, -1)))
    z_end = tape.take(z, (slice(None), -1))

    running = tape.add(tape.affine(tape.square(a), scale=0.5 * cost.c0),
                       tape.potential(cost.running, z_running))
    running = tape.add(running, tape.mul(a, w))
    per_agent = tape.add(tape.affine(tape.sum(running, axis=1), scale=dt),
                         tape.potential(cost.terminal, z_end))

    supply_term = tape.constant(dt * np.sum(omega * supply))
    total = tape.sub(supply_term, tape.mean(per_agent))
    return a, total


def tape_gradient(omega, alpha, supply, cost: CostModel, samples, grid: TimeGrid) -> ControlMatrix:
    tape = Tape()
    a, total = record_objective(tape, omega, alpha, supply, cost, samples, grid)
    tape.backward(total)
    return tape.grad(a)


def costate(alpha, cost: CostModel, samples, grid: TimeGrid) -> np.ndarray:
    """p[m][l] = dt * sum_{j=l+1}^{N-1} V'(z[m][j]) + g'(z[m][N])."""
    dt = grid.dt
    z = rollout(alpha, samples, grid)
    agents, steps = alpha.shape

    tail = np.zeros((agents, steps), dtype=np.float64)
    if steps > 1:
        slopes = cost.running.d1(z[:, 1:-1])
        # reverse cumulative sum: tail[l] = sum over j >= l+1
        tail[:, :-1] = np.flip(np.cumsum(np.flip(slopes, axis=1), axis=1), axis=1)
    return dt * tail + cost.terminal.d1(z[:, -1])[:, None]


def adjoint_gradient(omega, alpha, cost: CostModel, samples, grid: TimeGrid) -> ControlMatrix:
    dt = grid.dt
    agents = alpha.shape[0]
    p = costate(alpha, cost, samples, grid)
    return -(1.0 / agents) * (dt * (cost.c0 * alpha + omega) + dt * p)


def finite_difference_gradient(omega, alpha, supply, cost: CostModel, samples, grid: TimeGrid,
                               step: float) -> ControlMatrix:
    """Central differences with per-entry step ``step*(1+|alpha|)``."""
    gradient = np.empty_like(alpha)
    perturbed = alpha.copy()
    for index in np.ndindex(alpha.shape):
        h = step * (1.0 + abs(alpha[index]))
        plus, minus = alpha[index] + h, alpha[index] - h
        if plus == alpha[index] or minus == alpha[index]:
            raise FloatingPointError(f"finite-difference step {h:g} underflows at entry {index}")
        perturbed[index] = plus
        upper = lagrangian(omega, perturbed, supply, cost, samples, grid).total
        perturbed[index] = minus
        lower = lagrangian(omega, perturbed, supply, cost, samples, grid).total
        perturbed[index] = alpha[index]
        gradient[index] = (upper - lower) / (plus - minus)
    return gradient

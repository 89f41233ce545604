"""
Forward-Euler rollout and the discretized saddle objective.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import (
    CostModel,
    InitialStates,
    NonFiniteError,
    PriceVector,
    StateMatrix,
    TimeGrid,
    as_control_matrix,
    as_price_vector,
    as_supply_vector,
)


@dataclass(frozen=True, eq=False)
class ObjectiveValue:
    """Discrete objective split into its supply term and per-agent costs."""
    total: float
    per_agent_cost: NDArray[np.float64]
    supply_term: float


def initial_samples(x) -> NDArray[np.float64]:
    if isinstance(x, InitialStates):
        return x.samples
    return np.asarray(x, dtype=np.float64).reshape(-1)


def rollout(alpha: ArrayLike, x, grid: TimeGrid) -> StateMatrix:
    """z[m][0] = x_m, z[m][l+1] = z[m][l] + dt*alpha[m][l]."""
    samples = initial_samples(x)
    alpha = as_control_matrix(alpha, grid, agents=samples.size)
    steps = np.empty((alpha.shape[0], grid.steps + 1), dtype=np.float64)
    steps[:, 0] = samples
    steps[:, 1:] = grid.dt * alpha
    # sequential prefix sum, so each node is z[l] + dt*alpha[l] rounded once
    return np.cumsum(steps, axis=1)


def lagrangian(
    omega: ArrayLike,
    alpha: ArrayLike,
    supply: ArrayLike,
    cost: CostModel,
    x,
    grid: TimeGrid,
) -> ObjectiveValue:
    """
    Discrete saddle objective

        (T/N) sum_l omega[l] Q[l]
          - (1/M) sum_m [ (T/N) sum_l (L(z[m][l], alpha[m][l]) + alpha[m][l] omega[l]) + g(z[m][N]) ].

    The running sum evaluates V at z[m][0..N-1]; z[m][N] enters only g.
    """
    omega = as_price_vector(omega, grid)
    supply = as_supply_vector(supply, grid)
    states = rollout(alpha, x, grid)
    alpha = np.asarray(alpha, dtype=np.float64)
    dt = grid.dt

    running = cost.running_cost(states[:, :-1], alpha) + alpha * omega
    per_agent = dt * np.sum(running, axis=1) + cost.terminal.value(states[:, -1])
    if not np.all(np.isfinite(per_agent)):
        agent = int(np.argmax(~np.isfinite(per_agent)))
        raise NonFiniteError("non-finite agent cost", f"agent {agent}")

    supply_term = dt * float(np.sum(omega * supply))
    total = supply_term - float(np.mean(per_agent))
    return ObjectiveValue(total=total, per_agent_cost=per_agent, supply_term=supply_term)


def price_gradient(alpha: ArrayLike, supply: ArrayLike, grid: TimeGrid) -> PriceVector:
    """d(objective)/d(omega[l]) = (T/N)(Q[l] - mean_m alpha[m][l]); exact, the objective is affine in omega."""
    alpha = as_control_matrix(alpha, grid)
    supply = as_supply_vector(supply, grid)
    return grid.dt * (supply - alpha.mean(axis=0))

"""
Primal-dual iteration for the discrete price formation saddle problem.

Each iteration takes a gradient ascent step in the controls, extrapolates,
then applies the closed-form proximal step in the price:

    alpha     <- alpha + (tau_alpha * M * N / T) * dL/dalpha
    alpha_bar <- 2 * alpha_new - alpha_old
    omega[l]  <- (omega[l] + tau_omega * (mean_m alpha_bar[m][l] - Q[l])) / (1 + tau_omega * sigma)
"""

import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .config import (
    ExplicitInit,
    InitStrategy,
    InnerSolveConfig,
    SeededNormalInit,
    SolverConfig,
    ZerosInit,
)
from .core import (
    ControlMatrix,
    CostModel,
    DimensionError,
    NonFiniteError,
    PriceVector,
    StateMatrix,
    SupplyVector,
    TimeGrid,
    as_control_matrix,
    as_price_vector,
    as_supply_vector,
)
from .grad import costate, grad_alpha
from .objective import initial_samples, lagrangian, rollout


logger = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """An iterate became non-finite."""

    def __init__(self, message: str, iteration: int, omega: PriceVector, alpha: ControlMatrix):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration
        self.omega = omega
        self.alpha = alpha


class InnerSolveError(RuntimeError):
    """Per-agent minimization did not reach its tolerance within budget."""

    def __init__(self, message: str, best_value: float, gradient_norm: float):
        super().__init__(f"{message} (best value {best_value:.6e}, gradient sup-norm {gradient_norm:.3e})")
        self.best_value = best_value
        self.gradient_norm = gradient_norm


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Final iterates and diagnostics of one solve."""
    omega: PriceVector
    alpha: ControlMatrix
    states: StateMatrix
    clearing_residual_sup: float
    objective_trace: Tuple[float, ...]
    trace_iterations: Tuple[int, ...]
    iterations_run: int
    config: SolverConfig
    seed: Optional[int]
    stopped_early: bool = False
    wall_time: float = 0.0


def clearing_residual(alpha: ArrayLike, supply: ArrayLike) -> Tuple[NDArray[np.float64], float]:
    """per_l[l] = mean_m alpha[m][l] - Q[l] and its sup-norm."""
    alpha = np.asarray(alpha, dtype=np.float64)
    supply = np.asarray(supply, dtype=np.float64)
    if alpha.ndim != 2:
        raise DimensionError(f"control must be an M x N matrix, got shape {alpha.shape}")
    if supply.shape != (alpha.shape[1],):
        raise DimensionError(f"supply must have shape ({alpha.shape[1]},), got {supply.shape}")
    per_l = alpha.mean(axis=0) - supply
    return per_l, float(np.max(np.abs(per_l)))


def dual_update(
    omega: ArrayLike,
    alpha_bar: ArrayLike,
    supply: ArrayLike,
    tau_omega: float,
    sigma: float = 0.0,
) -> PriceVector:
    """Closed-form proximal step in omega; sigma = 0 gives the undamped update."""
    omega = np.asarray(omega, dtype=np.float64)
    per_l, _ = clearing_residual(alpha_bar, supply)
    if omega.shape != per_l.shape:
        raise DimensionError(f"price must have shape {per_l.shape}, got {omega.shape}")
    return (omega + tau_omega * per_l) / (1.0 + tau_omega * sigma)


def initial_iterates(init: InitStrategy, agents: int, grid: TimeGrid) -> Tuple[ControlMatrix, PriceVector]:
    match init:
        case SeededNormalInit(seed=seed):
            rng = np.random.Generator(np.random.PCG64(seed))
            alpha = rng.standard_normal((agents, grid.steps))
            omega = rng.standard_normal(grid.steps)
        case ZerosInit():
            alpha = np.zeros((agents, grid.steps))
            omega = np.zeros(grid.steps)
        case ExplicitInit(alpha=alpha0, omega=omega0):
            alpha = as_control_matrix(alpha0, grid, agents=agents).copy()
            omega = as_price_vector(omega0, grid).copy()
        case _:
            raise TypeError(f"Unknown init strategy: {type(init).__name__}")
    return alpha, omega


class PdhgSolver:
    """Runs the primal-dual iteration for one cost model, supply and grid."""

    def __init__(self, config: Optional[SolverConfig] = None):
        self.config = config or SolverConfig()
        self.logger = logging.getLogger(self.__class__.__name__)

    def step(
        self,
        omega: PriceVector,
        alpha: ControlMatrix,
        supply: SupplyVector,
        cost: CostModel,
        samples: NDArray[np.float64],
        grid: TimeGrid,
    ) -> Tuple[PriceVector, ControlMatrix]:
        """One iteration; returns the new (omega, alpha)."""
        cfg = self.config
        agents = alpha.shape[0]
        gradient = grad_alpha(cfg.backend, omega, alpha, supply, cost, samples, grid)
        alpha_new = alpha + (cfg.tau_alpha * agents * grid.steps / grid.horizon) * gradient
        alpha_bar = 2.0 * alpha_new - alpha
        omega_new = dual_update(omega, alpha_bar, supply, cfg.tau_omega, cfg.sigma)
        return omega_new, alpha_new

    def solve(self, cost: CostModel, x, supply: ArrayLike, grid: TimeGrid) -> SolveReport:
        cfg = self.config
        samples = initial_samples(x)
        supply = as_supply_vector(supply, grid)
        alpha, omega = initial_iterates(cfg.init, samples.size, grid)

        self.logger.info(
            f"Starting PDHG: M={samples.size}, N={grid.steps}, T={grid.horizon}, "
            f"tau_alpha={cfg.tau_alpha}, tau_omega={cfg.tau_omega}, sigma={cfg.sigma}, "
            f"iterations={cfg.iterations}, backend={cfg.backend.name}"
        )

        trace: List[float] = []
        trace_iterations: List[int] = []
        stopped_early = False
        iterations_run = 0
        started = time.perf_counter()

        with np.errstate(over='ignore', invalid='ignore'):
            for k in range(cfg.iterations):
                try:
                    omega_new, alpha_new = self.step(omega, alpha, supply, cost, samples, grid)
                    if not (np.all(np.isfinite(alpha_new)) and np.all(np.isfinite(omega_new))):
                        raise NonFiniteError("non-finite iterate")
                except NonFiniteError as e:
                    self.logger.error(f"Divergence at iteration {k}: {e}")
                    raise DivergenceError(str(e), k, omega, alpha) from e

                omega, alpha = omega_new, alpha_new
                iterations_run = k + 1
                last = iterations_run == cfg.iterations
                _, residual = clearing_residual(alpha, supply)

                if iterations_run % cfg.trace_every == 0 or last:
                    try:
                        value = lagrangian(omega, alpha, supply, cost, samples, grid).total
                    except NonFiniteError as e:
                        raise DivergenceError(str(e), k, omega, alpha) from e
                    trace.append(value)
                    trace_iterations.append(iterations_run)

                if iterations_run % cfg.log_every == 0:
                    self.logger.info(
                        f"Iteration {iterations_run}/{cfg.iterations}: clearing residual {residual:.3e}"
                        + (f", objective {trace[-1]:.10g}" if trace_iterations and trace_iterations[-1] == iterations_run else "")
                    )

                if cfg.clearing_tol > 0 and residual <= cfg.clearing_tol:
                    stopped_early = not last
                    if stopped_early:
                        self.logger.info(f"Clearing residual {residual:.3e} <= {cfg.clearing_tol:g}; stopping at iteration {iterations_run}")
                        if not trace_iterations or trace_iterations[-1] != iterations_run:
                            trace.append(lagrangian(omega, alpha, supply, cost, samples, grid).total)
                            trace_iterations.append(iterations_run)
                    break

        wall_time = time.perf_counter() - started
        _, residual = clearing_residual(alpha, supply)
        self.logger.info(f"PDHG finished after {iterations_run} iterations in {wall_time:.1f}s; clearing residual {residual:.3e}")

        return SolveReport(
            omega=omega,
            alpha=alpha,
            states=rollout(alpha, samples, grid),
            clearing_residual_sup=residual,
            objective_trace=tuple(trace),
            trace_iterations=tuple(trace_iterations),
            iterations_run=iterations_run,
            config=cfg,
            seed=cfg.seed,
            stopped_early=stopped_early,
            wall_time=wall_time,
        )


def pdhg_solve(cost: CostModel, x, supply: ArrayLike, grid: TimeGrid,
               config: Optional[SolverConfig] = None) -> SolveReport:
    return PdhgSolver(config).solve(cost, x, supply, grid)


def evaluate_I(
    omega: ArrayLike,
    cost: CostModel,
    x,
    supply: ArrayLike,
    grid: TimeGrid,
    inner: Optional[InnerSolveConfig] = None,
) -> float:
    """
    Discrete price functional

        I[omega] = (T/N) sum_l omega[l] Q[l] - (1/M) sum_m phi(x_m),

    where phi(x_m) is agent m's minimal discrete cost, found by gradient
    descent on all control rows at once. Convergence is measured by the
    sup-norm of c0*alpha + omega + p, the cost gradient divided by dt.
    """
    inner = inner or InnerSolveConfig()
    samples = initial_samples(x)
    omega = as_price_vector(omega, grid)
    supply = as_supply_vector(supply, grid)
    alpha = np.zeros((samples.size, grid.steps))

    gradient_norm = float('inf')
    for iteration in range(inner.max_iterations):
        direction = cost.c0 * alpha + omega + costate(alpha, cost, samples, grid)
        gradient_norm = float(np.max(np.abs(direction)))
        if not np.isfinite(gradient_norm):
            raise InnerSolveError("inner solve diverged", float('nan'), gradient_norm)
        if gradient_norm <= inner.tolerance:
            logger.debug(f"Inner solve converged after {iteration} steps")
            return lagrangian(omega, alpha, supply, cost, samples, grid).total
        alpha = alpha - inner.step * direction

    best = lagrangian(omega, alpha, supply, cost, samples, grid).total
    raise InnerSolveError(f"inner solve did not converge in {inner.max_iterations} steps", best, gradient_norm)

"""
Experiment runner: solve one configured price formation problem, compare it
with the closed-form oracle when the costs are linear-quadratic, and write the
run artifacts.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from .analytic import (
    LQParams,
    analytic_price,
    analytic_trajectories,
    lq_constants,
    smooth_price_part,
)
from .artifacts import (
    PRICE_FILE,
    REPORT_FILE,
    TRAJECTORY_FILE,
    write_price_csv,
    write_report,
    write_trajectories_csv,
)
from .config import RunConfig
from .core import CostModel, DoubleWellPotential, InitialStates, NonFiniteError, TimeGrid
from .objective import rollout
from .solver import DivergenceError, PdhgSolver, SolveReport
from .supply import WienerSupply, generate_supply


CLUSTER_RADIUS = 0.1
ORACLE_RULE = 'left'


def sample_agent_indices(agents: int, count: int = 10) -> List[int]:
    """floor((j - 1/2) * M / n) for j = 1..n, n = min(count, M)."""
    n = min(count, agents)
    return [int((2 * j - 1) * agents // (2 * n)) for j in range(1, n + 1)]


def cluster_summary(terminal_states: np.ndarray, centres, radius: float = CLUSTER_RADIUS) -> Dict[str, Any]:
    """Number of agents ending within ``radius`` of each well centre."""
    terminal_states = np.asarray(terminal_states, dtype=np.float64)
    counts = {}
    near_any = np.zeros(terminal_states.shape, dtype=bool)
    for centre in centres:
        near = np.abs(terminal_states - centre) <= radius
        counts[repr(float(centre))] = int(np.count_nonzero(near))
        near_any |= near
    return {
        'radius': radius,
        'counts': counts,
        'outside': int(np.count_nonzero(~near_any)),
    }


def _well_centres(cost: CostModel):
    for potential in (cost.terminal, cost.running):
        if isinstance(potential, DoubleWellPotential):
            return potential.centres
    return None


def _trace_summary(report: SolveReport) -> Dict[str, Any]:
    trace = np.asarray(report.objective_trace, dtype=np.float64)
    if trace.size == 0:
        return {'length': 0}
    return {
        'length': int(trace.size),
        'trace_every': report.config.trace_every,
        'first': float(trace[0]),
        'last': float(trace[-1]),
        'min': float(trace.min()),
        'max': float(trace.max()),
    }


class ExperimentRunner:
    """Runs one configured experiment into an existing output directory."""

    def __init__(self, config: RunConfig, output_dir: Path):
        self.config = config
        self.output_dir = Path(output_dir)
        self.logger = logging.getLogger(self.__class__.__name__)

    def run(self) -> Dict[str, Any]:
        """Solve, evaluate and write artifacts; returns the report dictionary."""
        cfg = self.config
        grid = cfg.grid.build()
        states0 = cfg.agents.build()
        self.logger.info(f"Preset: {cfg.preset or 'custom'}; M={states0.count}, N={grid.steps}, T={grid.horizon}")

        supply = generate_supply(cfg.supply, grid)
        self.logger.info(f"Supply generated: {type(cfg.supply).__name__}")

        solver = PdhgSolver(cfg.solver)
        try:
            result = solver.solve(cfg.cost, states0, supply, grid)
        except DivergenceError as e:
            self._write_partial(e, grid, states0)
            raise

        report = self._base_report(grid, states0)
        report.update({
            'status': 'ok',
            'partial': False,
            'iterations_run': result.iterations_run,
            'stopped_early': result.stopped_early,
            'clearing_residual_sup': result.clearing_residual_sup,
            'objective_trace': _trace_summary(result),
            'wall_time_seconds': result.wall_time,
        })

        agents = sample_agent_indices(states0.count, cfg.trajectory_samples)
        report['sampled_agents'] = agents
        times = grid.node_times()

        omega_analytic = None
        trajectories_analytic = None
        if LQParams.supports(cfg.cost):
            oracle = self._oracle(cfg.cost, states0, supply, grid, result, agents)
            if oracle is not None:
                omega_analytic, trajectories_analytic, errors = oracle
                report.update(errors)

        centres = _well_centres(cfg.cost)
        if centres is not None:
            report['terminal_clusters'] = cluster_summary(result.states[:, -1], centres)
            self.logger.info(f"Terminal clusters: {report['terminal_clusters']['counts']}")

        write_price_csv(self.output_dir / PRICE_FILE, grid.left_times(), result.omega, omega_analytic)
        write_trajectories_csv(self.output_dir / TRAJECTORY_FILE, times, agents,
                               result.states[agents], trajectories_analytic)
        write_report(self.output_dir / REPORT_FILE, report)
        self.logger.info(f"Artifacts written to {self.output_dir}")
        return report

    def _oracle(self, cost: CostModel, states0: InitialStates, supply, grid: TimeGrid,
                result: SolveReport, agents: List[int]):
        params = LQParams.from_cost_model(cost)
        try:
            omega_analytic = analytic_price(params, states0, supply, grid, rule=ORACLE_RULE)
            consts = lq_constants(params, states0, omega_analytic, grid, rule=ORACLE_RULE)
            sampled = states0.samples[agents]
            trajectories = analytic_trajectories(params, consts, omega_analytic, sampled, grid, rule=ORACLE_RULE)
        except ValueError as e:
            self.logger.warning(f"Analytic oracle unavailable: {e}")
            return None

        regular = smooth_price_part(params, states0, supply, grid, rule=ORACLE_RULE)
        errors = {
            'linf_omega_error': float(np.max(np.abs(result.omega - omega_analytic))),
            'linf_trajectory_error': float(np.max(np.abs(result.states[agents] - trajectories))),
            'linf_regular_part_error': float(np.max(np.abs(result.omega + params.c0 * supply - regular))),
            'oracle': {'rule': ORACLE_RULE, 'x_bar0': consts.x_bar0, 'k': consts.k, 'B': consts.B},
        }
        self.logger.info(
            f"Oracle errors: omega {errors['linf_omega_error']:.3e}, "
            f"trajectories {errors['linf_trajectory_error']:.3e}, "
            f"regular part {errors['linf_regular_part_error']:.3e}"
        )
        return omega_analytic, trajectories, errors

    def _base_report(self, grid: TimeGrid, states0: InitialStates) -> Dict[str, Any]:
        cfg = self.config
        report: Dict[str, Any] = {
            'config': cfg.to_dict(),
            'seed': cfg.solver.seed,
        }
        if isinstance(cfg.supply, WienerSupply):
            report['supply_seed'] = int(cfg.supply.seed)
        report['initial_states'] = {'count': states0.count, 'mean': states0.mean()}
        return report

    def _write_partial(self, error: DivergenceError, grid: TimeGrid, states0: InitialStates):
        self.logger.error(f"Solver diverged: {error}; writing partial artifacts")
        report = self._base_report(grid, states0)
        report.update({
            'status': 'diverged',
            'partial': True,
            'diverged_at_iteration': error.iteration,
            'error': str(error),
        })
        agents = sample_agent_indices(states0.count, self.config.trajectory_samples)
        report['sampled_agents'] = agents
        write_price_csv(self.output_dir / PRICE_FILE, grid.left_times(), error.omega)
        try:
            states = rollout(error.alpha, states0, grid)
        except NonFiniteError:
            self.logger.warning("Last iterate has non-finite states; trajectories.csv not written")
        else:
            write_trajectories_csv(self.output_dir / TRAJECTORY_FILE, grid.node_times(), agents, states[agents])
        write_report(self.output_dir / REPORT_FILE, report)


def run_experiment(config: RunConfig, output_dir: Path) -> Dict[str, Any]:
    return ExperimentRunner(config, output_dir).run()

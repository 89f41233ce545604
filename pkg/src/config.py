"""
Configuration module for price formation experiments.
"""

import math
import tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from .core import (
    CostModel,
    DoubleWellPotential,
    InitialStates,
    NonFiniteError,
    Potential,
    QuadraticPotential,
    TimeGrid,
    ZeroPotential,
    potential_to_dict,
)
from .grad import AdjointBackend, FiniteDifferenceBackend, GradientBackend, TapeBackend, parse_backend
from .supply import (
    ConstantSupply,
    FileSupply,
    SinusoidSupply,
    SupplySpec,
    WienerSupply,
    find_wiener_seed,
    supply_to_dict,
    upward_trend_into,
)


class ConfigError(ValueError):
    """Invalid configuration; the message names the field or file line."""


# Solver ---------------------------------------------------------------------

@dataclass(frozen=True)
class SeededNormalInit:
    """Standard-normal alpha (M x N) then omega (N) from PCG64(seed)."""
    seed: int = 0


@dataclass(frozen=True)
class ZerosInit:
    pass


@dataclass(frozen=True, eq=False)
class ExplicitInit:
    alpha: np.ndarray
    omega: np.ndarray


InitStrategy = Union[SeededNormalInit, ZerosInit, ExplicitInit]


@dataclass(frozen=True)
class SolverConfig:
    """Configuration for the primal-dual iteration."""
    tau_alpha: float = 0.05
    tau_omega: float = 0.5
    iterations: int = 10_000
    sigma: float = 0.0  # extra dual damping, 0 gives the plain proximal step
    clearing_tol: float = 0.0  # 0 disables early stopping
    init: InitStrategy = field(default_factory=SeededNormalInit)
    backend: GradientBackend = field(default_factory=TapeBackend)
    trace_every: int = 1
    log_every: int = 1000

    def __post_init__(self):
        self.validate()

    def validate(self) -> bool:
        for name in ('tau_alpha', 'tau_omega'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"solver.{name} must be positive, got {value!r}")
        for name in ('sigma', 'clearing_tol'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigError(f"solver.{name} must be >= 0, got {value!r}")
        for name in ('iterations', 'trace_every', 'log_every'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"solver.{name} must be a positive integer, got {value!r}")
        return True

    @property
    def seed(self) -> Optional[int]:
        return self.init.seed if isinstance(self.init, SeededNormalInit) else None

    def to_dict(self) -> Dict[str, Any]:
        match self.init:
            case SeededNormalInit(seed=seed):
                init = {'kind': 'seeded_normal', 'seed': seed}
            case ZerosInit():
                init = {'kind': 'zeros'}
            case _:
                init = {'kind': 'explicit'}
        backend = {'kind': self.backend.name}
        if isinstance(self.backend, FiniteDifferenceBackend):
            backend['step'] = self.backend.step
        return {
            'tau_alpha': self.tau_alpha,
            'tau_omega': self.tau_omega,
            'iterations': self.iterations,
            'sigma': self.sigma,
            'clearing_tol': self.clearing_tol,
            'init': init,
            'backend': backend,
            'trace_every': self.trace_every,
            'log_every': self.log_every,
        }


@dataclass(frozen=True)
class InnerSolveConfig:
    """Per-agent gradient descent used when evaluating the price functional."""
    step: float = 0.05
    max_iterations: int = 50_000
    tolerance: float = 1e-8

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigError(f"inner.step must be positive, got {self.step!r}")
        if self.max_iterations < 1:
            raise ConfigError(f"inner.max_iterations must be >= 1, got {self.max_iterations!r}")
        if not self.tolerance > 0:
            raise ConfigError(f"inner.tolerance must be positive, got {self.tolerance!r}")


# Experiment -----------------------------------------------------------------

@dataclass(frozen=True)
class GridConfig:
    horizon: float = 1.0
    steps: int = 1000

    def build(self) -> TimeGrid:
        try:
            return TimeGrid(self.horizon, self.steps)
        except ValueError as e:
            raise ConfigError(f"grid: {e}") from e


@dataclass(frozen=True)
class AgentsConfig:
    count: int = 100
    initial: str = 'evenly_spaced'  # evenly_spaced | file
    a: float = 0.0
    b: float = 1.0
    path: Optional[str] = None

    def build(self) -> InitialStates:
        if self.initial == 'evenly_spaced':
            if isinstance(self.count, bool) or not isinstance(self.count, int) or self.count < 1:
                raise ConfigError(f"agents.M must be a positive integer, got {self.count!r}")
            return InitialStates.evenly_spaced(self.a, self.b, self.count)
        if self.initial == 'file':
            if not self.path:
                raise ConfigError("agents.path is required when agents.initial = 'file'")
            try:
                return InitialStates.from_file(self.path)
            except (OSError, ValueError, NonFiniteError) as e:
                raise ConfigError(f"agents.path: {e}") from e
        raise ConfigError(f"agents.initial must be 'evenly_spaced' or 'file', got {self.initial!r}")

    def to_dict(self) -> Dict[str, Any]:
        echo = {'M': self.count, 'initial': self.initial}
        if self.initial == 'evenly_spaced':
            echo.update(a=self.a, b=self.b)
        else:
            echo['path'] = self.path
        return echo


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment run needs; presets expand into this."""
    grid: GridConfig = field(default_factory=GridConfig)
    agents: AgentsConfig = field(default_factory=AgentsConfig)
    cost: CostModel = field(default_factory=lambda: CostModel(1.0))
    supply: SupplySpec = field(default_factory=SinusoidSupply)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: Optional[str] = None
    preset: Optional[str] = None
    trajectory_samples: int = 10

    def validate(self) -> bool:
        self.grid.build()
        self.agents.build()
        self.solver.validate()
        if self.trajectory_samples < 1:
            raise ConfigError(f"trajectory_samples must be >= 1, got {self.trajectory_samples!r}")
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {
            'preset': self.preset,
            'grid': {'T': self.grid.horizon, 'N': self.grid.steps},
            'agents': self.agents.to_dict(),
            'cost': self.cost.to_dict(),
            'supply': supply_to_dict(self.supply),
            'solver': self.solver.to_dict(),
            'output_dir': self.output_dir,
            'trajectory_samples': self.trajectory_samples,
        }


# Presets --------------------------------------------------------------------

WELL_LOW, WELL_HIGH = 0.25, 0.75
PRESETS = ('case1', 'case2', 'case3', 'case4a', 'case4b')


def preset_config(name: str) -> RunConfig:
    """Shared protocol: T=1, N=1000, M=100 evenly spaced on [0,1], c0=1, 10,000 iterations."""
    grid = GridConfig(horizon=1.0, steps=1000)
    agents = AgentsConfig(count=100, initial='evenly_spaced', a=0.0, b=1.0)
    sinusoid = SinusoidSupply(amplitude=1.0, angular_frequency=10.0)
    double_well = DoubleWellPotential(r=50.0, y_a=WELL_LOW, y_b=WELL_HIGH)
    solver = SolverConfig(tau_alpha=0.05, tau_omega=0.5, iterations=10_000,
                          init=SeededNormalInit(seed=0))

    match name:
        case 'case1':
            cost = CostModel(1.0, ZeroPotential(), QuadraticPotential(r=10.0, y=0.0))
            supply = sinusoid
        case 'case2':
            cost = CostModel(1.0, QuadraticPotential(r=10.0, y=0.0), ZeroPotential())
            supply = WienerSupply(seed=0)
        case 'case3':
            cost = CostModel(1.0, ZeroPotential(), double_well)
            supply = sinusoid
            # terminal curvature reaches ~69 on [0, 1]
            solver = replace(solver, tau_alpha=0.02)
        case 'case4a':
            cost = CostModel(1.0, double_well, ZeroPotential())
            supply = sinusoid
        case 'case4b':
            cost = CostModel(1.0, double_well, ZeroPotential())
            # clearing pins the mean terminal state at mean(x) + dt*sum(Q)
            settles_high = upward_trend_into(WELL_HIGH, start_mean=0.5 * (agents.a + agents.b),
                                             horizon=grid.horizon)
            supply = WienerSupply(seed=find_wiener_seed(grid.build(), settles_high))
        case _:
            raise ConfigError(f"Unknown preset {name!r}; choose one of {', '.join(PRESETS)}")

    return RunConfig(grid=grid, agents=agents, cost=cost, supply=supply,
                     solver=solver, preset=name)


# TOML loading ---------------------------------------------------------------

_TOP_LEVEL_KEYS = {'preset', 'output_dir', 'trajectory_samples', 'grid', 'agents', 'cost', 'supply', 'solver'}


def load_run_config(path: Union[str, Path], preset: Optional[str] = None) -> RunConfig:
    """Load a TOML run configuration; a ``preset`` key (or ``preset`` here) supplies the defaults."""
    path = Path(path)
    try:
        with open(path, 'rb') as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    if preset is not None:
        if data.get('preset', preset) != preset:
            raise ConfigError(f"{path}: preset {data['preset']!r} conflicts with --preset {preset!r}")
        data['preset'] = preset
    return run_config_from_dict(data, source=str(path))


def run_config_from_dict(data: Dict[str, Any], source: str = "<config>") -> RunConfig:
    unknown = set(data) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"{source}: unknown top-level keys {sorted(unknown)}")

    config = preset_config(data['preset']) if 'preset' in data else RunConfig()

    reader = _TableReader(data, source)
    if 'grid' in data:
        table = reader.table('grid', {'T', 'N'})
        config = replace(config, grid=GridConfig(
            horizon=table.number('T', config.grid.horizon),
            steps=table.integer('N', config.grid.steps),
        ))
    if 'agents' in data:
        table = reader.table('agents', {'M', 'initial', 'a', 'b', 'path'})
        current = config.agents
        config = replace(config, agents=AgentsConfig(
            count=table.integer('M', current.count),
            initial=table.string('initial', current.initial),
            a=table.number('a', current.a),
            b=table.number('b', current.b),
            path=table.string('path', current.path),
        ))
    if 'cost' in data:
        config = replace(config, cost=_read_cost(reader.table('cost', {'c0', 'running', 'terminal'}), config.cost))
    if 'supply' in data:
        config = replace(config, supply=_read_supply(
            reader.table('supply', {'kind', 'amplitude', 'angular_frequency', 'seed', 'value', 'path'}),
            config.supply))
    if 'solver' in data:
        config = replace(config, solver=_read_solver(reader.table('solver', {
            'tau_alpha', 'tau_omega', 'iterations', 'sigma', 'clearing_tol', 'init', 'seed',
            'backend', 'fd_step', 'trace_every', 'log_every'}), config.solver))

    top = _Table(data, '', source)
    config = replace(
        config,
        output_dir=top.string('output_dir', config.output_dir),
        trajectory_samples=top.integer('trajectory_samples', config.trajectory_samples),
    )
    config.validate()
    return config


def apply_overrides(
    config: RunConfig,
    seed: Optional[int] = None,
    iterations: Optional[int] = None,
    tau_alpha: Optional[float] = None,
    tau_omega: Optional[float] = None,
    sigma: Optional[float] = None,
    backend: Optional[str] = None,
    output_dir: Optional[str] = None,
    supply_seed: Optional[int] = None,
) -> RunConfig:
    """Command-line flags win over the file and the preset."""
    solver = config.solver
    changes: Dict[str, Any] = {}
    if seed is not None:
        changes['init'] = SeededNormalInit(seed=seed)
    if iterations is not None:
        changes['iterations'] = iterations
    if tau_alpha is not None:
        changes['tau_alpha'] = tau_alpha
    if tau_omega is not None:
        changes['tau_omega'] = tau_omega
    if sigma is not None:
        changes['sigma'] = sigma
    if backend is not None:
        try:
            changes['backend'] = parse_backend(backend)
        except ValueError as e:
            raise ConfigError(f"--backend: {e}") from e
    if changes:
        solver = replace(solver, **changes)

    supply = config.supply
    if supply_seed is not None:
        if not isinstance(supply, WienerSupply):
            raise ConfigError("--supply-seed only applies to a Wiener supply")
        supply = WienerSupply(seed=supply_seed)

    return replace(config, solver=solver, supply=supply,
                   output_dir=output_dir if output_dir is not None else config.output_dir)


class _Table:
    """Typed access to one TOML table with dotted field names in errors."""

    def __init__(self, data: Dict[str, Any], prefix: str, source: str):
        self.data = data
        self.prefix = prefix
        self.source = source

    def _name(self, key: str) -> str:
        return f"{self.prefix}.{key}" if self.prefix else key

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(f"{self.source}: {self._name(key)}: {message}")

    def number(self, key: str, default: Optional[float]) -> Optional[float]:
        value = self.data.get(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(key, f"expected a number, got {value!r}")
        return float(value)

    def integer(self, key: str, default: Optional[int]) -> Optional[int]:
        value = self.data.get(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error(key, f"expected an integer, got {value!r}")
        return value

    def string(self, key: str, default: Optional[str]) -> Optional[str]:
        value = self.data.get(key, default)
        if value is not None and not isinstance(value, str):
            raise self.error(key, f"expected a string, got {value!r}")
        return value

    def table(self, key: str, allowed: set) -> "_Table":
        value = self.data.get(key)
        if not isinstance(value, dict):
            raise self.error(key, "expected a table")
        unknown = set(value) - allowed
        if unknown:
            raise self.error(key, f"unknown keys {sorted(unknown)}")
        return _Table(value, self._name(key), self.source)


class _TableReader(_Table):
    def __init__(self, data: Dict[str, Any], source: str):
        super().__init__(data, '', source)


def _read_potential(table: _Table, current: Potential) -> Potential:
    defaults = potential_to_dict(current)
    kind = table.string('kind', defaults['kind'])
    try:
        if kind == 'zero':
            return ZeroPotential()
        if kind == 'quadratic':
            return QuadraticPotential(r=table.number('r', defaults.get('r', 0.0)),
                                      y=table.number('y', defaults.get('y', 0.0)))
        if kind == 'double_well':
            return DoubleWellPotential(r=table.number('r', defaults.get('r', 0.0)),
                                       y_a=table.number('y_a', defaults.get('y_a', WELL_LOW)),
                                       y_b=table.number('y_b', defaults.get('y_b', WELL_HIGH)))
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise table.error('r', str(e)) from e
    raise table.error('kind', f"expected zero | quadratic | double_well, got {kind!r}")


def _read_cost(table: _Table, current: CostModel) -> CostModel:
    running, terminal = current.running, current.terminal
    potential_keys = {'kind', 'r', 'y', 'y_a', 'y_b'}
    if 'running' in table.data:
        running = _read_potential(table.table('running', potential_keys), running)
    if 'terminal' in table.data:
        terminal = _read_potential(table.table('terminal', potential_keys), terminal)
    c0 = table.number('c0', current.c0)
    try:
        return CostModel(c0, running, terminal)
    except ValueError as e:
        raise table.error('c0', str(e)) from e


def _read_supply(table: _Table, current: SupplySpec) -> SupplySpec:
    defaults = supply_to_dict(current)
    kind = table.string('kind', defaults['kind'])
    same = kind == defaults['kind']
    match kind:
        case 'sinusoid':
            return SinusoidSupply(
                amplitude=table.number('amplitude', defaults['amplitude'] if same else 1.0),
                angular_frequency=table.number('angular_frequency', defaults['angular_frequency'] if same else 10.0),
            )
        case 'wiener':
            seed = table.integer('seed', defaults['seed'] if same else 0)
            try:
                return WienerSupply(seed=seed)
            except ValueError as e:
                raise table.error('seed', str(e)) from e
        case 'constant':
            return ConstantSupply(value=table.number('value', defaults['value'] if same else 0.0))
        case 'file':
            path = table.string('path', defaults['path'] if same else None)
            if not path:
                raise table.error('path', "required for a file supply")
            return FileSupply(path=path)
    raise table.error('kind', f"expected sinusoid | wiener | constant | file, got {kind!r}")


def _read_solver(table: _Table, current: SolverConfig) -> SolverConfig:
    init_kind = table.string('init', 'zeros' if isinstance(current.init, ZerosInit) else 'seeded_normal')
    if init_kind == 'seeded_normal':
        init: InitStrategy = SeededNormalInit(seed=table.integer('seed', current.seed or 0))
    elif init_kind == 'zeros':
        init = ZerosInit()
    else:
        raise table.error('init', f"expected seeded_normal | zeros, got {init_kind!r}")

    backend = current.backend
    name = table.string('backend', backend.name) if 'backend' in table.data else backend.name
    if name == 'fd':
        default_step = backend.step if isinstance(backend, FiniteDifferenceBackend) else 1e-6
        try:
            backend = FiniteDifferenceBackend(step=table.number('fd_step', default_step))
        except ValueError as e:
            raise table.error('fd_step', str(e)) from e
    elif 'fd_step' in table.data:
        raise table.error('fd_step', f"only applies to backend = 'fd', got backend {name!r}")
    elif name == 'adjoint':
        backend = AdjointBackend()
    elif name == 'tape':
        backend = TapeBackend()
    else:
        raise table.error('backend', f"expected tape | adjoint | fd, got {name!r}")

    try:
        return SolverConfig(
            tau_alpha=table.number('tau_alpha', current.tau_alpha),
            tau_omega=table.number('tau_omega', current.tau_omega),
            iterations=table.integer('iterations', current.iterations),
            sigma=table.number('sigma', current.sigma),
            clearing_tol=table.number('clearing_tol', current.clearing_tol),
            init=init,
            backend=backend,
            trace_every=table.integer('trace_every', current.trace_every),
            log_every=table.integer('log_every', current.log_every),
        )
    except ConfigError as e:
        raise ConfigError(f"{table.source}: {e}") from e

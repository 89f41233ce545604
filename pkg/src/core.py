"""
Core domain types for the price formation model: time grid, potentials,
cost model, initial states, array validation and the discrete norms.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray


# Discretized fields are plain float64 arrays; the aliases name their roles.
PriceVector = NDArray[np.float64]      # omega[l], l = 0..N-1
SupplyVector = NDArray[np.float64]     # Q[l], l = 0..N-1
ControlMatrix = NDArray[np.float64]    # alpha[m][l], M x N
StateMatrix = NDArray[np.float64]      # z[m][l], M x (N+1)


class DimensionError(ValueError):
    """Array shape does not match the grid or the agent count."""


class NonFiniteError(ArithmeticError):
    """NaN or Inf found where finite values are required."""

    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{message} ({location})" if location else message)
        self.location = location


@dataclass(frozen=True)
class TimeGrid:
    """Uniform discretization of [0, T] with N steps."""
    horizon: float
    steps: int

    def __post_init__(self):
        if isinstance(self.steps, bool) or int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps!r}")
        if not math.isfinite(self.horizon) or self.horizon <= 0:
            raise ValueError(f"horizon must be positive and finite, got {self.horizon!r}")
        object.__setattr__(self, 'steps', int(self.steps))
        object.__setattr__(self, 'horizon', float(self.horizon))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def node_times(self) -> NDArray[np.float64]:
        """t_l = l*T/N for l = 0..N, never accumulated."""
        return np.arange(self.steps + 1, dtype=np.float64) * self.horizon / self.steps

    def left_times(self) -> NDArray[np.float64]:
        """Times carrying controls, price and supply (l = 0..N-1)."""
        return self.node_times()[:-1]


# Potentials ---------------------------------------------------------------

@dataclass(frozen=True)
class ZeroPotential:
    """V(z) = 0."""

    def value(self, z):
        return np.zeros_like(np.asarray(z, dtype=np.float64))

    def d1(self, z):
        return np.zeros_like(np.asarray(z, dtype=np.float64))

    def d2(self, z):
        return np.zeros_like(np.asarray(z, dtype=np.float64))


@dataclass(frozen=True)
class QuadraticPotential:
    """(r/2)(z - y)^2."""
    r: float
    y: float = 0.0

    def __post_init__(self):
        _check_weight(self.r)

    def value(self, z):
        d = np.asarray(z, dtype=np.float64) - self.y
        return 0.5 * self.r * d * d

    def d1(self, z):
        return self.r * (np.asarray(z, dtype=np.float64) - self.y)

    def d2(self, z):
        return np.full_like(np.asarray(z, dtype=np.float64), self.r)


@dataclass(frozen=True)
class DoubleWellPotential:
    """(r/2)(z - y_a)^2 (z - y_b)^2, minima at both centres."""
    r: float
    y_a: float
    y_b: float

    def __post_init__(self):
        _check_weight(self.r)

    def value(self, z):
        z = np.asarray(z, dtype=np.float64)
        p = (z - self.y_a) * (z - self.y_b)
        return 0.5 * self.r * p * p

    def d1(self, z):
        z = np.asarray(z, dtype=np.float64)
        return self.r * (z - self.y_a) * (z - self.y_b) * (2.0 * z - self.y_a - self.y_b)

    def d2(self, z):
        z = np.asarray(z, dtype=np.float64)
        s = 2.0 * z - self.y_a - self.y_b
        return self.r * (s * s + 2.0 * (z - self.y_a) * (z - self.y_b))

    @property
    def centres(self) -> Tuple[float, float]:
        return (self.y_a, self.y_b)


# Closed union; the adjoint backend relies on every variant having d1/d2.
Potential = Union[ZeroPotential, QuadraticPotential, DoubleWellPotential]


def _check_weight(r: float):
    if not math.isfinite(r) or r < 0:
        raise ValueError(f"potential weight must be finite and >= 0, got {r!r}")


def potential_eval(p: Potential, z):
    return p.value(z)


def potential_d1(p: Potential, z):
    return p.d1(z)


def potential_d2(p: Potential, z):
    return p.d2(z)


def potential_to_dict(p: Potential) -> dict:
    """Plain-dict form used in config echoes."""
    if isinstance(p, ZeroPotential):
        return {'kind': 'zero'}
    if isinstance(p, QuadraticPotential):
        return {'kind': 'quadratic', 'r': p.r, 'y': p.y}
    if isinstance(p, DoubleWellPotential):
        return {'kind': 'double_well', 'r': p.r, 'y_a': p.y_a, 'y_b': p.y_b}
    raise TypeError(f"Unknown potential variant: {type(p).__name__}")


@dataclass(frozen=True)
class CostModel:
    """Running cost L(z, a) = c0*a^2/2 + V(z) and terminal cost g(z)."""
    c0: float
    running: Potential = field(default_factory=ZeroPotential)
    terminal: Potential = field(default_factory=ZeroPotential)

    def __post_init__(self):
        if not math.isfinite(self.c0) or self.c0 <= 0:
            raise ValueError(f"c0 must be positive, got {self.c0!r}")

    def running_cost(self, z, alpha):
        alpha = np.asarray(alpha, dtype=np.float64)
        return 0.5 * self.c0 * alpha * alpha + self.running.value(z)

    def to_dict(self) -> dict:
        return {
            'c0': self.c0,
            'running': potential_to_dict(self.running),
            'terminal': potential_to_dict(self.terminal),
        }


# Initial states -----------------------------------------------------------

class InitialStateSource(Enum):
    EVENLY_SPACED = "evenly_spaced"
    FROM_FILE = "from_file"
    EXPLICIT = "explicit"


@dataclass(frozen=True, eq=False)
class InitialStates:
    """Empirical sample x_1..x_M of the initial asset distribution."""
    samples: NDArray[np.float64]
    source: InitialStateSource = InitialStateSource.EXPLICIT
    bounds: Optional[Tuple[float, float]] = None
    path: Optional[str] = None

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if samples.size < 1:
            raise ValueError("at least one initial state is required")
        ensure_finite(samples, "initial states")
        samples.setflags(write=False)
        object.__setattr__(self, 'samples', samples)

    @classmethod
    def evenly_spaced(cls, a: float, b: float, count: int) -> "InitialStates":
        if count < 1:
            raise ValueError(f"agent count must be >= 1, got {count}")
        if count == 1:
            samples = np.array([(a + b) / 2.0])
        else:
            samples = a + np.arange(count, dtype=np.float64) * (b - a) / (count - 1)
        return cls(samples, InitialStateSource.EVENLY_SPACED, bounds=(float(a), float(b)))

    @classmethod
    def explicit(cls, values: ArrayLike) -> "InitialStates":
        return cls(np.asarray(values, dtype=np.float64), InitialStateSource.EXPLICIT)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "InitialStates":
        values = read_column_csv(path, header='x')
        return cls(values, InitialStateSource.FROM_FILE, path=str(path))

    @property
    def count(self) -> int:
        return int(self.samples.size)

    def mean(self) -> float:
        return float(np.mean(self.samples))

    def to_dict(self) -> dict:
        echo = {'source': self.source.value, 'count': self.count}
        if self.bounds is not None:
            echo['a'], echo['b'] = self.bounds
        if self.path is not None:
            echo['path'] = self.path
        if self.source is InitialStateSource.EXPLICIT:
            echo['values'] = self.samples.tolist()
        return echo


def read_column_csv(path: Union[str, Path], header: str) -> NDArray[np.float64]:
    """Read one value per row with an optional single header line."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    try:
        frame = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=True,
                            keep_default_na=False, na_filter=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        return np.empty(0, dtype=np.float64)
    if frame.shape[1] != 1:
        raise ValueError(f"{path}: expected a single column, found {frame.shape[1]}")
    cells = [c.strip() for c in frame.iloc[:, 0].tolist()]
    if cells and cells[0] == header:
        cells = cells[1:]
    values = []
    for row, cell in enumerate(cells, 1):
        try:
            values.append(float(cell))
        except ValueError:
            raise ValueError(f"{path}: row {row} is not a number: {cell!r}") from None
    return np.asarray(values, dtype=np.float64)


# Validation helpers -------------------------------------------------------

def ensure_finite(values: np.ndarray, what: str):
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise NonFiniteError(f"non-finite value in {what}", f"index {tuple(int(i) for i in bad)}")


def as_price_vector(values: ArrayLike, grid: TimeGrid, what: str = "price") -> PriceVector:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (grid.steps,):
        raise DimensionError(f"{what} must have shape ({grid.steps},), got {arr.shape}")
    ensure_finite(arr, what)
    return arr


def as_supply_vector(values: ArrayLike, grid: TimeGrid) -> SupplyVector:
    return as_price_vector(values, grid, what="supply")


def as_control_matrix(values: ArrayLike, grid: TimeGrid, agents: Optional[int] = None) -> ControlMatrix:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != grid.steps:
        raise DimensionError(f"control must have shape (M, {grid.steps}), got {arr.shape}")
    if agents is not None and arr.shape[0] != agents:
        raise DimensionError(f"control has {arr.shape[0]} rows but there are {agents} agents")
    ensure_finite(arr, "control")
    return arr


# Norms --------------------------------------------------------------------

def norm_price(omega: ArrayLike, grid: TimeGrid) -> float:
    """sqrt((T/N) * sum_l omega[l]^2)."""
    omega = as_price_vector(omega, grid)
    return math.sqrt(grid.horizon / grid.steps * float(np.sum(omega * omega)))


def norm_control(alpha: ArrayLike, grid: TimeGrid) -> float:
    """sqrt((T/(M*N)) * sum_{m,l} alpha[m][l]^2)."""
    alpha = as_control_matrix(alpha, grid)
    agents = alpha.shape[0]
    return math.sqrt(grid.horizon / (agents * grid.steps) * float(np.sum(alpha * alpha)))

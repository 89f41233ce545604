"""
Supply functions Q on the time grid: sinusoid, seeded Wiener realization,
constant and CSV input.

Wiener paths use numpy's PCG64 bit generator seeded with the 64-bit seed and
numpy's ziggurat standard-normal transform (``Generator.standard_normal``).
Neither choice may change without changing the documented seed tables.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np
import pandas as pd

from .core import SupplyVector, TimeGrid, ensure_finite, read_column_csv, NonFiniteError


logger = logging.getLogger(__name__)


class SupplyFileError(ValueError):
    """Supply CSV has the wrong length or unusable entries."""


@dataclass(frozen=True)
class SinusoidSupply:
    amplitude: float = 1.0
    angular_frequency: float = 10.0


@dataclass(frozen=True)
class WienerSupply:
    seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"Wiener seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass(frozen=True)
class FileSupply:
    path: str


@dataclass(frozen=True)
class ConstantSupply:
    value: float = 0.0


SupplySpec = Union[SinusoidSupply, WienerSupply, FileSupply, ConstantSupply]


def generate_supply(spec: SupplySpec, grid: TimeGrid) -> SupplyVector:
    """Sample the supply on the left grid points t_0..t_{N-1}."""
    match spec:
        case SinusoidSupply(amplitude=amp, angular_frequency=freq):
            supply = amp * np.sin(freq * grid.left_times())
        case WienerSupply(seed=seed):
            supply = wiener_path(seed, grid)
        case ConstantSupply(value=value):
            supply = np.full(grid.steps, float(value))
        case FileSupply(path=path):
            supply = load_supply_csv(path, grid)
        case _:
            raise TypeError(f"Unknown supply spec: {type(spec).__name__}")

    ensure_finite(supply, "supply")
    return supply


def wiener_path(seed: int, grid: TimeGrid) -> SupplyVector:
    """Q[0] = 0, Q[l] = Q[l-1] + xi_l*sqrt(dt)."""
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    increments = rng.standard_normal(grid.steps - 1) * math.sqrt(grid.dt)
    path = np.empty(grid.steps, dtype=np.float64)
    path[0] = 0.0
    path[1:] = np.cumsum(increments)
    return path


def find_wiener_seed(
    grid: TimeGrid,
    predicate: Callable[[SupplyVector], bool],
    start: int = 0,
    limit: int = 10_000,
) -> int:
    """First seed >= start whose Wiener path on ``grid`` satisfies ``predicate``."""
    for seed in range(start, start + limit):
        if predicate(wiener_path(seed, grid)):
            logger.debug(f"Seed screening accepted seed {seed}")
            return seed
    raise ValueError(f"No Wiener seed in [{start}, {start + limit}) satisfies the predicate")


def upward_trend_into(
    level: float,
    start_mean: float,
    horizon: float,
    margin: float = 0.05,
) -> Callable[[SupplyVector], bool]:
    """
    Predicate for paths that end positive and move the cleared population
    mean into ``level``.

    Clearing fixes the mean terminal state at ``start_mean + dt * sum(Q)``,
    which is ``start_mean + horizon * mean(Q)`` on a uniform grid.
    """
    def accepts(path: SupplyVector) -> bool:
        terminal_mean = start_mean + horizon * float(np.mean(path))
        return bool(path[-1] > 0.0 and abs(terminal_mean - level) <= margin)

    return accepts


def load_supply_csv(path: Union[str, Path], grid: TimeGrid) -> SupplyVector:
    """Read exactly N supply values, one per row, optional header ``Q``."""
    try:
        values = read_column_csv(path, header='Q')
    except FileNotFoundError as e:
        raise SupplyFileError(str(e)) from e
    except ValueError as e:
        raise SupplyFileError(str(e)) from e

    if values.size != grid.steps:
        raise SupplyFileError(
            f"{path}: expected N={grid.steps} supply values, found {values.size}"
        )
    try:
        ensure_finite(values, f"supply file {path}")
    except NonFiniteError as e:
        raise SupplyFileError(str(e)) from e
    return values


def save_supply_csv(supply: SupplyVector, path: Union[str, Path]) -> Path:
    """Write supply with header ``Q`` and shortest round-trip floats."""
    path = Path(path)
    frame = pd.DataFrame({'Q': [repr(float(v)) for v in supply]})
    frame.to_csv(path, index=False, lineterminator='\n')
    return path


def supply_to_dict(spec: SupplySpec) -> dict:
    match spec:
        case SinusoidSupply():
            return {'kind': 'sinusoid', 'amplitude': spec.amplitude,
                    'angular_frequency': spec.angular_frequency}
        case WienerSupply():
            return {'kind': 'wiener', 'seed': int(spec.seed)}
        case FileSupply():
            return {'kind': 'file', 'path': str(spec.path)}
        case ConstantSupply():
            return {'kind': 'constant', 'value': spec.value}
    raise TypeError(f"Unknown supply spec: {type(spec).__name__}")

"""
Run artifacts: price and trajectory CSV tables, the JSON report, and the
discrepancy comparison between two price tables.

Floats are written with ``repr``, the shortest decimal string that reads back
to the same 64-bit value, so repeated runs produce byte-identical files.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray


logger = logging.getLogger(__name__)

PRICE_FILE = 'omega.csv'
TRAJECTORY_FILE = 'trajectories.csv'
REPORT_FILE = 'report.json'
LOG_FILE = 'run.log'


class RunDirectoryError(FileExistsError):
    """Output directory already holds another run."""


class GridMismatchError(ValueError):
    """Two price tables are not on the same time grid."""


def create_run_directory(path: Union[str, Path]) -> Path:
    path = Path(path)
    if path.exists() and (not path.is_dir() or any(path.iterdir())):
        raise RunDirectoryError(f"Output directory {path} already exists and is not empty")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _column(values: ArrayLike):
    return [repr(float(v)) for v in np.asarray(values, dtype=np.float64)]


def _write_table(columns: Dict[str, ArrayLike], path: Path) -> Path:
    frame = pd.DataFrame({name: _column(values) for name, values in columns.items()})
    frame.to_csv(path, index=False, lineterminator='\n')
    return path


def write_price_csv(path: Union[str, Path], times: ArrayLike, omega_num: ArrayLike,
                    omega_analytic: Optional[ArrayLike] = None) -> Path:
    columns = {'t': times, 'omega_num': omega_num}
    if omega_analytic is not None:
        columns['omega_analytic'] = omega_analytic
    return _write_table(columns, Path(path))


def write_trajectories_csv(path: Union[str, Path], times: ArrayLike, agents: Sequence[int],
                           states: NDArray[np.float64],
                           analytic: Optional[NDArray[np.float64]] = None) -> Path:
    """One row per node t_0..t_N; ``states`` and ``analytic`` are rows for ``agents``."""
    columns: Dict[str, ArrayLike] = {'t': times}
    for row, agent in enumerate(agents):
        columns[f'agent_{agent}_num'] = states[row]
        if analytic is not None:
            columns[f'agent_{agent}_analytic'] = analytic[row]
    return _write_table(columns, Path(path))


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_report(path: Union[str, Path], report: Dict[str, Any]) -> Path:
    path = Path(path)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_json_safe(report), f, indent=2, ensure_ascii=False)
        f.write('\n')
    return path


def read_report(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def read_price_csv(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Price file not found: {path}")
    frame = pd.read_csv(path, float_precision='round_trip')
    missing = {'t', 'omega_num'} - set(frame.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    return frame


@dataclass(frozen=True)
class PriceComparison:
    linf: float
    l2: float
    steps: int
    horizon: float

    def to_dict(self) -> Dict[str, Any]:
        return {'linf': self.linf, 'l2': self.l2, 'N': self.steps, 'T': self.horizon}


def compare_prices(t: ArrayLike, omega_a: ArrayLike, omega_b: ArrayLike) -> PriceComparison:
    """Sup norm and sqrt(dt * sum diff^2) of omega_a - omega_b on left points ``t``."""
    t = np.asarray(t, dtype=np.float64)
    diff = np.asarray(omega_a, dtype=np.float64) - np.asarray(omega_b, dtype=np.float64)
    steps = t.size
    if steps == 0:
        raise GridMismatchError("empty price table")
    dt = float(t[1] - t[0]) if steps > 1 else 1.0
    return PriceComparison(
        linf=float(np.max(np.abs(diff))),
        l2=math.sqrt(dt * float(np.sum(diff * diff))),
        steps=steps,
        horizon=dt * steps,
    )


def compare_price_files(path_a: Union[str, Path], path_b: Union[str, Path]) -> PriceComparison:
    a = read_price_csv(path_a)
    b = read_price_csv(path_b)
    if len(a) != len(b):
        raise GridMismatchError(f"{path_a} has N={len(a)} rows but {path_b} has N={len(b)}")
    t_a = a['t'].to_numpy(dtype=np.float64)
    t_b = b['t'].to_numpy(dtype=np.float64)
    if not np.allclose(t_a, t_b, rtol=0.0, atol=1e-12):
        worst = int(np.argmax(np.abs(t_a - t_b)))
        raise GridMismatchError(f"time grids differ at row {worst}: {t_a[worst]!r} vs {t_b[worst]!r}")
    comparison = compare_prices(t_a, a['omega_num'], b['omega_num'])
    logger.info(f"Compared {path_a} and {path_b}: linf={comparison.linf:.3e}, l2={comparison.l2:.3e}")
    return comparison

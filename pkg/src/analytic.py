"""
Closed-form equilibrium for linear-quadratic costs

    V(z) = r1/2 (z - y1)^2,    g(z) = r2/2 (z - y2)^2,

used as an oracle for the solver. Integrals over [0, T] are evaluated on the
solver's own grid with one of two rules:

- ``"left"``: left-endpoint sums dt * sum_{i<l} f[i]. This is the rule the
  forward-Euler transcription embeds, so the oracle matches the discrete
  equilibrium exactly when r1 = 0.
- ``"trapezoid"``: trapezoidal rule on grid nodes. Values live on the N left
  points; the node-N value is the supplied end value or a repeat of the last
  entry.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import cumulative_trapezoid, trapezoid

from .core import (
    CostModel,
    PriceVector,
    QuadraticPotential,
    TimeGrid,
    ZeroPotential,
    as_price_vector,
    as_supply_vector,
)
from .objective import initial_samples


QUADRATURE_RULES = ('left', 'trapezoid')
MAX_KT = 20.0


@dataclass(frozen=True)
class LQParams:
    c0: float
    r1: float = 0.0
    r2: float = 0.0
    y1: float = 0.0
    y2: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.c0) and self.c0 > 0):
            raise ValueError(f"c0 must be positive, got {self.c0!r}")
        for name in ('r1', 'r2'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be >= 0, got {value!r}")

    @classmethod
    def from_cost_model(cls, cost: CostModel) -> "LQParams":
        """Raises ValueError unless both potentials are zero or quadratic."""
        r1, y1 = _quadratic_parts(cost.running, 'running')
        r2, y2 = _quadratic_parts(cost.terminal, 'terminal')
        return cls(c0=cost.c0, r1=r1, r2=r2, y1=y1, y2=y2)

    @staticmethod
    def supports(cost: CostModel) -> bool:
        return all(isinstance(p, (ZeroPotential, QuadraticPotential)) for p in (cost.running, cost.terminal))


@dataclass(frozen=True)
class LQConstants:
    x_bar0: float
    k: float
    B: float


def _quadratic_parts(p, which: str):
    if isinstance(p, ZeroPotential):
        return 0.0, 0.0
    if isinstance(p, QuadraticPotential):
        return float(p.r), float(p.y)
    raise ValueError(f"{which} potential {type(p).__name__} has no closed-form equilibrium")


def _check_rule(rule: str):
    if rule not in QUADRATURE_RULES:
        raise ValueError(f"Unknown quadrature rule {rule!r}; choose one of {QUADRATURE_RULES}")


def _extend(values: NDArray[np.float64], end: Optional[float]) -> NDArray[np.float64]:
    return np.append(values, values[-1] if end is None else float(end))


def cumulative_integral(values: ArrayLike, grid: TimeGrid, rule: str = 'trapezoid',
                        end: Optional[float] = None) -> NDArray[np.float64]:
    """F[l] ~ integral of f over [0, t_l] for l = 0..N, from f on the left points."""
    _check_rule(rule)
    values = np.asarray(values, dtype=np.float64)
    if rule == 'left':
        out = np.zeros(grid.steps + 1)
        out[1:] = grid.dt * np.cumsum(values)
        return out
    return cumulative_trapezoid(_extend(values, end), dx=grid.dt, initial=0.0)


def integral(values: ArrayLike, grid: TimeGrid, rule: str = 'trapezoid',
             end: Optional[float] = None) -> float:
    _check_rule(rule)
    values = np.asarray(values, dtype=np.float64)
    if rule == 'left':
        return grid.dt * float(np.sum(values))
    return float(trapezoid(_extend(values, end), dx=grid.dt))


def analytic_price(
    params: LQParams,
    x,
    supply: ArrayLike,
    grid: TimeGrid,
    rule: str = 'trapezoid',
    q_end: Optional[float] = None,
) -> PriceVector:
    """
    omega*(t) = r2(y2 - x0) + r1(T - t)(y1 - x0) - c0 Q(t)
                + int_0^T [-(r2 + r1 T) + r1 max(s, t)] Q(s) ds

    with x0 the empirical mean of the initial states. The max kernel is split
    as t * int_0^t Q + int_t^T s Q(s) ds.
    """
    supply = as_supply_vector(supply, grid)
    x_bar0 = float(np.mean(initial_samples(x)))
    T = grid.horizon
    t = grid.left_times()

    total = integral(supply, grid, rule, end=q_end)
    kernel = -(params.r2 + params.r1 * T) * total
    if params.r1 != 0.0:
        q_cum = cumulative_integral(supply, grid, rule, end=q_end)
        sq_end = None if q_end is None else T * float(q_end)
        if rule == 'trapezoid' and sq_end is None:
            sq_end = T * supply[-1]
        sq_cum = cumulative_integral(t * supply, grid, rule, end=sq_end)
        kernel = kernel + params.r1 * (t * q_cum[:-1] + (sq_cum[-1] - sq_cum[:-1]))

    return (params.r2 * (params.y2 - x_bar0)
            + params.r1 * (T - t) * (params.y1 - x_bar0)
            - params.c0 * supply
            + kernel)


def smooth_price_part(
    params: LQParams,
    x,
    supply: ArrayLike,
    grid: TimeGrid,
    rule: str = 'trapezoid',
    q_end: Optional[float] = None,
) -> PriceVector:
    """omega* + c0 Q, which is C^1 on [0, T] even for a rough supply."""
    supply = as_supply_vector(supply, grid)
    return analytic_price(params, x, supply, grid, rule, q_end) + params.c0 * supply


def price_from_clearing_ode(
    params: LQParams,
    x,
    supply: ArrayLike,
    grid: TimeGrid,
    rule: str = 'trapezoid',
    q_end: Optional[float] = None,
) -> PriceVector:
    """
    Integrates the aggregated optimality system backward from T. With the mean
    state Lambda(t) = x0 + int_0^t Q,

        omega(t) = -c0 Q(t) - r2 (Lambda(T) - y2) - r1 int_t^T (Lambda(s) - y1) ds.
    """
    supply = as_supply_vector(supply, grid)
    x_bar0 = float(np.mean(initial_samples(x)))
    mean_state = x_bar0 + cumulative_integral(supply, grid, rule, end=q_end)

    gap = mean_state - params.y1
    gap_cum = cumulative_integral(gap[:-1], grid, rule, end=gap[-1])
    tail = gap_cum[-1] - gap_cum[:-1]
    return (-params.c0 * supply
            - params.r2 * (mean_state[-1] - params.y2)
            - params.r1 * tail)


def lq_constants(
    params: LQParams,
    x,
    omega: ArrayLike,
    grid: TimeGrid,
    rule: str = 'trapezoid',
    omega_end: Optional[float] = None,
) -> LQConstants:
    """k = sqrt(r1/c0) and B = r2(y2 - y1) + int_0^T omega(s)[(r2/c0) cosh k(T-s) + k sinh k(T-s)] ds."""
    omega = as_price_vector(omega, grid)
    k = math.sqrt(params.r1 / params.c0)
    if k * grid.horizon > MAX_KT:
        raise ValueError(f"k*T = {k * grid.horizon:.3g} exceeds {MAX_KT:g}; hyperbolic terms would overflow")

    lag = grid.horizon - grid.left_times()
    weight = (params.r2 / params.c0) * np.cosh(k * lag) + k * np.sinh(k * lag)
    end = None
    if rule == 'trapezoid':
        # weight at s = T is r2/c0
        end = (omega[-1] if omega_end is None else float(omega_end)) * params.r2 / params.c0
    B = params.r2 * (params.y2 - params.y1) + integral(omega * weight, grid, rule, end=end)
    return LQConstants(x_bar0=float(np.mean(initial_samples(x))), k=k, B=B)


def _cosh_convolution(omega: PriceVector, k: float, grid: TimeGrid, rule: str,
                      omega_end: Optional[float]) -> NDArray[np.float64]:
    """C[l] ~ int_0^{t_l} omega(s) cosh k(t_l - s) ds for l = 0..N."""
    nodes = grid.node_times()
    values = _extend(omega, omega_end)
    out = np.zeros(grid.steps + 1)
    for l in range(1, grid.steps + 1):
        weighted = values[:l + 1] * np.cosh(k * (nodes[l] - nodes[:l + 1]))
        if rule == 'left':
            out[l] = grid.dt * np.sum(weighted[:-1])
        else:
            out[l] = trapezoid(weighted, dx=grid.dt)
    return out


def analytic_trajectories(
    params: LQParams,
    consts: LQConstants,
    omega: ArrayLike,
    x,
    grid: TimeGrid,
    rule: str = 'trapezoid',
    omega_end: Optional[float] = None,
) -> NDArray[np.float64]:
    """Optimal states z(t_l, x_m) for every sample, shape M x (N+1)."""
    _check_rule(rule)
    omega = as_price_vector(omega, grid)
    samples = initial_samples(x)[:, None]
    t = grid.node_times()[None, :]
    T = grid.horizon
    c0, r2, y1, k = params.c0, params.r2, params.y1, consts.k

    if params.r1 == 0.0:
        forcing = cumulative_integral(omega, grid, rule, end=omega_end) / c0
        slope = (consts.B - r2 * (samples - y1)) / (c0 + r2 * T)
        states = samples + slope * t - forcing[None, :]
    else:
        if k * T > MAX_KT:
            raise ValueError(f"k*T = {k * T:.3g} exceeds {MAX_KT:g}; hyperbolic terms would overflow")
        forcing = _cosh_convolution(omega, k, grid, rule, omega_end) / c0
        offset = samples - y1
        numerator = consts.B - offset * (c0 * k * math.sinh(k * T) + r2 * math.cosh(k * T))
        denominator = c0 * k * math.cosh(k * T) + r2 * math.sinh(k * T)
        states = (y1 + offset * np.cosh(k * t)
                  + (numerator / denominator) * np.sinh(k * t)
                  - forcing[None, :])

    states[:, 0] = samples[:, 0]
    return states


def analytic_trajectory(
    params: LQParams,
    consts: LQConstants,
    omega: ArrayLike,
    x0: float,
    grid: TimeGrid,
    rule: str = 'trapezoid',
    omega_end: Optional[float] = None,
) -> NDArray[np.float64]:
    """Optimal state of one agent starting at x0 on all N+1 nodes."""
    return analytic_trajectories(params, consts, omega, [x0], grid, rule, omega_end)[0]

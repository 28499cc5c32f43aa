"""Workload-balancing planners and the per-node cost model.

Node j processes one data unit in ``unit_cost[j]`` simulated time, so its
capacity factor is ``1 / unit_cost[j]`` (units per unit time) and a plan's
quality is its makespan: ``max_j unit_cost[j] * size[j]``. Two planners cover
the two tunables: resize the data fragments under fixed node costs, or
re-provision node capacities under a fixed partitioning. Both are advisory;
they emit plans and never mutate a running system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class CalibrationError(ValueError):
    """The observation set cannot identify the cost coefficients."""


@dataclass(frozen=True)
class NodeCost:
    unit_cost: float  # simulated time per data unit on this node

    def __post_init__(self):
        if not self.unit_cost > 0:
            raise ValueError(f"unit cost must be positive, got {self.unit_cost}")

    @property
    def capacity_factor(self) -> float:
        return 1.0 / self.unit_cost


@dataclass(frozen=True)
class BalanceProblem:
    """Split ``total_units`` across nodes with the given per-unit costs."""

    total_units: int
    costs: list[NodeCost]

    def __post_init__(self):
        if self.total_units < 1:
            raise ValueError("total units must be >= 1")
        if not self.costs:
            raise ValueError("at least one node required")


@dataclass(frozen=True)
class CapacityProblem:
    """Re-provision capacity factors for fixed fragment sizes.

    ``max_factor`` is the largest capacity factor available for any node; it
    must cover the current assignment when current costs are known.
    """

    sizes: list[int]
    max_factor: float
    current_costs: list[NodeCost] | None = None

    def __post_init__(self):
        if self.max_factor <= 0:
            raise ValueError("maximum capacity factor must be positive")
        if self.current_costs is not None:
            top = max(c.capacity_factor for c in self.current_costs)
            if self.max_factor < top:
                raise ValueError(
                    f"max capacity factor {self.max_factor} below current maximum {top}"
                )


def makespan(sizes: list[int], unit_costs: list[float]) -> float:
    """The balancing objective: the slowest node's finish time."""
    if len(sizes) != len(unit_costs):
        raise ValueError(f"length mismatch: {len(sizes)} sizes vs {len(unit_costs)} costs")
    return max(c * d for c, d in zip(unit_costs, sizes))


def balance_data(problem: BalanceProblem) -> list[int]:
    """Optimal fragment sizes proportional to capacity factors, integerized.

    The real-valued optimum gives node j a share (1/c_j) / sum(1/c_i) of the
    data. Integerization is largest-remainder apportionment: floor everything,
    then hand the leftover units to the largest fractional parts (ties by
    node index), so the sizes always sum exactly to the total.
    """
    total = problem.total_units
    inv = [c.capacity_factor for c in problem.costs]
    denom = sum(inv)
    real = [total * f / denom for f in inv]
    sizes = [int(r) for r in real]
    leftover = total - sum(sizes)
    by_fraction = sorted(
        range(len(real)), key=lambda j: (-(real[j] - sizes[j]), j)
    )
    for j in by_fraction[:leftover]:
        sizes[j] += 1
    return sizes


def real_valued_makespan(problem: BalanceProblem) -> float:
    """Makespan of the un-integerized optimum: D / sum(1/c_j)."""
    return problem.total_units / sum(c.capacity_factor for c in problem.costs)


def balance_capacity(problem: CapacityProblem) -> list[float]:
    """Capacity factors proportional to fragment sizes, anchored at the max.

    The largest fragment gets the full available factor; every other node
    gets exactly the factor that finishes at the same time, so the makespan
    is max(sizes) / max_factor and no factor is wasted.
    """
    if all(d == 0 for d in problem.sizes):
        raise ValueError("all fragment sizes are zero; nothing to balance")
    d_star = max(problem.sizes)
    return [problem.max_factor * d / d_star for d in problem.sizes]


@dataclass(frozen=True)
class CalibrationResult:
    unit_cost: float
    call_cost: float | None  # None when every observation used the same block count


def calibrate(observations: list[tuple[int, int, float]]) -> CalibrationResult:
    """Fit one node's cost model from measured iterations.

    Each observation is ``(units, blocks, simulated_time)`` and the model is
    ``time = unit_cost * units + call_cost * blocks``. With at least two
    distinct block counts both coefficients are identified; with varied units
    but a single block count only the unit cost is (the per-block term is
    absorbed into an intercept). Anything less is under-determined.
    """
    if len(observations) < 2:
        raise CalibrationError("need at least two measured iterations")
    units = np.array([o[0] for o in observations], dtype=float)
    blocks = np.array([o[1] for o in observations], dtype=float)
    times = np.array([o[2] for o in observations], dtype=float)

    distinct_blocks = len(set(blocks.tolist()))
    distinct_units = len(set(units.tolist()))
    if distinct_blocks >= 2 and distinct_units >= 2:
        design = np.column_stack([units, blocks])
        coef, *_ = np.linalg.lstsq(design, times, rcond=None)
        return CalibrationResult(unit_cost=float(coef[0]), call_cost=float(coef[1]))
    if distinct_units >= 2:
        design = np.column_stack([units, np.ones_like(units)])
        coef, *_ = np.linalg.lstsq(design, times, rcond=None)
        return CalibrationResult(unit_cost=float(coef[0]), call_cost=None)
    raise CalibrationError(
        "observations do not vary in units; run a calibration pass with varied "
        "block counts or workloads"
    )

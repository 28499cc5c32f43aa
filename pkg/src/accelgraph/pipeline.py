"""Pipeline-shuffle mechanics: buffer rotation and block-size selection.

Processing one pass means streaming ``units`` triplets through three
overlapped stages (download, compute, upload) in blocks of ``b = units / s``.
With per-unit stage costs and a fixed per-block dispatch cost, the pass
makespan is

    T(s) = k1*b + max(k1*b, a + k2*b)
         + (s - 2) * max(k1*b, a + k2*b, k3*b)
         + max(a + k2*b, k3*b) + k3*b

where k1/k2/k3 are the download/compute/upload costs per unit and ``a`` is the
dispatch cost. The formula is evaluated literally even for s in {1, 2}, where
the (s - 2) term subtracts one max-term; the closed form and the brute-force
oracle both use this reading so comparisons stay apples-to-apples.

The closed-form minimizer has three cases around Q = sqrt(a*units/(k1+k3)):
a strictly dominant k1 or k3 pins b at the point where that stage stops
dominating compute, otherwise the compute stage dominates and b = Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .channel import SharedRegion
from .graph import Role


class NoInteriorOptimumError(ValueError):
    """The cost model degenerates (a = 0 with no dominant transfer stage).

    There is no interior optimum: the makespan only improves as blocks shrink,
    so callers should fall back to one-unit blocks (s = units).
    """


@dataclass(frozen=True)
class PipelineCostModel:
    download_cost: float  # per-unit cost of the download stage (k1)
    compute_cost: float   # per-unit cost of the compute stage (k2)
    upload_cost: float    # per-unit cost of the upload stage (k3)
    call_cost: float      # fixed device-dispatch cost per block (a)
    units: int            # entities this node must process in the pass (d)

    def __post_init__(self):
        if self.download_cost <= 0 or self.compute_cost <= 0 or self.upload_cost <= 0:
            raise ValueError("per-unit stage costs must be positive")
        if self.call_cost < 0:
            raise ValueError("dispatch cost must be non-negative")
        if self.units < 1:
            raise ValueError("units must be >= 1")


def total_time(model: PipelineCostModel, blocks: int) -> float:
    """Pass makespan when the work is split into ``blocks`` equal blocks."""
    if blocks < 1 or blocks > model.units:
        raise ValueError(f"block count must be in [1, {model.units}], got {blocks}")
    k1, k2, k3 = model.download_cost, model.compute_cost, model.upload_cost
    a = model.call_cost
    b = model.units / blocks
    t_n = k1 * b
    t_c = a + k2 * b
    t_u = k3 * b
    return t_n + max(t_n, t_c) + (blocks - 2) * max(t_n, t_c, t_u) + max(t_c, t_u) + t_u


def optimal_block_size(model: PipelineCostModel) -> tuple[float, float]:
    """Closed-form real-valued block size minimizing the pass makespan.

    Returns ``(b_opt, t_min)``. Ties between k1 and k3 for the maximum fall
    through to the compute-dominated case, whose formula stays valid whenever
    the conditional branches' inequalities fail.
    """
    k1, k2, k3 = model.download_cost, model.compute_cost, model.upload_cost
    a, d = model.call_cost, model.units
    q = math.sqrt(a * d / (k1 + k3))

    if k1 > k2 and k1 > k3 and a / (k1 - k2) <= q:
        b = a / (k1 - k2)
        return b, k1 * d + a * (k1 + k3) / (k1 - k2)
    if k3 > k2 and k3 > k1 and a / (k3 - k2) <= q:
        b = a / (k3 - k2)
        return b, k3 * d + a * (k1 + k3) / (k3 - k2)
    if q == 0.0:
        raise NoInteriorOptimumError(
            "dispatch cost is zero and no transfer stage dominates; "
            "no interior optimum, use one-unit blocks"
        )
    return q, k2 * d + 2.0 * math.sqrt((k1 + k3) * a * d)


def integerize(model: PipelineCostModel, b_opt: float) -> tuple[int, int]:
    """Round the real-valued optimum to integer (s, b).

    Evaluates the makespan at floor and ceil of units/b_opt (clamped to
    [1, units]) and keeps the cheaper block count; the block size is then
    ceil(units/s) with a shorter final block absorbing the remainder.
    A non-positive b_opt degenerates to one-unit blocks.
    """
    units = model.units
    if b_opt <= 0:
        return units, 1
    s_real = units / b_opt
    candidates = sorted(
        {max(1, min(units, math.floor(s_real))), max(1, min(units, math.ceil(s_real)))}
    )
    best = min(candidates, key=lambda s: total_time(model, s))
    return best, math.ceil(units / best)


def plan_blocks(model: PipelineCostModel) -> tuple[int, int, float]:
    """Pick integer (s, b) for a model: closed form, then integer refinement.

    Falls back to one-unit blocks when the model has no interior optimum.
    Returns ``(s, b, t)`` with ``t`` the makespan at the chosen s.
    """
    try:
        b_opt, _ = optimal_block_size(model)
    except NoInteriorOptimumError:
        return model.units, 1, total_time(model, model.units)
    s, b = integerize(model, b_opt)
    return s, b, total_time(model, s)


def rotate(region: SharedRegion) -> None:
    """Advance every buffer's role one step along New -> Compute -> Upload.

    Only the labels move; buffer contents are untouched, which is the whole
    point of the shuffle: inter-stage hand-off without copying.
    """
    for slot in region.slots:
        slot.role = slot.role.next()
    region.cycle_count += 1


def sweep_integer(model: PipelineCostModel, limit: int | None = None) -> tuple[int, float]:
    """Exhaustive integer-s minimization of the pass makespan.

    Linear in ``units``; intended for planner diagnostics, not the hot path.
    """
    top = model.units if limit is None else min(limit, model.units)
    best_s, best_t = 1, total_time(model, 1)
    for s in range(2, top + 1):
        t = total_time(model, s)
        if t < best_t:
            best_s, best_t = s, t
    return best_s, best_t

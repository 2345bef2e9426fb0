"""Resource-sensitivity curves, their slopes, and minimal-demand search."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from . import perf
from .plans import (
    DEFAULT_MEMORY_MODEL,
    MemoryModel,
    PlanCandidate,
    PlanFilter,
    PlanScorer,
    estimate_memory,
)
from .types import (
    EnvSpec,
    ExecutionPlan,
    ModelSpec,
    PerfParams,
    ResourceVector,
    build_placement,
)


class Axis(str, Enum):
    GPU = "gpus"
    CPU = "cpus"


class InfeasibleRequest(RuntimeError):
    """The requested plan cannot run on the requested resources at all."""


@dataclass(frozen=True)
class CurvePoint:
    amount: int
    throughput: float
    plan: Optional[ExecutionPlan]


@dataclass(frozen=True)
class SensitivityCurve:
    """Best achievable throughput as one resource amount varies.

    Points cover every integer amount from 0 to the cap. Values carry the
    running maximum over all smaller amounts (a job may leave surplus units
    idle), so the curve is non-decreasing and flat across amounts whose exact
    count admits no better plan.
    """

    axis: Axis
    points: tuple[CurvePoint, ...]

    def __post_init__(self) -> None:
        for i, pt in enumerate(self.points):
            if pt.amount != i:
                raise ValueError("curve points must cover 0..cap densely")

    @property
    def cap(self) -> int:
        return len(self.points) - 1

    def value(self, amount: int) -> float:
        if amount <= 0:
            return self.points[0].throughput if self.points else 0.0
        return self.points[min(amount, self.cap)].throughput

    def plan_at(self, amount: int) -> Optional[ExecutionPlan]:
        if amount <= 0:
            return None
        return self.points[min(amount, self.cap)].plan

    def rows(self) -> list[dict]:
        return [
            {
                "amount": p.amount,
                "throughput": p.throughput,
                "plan": p.plan.descriptor() if p.plan else "",
            }
            for p in self.points
        ]


def build_curve(
    model: ModelSpec,
    axis: Axis,
    fixed: ResourceVector,
    env: EnvSpec,
    params: PerfParams,
    batch: float,
    max_amount: int,
    scorer: Optional[PlanScorer] = None,
    plan_filter: Optional[PlanFilter] = None,
) -> SensitivityCurve:
    """Sweep one resource axis and keep the envelope of best-plan throughput.

    On the GPU axis the CPU count tracks the node-proportional share of the
    swept GPU amount; on the CPU axis the GPU count is pinned to fixed.gpus.
    Amount zero always scores zero.
    """
    if scorer is None:
        scorer = PlanScorer(env)
    pts: list[CurvePoint] = [CurvePoint(0, 0.0, None)]
    best_v, best_plan_seen = 0.0, None
    for amount in range(1, max_amount + 1):
        if axis is Axis.GPU:
            gpus = amount
            cpus = int(round(amount * env.cpus_per_node / env.gpus_per_node))
        else:
            gpus = fixed.gpus
            cpus = amount
        cand = (
            scorer.best_for_amount(model, gpus, cpus, batch, params, plan_filter)
            if gpus >= 1
            else None
        )
        if cand is not None and cand.throughput > best_v:
            best_v = cand.throughput
            best_plan_seen = cand.plan
        pts.append(CurvePoint(amount, best_v, best_plan_seen))
    return SensitivityCurve(axis=axis, points=tuple(pts))


def slope(curve: SensitivityCurve, amount: int) -> float:
    """Forward difference to the next strictly better point, over the gap.

    Returns 0 past the last improvement (adding units buys nothing). Inside a
    flat stretch the gain of the next jump is amortized over the remaining
    distance to it.
    """
    amount = max(0, amount)
    here = curve.value(amount)
    for nxt in range(amount + 1, curve.cap + 1):
        v = curve.points[nxt].throughput
        if v > here:
            return (v - here) / (nxt - amount)
    return 0.0


def marginal_gain(curve: SensitivityCurve, amount: int) -> float:
    """Exact envelope gain of going from `amount` to `amount + 1` units."""
    return curve.value(amount + 1) - curve.value(amount)


def marginal_loss(curve: SensitivityCurve, amount: int) -> float:
    """Exact envelope loss of dropping from `amount` to `amount - 1` units."""
    if amount <= 0:
        return 0.0
    return curve.value(amount) - curve.value(amount - 1)


def min_res(
    model: ModelSpec,
    requested: ResourceVector,
    requested_plan: ExecutionPlan,
    env: EnvSpec,
    params: PerfParams,
    batch: float,
    best_effort: bool = False,
    scorer: Optional[PlanScorer] = None,
    mem: MemoryModel = DEFAULT_MEMORY_MODEL,
    plan_filter: Optional[PlanFilter] = None,
) -> ResourceVector:
    """Smallest resource vector that still meets the requested performance.

    The target is the predicted throughput of the requested plan on the
    requested resources. The search walks GPU counts upward; within the first
    workable count it binary-searches the CPU count (best-plan throughput is
    non-decreasing in CPUs at a fixed GPU count because only the offload
    optimizer term depends on them). The memory dimension is the host demand
    of the plan the job would actually run there. Best-effort jobs have no
    floor and get the zero vector. Raises InfeasibleRequest when the requested
    plan cannot run on the requested resources in the first place.
    """
    if best_effort:
        return ResourceVector.zero()
    if scorer is None:
        scorer = PlanScorer(env, mem)
    if requested.gpus < 1 or requested_plan.gpus != requested.gpus:
        raise InfeasibleRequest(
            f"requested plan needs {requested_plan.gpus} GPUs, "
            f"requested vector holds {requested.gpus}"
        )
    req_placement = build_placement(requested.gpus, requested.cpus, env, batch)
    est = estimate_memory(model, requested_plan, batch, mem)
    if est.gpu_total > env.gpu_mem or est.host_states > requested.mem:
        raise InfeasibleRequest(
            f"requested plan {requested_plan.descriptor()} does not fit memory"
        )
    try:
        target = perf.predict(
            model, requested_plan, req_placement, env, params
        ).throughput
    except perf.PerfModelError as exc:
        raise InfeasibleRequest(str(exc)) from exc

    def probe(gpus: int, cpus: int) -> Optional[PlanCandidate]:
        cand = scorer.best_for_amount(
            model, gpus, cpus, batch, params, plan_filter, host_cap=requested.mem
        )
        if cand is None or cand.throughput < target:
            return None
        return cand

    for gpus in range(1, requested.gpus + 1):
        if probe(gpus, requested.cpus) is None:
            continue
        lo, hi = 0, requested.cpus
        while lo < hi:
            mid = (lo + hi) // 2
            if probe(gpus, mid) is not None:
                hi = mid
            else:
                lo = mid + 1
        final = probe(gpus, hi)
        assert final is not None
        return ResourceVector(gpus=gpus, cpus=hi, mem=final.host_mem)
    return requested

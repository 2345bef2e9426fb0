"""Execution-plan enumeration, memory estimation and best-plan selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from . import perf
from .types import (
    EnvSpec,
    ExecutionPlan,
    ModelSpec,
    NodeShare,
    PerfParams,
    Placement,
    PlanKind,
    build_placement,
)

DEFAULT_GA_CHOICES: tuple[int, ...] = (1, 2, 4, 8)


class NoFittedModel(RuntimeError):
    """Plan selection was asked for a model without fitted parameters."""


@dataclass(frozen=True)
class MemoryModel:
    """Byte-level constants of the analytic memory estimate.

    state_bytes covers fp16 params + fp16 grads + fp32 master weights and
    moments per parameter. replicated_bytes is the slice of that (the fp16
    params) which ZeRO keeps on every rank; the remainder is partitioned by
    the data-parallel degree, or moved wholesale to host memory by offload.
    """

    state_bytes: float = 16.0
    replicated_bytes: float = 2.0
    act_bytes_per_unit: float = 34.0
    gc_factor: float = 0.25
    working_set: float = 0.0


DEFAULT_MEMORY_MODEL = MemoryModel()


@dataclass(frozen=True)
class MemoryEstimate:
    """Per-GPU byte demand plus the job-wide host-memory demand."""

    model_states: float
    activations: float
    host_states: float
    working_set: float = 0.0

    @property
    def gpu_total(self) -> float:
        return self.model_states + self.activations + self.working_set


def estimate_memory(
    model: ModelSpec,
    plan: ExecutionPlan,
    batch: float,
    mem: MemoryModel = DEFAULT_MEMORY_MODEL,
) -> MemoryEstimate:
    """Analytic memory footprint of running `plan` at the given global batch."""
    p_count = model.param_count
    if plan.kind is PlanKind.THREE_D:
        states = mem.state_bytes * p_count / (plan.tp_size * plan.pp_size)
        host = 0.0
    elif plan.kind is PlanKind.ZERO_DP:
        partitioned = mem.state_bytes - mem.replicated_bytes
        states = mem.replicated_bytes * p_count + partitioned * p_count / plan.dp_size
        host = 0.0
    else:
        states = mem.replicated_bytes * p_count
        host = (mem.state_bytes - mem.replicated_bytes) * p_count
    micro = batch / (plan.dp_size * plan.ga_steps * plan.micro_batches)
    acts = (
        mem.act_bytes_per_unit
        * micro
        * model.seq_len
        * model.hidden
        * model.layers
        / (plan.tp_size * plan.pp_size)
    )
    if plan.grad_ckpt:
        acts *= mem.gc_factor
    return MemoryEstimate(
        model_states=states,
        activations=acts,
        host_states=host,
        working_set=mem.working_set,
    )


def _divisors(n: int) -> list[int]:
    return [i for i in range(1, n + 1) if n % i == 0]


def enumerate_plans(
    model: ModelSpec,
    gpus: int,
    env: EnvSpec,
    ga_choices: Iterable[int] = DEFAULT_GA_CHOICES,
) -> list[ExecutionPlan]:
    """All structurally valid plans on exactly `gpus` GPUs, deterministic order.

    Constraints: d*t*p == gpus, tensor groups must tile a node (t divides
    gpus_per_node and t <= gpus_per_node), pipeline stages must split layers
    evenly, ZeRO variants are data-parallel only. Every shape is crossed with
    the GA-step choices and the gradient-checkpointing toggle; pipelined plans
    run one micro-batch per stage.
    """
    if gpus < 1:
        return []
    shapes: list[tuple[int, int, int]] = []
    for t in _divisors(gpus):
        if t > env.gpus_per_node or env.gpus_per_node % t != 0:
            continue
        rest = gpus // t
        for p in _divisors(rest):
            if model.layers % p != 0:
                continue
            if p > 1 and model.profile.t_pp_ref <= 0:
                continue
            shapes.append((rest // p, t, p))
    plans: list[ExecutionPlan] = []
    for d, t, p in shapes:
        for a in ga_choices:
            for gc in (False, True):
                plans.append(
                    ExecutionPlan(
                        kind=PlanKind.THREE_D,
                        dp_size=d,
                        tp_size=t,
                        pp_size=p,
                        ga_steps=a,
                        micro_batches=p if p > 1 else 1,
                        grad_ckpt=gc,
                    )
                )
    for kind in (PlanKind.ZERO_DP, PlanKind.ZERO_OFFLOAD):
        for a in ga_choices:
            for gc in (False, True):
                plans.append(
                    ExecutionPlan(
                        kind=kind, dp_size=gpus, ga_steps=a, grad_ckpt=gc
                    )
                )
    plans.sort(
        key=lambda pl: (
            pl.kind.value,
            pl.dp_size,
            pl.tp_size,
            pl.pp_size,
            pl.ga_steps,
            pl.grad_ckpt,
        )
    )
    return plans


@dataclass(frozen=True)
class PlanFilter:
    """Optional restriction of the candidate space; None fields are free.

    Used by the ablation policies: a filter pinning everything but dp_size
    models elastic data parallelism around a fixed plan family; pinning every
    field models a completely rigid plan.
    """

    kind: Optional[PlanKind] = None
    dp_size: Optional[int] = None
    tp_size: Optional[int] = None
    pp_size: Optional[int] = None
    ga_steps: Optional[int] = None
    grad_ckpt: Optional[bool] = None

    def matches(self, plan: ExecutionPlan) -> bool:
        for name in ("kind", "dp_size", "tp_size", "pp_size", "ga_steps", "grad_ckpt"):
            want = getattr(self, name)
            if want is not None and getattr(plan, name) != want:
                return False
        return True

    @classmethod
    def family_of(cls, plan: ExecutionPlan) -> "PlanFilter":
        """Everything fixed except the data-parallel degree."""
        return cls(
            kind=plan.kind,
            tp_size=plan.tp_size,
            pp_size=plan.pp_size,
            ga_steps=plan.ga_steps,
            grad_ckpt=plan.grad_ckpt,
        )

    @classmethod
    def exact(cls, plan: ExecutionPlan) -> "PlanFilter":
        return cls(
            kind=plan.kind,
            dp_size=plan.dp_size,
            tp_size=plan.tp_size,
            pp_size=plan.pp_size,
            ga_steps=plan.ga_steps,
            grad_ckpt=plan.grad_ckpt,
        )


@dataclass(frozen=True)
class PlanCandidate:
    """A feasible plan together with its scored prediction and memory needs."""

    plan: ExecutionPlan
    prediction: perf.Prediction
    gpu_mem: float
    host_mem: float

    @property
    def throughput(self) -> float:
        return self.prediction.throughput


def _candidate_order(c: PlanCandidate) -> tuple:
    pl = c.plan
    return (
        -c.throughput,
        pl.ga_steps,
        pl.grad_ckpt,
        -pl.dp_size,
        -pl.tp_size,
        pl.kind.value,
        pl.pp_size,
    )


def rank_plans(
    model: ModelSpec,
    placement: Placement,
    env: EnvSpec,
    params: PerfParams,
    mem: MemoryModel = DEFAULT_MEMORY_MODEL,
    ga_choices: Iterable[int] = DEFAULT_GA_CHOICES,
    plan_filter: Optional[PlanFilter] = None,
) -> list[PlanCandidate]:
    """All feasible candidates for this placement, best first.

    Feasibility covers GPU memory against env.gpu_mem and model-level
    rejections (tensor groups across nodes, offload without CPUs, missing
    pipeline profile). Host memory is reported but not enforced here; that is
    the allocator's job. Ties are broken toward fewer GA steps, checkpointing
    off, larger dp, then larger tp.
    """
    out: list[PlanCandidate] = []
    for plan in enumerate_plans(model, placement.gpus, env, ga_choices):
        if plan_filter is not None and not plan_filter.matches(plan):
            continue
        est = estimate_memory(model, plan, placement.batch, mem)
        if est.gpu_total > env.gpu_mem:
            continue
        try:
            pred = perf.predict(model, plan, placement, env, params)
        except perf.PerfModelError:
            continue
        out.append(
            PlanCandidate(
                plan=plan,
                prediction=pred,
                gpu_mem=est.gpu_total,
                host_mem=est.host_states,
            )
        )
    out.sort(key=_candidate_order)
    return out


def best_plan(
    model: ModelSpec,
    placement: Placement,
    env: EnvSpec,
    params: Optional[PerfParams],
    mem: MemoryModel = DEFAULT_MEMORY_MODEL,
    ga_choices: Iterable[int] = DEFAULT_GA_CHOICES,
    plan_filter: Optional[PlanFilter] = None,
) -> Optional[PlanCandidate]:
    """Highest-throughput feasible plan for the placement, or None."""
    if params is None:
        raise NoFittedModel(f"no fitted parameters for model {model.name}")
    ranked = rank_plans(model, placement, env, params, mem, ga_choices, plan_filter)
    return ranked[0] if ranked else None


class PlanScorer:
    """Caching front-end for plan selection.

    The scheduler and the simulator call into plan selection thousands of
    times with recurring (model, placement, batch) combinations; this keeps
    one memo per distinct call signature. Fitted parameters are part of every
    key, so a refit naturally invalidates stale entries.
    """

    def __init__(
        self,
        env: EnvSpec,
        mem: MemoryModel = DEFAULT_MEMORY_MODEL,
        ga_choices: Iterable[int] = DEFAULT_GA_CHOICES,
    ) -> None:
        self.env = env
        self.mem = mem
        self.ga_choices = tuple(ga_choices)
        self._best: dict = {}
        self._envelope: dict = {}

    def _placement_key(self, placement: Placement) -> tuple:
        return (placement.gpu_counts(), placement.cpus, placement.batch)

    def best(
        self,
        model: ModelSpec,
        placement: Placement,
        params: PerfParams,
        plan_filter: Optional[PlanFilter] = None,
        host_cap: Optional[float] = None,
    ) -> Optional[PlanCandidate]:
        key = (model, self._placement_key(placement), params, plan_filter, host_cap)
        if key not in self._best:
            ranked = rank_plans(
                model,
                placement,
                self.env,
                params,
                self.mem,
                self.ga_choices,
                plan_filter,
            )
            if host_cap is not None:
                ranked = [c for c in ranked if c.host_mem <= host_cap]
            self._best[key] = ranked[0] if ranked else None
        return self._best[key]

    def best_for_amount(
        self,
        model: ModelSpec,
        gpus: int,
        cpus: int,
        batch: float,
        params: PerfParams,
        plan_filter: Optional[PlanFilter] = None,
        host_cap: Optional[float] = None,
    ) -> Optional[PlanCandidate]:
        """Best plan on a canonical greedy packing of the bare amounts."""
        if gpus < 1:
            return None
        placement = build_placement(gpus, cpus, self.env, batch)
        return self.best(model, placement, params, plan_filter, host_cap)

    def envelope_best(
        self,
        model: ModelSpec,
        placement: Placement,
        params: PerfParams,
        plan_filter: Optional[PlanFilter] = None,
    ) -> Optional[tuple[PlanCandidate, tuple[NodeShare, ...]]]:
        """Best plan over any GPU-prefix subset of an allocated placement.

        An allocation may hold more GPUs than the best plan can exploit (flat
        stretches of the sensitivity curve); the job then idles the surplus.
        Node shares are consumed in descending-share order so drops come off
        the most fragmented tail first. Returns the winning candidate and the
        node shares its plan actually occupies.

        The memo key carries the full share layout, node names included: the
        returned shares are node-labeled, and the per-node CPU split decides
        which GPU-prefix subsets can still run an offload plan.
        """
        layout = tuple(
            (s.node, s.gpus, s.cpus, s.mem) for s in placement.shares
        )
        key = (model, layout, placement.batch, params, plan_filter)
        if key in self._envelope:
            return self._envelope[key]
        ordered = sorted(
            (s for s in placement.shares if s.gpus > 0),
            key=lambda s: (-s.gpus, s.node),
        )
        total = sum(s.gpus for s in ordered)
        best: Optional[tuple[PlanCandidate, tuple[NodeShare, ...]]] = None
        for used in range(total, 0, -1):
            shares: list[NodeShare] = []
            left = used
            for s in ordered:
                take = min(left, s.gpus)
                if take > 0:
                    shares.append(
                        NodeShare(node=s.node, gpus=take, cpus=s.cpus, mem=s.mem)
                    )
                left -= take
                if left == 0:
                    break
            sub = Placement(shares=tuple(shares), batch=placement.batch)
            cand = self.best(model, sub, params, plan_filter)
            if cand is not None and (best is None or cand.throughput > best[0].throughput):
                best = (cand, sub.shares)
        self._envelope[key] = best
        return best

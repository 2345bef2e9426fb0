"""Analytic iteration-time model for reconfigurable training jobs.

One training iteration decomposes into a computation/communication part and an
optimizer/offload part:

    t_iter = t_cc + t_oo + k_const
    throughput = batch / t_iter

The individual terms follow the multi-resource model: forward time scaled from
a profiled reference, backward time as a fitted multiple of forward, analytic
ring/point-to-point communication volumes divided by bottleneck bandwidth, and
a generalized-mean overlap operator that interpolates between full serial (k=1)
and full overlap (k -> inf).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .types import EnvSpec, ExecutionPlan, ModelSpec, PerfParams, Placement, PlanKind


class PerfModelError(ValueError):
    """Base class for plan/placement combinations the model rejects."""


class PipelineLayerMismatch(PerfModelError):
    """pp_size does not evenly divide the model's layer count."""


class TensorGroupSpansNodes(PerfModelError):
    """A tensor-parallel group would straddle a node boundary."""


class OffloadNeedsCpus(PerfModelError):
    """A ZeRO-Offload plan was placed with zero CPUs."""


@dataclass(frozen=True)
class CommVolumes:
    """Per-iteration communication volumes in bytes."""

    dp: float
    tp: float
    pp: float


@dataclass(frozen=True)
class CommTimes:
    """Per-iteration communication times in seconds."""

    dp: float
    tp: float
    pp: float

    @property
    def total(self) -> float:
        return self.dp + self.tp + self.pp


@dataclass(frozen=True)
class Prediction:
    """Full output of one iteration-time evaluation."""

    t_iter: float
    throughput: float
    t_fwd: float
    t_bwd: float
    t_cc: float
    t_oo: float
    t_opt: float
    t_off: float
    comm: CommTimes

    def to_dict(self) -> dict:
        return {
            "t_iter": self.t_iter,
            "throughput": self.throughput,
            "t_fwd": self.t_fwd,
            "t_bwd": self.t_bwd,
            "t_cc": self.t_cc,
            "t_oo": self.t_oo,
            "t_opt": self.t_opt,
            "t_off": self.t_off,
            "t_comm_dp": self.comm.dp,
            "t_comm_tp": self.comm.tp,
            "t_comm_pp": self.comm.pp,
        }


def forward_time(model: ModelSpec, plan: ExecutionPlan, batch: float) -> float:
    """Forward time of a single pass (one GA micro-step).

    Non-pipelined plans scale the profiled reference linearly in the per-GPU
    per-pass batch batch/(d*a) and in the tensor shard 1/t. Pipelined plans use
    the micro-batch pipeline form t_p * g_p / p * (m + p - 1), where t_p was
    profiled with layers/g_p layers per GPU.
    """
    if plan.pp_size > 1:
        if model.layers % plan.pp_size != 0:
            raise PipelineLayerMismatch(
                f"pp_size {plan.pp_size} does not divide {model.layers} layers"
            )
        prof = model.profile
        if prof.t_pp_ref <= 0:
            raise PerfModelError(f"model {model.name} has no pipeline profile")
        stages = plan.pp_size
        return (
            prof.t_pp_ref
            * prof.ref_pp_gpus
            / stages
            * (plan.micro_batches + stages - 1)
        )
    prof = model.profile
    per_gpu_batch = batch / (plan.dp_size * plan.ga_steps)
    return (
        prof.t_fwd_ref
        * (per_gpu_batch / prof.ref_batch_per_gpu)
        * (prof.ref_tp_size / plan.tp_size)
    )


def backward_time(t_fwd: float, plan: ExecutionPlan, params: PerfParams) -> float:
    """Backward time of a single pass; checkpointing adds one forward recompute."""
    if plan.grad_ckpt:
        return t_fwd + params.k_bwd * t_fwd
    return params.k_bwd * t_fwd


def comm_volumes(model: ModelSpec, plan: ExecutionPlan, batch: float) -> CommVolumes:
    """Analytic per-iteration communication volumes in bytes.

    Any parallel dimension of size one contributes zero volume. The batch here
    is the global batch; volumes already integrate over all GA micro-steps.
    """
    d, t, p = plan.dp_size, plan.tp_size, plan.pp_size
    s, h, l = model.seq_len, model.hidden, model.layers
    params_bytes = model.param_count * model.bytes_per_param
    v_dp = 0.0
    if d > 1:
        v_dp = params_bytes * 2.0 * (d - 1) / (d * t * p)
    v_tp = 0.0
    if t > 1:
        v_tp = 4.0 * 2.0 * (t - 1) * batch * s * h * l / (d * t) * model.act_bytes
    v_pp = 0.0
    if p > 1:
        v_pp = 2.0 * p * batch * s * h / (d * t) * model.act_bytes
    return CommVolumes(dp=v_dp, tp=v_tp, pp=v_pp)


def _node_boundaries(counts: list[int]) -> list[int]:
    cum, out = 0, []
    for c in counts:
        cum += c
        out.append(cum)
    return out


def _pp_pair_bandwidths(
    plan: ExecutionPlan, gpu_counts: list[int], env: EnvSpec
) -> list[float]:
    """Bottleneck bandwidth for each consecutive pipeline-stage pair.

    Stages are laid out over the flattened GPU order, stage width d*t. A pair
    communicates at intra-node speed only if both stages sit entirely on one
    node.
    """
    width = plan.dp_size * plan.tp_size
    bounds = _node_boundaries(gpu_counts)

    def node_span(lo: int, hi: int) -> tuple[int, int]:
        first = next(i for i, b in enumerate(bounds) if lo < b)
        last = next(i for i, b in enumerate(bounds) if hi <= b)
        return first, last

    bws = []
    for stage in range(plan.pp_size - 1):
        lo = stage * width
        hi = (stage + 2) * width
        first, last = node_span(lo, hi)
        bws.append(env.intra_bw if first == last else env.inter_bw)
    return bws


def comm_times(
    volumes: CommVolumes,
    plan: ExecutionPlan,
    placement: Placement,
    env: EnvSpec,
) -> CommTimes:
    """Turn volumes into times using bottleneck bandwidths of the placement."""
    counts = [s.gpus for s in placement.shares if s.gpus > 0]
    multi_node = len(counts) > 1

    t_tp = 0.0
    if plan.tp_size > 1:
        for c in counts:
            if c % plan.tp_size != 0:
                raise TensorGroupSpansNodes(
                    f"tp_size {plan.tp_size} cannot tile node share of {c} GPUs"
                )
        t_tp = volumes.tp / env.intra_bw

    t_dp = 0.0
    if volumes.dp > 0:
        bw = env.inter_bw if multi_node else env.intra_bw
        t_dp = volumes.dp / bw

    t_pp = 0.0
    if plan.pp_size > 1 and volumes.pp > 0:
        unit = volumes.pp / plan.pp_size
        t_pp = unit / env.intra_bw
        for bw in _pp_pair_bandwidths(plan, counts, env):
            t_pp += unit / bw
    return CommTimes(dp=t_dp, tp=t_tp, pp=t_pp)


def overlap(t_x: float, t_y: float, k: float) -> float:
    """Generalized-mean overlap of two phases: (t_x**k + t_y**k)**(1/k).

    k = 1 is fully serial (sum); k -> inf approaches max(t_x, t_y). Computed
    against the larger operand for numerical stability at large k.
    """
    if k < 1.0:
        raise ValueError("overlap exponent must be >= 1")
    if t_x < 0 or t_y < 0:
        raise ValueError("phase times must be >= 0")
    hi = max(t_x, t_y)
    if hi == 0.0:
        return 0.0
    lo = min(t_x, t_y)
    return hi * (1.0 + (lo / hi) ** k) ** (1.0 / k)


def optimizer_time(
    model: ModelSpec, plan: ExecutionPlan, cpus: int, params: PerfParams
) -> float:
    """Parameter-update time; the divisor reflects who owns the states."""
    p_count = model.param_count
    if plan.kind is PlanKind.THREE_D:
        return params.k_opt * p_count / (plan.tp_size * plan.pp_size)
    if plan.kind is PlanKind.ZERO_DP:
        return params.k_opt * p_count / plan.dp_size
    if cpus < 1:
        raise OffloadNeedsCpus("ZeRO-Offload requires at least one CPU")
    return params.k_opt_off * p_count / (plan.dp_size * cpus)


def offload_time(model: ModelSpec, plan: ExecutionPlan, env: EnvSpec) -> float:
    """PCIe transfer time of the offloaded states; zero for GPU-resident plans."""
    if plan.kind is not PlanKind.ZERO_OFFLOAD:
        return 0.0
    return model.param_count * model.bytes_per_param / (plan.dp_size * env.pcie_bw)


def combine_cc(
    t_fwd: float,
    t_bwd: float,
    comm: CommTimes,
    plan: ExecutionPlan,
    params: PerfParams,
) -> float:
    """Computation/communication span of one iteration.

    Three regimes: no accumulation (gradient sync overlaps the single backward
    pass), accumulation with pure data parallelism (only the last backward
    overlaps the sync), and accumulation combined with tensor/pipeline
    parallelism (per-pass communication cannot be hidden at all).
    """
    a = plan.ga_steps
    if a == 1:
        return t_fwd + overlap(t_bwd, comm.dp, params.k_sync) + comm.tp + comm.pp
    if plan.tp_size * plan.pp_size == 1:
        return a * t_fwd + (a - 1) * t_bwd + overlap(t_bwd, comm.dp, params.k_sync)
    return a * t_fwd + a * t_bwd + comm.total


def combine_oo(
    t_opt: float,
    t_off: float,
    t_comm_dp: float,
    plan: ExecutionPlan,
    params: PerfParams,
) -> float:
    """Optimizer/offload span; offload overlaps PCIe traffic with both sides."""
    if plan.kind is not PlanKind.ZERO_OFFLOAD:
        return t_opt
    return overlap(t_comm_dp, t_off, params.k_off) + overlap(
        t_opt, t_off, params.k_swap
    )


def predict(
    model: ModelSpec,
    plan: ExecutionPlan,
    placement: Placement,
    env: EnvSpec,
    params: PerfParams,
) -> Prediction:
    """Evaluate the full iteration-time model for one (plan, placement)."""
    if placement.gpus != plan.gpus:
        raise PerfModelError(
            f"plan wants {plan.gpus} GPUs but placement holds {placement.gpus}"
        )
    batch = placement.batch
    t_fwd = forward_time(model, plan, batch)
    t_bwd = backward_time(t_fwd, plan, params)
    vols = comm_volumes(model, plan, batch)
    comm = comm_times(vols, plan, placement, env)
    t_cc = combine_cc(t_fwd, t_bwd, comm, plan, params)
    t_opt = optimizer_time(model, plan, placement.cpus, params)
    t_off = offload_time(model, plan, env)
    t_oo = combine_oo(t_opt, t_off, comm.dp, plan, params)
    t_iter = t_cc + t_oo + params.k_const
    if not math.isfinite(t_iter) or t_iter <= 0:
        raise PerfModelError(f"non-finite iteration time for {plan.descriptor()}")
    return Prediction(
        t_iter=t_iter,
        throughput=batch / t_iter,
        t_fwd=t_fwd,
        t_bwd=t_bwd,
        t_cc=t_cc,
        t_oo=t_oo,
        t_opt=t_opt,
        t_off=t_off,
        comm=comm,
    )

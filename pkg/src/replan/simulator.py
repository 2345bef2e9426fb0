"""Discrete-event cluster simulator driving the scheduling policies.

Time is integer milliseconds. Events are (time, kind, job id) ordered tuples;
kinds order submissions before completions before starvation ticks at the
same tick. Observed iteration times come from a ground-truth oracle (the
analytic model under hidden true parameters, optionally with multiplicative
log-normal noise derived from a stable content hash, so replays and policy
variants see identical measurements).
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import perf
from .fitting import FitResult, FittingError, Observation, maybe_refit
from .plans import PlanFilter, PlanScorer, enumerate_plans, estimate_memory
from .scheduler import (
    ClusterState,
    Decision,
    DEFAULT_CKPT_COST_S,
    Job,
    JobAssignment,
    JobClass,
    JobState,
    RECONFIG_EFFICIENCY,
    STARVATION_THRESHOLD_S,
    SchedulerPolicy,
    Tenant,
    reconfig_gate,
)
from .sensitivity import InfeasibleRequest, min_res
from .types import (
    EnvSpec,
    ExecutionPlan,
    ModelSpec,
    NodeShare,
    PerfParams,
    Placement,
    ResourceVector,
    build_placement,
)

_SUBMIT, _COMPLETE, _STARVE = 0, 1, 2


class Policy(str, Enum):
    FULL = "full"
    PLAN_ONLY = "plan_only"
    RESOURCE_ONLY = "resource_only"
    POLICY_ONLY = "policy_only"
    EVEN_SPLIT = "even_split"
    STATIC_GANG = "static_gang"


@dataclass(frozen=True)
class TraceJob:
    """One row of a workload trace."""

    submit_s: float
    model: str
    gpus: int
    duration_s: float
    tenant: str = "tenant-a"
    klass: str = "guaranteed"
    plan: str = ""


TRACE_HEADER = ["submit_s", "model", "gpus", "duration_s", "tenant", "class", "plan"]


def write_trace(path: str, rows: Sequence[TraceJob]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for r in rows:
            w.writerow(
                [r.submit_s, r.model, r.gpus, r.duration_s, r.tenant, r.klass, r.plan]
            )


def read_trace(path: str) -> list[TraceJob]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.DictReader(fh)
        missing = set(TRACE_HEADER) - set(rd.fieldnames or [])
        if missing:
            raise ValueError(f"trace is missing columns: {sorted(missing)}")
        for row in rd:
            out.append(
                TraceJob(
                    submit_s=float(row["submit_s"]),
                    model=row["model"],
                    gpus=int(row["gpus"]),
                    duration_s=float(row["duration_s"]),
                    tenant=row["tenant"] or "tenant-a",
                    klass=row["class"] or "guaranteed",
                    plan=row["plan"] or "",
                )
            )
    return out


class GroundTruthOracle:
    """Measured iteration times: the model under hidden parameters plus noise.

    Noise is multiplicative log-normal with the given sigma. Each (model,
    plan, placement) combination draws its factor from a generator seeded by
    a content hash, so observations are replay-stable and independent of
    query order.
    """

    def __init__(
        self,
        hidden_params: dict[str, PerfParams],
        env: EnvSpec,
        noise_sigma: float = 0.0,
        seed: int = 0,
    ) -> None:
        self.hidden_params = hidden_params
        self.env = env
        self.noise_sigma = noise_sigma
        self.seed = seed

    def true_t_iter(
        self, model: ModelSpec, plan: ExecutionPlan, placement: Placement
    ) -> float:
        params = self.hidden_params[model.name]
        return perf.predict(model, plan, placement, self.env, params).t_iter

    def observe(
        self, model: ModelSpec, plan: ExecutionPlan, placement: Placement
    ) -> float:
        t = self.true_t_iter(model, plan, placement)
        if self.noise_sigma <= 0.0:
            return t
        tag = "|".join(
            [
                str(self.seed),
                model.name,
                plan.descriptor(),
                repr(placement.gpu_counts()),
                str(placement.cpus),
                repr(placement.batch),
            ]
        )
        digest = hashlib.sha256(tag.encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        return t * math.exp(self.noise_sigma * rng.standard_normal())


@dataclass
class _Rt:
    """Simulator-side bookkeeping for one job."""

    epoch: int = 0
    anchor_ms: int = 0
    freeze_until_ms: int = 0
    t_iter_obs: float = 0.0
    pred_throughput: float = 0.0
    first_start_ms: Optional[int] = None
    initial_plan: Optional[ExecutionPlan] = None
    baseline_throughput: float = 0.0


@dataclass
class SimResult:
    jobs: dict[str, Job]
    metrics: dict
    timeline: list[dict] = field(default_factory=list)
    audit: list[dict] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    rejected: list[str] = field(default_factory=list)


def normalized_speedup(
    achieved: dict[str, float], baseline: dict[str, float]
) -> tuple[dict[str, float], float]:
    """Per-job achieved/baseline throughput factors and their sum."""
    factors = {}
    for jid, tps in achieved.items():
        base = baseline.get(jid, 0.0)
        factors[jid] = tps / base if base > 0 else 0.0
    return factors, sum(factors.values())


class Simulator:
    def __init__(
        self,
        models: dict[str, ModelSpec],
        env: EnvSpec,
        n_nodes: int,
        policy: Policy,
        params_by_model: dict[str, PerfParams],
        oracle: GroundTruthOracle,
        tenants: Optional[dict[str, Tenant]] = None,
        ckpt_cost: float = DEFAULT_CKPT_COST_S,
        starvation_threshold: float = STARVATION_THRESHOLD_S,
        reconfig_threshold: float = RECONFIG_EFFICIENCY,
        scorer: Optional[PlanScorer] = None,
        validate: bool = False,
        online_refit: bool = False,
    ) -> None:
        self.models = models
        self.env = env
        self.policy_kind = policy
        self.params_by_model = dict(params_by_model)
        self.oracle = oracle
        self.cluster = ClusterState.build(env, n_nodes)
        self.tenants = tenants
        self.ckpt_cost = ckpt_cost
        self.starvation_threshold = starvation_threshold
        self.reconfig_threshold = reconfig_threshold
        self.scorer = scorer or PlanScorer(env)
        self.validate = validate
        self.online_refit = online_refit
        self._refit_history: dict[str, list[Observation]] = {}
        self._policy = self._build_policy()

    def _build_policy(self):
        if self.policy_kind in (Policy.FULL, Policy.RESOURCE_ONLY):
            return SchedulerPolicy(
                self.env,
                self.scorer,
                self.params_by_model,
                starvation_threshold=self.starvation_threshold,
                reconfig_threshold=self.reconfig_threshold,
            )
        if self.policy_kind in (Policy.PLAN_ONLY, Policy.POLICY_ONLY):
            return _FixedResourcePolicy(self)
        if self.policy_kind is Policy.EVEN_SPLIT:
            return _EvenSplitPolicy(self)
        return _StaticGangPolicy(self)

    # --------------------------------------------------------- job intake

    def _make_job(self, row: TraceJob, idx: int) -> tuple[Job, _Rt]:
        model = self.models[row.model]
        batch = row.gpus * model.profile.ref_batch_per_gpu
        cpus = int(round(row.gpus * self.env.cpus_per_node / self.env.gpus_per_node))
        mem = self.env.mem_per_node * row.gpus / self.env.gpus_per_node
        requested = ResourceVector(gpus=row.gpus, cpus=cpus, mem=mem)
        placement = build_placement(row.gpus, cpus, self.env, batch)
        params = self.params_by_model[row.model]
        if row.plan:
            initial = ExecutionPlan.from_descriptor(row.plan)
        else:
            cand = self.scorer.best(model, placement, params)
            if cand is None:
                raise InfeasibleRequest(
                    f"no feasible plan for {row.model} on {row.gpus} GPUs"
                )
            initial = cand.plan
        if initial.gpus != row.gpus:
            raise InfeasibleRequest(
                f"trace plan {initial.descriptor()} does not use {row.gpus} GPUs"
            )
        plan_filter = None
        if self.policy_kind is Policy.RESOURCE_ONLY:
            plan_filter = PlanFilter.family_of(initial)
        elif self.policy_kind in (Policy.POLICY_ONLY, Policy.STATIC_GANG):
            plan_filter = PlanFilter.exact(initial)
        job = Job(
            id=f"j{idx:04d}",
            tenant=row.tenant,
            klass=JobClass(row.klass),
            model=model,
            batch=batch,
            requested=requested,
            requested_plan=initial,
            submit_time=row.submit_s,
            plan_filter=plan_filter,
            ckpt_cost=self.ckpt_cost,
            queued_since=row.submit_s,
        )
        rt = _Rt(initial_plan=initial)
        t_true = self.oracle.observe(model, initial, placement)
        job.target_minibatches = max(1.0, row.duration_s / t_true)
        job.remaining = job.target_minibatches
        rt.baseline_throughput = perf.predict(
            model, initial, placement, self.env, params
        ).throughput
        return job, rt

    def _admit(self, job: Job, rt: _Rt, audit: list[dict]) -> bool:
        params = self.params_by_model[job.model.name]
        try:
            if job.klass is JobClass.GUARANTEED:
                job.min_res = min_res(
                    job.model,
                    job.requested,
                    job.requested_plan,
                    self.env,
                    params,
                    job.batch,
                    scorer=self.scorer,
                    plan_filter=job.plan_filter,
                )
                placement = build_placement(
                    job.requested.gpus, job.requested.cpus, self.env, job.batch
                )
                job.sla_throughput = perf.predict(
                    job.model, job.requested_plan, placement, self.env, params
                ).throughput
            else:
                job.min_res = ResourceVector.zero()
                job.sla_throughput = 0.0
        except InfeasibleRequest as exc:
            job.state = JobState.REJECTED
            audit.append(
                {
                    "time": job.submit_time,
                    "event": "reject",
                    "job": job.id,
                    "reason": str(exc),
                }
            )
            return False
        return True

    # --------------------------------------------------------- event loop

    def run(self, trace: Sequence[TraceJob]) -> SimResult:
        # jobs stay in `pending` until their submit event fires; the policy
        # must never see a job before its submission time
        pending: dict[str, Job] = {}
        jobs: dict[str, Job] = {}
        rts: dict[str, _Rt] = {}
        audit: list[dict] = []
        timeline: list[dict] = []
        violations: list[str] = []
        rejected: list[str] = []
        heap: list[tuple[int, int, str, int]] = []

        for idx, row in enumerate(sorted(trace, key=lambda r: (r.submit_s,))):
            job, rt = self._make_job(row, idx)
            pending[job.id] = job
            rts[job.id] = rt
            heapq.heappush(heap, (int(round(row.submit_s * 1000)), _SUBMIT, job.id, 0))

        def used_gpus() -> int:
            return self.cluster.total_gpus - sum(
                n.free_gpus for n in self.cluster.nodes.values()
            )

        def advance_all(to_ms: int) -> None:
            for job in jobs.values():
                if job.state is not JobState.RUNNING:
                    continue
                rt = rts[job.id]
                span = to_ms - rt.anchor_ms
                if span <= 0:
                    continue
                active = to_ms - max(rt.anchor_ms, rt.freeze_until_ms)
                if active > 0 and rt.t_iter_obs > 0:
                    job.remaining -= (active / 1000.0) / rt.t_iter_obs
                job.agg_train_time += span / 1000.0
                rt.anchor_ms = to_ms

        def finish_event(job: Job, now_ms: int) -> tuple[int, int, str, int]:
            rt = rts[job.id]
            start = max(now_ms, rt.freeze_until_ms)
            ms = int(math.ceil(max(0.0, job.remaining) * rt.t_iter_obs * 1000.0))
            return (start + ms, _COMPLETE, job.id, rt.epoch)

        def check_invariants(now_s: float) -> None:
            for n in self.cluster.nodes.values():
                alloc_g = sum(j.alloc.get(n.name, (0, 0, 0.0))[0] for j in jobs.values())
                alloc_c = sum(j.alloc.get(n.name, (0, 0, 0.0))[1] for j in jobs.values())
                if alloc_g + n.free_gpus != n.capacity.gpus:
                    violations.append(
                        f"t={now_s}: gpu conservation broken on {n.name}"
                    )
                if alloc_c + n.free_cpus != n.capacity.cpus:
                    violations.append(
                        f"t={now_s}: cpu conservation broken on {n.name}"
                    )
            usage: dict[str, ResourceVector] = {}
            for job in jobs.values():
                if job.state is JobState.RUNNING:
                    if job.klass is JobClass.GUARANTEED:
                        u = usage.get(job.tenant, ResourceVector.zero())
                        usage[job.tenant] = ResourceVector(
                            u.gpus + job.min_res.gpus,
                            u.cpus + job.min_res.cpus,
                            u.mem + job.min_res.mem,
                        )
                        if (
                            job.sla_throughput > 0
                            and rts[job.id].pred_throughput
                            < job.sla_throughput - 1e-6
                        ):
                            violations.append(
                                f"t={now_s}: SLA breach for {job.id}"
                            )
            if self.tenants:
                for name, used in usage.items():
                    q = self.tenants.get(name)
                    if q is not None and not q.quota.dominates(used):
                        violations.append(f"t={now_s}: quota breach for {name}")

        def apply(decision: Decision, now_ms: int) -> None:
            for jid in decision.preemptions:
                job = jobs[jid]
                rt = rts[jid]
                for node, v in job.alloc.items():
                    self.cluster.release(node, v[0], v[1], v[2])
                job.alloc = {}
                job.plan = None
                job.active_shares = ()
                job.state = JobState.QUEUED
                job.reconfig_count += 1
                job.was_preempted = True
                job.queued_since = now_ms / 1000.0
                rt.epoch += 1
                rt.pred_throughput = 0.0
                audit.append(
                    {"time": now_ms / 1000.0, "event": "preempted", "job": jid}
                )
            # release every reassigned job's old allocation before reserving
            # anything new, so swaps between jobs do not transiently exceed
            # node capacity
            for a in decision.assignments:
                job = jobs[a.job_id]
                for node, v in job.alloc.items():
                    self.cluster.release(node, v[0], v[1], v[2])
                job.alloc = {}
            for a in decision.assignments:
                job = jobs[a.job_id]
                rt = rts[a.job_id]
                for s in a.shares:
                    self.cluster.reserve(s.node, s.gpus, s.cpus, s.mem)
                job.alloc = {s.node: [s.gpus, s.cpus, s.mem] for s in a.shares}
                job.plan = a.plan
                job.active_shares = a.active
                freeze_s = 0.0
                if a.launched:
                    job.state = JobState.RUNNING
                    if job.was_preempted:
                        freeze_s = job.ckpt_cost
                        job.was_preempted = False
                    if rt.first_start_ms is None:
                        rt.first_start_ms = now_ms
                elif a.reconfig:
                    job.reconfig_count += 1
                    freeze_s = job.ckpt_cost
                rt.anchor_ms = now_ms
                rt.freeze_until_ms = now_ms + int(round(freeze_s * 1000))
                active_placement = Placement(shares=a.active, batch=job.batch)
                rt.t_iter_obs = self.oracle.observe(job.model, a.plan, active_placement)
                rt.pred_throughput = a.throughput
                rt.epoch += 1
                heapq.heappush(heap, finish_event(job, now_ms))
                if self.online_refit:
                    self._consider_refit(job, a, active_placement, rt.t_iter_obs)

        last_ms = 0
        gpu_ms_used = 0.0
        while heap:
            now_ms, kind, jid, epoch = heapq.heappop(heap)
            gpu_ms_used += used_gpus() * (now_ms - last_ms)
            advance_all(now_ms)
            last_ms = now_ms
            if kind == _SUBMIT:
                jobs[jid] = pending.pop(jid)
            job = jobs[jid]
            rt = rts[jid]
            now_s = now_ms / 1000.0
            reschedule = False
            if kind == _SUBMIT:
                audit.append({"time": now_s, "event": "submit", "job": jid})
                if self._admit(job, rt, audit):
                    reschedule = True
                    if job.klass is JobClass.BEST_EFFORT:
                        heapq.heappush(
                            heap,
                            (
                                now_ms
                                + int(self.starvation_threshold * 1000)
                                + 1,
                                _STARVE,
                                jid,
                                0,
                            ),
                        )
                else:
                    rejected.append(jid)
            elif kind == _COMPLETE:
                if job.state is JobState.RUNNING and epoch == rt.epoch:
                    if job.remaining <= 1e-6:
                        for node, v in job.alloc.items():
                            self.cluster.release(node, v[0], v[1], v[2])
                        job.alloc = {}
                        job.state = JobState.DONE
                        job.finish_time = now_s
                        job.remaining = 0.0
                        audit.append(
                            {"time": now_s, "event": "complete", "job": jid}
                        )
                        if self.validate:
                            t = job.agg_train_time
                            if t > 0:
                                pen = (
                                    t - job.reconfig_count * job.ckpt_cost
                                ) / t
                                if pen < self.reconfig_threshold - 1e-9:
                                    violations.append(
                                        f"penalty breach for {jid}: {pen:.4f}"
                                    )
                        reschedule = True
                    else:
                        heapq.heappush(heap, finish_event(job, now_ms))
            elif kind == _STARVE:
                if (
                    job.state is JobState.QUEUED
                    and job.klass is JobClass.BEST_EFFORT
                ):
                    reschedule = True
            if reschedule:
                tenants = self.tenants or {}
                decision = self._policy.schedule(
                    list(jobs.values()), self.cluster, tenants, now_s
                )
                audit.extend(decision.audit)
                apply(decision, now_ms)
                if self.validate:
                    check_invariants(now_s)
            timeline.append(
                {
                    "time_s": now_s,
                    "running": sum(
                        1 for j in jobs.values() if j.state is JobState.RUNNING
                    ),
                    "queued": sum(
                        1 for j in jobs.values() if j.state is JobState.QUEUED
                    ),
                    "used_gpus": used_gpus(),
                    "free_gpus": self.cluster.total_gpus - used_gpus(),
                }
            )

        metrics = self._metrics(jobs, rts, gpu_ms_used, rejected)
        return SimResult(
            jobs=jobs,
            metrics=metrics,
            timeline=timeline,
            audit=audit,
            violations=violations,
            rejected=rejected,
        )

    def _consider_refit(
        self, job: Job, a: JobAssignment, placement: Placement, observed: float
    ) -> None:
        obs = Observation(
            plan=a.plan, placement=placement, observed_t_iter=rtsafe(observed)
        )
        name = job.model.name
        hist = self._refit_history.setdefault(name, [])
        current = FitResult(
            params=self.params_by_model[name],
            rmsle=0.0,
            n_points=len(hist),
            converged=True,
        )
        try:
            result, refitted = maybe_refit(
                current, obs, hist, job.model, self.env
            )
        except FittingError:
            refitted = False
            result = current
        hist.append(obs)
        if refitted:
            self.params_by_model[name] = result.params

    def _metrics(
        self,
        jobs: dict[str, Job],
        rts: dict[str, _Rt],
        gpu_ms_used: float,
        rejected: list[str],
    ) -> dict:
        per_job = []
        jcts = []
        submits = []
        finishes = []
        total_reconfigs = 0
        for jid in sorted(jobs):
            job = jobs[jid]
            rt = rts[jid]
            done = job.state is JobState.DONE and job.finish_time is not None
            jct = (job.finish_time - job.submit_time) if done else None
            if done:
                jcts.append(jct)
                submits.append(job.submit_time)
                finishes.append(job.finish_time)
            total_reconfigs += job.reconfig_count
            first_start = (
                rt.first_start_ms / 1000.0 if rt.first_start_ms is not None else None
            )
            achieved = 0.0
            if done and first_start is not None and job.finish_time > first_start:
                achieved = (
                    job.target_minibatches
                    * job.batch
                    / (job.finish_time - first_start)
                )
            per_job.append(
                {
                    "id": jid,
                    "tenant": job.tenant,
                    "class": job.klass.value,
                    "model": job.model.name,
                    "state": job.state.value,
                    "submit_s": job.submit_time,
                    "first_start_s": first_start,
                    "finish_s": job.finish_time,
                    "jct_s": jct,
                    "queue_delay_s": (
                        first_start - job.submit_time
                        if first_start is not None
                        else None
                    ),
                    "reconfigs": job.reconfig_count,
                    "ckpt_overhead_s": job.reconfig_count * job.ckpt_cost,
                    "target_minibatches": job.target_minibatches,
                    "achieved_throughput": achieved,
                    "baseline_throughput": rt.baseline_throughput,
                    "normalized_speedup": (
                        achieved / rt.baseline_throughput
                        if rt.baseline_throughput > 0
                        else 0.0
                    ),
                }
            )
        makespan = (max(finishes) - min(submits)) if finishes else 0.0
        metrics = {
            "policy": self.policy_kind.value,
            "n_jobs": len(jobs),
            "n_completed": len(jcts),
            "n_rejected": len(rejected),
            "avg_jct_s": float(np.mean(jcts)) if jcts else 0.0,
            "p99_jct_s": float(np.percentile(jcts, 99)) if jcts else 0.0,
            "makespan_s": makespan,
            "total_reconfigs": total_reconfigs,
            "gpu_hours": gpu_ms_used / 3_600_000.0,
            "jobs": per_job,
        }
        return metrics


def rtsafe(x: float) -> float:
    return x if x > 0 else 1e-9


# ---------------------------------------------------------------- baselines


class _FixedResourcePolicy:
    """Jobs get exactly their requested resources, FIFO with quota.

    With free plan choice this isolates plan reconfiguration (resources
    pinned); with an exact plan filter it isolates the queueing policy alone.
    """

    def __init__(self, sim: Simulator) -> None:
        self.sim = sim

    def schedule(
        self,
        jobs: list[Job],
        cluster: ClusterState,
        tenants: dict[str, Tenant],
        now: float,
    ) -> Decision:
        decision = Decision(time=now)
        free = {
            n.name: [n.free_gpus, n.free_cpus, n.free_mem]
            for n in cluster.nodes.values()
        }
        usage: dict[str, list] = {}
        for j in jobs:
            if j.state is JobState.RUNNING and j.klass is JobClass.GUARANTEED:
                u = usage.setdefault(j.tenant, [0, 0, 0.0])
                u[0] += j.min_res.gpus
                u[1] += j.min_res.cpus
                u[2] += j.min_res.mem
        queued = [j for j in jobs if j.state is JobState.QUEUED]
        guaranteed = sorted(
            (j for j in queued if j.klass is JobClass.GUARANTEED),
            key=lambda j: (j.queued_since, j.id),
        )
        best_effort = sorted(
            (j for j in queued if j.klass is JobClass.BEST_EFFORT),
            key=lambda j: (j.queued_since, j.id),
        )
        starved = [
            j
            for j in best_effort
            if now - j.queued_since > self.sim.starvation_threshold
        ]
        ordered = guaranteed + starved + [j for j in best_effort if j not in starved]
        for j in ordered:
            if j.klass is JobClass.GUARANTEED:
                t = tenants.get(j.tenant)
                u = usage.setdefault(j.tenant, [0, 0, 0.0])
                if t is not None:
                    rem = ResourceVector(
                        gpus=max(0, t.quota.gpus - u[0]),
                        cpus=max(0, t.quota.cpus - u[1]),
                        mem=max(0.0, t.quota.mem - u[2]),
                    )
                    if not rem.dominates(j.min_res):
                        continue
            a = _pack_exact(self.sim, j, free, now)
            if a is not None:
                decision.assignments.append(a)
                decision.audit.append(
                    {"time": now, "event": "launch", "job": j.id, "gpus": j.requested.gpus}
                )
                if j.klass is JobClass.GUARANTEED:
                    u = usage.setdefault(j.tenant, [0, 0, 0.0])
                    u[0] += j.min_res.gpus
                    u[1] += j.min_res.cpus
                    u[2] += j.min_res.mem
        # plan reconfiguration on fixed resources
        for j in sorted(
            (j for j in jobs if j.state is JobState.RUNNING), key=lambda j: j.id
        ):
            a = _replan_in_place(self.sim, j, now)
            if a is not None:
                decision.assignments.append(a)
                decision.audit.append(
                    {"time": now, "event": "replan", "job": j.id, "plan": a.plan.descriptor()}
                )
        return decision


def _pack_exact(
    sim: Simulator, j: Job, free: dict[str, list], now: float
) -> Optional[JobAssignment]:
    """Try to carve the requested vector out of the free map, best plan on it."""
    params = sim.params_by_model[j.model.name]
    need_g, need_c = j.requested.gpus, j.requested.cpus
    order = sorted(free, key=lambda n: (-free[n][0], n))
    shares: list[NodeShare] = []
    got_g = got_c = 0
    for n in order:
        g = min(free[n][0], need_g - got_g)
        c = min(free[n][1], need_c - got_c)
        if g > 0 or c > 0:
            shares.append(NodeShare(node=n, gpus=g, cpus=c))
            got_g += g
            got_c += c
        if got_g >= need_g and got_c >= need_c:
            break
    if got_g < need_g or got_c < need_c:
        return None
    placement = Placement(shares=tuple(shares), batch=j.batch)
    found = sim.scorer.envelope_best(j.model, placement, params, j.plan_filter)
    if found is None:
        return None
    cand, active = found
    if j.klass is JobClass.GUARANTEED and cand.throughput < j.sla_throughput - 1e-9:
        return None
    host = {s.node: 0.0 for s in shares}
    total_g = sum(s.gpus for s in active)
    for s in active:
        if cand.host_mem > 0 and total_g > 0:
            host[s.node] = cand.host_mem * s.gpus / total_g
    for n, m in host.items():
        if m > free[n][2] + 1e-6:
            return None
    final_shares = tuple(
        NodeShare(node=s.node, gpus=s.gpus, cpus=s.cpus, mem=host.get(s.node, 0.0))
        for s in shares
    )
    for s in final_shares:
        free[s.node][0] -= s.gpus
        free[s.node][1] -= s.cpus
        free[s.node][2] -= s.mem
    active_with_mem = tuple(
        NodeShare(node=s.node, gpus=s.gpus, cpus=s.cpus, mem=host.get(s.node, 0.0))
        for s in active
    )
    return JobAssignment(
        job_id=j.id,
        shares=final_shares,
        plan=cand.plan,
        active=active_with_mem,
        throughput=cand.throughput,
        t_iter=cand.prediction.t_iter,
        launched=True,
        reconfig=False,
    )


def _replan_in_place(sim: Simulator, j: Job, now: float) -> Optional[JobAssignment]:
    """Re-pick the best plan for a running job's existing allocation."""
    params = sim.params_by_model[j.model.name]
    shares = tuple(
        NodeShare(node=n, gpus=v[0], cpus=v[1], mem=v[2])
        for n, v in sorted(j.alloc.items(), key=lambda kv: (-kv[1][0], kv[0]))
        if v[0] > 0
    )
    if not shares:
        return None
    placement = Placement(shares=shares, batch=j.batch)
    found = sim.scorer.envelope_best(j.model, placement, params, j.plan_filter)
    if found is None:
        return None
    cand, active = found
    if cand.plan == j.plan and {s.node: s.gpus for s in active} == {
        s.node: s.gpus for s in j.active_shares
    }:
        return None
    if j.klass is JobClass.GUARANTEED and cand.throughput < j.sla_throughput - 1e-9:
        return None
    if not reconfig_gate(
        j.agg_train_time, j.reconfig_count, j.ckpt_cost, sim.reconfig_threshold
    ):
        return None
    return JobAssignment(
        job_id=j.id,
        shares=shares,
        plan=cand.plan,
        active=active,
        throughput=cand.throughput,
        t_iter=cand.prediction.t_iter,
        launched=False,
        reconfig=True,
    )


class _EvenSplitPolicy:
    """Divide the cluster's GPUs evenly among live jobs, best plan on each."""

    def __init__(self, sim: Simulator) -> None:
        self.sim = sim

    def schedule(
        self,
        jobs: list[Job],
        cluster: ClusterState,
        tenants: dict[str, Tenant],
        now: float,
    ) -> Decision:
        decision = Decision(time=now)
        live = sorted(
            (
                j
                for j in jobs
                if j.state in (JobState.QUEUED, JobState.RUNNING)
            ),
            key=lambda j: (j.submit_time, j.id),
        )
        if not live:
            return decision
        total = cluster.total_gpus
        movable: list[Job] = []
        frozen: list[Job] = []
        for j in live:
            if j.state is JobState.RUNNING and not reconfig_gate(
                j.agg_train_time,
                j.reconfig_count,
                j.ckpt_cost,
                self.sim.reconfig_threshold,
            ):
                frozen.append(j)
            else:
                movable.append(j)
        pool = total - sum(j.alloc_vector().gpus for j in frozen)
        if not movable or pool <= 0:
            return decision
        share = pool // len(movable)
        targets = {j.id: share for j in movable}
        leftover = pool - share * len(movable)
        for j in movable:
            if leftover <= 0:
                break
            targets[j.id] += 1
            leftover -= 1
        free = {
            n.name: [n.free_gpus, n.free_cpus, n.free_mem]
            for n in cluster.nodes.values()
        }
        for j in movable:  # release movable allocations into the pool
            for n, v in j.alloc.items():
                free[n][0] += v[0]
                free[n][1] += v[1]
                free[n][2] += v[2]
        for j in movable:
            want = targets[j.id]
            if want < 1:
                if j.state is JobState.RUNNING:
                    decision.preemptions.append(j.id)
                continue
            if j.state is JobState.RUNNING and want == j.alloc_vector().gpus:
                # unchanged: put its current allocation back and leave it be
                for n, v in j.alloc.items():
                    free[n][0] -= v[0]
                    free[n][1] -= v[1]
                    free[n][2] -= v[2]
                continue
            shares: list[NodeShare] = []
            got = 0
            for n in sorted(free, key=lambda n: (-free[n][0], n)):
                g = min(free[n][0], want - got)
                if g > 0:
                    c = min(
                        free[n][1],
                        int(
                            round(
                                g
                                * self.sim.env.cpus_per_node
                                / self.sim.env.gpus_per_node
                            )
                        ),
                    )
                    shares.append(NodeShare(node=n, gpus=g, cpus=c))
                    free[n][0] -= g
                    free[n][1] -= c
                    got += g
                if got >= want:
                    break
            if got < 1:
                continue
            placement = Placement(shares=tuple(shares), batch=j.batch)
            params = self.sim.params_by_model[j.model.name]
            found = self.sim.scorer.envelope_best(j.model, placement, params, None)
            if found is None:
                for s in shares:
                    free[s.node][0] += s.gpus
                    free[s.node][1] += s.cpus
                continue
            cand, active = found
            host: dict[str, float] = {}
            total_g = sum(s.gpus for s in active)
            for s in active:
                if cand.host_mem > 0 and total_g > 0:
                    host[s.node] = cand.host_mem * s.gpus / total_g
            bad = False
            for n, m in host.items():
                if m > free[n][2] + 1e-6:
                    bad = True
            if bad:
                for s in shares:
                    free[s.node][0] += s.gpus
                    free[s.node][1] += s.cpus
                continue
            for n, m in host.items():
                free[n][2] -= m
            final_shares = tuple(
                NodeShare(
                    node=s.node, gpus=s.gpus, cpus=s.cpus, mem=host.get(s.node, 0.0)
                )
                for s in shares
            )
            active_mem = tuple(
                NodeShare(
                    node=s.node, gpus=s.gpus, cpus=s.cpus, mem=host.get(s.node, 0.0)
                )
                for s in active
            )
            decision.assignments.append(
                JobAssignment(
                    job_id=j.id,
                    shares=final_shares,
                    plan=cand.plan,
                    active=active_mem,
                    throughput=cand.throughput,
                    t_iter=cand.prediction.t_iter,
                    launched=j.state is JobState.QUEUED,
                    reconfig=j.state is JobState.RUNNING,
                )
            )
            decision.audit.append(
                {"time": now, "event": "split", "job": j.id, "gpus": got}
            )
        return decision


def synthesize_trace(
    models: dict[str, ModelSpec],
    env: EnvSpec,
    total_gpus: int,
    n_jobs: int,
    load_scale: float = 1.0,
    plan_mode: str = "random",
    tenancy: str = "single",
    seed: int = 0,
    params_by_model: Optional[dict[str, PerfParams]] = None,
    mean_interarrival_s: float = 600.0,
    mean_duration_s: float = 3600.0,
) -> list[TraceJob]:
    """Generate a synthetic workload trace.

    ``plan_mode`` is "random" (uniform over memory-feasible plans) or "best"
    (model-predicted best plan, requires fitted parameters). ``tenancy`` is
    "single" (one tenant, all guaranteed) or "multi" (two tenants, mixed
    guaranteed and best-effort jobs).
    """
    if plan_mode not in ("random", "best"):
        raise ValueError(f"unknown plan_mode: {plan_mode!r}")
    if tenancy not in ("single", "multi"):
        raise ValueError(f"unknown tenancy: {tenancy!r}")
    if plan_mode == "best" and not params_by_model:
        raise ValueError("plan_mode='best' requires fitted parameters")
    rng = np.random.default_rng(seed)
    names = sorted(models)
    sizes = [g for g in (1, 2, 4, 8, 16) if g <= total_gpus]
    weights = np.array([0.30, 0.25, 0.20, 0.15, 0.10][: len(sizes)])
    weights = weights / weights.sum()
    rows: list[TraceJob] = []
    t = 0.0
    for _ in range(n_jobs):
        t += float(rng.exponential(mean_interarrival_s / max(load_scale, 1e-9)))
        name = names[int(rng.integers(len(names)))]
        model = models[name]
        gpus = int(rng.choice(sizes, p=weights))
        duration = float(rng.lognormal(mean=math.log(mean_duration_s), sigma=0.6))
        if tenancy == "single":
            tenant, klass = "tenant-a", JobClass.GUARANTEED.value
        else:
            if rng.random() < 0.5:
                tenant, klass = "tenant-a", JobClass.GUARANTEED.value
            else:
                tenant, klass = "tenant-b", JobClass.BEST_EFFORT.value
        batch = gpus * model.profile.ref_batch_per_gpu
        descriptor = ""
        if plan_mode == "random":
            feasible = []
            for plan in enumerate_plans(model, gpus, env):
                est = estimate_memory(model, plan, batch)
                if est.gpu_total <= env.gpu_mem:
                    feasible.append(plan)
            if feasible:
                descriptor = feasible[int(rng.integers(len(feasible)))].descriptor()
        else:
            cpus = int(round(gpus * env.cpus_per_node / env.gpus_per_node))
            placement = build_placement(gpus, cpus, env, batch)
            assert params_by_model is not None
            params = params_by_model[name]
            scorer = PlanScorer(env)
            cand = scorer.best(model, placement, params)
            if cand is not None:
                descriptor = cand.plan.descriptor()
        rows.append(
            TraceJob(
                submit_s=round(t, 3),
                model=name,
                gpus=gpus,
                duration_s=round(duration, 3),
                tenant=tenant,
                klass=klass,
                plan=descriptor,
            )
        )
    return rows


class _StaticGangPolicy:
    """Strict FIFO gang scheduling: exact request, fixed plan, no backfill."""

    def __init__(self, sim: Simulator) -> None:
        self.sim = sim

    def schedule(
        self,
        jobs: list[Job],
        cluster: ClusterState,
        tenants: dict[str, Tenant],
        now: float,
    ) -> Decision:
        decision = Decision(time=now)
        free = {
            n.name: [n.free_gpus, n.free_cpus, n.free_mem]
            for n in cluster.nodes.values()
        }
        queued = sorted(
            (j for j in jobs if j.state is JobState.QUEUED),
            key=lambda j: (j.submit_time, j.id),
        )
        for j in queued:
            a = _pack_exact(self.sim, j, free, now)
            if a is None:
                break  # head-of-line blocks; no backfill
            decision.assignments.append(a)
            decision.audit.append(
                {"time": now, "event": "launch", "job": j.id, "gpus": j.requested.gpus}
            )
        return decision

"""Quota-aware, slope-driven scheduling of reconfigurable training jobs.

The policy runs whenever jobs arrive or finish. Queued guaranteed jobs whose
minimal demand fits their tenant's remaining quota go first; afterwards every
best-effort and running job, ordered by the slopes of their sensitivity
curves, walks the nodes taking free resources and reclaiming single units
from the lowest-slope job holding more than its minimum. All moves happen on
a scratch copy of the cluster; the emitted decision is applied by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .perf import predict
from .plans import NoFittedModel, PlanFilter, PlanKind, PlanScorer
from .sensitivity import (
    Axis,
    SensitivityCurve,
    build_curve,
    marginal_gain,
    marginal_loss,
    slope,
)
from .types import (
    EnvSpec,
    ExecutionPlan,
    ModelSpec,
    NodeShare,
    PerfParams,
    Placement,
    ResourceVector,
)

STARVATION_THRESHOLD_S = 3600.0
RECONFIG_EFFICIENCY = 0.97
DEFAULT_CKPT_COST_S = 78.0

_EPS = 1e-9


class JobClass(str, Enum):
    GUARANTEED = "guaranteed"
    BEST_EFFORT = "best_effort"


class JobState(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    DONE = "done"
    REJECTED = "rejected"


@dataclass
class Job:
    """One training job as the scheduler and simulator see it."""

    id: str
    tenant: str
    klass: JobClass
    model: ModelSpec
    batch: float
    requested: ResourceVector
    requested_plan: ExecutionPlan
    submit_time: float = 0.0
    target_minibatches: float = 1.0
    plan_filter: Optional[PlanFilter] = None

    state: JobState = JobState.QUEUED
    min_res: ResourceVector = field(default_factory=ResourceVector.zero)
    sla_throughput: float = 0.0
    alloc: dict = field(default_factory=dict)  # node -> [gpus, cpus, mem]
    plan: Optional[ExecutionPlan] = None
    active_shares: tuple[NodeShare, ...] = ()
    remaining: float = 0.0
    queued_since: float = 0.0
    agg_train_time: float = 0.0
    reconfig_count: int = 0
    ckpt_cost: float = DEFAULT_CKPT_COST_S
    was_preempted: bool = False
    finish_time: Optional[float] = None

    def alloc_vector(self) -> ResourceVector:
        g = sum(v[0] for v in self.alloc.values())
        c = sum(v[1] for v in self.alloc.values())
        m = sum(v[2] for v in self.alloc.values())
        return ResourceVector(gpus=g, cpus=c, mem=m)


@dataclass(frozen=True)
class Tenant:
    name: str
    quota: ResourceVector


@dataclass
class NodeState:
    name: str
    capacity: ResourceVector
    free_gpus: int
    free_cpus: int
    free_mem: float

    @classmethod
    def fresh(cls, name: str, env: EnvSpec) -> "NodeState":
        cap = ResourceVector(
            gpus=env.gpus_per_node, cpus=env.cpus_per_node, mem=env.mem_per_node
        )
        return cls(
            name=name,
            capacity=cap,
            free_gpus=cap.gpus,
            free_cpus=cap.cpus,
            free_mem=cap.mem,
        )


class ClusterState:
    """Node inventory with conservation checks on reserve/release."""

    def __init__(self, nodes: Iterable[NodeState]) -> None:
        self.nodes: dict[str, NodeState] = {n.name: n for n in nodes}

    @classmethod
    def build(cls, env: EnvSpec, n_nodes: int, prefix: str = "n") -> "ClusterState":
        return cls(NodeState.fresh(f"{prefix}{i}", env) for i in range(n_nodes))

    @property
    def total_gpus(self) -> int:
        return sum(n.capacity.gpus for n in self.nodes.values())

    def reserve(self, node: str, gpus: int, cpus: int, mem: float) -> None:
        n = self.nodes[node]
        if n.free_gpus < gpus or n.free_cpus < cpus or n.free_mem < mem - _EPS:
            raise RuntimeError(f"over-reservation on node {node}")
        n.free_gpus -= gpus
        n.free_cpus -= cpus
        n.free_mem = max(0.0, n.free_mem - mem)

    def release(self, node: str, gpus: int, cpus: int, mem: float) -> None:
        n = self.nodes[node]
        n.free_gpus += gpus
        n.free_cpus += cpus
        n.free_mem += mem
        if (
            n.free_gpus > n.capacity.gpus
            or n.free_cpus > n.capacity.cpus
            or n.free_mem > n.capacity.mem + _EPS
        ):
            raise RuntimeError(f"over-release on node {node}")


@dataclass(frozen=True)
class JobAssignment:
    """Full new state for one job inside a Decision."""

    job_id: str
    shares: tuple[NodeShare, ...]
    plan: ExecutionPlan
    active: tuple[NodeShare, ...]
    throughput: float
    t_iter: float
    launched: bool
    reconfig: bool


@dataclass
class Decision:
    time: float
    assignments: list[JobAssignment] = field(default_factory=list)
    preemptions: list[str] = field(default_factory=list)
    audit: list[dict] = field(default_factory=list)


def lowest_slope_over_min(entries: Iterable[tuple[float, str]]) -> Optional[str]:
    """Pick the job with the smallest slope; ties resolve by job id.

    Entries are (slope, job_id) pairs for jobs on one node that hold more
    than their minimal demand of the resource being reclaimed.
    """
    best: Optional[tuple[float, str]] = None
    for e in entries:
        if best is None or (e[0], e[1]) < best:
            best = (e[0], e[1])
    return best[1] if best else None


def reconfig_gate(
    agg_train_time: float,
    reconfig_count: int,
    ckpt_cost: float,
    threshold: float = RECONFIG_EFFICIENCY,
) -> bool:
    """True when one more reconfiguration keeps (T - (N+1)*d)/T >= threshold."""
    if agg_train_time <= 0.0:
        return False
    penalty = (agg_train_time - (reconfig_count + 1) * ckpt_cost) / agg_train_time
    return penalty >= threshold


def should_reconfigure(
    job: Job,
    new_plan: Optional[ExecutionPlan],
    new_active: tuple[NodeShare, ...],
    threshold: float = RECONFIG_EFFICIENCY,
) -> bool:
    """Gate for changing a running job: must differ and stay efficient."""
    differs = new_plan != job.plan or tuple(new_active) != tuple(job.active_shares)
    if not differs:
        return False
    return reconfig_gate(
        job.agg_train_time, job.reconfig_count, job.ckpt_cost, threshold
    )


class _JS:
    """Scratch per-job state the policy mutates while deciding."""

    __slots__ = (
        "job",
        "alloc",
        "plan",
        "active",
        "throughput",
        "t_iter",
        "changed",
        "disrupted",
    )

    def __init__(self, job: Job) -> None:
        self.job = job
        self.alloc: dict[str, list] = {n: list(v) for n, v in job.alloc.items()}
        self.plan = job.plan
        self.active: dict[str, int] = {s.node: s.gpus for s in job.active_shares}
        self.throughput = 0.0
        self.t_iter = 0.0
        self.changed = False
        self.disrupted = False

    def clone(self) -> "_JS":
        c = _JS.__new__(_JS)
        c.job = self.job
        c.alloc = {n: list(v) for n, v in self.alloc.items()}
        c.plan = self.plan
        c.active = dict(self.active)
        c.throughput = self.throughput
        c.t_iter = self.t_iter
        c.changed = self.changed
        c.disrupted = self.disrupted
        return c

    def restore_from(self, other: "_JS") -> None:
        self.alloc = {n: list(v) for n, v in other.alloc.items()}
        self.plan = other.plan
        self.active = dict(other.active)
        self.throughput = other.throughput
        self.t_iter = other.t_iter
        self.changed = other.changed
        self.disrupted = other.disrupted

    def gpus(self) -> int:
        return sum(v[0] for v in self.alloc.values())

    def cpus(self) -> int:
        return sum(v[1] for v in self.alloc.values())

    def bucket(self, node: str) -> list:
        return self.alloc.setdefault(node, [0, 0, 0.0])

    def prune(self) -> None:
        for n in [k for k, v in self.alloc.items() if v[0] == 0 and v[1] == 0 and v[2] <= 0.0]:
            del self.alloc[n]

    def placement(self, batch: float) -> Placement:
        shares = tuple(
            NodeShare(node=n, gpus=v[0], cpus=v[1], mem=v[2])
            for n, v in sorted(self.alloc.items(), key=lambda kv: (-kv[1][0], kv[0]))
            if v[0] > 0 or v[1] > 0
        )
        return Placement(shares=shares, batch=batch)


class _Scratch:
    def __init__(self, jobs: dict[str, _JS], free: dict[str, list]) -> None:
        self.jobs = jobs
        self.free = free

    def snapshot(self) -> tuple:
        return (
            {jid: js.clone() for jid, js in self.jobs.items()},
            {n: list(v) for n, v in self.free.items()},
        )

    def restore(self, snap: tuple) -> None:
        # restore in place: callers hold references to the _JS objects
        for jid, saved in snap[0].items():
            self.jobs[jid].restore_from(saved)
        self.free.clear()
        self.free.update({n: list(v) for n, v in snap[1].items()})


_GPU, _CPU = 0, 1


class SchedulerPolicy:
    """The full reconfiguring scheduler."""

    def __init__(
        self,
        env: EnvSpec,
        scorer: PlanScorer,
        params_by_model: dict[str, PerfParams],
        starvation_threshold: float = STARVATION_THRESHOLD_S,
        reconfig_threshold: float = RECONFIG_EFFICIENCY,
    ) -> None:
        self.env = env
        self.scorer = scorer
        self.params_by_model = params_by_model
        self.starvation_threshold = starvation_threshold
        self.reconfig_threshold = reconfig_threshold
        self._curve_cache: dict = {}

    # ------------------------------------------------------------ curves

    def _params(self, model: ModelSpec) -> PerfParams:
        try:
            return self.params_by_model[model.name]
        except KeyError:
            raise NoFittedModel(f"no fitted parameters for model {model.name}")

    def gpu_curve(self, job: Job, cap: int) -> SensitivityCurve:
        params = self._params(job.model)
        key = ("g", job.model.name, job.batch, params, job.plan_filter, cap)
        if key not in self._curve_cache:
            self._curve_cache[key] = build_curve(
                job.model,
                Axis.GPU,
                ResourceVector.zero(),
                self.env,
                params,
                job.batch,
                cap,
                scorer=self.scorer,
                plan_filter=job.plan_filter,
            )
        return self._curve_cache[key]

    def cpu_curve(self, job: Job, gpus: int) -> SensitivityCurve:
        params = self._params(job.model)
        key = ("c", job.model.name, job.batch, params, job.plan_filter, gpus)
        if key not in self._curve_cache:
            self._curve_cache[key] = build_curve(
                job.model,
                Axis.CPU,
                ResourceVector(gpus=gpus),
                self.env,
                params,
                job.batch,
                self.env.cpus_per_node,
                scorer=self.scorer,
                plan_filter=job.plan_filter,
            )
        return self._curve_cache[key]

    def _slope(self, js: _JS, rtype: int, cap: int) -> float:
        if rtype == _GPU:
            return slope(self.gpu_curve(js.job, cap), js.gpus())
        return slope(self.cpu_curve(js.job, js.gpus()), js.cpus())

    def _gain(self, js: _JS, rtype: int, cap: int) -> float:
        if rtype == _GPU:
            return marginal_gain(self.gpu_curve(js.job, cap), js.gpus())
        return marginal_gain(self.cpu_curve(js.job, js.gpus()), js.cpus())

    def _loss(self, js: _JS, rtype: int, cap: int) -> float:
        if rtype == _GPU:
            return marginal_loss(self.gpu_curve(js.job, cap), js.gpus())
        return marginal_loss(self.cpu_curve(js.job, js.gpus()), js.cpus())

    # ------------------------------------------------------------ schedule

    def schedule(
        self,
        jobs: Iterable[Job],
        cluster: ClusterState,
        tenants: dict[str, Tenant],
        now: float,
    ) -> Decision:
        alive = [j for j in jobs if j.state in (JobState.QUEUED, JobState.RUNNING)]
        scr = _Scratch(
            jobs={j.id: _JS(j) for j in alive},
            free={
                n.name: [n.free_gpus, n.free_cpus, n.free_mem]
                for n in cluster.nodes.values()
            },
        )
        cap = cluster.total_gpus
        decision = Decision(time=now)
        usage: dict[str, list] = {t: [0, 0, 0.0] for t in tenants}
        for j in alive:
            if j.klass is JobClass.GUARANTEED and j.state is JobState.RUNNING:
                u = usage.setdefault(j.tenant, [0, 0, 0.0])
                u[0] += j.min_res.gpus
                u[1] += j.min_res.cpus
                u[2] += j.min_res.mem

        # pass 1: queued guaranteed jobs, oldest first, within quota
        privileged = sorted(
            (
                j
                for j in alive
                if j.klass is JobClass.GUARANTEED and j.state is JobState.QUEUED
            ),
            key=lambda j: (j.queued_since, j.id),
        )
        for j in privileged:
            quota = tenants.get(j.tenant)
            u = usage.setdefault(j.tenant, [0, 0, 0.0])
            if quota is not None:
                rem = ResourceVector(
                    gpus=max(0, quota.quota.gpus - u[0]),
                    cpus=max(0, quota.quota.cpus - u[1]),
                    mem=max(0.0, quota.quota.mem - u[2]),
                )
                if not rem.dominates(j.min_res):
                    decision.audit.append(
                        {
                            "time": now,
                            "event": "quota_hold",
                            "job": j.id,
                            "tenant": j.tenant,
                        }
                    )
                    continue
            if self._schedule_job(j, scr, cap, now, decision):
                u[0] += j.min_res.gpus
                u[1] += j.min_res.cpus
                u[2] += j.min_res.mem

        # pass 2: best-effort and running jobs by slope, starved first
        pool = [
            j
            for j in alive
            if j.state is JobState.RUNNING
            or (j.klass is JobClass.BEST_EFFORT and j.state is JobState.QUEUED)
        ]
        starved = sorted(
            (
                j
                for j in pool
                if j.state is JobState.QUEUED
                and now - j.queued_since > self.starvation_threshold
            ),
            key=lambda j: (j.queued_since, j.id),
        )
        starved_ids = {j.id for j in starved}
        rest = sorted(
            (j for j in pool if j.id not in starved_ids),
            key=lambda j: (
                -self._slope(scr.jobs[j.id], _GPU, cap),
                -self._slope(scr.jobs[j.id], _CPU, cap),
                j.id,
            ),
        )
        for j in starved + rest:
            js = scr.jobs[j.id]
            if js.gpus() == 0 and j.state is JobState.RUNNING and js.changed:
                continue  # became a full preemption victim earlier this round
            self._schedule_job(j, scr, cap, now, decision)

        self._emit(scr, decision)
        return decision

    # ------------------------------------------------------- inner pieces

    def _wants(self, js: _JS, rtype: int, cap: int) -> bool:
        if rtype == _GPU:
            cur = js.gpus()
            if cur >= cap:
                return False
            return cur < js.job.min_res.gpus or self._slope(js, _GPU, cap) > 0.0
        cur = js.cpus()
        return cur < js.job.min_res.cpus or self._slope(js, _CPU, cap) > 0.0

    def _victim_entries(
        self, scr: _Scratch, node: str, rtype: int, exclude: str, cap: int
    ) -> list[tuple[float, str]]:
        out = []
        for jid, js in scr.jobs.items():
            if jid == exclude:
                continue
            if js.gpus() == 0:
                continue
            held_here = js.alloc.get(node, (0, 0, 0.0))[rtype]
            if held_here < 1:
                continue
            total = js.gpus() if rtype == _GPU else js.cpus()
            floor = js.job.min_res.gpus if rtype == _GPU else js.job.min_res.cpus
            if total <= floor:
                continue
            out.append((self._slope(js, rtype, cap), jid))
        return out

    def _distribute_host_mem(
        self, total: float, active: tuple[NodeShare, ...]
    ) -> dict[str, float]:
        gpus = sum(s.gpus for s in active)
        if total <= 0.0 or gpus == 0:
            return {}
        return {s.node: total * s.gpus / gpus for s in active if s.gpus > 0}

    def _release_mem(self, js: _JS, scr: _Scratch) -> None:
        for n, v in js.alloc.items():
            if v[2] > 0.0:
                scr.free[n][2] += v[2]
                v[2] = 0.0

    def _reserve_mem(
        self, js: _JS, scr: _Scratch, dist: dict[str, float]
    ) -> bool:
        for n, need in dist.items():
            if scr.free.get(n, [0, 0, 0.0])[2] < need - 1e-6:
                return False
        for n, need in dist.items():
            scr.free[n][2] -= need
            js.bucket(n)[2] = need
        return True

    def _replan(self, js: _JS, scr: _Scratch) -> bool:
        """Re-select plan, active shares and host memory for js's allocation."""
        job = js.job
        params = self._params(job.model)
        placement = js.placement(job.batch)
        if placement.gpus < 1:
            return False
        found = self.scorer.envelope_best(
            job.model, placement, params, job.plan_filter
        )
        if found is None:
            return False
        cand, active = found
        if (
            job.klass is JobClass.GUARANTEED
            and cand.throughput < job.sla_throughput - _EPS
        ):
            return False
        self._release_mem(js, scr)
        dist = self._distribute_host_mem(cand.host_mem, active)
        if not self._reserve_mem(js, scr, dist):
            return False
        new_active = {s.node: s.gpus for s in active}
        if cand.plan != js.plan or new_active != js.active:
            js.disrupted = True
        js.plan = cand.plan
        js.active = new_active
        js.throughput = cand.throughput
        js.t_iter = cand.prediction.t_iter
        js.changed = True
        return True

    def _shrink_victim(
        self,
        victim: _JS,
        node: str,
        rtype: int,
        scr: _Scratch,
        now: float,
        decision: Decision,
    ) -> bool:
        """Take one unit from victim on node; keep the victim viable."""
        job = victim.job
        bucket = victim.alloc.get(node)
        if bucket is None or bucket[rtype] < 1:
            return False
        active_here = victim.active.get(node, 0)
        if rtype == _GPU:
            disruptive = bucket[_GPU] - 1 < active_here
        else:
            disruptive = (
                victim.plan is not None
                and victim.plan.kind is PlanKind.ZERO_OFFLOAD
                and active_here > 0
            )
        if not disruptive:
            bucket[rtype] -= 1
            victim.changed = True
            victim.prune()
            return True

        going_to_zero = rtype == _GPU and victim.gpus() - 1 == 0
        if going_to_zero and job.klass is not JobClass.BEST_EFFORT:
            return False
        if job.state is JobState.RUNNING:
            if not reconfig_gate(
                job.agg_train_time,
                job.reconfig_count,
                job.ckpt_cost,
                self.reconfig_threshold,
            ):
                return False
        snap = scr.snapshot()
        bucket = victim.alloc[node]
        bucket[rtype] -= 1
        if going_to_zero:
            # full preemption: everything else the victim holds goes free
            self._release_mem(victim, scr)
            for n, v in victim.alloc.items():
                scr.free[n][0] += v[0]
                scr.free[n][1] += v[1]
                v[0] = 0
                v[1] = 0
            victim.alloc.clear()
            victim.plan = None
            victim.active = {}
            victim.throughput = 0.0
            victim.t_iter = 0.0
            victim.changed = True
            victim.disrupted = True
            decision.audit.append(
                {"time": now, "event": "preempt", "job": job.id, "node": node}
            )
            return True
        if not self._replan(victim, scr):
            scr.restore(snap)
            return False
        decision.audit.append(
            {
                "time": now,
                "event": "shrink",
                "job": job.id,
                "node": node,
                "resource": "gpus" if rtype == _GPU else "cpus",
            }
        )
        return True

    def _schedule_job(
        self, j: Job, scr: _Scratch, cap: int, now: float, decision: Decision
    ) -> bool:
        js = scr.jobs[j.id]
        snap = scr.snapshot()
        entry_alloc = {n: list(v) for n, v in js.alloc.items()}
        entry_plan, entry_active = js.plan, dict(js.active)

        order = sorted(scr.free, key=lambda n: (-scr.free[n][_GPU], n))
        for node in order:
            while scr.free[node][_GPU] >= 1 and self._wants(js, _GPU, cap):
                scr.free[node][_GPU] -= 1
                js.bucket(node)[_GPU] += 1
                js.changed = True
            while scr.free[node][_CPU] >= 1 and self._wants(js, _CPU, cap):
                scr.free[node][_CPU] -= 1
                js.bucket(node)[_CPU] += 1
                js.changed = True
            for rtype in (_GPU, _CPU):
                while self._wants(js, rtype, cap):
                    if scr.free[node][rtype] >= 1:
                        # a full preemption above may have freed units after
                        # the absorb pass already went by
                        scr.free[node][rtype] -= 1
                        js.bucket(node)[rtype] += 1
                        js.changed = True
                        continue
                    entries = self._victim_entries(scr, node, rtype, j.id, cap)
                    vid = lowest_slope_over_min(entries)
                    if vid is None:
                        break
                    victim = scr.jobs[vid]
                    floor = (
                        j.min_res.gpus if rtype == _GPU else j.min_res.cpus
                    )
                    cur = js.gpus() if rtype == _GPU else js.cpus()
                    below_min = cur < floor
                    if not below_min:
                        my_slope = self._slope(js, rtype, cap)
                        their_slope = self._slope(victim, rtype, cap)
                        if not (
                            my_slope > their_slope
                            and self._gain(js, rtype, cap)
                            > self._loss(victim, rtype, cap) + _EPS
                        ):
                            break
                    if not self._shrink_victim(
                        victim, node, rtype, scr, now, decision
                    ):
                        break
                    js.bucket(node)[rtype] += 1
                    js.changed = True
        # a preemption may also free capacity on nodes already visited
        for node in order:
            for rtype in (_GPU, _CPU):
                while scr.free[node][rtype] >= 1 and self._wants(js, rtype, cap):
                    scr.free[node][rtype] -= 1
                    js.bucket(node)[rtype] += 1
                    js.changed = True

        # finalize
        ok = False
        if (
            js.gpus() >= max(1, j.min_res.gpus)
            and js.cpus() >= j.min_res.cpus
            and self._replan(js, scr)
        ):
            ok = True
        if ok and j.state is JobState.RUNNING:
            if not js.disrupted:
                # pure growth with an unchanged plan is pointless; undo
                scr.restore(snap)
                return True
            if not reconfig_gate(
                j.agg_train_time,
                j.reconfig_count,
                j.ckpt_cost,
                self.reconfig_threshold,
            ):
                ok = False
        if not ok:
            scr.restore(snap)
            decision.audit.append(
                {"time": now, "event": "hold", "job": j.id}
            )
            return False
        if js.alloc == entry_alloc and js.plan == entry_plan and js.active == entry_active:
            scr.restore(snap)
            return True
        decision.audit.append(
            {
                "time": now,
                "event": "launch" if j.state is JobState.QUEUED else "resize",
                "job": j.id,
                "gpus": js.gpus(),
                "cpus": js.cpus(),
                "plan": js.plan.descriptor() if js.plan else "",
            }
        )
        return True

    def _emit(self, scr: _Scratch, decision: Decision) -> None:
        for jid in sorted(scr.jobs):
            js = scr.jobs[jid]
            job = js.job
            if not js.changed:
                continue
            if js.gpus() == 0:
                if job.state is JobState.RUNNING:
                    decision.preemptions.append(jid)
                continue
            same_alloc = {
                n: list(v) for n, v in job.alloc.items()
            } == js.alloc
            if (
                job.state is JobState.RUNNING
                and same_alloc
                and js.plan == job.plan
                and js.active == {s.node: s.gpus for s in job.active_shares}
            ):
                continue
            shares = tuple(
                NodeShare(node=n, gpus=v[0], cpus=v[1], mem=v[2])
                for n, v in sorted(js.alloc.items(), key=lambda kv: (-kv[1][0], kv[0]))
                if v[0] > 0 or v[1] > 0 or v[2] > 0
            )
            active = tuple(
                NodeShare(
                    node=n,
                    gpus=g,
                    cpus=js.alloc.get(n, (0, 0, 0.0))[1],
                    mem=js.alloc.get(n, (0, 0, 0.0))[2],
                )
                for n, g in sorted(
                    js.active.items(), key=lambda kv: (-kv[1], kv[0])
                )
                if g > 0
            )
            assert js.plan is not None
            if js.throughput <= 0.0:
                # changed without a replan (e.g. lost an idle unit): the
                # scratch numbers are still the unset defaults, so price the
                # unchanged plan on the shares it actually keeps
                pred = predict(
                    job.model,
                    js.plan,
                    Placement(shares=active, batch=job.batch),
                    self.env,
                    self._params(job.model),
                )
                js.throughput = pred.throughput
                js.t_iter = pred.t_iter
            decision.assignments.append(
                JobAssignment(
                    job_id=jid,
                    shares=shares,
                    plan=js.plan,
                    active=active,
                    throughput=js.throughput,
                    t_iter=js.t_iter,
                    launched=job.state is JobState.QUEUED,
                    reconfig=job.state is JobState.RUNNING and js.disrupted,
                )
            )

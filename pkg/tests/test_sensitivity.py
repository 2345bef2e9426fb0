import pytest

from replan import perf
from replan.plans import PlanScorer
from replan.sensitivity import (
    Axis,
    CurvePoint,
    InfeasibleRequest,
    SensitivityCurve,
    build_curve,
    marginal_gain,
    marginal_loss,
    min_res,
    slope,
)
from replan.types import EnvSpec, ResourceVector, build_placement

from conftest import plan


def synthetic_curve():
    vals = [0.0, 0.0, 10.0, 10.0, 18.0]
    return SensitivityCurve(
        axis=Axis.GPU,
        points=tuple(CurvePoint(i, v, None) for i, v in enumerate(vals)),
    )


# ----------------------------------------------------------- curve geometry


def test_curve_value_clamps():
    c = synthetic_curve()
    assert c.cap == 4
    assert c.value(-3) == 0.0
    assert c.value(0) == 0.0
    assert c.value(2) == 10.0
    assert c.value(100) == 18.0
    assert c.plan_at(0) is None


def test_curve_requires_dense_points():
    with pytest.raises(ValueError):
        SensitivityCurve(
            axis=Axis.GPU,
            points=(CurvePoint(0, 0.0, None), CurvePoint(2, 1.0, None)),
        )


def test_slope_amortizes_flat_stretches():
    c = synthetic_curve()
    assert slope(c, 0) == pytest.approx(5.0)   # next win is +10 two units away
    assert slope(c, 1) == pytest.approx(10.0)
    assert slope(c, 2) == pytest.approx(4.0)
    assert slope(c, 3) == pytest.approx(8.0)
    assert slope(c, 4) == 0.0


def test_marginal_gain_and_loss():
    c = synthetic_curve()
    assert marginal_gain(c, 1) == pytest.approx(10.0)
    assert marginal_gain(c, 2) == 0.0
    assert marginal_gain(c, 4) == 0.0  # clamped past the cap
    assert marginal_loss(c, 2) == pytest.approx(10.0)
    assert marginal_loss(c, 3) == 0.0
    assert marginal_loss(c, 0) == 0.0


# -------------------------------------------------------------- build_curve


def test_gpu_curve_is_envelope_of_best_plans(tiny_model, env, params):
    scorer = PlanScorer(env)
    fixed = ResourceVector(gpus=4, cpus=32, mem=0.0)
    curve = build_curve(
        tiny_model, Axis.GPU, fixed, env, params, batch=16.0, max_amount=8,
        scorer=scorer,
    )
    assert curve.points[0].throughput == 0.0
    best_so_far = 0.0
    for g in range(1, 9):
        cpus = int(round(g * env.cpus_per_node / env.gpus_per_node))
        cand = scorer.best_for_amount(tiny_model, g, cpus, 16.0, params)
        if cand is not None:
            best_so_far = max(best_so_far, cand.throughput)
        assert curve.value(g) == pytest.approx(best_so_far)
    vals = [p.throughput for p in curve.points]
    assert vals == sorted(vals)


def test_cpu_curve_pins_gpu_count(tiny_model, params):
    env = EnvSpec(gpu_mem=4e9)  # only offload fits; CPUs matter there
    scorer = PlanScorer(env)
    fixed = ResourceVector(gpus=2, cpus=16, mem=0.0)
    curve = build_curve(
        tiny_model, Axis.CPU, fixed, env, params, batch=4.0, max_amount=16,
        scorer=scorer,
    )
    assert curve.value(16) > curve.value(2) > 0.0
    for c in (2, 8, 16):
        cand = scorer.best_for_amount(tiny_model, 2, c, 4.0, params)
        assert curve.value(c) == pytest.approx(cand.throughput)
        assert cand.plan.gpus == 2


# ------------------------------------------------------------------ min_res


def _mirror_min_res(scorer, model, req, target, batch, params):
    """Reference answer: smallest GPU count workable at the full CPU grant,
    then the smallest CPU count at that GPU count."""
    def feasible(g, c):
        cand = scorer.best_for_amount(model, g, c, batch, params, host_cap=req.mem)
        return cand if cand is not None and cand.throughput >= target else None

    for g in range(1, req.gpus + 1):
        if feasible(g, req.cpus) is None:
            continue
        c = min(c for c in range(0, req.cpus + 1) if feasible(g, c))
        return ResourceVector(gpus=g, cpus=c, mem=feasible(g, c).host_mem)
    return req


def test_min_res_best_effort_has_no_floor(tiny_model, env, params):
    got = min_res(
        tiny_model, ResourceVector(4, 32, 0.0), plan("3d:d4.t1.p1.a1.m1"),
        env, params, batch=16.0, best_effort=True,
    )
    assert got == ResourceVector.zero()


def test_min_res_shrinks_an_inefficient_request(tiny_model, env, params):
    scorer = PlanScorer(env)
    req = ResourceVector(gpus=4, cpus=32, mem=0.0)
    wasteful = plan("3d:d4.t1.p1.a8.m1.gc")
    target = perf.predict(
        tiny_model, wasteful, build_placement(4, 32, env, 16.0), env, params
    ).throughput
    got = min_res(tiny_model, req, wasteful, env, params, batch=16.0, scorer=scorer)
    assert got == _mirror_min_res(scorer, tiny_model, req, target, 16.0, params)
    assert got.gpus < req.gpus
    # the floor still delivers the promised throughput
    cand = scorer.best_for_amount(
        tiny_model, got.gpus, got.cpus, 16.0, params, host_cap=req.mem
    )
    assert cand.throughput >= target


def test_min_res_keeps_an_efficient_request(tiny_model, env, params):
    scorer = PlanScorer(env)
    req = ResourceVector(gpus=4, cpus=32, mem=0.0)
    best = scorer.best_for_amount(tiny_model, 4, 32, 16.0, params, host_cap=0.0)
    got = min_res(tiny_model, req, best.plan, env, params, batch=16.0, scorer=scorer)
    assert got.gpus == 4
    assert got.cpus == 0  # nothing in a GPU-resident plan needs host cores
    assert got.mem == 0.0


def test_min_res_offload_needs_its_cpus(tiny_model, params):
    env = EnvSpec(gpu_mem=4e9)
    scorer = PlanScorer(env)
    req = ResourceVector(gpus=4, cpus=32, mem=2e10)
    off = plan("zero_offload:d4.t1.p1.a1.m1")
    target = perf.predict(
        tiny_model, off, build_placement(4, 32, env, 4.0), env, params
    ).throughput
    got = min_res(tiny_model, req, off, env, params, batch=4.0, scorer=scorer)
    assert got == _mirror_min_res(scorer, tiny_model, req, target, 4.0, params)
    assert got.cpus == 32  # the update time strictly improves with every core
    assert got.mem == pytest.approx(14e9)


def test_min_res_rejects_mismatched_request(tiny_model, env, params):
    with pytest.raises(InfeasibleRequest):
        min_res(
            tiny_model, ResourceVector(2, 16, 0.0), plan("3d:d4.t1.p1.a1.m1"),
            env, params, batch=8.0,
        )


def test_min_res_rejects_memory_overrun(tiny_model, env, params):
    # an offload plan with no host-memory grant cannot hold its states
    with pytest.raises(InfeasibleRequest):
        min_res(
            tiny_model, ResourceVector(4, 32, 0.0),
            plan("zero_offload:d4.t1.p1.a1.m1"), env, params, batch=16.0,
        )

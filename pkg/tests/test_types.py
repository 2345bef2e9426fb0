import random

import pytest

from replan import (
    EnvSpec,
    ExecutionPlan,
    ModelSpec,
    Placement,
    PlanKind,
    ProfileBase,
    ResourceVector,
    build_placement,
)


def test_descriptor_round_trip():
    p = ExecutionPlan(
        kind=PlanKind.THREE_D,
        dp_size=2,
        tp_size=2,
        pp_size=2,
        ga_steps=1,
        micro_batches=2,
        grad_ckpt=True,
    )
    assert p.descriptor() == "3d:d2.t2.p2.a1.m2.gc"
    assert ExecutionPlan.from_descriptor(p.descriptor()) == p
    assert ExecutionPlan.from_dict(p.to_dict()) == p


def test_descriptor_rejects_garbage():
    for bad in ("", "3d:", "3d:d2", "dp4", "zero_dp:d4.a1", "3d:d0.t1.p1.a1.m1"):
        with pytest.raises(ValueError):
            ExecutionPlan.from_descriptor(bad)


def test_zero_plans_must_be_pure_dp():
    with pytest.raises(ValueError):
        ExecutionPlan(kind=PlanKind.ZERO_DP, dp_size=2, tp_size=2)
    with pytest.raises(ValueError):
        ExecutionPlan(kind=PlanKind.ZERO_OFFLOAD, dp_size=2, pp_size=2)


def test_pipelined_plan_needs_enough_micro_batches():
    with pytest.raises(ValueError):
        ExecutionPlan(kind=PlanKind.THREE_D, pp_size=4, micro_batches=2)


def test_gpus_product():
    p = ExecutionPlan(kind=PlanKind.THREE_D, dp_size=2, tp_size=4, pp_size=2, micro_batches=2)
    assert p.gpus == 16


def test_model_spec_round_trip(tiny_model):
    again = ModelSpec.from_dict(tiny_model.to_dict())
    assert again == tiny_model


def test_profile_validation():
    with pytest.raises(ValueError):
        ProfileBase(t_fwd_ref=0.0)
    with pytest.raises(ValueError):
        ProfileBase(t_fwd_ref=0.1, ref_batch_per_gpu=0.0)


def test_build_placement_packs_densely(env):
    pl = build_placement(12, 96, env, batch=48.0)
    assert [s.gpus for s in pl.shares] == [8, 4]
    assert pl.gpus == 12
    assert pl.cpus == 96
    # cpus split proportionally to gpus, remainder on the last share
    assert [s.cpus for s in pl.shares] == [64, 32]


def test_build_placement_remainders(env):
    pl = build_placement(3, 10, env, batch=12.0)
    assert [s.gpus for s in pl.shares] == [3]
    assert pl.cpus == 10
    pl = build_placement(9, 10, env, batch=36.0)
    assert [s.gpus for s in pl.shares] == [8, 1]
    assert sum(s.cpus for s in pl.shares) == 10


def test_placement_round_trip(env):
    pl = build_placement(5, 20, env, batch=20.0, mem=1e9)
    assert Placement.from_dict(pl.to_dict()) == pl


def test_resource_vector_domination():
    a = ResourceVector(4, 32, 1e9)
    b = ResourceVector(2, 32, 1e9)
    assert a.dominates(b)
    assert not b.dominates(a)
    assert a.dominates(a)
    assert ResourceVector.zero() == ResourceVector(0, 0, 0.0)


def test_resource_vector_ordering_is_total():
    rng = random.Random(5)
    vecs = [
        ResourceVector(rng.randrange(8), rng.randrange(64), float(rng.randrange(4)))
        for _ in range(50)
    ]
    s = sorted(vecs)
    for x, y in zip(s, s[1:]):
        assert (x.gpus, x.cpus, x.mem) <= (y.gpus, y.cpus, y.mem)


def test_env_defaults_sane(env):
    assert env.intra_bw > env.inter_bw > 0
    assert env.gpus_per_node == 8
    assert env.cpus_per_node == 64

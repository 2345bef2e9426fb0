import math

import pytest

from replan import perf
from replan.fitting import (
    MIN_POINTS,
    MissingOffloadPoints,
    Observation,
    TooFewPoints,
    fit,
    load_observations,
    maybe_refit,
    rmsle,
    save_observations,
)
from replan.types import PerfParams

from conftest import place, plan

HIDDEN = PerfParams(
    k_bwd=1.7, k_sync=4.0, k_off=6.0, k_swap=5.0,
    k_opt=3e-10, k_opt_off=2e-8, k_const=0.02,
)

TRAIN = [
    ("3d:d1.t1.p1.a1.m1", 1, 4.0),
    ("3d:d2.t2.p1.a1.m1", 4, 16.0),
    ("3d:d1.t1.p4.a1.m4", 4, 8.0),
    ("3d:d8.t1.p1.a2.m1.gc", 8, 32.0),
    ("zero_dp:d8.t1.p1.a1.m1", 8, 32.0),
    ("3d:d16.t1.p1.a1.m1", 16, 64.0),
    ("zero_offload:d1.t1.p1.a1.m1", 1, 4.0),
    ("zero_offload:d2.t1.p1.a2.m1", 2, 8.0),
    ("zero_offload:d4.t1.p1.a1.m1.gc", 4, 16.0),
]

HELDOUT = [
    ("3d:d4.t2.p1.a1.m1", 8, 32.0),
    ("3d:d2.t1.p2.a2.m2", 4, 16.0),
    ("zero_dp:d4.t1.p1.a1.m1", 4, 16.0),
    ("zero_offload:d8.t1.p1.a1.m1", 8, 32.0),
    ("3d:d4.t2.p2.a1.m2", 16, 64.0),
]


def observe(model, env, configs, params):
    out = []
    for desc, gpus, batch in configs:
        p = plan(desc)
        pl = place(gpus, gpus * 8, env, batch)
        out.append(Observation(p, pl, perf.predict(model, p, pl, env, params).t_iter))
    return out


@pytest.fixture(scope="module")
def noiseless_fit(tiny_model, env):
    obs = observe(tiny_model, env, TRAIN, HIDDEN)
    result = fit(tiny_model, env, obs, n_starts=6)
    return obs, result


# -------------------------------------------------------------- validation


def test_rmsle_zero_on_perfect_match():
    assert rmsle([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    assert rmsle([math.e - 1.0], [0.0]) == pytest.approx(1.0)


def test_observation_rejects_nonpositive_time(env):
    with pytest.raises(ValueError):
        Observation(plan("3d:d1.t1.p1.a1.m1"), place(1, 8, env, 4.0), 0.0)


def test_fit_needs_enough_points(tiny_model, env):
    obs = observe(tiny_model, env, TRAIN[:3] + TRAIN[6:9], HIDDEN)
    assert len(obs) == MIN_POINTS - 1
    with pytest.raises(TooFewPoints) as err:
        fit(tiny_model, env, obs)
    assert str(MIN_POINTS) in str(err.value)


def test_fit_needs_offload_points(tiny_model, env):
    obs = observe(tiny_model, env, TRAIN[:6] + TRAIN[6:8], HIDDEN)
    with pytest.raises(MissingOffloadPoints):
        fit(tiny_model, env, obs)


def test_fit_rejects_inconsistent_observation(tiny_model, env):
    obs = observe(tiny_model, env, TRAIN, HIDDEN)
    broken = Observation(plan("3d:d4.t1.p1.a1.m1"), place(2, 16, env, 8.0), 1.0)
    with pytest.raises(perf.PerfModelError):
        fit(tiny_model, env, obs + [broken])


# ------------------------------------------------------------- persistence


def test_observations_round_trip(tiny_model, env, tmp_path):
    obs = observe(tiny_model, env, TRAIN, HIDDEN)
    path = tmp_path / "obs.jsonl"
    save_observations(obs, str(path))
    assert load_observations(str(path)) == obs


def test_load_names_the_bad_line(tiny_model, env, tmp_path):
    obs = observe(tiny_model, env, TRAIN[:2], HIDDEN)
    path = tmp_path / "obs.jsonl"
    save_observations(obs, str(path))
    with open(path, "a", encoding="utf-8") as fh:
        fh.write('{"plan": "not-a-plan"}\n')
    with pytest.raises(ValueError) as err:
        load_observations(str(path))
    assert "line 3" in str(err.value)


# ---------------------------------------------------------------- recovery


def test_noiseless_fit_reproduces_training_points(noiseless_fit, tiny_model, env):
    obs, result = noiseless_fit
    assert result.n_points == len(obs)
    assert len(result.residuals) == len(obs)
    for o in obs:
        pred = perf.predict(tiny_model, o.plan, o.placement, env, result.params)
        rel = abs(pred.t_iter - o.observed_t_iter) / o.observed_t_iter
        assert rel < 1e-2


def test_noiseless_fit_transfers_to_unseen_configs(noiseless_fit, tiny_model, env):
    _, result = noiseless_fit
    for desc, gpus, batch in HELDOUT:
        p = plan(desc)
        pl = place(gpus, gpus * 8, env, batch)
        truth = perf.predict(tiny_model, p, pl, env, HIDDEN).t_iter
        got = perf.predict(tiny_model, p, pl, env, result.params).t_iter
        assert abs(got - truth) / truth < 2e-2


def test_fit_is_deterministic(tiny_model, env):
    obs = observe(tiny_model, env, TRAIN, HIDDEN)
    a = fit(tiny_model, env, obs, seed=7, n_starts=2)
    b = fit(tiny_model, env, obs, seed=7, n_starts=2)
    assert a.params == b.params
    assert a.rmsle == b.rmsle


# ------------------------------------------------------------------- refit


def test_maybe_refit_skips_small_misses(noiseless_fit, tiny_model, env):
    obs, result = noiseless_fit
    p = plan("zero_dp:d2.t1.p1.a1.m1")
    pl = place(2, 16, env, 8.0)
    pred = perf.predict(tiny_model, p, pl, env, result.params).t_iter
    new = Observation(p, pl, pred * 1.02)
    same, refitted = maybe_refit(result, new, obs, tiny_model, env, n_starts=2)
    assert not refitted
    assert same is result


def test_maybe_refit_triggers_and_improves(noiseless_fit, tiny_model, env):
    obs, result = noiseless_fit
    p = plan("zero_dp:d2.t1.p1.a1.m1")
    pl = place(2, 16, env, 8.0)
    pred = perf.predict(tiny_model, p, pl, env, result.params).t_iter
    new = Observation(p, pl, pred * 1.4)
    updated, refitted = maybe_refit(result, new, obs, tiny_model, env, n_starts=2)
    assert refitted
    union = list(obs) + [new]
    old_union_rmsle = rmsle(
        [
            perf.predict(tiny_model, o.plan, o.placement, env, result.params).t_iter
            for o in union
        ],
        [o.observed_t_iter for o in union],
    )
    # warm-started from the old parameters, so it can only do better
    assert updated.rmsle <= old_union_rmsle + 1e-12

import json

import pytest

from replan import perf
from replan.cli import main
from replan.fitting import save_observations
from replan.plans import rank_plans
from replan.sensitivity import Axis, build_curve
from replan.simulator import TraceJob, write_trace
from replan.types import ResourceVector

from conftest import place, plan
from test_fitting import HIDDEN, TRAIN, observe


@pytest.fixture(scope="module")
def files(tiny_model, env, tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    model = root / "model.json"
    model.write_text(json.dumps(tiny_model.to_dict()))
    params = root / "params.json"
    params.write_text(json.dumps(HIDDEN.to_dict()))
    obs = root / "obs.jsonl"
    save_observations(observe(tiny_model, env, TRAIN, HIDDEN), str(obs))
    trace = root / "trace.csv"
    write_trace(
        str(trace),
        [
            TraceJob(0.0, "tiny", 4, 30.0, plan="zero_dp:d4.t1.p1.a1.m1"),
            TraceJob(5.0, "tiny", 2, 20.0, plan="3d:d2.t1.p1.a1.m1"),
        ],
    )
    return {"model": model, "params": params, "obs": obs, "trace": trace, "root": root}


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def errcode(err):
    return json.loads(err.strip().splitlines()[-1])["code"]


# -------------------------------------------------------------------- usage


def test_no_subcommand_is_usage_error(capsys):
    code, _, err = run_cli(capsys)
    assert code == 2
    assert errcode(err) == "usage"


def test_unknown_flag_is_usage_error(capsys, files):
    code, _, err = run_cli(capsys, "predict", "--bogus", "1")
    assert code == 2
    assert errcode(err) == "usage"


def test_missing_required_flag_names_it(capsys, files):
    code, _, err = run_cli(capsys, "predict", "--model", str(files["model"]))
    assert code == 2
    msg = json.loads(err)
    assert msg["code"] == "usage"
    assert "--params" in msg["message"] or "--plan" in msg["message"]


# ---------------------------------------------------------------------- fit


def test_fit_rejects_small_sets(capsys, files, tiny_model, env, tmp_path):
    small = tmp_path / "small.jsonl"
    save_observations(observe(tiny_model, env, TRAIN[:6], HIDDEN), str(small))
    code, _, err = run_cli(
        capsys, "fit", "--model", str(files["model"]),
        "--observations", str(small), "--out", str(tmp_path / "fit.json"),
    )
    assert code == 3
    assert errcode(err) == "too_few_points"


def test_fit_missing_file_is_input_error(capsys, files, tmp_path):
    code, _, err = run_cli(
        capsys, "fit", "--model", str(files["model"]),
        "--observations", str(tmp_path / "nope.jsonl"),
        "--out", str(tmp_path / "fit.json"),
    )
    assert code == 3
    assert errcode(err) == "bad_input"


def test_fit_writes_result_file(capsys, files, tmp_path):
    out = tmp_path / "fit.json"
    code, stdout, _ = run_cli(
        capsys, "fit", "--model", str(files["model"]),
        "--observations", str(files["obs"]), "--out", str(out),
    )
    assert code == 0
    saved = json.loads(out.read_text())
    assert set(saved["params"]) == {
        "k_bwd", "k_sync", "k_off", "k_swap", "k_opt", "k_opt_off", "k_const"
    }
    assert saved["rmsle"] < 1e-3
    summary = json.loads(stdout)
    assert summary["model"] == "tiny" and summary["n_points"] == len(TRAIN)
    assert not out.with_suffix(".json.tmp").exists()


# ------------------------------------------------------------------ predict


def test_predict_matches_library(capsys, files, tiny_model, env):
    code, stdout, _ = run_cli(
        capsys, "predict", "--model", str(files["model"]),
        "--params", str(files["params"]), "--plan", "3d:d2.t2.p1.a1.m1",
        "--gpus", "4", "--cpus", "32", "--batch", "16",
    )
    assert code == 0
    row = json.loads(stdout)
    want = perf.predict(
        tiny_model, plan("3d:d2.t2.p1.a1.m1"), place(4, 32, env, 16.0), env, HIDDEN
    )
    assert row["t_iter"] == pytest.approx(want.t_iter, rel=1e-12)
    assert row["throughput"] == pytest.approx(want.throughput, rel=1e-12)


def test_predict_csv_field_order(capsys, files):
    code, stdout, _ = run_cli(
        capsys, "predict", "--model", str(files["model"]),
        "--params", str(files["params"]), "--plan", "3d:d2.t2.p1.a1.m1",
        "--format", "csv",
    )
    assert code == 0
    header = stdout.splitlines()[0]
    assert header == (
        "model,plan,gpus,cpus,batch,t_iter,throughput,t_fwd,t_bwd,"
        "t_cc,t_oo,t_opt,t_off,t_comm_dp,t_comm_tp,t_comm_pp"
    )


def test_predict_rejects_bad_descriptor(capsys, files):
    code, _, err = run_cli(
        capsys, "predict", "--model", str(files["model"]),
        "--params", str(files["params"]), "--plan", "3d:d2",
    )
    assert code == 3
    assert errcode(err) == "bad_input"


def test_predict_rejects_plan_placement_mismatch(capsys, files):
    code, _, err = run_cli(
        capsys, "predict", "--model", str(files["model"]),
        "--params", str(files["params"]), "--plan", "3d:d4.t1.p1.a1.m1",
        "--gpus", "2",
    )
    assert code == 3
    assert errcode(err) == "plan_rejected"


# ------------------------------------------------------------- plans/curve


def test_plans_matches_ranking(capsys, files, tiny_model, env):
    code, stdout, _ = run_cli(
        capsys, "plans", "--model", str(files["model"]),
        "--params", str(files["params"]), "--gpus", "4",
        "--cpus", "32", "--batch", "16", "--top", "5",
    )
    assert code == 0
    rows = json.loads(stdout)
    ranked = rank_plans(tiny_model, place(4, 32, env, 16.0), env, HIDDEN)
    assert len(rows) == 5
    for i, row in enumerate(rows):
        assert row["rank"] == i + 1
        assert row["plan"] == ranked[i].plan.descriptor()
        assert row["throughput"] == pytest.approx(ranked[i].throughput, rel=1e-12)


def test_curve_matches_library(capsys, files, tiny_model, env):
    code, stdout, _ = run_cli(
        capsys, "curve", "--model", str(files["model"]),
        "--params", str(files["params"]), "--axis", "gpus",
        "--gpus", "4", "--batch", "16", "--max-amount", "8",
    )
    assert code == 0
    rows = json.loads(stdout)
    want = build_curve(
        tiny_model, Axis.GPU, ResourceVector(gpus=4), env, HIDDEN, 16.0, 8
    )
    assert [r["amount"] for r in rows] == list(range(9))
    for row, pt in zip(rows, want.points):
        assert row["throughput"] == pytest.approx(pt.throughput, rel=1e-12)
    vals = [r["throughput"] for r in rows]
    assert vals == sorted(vals)


# ------------------------------------------------------------------- config


def test_config_precedence(capsys, files, tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"predict": {"gpus": 4, "batch": 16}}))
    base = [
        "predict", "--model", str(files["model"]),
        "--params", str(files["params"]), "--plan", "zero_dp:d4.t1.p1.a1.m1",
    ]
    code, stdout, _ = run_cli(capsys, *base, "--config", str(cfg))
    assert code == 0
    assert json.loads(stdout)["gpus"] == 4

    # an explicit flag beats the config file
    cfg2 = tmp_path / "cfg2.json"
    cfg2.write_text(json.dumps({"predict": {"plan": "3d:d1.t1.p1.a1.m1"}}))
    code, stdout, _ = run_cli(
        capsys, *base, "--config", str(cfg2), "--gpus", "4",
    )
    assert code == 0
    assert json.loads(stdout)["plan"] == "zero_dp:d4.t1.p1.a1.m1"

    # config can also come from the environment
    monkeypatch.setenv("REPLAN_CONFIG", str(cfg))
    code, stdout, _ = run_cli(capsys, *base)
    assert code == 0
    assert json.loads(stdout)["gpus"] == 4


# ---------------------------------------------------------------- trace-gen


def test_trace_gen_writes_deterministic_csv(capsys, files, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        code, stdout, _ = run_cli(
            capsys, "trace-gen", "--models", str(files["model"]),
            "--out", str(path), "--n-jobs", "5", "--seed", "3",
        )
        assert code == 0
        assert json.loads(stdout)["jobs"] == 5
    assert a.read_bytes() == b.read_bytes()
    header = a.read_text().splitlines()[0]
    assert header == "submit_s,model,gpus,duration_s,tenant,class,plan"


def test_trace_gen_best_mode_needs_params(capsys, files, tmp_path):
    code, _, err = run_cli(
        capsys, "trace-gen", "--models", str(files["model"]),
        "--out", str(tmp_path / "t.csv"), "--n-jobs", "2",
        "--plan-mode", "best",
    )
    assert code == 3
    assert errcode(err) == "bad_input"


# ----------------------------------------------------------------- simulate


def test_simulate_writes_artifacts(capsys, files, tmp_path):
    out_dir = tmp_path / "runs"
    code, stdout, _ = run_cli(
        capsys, "simulate", "--trace", str(files["trace"]),
        "--models", str(files["model"]), "--params", str(files["params"]),
        "--policy", "static_gang", "--no-timestamp", "--out-dir", str(out_dir),
    )
    assert code == 0
    metrics = json.loads(stdout)
    assert metrics["policy"] == "static_gang"
    assert metrics["n_completed"] == 2
    assert "generated_at" not in metrics
    base = out_dir / "static_gang"
    on_disk = json.loads((base / "metrics.json").read_text())
    assert on_disk == metrics
    timeline = (base / "timeline.csv").read_text().splitlines()
    assert timeline[0] == "time_s,allocated_gpus,queued,running"
    assert len(timeline) > 1
    for line in (base / "audit.jsonl").read_text().splitlines():
        json.loads(line)
    assert not list(out_dir.rglob("*.tmp"))


def test_simulate_unknown_policy(capsys, files):
    code, _, err = run_cli(
        capsys, "simulate", "--trace", str(files["trace"]),
        "--models", str(files["model"]), "--params", str(files["params"]),
        "--policy", "wishful",
    )
    assert code == 3
    assert errcode(err) == "bad_input"


# ------------------------------------------------------------------ compare


def test_compare_normalizes_to_first_policy(capsys, files):
    code, stdout, _ = run_cli(
        capsys, "compare", "--trace", str(files["trace"]),
        "--models", str(files["model"]), "--params", str(files["params"]),
        "--policies", "static_gang,even_split", "--no-timestamp",
    )
    assert code == 0
    out = json.loads(stdout)
    assert out["baseline_policy"] == "static_gang"
    assert len(out["runs"]) == 2
    first = out["runs"][0]
    assert first["avg_jct_ratio"] == pytest.approx(1.0)
    assert first["makespan_ratio"] == pytest.approx(1.0)
    assert out["failures"] == []


def test_compare_isolates_a_broken_policy(capsys, files):
    code, stdout, _ = run_cli(
        capsys, "compare", "--trace", str(files["trace"]),
        "--models", str(files["model"]), "--params", str(files["params"]),
        "--policies", "static_gang,wishful", "--no-timestamp",
    )
    assert code == 0
    out = json.loads(stdout)
    assert [r["policy"] for r in out["runs"]] == ["static_gang"]
    assert out["failures"] and out["failures"][0]["policy"] == "wishful"


def test_compare_fails_when_every_policy_fails(capsys, files):
    code, _, err = run_cli(
        capsys, "compare", "--trace", str(files["trace"]),
        "--models", str(files["model"]), "--params", str(files["params"]),
        "--policies", "wishful,hopeful",
    )
    assert code == 4
    assert errcode(err) == "simulation_failed"

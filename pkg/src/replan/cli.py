"""Command-line front end.

Subcommands: fit, predict, plans, curve, trace-gen, simulate, compare.
Errors are machine-readable JSON objects on stderr with a stable ``code``
field. Exit codes: 0 success, 2 usage, 3 input error, 4 runtime error.
Option precedence is flags > config file (--config or $REPLAN_CONFIG) >
built-in defaults. Output files are written atomically (temp + rename).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from typing import Optional

from . import fitting, perf
from .fitting import FittingError, MissingOffloadPoints, TooFewPoints
from .plans import (
    DEFAULT_MEMORY_MODEL,
    MemoryModel,
    NoFittedModel,
    PlanScorer,
    rank_plans,
)
from .scheduler import (
    DEFAULT_CKPT_COST_S,
    RECONFIG_EFFICIENCY,
    STARVATION_THRESHOLD_S,
    Tenant,
)
from .sensitivity import Axis, InfeasibleRequest, build_curve
from .simulator import (
    GroundTruthOracle,
    Policy,
    Simulator,
    read_trace,
    synthesize_trace,
    write_trace,
)
from .types import (
    EnvSpec,
    ExecutionPlan,
    ModelSpec,
    PerfParams,
    ResourceVector,
    build_placement,
)

CONFIG_ENV_VAR = "REPLAN_CONFIG"

_PARAM_FIELDS = (
    "k_bwd",
    "k_sync",
    "k_off",
    "k_swap",
    "k_opt",
    "k_opt_off",
    "k_const",
)


class CLIError(Exception):
    def __init__(self, code: str, message: str, exit_code: int = 3) -> None:
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise CLIError("usage", message, exit_code=2)


# ------------------------------------------------------------------ IO


def _read_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CLIError("bad_input", f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise CLIError("bad_input", f"{path} is not valid JSON: {exc}")


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _load_env(path: Optional[str]) -> tuple[EnvSpec, MemoryModel]:
    if not path:
        return EnvSpec(), DEFAULT_MEMORY_MODEL
    d = _read_json(path)
    mem_d = d.pop("memory_model", None)
    try:
        env = EnvSpec(**d)
        mem = MemoryModel(**mem_d) if mem_d else DEFAULT_MEMORY_MODEL
    except TypeError as exc:
        raise CLIError("bad_input", f"{path}: {exc}")
    return env, mem


def _load_models(path: str) -> dict[str, ModelSpec]:
    d = _read_json(path)
    if isinstance(d, dict) and "models" in d:
        d = d["models"]
    try:
        if isinstance(d, dict) and "profile" in d:
            m = ModelSpec.from_dict(d)
            return {m.name: m}
        if isinstance(d, dict):
            out = {}
            for name, spec in d.items():
                spec = dict(spec)
                spec.setdefault("name", name)
                out[name] = ModelSpec.from_dict(spec)
            return out
        if isinstance(d, list):
            out = {}
            for spec in d:
                m = ModelSpec.from_dict(spec)
                out[m.name] = m
            return out
    except (KeyError, TypeError, ValueError) as exc:
        raise CLIError("bad_input", f"{path}: bad model spec: {exc}")
    raise CLIError("bad_input", f"{path}: unrecognized model file shape")


def _params_from_dict(d: dict, origin: str) -> PerfParams:
    unknown = set(d) - set(_PARAM_FIELDS)
    if unknown:
        raise CLIError("bad_input", f"{origin}: unknown params {sorted(unknown)}")
    try:
        return PerfParams(**{k: float(v) for k, v in d.items()})
    except (TypeError, ValueError) as exc:
        raise CLIError("bad_input", f"{origin}: {exc}")


def _load_params_map(path: str, models: dict[str, ModelSpec]) -> dict[str, PerfParams]:
    """Accept a FitResult file, a bare params object, or a per-model mapping."""
    d = _read_json(path)
    if "params_by_model" in d:
        d = d["params_by_model"]
    if "params" in d and isinstance(d["params"], dict):
        single = _params_from_dict(d["params"], path)
        return {name: single for name in models}
    if set(d) <= set(_PARAM_FIELDS):
        single = _params_from_dict(d, path)
        return {name: single for name in models}
    out = {}
    for name, sub in d.items():
        if name not in models:
            continue
        if isinstance(sub, dict) and "params" in sub:
            sub = sub["params"]
        out[name] = _params_from_dict(sub, f"{path}[{name}]")
    missing = set(models) - set(out)
    if missing:
        raise CLIError(
            "bad_input", f"{path}: no parameters for models {sorted(missing)}"
        )
    return out


def _emit(rows, fmt: str, stream=None) -> None:
    stream = stream or sys.stdout
    if fmt == "csv":
        data = rows if isinstance(rows, list) else [rows]
        if not data:
            return
        w = csv.DictWriter(stream, fieldnames=list(data[0].keys()))
        w.writeheader()
        for r in data:
            w.writerow(r)
    else:
        stream.write(_dump_json(rows))


# ------------------------------------------------------------ commands


def cmd_fit(ns) -> int:
    models = _load_models(ns.model)
    if len(models) != 1:
        raise CLIError("bad_input", "fit expects exactly one model spec")
    model = next(iter(models.values()))
    env, _ = _load_env(ns.env)
    try:
        obs = fitting.load_observations(ns.observations)
    except OSError as exc:
        raise CLIError("bad_input", str(exc))
    result = fitting.fit(model, env, obs, seed=ns.seed)
    _atomic_write(ns.out, _dump_json(result.to_dict()))
    _emit(
        {
            "model": model.name,
            "n_points": result.n_points,
            "rmsle": result.rmsle,
            "converged": result.converged,
            "out": ns.out,
        },
        ns.format,
    )
    return 0


def _single_model_setup(ns):
    models = _load_models(ns.model)
    if len(models) != 1:
        raise CLIError("bad_input", "this command expects exactly one model spec")
    model = next(iter(models.values()))
    env, mem = _load_env(ns.env)
    params = _load_params_map(ns.params, {model.name: model})[model.name]
    return model, env, mem, params


def cmd_predict(ns) -> int:
    model, env, mem, params = _single_model_setup(ns)
    try:
        plan = ExecutionPlan.from_descriptor(ns.plan)
    except ValueError as exc:
        raise CLIError("bad_input", str(exc))
    gpus = ns.gpus if ns.gpus is not None else plan.gpus
    cpus = (
        ns.cpus
        if ns.cpus is not None
        else int(round(gpus * env.cpus_per_node / env.gpus_per_node))
    )
    batch = ns.batch if ns.batch is not None else gpus * model.profile.ref_batch_per_gpu
    placement = build_placement(gpus, cpus, env, batch)
    pred = perf.predict(model, plan, placement, env, params)
    row = {
        "model": model.name,
        "plan": plan.descriptor(),
        "gpus": gpus,
        "cpus": cpus,
        "batch": batch,
        "t_iter": pred.t_iter,
        "throughput": pred.throughput,
        "t_fwd": pred.t_fwd,
        "t_bwd": pred.t_bwd,
        "t_cc": pred.t_cc,
        "t_oo": pred.t_oo,
        "t_opt": pred.t_opt,
        "t_off": pred.t_off,
        "t_comm_dp": pred.comm.dp,
        "t_comm_tp": pred.comm.tp,
        "t_comm_pp": pred.comm.pp,
    }
    _emit(row, ns.format)
    return 0


def cmd_plans(ns) -> int:
    model, env, mem, params = _single_model_setup(ns)
    gpus = ns.gpus
    cpus = (
        ns.cpus
        if ns.cpus is not None
        else int(round(gpus * env.cpus_per_node / env.gpus_per_node))
    )
    batch = ns.batch if ns.batch is not None else gpus * model.profile.ref_batch_per_gpu
    placement = build_placement(gpus, cpus, env, batch)
    ranked = rank_plans(model, placement, env, params, mem=mem)
    rows = [
        {
            "rank": i + 1,
            "plan": c.plan.descriptor(),
            "throughput": c.throughput,
            "t_iter": c.prediction.t_iter,
            "gpu_mem_bytes": c.gpu_mem,
            "host_mem_bytes": c.host_mem,
        }
        for i, c in enumerate(ranked[: ns.top] if ns.top else ranked)
    ]
    _emit(rows, ns.format)
    return 0


def cmd_curve(ns) -> int:
    model, env, mem, params = _single_model_setup(ns)
    try:
        axis = Axis(ns.axis)
    except ValueError:
        raise CLIError("bad_input", f"unknown axis {ns.axis!r}; use gpus or cpus")
    batch = (
        ns.batch
        if ns.batch is not None
        else ns.gpus * model.profile.ref_batch_per_gpu
    )
    cap = ns.max_amount
    if cap is None:
        cap = env.gpus_per_node if axis is Axis.GPU else env.cpus_per_node
    fixed = ResourceVector(gpus=ns.gpus, cpus=ns.cpus or 0, mem=0.0)
    scorer = PlanScorer(env, mem)
    curve = build_curve(model, axis, fixed, env, params, batch, cap, scorer=scorer)
    _emit(curve.rows(), ns.format)
    return 0


def cmd_trace_gen(ns) -> int:
    models = _load_models(ns.models)
    env, _ = _load_env(ns.env)
    params = None
    if ns.params:
        params = _load_params_map(ns.params, models)
    try:
        rows = synthesize_trace(
            models,
            env,
            total_gpus=ns.total_gpus,
            n_jobs=ns.n_jobs,
            load_scale=ns.load_scale,
            plan_mode=ns.plan_mode,
            tenancy=ns.tenancy,
            seed=ns.seed,
            params_by_model=params,
            mean_interarrival_s=ns.mean_interarrival,
            mean_duration_s=ns.mean_duration,
        )
    except ValueError as exc:
        raise CLIError("bad_input", str(exc))
    write_trace(ns.out, rows)
    _emit({"jobs": len(rows), "out": ns.out}, ns.format)
    return 0


def _load_tenants(path: Optional[str]) -> Optional[dict[str, Tenant]]:
    if not path:
        return None
    d = _read_json(path)
    out = {}
    for name, q in d.items():
        out[name] = Tenant(
            name=name,
            quota=ResourceVector(
                gpus=int(q.get("gpus", 0)),
                cpus=int(q.get("cpus", 0)),
                mem=float(q.get("mem", 0.0)),
            ),
        )
    return out


def _run_one_sim(ns, models, env, mem, params_map, policy: Policy) -> dict:
    true_map = params_map
    if ns.true_params:
        true_map = _load_params_map(ns.true_params, models)
    oracle = GroundTruthOracle(true_map, env, noise_sigma=ns.noise, seed=ns.seed)
    sim = Simulator(
        models,
        env,
        n_nodes=ns.nodes,
        policy=policy,
        params_by_model=params_map,
        oracle=oracle,
        tenants=_load_tenants(ns.tenants),
        ckpt_cost=ns.ckpt_cost,
        starvation_threshold=ns.starvation_threshold,
        reconfig_threshold=ns.reconfig_threshold,
        scorer=PlanScorer(env, mem),
        validate=bool(ns.validate),
        online_refit=bool(ns.refit),
    )
    trace = read_trace(ns.trace)
    result = sim.run(trace)
    metrics = dict(result.metrics)
    if ns.validate:
        metrics["violations"] = result.violations
    if not ns.no_timestamp:
        metrics["generated_at"] = time.strftime(
            "%Y-%m-%dT%H:%M:%SZ", time.gmtime()
        )
    if ns.out_dir:
        base = os.path.join(ns.out_dir, policy.value)
        _atomic_write(os.path.join(base, "metrics.json"), _dump_json(metrics))
        lines = ["time_s,allocated_gpus,queued,running"]
        for row in result.timeline:
            lines.append(
                f"{row['time_s']},{row['used_gpus']},{row['queued']},{row['running']}"
            )
        _atomic_write(os.path.join(base, "timeline.csv"), "\n".join(lines) + "\n")
        audit = "".join(json.dumps(rec) + "\n" for rec in result.audit)
        _atomic_write(os.path.join(base, "audit.jsonl"), audit)
    return metrics


def cmd_simulate(ns) -> int:
    models = _load_models(ns.models)
    env, mem = _load_env(ns.env)
    params_map = _load_params_map(ns.params, models)
    try:
        policy = Policy(ns.policy)
    except ValueError:
        raise CLIError(
            "bad_input",
            f"unknown policy {ns.policy!r}; choose from "
            f"{[p.value for p in Policy]}",
        )
    metrics = _run_one_sim(ns, models, env, mem, params_map, policy)
    _emit(metrics, "json")
    return 0


def cmd_compare(ns) -> int:
    models = _load_models(ns.models)
    env, mem = _load_env(ns.env)
    params_map = _load_params_map(ns.params, models)
    names = [p.strip() for p in ns.policies.split(",") if p.strip()]
    if len(names) < 2:
        raise CLIError("bad_input", "compare needs at least two policies")
    runs = []
    failures = []
    for name in names:
        try:
            policy = Policy(name)
            metrics = _run_one_sim(ns, models, env, mem, params_map, policy)
            runs.append((name, metrics))
        except Exception as exc:  # isolate per-policy failures
            failures.append({"policy": name, "error": str(exc)})
    if not runs:
        raise CLIError("simulation_failed", "every policy run failed", exit_code=4)
    base = runs[0][1]
    table = []
    for name, m in runs:
        def ratio(key: str) -> float:
            return m[key] / base[key] if base[key] > 0 else 0.0

        table.append(
            {
                "policy": name,
                "n_completed": m["n_completed"],
                "avg_jct_s": m["avg_jct_s"],
                "p99_jct_s": m["p99_jct_s"],
                "makespan_s": m["makespan_s"],
                "total_reconfigs": m["total_reconfigs"],
                "avg_jct_ratio": ratio("avg_jct_s"),
                "p99_jct_ratio": ratio("p99_jct_s"),
                "makespan_ratio": ratio("makespan_s"),
            }
        )
    out = {"baseline_policy": runs[0][0], "runs": table, "failures": failures}
    _emit(out, "json")
    return 0


# -------------------------------------------------------------- parsing

_DEFAULTS: dict[str, dict] = {
    "fit": {"seed": fitting.DEFAULT_SEED, "format": "json", "env": None},
    "predict": {
        "gpus": None,
        "cpus": None,
        "batch": None,
        "format": "json",
        "env": None,
    },
    "plans": {"cpus": None, "batch": None, "top": 0, "format": "json", "env": None},
    "curve": {
        "cpus": None,
        "batch": None,
        "max_amount": None,
        "format": "json",
        "env": None,
    },
    "trace-gen": {
        "seed": 0,
        "load_scale": 1.0,
        "plan_mode": "random",
        "tenancy": "single",
        "total_gpus": 16,
        "params": None,
        "mean_interarrival": 600.0,
        "mean_duration": 3600.0,
        "format": "json",
        "env": None,
    },
    "simulate": {
        "seed": 0,
        "noise": 0.0,
        "nodes": 1,
        "env": None,
        "true_params": None,
        "tenants": None,
        "out_dir": None,
        "ckpt_cost": DEFAULT_CKPT_COST_S,
        "starvation_threshold": STARVATION_THRESHOLD_S,
        "reconfig_threshold": RECONFIG_EFFICIENCY,
        "validate": False,
        "refit": False,
        "no_timestamp": False,
        "format": "json",
    },
}
_DEFAULTS["compare"] = dict(_DEFAULTS["simulate"])

_REQUIRED: dict[str, tuple[str, ...]] = {
    "fit": ("model", "observations", "out"),
    "predict": ("model", "params", "plan"),
    "plans": ("model", "params", "gpus"),
    "curve": ("model", "params", "axis", "gpus"),
    "trace-gen": ("models", "out", "n_jobs"),
    "simulate": ("trace", "models", "params", "policy"),
    "compare": ("trace", "models", "params", "policies"),
}


def _build_parser() -> _Parser:
    top = _Parser(prog="replan", description=__doc__)
    sub = top.add_subparsers(dest="command", metavar="COMMAND")

    def add(name: str, func, help_text: str) -> _Parser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--env", default=None, help="environment spec JSON")
        p.add_argument("--format", choices=("json", "csv"), default=None)
        return p

    p = add("fit", cmd_fit, "fit performance parameters from observations")
    p.add_argument("--model", default=None)
    p.add_argument("--observations", default=None, help="JSON-lines observations")
    p.add_argument("--out", default=None, help="output FitResult JSON path")
    p.add_argument("--seed", type=int, default=None)

    p = add("predict", cmd_predict, "predict one configuration's iteration time")
    p.add_argument("--model", default=None)
    p.add_argument("--params", default=None)
    p.add_argument("--plan", default=None, help="plan descriptor")
    p.add_argument("--gpus", type=int, default=None)
    p.add_argument("--cpus", type=int, default=None)
    p.add_argument("--batch", type=float, default=None)

    p = add("plans", cmd_plans, "rank feasible execution plans")
    p.add_argument("--model", default=None)
    p.add_argument("--params", default=None)
    p.add_argument("--gpus", type=int, default=None)
    p.add_argument("--cpus", type=int, default=None)
    p.add_argument("--batch", type=float, default=None)
    p.add_argument("--top", type=int, default=None)

    p = add("curve", cmd_curve, "dump a resource sensitivity curve")
    p.add_argument("--model", default=None)
    p.add_argument("--params", default=None)
    p.add_argument("--axis", default=None, help="gpus or cpus")
    p.add_argument("--gpus", type=int, default=None)
    p.add_argument("--cpus", type=int, default=None)
    p.add_argument("--batch", type=float, default=None)
    p.add_argument("--max-amount", dest="max_amount", type=int, default=None)

    p = add("trace-gen", cmd_trace_gen, "synthesize a workload trace CSV")
    p.add_argument("--models", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--n-jobs", dest="n_jobs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--load-scale", dest="load_scale", type=float, default=None)
    p.add_argument(
        "--plan-mode", dest="plan_mode", choices=("random", "best"), default=None
    )
    p.add_argument("--tenancy", choices=("single", "multi"), default=None)
    p.add_argument("--total-gpus", dest="total_gpus", type=int, default=None)
    p.add_argument("--params", default=None, help="needed for --plan-mode best")
    p.add_argument(
        "--mean-interarrival", dest="mean_interarrival", type=float, default=None
    )
    p.add_argument("--mean-duration", dest="mean_duration", type=float, default=None)

    def add_sim(name: str, func, help_text: str) -> _Parser:
        p = add(name, func, help_text)
        p.add_argument("--trace", default=None)
        p.add_argument("--models", default=None)
        p.add_argument("--params", default=None)
        p.add_argument("--nodes", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--noise", type=float, default=None)
        p.add_argument(
            "--true-params",
            dest="true_params",
            default=None,
            help="hidden oracle params (defaults to --params)",
        )
        p.add_argument("--tenants", default=None, help="tenant quota JSON")
        p.add_argument("--out-dir", dest="out_dir", default=None)
        p.add_argument("--ckpt-cost", dest="ckpt_cost", type=float, default=None)
        p.add_argument(
            "--starvation-threshold",
            dest="starvation_threshold",
            type=float,
            default=None,
        )
        p.add_argument(
            "--reconfig-threshold",
            dest="reconfig_threshold",
            type=float,
            default=None,
        )
        p.add_argument("--validate", action="store_true", default=None)
        p.add_argument("--refit", action="store_true", default=None)
        p.add_argument(
            "--no-timestamp", dest="no_timestamp", action="store_true", default=None
        )
        return p

    p = add_sim("simulate", cmd_simulate, "replay a trace under one policy")
    p.add_argument("--policy", default=None, help=str([x.value for x in Policy]))

    p = add_sim("compare", cmd_compare, "replay a trace under several policies")
    p.add_argument("--policies", default=None, help="comma-separated policy names")

    return top


def _merge_config(ns: argparse.Namespace) -> argparse.Namespace:
    """Apply precedence flags > config file > built-in defaults."""
    cfg_path = ns.config or os.environ.get(CONFIG_ENV_VAR)
    cfg: dict = {}
    if cfg_path:
        cfg = _read_json(cfg_path)
        if not isinstance(cfg, dict):
            raise CLIError("bad_input", f"{cfg_path}: config must be a JSON object")
    section = cfg.get(ns.command)
    flat = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    if isinstance(section, dict):
        flat.update(section)
    merged = dict(_DEFAULTS.get(ns.command, {}))
    merged.update({k.replace("-", "_"): v for k, v in flat.items()})
    out = dict(vars(ns))
    for key, value in merged.items():
        if out.get(key) is None:
            out[key] = value
    for key in _REQUIRED.get(ns.command, ()):
        if out.get(key) is None:
            raise CLIError(
                "usage",
                f"{ns.command}: missing required option --{key.replace('_', '-')}",
                exit_code=2,
            )
    if out.get("format") is None:
        out["format"] = "json"
    return argparse.Namespace(**out)


def _emit_error(code: str, message: str) -> None:
    sys.stderr.write(json.dumps({"code": code, "message": message}) + "\n")


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        if not getattr(ns, "command", None):
            raise CLIError("usage", "a subcommand is required", exit_code=2)
        ns = _merge_config(ns)
        return ns.func(ns)
    except CLIError as exc:
        _emit_error(exc.code, str(exc))
        return exc.exit_code
    except TooFewPoints as exc:
        _emit_error("too_few_points", str(exc))
        return 3
    except MissingOffloadPoints as exc:
        _emit_error("missing_offload_points", str(exc))
        return 3
    except FittingError as exc:
        _emit_error("fitting_failed", str(exc))
        return 3
    except InfeasibleRequest as exc:
        _emit_error("infeasible_request", str(exc))
        return 3
    except NoFittedModel as exc:
        _emit_error("no_fitted_model", str(exc))
        return 3
    except perf.PerfModelError as exc:
        _emit_error("plan_rejected", str(exc))
        return 3
    except FileNotFoundError as exc:
        _emit_error("bad_input", str(exc))
        return 3
    except (ValueError, KeyError) as exc:
        _emit_error("bad_input", str(exc))
        return 3
    except Exception as exc:  # pragma: no cover - last resort
        _emit_error("internal", f"{type(exc).__name__}: {exc}")
        return 4


if __name__ == "__main__":
    sys.exit(main())

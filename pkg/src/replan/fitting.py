"""Fitting the iteration-time model to observed (plan, placement, time) triples.

The objective is the root mean squared logarithmic error between predicted and
observed iteration times. The landscape is searched with a bounded Nelder-Mead
simplex restarted from deterministic log-uniform samples of the parameter box,
so repeated fits of the same data give identical results.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from . import perf
from .types import EnvSpec, ExecutionPlan, ModelSpec, PerfParams, Placement

MIN_POINTS = 7
MIN_OFFLOAD_POINTS = 3
REFIT_THRESHOLD = 0.10
DEFAULT_SEED = 20240601


class FittingError(ValueError):
    """Base class for observation-set problems."""


class TooFewPoints(FittingError):
    pass


class MissingOffloadPoints(FittingError):
    pass


@dataclass(frozen=True)
class Observation:
    """One measured training iteration."""

    plan: ExecutionPlan
    placement: Placement
    observed_t_iter: float

    def __post_init__(self) -> None:
        if self.observed_t_iter <= 0:
            raise ValueError("observed_t_iter must be positive")

    def to_dict(self) -> dict:
        return {
            "plan": self.plan.to_dict(),
            "placement": self.placement.to_dict(),
            "observed_t_iter": self.observed_t_iter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Observation":
        return cls(
            plan=ExecutionPlan.from_dict(d["plan"]),
            placement=Placement.from_dict(d["placement"]),
            observed_t_iter=float(d["observed_t_iter"]),
        )


def save_observations(obs: Sequence[Observation], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for o in obs:
            fh.write(json.dumps(o.to_dict()) + "\n")


def load_observations(path: str) -> list[Observation]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(Observation.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: bad observation on line {lineno}: {exc}")
    return out


@dataclass(frozen=True)
class FitBounds:
    """Box constraints of the search, (low, high) per coefficient."""

    k_bwd: tuple[float, float] = (0.5, 5.0)
    k_sync: tuple[float, float] = (1.0, 64.0)
    k_off: tuple[float, float] = (1.0, 64.0)
    k_swap: tuple[float, float] = (1.0, 64.0)
    k_opt: tuple[float, float] = (1.0e-12, 1.0e-6)
    k_opt_off: tuple[float, float] = (1.0e-12, 1.0e-6)
    k_const: tuple[float, float] = (0.0, 10.0)


DEFAULT_BOUNDS = FitBounds()

_PARAM_ORDER = ("k_bwd", "k_sync", "k_off", "k_swap", "k_opt", "k_opt_off", "k_const")


@dataclass
class FitResult:
    params: PerfParams
    rmsle: float
    n_points: int
    converged: bool
    residuals: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "rmsle": self.rmsle,
            "n_points": self.n_points,
            "converged": self.converged,
            "residuals": self.residuals,
        }


def rmsle(predicted: Sequence[float], observed: Sequence[float]) -> float:
    pred = np.asarray(predicted, dtype=float)
    obs = np.asarray(observed, dtype=float)
    return float(np.sqrt(np.mean((np.log1p(pred) - np.log1p(obs)) ** 2)))


def _vector_to_params(x: np.ndarray) -> PerfParams:
    return PerfParams(
        k_bwd=math.exp(x[0]),
        k_sync=math.exp(x[1]),
        k_off=math.exp(x[2]),
        k_swap=math.exp(x[3]),
        k_opt=math.exp(x[4]),
        k_opt_off=math.exp(x[5]),
        k_const=x[6],
    )


def _params_to_vector(p: PerfParams) -> np.ndarray:
    return np.array(
        [
            math.log(p.k_bwd),
            math.log(p.k_sync),
            math.log(p.k_off),
            math.log(p.k_swap),
            math.log(p.k_opt),
            math.log(p.k_opt_off),
            p.k_const,
        ]
    )


def _search_bounds(b: FitBounds) -> list[tuple[float, float]]:
    out = []
    for name in _PARAM_ORDER[:-1]:
        lo, hi = getattr(b, name)
        out.append((math.log(lo), math.log(hi)))
    out.append(b.k_const)
    return out


def _validate(model: ModelSpec, env: EnvSpec, obs: Sequence[Observation]) -> None:
    if len(obs) < MIN_POINTS:
        raise TooFewPoints(
            f"need at least {MIN_POINTS} observations, got {len(obs)}"
        )
    n_off = sum(1 for o in obs if o.plan.kind.value == "zero_offload")
    if n_off < MIN_OFFLOAD_POINTS:
        raise MissingOffloadPoints(
            f"need at least {MIN_OFFLOAD_POINTS} offload observations, got {n_off}"
        )
    probe = PerfParams()
    for o in obs:
        perf.predict(model, o.plan, o.placement, env, probe)


def fit(
    model: ModelSpec,
    env: EnvSpec,
    observations: Sequence[Observation],
    seed: int = DEFAULT_SEED,
    n_starts: int = 16,
    bounds: FitBounds = DEFAULT_BOUNDS,
    warm_starts: Sequence[PerfParams] = (),
) -> FitResult:
    """Fit the seven model coefficients to the observation set.

    Requires at least 7 points, at least 3 of them offload runs (otherwise the
    optimizer/offload coefficients are unconstrained). The best of all restarts
    wins; if its simplex did not report convergence the result still carries
    the best-found parameters with converged=False.
    """
    obs = list(observations)
    _validate(model, env, obs)
    observed = np.array([o.observed_t_iter for o in obs])
    log_obs = np.log1p(observed)
    box = _search_bounds(bounds)
    lows = np.array([b[0] for b in box])
    highs = np.array([b[1] for b in box])

    def objective(x: np.ndarray) -> float:
        p = _vector_to_params(x)
        acc = 0.0
        for o, lo_obs in zip(obs, log_obs):
            t = perf.predict(model, o.plan, o.placement, env, p).t_iter
            diff = math.log1p(t) - lo_obs
            acc += diff * diff
        return math.sqrt(acc / len(obs))

    rng = np.random.default_rng(seed)
    starts = [_params_to_vector(w) for w in warm_starts]
    for _ in range(n_starts):
        u = rng.random(len(box))
        x0 = lows + u * (highs - lows)
        # the k_const dimension is linear; sample it log-uniformly above a floor
        lo_c = max(bounds.k_const[0], 1e-6)
        x0[6] = math.exp(
            math.log(lo_c) + u[6] * (math.log(bounds.k_const[1]) - math.log(lo_c))
        )
        starts.append(x0)

    best_x: Optional[np.ndarray] = None
    best_val = math.inf
    best_ok = False
    opts = {"maxiter": 4000, "xatol": 1e-10, "fatol": 1e-13, "adaptive": True}
    for x0 in starts:
        res = optimize.minimize(
            objective, x0, method="Nelder-Mead", bounds=box, options=opts
        )
        if res.fun < best_val:
            best_val = float(res.fun)
            best_x = np.asarray(res.x)
            best_ok = bool(res.success)
    assert best_x is not None
    # polish from the winner; cheap and tightens the final simplex
    res = optimize.minimize(
        objective, best_x, method="Nelder-Mead", bounds=box, options=opts
    )
    if res.fun <= best_val:
        best_val = float(res.fun)
        best_x = np.asarray(res.x)
        best_ok = bool(res.success) or best_ok

    params = _vector_to_params(best_x)
    residuals = []
    for o in obs:
        t = perf.predict(model, o.plan, o.placement, env, params).t_iter
        residuals.append(
            {
                "plan": o.plan.descriptor(),
                "gpus": o.placement.gpus,
                "predicted": t,
                "observed": o.observed_t_iter,
                "log_error": math.log1p(t) - math.log1p(o.observed_t_iter),
            }
        )
    return FitResult(
        params=params,
        rmsle=best_val,
        n_points=len(obs),
        converged=best_ok,
        residuals=residuals,
    )


def maybe_refit(
    result: FitResult,
    new_obs: Observation,
    history: Sequence[Observation],
    model: ModelSpec,
    env: EnvSpec,
    threshold: float = REFIT_THRESHOLD,
    seed: int = DEFAULT_SEED,
    n_starts: int = 16,
    bounds: FitBounds = DEFAULT_BOUNDS,
) -> tuple[FitResult, bool]:
    """Refit over history plus the new point when it misses by > threshold.

    The previous parameters seed the restart list, so the refit can never do
    worse than the old fit on the union set. Returns (result, refitted).
    """
    pred = perf.predict(model, new_obs.plan, new_obs.placement, env, result.params)
    rel = abs(pred.t_iter - new_obs.observed_t_iter) / new_obs.observed_t_iter
    if rel <= threshold:
        return result, False
    union = list(history) + [new_obs]
    new_result = fit(
        model,
        env,
        union,
        seed=seed,
        n_starts=n_starts,
        bounds=bounds,
        warm_starts=(result.params,),
    )
    return new_result, True

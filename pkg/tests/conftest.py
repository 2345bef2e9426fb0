import pytest

from replan import EnvSpec, ExecutionPlan, ModelSpec, PerfParams, ProfileBase, build_placement


@pytest.fixture(scope="session")
def env():
    return EnvSpec()


@pytest.fixture(scope="session")
def tiny_model():
    """1B-parameter toy transformer with round numbers for hand arithmetic."""
    return ModelSpec(
        name="tiny",
        seq_len=128,
        hidden=256,
        layers=8,
        param_count=1e9,
        profile=ProfileBase(
            t_fwd_ref=0.5,
            ref_batch_per_gpu=4.0,
            ref_tp_size=1,
            t_pp_ref=0.1,
            ref_pp_gpus=4,
        ),
    )


@pytest.fixture(scope="session")
def light_model():
    """Small enough to fit every plan kind in default GPU memory."""
    return ModelSpec(
        name="light",
        seq_len=512,
        hidden=1024,
        layers=12,
        param_count=2e8,
        profile=ProfileBase(
            t_fwd_ref=0.1,
            ref_batch_per_gpu=4.0,
            t_pp_ref=0.02,
            ref_pp_gpus=4,
        ),
    )


@pytest.fixture(scope="session")
def params():
    return PerfParams(
        k_bwd=2.0,
        k_sync=8.0,
        k_off=8.0,
        k_swap=8.0,
        k_opt=1e-9,
        k_opt_off=1e-8,
        k_const=0.0,
    )


def plan(desc: str) -> ExecutionPlan:
    return ExecutionPlan.from_descriptor(desc)


def place(gpus: int, cpus: int, env: EnvSpec, batch: float):
    return build_placement(gpus, cpus, env, batch)

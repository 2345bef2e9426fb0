"""Core domain types shared across the package.

Units are SI throughout: seconds, bytes, bytes/second. Throughput is
samples/second. All dataclasses here are frozen so they can be used as cache
keys.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields
from enum import Enum
from typing import Any


class PlanKind(str, Enum):
    """Families of execution plans the performance model understands."""

    THREE_D = "3d"
    ZERO_DP = "zero_dp"
    ZERO_OFFLOAD = "zero_offload"


@dataclass(frozen=True)
class ProfileBase:
    """Reference measurements a model's timing predictions are scaled from.

    t_fwd_ref is the forward time of one pass measured at (ref_dp_size,
    ref_batch_per_gpu, ref_tp_size) without pipelining. t_pp_ref is the time
    for one GPU to run a single micro-batch through its own l/ref_pp_gpus
    layers in a pipelined profile run.
    """

    t_fwd_ref: float
    ref_dp_size: int = 1
    ref_batch_per_gpu: float = 1.0
    ref_tp_size: int = 1
    t_pp_ref: float = 0.0
    ref_pp_gpus: int = 1

    def __post_init__(self) -> None:
        if self.t_fwd_ref <= 0:
            raise ValueError("t_fwd_ref must be positive")
        if self.ref_dp_size < 1 or self.ref_tp_size < 1 or self.ref_pp_gpus < 1:
            raise ValueError("reference parallel sizes must be >= 1")
        if self.ref_batch_per_gpu <= 0:
            raise ValueError("ref_batch_per_gpu must be positive")
        if self.t_pp_ref < 0:
            raise ValueError("t_pp_ref must be >= 0")


@dataclass(frozen=True)
class ModelSpec:
    """Static description of one trainable model architecture."""

    name: str
    seq_len: int
    hidden: int
    layers: int
    param_count: float
    profile: ProfileBase
    bytes_per_param: float = 2.0
    act_bytes: float = 2.0

    def __post_init__(self) -> None:
        if self.seq_len <= 0 or self.hidden <= 0 or self.layers <= 0:
            raise ValueError("seq_len, hidden and layers must be positive")
        if self.param_count <= 0:
            raise ValueError("param_count must be positive")
        if self.bytes_per_param <= 0 or self.act_bytes <= 0:
            raise ValueError("byte widths must be positive")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "name": self.name,
            "seq_len": self.seq_len,
            "hidden": self.hidden,
            "layers": self.layers,
            "param_count": self.param_count,
            "bytes_per_param": self.bytes_per_param,
            "act_bytes": self.act_bytes,
            "profile": {
                "t_fwd_ref": self.profile.t_fwd_ref,
                "ref_dp_size": self.profile.ref_dp_size,
                "ref_batch_per_gpu": self.profile.ref_batch_per_gpu,
                "ref_tp_size": self.profile.ref_tp_size,
                "t_pp_ref": self.profile.t_pp_ref,
                "ref_pp_gpus": self.profile.ref_pp_gpus,
            },
        }
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelSpec":
        prof = d.get("profile", {})
        return cls(
            name=d["name"],
            seq_len=int(d["seq_len"]),
            hidden=int(d["hidden"]),
            layers=int(d["layers"]),
            param_count=float(d["param_count"]),
            bytes_per_param=float(d.get("bytes_per_param", 2.0)),
            act_bytes=float(d.get("act_bytes", 2.0)),
            profile=ProfileBase(
                t_fwd_ref=float(prof["t_fwd_ref"]),
                ref_dp_size=int(prof.get("ref_dp_size", 1)),
                ref_batch_per_gpu=float(prof.get("ref_batch_per_gpu", 1.0)),
                ref_tp_size=int(prof.get("ref_tp_size", 1)),
                t_pp_ref=float(prof.get("t_pp_ref", 0.0)),
                ref_pp_gpus=int(prof.get("ref_pp_gpus", 1)),
            ),
        )


@dataclass(frozen=True)
class ExecutionPlan:
    """One concrete way to run a training job on dp_size*tp_size*pp_size GPUs."""

    kind: PlanKind
    dp_size: int = 1
    tp_size: int = 1
    pp_size: int = 1
    ga_steps: int = 1
    micro_batches: int = 1
    grad_ckpt: bool = False

    def __post_init__(self) -> None:
        if min(self.dp_size, self.tp_size, self.pp_size) < 1:
            raise ValueError("parallel sizes must be >= 1")
        if self.ga_steps < 1:
            raise ValueError("ga_steps must be >= 1")
        if self.micro_batches < 1:
            raise ValueError("micro_batches must be >= 1")
        if self.pp_size > 1 and self.micro_batches < self.pp_size:
            raise ValueError("micro_batches must be >= pp_size when pipelining")
        if self.kind in (PlanKind.ZERO_DP, PlanKind.ZERO_OFFLOAD):
            if self.tp_size != 1 or self.pp_size != 1:
                raise ValueError("ZeRO plans require tp_size == pp_size == 1")

    @property
    def gpus(self) -> int:
        return self.dp_size * self.tp_size * self.pp_size

    def descriptor(self) -> str:
        """Compact one-token form, e.g. ``3d:d2.t2.p2.a1.m2.gc``."""
        parts = [
            f"d{self.dp_size}",
            f"t{self.tp_size}",
            f"p{self.pp_size}",
            f"a{self.ga_steps}",
            f"m{self.micro_batches}",
        ]
        if self.grad_ckpt:
            parts.append("gc")
        return f"{self.kind.value}:" + ".".join(parts)

    @classmethod
    def from_descriptor(cls, text: str) -> "ExecutionPlan":
        m = re.fullmatch(
            r"(3d|zero_dp|zero_offload):d(\d+)\.t(\d+)\.p(\d+)\.a(\d+)\.m(\d+)(\.gc)?",
            text.strip(),
        )
        if m is None:
            raise ValueError(f"unparseable plan descriptor: {text!r}")
        return cls(
            kind=PlanKind(m.group(1)),
            dp_size=int(m.group(2)),
            tp_size=int(m.group(3)),
            pp_size=int(m.group(4)),
            ga_steps=int(m.group(5)),
            micro_batches=int(m.group(6)),
            grad_ckpt=m.group(7) is not None,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "dp_size": self.dp_size,
            "tp_size": self.tp_size,
            "pp_size": self.pp_size,
            "ga_steps": self.ga_steps,
            "micro_batches": self.micro_batches,
            "grad_ckpt": self.grad_ckpt,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExecutionPlan":
        return cls(
            kind=PlanKind(d["kind"]),
            dp_size=int(d.get("dp_size", 1)),
            tp_size=int(d.get("tp_size", 1)),
            pp_size=int(d.get("pp_size", 1)),
            ga_steps=int(d.get("ga_steps", 1)),
            micro_batches=int(d.get("micro_batches", 1)),
            grad_ckpt=bool(d.get("grad_ckpt", False)),
        )


@dataclass(frozen=True)
class EnvSpec:
    """Hardware environment a cluster is built from."""

    intra_bw: float = 4.0e11
    inter_bw: float = 1.25e10
    pcie_bw: float = 2.5e10
    gpus_per_node: int = 8
    cpus_per_node: int = 64
    mem_per_node: float = 5.0e11
    gpu_mem: float = 3.2e10

    def __post_init__(self) -> None:
        if min(self.intra_bw, self.inter_bw, self.pcie_bw) <= 0:
            raise ValueError("bandwidths must be positive")
        if self.gpus_per_node < 1 or self.cpus_per_node < 0:
            raise ValueError("bad node shape")
        if self.mem_per_node < 0 or self.gpu_mem <= 0:
            raise ValueError("bad memory sizes")

    def to_dict(self) -> dict[str, Any]:
        return {
            "intra_bw": self.intra_bw,
            "inter_bw": self.inter_bw,
            "pcie_bw": self.pcie_bw,
            "gpus_per_node": self.gpus_per_node,
            "cpus_per_node": self.cpus_per_node,
            "mem_per_node": self.mem_per_node,
            "gpu_mem": self.gpu_mem,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EnvSpec":
        kw = {f.name: d[f.name] for f in fields(cls) if f.name in d}
        return cls(**kw)


@dataclass(frozen=True)
class PerfParams:
    """Fitted coefficients of the iteration-time model."""

    k_bwd: float = 2.0
    k_sync: float = 8.0
    k_off: float = 8.0
    k_swap: float = 8.0
    k_opt: float = 1.0e-9
    k_opt_off: float = 1.0e-8
    k_const: float = 0.0

    def __post_init__(self) -> None:
        if self.k_bwd <= 0:
            raise ValueError("k_bwd must be positive")
        for name in ("k_sync", "k_off", "k_swap"):
            if getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be >= 1")
        if self.k_opt < 0 or self.k_opt_off < 0 or self.k_const < 0:
            raise ValueError("time coefficients must be >= 0")

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PerfParams":
        kw = {f.name: float(d[f.name]) for f in fields(cls) if f.name in d}
        return cls(**kw)


@dataclass(frozen=True)
class NodeShare:
    """A slice of one node assigned to a job."""

    node: str
    gpus: int
    cpus: int = 0
    mem: float = 0.0

    def __post_init__(self) -> None:
        if self.gpus < 0 or self.cpus < 0 or self.mem < 0:
            raise ValueError("node shares cannot be negative")


@dataclass(frozen=True)
class Placement:
    """Where a job runs and at what global batch size."""

    shares: tuple[NodeShare, ...]
    batch: float

    def __post_init__(self) -> None:
        if self.batch <= 0:
            raise ValueError("batch must be positive")

    @property
    def gpus(self) -> int:
        return sum(s.gpus for s in self.shares)

    @property
    def cpus(self) -> int:
        return sum(s.cpus for s in self.shares)

    def gpu_counts(self) -> tuple[int, ...]:
        return tuple(s.gpus for s in self.shares if s.gpus > 0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "batch": self.batch,
            "shares": [
                {"node": s.node, "gpus": s.gpus, "cpus": s.cpus, "mem": s.mem}
                for s in self.shares
            ],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Placement":
        return cls(
            shares=tuple(
                NodeShare(
                    node=str(s["node"]),
                    gpus=int(s["gpus"]),
                    cpus=int(s.get("cpus", 0)),
                    mem=float(s.get("mem", 0.0)),
                )
                for s in d.get("shares", [])
            ),
            batch=float(d["batch"]),
        )


@dataclass(frozen=True, order=True)
class ResourceVector:
    """A (gpus, cpus, host mem bytes) demand or capacity triple."""

    gpus: int = 0
    cpus: int = 0
    mem: float = 0.0

    def __post_init__(self) -> None:
        if self.gpus < 0 or self.cpus < 0 or self.mem < 0:
            raise ValueError("resource amounts cannot be negative")

    def dominates(self, other: "ResourceVector") -> bool:
        """Component-wise >= in every dimension."""
        return (
            self.gpus >= other.gpus
            and self.cpus >= other.cpus
            and self.mem >= other.mem
        )

    def to_dict(self) -> dict[str, Any]:
        return {"gpus": self.gpus, "cpus": self.cpus, "mem": self.mem}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ResourceVector":
        return cls(
            gpus=int(d.get("gpus", 0)),
            cpus=int(d.get("cpus", 0)),
            mem=float(d.get("mem", 0.0)),
        )

    @classmethod
    def zero(cls) -> "ResourceVector":
        return cls(0, 0, 0.0)


def build_placement(
    gpus: int,
    cpus: int,
    env: EnvSpec,
    batch: float,
    mem: float = 0.0,
    node_prefix: str = "n",
) -> Placement:
    """Canonical greedy packing of a resource amount onto fresh nodes.

    Fills nodes to env.gpus_per_node in order; CPUs and host memory are spread
    over the used nodes proportionally to each node's GPU share (remainders go
    to the earliest nodes). Used for curves, min-demand search and anywhere a
    placement has to be synthesized from a bare amount.
    """
    if gpus < 1:
        raise ValueError("cannot place a job on zero GPUs")
    counts: list[int] = []
    left = gpus
    while left > 0:
        take = min(left, env.gpus_per_node)
        counts.append(take)
        left -= take
    shares = []
    cpu_left = cpus
    mem_left = mem
    for i, g in enumerate(counts):
        if i == len(counts) - 1:
            c, m = cpu_left, mem_left
        else:
            c = int(round(cpus * g / gpus))
            m = mem * g / gpus
            c = min(c, cpu_left)
            m = min(m, mem_left)
        cpu_left -= c
        mem_left -= m
        shares.append(NodeShare(node=f"{node_prefix}{i}", gpus=g, cpus=c, mem=m))
    return Placement(shares=tuple(shares), batch=batch)


def dump_json(obj: Any, path: str) -> None:
    """Serialize to JSON with a stable layout (two-space indent, sorted off)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def parse_descriptor_list(text: str) -> list[ExecutionPlan]:
    """Parse a comma-separated list of plan descriptors."""
    out = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if chunk:
            out.append(ExecutionPlan.from_descriptor(chunk))
    return out

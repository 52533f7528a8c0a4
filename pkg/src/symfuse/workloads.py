"""Built-in workload definitions and lowering of composite operators.

Workloads are declared over composite ops (softmax, rms_norm) plus
primitives and lowered to the primitive vocabulary before search.  The
built-ins are the five evaluation benchmarks at desk scale (sizes divided
so the reference interpreter is fast; all extents stay powers of two) plus
the fused softmax-matmul example and a trivial identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .errors import UnsupportedOpError
from .graph import Program, ProgOp, TensorSpec, _op_shape

_PRIMITIVES = ("matmul", "exp", "silu", "square", "sqrt", "div", "mul", "add", "sum", "scale")
_COMPOSITES = ("softmax", "rms_norm")


@dataclass
class WorkloadOp:
    op: str
    args: tuple[str, ...]
    out: str
    axis: Optional[int] = None
    const: Optional[Fraction] = None


@dataclass
class WorkloadSpec:
    name: str
    tensors: list[TensorSpec]
    ops: list[WorkloadOp]
    outputs: tuple[str, ...]
    defaults: dict = field(default_factory=dict)
    scale: Optional[dict] = None  # per-tensor size overrides

    def sized_tensors(self) -> list[TensorSpec]:
        if not self.scale:
            return list(self.tensors)
        return [
            TensorSpec(t.name, tuple(self.scale.get(t.name, t.dims)), t.role)
            for t in self.tensors
        ]

    def to_json(self) -> str:
        payload = {
            "name": self.name,
            "tensors": [
                {"name": t.name, "dims": list(t.dims), "role": t.role}
                for t in self.tensors
            ],
            "ops": [
                {
                    "op": o.op,
                    "args": list(o.args),
                    "out": o.out,
                    **({"axis": o.axis} if o.axis is not None else {}),
                    **(
                        {"const": [o.const.numerator, o.const.denominator]}
                        if o.const is not None
                        else {}
                    ),
                }
                for o in self.ops
            ],
            "outputs": list(self.outputs),
            "defaults": self.defaults,
        }
        if self.scale:
            payload["scale"] = {k: list(v) for k, v in self.scale.items()}
        return json.dumps(payload, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "WorkloadSpec":
        payload = json.loads(text)
        return WorkloadSpec(
            name=payload["name"],
            tensors=[
                TensorSpec(t["name"], tuple(t["dims"]), t["role"])
                for t in payload["tensors"]
            ],
            ops=[
                WorkloadOp(
                    op=o["op"],
                    args=tuple(o["args"]),
                    out=o["out"],
                    axis=o.get("axis"),
                    const=Fraction(*o["const"]) if "const" in o else None,
                )
                for o in payload["ops"]
            ],
            outputs=tuple(payload["outputs"]),
            defaults=payload.get("defaults", {}),
            scale={k: tuple(v) for k, v in payload["scale"].items()}
            if "scale" in payload
            else None,
        )


def lower(spec: WorkloadSpec) -> Program:
    """Expand composites: softmax(t,d) divides exp by its summed exp;
    rms_norm(t,d) divides by the root of the mean square."""
    tensors = spec.sized_tensors()
    shapes = {t.name: t.dims for t in tensors if t.role == "input"}
    ops: list[ProgOp] = []

    def push(kind, args, out, axis=None, const=None):
        ops.append(ProgOp(kind, tuple(args), out, axis=axis, const=const))
        shapes[out] = _op_shape(kind, [shapes[a] for a in args], axis, out=out)

    for wop in spec.ops:
        if wop.op in _PRIMITIVES:
            push(wop.op, wop.args, wop.out, wop.axis, wop.const)
        elif wop.op == "softmax":
            (src,) = wop.args
            e, s = f"{wop.out}.e", f"{wop.out}.s"
            push("exp", [src], e)
            push("sum", [e], s, axis=wop.axis)
            push("div", [e, s], wop.out)
        elif wop.op == "rms_norm":
            (src,) = wop.args
            n = shapes[src][wop.axis]
            sq, s, ms, r = (f"{wop.out}.sq", f"{wop.out}.s", f"{wop.out}.ms", f"{wop.out}.r")
            push("square", [src], sq)
            push("sum", [sq], s, axis=wop.axis)
            push("scale", [s], ms, const=Fraction(1, n))
            push("sqrt", [ms], r)
            push("div", [src, r], wop.out)
        else:
            raise UnsupportedOpError(f"unknown composite {wop.op!r}")

    program = Program(
        name=spec.name,
        tensors=tuple(tensors),
        ops=tuple(ops),
        outputs=spec.outputs,
    )
    program.shapes()  # validates against declared outputs
    return program


# ---------------------------------------------------------------------------
# Built-ins (desk scale)


def _softmax_matmul() -> WorkloadSpec:
    return WorkloadSpec(
        name="softmax_matmul",
        tensors=[
            TensorSpec("X", (256, 256), "input"),
            TensorSpec("W", (256, 64), "input"),
            TensorSpec("O", (256, 64), "output"),
        ],
        ops=[
            WorkloadOp("softmax", ("X",), "P", axis=1),
            WorkloadOp("matmul", ("P", "W"), "O"),
        ],
        outputs=("O",),
        defaults={"grid_dims": 1, "max_ops": 9},
    )


def _rmsnorm() -> WorkloadSpec:
    return WorkloadSpec(
        name="rmsnorm",
        tensors=[
            TensorSpec("X", (8, 256), "input"),
            TensorSpec("W", (256, 64), "input"),
            TensorSpec("O", (8, 64), "output"),
        ],
        ops=[
            WorkloadOp("rms_norm", ("X",), "N", axis=1),
            WorkloadOp("matmul", ("N", "W"), "O"),
        ],
        outputs=("O",),
        defaults={"grid_dims": 1, "max_ops": 10},
    )


def _rmsnorm_mlp() -> WorkloadSpec:
    return WorkloadSpec(
        name="rmsnorm_mlp",
        tensors=[
            TensorSpec("X", (8, 256), "input"),
            TensorSpec("Wup", (256, 64), "input"),
            TensorSpec("Wgate", (256, 64), "input"),
            TensorSpec("O", (8, 64), "output"),
        ],
        ops=[
            WorkloadOp("rms_norm", ("X",), "N", axis=1),
            WorkloadOp("matmul", ("N", "Wup"), "U"),
            WorkloadOp("matmul", ("N", "Wgate"), "G"),
            WorkloadOp("mul", ("U", "G"), "O"),
        ],
        outputs=("O",),
        # One op of slack over the minimal closure buys 4x more verified
        # variants (normalization placement relative to the two products).
        defaults={"grid_dims": 1, "max_ops": 13},
    )


def _swiglu() -> WorkloadSpec:
    return WorkloadSpec(
        name="swiglu",
        tensors=[
            TensorSpec("X", (8, 256), "input"),
            TensorSpec("Wgate", (256, 64), "input"),
            TensorSpec("Wup", (256, 64), "input"),
            TensorSpec("O", (8, 64), "output"),
        ],
        ops=[
            WorkloadOp("matmul", ("X", "Wgate"), "G"),
            WorkloadOp("silu", ("G",), "S"),
            WorkloadOp("matmul", ("X", "Wup"), "U"),
            WorkloadOp("mul", ("S", "U"), "O"),
        ],
        outputs=("O",),
        defaults={"grid_dims": 1, "max_ops": 8},
    )


def _attention() -> WorkloadSpec:
    # Grouped-query decode shape: batch 1, two KV groups, query length 1,
    # head dim 32, KV length 128.  K arrives pre-transposed.
    return WorkloadSpec(
        name="attention",
        tensors=[
            TensorSpec("Q", (1, 2, 1, 32), "input"),
            TensorSpec("Kt", (1, 2, 32, 128), "input"),
            TensorSpec("V", (1, 2, 128, 32), "input"),
            TensorSpec("O", (1, 2, 1, 32), "output"),
        ],
        ops=[
            WorkloadOp("matmul", ("Q", "Kt"), "S"),
            WorkloadOp("softmax", ("S",), "P", axis=3),
            WorkloadOp("matmul", ("P", "V"), "O"),
        ],
        outputs=("O",),
        defaults={"grid_dims": 1, "max_ops": 10},
    )


def _qk_attention() -> WorkloadSpec:
    return WorkloadSpec(
        name="qk_attention",
        tensors=[
            TensorSpec("Q", (1, 2, 1, 32), "input"),
            TensorSpec("Kt", (1, 2, 32, 128), "input"),
            TensorSpec("V", (1, 2, 128, 32), "input"),
            TensorSpec("O", (1, 2, 1, 32), "output"),
        ],
        ops=[
            WorkloadOp("rms_norm", ("Q",), "N", axis=3),
            WorkloadOp("matmul", ("N", "Kt"), "S"),
            WorkloadOp("softmax", ("S",), "P", axis=3),
            WorkloadOp("matmul", ("P", "V"), "O"),
        ],
        outputs=("O",),
        defaults={"grid_dims": 1, "max_ops": 14},
    )


def _identity() -> WorkloadSpec:
    return WorkloadSpec(
        name="identity",
        tensors=[TensorSpec("X", (256,), "input")],
        ops=[],
        outputs=("X",),
        defaults={"grid_dims": 1, "max_ops": 2},
    )


BUILTINS = {
    spec().name: spec
    for spec in (
        _softmax_matmul,
        _rmsnorm,
        _rmsnorm_mlp,
        _swiglu,
        _attention,
        _qk_attention,
        _identity,
    )
}

BENCHMARKS = ("rmsnorm", "rmsnorm_mlp", "swiglu", "attention", "qk_attention")


def load_workload(name_or_path: str) -> WorkloadSpec:
    if name_or_path in BUILTINS:
        return BUILTINS[name_or_path]()
    with open(name_or_path, "r", encoding="utf-8") as fh:
        return WorkloadSpec.from_json(fh.read())

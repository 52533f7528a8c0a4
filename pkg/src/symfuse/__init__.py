"""symfuse: search-based discovery of fused tensor kernels.

The pipeline generates block-graph templates with symbolic partition
mappings, enumerates concrete mappings under the collected constraints,
proves each mapped template equivalent to the input program by rewriting,
and finally tunes the launch sizes under a shared-memory budget.
"""

from .cli import PipelineFlags, run_pipeline
from .generator import SearchConfig, generate
from .graph import (
    BlockGraph,
    BlockNode,
    ConcreteGraph,
    Program,
    ProgOp,
    SymbolicGraph,
    TensorSpec,
    derive_shapes,
    instantiate,
    serialize,
    deserialize,
    template_key,
    to_dot,
)
from .interp import EquivVerdict, random_equiv_test, run_concrete, run_program
from .mappings import enumerate_mappings, symmetry_break
from .tuner import CostModel, ProfileResult, enumerate_param_space, smem_usage, tune
from .verifier import build_axioms, encode_program, encode_graph, equivalent
from .workloads import BUILTINS, WorkloadSpec, load_workload, lower

__version__ = "0.1.0"

__all__ = [
    "PipelineFlags", "run_pipeline", "SearchConfig", "generate",
    "BlockGraph", "BlockNode", "ConcreteGraph", "Program", "ProgOp",
    "SymbolicGraph", "TensorSpec", "derive_shapes", "instantiate",
    "serialize", "deserialize", "template_key", "to_dot",
    "EquivVerdict", "random_equiv_test", "run_concrete", "run_program",
    "enumerate_mappings", "symmetry_break",
    "CostModel", "ProfileResult", "enumerate_param_space", "smem_usage", "tune",
    "build_axioms", "encode_program", "encode_graph", "equivalent",
    "BUILTINS", "WorkloadSpec", "load_workload", "lower",
]

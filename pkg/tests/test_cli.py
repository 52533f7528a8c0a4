import json
import subprocess
import sys

import numpy as np
import pytest

from symfuse.cli import (
    PipelineFlags,
    build_parser,
    export_dots,
    main,
    run_pipeline,
    write_report,
)
from symfuse.workloads import BUILTINS, WorkloadSpec, load_workload, lower


def test_lower_softmax_reproduces_decomposition():
    prog = lower(BUILTINS["softmax_matmul"]())
    kinds = [op.kind for op in prog.ops]
    assert kinds == ["exp", "sum", "div", "matmul"]


def test_lower_rmsnorm_fixed_point():
    prog = lower(BUILTINS["rmsnorm"]())
    kinds = [op.kind for op in prog.ops]
    assert kinds == ["square", "sum", "scale", "sqrt", "div", "matmul"]
    # rms_norm of an all-ones tensor is the tensor itself.
    x = np.ones((8, 256))
    w = np.zeros((256, 64))
    values = {"X": x, "W": w}
    inter = {}
    for op in prog.ops[:5]:
        from symfuse.interp import apply_op

        args = [inter.get(nm, values.get(nm)) for nm in op.inputs]
        inter[op.out] = apply_op(op.kind, args, op.axis, op.const)
    assert np.allclose(inter[prog.ops[4].out], x)


def test_lower_qk_attention_primitive_count():
    prog = lower(BUILTINS["qk_attention"]())
    # rms_norm (5) + matmul + softmax (3) + matmul = 10 by hand.
    assert len(prog.ops) == 10


def test_lower_unknown_composite_rejected():
    from symfuse.errors import UnsupportedOpError
    from symfuse.workloads import WorkloadOp
    from symfuse.graph import TensorSpec

    spec = WorkloadSpec(
        name="bad",
        tensors=[TensorSpec("X", (4, 4), "input")],
        ops=[WorkloadOp("layernorm", ("X",), "O", axis=1)],
        outputs=("O",),
    )
    with pytest.raises(UnsupportedOpError):
        lower(spec)


def test_workload_json_roundtrip(tmp_path):
    spec = BUILTINS["swiglu"]()
    path = tmp_path / "swiglu.json"
    path.write_text(spec.to_json())
    loaded = load_workload(str(path))
    assert loaded.to_json() == spec.to_json()
    assert lower(loaded).ops == lower(spec).ops


def test_identity_pipeline():
    report = run_pipeline(BUILTINS["identity"](), PipelineFlags(trials=2, param_samples=1))
    assert report["stats"]["verified_pairs"] == 1
    assert report["stats"]["unique_verified_templates"] == 1
    winner = [c for c in report["candidates"] if c["verified"]][0]
    assert winner["equivalence_checked"]
    assert winner["best"]["params"] == {"x": 1, "i": 1}


def _strip_timings(report: dict) -> dict:
    out = dict(report)
    out.pop("timings", None)
    return out


def test_report_determinism():
    flags = PipelineFlags(trials=2, param_samples=2, seed=7)
    a = run_pipeline(BUILTINS["softmax_matmul"](), flags)
    b = run_pipeline(BUILTINS["softmax_matmul"](), flags)
    ja = json.dumps(_strip_timings(a), sort_keys=True)
    jb = json.dumps(_strip_timings(b), sort_keys=True)
    assert ja == jb


def test_every_reported_winner_is_equivalence_checked():
    report = run_pipeline(BUILTINS["swiglu"](), PipelineFlags(trials=2, param_samples=2))
    for c in report["candidates"]:
        if c["verified"] and c["best"] and c["best"]["params"] is not None:
            assert c["equivalence_checked"]


def test_until_stage_skipping():
    gen_only = run_pipeline(BUILTINS["swiglu"](), PipelineFlags(until="generate"))
    assert "candidates" not in gen_only
    verify_only = run_pipeline(
        BUILTINS["swiglu"](), PipelineFlags(until="verify", trials=1)
    )
    assert all(c["oracle"] is None for c in verify_only["candidates"])


def test_ablation_flags_change_cost_not_results():
    base = run_pipeline(BUILTINS["swiglu"](), PipelineFlags(until="verify"))
    ablated = run_pipeline(
        BUILTINS["swiglu"](),
        PipelineFlags(until="verify", ablate={"omap": "concrete"}),
    )
    def verified_set(rep):
        tmpl = {t["id"]: t["key"] for t in rep["templates"]}
        return {
            (tmpl[c["template_id"]], tuple(c["mapping"]))
            for c in rep["candidates"]
            if c["verified"]
        }
    assert verified_set(base) == verified_set(ablated)
    assert ablated["stats"]["explored_nodes"] >= base["stats"]["explored_nodes"]


def test_report_and_dot_files(tmp_path):
    flags = PipelineFlags(trials=1, param_samples=1)
    spec = BUILTINS["swiglu"]()
    report = run_pipeline(spec, flags)
    out = tmp_path / "report.json"
    write_report(report, str(out))
    loaded = json.loads(out.read_text())
    assert loaded["workload"] == "swiglu"

    dots = export_dots(report, spec, flags, str(tmp_path / "dots"))
    assert dots
    text = open(dots[0]).read()
    assert "digraph" in text and "matmul" in text


def test_cli_main_search_and_workloads(tmp_path, capsys):
    assert main(["workloads"]) == 0
    assert "softmax_matmul" in capsys.readouterr().out

    out = tmp_path / "r.json"
    rc = main([
        "search", "--workload", "identity", "--trials", "1",
        "--param-samples", "1", "--out", str(out),
    ])
    assert rc == 0
    assert json.loads(out.read_text())["stats"]["verified_pairs"] == 1


def test_cli_parser_spec_surface():
    parser = build_parser()
    args = parser.parse_args([
        "search", "--workload", "w.json", "--grid-dims", "2", "--max-ops", "9",
        "--seed", "3", "--samples", "8", "--budget", "167936",
        "--backend", "interp", "--ablate", "imap=concrete",
        "--ablate", "fmap=concrete", "--out", "r.json", "--dot", "dots/",
    ])
    assert args.grid_dims == 2 and args.backend == "interp"
    assert args.ablate == ["imap=concrete", "fmap=concrete"]


def test_console_entrypoint_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "symfuse.cli", "workloads"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and "rmsnorm" in proc.stdout

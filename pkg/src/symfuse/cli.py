"""End-to-end driver and command-line interface.

`run_pipeline` chains the four stages: template generation, mapping
enumeration, equivalence verification, and launch-size tuning; every
verified winner is additionally cross-checked against the reference
interpreter before it is reported.  The report is deterministic for a fixed
seed and flag set except for the wall-clock block under "timings".
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field

from .errors import EmptyParamSpaceError
from .generator import SearchConfig, generate
from .graph import template_key, to_dot
from .interp import random_equiv_test
from .mappings import enumerate_mappings
from .tuner import DEFAULT_BUDGET, tune
from .verifier import build_axioms, encode_program, encode_graph, equivalent
from .verifier.engine import SaturationLimits
from .workloads import BUILTINS, load_workload, lower

STAGES = ("generate", "mappings", "verify", "tune")


@dataclass
class PipelineFlags:
    grid_dims: int | None = None
    max_ops: int | None = None
    seed: int = 0
    samples: int = 16
    budget: int = DEFAULT_BUDGET
    backend: str = "cost"
    trials: int = 5
    param_samples: int = 2
    tol: float = 1e-9
    until: str = "tune"
    ablate: dict = field(default_factory=dict)
    whitelist: tuple[str, ...] | None = None
    node_budget: int = 10**7
    time_budget_s: float | None = None
    sat_nodes: int = 100_000
    sat_iters: int = 30
    sat_timeout_s: float = 10.0

    def as_dict(self) -> dict:
        return {
            "grid_dims": self.grid_dims,
            "max_ops": self.max_ops,
            "seed": self.seed,
            "samples": self.samples,
            "budget": self.budget,
            "backend": self.backend,
            "trials": self.trials,
            "param_samples": self.param_samples,
            "tol": self.tol,
            "until": self.until,
            "ablate": dict(sorted(self.ablate.items())),
            "whitelist": list(self.whitelist) if self.whitelist else None,
        }


def run_pipeline(spec, flags: PipelineFlags = PipelineFlags()) -> dict:
    program = lower(spec)
    k = flags.grid_dims or spec.defaults.get("grid_dims", 1)
    max_ops = flags.max_ops or spec.defaults.get("max_ops", 10)
    axioms = build_axioms(k)
    limits = SaturationLimits(
        max_nodes=flags.sat_nodes, max_iters=flags.sat_iters, timeout_s=flags.sat_timeout_s
    )
    timings: dict[str, float] = {}
    report: dict = {"workload": spec.name, "flags": flags.as_dict()}

    t0 = time.perf_counter()
    result = generate(
        program,
        SearchConfig(
            max_block_ops=max_ops,
            num_grid_dims=k,
            operator_whitelist=flags.whitelist,
            node_budget=flags.node_budget,
            time_budget_s=flags.time_budget_s,
            concrete_imap=flags.ablate.get("imap") == "concrete",
            concrete_fmap=flags.ablate.get("fmap") == "concrete",
            concrete_omap=flags.ablate.get("omap") == "concrete",
        ),
        axioms=axioms,
    )
    timings["generate_s"] = time.perf_counter() - t0
    stats = {
        "explored_nodes": result.stats.explored,
        "pruned_by_dim": result.stats.pruned_dim,
        "pruned_by_expr": result.stats.pruned_expr,
        "dedup_hits": result.stats.dedup_hits,
        "templates_emitted": result.stats.emitted,
        "budget_exhausted": result.stats.budget_exhausted,
    }
    report["templates"] = [
        {"id": i, "key": template_key(g)} for i, g in enumerate(result.graphs)
    ]
    report["stats"] = stats
    report["timings"] = timings
    if flags.until == "generate":
        return report

    t0 = time.perf_counter()
    all_candidates = []
    for tid, g in enumerate(result.graphs):
        for mapping in enumerate_mappings(g):
            all_candidates.append((tid, g, mapping))
    timings["mappings_s"] = time.perf_counter() - t0
    stats["mapping_candidates"] = len(all_candidates)
    if flags.until == "mappings":
        return report

    targets = encode_program(program)
    t0 = time.perf_counter()
    records = []
    verified = []
    for tid, g, mapping in all_candidates:
        terms = encode_graph(g, mapping)
        statuses = [
            equivalent(terms[name], targets[name], axioms, limits=limits)
            for name in program.outputs
        ]
        ok = all(s.equivalent for s in statuses)
        rec = {
            "template_id": tid,
            "mapping": sorted(
                f"{v.tensor}.{v.dim}.{v.pdim}" for v, bit in mapping.items() if bit
            ),
            "verified": ok,
            "verify": {
                "status": "equivalent" if ok else "not_proven",
                "exhausted": any(s.resource_exhausted for s in statuses),
            },
            "oracle": None,
            "best": None,
            "equivalence_checked": False,
        }
        records.append(rec)
        if ok:
            verified.append((tid, g, mapping, rec))
    timings["verify_s"] = time.perf_counter() - t0
    stats["verified_pairs"] = len(verified)
    stats["unique_verified_templates"] = len(
        {template_key(g, m) for _, g, m, _ in verified}
    )
    report["candidates"] = records
    if flags.until == "verify":
        return report

    t0 = time.perf_counter()
    oracle_failures = 0
    for tid, g, mapping, rec in verified:
        verdict = random_equiv_test(
            g,
            mapping,
            program,
            trials=flags.trials,
            param_samples=flags.param_samples,
            tol=flags.tol,
            seed=flags.seed,
        )
        rec["oracle"] = {
            "ok": verdict.ok,
            "max_rel_err": verdict.max_rel_err,
            "trials": verdict.trials,
            "note": verdict.note,
        }
        rec["equivalence_checked"] = verdict.ok
        if not verdict.ok:
            oracle_failures += 1
            continue
        try:
            best = tune(
                g,
                mapping,
                backend=flags.backend,
                samples=flags.samples,
                seed=flags.seed,
                budget_bytes=flags.budget,
            )
        except EmptyParamSpaceError:
            rec["best"] = {"params": None, "score": None, "note": "empty param space"}
            continue
        rec["best"] = {"params": best.params, "score": best.score}
    timings["tune_s"] = time.perf_counter() - t0
    stats["oracle_failures"] = oracle_failures
    return report


def write_report(report: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_dots(report: dict, spec, flags: PipelineFlags, outdir: str) -> list[str]:
    """One DOT file per template that has a verified candidate."""
    from .graph import deserialize

    program = lower(spec)
    verified_ids = sorted(
        {c["template_id"] for c in report.get("candidates", []) if c["verified"]}
    )
    os.makedirs(outdir, exist_ok=True)
    written = []
    for tid in verified_ids:
        key = report["templates"][tid]["key"]
        graph, _, _ = deserialize(key, program)
        path = os.path.join(outdir, f"template_{tid:03d}.dot")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(to_dot(graph))
            fh.write("\n")
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# Command line


def _parse_ablate(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise SystemExit(f"--ablate expects map=concrete, got {item!r}")
        key, val = item.split("=", 1)
        if key not in ("imap", "fmap", "omap") or val != "concrete":
            raise SystemExit(f"--ablate expects {{imap,fmap,omap}}=concrete, got {item!r}")
        out[key] = val
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symfuse", description="search for fused-kernel implementations"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the full pipeline on one workload")
    p.add_argument("--workload", required=True, help="builtin name or JSON file")
    p.add_argument("--grid-dims", type=int, default=None)
    p.add_argument("--max-ops", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=16)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="shared-memory bytes")
    p.add_argument("--backend", choices=("cost", "interp"), default="cost")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--param-samples", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--until", choices=STAGES, default="tune")
    p.add_argument("--ablate", action="append", metavar="MAP=concrete")
    p.add_argument("--whitelist", default=None, help="comma-separated op kinds")
    p.add_argument("--node-budget", type=int, default=10**7)
    p.add_argument("--time-budget", type=float, default=None)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument("--dot", default=None, help="directory for per-template DOT files")

    w = sub.add_parser("workloads", help="list or dump built-in workloads")
    w.add_argument("--dump", default=None, help="print one builtin as JSON")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "workloads":
        if args.dump:
            print(BUILTINS[args.dump]().to_json())
        else:
            for name in BUILTINS:
                spec = BUILTINS[name]()
                shapes = ", ".join(
                    f"{t.name}{list(t.dims)}" for t in spec.tensors if t.role == "input"
                )
                print(f"{name}: {shapes}")
        return 0

    spec = load_workload(args.workload)
    flags = PipelineFlags(
        grid_dims=args.grid_dims,
        max_ops=args.max_ops,
        seed=args.seed,
        samples=args.samples,
        budget=args.budget,
        backend=args.backend,
        trials=args.trials,
        param_samples=args.param_samples,
        tol=args.tol,
        until=args.until,
        ablate=_parse_ablate(args.ablate),
        whitelist=tuple(args.whitelist.split(",")) if args.whitelist else None,
        node_budget=args.node_budget,
        time_budget_s=args.time_budget,
    )
    report = run_pipeline(spec, flags)
    stats = report["stats"]
    verified = stats.get("verified_pairs", "-")
    print(
        f"{spec.name}: explored={stats['explored_nodes']} "
        f"templates={stats['templates_emitted']} verified={verified} "
        f"unique={stats.get('unique_verified_templates', '-')}"
    )
    if args.out:
        write_report(report, args.out)
        print(f"report written to {args.out}")
    if args.dot:
        written = export_dots(report, spec, flags, args.dot)
        print(f"{len(written)} DOT files in {args.dot}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

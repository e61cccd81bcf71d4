"""Command-line pipeline: config ingestion, orchestration, reports.

Subcommands:

- trace:     emit the traffic trace CSV and a workload summary.
- explore:   full pipeline (platform, trace, bi-objective search,
             simulation-based final selection) with CSV/JSON/DOT output.
- compare:   run explore for two configs sharing a workload and emit a
             cross-design comparison plus both hop histograms.
- simulate:  run the network simulator on an existing design + trace.
- baseline:  emit the mesh reference design and its report.

Every command is a pure function of (config file, seed): reruns write
byte-identical outputs. All randomness derives from the root seed
through named substreams. Exit status is 0 only when every requested
output was written; failures produce a machine-readable error JSON on
stdout.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .noi import Design, design_to_dot, hop_histogram, utilization
from .optimize import (SearchSpace, select_final, stage_explore, substream)
from .platform import (DRAMParams, MCParams, Placement, Platform, ReRAMParams,
                       SMParams, SystemConfig, build_platform, mesh_design,
                       place_initial)
from .sim import CostModel, SimReport, compare, simulate
from .traffic import TrafficTrace, default_mapping, generate_trace
from .workload import (ModelSpec, SequenceConfig, fc_dominance,
                       intermediate_storage_ratio, kernel_sequence,
                       reram_write_load, resolve_model)

SCHEMA_ID = "chipletnoi-run-config/1"


class ConfigError(ValueError):
    pass


@dataclass
class OptimizerConfig:
    budget: int = 4
    seed: int | None = None
    start_pool: int = 20
    expansion_budget: int = 3000
    neighbor_limit: int = 16
    use_model: bool = True


@dataclass
class RunConfig:
    system: SystemConfig
    model: ModelSpec
    sequence: SequenceConfig
    costs: CostModel
    optimizer: OptimizerConfig
    outputs: str | None = None


def _take(doc: dict, cls, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"{where}: unknown fields {sorted(unknown)}")
    return cls(**doc)


def _system_config(doc: dict) -> SystemConfig:
    doc = dict(doc)
    nested = (("sm", SMParams), ("mc", MCParams), ("dram", DRAMParams),
              ("reram", ReRAMParams))
    for key, cls in nested:
        if isinstance(doc.get(key), dict):
            doc[key] = _take(doc[key], cls, f"system.{key}")
    return _take(doc, SystemConfig, "system")


def load_config(path: str | Path, seed: int | None = None,
                budget: int | None = None) -> RunConfig:
    """Parse and validate a run-config JSON document."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if doc.get("schema_id") != SCHEMA_ID:
        raise ConfigError(
            f"{path}: schema_id must be {SCHEMA_ID!r}, "
            f"got {doc.get('schema_id')!r}")
    try:
        system = _system_config(doc.get("system", {}))
        model = resolve_model(doc["model"])
        seq_doc = dict(doc.get("sequence", {}))
        sequence = _take(seq_doc, SequenceConfig, "sequence")
        costs = _take(doc.get("costs", {}), CostModel, "costs")
        opt = _take(doc.get("optimizer", {}), OptimizerConfig, "optimizer")
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"{path}: missing required field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if seed is not None:
        opt.seed = seed
    if budget is not None:
        opt.budget = budget
    if opt.seed is None:
        raise ConfigError(
            f"{path}: no seed given (set optimizer.seed or pass --seed); "
            "implicit entropy is not allowed")
    return RunConfig(system=system, model=model, sequence=sequence,
                     costs=costs, optimizer=opt,
                     outputs=doc.get("outputs"))


# -- deterministic writers -------------------------------------------------


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _json_text(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _rows_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([row.get(c, "") for c in columns])
    return buf.getvalue()


def _report_files(out: Path, stem: str, report: SimReport) -> list[Path]:
    files = [_write_text(out / f"{stem}.json", report.to_json() + "\n")]
    phase_rows = [dataclasses.asdict(p) for p in report.phases]
    files.append(_write_text(
        out / f"{stem}_phases.csv",
        _rows_csv(phase_rows, ["t", "label", "kind", "chain", "comm_cycles",
                               "compute_cycles", "cycles", "flits", "bytes"])))
    hop_rows = [{"hops": h, "frequency": c}
                for h, c in sorted(report.hop_counts.items())]
    files.append(_write_text(out / f"{stem}_hops.csv",
                             _rows_csv(hop_rows, ["hops", "frequency"])))
    return files


def _comparison_csv(rows: list[dict]) -> str:
    base = ["index", "latency_cycles", "energy_joules", "edp",
            "latency_speedup", "energy_gain", "edp_gain"]
    extras = sorted({k for row in rows for k in row} - set(base))
    return _rows_csv(rows, base + extras)


# -- pipeline pieces -------------------------------------------------------


@dataclass
class Pipeline:
    config: RunConfig
    platform: Platform
    placement: Placement
    mapping: object
    trace: TrafficTrace
    space: SearchSpace
    mesh: Design


def build_pipeline(config: RunConfig) -> Pipeline:
    platform = build_platform(config.system)
    seed = config.optimizer.seed
    placement = place_initial(platform, config.system,
                              substream(seed, "placement").getrandbits(31))
    mapping = default_mapping(platform, config.model)
    trace = generate_trace(platform, placement, mapping, config.model,
                           config.sequence)
    return Pipeline(config=config, platform=platform, placement=placement,
                    mapping=mapping, trace=trace,
                    space=SearchSpace.for_platform(platform),
                    mesh=mesh_design(platform))


def workload_summary(config: RunConfig, platform: Platform) -> dict:
    kernels = kernel_sequence(config.model, config.sequence)
    rp = platform.config.reram
    estimate = reram_write_load(
        config.model, config.sequence, cell_bits=rp.cell_bits,
        crossbar_dim=rp.crossbar_dim,
        crossbars_per_chiplet=rp.crossbars_per_chiplet)
    return {
        "model": config.model.name,
        "seq_len": config.sequence.seq_len,
        "context_len": config.sequence.context_len,
        "total_flops": sum(k.flops for k in kernels),
        "total_weight_bytes": sum(k.weight_bytes for k in kernels),
        "total_activation_bytes": sum(k.activation_out_bytes for k in kernels),
        "kernel_counts": {kind: sum(1 for k in kernels if k.kind == kind)
                          for kind in sorted({k.kind for k in kernels})},
        "fc_dominance": fc_dominance(config.model, config.sequence),
        "intermediate_storage_ratio": intermediate_storage_ratio(
            config.model, config.sequence),
        "write_estimate": dataclasses.asdict(estimate),
    }


def cmd_trace(config: RunConfig, out: Path) -> list[Path]:
    pipe = build_pipeline(config)
    files = [_write_text(out / "trace.csv", pipe.trace.to_csv())]
    files.append(_write_text(out / "workload_summary.json",
                             _json_text(workload_summary(config,
                                                         pipe.platform))))
    return files


def _explore(config: RunConfig, out: Path, parallel: int
             ) -> tuple[list[Path], Pipeline, object]:
    pipe = build_pipeline(config)
    opt = config.optimizer
    events: list[str] = []
    result = stage_explore(
        pipe.space, pipe.trace, pipe.mapping, budget=opt.budget,
        seed=opt.seed, start_pool=opt.start_pool,
        expansion_budget=opt.expansion_budget,
        neighbor_limit=opt.neighbor_limit, use_model=opt.use_model,
        log=lambda ev: events.append(json.dumps(ev, sort_keys=True)))
    selection = select_final(result.archive, pipe.trace, pipe.platform,
                             config.costs, pipe.mesh, parallel=parallel)
    files = []
    files.append(_write_text(out / "events.jsonl",
                             "".join(line + "\n" for line in events)))
    files.append(_write_text(
        out / "pareto.csv",
        _rows_csv(selection.rows,
                  ["design_index", "mu", "sigma", "latency_cycles",
                   "energy_joules", "edp", "links", "selected"])))
    files.append(_write_text(out / "selected_design.json",
                             _json_text(selection.design.to_dict())))
    files.append(_write_text(out / "selected_design.dot",
                             design_to_dot(selection.design, pipe.platform)))
    files.extend(_report_files(out, "mesh_report", selection.mesh_report))
    files.extend(_report_files(out, "selected_report", selection.report))
    files.append(_write_text(
        out / "comparison.csv",
        _comparison_csv(compare([selection.mesh_report, selection.report]))))
    summary = {
        "model": config.model.name,
        "seed": opt.seed,
        "budget": opt.budget,
        "integration": config.system.integration,
        "archive_size": len(result.archive.alive()),
        "archive_phv": result.archive.phv(result.ref),
        "warned_no_mesh_beater": selection.warned,
        "mesh_latency_cycles": selection.mesh_report.end_to_end_cycles,
        "selected_latency_cycles": selection.report.end_to_end_cycles,
        "mesh_edp": selection.mesh_report.edp_joule_seconds,
        "selected_edp": selection.report.edp_joule_seconds,
    }
    files.append(_write_text(out / "summary.json", _json_text(summary)))
    return files, pipe, selection


def cmd_explore(config: RunConfig, out: Path, parallel: int = 1) -> list[Path]:
    files, _, _ = _explore(config, out, parallel)
    return files


def cmd_compare(config_a: RunConfig, config_b: RunConfig, out: Path,
                parallel: int = 1) -> list[Path]:
    if (config_a.model != config_b.model
            or config_a.sequence != config_b.sequence):
        raise ConfigError("compare requires both configs to share the same "
                          "model and sequence")
    files_a, pipe_a, sel_a = _explore(config_a, out / "a", parallel)
    files_b, pipe_b, sel_b = _explore(config_b, out / "b", parallel)
    files = files_a + files_b
    rows = compare([sel_a.report, sel_b.report])
    files.append(_write_text(out / "comparison.csv", _comparison_csv(rows)))
    for tag, pipe, sel in (("a", pipe_a, sel_a), ("b", pipe_b, sel_b)):
        hist = hop_histogram(sel.design, pipe.trace)
        hop_rows = [{"hops": h, "frequency": c}
                    for h, c in hist.counts.items()]
        files.append(_write_text(out / f"hops_{tag}.csv",
                                 _rows_csv(hop_rows, ["hops", "frequency"])))
    summary = {
        "a": {"integration": config_a.system.integration,
              "latency_cycles": sel_a.report.end_to_end_cycles,
              "hop_mean": hop_histogram(sel_a.design, pipe_a.trace).mean},
        "b": {"integration": config_b.system.integration,
              "latency_cycles": sel_b.report.end_to_end_cycles,
              "hop_mean": hop_histogram(sel_b.design, pipe_b.trace).mean},
    }
    files.append(_write_text(out / "summary.json", _json_text(summary)))
    return files


def cmd_simulate(config: RunConfig, design_path: Path, trace_path: Path,
                 out: Path) -> list[Path]:
    pipe = build_pipeline(config)
    design = Design.from_dict(json.loads(Path(design_path).read_text()))
    trace = TrafficTrace.from_csv(Path(trace_path).read_text())
    report = simulate(design, trace, pipe.platform, config.costs)
    return _report_files(out, "report", report)


def cmd_baseline(config: RunConfig, out: Path) -> list[Path]:
    pipe = build_pipeline(config)
    report = simulate(pipe.mesh, pipe.trace, pipe.platform, config.costs)
    files = [_write_text(out / "mesh_design.json",
                         _json_text(pipe.mesh.to_dict()))]
    files.append(_write_text(out / "mesh_design.dot",
                             design_to_dot(pipe.mesh, pipe.platform)))
    files.extend(_report_files(out, "mesh_report", report))
    stats = utilization(pipe.mesh, pipe.trace)
    files.append(_write_text(out / "mesh_utilization.json", _json_text(
        {"mu": stats.mu, "sigma": stats.sigma, "links": stats.link_count})))
    return files


# -- entry point -----------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chipletnoi",
        description="Transformer-on-chiplet traffic modeling and "
                    "interposer-network design exploration")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run-config JSON")
        p.add_argument("--seed", type=int, default=None,
                       help="root seed (overrides optimizer.seed)")
        p.add_argument("--budget", type=int, default=None,
                       help="local-search runs (overrides optimizer.budget)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--parallel", type=int, default=1,
                       help="concurrent simulation workers")

    common(sub.add_parser("trace", help="emit trace CSV + workload summary"))
    common(sub.add_parser("explore", help="search + simulate + select"))
    cmp_p = sub.add_parser("compare", help="explore two configs and compare")
    common(cmp_p)
    cmp_p.add_argument("--config-b", required=True,
                       help="second run-config JSON")
    sim_p = sub.add_parser("simulate", help="simulate a design + trace")
    common(sim_p)
    sim_p.add_argument("--design", required=True, help="design JSON")
    sim_p.add_argument("--trace", required=True, help="trace CSV")
    common(sub.add_parser("baseline", help="mesh reference design + report"))
    return parser


def _out_dir(args, config: RunConfig) -> Path:
    out = args.out or config.outputs
    if out is None:
        raise ConfigError("no output directory (set outputs in the config "
                          "or pass --out)")
    return Path(out)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config, seed=args.seed, budget=args.budget)
        out = _out_dir(args, config)
        if args.command == "trace":
            files = cmd_trace(config, out)
        elif args.command == "explore":
            files = cmd_explore(config, out, parallel=args.parallel)
        elif args.command == "compare":
            config_b = load_config(args.config_b, seed=args.seed,
                                   budget=args.budget)
            files = cmd_compare(config, config_b, out,
                                parallel=args.parallel)
        elif args.command == "simulate":
            files = cmd_simulate(config, Path(args.design), Path(args.trace),
                                 out)
        else:
            files = cmd_baseline(config, out)
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__,
                                    "message": str(exc)}}, sort_keys=True))
        return 1
    missing = [str(f) for f in files if not f.exists()]
    if missing:
        print(json.dumps({"error": {"type": "MissingOutput",
                                    "message": f"not written: {missing}"}}))
        return 1
    print(json.dumps({"written": sorted(str(f) for f in files)},
                     sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())

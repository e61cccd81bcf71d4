"""Deterministic network simulation of a design under a traffic trace.

Flows are segmented into flits. A flit pipelines one link stage per
cycle, every router on the path adds a fixed pipeline delay, and
vertical links cost one cycle, so an uncontended packet of F flits over
a path with S total stages and R routers is delivered at cycle
S + R * router_pipeline_cycles + verticals + (F - 1).

Two engines share these semantics:

- "flit": an exact cycle-stepped engine. Each link accepts at most one
  flit per cycle; when several packets want the same link the grant
  rotates round-robin over packet ids. Exact but only practical for
  small phases.
- "analytic" (default): a closed-form serialization bound. Phase
  latency is the maximum of every flow's uncontended delivery time and,
  per link, the time to drain the link's total flit demand between the
  earliest possible lead-in and lead-out. Identical to the flit engine
  whenever a phase has a single flow, and never below the uncontended
  closed form.

Per phase, compute latency (kernel FLOPs over the executing chiplets'
throughput, weight loads bounded by DRAM bandwidth) overlaps with
communication via max(); a no-overlap mode adds them instead. Phases
that share a timestamp form concurrent chains: the block latency is the
maximum over chains of the summed chain latencies, which makes the
parallel block formulation strictly faster than its serialized clone
whenever both chains take time.

Energy is counted per flow as bits times (per-mm link energy times
physical path length plus per-router-hop energy times routers), plus
a per-bit constant for every vertical traversal. The defaults are
placeholder configuration constants; meaningful comparisons are ratio
based.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .noi import Design, Route
from .platform import Platform
from .traffic import TrafficPhase, TrafficTrace


@dataclass(frozen=True)
class CostModel:
    clock_hz: float = 1.2e9
    router_pipeline_cycles: int = 2
    link_stage_cycles_per_stage: int = 1
    vertical_link_cycles: int = 1
    flit_bits: int = 128
    energy_per_bit_per_mm: float = 1.0e-12
    energy_per_bit_per_router_hop: float = 0.5e-12
    vertical_energy_per_bit: float = 0.1e-12
    sm_flops_per_cycle_per_core: float = 64.0
    reram_mvm_cycles_per_crossbar_op: float = 10.0
    dram_bytes_per_cycle: float = 64.0
    overlap: str = "max"        # "max" or "sum"
    engine: str = "analytic"    # "analytic" or "flit"

    def __post_init__(self):
        for name in ("clock_hz", "router_pipeline_cycles", "flit_bits",
                     "vertical_link_cycles", "link_stage_cycles_per_stage",
                     "sm_flops_per_cycle_per_core",
                     "reram_mvm_cycles_per_crossbar_op",
                     "dram_bytes_per_cycle"):
            if getattr(self, name) <= 0:
                raise ValueError(f"CostModel.{name} must be positive")
        if self.overlap not in ("max", "sum"):
            raise ValueError("overlap must be 'max' or 'sum'")
        if self.engine not in ("analytic", "flit"):
            raise ValueError("engine must be 'analytic' or 'flit'")

    def flits_for(self, nbytes: int) -> int:
        return max(1, math.ceil(nbytes * 8 / self.flit_bits))


def closed_form_latency(route: Route, flits: int, costs: CostModel,
                        design: Design) -> int:
    """Uncontended delivery cycle of one packet."""
    stages = sum(design.link_stages(k) for k in route.links if k[0] == "p")
    return (stages * costs.link_stage_cycles_per_stage
            + route.router_count * costs.router_pipeline_cycles
            + route.vertical_count * costs.vertical_link_cycles
            + (flits - 1))


def _segments(route: Route, design: Design,
              costs: CostModel) -> list[tuple[tuple, int, int]]:
    """Per link on the path: (key, traverse cycles, delay after traverse).

    The delay after a segment covers the router pipeline between it and
    the next segment (or the final router after the last planar link).
    A destination-side vertical hop has nothing after it.
    """
    segs = []
    for i, key in enumerate(route.links):
        if key[0] == "v":
            traverse = costs.vertical_link_cycles
            src_side = i == 0 and route.src_vertical
            after = costs.router_pipeline_cycles if src_side else 0
        else:
            traverse = design.link_stages(key) * costs.link_stage_cycles_per_stage
            after = costs.router_pipeline_cycles
        segs.append((key, traverse, after))
    return segs


def _base_ready(route: Route, costs: CostModel) -> int:
    """Cycle at which flits may request the first path segment."""
    if route.src_vertical:
        return 0  # stacked source crosses the vertical before any router
    return costs.router_pipeline_cycles


def _analytic_phase(packets: list[tuple[Route, int]], design: Design,
                    costs: CostModel) -> int:
    """Serialization-bound communication latency for one phase."""
    latest = 0
    demand: dict[tuple, int] = {}
    lead: dict[tuple, int] = {}
    tail: dict[tuple, int] = {}
    for route, flits in packets:
        segs = _segments(route, design, costs)
        t = _base_ready(route, costs)
        grants = []
        for key, traverse, after in segs:
            grants.append((key, t))
            t += traverse + after
        solo = t + (flits - 1)
        latest = max(latest, solo)
        head_delivery = t
        for key, g in grants:
            demand[key] = demand.get(key, 0) + flits
            if key not in lead or g < lead[key]:
                lead[key] = g
            rest = head_delivery - g
            if key not in tail or rest < tail[key]:
                tail[key] = rest
    for key, flits_total in demand.items():
        latest = max(latest, lead[key] + (flits_total - 1) + tail[key])
    return latest


def _flit_phase(packets: list[tuple[Route, int]], design: Design,
                costs: CostModel) -> int:
    """Exact cycle-stepped engine: one flit per link per cycle,
    round-robin grants over packet ids."""
    if not packets:
        return 0
    plan = []
    for pid, (route, flits) in enumerate(packets):
        segs = _segments(route, design, costs)
        base = _base_ready(route, costs)
        ready = [[] for _ in segs]
        ready[0] = [base] * flits
        plan.append({"segs": segs, "ready": ready,
                     "granted": [0] * len(segs), "flits": flits})
    link_keys = sorted({seg[0] for p in plan for seg in p["segs"]})
    rr_pointer = {k: -1 for k in link_keys}
    remaining = sum(p["flits"] * len(p["segs"]) for p in plan)
    finish = 0
    t = 0
    guard = 0
    while remaining > 0:
        guard += 1
        if guard > 10_000_000:
            raise RuntimeError("flit engine failed to converge")
        progressed = False
        for key in link_keys:
            cands = []
            for pid, p in enumerate(plan):
                for si, (skey, traverse, after) in enumerate(p["segs"]):
                    if skey != key:
                        continue
                    g = p["granted"][si]
                    if g < p["flits"] and len(p["ready"][si]) > g \
                            and p["ready"][si][g] <= t:
                        cands.append((pid, si, traverse, after))
                    break
            if not cands:
                continue
            last = rr_pointer[key]
            cands.sort()
            pick = None
            for c in cands:
                if c[0] > last:
                    pick = c
                    break
            if pick is None:
                pick = cands[0]
            pid, si, traverse, after = pick
            rr_pointer[key] = pid
            p = plan[pid]
            p["granted"][si] += 1
            done_at = t + traverse + after
            if si + 1 < len(p["segs"]):
                p["ready"][si + 1].append(done_at)
            else:
                finish = max(finish, done_at)
            remaining -= 1
            progressed = True
        t += 1
        if not progressed and remaining > 0 and t > 50_000_000:
            raise RuntimeError("flit engine stalled")
    return finish


# -- reports -------------------------------------------------------------


@dataclass
class PhaseReport:
    t: int
    label: str
    kind: str
    chain: int
    comm_cycles: int
    compute_cycles: int
    cycles: int
    flits: int
    bytes: int


@dataclass
class SimReport:
    phases: list[PhaseReport]
    end_to_end_cycles: int
    end_to_end_seconds: float
    energy_joules: float
    edp_joule_seconds: float
    hop_counts: dict[int, int]
    hop_mean: float
    per_kind_cycles: dict[str, int]
    peak_link_bytes: int
    flits_injected: int
    flits_delivered: int
    trace_digest: str
    engine: str
    clock_hz: float

    def to_json(self) -> str:
        doc = asdict(self)
        doc["hop_counts"] = {str(k): v for k, v in sorted(self.hop_counts.items())}
        doc["per_kind_cycles"] = dict(sorted(self.per_kind_cycles.items()))
        return json.dumps(doc, sort_keys=True, indent=2)


def _compute_cycles(phase: TrafficPhase, platform: Platform,
                    costs: CostModel) -> int:
    cycles = 0
    if phase.compute_flops > 0 and phase.compute_kind:
        if phase.compute_kind == "sm":
            per_chiplet = (costs.sm_flops_per_cycle_per_core
                           * platform.config.sm.tensor_cores)
        elif phase.compute_kind == "reram":
            rp = platform.config.reram
            per_op_flops = 2 * rp.crossbar_dim ** 2
            per_chiplet = (rp.crossbars_per_chiplet * per_op_flops
                           / costs.reram_mvm_cycles_per_crossbar_op)
        else:
            raise ValueError(f"unknown compute kind {phase.compute_kind!r}")
        if per_chiplet <= 0:
            raise ValueError("executing chiplet has zero throughput")
        cycles = math.ceil(phase.compute_flops
                           / (per_chiplet * max(1, phase.compute_units)))
    if phase.load_bytes > 0:
        cycles = max(cycles,
                     math.ceil(phase.load_bytes / costs.dram_bytes_per_cycle))
    return cycles


def simulate(design: Design, trace: TrafficTrace, platform: Platform,
             costs: CostModel = CostModel()) -> SimReport:
    """Simulate the trace on the design and report latency/energy/EDP."""
    phase_reports: list[PhaseReport] = []
    energy = 0.0
    hop_counts: dict[int, int] = {}
    hop_total = 0
    hop_flows = 0
    flits_injected = 0
    flits_delivered = 0
    link_load: dict[tuple[tuple, int], int] = {}

    engine = _flit_phase if costs.engine == "flit" else _analytic_phase

    for phase in trace.phases:
        packets: list[tuple[Route, int]] = []
        phase_flits = 0
        for flow in phase.flows:
            route = design.route(flow.src, flow.dst)
            flits = costs.flits_for(flow.bytes)
            packets.append((route, flits))
            phase_flits += flits
            bits = flow.bytes * 8
            energy += bits * (costs.energy_per_bit_per_mm * route.length_mm
                              + costs.energy_per_bit_per_router_hop
                              * route.router_count)
            energy += bits * costs.vertical_energy_per_bit * route.vertical_count
            hop_counts[route.hops] = hop_counts.get(route.hops, 0) + 1
            hop_total += route.hops
            hop_flows += 1
            for key in route.links:
                slot = (key, phase.t)
                link_load[slot] = link_load.get(slot, 0) + flow.bytes
        comm = engine(packets, design, costs) if packets else 0
        compute = _compute_cycles(phase, platform, costs)
        cycles = max(comm, compute) if costs.overlap == "max" else comm + compute
        flits_injected += phase_flits
        flits_delivered += phase_flits  # lossless network, every flit lands
        phase_reports.append(PhaseReport(
            t=phase.t, label=phase.label, kind=phase.kind, chain=phase.chain,
            comm_cycles=comm, compute_cycles=compute, cycles=cycles,
            flits=phase_flits, bytes=phase.total_bytes))

    # end to end: per timestamp, concurrent chains run side by side
    by_t: dict[int, dict[int, int]] = {}
    for pr in phase_reports:
        chains = by_t.setdefault(pr.t, {})
        chains[pr.chain] = chains.get(pr.chain, 0) + pr.cycles
    end_to_end = sum(max(chains.values()) for chains in by_t.values())

    per_kind: dict[str, int] = {}
    for pr in phase_reports:
        per_kind[pr.kind] = per_kind.get(pr.kind, 0) + pr.cycles

    seconds = end_to_end / costs.clock_hz
    return SimReport(
        phases=phase_reports,
        end_to_end_cycles=end_to_end,
        end_to_end_seconds=seconds,
        energy_joules=energy,
        edp_joule_seconds=energy * seconds,
        hop_counts=dict(sorted(hop_counts.items())),
        hop_mean=hop_total / hop_flows if hop_flows else 0.0,
        per_kind_cycles=per_kind,
        peak_link_bytes=max(link_load.values()) if link_load else 0,
        flits_injected=flits_injected,
        flits_delivered=flits_delivered,
        trace_digest=trace.digest(),
        engine=costs.engine,
        clock_hz=costs.clock_hz,
    )


def edp(report: SimReport) -> float:
    """Energy-delay product in joule seconds."""
    return report.energy_joules * report.end_to_end_seconds


def block_latencies(report: SimReport) -> dict[int, int]:
    """Per-timestamp latency with concurrent chains resolved."""
    by_t: dict[int, dict[int, int]] = {}
    for pr in report.phases:
        chains = by_t.setdefault(pr.t, {})
        chains[pr.chain] = chains.get(pr.chain, 0) + pr.cycles
    return {t: max(chains.values()) for t, chains in sorted(by_t.items())}


def compare(reports: list[SimReport]) -> list[dict]:
    """Latency/energy/EDP of each report relative to the first.

    Ratios are baseline over candidate, so values above 1.0 mean the
    candidate improves on the baseline.
    """
    if len(reports) < 2:
        raise ValueError("need at least two reports to compare")
    base = reports[0]
    for r in reports[1:]:
        if r.trace_digest != base.trace_digest:
            raise ValueError("reports cover different traces")

    def ratio(a: float, b: float) -> float:
        if b == 0:
            return 1.0 if a == 0 else math.inf
        return a / b

    rows = []
    for i, r in enumerate(reports):
        row = {
            "index": i,
            "latency_cycles": r.end_to_end_cycles,
            "energy_joules": r.energy_joules,
            "edp": r.edp_joule_seconds,
            "latency_speedup": ratio(base.end_to_end_cycles, r.end_to_end_cycles),
            "energy_gain": ratio(base.energy_joules, r.energy_joules),
            "edp_gain": ratio(base.edp_joule_seconds, r.edp_joule_seconds),
        }
        for kind in sorted(set(base.per_kind_cycles) | set(r.per_kind_cycles)):
            row[f"speedup_{kind}"] = ratio(base.per_kind_cycles.get(kind, 0),
                                           r.per_kind_cycles.get(kind, 0))
        rows.append(row)
    return rows

"""Inter-chiplet traffic generation for transformer inference.

Maps the kernel sequence of a model onto the platform and emits a
phase-ordered trace of (src, dst, bytes) flows:

- Embed: one-time token stream from a DRAM partition into the head of
  the ReRAM macro, relayed chiplet to chiplet along the macro.
- WeightLoad (per block): projection weights from each cluster's DRAM
  into its memory controller. K and V matrices are broadcast at cluster
  granularity (the multi-query variant loads the single shared head
  instead, exactly 1/h of the multi-head bytes); per-head Q slices
  continue to the streaming multiprocessor that owns the head.
- KQV: token broadcast from each controller to the SMs of its cluster,
  followed by the many-to-few return of per-head Q/K/V rows.
- Score: per-head K/V streams from the controller to the owning SM, the
  attention output back, then the concatenated block output handed off
  to the macro head. Decoder blocks of encoder-decoder models repeat
  this pattern once more for cross-attention and hand off after it.
- FeedForward: wide hidden activations relayed along the macro, and the
  block output fanned back to the memory controllers.

Byte totals are placement independent; placement only decides which
grid cell each endpoint occupies. With the parallel block formulation
the KQV/Score chain and the FeedForward phase of a block share one
timestamp and concurrent group.
"""

from __future__ import annotations

import csv
import hashlib
import io
import re
from dataclasses import dataclass, field

from .platform import KIND_RERAM, Placement, Platform
from .workload import (DEFAULT_COSTS, KernelCosts, ModelSpec, SequenceConfig,
                       kernel_sequence, projection_weight_bytes)

CHAIN_ATTENTION = 0
CHAIN_FEEDFORWARD = 1


@dataclass(frozen=True)
class Flow:
    src: str
    dst: str
    bytes: int

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"self-flow at {self.src}")
        if self.bytes <= 0:
            raise ValueError("flow bytes must be positive")


@dataclass
class TrafficPhase:
    t: int
    label: str
    kind: str
    block: int
    flows: list[Flow]
    concurrent_group: int | None = None
    chain: int = CHAIN_ATTENTION
    cross: bool = False
    compute_flops: int = 0
    compute_kind: str = ""      # "sm" or "reram"
    compute_units: int = 1
    load_bytes: int = 0         # largest per-DRAM load in this phase

    @property
    def total_bytes(self) -> int:
        return sum(f.bytes for f in self.flows)


@dataclass
class TrafficTrace:
    phases: list[TrafficPhase]
    model_name: str = ""
    seq_len: int = 0
    context_len: int = 0
    _merged: list | None = field(default=None, repr=False)

    def merged_pairs(self) -> list[tuple[int, dict[tuple[str, str], int]]]:
        """Flows aggregated per (src, dst) pair per distinct timestamp.

        Phases sharing a timestamp are concurrent and compete on the
        same links, so their flows are unioned.
        """
        if self._merged is None:
            merged: dict[int, dict[tuple[str, str], int]] = {}
            for phase in self.phases:
                pairs = merged.setdefault(phase.t, {})
                for f in phase.flows:
                    key = (f.src, f.dst)
                    pairs[key] = pairs.get(key, 0) + f.bytes
            self._merged = sorted(merged.items())
        return self._merged

    @property
    def timestamps(self) -> list[int]:
        return [t for t, _ in self.merged_pairs()]

    def total_bytes(self) -> int:
        return sum(p.total_bytes for p in self.phases)

    def bytes_by_phase(self) -> dict[str, int]:
        return {p.label: p.total_bytes for p in self.phases}

    def endpoints(self) -> set[str]:
        out: set[str] = set()
        for p in self.phases:
            for f in p.flows:
                out.add(f.src)
                out.add(f.dst)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "label", "src", "dst", "bytes"])
        for phase in self.phases:
            for f in phase.flows:
                writer.writerow([phase.t, phase.label, f.src, f.dst, f.bytes])
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()

    @classmethod
    def from_csv(cls, text: str) -> "TrafficTrace":
        """Rebuild a trace from its CSV form.

        Phase structure (timestamp, label, concurrency by shared
        timestamp) round-trips; compute metadata does not and is left
        zero.
        """
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != ["t", "label", "src", "dst", "bytes"]:
            raise ValueError(f"unexpected trace CSV header: {header}")
        phases: list[TrafficPhase] = []
        index: dict[tuple[int, str], TrafficPhase] = {}
        for row in reader:
            if not row:
                continue
            t, label, src, dst, nbytes = row
            t = int(t)
            phase = index.get((t, label))
            if phase is None:
                kind, block, cross = _parse_label(label)
                chain = (CHAIN_FEEDFORWARD if kind == "FeedForward"
                         else CHAIN_ATTENTION)
                phase = TrafficPhase(t, label, kind, block, [], chain=chain,
                                     cross=cross)
                index[(t, label)] = phase
                phases.append(phase)
            phase.flows.append(Flow(src, dst, int(nbytes)))
        by_t: dict[int, list[TrafficPhase]] = {}
        for p in phases:
            by_t.setdefault(p.t, []).append(p)
        for t, group in by_t.items():
            if len(group) > 1:
                for p in group:
                    p.concurrent_group = t
        return cls(phases)


_LABEL_RE = re.compile(r"^([A-Za-z]+)(-cross)?\[(\d+)\]$")


def _parse_label(label: str) -> tuple[str, int, bool]:
    m = _LABEL_RE.match(label)
    if not m:
        raise ValueError(f"malformed phase label {label!r}")
    return m.group(1), int(m.group(3)), m.group(2) is not None


# -- kernel-to-chiplet mapping ------------------------------------------


@dataclass(frozen=True)
class ClusterAssign:
    mc: str
    sms: tuple[str, ...]
    dram: str


@dataclass
class KernelMapping:
    """Which chiplets execute which kernel kind."""

    clusters: list[ClusterAssign]
    head_owner: list[tuple[int, str]]  # per head: (cluster index, sm id)
    reram: tuple[str, ...]             # macro members in region order

    def chiplets_for(self, kind: str) -> set[str]:
        if kind in ("Embed", "FeedForward"):
            return set(self.reram)
        if kind == "WeightLoad":
            return ({c.dram for c in self.clusters}
                    | {c.mc for c in self.clusters})
        sms = {sm for _, sm in self.head_owner}
        return sms | {c.mc for c in self.clusters}

    def heads_in_cluster(self, ci: int) -> list[int]:
        return [h for h, (c, _) in enumerate(self.head_owner) if c == ci]

    @property
    def active_clusters(self) -> list[int]:
        return sorted({c for c, _ in self.head_owner})


def default_mapping(platform: Platform, model: ModelSpec) -> KernelMapping:
    """Round-robin head distribution over SM clusters; feed-forward
    partitions follow the macro's curve order."""
    clusters = [ClusterAssign(mc, sms, dram)
                for mc, sms, dram in platform.clusters]
    if not clusters or not platform.by_kind[KIND_RERAM]:
        raise ValueError("platform must provide at least one cluster and "
                         "one ReRAM chiplet")
    n_c = len(clusters)
    within = [0] * n_c
    head_owner: list[tuple[int, str]] = []
    for head in range(model.num_heads):
        ci = head % n_c
        sms = clusters[ci].sms
        head_owner.append((ci, sms[within[ci] % len(sms)]))
        within[ci] += 1
    return KernelMapping(clusters=clusters, head_owner=head_owner,
                         reram=tuple(platform.by_kind[KIND_RERAM]))


def macro_order(platform: Platform, placement: Placement) -> list[str]:
    """ReRAM macro members ordered along the curve through the region."""
    occupant = {cell: cid for cid, cell in placement.cells.items()}
    order = []
    for cell in platform.reram_region:
        cid = occupant.get(cell)
        if cid is None:
            continue
        if platform.kind_of(cid) != KIND_RERAM:
            raise ValueError(
                f"cell {cell} of the macro region holds {cid}, not ReRAM")
        order.append(cid)
    if len(order) != len(platform.by_kind[KIND_RERAM]):
        raise ValueError("ReRAM chiplets strayed outside the macro region")
    return order


# -- trace generation ----------------------------------------------------


def generate_trace(platform: Platform, placement: Placement,
                   mapping: KernelMapping, model: ModelSpec,
                   seq: SequenceConfig, costs: KernelCosts = DEFAULT_COSTS,
                   tiling_factor: int = 1) -> TrafficTrace:
    """Phase-ordered traffic trace for one inference pass."""
    kernels = kernel_sequence(model, seq, costs)
    by_block: dict[int, dict] = {}
    embed_kernel = None
    for k in kernels:
        if k.kind == "Embed":
            embed_kernel = k
            continue
        slot = by_block.setdefault(k.block_index, {})
        key = (k.kind, k.cross_attention)
        slot[key] = k

    d, h, b = model.d_model, model.num_heads, model.bytes_per_value
    n, l = seq.seq_len, seq.context_len
    head_d = model.head_dim
    proj = projection_weight_bytes(model)
    macro = macro_order(platform, placement)
    clusters = mapping.clusters
    owners = sorted({sm for _, sm in mapping.head_owner})
    n_units = max(1, len(owners))

    phases: list[TrafficPhase] = []
    t = 0

    def add(label, kind, block, flows, *, group=None, chain=CHAIN_ATTENTION,
            cross=False, flops=0, ckind="", units=1, load=0):
        phases.append(TrafficPhase(
            t, label, kind, block, [f for f in flows if f.bytes > 0],
            concurrent_group=group, chain=chain, cross=cross,
            compute_flops=flops, compute_kind=ckind, compute_units=units,
            load_bytes=load))

    # one-time embedding: DRAM feed into the macro head, then relay
    token_bytes = n * d * b
    flows = []
    if token_bytes > 0:
        feed_dram = clusters[0].dram
        flows.append(Flow(feed_dram, macro[0], token_bytes))
        for a, z in zip(macro, macro[1:]):
            flows.append(Flow(a, z, token_bytes))
    add("Embed[0]", "Embed", 0, flows, flops=embed_kernel.flops,
        ckind="reram", units=len(macro), load=token_bytes)

    for block in sorted(by_block):
        group = by_block[block]
        kqv = group[("KQV", False)]
        score = group[("Score", False)]
        outproj = group[("OutProj", False)]
        ff = group[("FeedForward", False)]
        ln = group[("LayerNorm", False)]
        cross_kqv = group.get(("KQV", True))
        cross_score = group.get(("Score", True))
        parallel = kqv.concurrent_group is not None
        gid = block if parallel else None

        # weight load: per-cluster DRAM -> MC, per-head Q slice MC -> SM
        t += 1
        flows = []
        slice_bytes = d * head_d * b
        max_load = 0
        for ci, cl in enumerate(clusters):
            heads = mapping.heads_in_cluster(ci)
            into_mc = (len(heads) * 2 * slice_bytes  # Q and O slices
                       + proj["k"] + proj["v"])
            flows.append(Flow(cl.dram, cl.mc, into_mc))
            max_load = max(max_load, into_mc)
        for head, (ci, sm) in enumerate(mapping.head_owner):
            flows.append(Flow(clusters[ci].mc, sm, slice_bytes))
        add(f"WeightLoad[{block}]", "WeightLoad", block, flows, load=max_load)

        # KQV: token broadcast out, per-head projections back. In the
        # parallel formulation the whole KQV/Score/FeedForward group of
        # the block shares this timestamp.
        t += 1
        flows = []
        for ci in mapping.active_clusters:
            cl = clusters[ci]
            for sm in cl.sms:
                flows.append(Flow(cl.mc, sm, token_bytes))
        for head, (ci, sm) in enumerate(mapping.head_owner):
            flows.append(Flow(sm, clusters[ci].mc, 3 * n * head_d * b))
        add(f"KQV[{block}]", "KQV", block, flows, group=gid,
            flops=kqv.flops, ckind="sm", units=n_units)

        # score: K/V streams per head, attention output back, hand-off
        def score_flows(handoff: bool) -> list[Flow]:
            out = []
            for head, (ci, sm) in enumerate(mapping.head_owner):
                mc = clusters[ci].mc
                out.append(Flow(mc, sm, 2 * l * head_d * b * tiling_factor))
                out.append(Flow(sm, mc, n * head_d * b))
            if handoff:
                for ci in mapping.active_clusters:
                    share = n * head_d * b * len(mapping.heads_in_cluster(ci))
                    out.append(Flow(clusters[ci].mc, macro[0], share))
            return out

        if not parallel:
            t += 1
        self_handoff = cross_score is None
        add(f"Score[{block}]", "Score", block, score_flows(self_handoff),
            group=gid, flops=score.flops + outproj.flops + ln.flops,
            ckind="sm", units=n_units)

        if cross_score is not None:
            if not parallel:
                t += 1
            add(f"Score-cross[{block}]", "Score", block, score_flows(True),
                group=gid, cross=True,
                flops=cross_score.flops + cross_kqv.flops,
                ckind="sm", units=n_units)

        # feed forward along the macro, output fanned back to the MCs
        if not parallel:
            t += 1
        flows = []
        hidden = n * 4 * d * b
        for a, z in zip(macro, macro[1:]):
            flows.append(Flow(a, z, hidden))
        n_mc = len(clusters)
        base, rem = divmod(token_bytes, n_mc)
        for i, cl in enumerate(clusters):
            share = base + (1 if i < rem else 0)
            flows.append(Flow(macro[-1], cl.mc, share))
        add(f"FeedForward[{block}]", "FeedForward", block, flows, group=gid,
            chain=CHAIN_FEEDFORWARD, flops=ff.flops, ckind="reram",
            units=len(macro))

    return TrafficTrace(phases, model_name=model.name, seq_len=n,
                        context_len=l)

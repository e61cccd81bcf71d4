"""Heterogeneous chiplet platform construction.

Builds the chiplet inventory (streaming multiprocessors, memory
controllers, DRAM partitions, resistive-memory compute chiplets), the
interposer grid, the contiguous region reserved for the ReRAM macro,
and the canonical cell assignment. Supports planar integration (all
chiplets on the interposer) and stacked integration (each DRAM mounted
directly above its memory controller, sharing that cell on layer 1).

The default allocation keeps an 8:1 SM to MC ratio, one DRAM per MC,
and gives the remainder to the ReRAM macro. The MC count is capped at
the number of DRAM partition channels (8 by default), which yields the
64/8/8/20 split for a 100-chiplet system.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .noi import Cell, Design
from .sfc import sfc_order

KIND_SM = "SM"
KIND_MC = "MC"
KIND_DRAM = "DRAM"
KIND_RERAM = "ReRAM"
INTEGRATIONS = ("planar-2.5D", "stacked-3D")


@dataclass(frozen=True)
class SMParams:
    tensor_cores: int = 10
    scratchpad_bytes: int = 4 * 2 ** 20


@dataclass(frozen=True)
class MCParams:
    ports: int = 8


@dataclass(frozen=True)
class DRAMParams:
    partition_bandwidth_bytes_per_cycle: int = 64


@dataclass(frozen=True)
class ReRAMParams:
    tiles: int = 16
    pes_per_tile: int = 96
    crossbar_dim: int = 128
    cell_bits: int = 2

    @property
    def crossbars_per_chiplet(self) -> int:
        return self.tiles * self.pes_per_tile


def _check_positive(params) -> None:
    for name, value in vars(params).items():
        if value <= 0:
            raise ValueError(f"{type(params).__name__}.{name} must be positive")


@dataclass(frozen=True)
class SystemConfig:
    """Platform-level knobs: sizes, geometry, timing constants."""

    total_chiplets: int
    sm_mc_ratio: int = 8
    integration: str = "planar-2.5D"
    grid_rows: int | None = None
    grid_cols: int | None = None
    chiplet_area_mm2: float = 10.0
    link_segment_mm: float = 1.55
    clock_hz: float = 1.2e9
    sfc_kind: str = "hilbert"
    mc_max: int = 8
    reram_min: int = 1
    counts: dict | None = None  # explicit {"sm","mc","dram","reram"} override
    sm: SMParams = field(default_factory=SMParams)
    mc: MCParams = field(default_factory=MCParams)
    dram: DRAMParams = field(default_factory=DRAMParams)
    reram: ReRAMParams = field(default_factory=ReRAMParams)

    def __post_init__(self):
        if self.integration not in INTEGRATIONS:
            raise ValueError(f"unknown integration {self.integration!r}")
        if self.sm_mc_ratio < 1:
            raise ValueError("sm_mc_ratio must be >= 1")
        if self.total_chiplets < 1:
            raise ValueError("total_chiplets must be positive")
        for p in (self.sm, self.mc, self.dram, self.reram):
            _check_positive(p)

    @property
    def chiplet_side_mm(self) -> float:
        return math.sqrt(self.chiplet_area_mm2)


@dataclass(frozen=True)
class Chiplet:
    id: str
    kind: str
    layer: int  # 0 = interposer, 1 = stacked


@dataclass
class Placement:
    """Assignment of chiplet ids to grid cells (stacked DRAMs share
    their controller's cell on layer 1)."""

    cells: dict[str, Cell]

    def swap(self, a: str, b: str) -> "Placement":
        cells = dict(self.cells)
        cells[a], cells[b] = cells[b], cells[a]
        return Placement(cells)


@dataclass
class Platform:
    """Immutable chiplet inventory with canonical geometry."""

    config: SystemConfig
    chiplets: dict[str, Chiplet]
    by_kind: dict[str, list[str]]
    geometry: dict[str, Cell]
    vertical_pairs: list[tuple[str, str]]  # (dram id, mc id)
    reram_region: list[Cell]               # region cells in curve order
    clusters: list[tuple[str, tuple[str, ...], str]]  # (mc, sms, dram)
    grid_rows: int
    grid_cols: int

    @property
    def grid(self) -> tuple[int, int]:
        return (self.grid_rows, self.grid_cols)

    def kind_of(self, chiplet_id: str) -> str:
        return self.chiplets[chiplet_id].kind

    def counts(self) -> dict[str, int]:
        return {k: len(v) for k, v in self.by_kind.items()}

    @property
    def stacked(self) -> bool:
        return self.config.integration == "stacked-3D"

    def vertical_map(self) -> dict[str, str]:
        return dict(self.vertical_pairs)

    def canonical_placement(self) -> Placement:
        return Placement(dict(self.geometry))


def allocate_roles(config: SystemConfig) -> dict[str, int]:
    """Chiplet count per role for a given system size.

    With no explicit override: pick the largest MC count m (capped at
    mc_max) such that ratio*m SMs, m MCs and m DRAMs still leave at
    least reram_min chiplets for the ReRAM macro.
    """
    if config.counts is not None:
        c = {k: int(config.counts[k]) for k in ("sm", "mc", "dram", "reram")}
        if min(c.values()) < 1:
            raise ValueError("explicit counts must all be >= 1")
        if c["dram"] != c["mc"]:
            raise ValueError("exactly one DRAM per MC is required")
        if sum(c.values()) != config.total_chiplets:
            raise ValueError("explicit counts do not sum to total_chiplets")
        return c
    per_mc = config.sm_mc_ratio + 2
    m = min(config.mc_max, (config.total_chiplets - config.reram_min) // per_mc)
    if m < 1:
        raise ValueError(
            f"total_chiplets={config.total_chiplets} too small for one "
            f"cluster plus {config.reram_min} ReRAM at ratio "
            f"{config.sm_mc_ratio}:1")
    sm = config.sm_mc_ratio * m
    reram = config.total_chiplets - sm - 2 * m
    return {"sm": sm, "mc": m, "dram": m, "reram": reram}


def _region_shape(n_reram: int, rows: int, cols: int) -> tuple[int, int]:
    rr = max(1, math.isqrt(n_reram))
    rc = math.ceil(n_reram / rr)
    if rc > cols:
        rc = cols
        rr = math.ceil(n_reram / rc)
    if rr > rows:
        raise ValueError(
            f"ReRAM region for {n_reram} chiplets does not fit a "
            f"{rows}x{cols} grid")
    return rr, rc


def build_platform(config: SystemConfig) -> Platform:
    """Construct the platform with its canonical cell assignment.

    The ReRAM region occupies the top-left corner, ordered by the
    configured space-filling curve; the remaining cells are consumed
    row-major in cluster-sized chunks (8 SMs around a centrally placed
    MC, plus the DRAM next to the MC when planar).
    """
    roles = allocate_roles(config)
    n_sm, n_mc, n_dram, n_re = (roles["sm"], roles["mc"], roles["dram"],
                                roles["reram"])
    stacked = config.integration == "stacked-3D"

    chiplets: dict[str, Chiplet] = {}
    by_kind: dict[str, list[str]] = {KIND_SM: [], KIND_MC: [], KIND_DRAM: [],
                                     KIND_RERAM: []}
    for kind, count in ((KIND_SM, n_sm), (KIND_MC, n_mc),
                        (KIND_DRAM, n_dram), (KIND_RERAM, n_re)):
        for i in range(count):
            cid = f"{kind}{i}"
            layer = 1 if (stacked and kind == KIND_DRAM) else 0
            chiplets[cid] = Chiplet(cid, kind, layer)
            by_kind[kind].append(cid)

    layer0 = sum(1 for c in chiplets.values() if c.layer == 0)

    # provisional grid, enlarged if the rectangular region wastes cells
    def grid_for(cells_needed: int) -> tuple[int, int]:
        cols = config.grid_cols or math.ceil(math.sqrt(cells_needed))
        rows = config.grid_rows or math.ceil(cells_needed / cols)
        return rows, cols

    rows, cols = grid_for(layer0)
    rr, rc = _region_shape(n_re, rows, cols)
    waste = rr * rc - n_re
    if waste and config.grid_rows is None and config.grid_cols is None:
        rows, cols = grid_for(layer0 + waste)
        rr, rc = _region_shape(n_re, rows, cols)
        waste = rr * rc - n_re
    if rows * cols < layer0 + waste:
        raise ValueError(
            f"grid {rows}x{cols} cannot hold {layer0} chiplets plus "
            f"{waste} reserved region cells")

    region = [(r, c) for (r, c) in sfc_order(rr, rc, config.sfc_kind)]
    region_set = {(r, c) for r in range(rr) for c in range(rc)}

    geometry: dict[str, Cell] = {}
    for cid, cell in zip(by_kind[KIND_RERAM], region):
        geometry[cid] = cell

    free = [(r, c) for r in range(rows) for c in range(cols)
            if (r, c) not in region_set]
    sm_split = [n_sm // n_mc + (1 if i < n_sm % n_mc else 0)
                for i in range(n_mc)]
    sm_bounds = [0]
    for count in sm_split:
        sm_bounds.append(sm_bounds[-1] + count)
    clusters: list[tuple[str, tuple[str, ...], str]] = []
    vertical_pairs: list[tuple[str, str]] = []
    pos = 0
    for ci in range(n_mc):
        chunk_size = sm_split[ci] + 1 + (0 if stacked else 1)
        chunk = free[pos:pos + chunk_size]
        pos += chunk_size
        if len(chunk) < chunk_size:
            raise ValueError("grid too small for cluster layout")
        centroid_r = sum(r for r, _ in chunk) / len(chunk)
        centroid_c = sum(c for _, c in chunk) / len(chunk)
        mc_cell = min(chunk, key=lambda cell: (abs(cell[0] - centroid_r)
                                               + abs(cell[1] - centroid_c),
                                               cell))
        rest = [cell for cell in chunk if cell != mc_cell]
        mc_id = by_kind[KIND_MC][ci]
        dram_id = by_kind[KIND_DRAM][ci]
        geometry[mc_id] = mc_cell
        if stacked:
            geometry[dram_id] = mc_cell
            vertical_pairs.append((dram_id, mc_id))
            sm_cells = rest
        else:
            dram_cell = min(rest, key=lambda cell: (abs(cell[0] - mc_cell[0])
                                                    + abs(cell[1] - mc_cell[1]),
                                                    cell))
            geometry[dram_id] = dram_cell
            sm_cells = [cell for cell in rest if cell != dram_cell]
        sm_ids = by_kind[KIND_SM][sm_bounds[ci]:sm_bounds[ci + 1]]
        for sid, cell in zip(sm_ids, sm_cells):
            geometry[sid] = cell
        clusters.append((mc_id, tuple(sm_ids), dram_id))

    return Platform(config=config, chiplets=chiplets, by_kind=by_kind,
                    geometry=geometry, vertical_pairs=vertical_pairs,
                    reram_region=region, clusters=clusters,
                    grid_rows=rows, grid_cols=cols)


def place_initial(platform: Platform, config: SystemConfig,
                  seed: int) -> Placement:
    """Seeded initial placement.

    ReRAM chiplets stay on consecutive curve positions inside the macro
    region (shuffled along it), clusters keep their MC centrally with
    its own SMs around it, and the seed permutes which chunk each
    cluster occupies and how SMs are arranged inside their chunk.
    """
    rng = random.Random(seed)
    cells = dict(platform.geometry)

    reram_ids = platform.by_kind[KIND_RERAM]
    slots = [platform.geometry[cid] for cid in reram_ids]
    shuffled = list(reram_ids)
    rng.shuffle(shuffled)
    for cid, cell in zip(shuffled, slots):
        cells[cid] = cell

    # permute clusters over cluster chunks
    chunk_slots = []
    for mc_id, sm_ids, dram_id in platform.clusters:
        chunk_slots.append({
            "mc": platform.geometry[mc_id],
            "dram": platform.geometry[dram_id],
            "sms": [platform.geometry[s] for s in sm_ids],
        })
    order = list(range(len(platform.clusters)))
    rng.shuffle(order)
    for slot_idx, cluster_idx in enumerate(order):
        mc_id, sm_ids, dram_id = platform.clusters[cluster_idx]
        slot = chunk_slots[slot_idx]
        cells[mc_id] = slot["mc"]
        cells[dram_id] = slot["dram"]
        sm_cells = list(slot["sms"])
        rng.shuffle(sm_cells)
        for sid, cell in zip(sm_ids, sm_cells):
            cells[sid] = cell
    return Placement(cells)


def mesh_design(platform: Platform,
                placement: Placement | None = None) -> Design:
    """Reference design: a 2-D mesh over all occupied cells.

    One router per layer-0 chiplet, links between every pair of
    occupied 4-neighbor cells, stacked DRAMs attached by vertical links
    to their controller's router.
    """
    if placement is None:
        placement = platform.canonical_placement()
    vertical = platform.vertical_map()
    occupied = {cell for cid, cell in placement.cells.items()
                if cid not in vertical}
    links = []
    for (r, c) in occupied:
        if (r, c + 1) in occupied:
            links.append(((r, c), (r, c + 1)))
        if (r + 1, c) in occupied:
            links.append(((r + 1, c), (r, c)))
    return Design(grid=platform.grid,
                  cell_mm=platform.config.chiplet_side_mm,
                  segment_mm=platform.config.link_segment_mm,
                  placement=placement.cells, links=links, vertical=vertical)


def platform_to_dot(platform: Platform) -> str:
    """Canonical platform layout as a DOT graph (mesh reference links)."""
    from .noi import design_to_dot
    return design_to_dot(mesh_design(platform), platform)

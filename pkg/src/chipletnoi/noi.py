"""Interposer network designs: routing, link statistics, validation.

A design is a placement of chiplets onto grid cells plus a set of
router-to-router links. Routers sit at occupied grid cells, one per
cell; a vertically stacked DRAM chiplet has no router of its own and
reaches the network through a one-cycle vertical link to the router of
the memory controller beneath it.

Routing is deterministic minimal-hop breadth-first search with ties
broken by the lexicographically smallest router-id (cell) sequence.
Link utilization for a traffic trace follows the flow-conservation
identity: the sum of per-link utilizations in a phase equals the sum
over flows of bytes times path hop count. Means and standard deviations
are population statistics over all links, zero-utilization links
included, accumulated with exactly-rounded summation so that results
are reproducible bit for bit.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

if TYPE_CHECKING:
    from .platform import Platform
    from .traffic import TrafficTrace

Cell = tuple[int, int]
LinkKey = tuple  # ("p", r1, c1, r2, c2) or ("v", dram_id)


def planar_key(a: Cell, b: Cell) -> LinkKey:
    if b < a:
        a, b = b, a
    return ("p", a[0], a[1], b[0], b[1])


def vertical_key(dram_id: str) -> LinkKey:
    return ("v", dram_id)


@dataclass(frozen=True)
class Route:
    """Resolved path for one chiplet pair."""

    cells: tuple[Cell, ...]
    links: tuple[LinkKey, ...]
    stages_total: int
    router_count: int
    vertical_count: int
    length_mm: float
    src_vertical: bool = False  # first link is the source's vertical hop

    @property
    def hops(self) -> int:
        return len(self.links)


class Design:
    """One candidate interposer design (placement plus link set)."""

    def __init__(self, grid: tuple[int, int], cell_mm: float, segment_mm: float,
                 placement: dict[str, Cell], links: Iterable[tuple[Cell, Cell]],
                 vertical: dict[str, str] | None = None):
        self.grid = grid
        self.cell_mm = float(cell_mm)
        self.segment_mm = float(segment_mm)
        self.placement = dict(placement)
        self.vertical = dict(vertical or {})
        # layer-0 routers: cells of chiplets that are not stacked
        self.routers = frozenset(
            cell for cid, cell in self.placement.items()
            if cid not in self.vertical)
        self.links = frozenset(
            planar_key(a, b) for a, b in links)
        for key in self.links:
            a, b = (key[1], key[2]), (key[3], key[4])
            if a == b:
                raise ValueError("self-loop link")
        self._adj: dict[Cell, list[Cell]] = {c: [] for c in self.routers}
        for key in self.links:
            a, b = (key[1], key[2]), (key[3], key[4])
            if a in self._adj and b in self._adj:
                self._adj[a].append(b)
                self._adj[b].append(a)
        for nbrs in self._adj.values():
            nbrs.sort()
        self._paths: dict[Cell, dict[Cell, tuple[Cell, ...]]] = {}
        self._routes: dict[tuple[str, str], Route] = {}

    # -- geometry ----------------------------------------------------

    def link_length_mm(self, key: LinkKey) -> float:
        if key[0] == "v":
            return 0.0
        dr = key[1] - key[3]
        dc = key[2] - key[4]
        return math.hypot(dr, dc) * self.cell_mm

    def link_stages(self, key: LinkKey) -> int:
        if key[0] == "v":
            return 1
        return max(1, math.ceil(self.link_length_mm(key) / self.segment_mm))

    def all_link_keys(self) -> list[LinkKey]:
        keys = sorted(self.links)
        keys.extend(("v", d) for d in sorted(self.vertical))
        return keys

    @property
    def planar_link_count(self) -> int:
        return len(self.links)

    # -- routing -----------------------------------------------------

    def router_cell(self, chiplet_id: str) -> Cell:
        """Cell of the router this chiplet's traffic enters at."""
        if chiplet_id in self.vertical:
            return self.placement[self.vertical[chiplet_id]]
        return self.placement[chiplet_id]

    def _paths_from(self, src: Cell) -> dict[Cell, tuple[Cell, ...]]:
        """Lexicographically smallest shortest paths from one router."""
        cached = self._paths.get(src)
        if cached is not None:
            return cached
        settled: dict[Cell, tuple[Cell, ...]] = {}
        heap: list[tuple[int, tuple[Cell, ...]]] = [(0, (src,))]
        while heap:
            dist, path = heapq.heappop(heap)
            node = path[-1]
            if node in settled:
                continue
            settled[node] = path
            for nb in self._adj[node]:
                if nb not in settled:
                    heapq.heappush(heap, (dist + 1, path + (nb,)))
        self._paths[src] = settled
        return settled

    def route(self, src_id: str, dst_id: str) -> Route:
        """Deterministic route between two chiplets."""
        cached = self._routes.get((src_id, dst_id))
        if cached is not None:
            return cached
        src_cell = self.router_cell(src_id)
        dst_cell = self.router_cell(dst_id)
        path = self._paths_from(src_cell).get(dst_cell)
        if path is None:
            raise ValueError(
                f"no route between {src_id} at {src_cell} and "
                f"{dst_id} at {dst_cell}: design is disconnected")
        links: list[LinkKey] = []
        vert = 0
        src_vertical = src_id in self.vertical
        if src_vertical:
            links.append(vertical_key(src_id))
            vert += 1
        stages = 0
        mm = 0.0
        for a, b in zip(path, path[1:]):
            key = planar_key(a, b)
            links.append(key)
            stages += self.link_stages(key)
            mm += self.link_length_mm(key)
        if dst_id in self.vertical:
            links.append(vertical_key(dst_id))
            vert += 1
        route = Route(cells=path, links=tuple(links), stages_total=stages,
                      router_count=len(path), vertical_count=vert,
                      length_mm=mm, src_vertical=src_vertical)
        self._routes[(src_id, dst_id)] = route
        return route

    # -- derived designs ----------------------------------------------

    def _link_cells(self) -> list[tuple[Cell, Cell]]:
        return [((k[1], k[2]), (k[3], k[4])) for k in self.links]

    def with_links(self, links: Iterable[tuple[Cell, Cell]]) -> "Design":
        return Design(self.grid, self.cell_mm, self.segment_mm,
                      self.placement, links, self.vertical)

    def with_placement(self, placement: dict[str, Cell]) -> "Design":
        return Design(self.grid, self.cell_mm, self.segment_mm,
                      placement, self._link_cells(), self.vertical)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "grid": list(self.grid),
            "cell_mm": self.cell_mm,
            "segment_mm": self.segment_mm,
            "placement": {cid: list(cell)
                          for cid, cell in sorted(self.placement.items())},
            "links": sorted([k[1], k[2], k[3], k[4]] for k in self.links),
            "vertical": dict(sorted(self.vertical.items())),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Design":
        links = [((r1, c1), (r2, c2)) for r1, c1, r2, c2 in doc["links"]]
        placement = {cid: tuple(cell) for cid, cell in doc["placement"].items()}
        return cls(tuple(doc["grid"]), doc["cell_mm"], doc["segment_mm"],
                   placement, links, doc.get("vertical", {}))

    def key(self) -> tuple:
        """Canonical identity, usable for dedup across search runs."""
        return (tuple(sorted(self.placement.items())), tuple(sorted(self.links)))


# -- link statistics ---------------------------------------------------


@dataclass
class LinkStats:
    """Per-link traffic utilization of one design under one trace."""

    link_keys: list[LinkKey]
    timestamps: list[int]
    u: list[list[int]]          # one row per timestamp, one column per link
    mu_t: list[float]
    sigma_t: list[float]
    mu: float
    sigma: float
    max_u: int

    @property
    def link_count(self) -> int:
        return len(self.link_keys)


def _population_stats(values: list[int]) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return 0.0, 0.0
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


def utilization(design: Design, trace: "TrafficTrace") -> LinkStats:
    """Link utilization vectors and their population statistics.

    Phases that share a timestamp (concurrent groups) are merged into a
    single flow set before accumulation. Time averages are unweighted
    means over the distinct timestamps.
    """
    keys = design.all_link_keys()
    index = {k: i for i, k in enumerate(keys)}
    p = len(keys)
    timestamps: list[int] = []
    rows: list[list[int]] = []
    mu_t: list[float] = []
    sigma_t: list[float] = []
    max_u = 0
    for t, pairs in trace.merged_pairs():
        vec = [0] * p
        for (src, dst), nbytes in pairs.items():
            for key in design.route(src, dst).links:
                vec[index[key]] += nbytes
        timestamps.append(t)
        rows.append(vec)
        m, s = _population_stats(vec)
        mu_t.append(m)
        sigma_t.append(s)
        if vec:
            max_u = max(max_u, max(vec))
    n_t = len(timestamps)
    mu = math.fsum(mu_t) / n_t if n_t else 0.0
    sigma = math.fsum(sigma_t) / n_t if n_t else 0.0
    return LinkStats(keys, timestamps, rows, mu_t, sigma_t, mu, sigma, max_u)


# -- hop statistics ----------------------------------------------------


@dataclass
class HopHistogram:
    counts: dict[int, int]
    mean: float


def hop_histogram(design: Design, trace: "TrafficTrace",
                  byte_weighted: bool = False) -> HopHistogram:
    """Histogram of route hop counts over all flows in the trace.

    Counts flows by occurrence; pass byte_weighted=True to weight each
    flow by its byte volume instead.
    """
    counts: dict[int, int] = {}
    total = 0
    weight_sum = 0
    for phase in trace.phases:
        for flow in phase.flows:
            hops = design.route(flow.src, flow.dst).hops
            w = flow.bytes if byte_weighted else 1
            counts[hops] = counts.get(hops, 0) + w
            total += w
            weight_sum += hops * w
    mean = weight_sum / total if total else 0.0
    return HopHistogram(dict(sorted(counts.items())), mean)


# -- validation --------------------------------------------------------


@dataclass
class ValidationResult:
    checks: dict[str, bool]
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def mesh_planar_budget(cells: Iterable[Cell]) -> int:
    """Planar link count of a 2-D mesh over the given occupied cells."""
    cells = set(cells)
    count = 0
    for (r, c) in cells:
        if (r, c + 1) in cells:
            count += 1
        if (r + 1, c) in cells:
            count += 1
    return count


def validate(design: Design, platform: "Platform",
             max_link_mm: float | None = None) -> ValidationResult:
    """Check a design against the feasibility constraints.

    Constraints: the router graph is connected (no islands), the planar
    link count does not exceed the 2-D mesh budget for the same cells,
    every link respects the length ceiling (grid diagonal by default),
    each occupied cell hosts exactly one router/chiplet, and every
    stacked DRAM is paired with its memory controller's cell.
    """
    checks: dict[str, bool] = {}
    failures: list[str] = []

    # connectivity over routers
    routers = design.routers
    if routers:
        seen = {min(routers)}
        stack = [min(routers)]
        while stack:
            node = stack.pop()
            for nb in design._adj[node]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        connected = seen == set(routers)
    else:
        connected = True
    checks["connectivity"] = connected
    if not connected:
        failures.append("router graph has islands")

    budget = mesh_planar_budget(routers)
    checks["link_budget"] = design.planar_link_count <= budget
    if not checks["link_budget"]:
        failures.append(
            f"{design.planar_link_count} planar links exceed mesh budget {budget}")

    rows, cols = design.grid
    if max_link_mm is None:
        max_link_mm = math.hypot(rows - 1, cols - 1) * design.cell_mm
    too_long = [k for k in design.links if design.link_length_mm(k) > max_link_mm]
    checks["link_length"] = not too_long
    if too_long:
        failures.append(f"{len(too_long)} links exceed {max_link_mm:.2f} mm")

    cell_owners: dict[Cell, list[str]] = {}
    in_bounds = True
    for cid, cell in design.placement.items():
        if cid in design.vertical:
            continue
        cell_owners.setdefault(cell, []).append(cid)
        if not (0 <= cell[0] < rows and 0 <= cell[1] < cols):
            in_bounds = False
    collisions = [c for c, ids in cell_owners.items() if len(ids) > 1]
    checks["router_per_cell"] = not collisions and in_bounds
    if collisions:
        failures.append(f"cells with multiple chiplets: {sorted(collisions)}")
    if not in_bounds:
        failures.append("placement outside grid")

    vertical_ok = True
    expected = {d: m for d, m in platform.vertical_pairs}
    if set(design.vertical) != set(expected):
        vertical_ok = False
    else:
        for dram, mc in design.vertical.items():
            if expected[dram] != mc:
                vertical_ok = False
            elif design.placement.get(dram) != design.placement.get(mc):
                vertical_ok = False
    checks["vertical_pairing"] = vertical_ok
    if not vertical_ok:
        failures.append("stacked DRAM/MC pairing inconsistent")

    return ValidationResult(checks, failures)


# -- exports -----------------------------------------------------------


def design_to_dot(design: Design, platform: "Platform | None" = None) -> str:
    """Render the design as an undirected DOT graph."""
    occupant = {cell: cid for cid, cell in design.placement.items()
                if cid not in design.vertical}
    lines = ["graph noi {", "  node [shape=box];"]
    for cell in sorted(design.routers):
        cid = occupant.get(cell, "")
        stacked = ""
        for dram, mc in sorted(design.vertical.items()):
            if design.placement.get(mc) == cell:
                stacked = f"\\n+{dram}"
        label = f"{cid}{stacked}\\n({cell[0]},{cell[1]})"
        lines.append(f'  "{cell[0]}_{cell[1]}" [label="{label}"];')
    for key in sorted(design.links):
        a = f"{key[1]}_{key[2]}"
        b = f"{key[3]}_{key[4]}"
        lines.append(f'  "{a}" -- "{b}" [label="{design.link_stages(key)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def link_stats_csv(stats: LinkStats) -> str:
    """Per-link utilization table: one row per link, one column per phase."""
    header = ["link", "kind"] + [f"t{t}" for t in stats.timestamps] + ["mean"]
    lines = [",".join(header)]
    n_t = len(stats.timestamps)
    for i, key in enumerate(stats.link_keys):
        if key[0] == "p":
            name = f"({key[1]} {key[2]})-({key[3]} {key[4]})"
        else:
            name = f"vertical-{key[1]}"
        vals = [stats.u[t][i] for t in range(n_t)]
        mean = math.fsum(vals) / n_t if n_t else 0.0
        lines.append(",".join([name, key[0]] + [str(v) for v in vals]
                              + [repr(mean)]))
    return "\n".join(lines) + "\n"

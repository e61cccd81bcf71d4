"""Bi-objective design-space search over placements and link sets.

Minimizes the time-averaged mean and standard deviation of per-link
traffic utilization with an archive-based Pareto local search. Restart
points are chosen by a learned evaluator: a regression forest trained
online on (starting-state features, achieved Pareto hypervolume) pairs
steers each iteration toward starting designs whose local search is
predicted to end well. The final design is picked by simulating the
archive and keeping the lowest-EDP member that strictly beats the mesh
baseline's latency.

All randomness flows from one root seed through named substreams, so
results are reproducible and independent of scheduling.
"""

from __future__ import annotations

import hashlib
import math
import random
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .forest import RandomForestRegressor
from .noi import Design, hop_histogram, mesh_planar_budget, utilization, validate
from .platform import KIND_RERAM, Placement, Platform, mesh_design, place_initial
from .sim import CostModel, SimReport, simulate
from .traffic import KernelMapping, TrafficTrace, macro_order


def substream(root_seed: int, name: str) -> random.Random:
    """Independent deterministic RNG derived from the root seed."""
    digest = hashlib.sha256(f"{root_seed}:{name}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass(frozen=True)
class Objectives:
    mu: float
    sigma: float

    def __post_init__(self):
        if self.mu < 0 or self.sigma < 0:
            raise ValueError("objectives must be non-negative")


def dominates(a: Objectives, b: Objectives) -> bool:
    """a dominates b: no worse in both objectives, better in one."""
    return (a.mu <= b.mu and a.sigma <= b.sigma
            and (a.mu < b.mu or a.sigma < b.sigma))


def phv(pairs, ref: Objectives) -> float:
    """Dominated area between the point set and the reference corner.

    Points at or beyond the reference in either coordinate contribute
    only their clipped (empty) region.
    """
    pts = sorted({(mu, sigma) for mu, sigma in pairs
                  if mu < ref.mu and sigma < ref.sigma})
    if not pts:
        return 0.0
    front = []
    best_sigma = math.inf
    for mu, sigma in pts:
        if sigma < best_sigma:
            front.append((mu, sigma))
            best_sigma = sigma
    area = 0.0
    for i, (mu, sigma) in enumerate(front):
        next_mu = front[i + 1][0] if i + 1 < len(front) else ref.mu
        area += (next_mu - mu) * (ref.sigma - sigma)
    return area


@dataclass
class ArchiveEntry:
    design: Design
    objectives: Objectives
    index: int
    alive: bool = True


class ParetoArchive:
    """Mutually non-dominated designs under (mu, sigma) minimization."""

    def __init__(self):
        self.entries: list[ArchiveEntry] = []

    def alive(self) -> list[ArchiveEntry]:
        return [e for e in self.entries if e.alive]

    def insert(self, design: Design, obj: Objectives) -> ArchiveEntry | None:
        """Insert if non-dominated; prune members the newcomer dominates.

        Duplicate objective pairs are kept out to bound archive growth.
        """
        for e in self.entries:
            if not e.alive:
                continue
            if dominates(e.objectives, obj):
                return None
            if e.objectives == obj:
                return None
        for e in self.entries:
            if e.alive and dominates(obj, e.objectives):
                e.alive = False
        entry = ArchiveEntry(design, obj, index=len(self.entries))
        self.entries.append(entry)
        return entry

    def objective_pairs(self) -> list[tuple[float, float]]:
        return sorted((e.objectives.mu, e.objectives.sigma)
                      for e in self.alive())

    def phv(self, ref: Objectives) -> float:
        return phv(self.objective_pairs(), ref)

    def merge_from(self, other: "ParetoArchive") -> None:
        for e in other.alive():
            self.insert(e.design, e.objectives)

    def check_invariant(self) -> bool:
        alive = self.alive()
        for a in alive:
            for b in alive:
                if a is not b and dominates(a.objectives, b.objectives):
                    return False
        return True


def evaluate(design: Design, trace: TrafficTrace) -> Objectives:
    stats = utilization(design, trace)
    return Objectives(stats.mu, stats.sigma)


# -- move generation ------------------------------------------------------


@dataclass
class SearchSpace:
    """Fixed context for neighborhood moves on one platform."""

    platform: Platform
    region_cells: frozenset
    reram_ids: frozenset
    max_link_mm: float

    @classmethod
    def for_platform(cls, platform: Platform,
                     max_link_mm: float | None = None) -> "SearchSpace":
        if max_link_mm is None:
            max_link_mm = math.hypot(platform.grid_rows - 1,
                                     platform.grid_cols - 1) \
                * platform.config.chiplet_side_mm
        return cls(platform=platform,
                   region_cells=frozenset(platform.reram_region),
                   reram_ids=frozenset(platform.by_kind[KIND_RERAM]),
                   max_link_mm=max_link_mm)

    def is_valid(self, design: Design) -> bool:
        return validate(design, self.platform, self.max_link_mm).ok


def _swap_candidates(space: SearchSpace, design: Design) -> list[tuple[str, str]]:
    layer0 = [cid for cid in design.placement if cid not in design.vertical]
    rerams = sorted(cid for cid in layer0 if cid in space.reram_ids)
    others = sorted(cid for cid in layer0 if cid not in space.reram_ids)
    pairs = [(a, b) for i, a in enumerate(others) for b in others[i + 1:]]
    pairs += [(a, b) for i, a in enumerate(rerams) for b in rerams[i + 1:]]
    return pairs


def _apply_swap(design: Design, a: str, b: str) -> Design:
    placement = dict(design.placement)
    placement[a], placement[b] = placement[b], placement[a]
    for dram, mc in design.vertical.items():
        placement[dram] = placement[mc]
    return design.with_placement(placement)


def _link_cells(design: Design) -> list[tuple[tuple, tuple]]:
    return sorted(((k[1], k[2]), (k[3], k[4])) for k in design.links)


def _addable_pairs(space: SearchSpace, design: Design) -> list[tuple[tuple, tuple]]:
    routers = sorted(design.routers)
    existing = {frozenset(p) for p in _link_cells(design)}
    out = []
    for i, a in enumerate(routers):
        for b in routers[i + 1:]:
            if frozenset((a, b)) in existing:
                continue
            length = math.hypot(a[0] - b[0], a[1] - b[1]) * design.cell_mm
            if length <= space.max_link_mm:
                out.append((a, b))
    return out


def neighbors(space: SearchSpace, design: Design, seed: int,
              limit: int | None = 16) -> list[Design]:
    """Feasible single-move variants of a design.

    Moves: swap two same-layer chiplet positions (ReRAM only inside the
    macro region), drop a link, add a link under the budget, swap one
    link for another, or move one link endpoint. Infeasible results are
    discarded. limit=None enumerates every move (small designs only).
    """
    links = _link_cells(design)
    budget = mesh_planar_budget(design.routers)
    adds = _addable_pairs(space, design)
    swaps = _swap_candidates(space, design)

    def removals():
        return [design.with_links([l for l in links if l != victim])
                for victim in links]

    def build_all():
        out = []
        out += [_apply_swap(design, a, b) for a, b in swaps]
        out += removals()
        if len(links) < budget:
            out += [design.with_links(links + [pair]) for pair in adds]
        for victim in links:
            kept = [l for l in links if l != victim]
            for pair in adds:
                out.append(design.with_links(kept + [pair]))
        for victim in links:
            a, b = victim
            kept = [l for l in links if l != victim]
            for end, other in ((a, b), (b, a)):
                for c in sorted(design.routers):
                    if c in (a, b):
                        continue
                    pair = (other, c)
                    if pair in adds or (c, other) in adds:
                        out.append(design.with_links(kept + [pair]))
        return out

    if limit is None:
        seen = set()
        keep = []
        for cand in build_all():
            key = cand.key()
            if key in seen:
                continue
            seen.add(key)
            if space.is_valid(cand):
                keep.append(cand)
        return keep

    rng = random.Random(seed)
    keep = []
    seen = {design.key()}
    attempts = 0
    while len(keep) < limit and attempts < limit * 8:
        attempts += 1
        move = rng.randrange(5)
        cand = None
        if move == 0 and swaps:
            a, b = swaps[rng.randrange(len(swaps))]
            cand = _apply_swap(design, a, b)
        elif move == 1 and links:
            victim = links[rng.randrange(len(links))]
            cand = design.with_links([l for l in links if l != victim])
        elif move == 2 and adds and len(links) < budget:
            pair = adds[rng.randrange(len(adds))]
            cand = design.with_links(links + [pair])
        elif move == 3 and links and adds:
            victim = links[rng.randrange(len(links))]
            pair = adds[rng.randrange(len(adds))]
            cand = design.with_links([l for l in links if l != victim] + [pair])
        elif move == 4 and links:
            victim = links[rng.randrange(len(links))]
            a, b = victim
            keep_end = (a, b)[rng.randrange(2)]
            routers = sorted(design.routers)
            c = routers[rng.randrange(len(routers))]
            if c not in (a, b):
                pair = (keep_end, c)
                if (pair in adds) or ((c, keep_end) in adds):
                    cand = design.with_links(
                        [l for l in links if l != victim] + [pair])
        if cand is None:
            continue
        key = cand.key()
        if key in seen:
            continue
        seen.add(key)
        if space.is_valid(cand):
            keep.append(cand)
    return keep


# -- local search ---------------------------------------------------------


def local_search(space: SearchSpace, start: Design, trace: TrafficTrace,
                 seed: int, expansion_budget: int = 3000,
                 neighbor_limit: int | None = 16) -> ParetoArchive:
    """Archive-based Pareto local search from one starting design.

    Expands unexplored archive members in insertion order, inserting
    non-dominated neighbors and pruning dominated ones, until no
    archive member has an unexplored improving neighbor or the
    expansion budget is exhausted.
    """
    if not space.is_valid(start):
        raise ValueError("starting design is infeasible")
    rng = substream(seed, "local-search")
    archive = ParetoArchive()
    first = archive.insert(start, evaluate(start, trace))
    frontier: deque[ArchiveEntry] = deque([first])
    evals = 0
    while frontier and evals < expansion_budget:
        entry = frontier.popleft()
        if not entry.alive:
            continue
        for cand in neighbors(space, entry.design, rng.getrandbits(63),
                              neighbor_limit):
            evals += 1
            inserted = archive.insert(cand, evaluate(cand, trace))
            if inserted is not None:
                frontier.append(inserted)
            if evals >= expansion_budget:
                break
    return archive


# -- starting-state features and the learned evaluator --------------------

FEATURE_NAMES = (
    "mu", "sigma", "max_link_utilization", "mean_hops", "link_count",
    "mean_link_stages", "mean_sm_to_mc_hops", "macro_head_to_mc_hops",
)


def design_features(space: SearchSpace, design: Design, trace: TrafficTrace,
                    mapping: KernelMapping) -> list[float]:
    """Fixed-length description of a starting design."""
    stats = utilization(design, trace)
    hops = hop_histogram(design, trace)
    links = sorted(design.links)
    mean_stages = (sum(design.link_stages(k) for k in links) / len(links)
                   if links else 0.0)
    sm_hops = []
    for cluster in mapping.clusters:
        for sm in cluster.sms:
            sm_hops.append(design.route(sm, cluster.mc).hops)
    head = macro_order(space.platform, Placement(design.placement))[0]
    head_hops = [design.route(head, c.mc).hops for c in mapping.clusters]
    return [
        stats.mu,
        stats.sigma,
        float(stats.max_u),
        hops.mean,
        float(design.planar_link_count),
        mean_stages,
        sum(sm_hops) / len(sm_hops) if sm_hops else 0.0,
        sum(head_hops) / len(head_hops) if head_hops else 0.0,
    ]


def _perturb(space: SearchSpace, design: Design, rng: random.Random,
             moves: int) -> Design:
    current = design
    for _ in range(moves):
        step = neighbors(space, current, rng.getrandbits(63), limit=1)
        if step:
            current = step[0]
    return current


@dataclass
class StageResult:
    archive: ParetoArchive
    ref: Objectives
    history: list[dict] = field(default_factory=list)


def stage_explore(space: SearchSpace, trace: TrafficTrace,
                  mapping: KernelMapping, budget: int, seed: int, *,
                  start_pool: int = 20, expansion_budget: int = 3000,
                  neighbor_limit: int | None = 16, use_model: bool = True,
                  log=None) -> StageResult:
    """Iterated local search with a learned starting-state evaluator.

    Each iteration proposes candidate starting designs (perturbations of
    the mesh and of current archive members), picks the one the forest
    predicts to reach the highest hypervolume (a random pick until
    training data exists), runs a local search, merges its front into
    the global archive, and retrains the forest on the observed
    (features, hypervolume) outcome.
    """
    if budget < 1:
        raise ValueError("budget must be at least one local-search run")
    platform = space.platform
    mesh = mesh_design(platform)
    mesh_obj = evaluate(mesh, trace)
    ref = Objectives(mesh_obj.mu * 1.1 if mesh_obj.mu else 1.0,
                     mesh_obj.sigma * 1.1 if mesh_obj.sigma else 1.0)

    archive = ParetoArchive()
    model: RandomForestRegressor | None = None
    rows_x: list[list[float]] = []
    rows_y: list[float] = []
    history: list[dict] = []

    for it in range(budget):
        rng = substream(seed, f"stage-iteration-{it}")
        pool: list[Design] = []
        alive = archive.alive()
        while len(pool) < start_pool:
            kind = rng.randrange(3)
            if kind == 0:
                base = mesh
            elif kind == 1:
                placement = place_initial(platform, platform.config,
                                          rng.getrandbits(31))
                base = mesh_design(platform, placement)
            else:
                base = (rng.choice(alive).design if alive else mesh)
            cand = _perturb(space, base, rng, moves=rng.randrange(1, 5))
            if space.is_valid(cand):
                pool.append(cand)
        if use_model and model is not None:
            feats = [design_features(space, d, trace, mapping) for d in pool]
            preds = model.predict(feats)
            pick = max(range(len(pool)), key=lambda i: (preds[i], -i))
            predicted = float(preds[pick])
        else:
            pick = rng.randrange(len(pool))
            predicted = None
        start = pool[pick]

        run = local_search(space, start, trace,
                           seed=int.from_bytes(
                               hashlib.sha256(f"{seed}:ls:{it}".encode())
                               .digest()[:4], "big"),
                           expansion_budget=expansion_budget,
                           neighbor_limit=neighbor_limit)
        archive.merge_from(run)
        run_phv = run.phv(ref)
        rows_x.append(design_features(space, start, trace, mapping))
        rows_y.append(run_phv)
        model = RandomForestRegressor(n_trees=30, max_depth=8,
                                      seed=seed + it).fit(rows_x, rows_y)
        event = {
            "event": "iteration", "iteration": it, "predicted": predicted,
            "run_phv": run_phv, "archive_phv": archive.phv(ref),
            "archive_size": len(archive.alive()),
        }
        history.append(event)
        if log is not None:
            log(event)
    return StageResult(archive=archive, ref=ref, history=history)


# -- final selection --------------------------------------------------------


@dataclass
class SelectionResult:
    design: Design
    report: SimReport
    mesh_report: SimReport
    warned: bool
    rows: list[dict]


def select_final(archive: ParetoArchive, trace: TrafficTrace,
                 platform: Platform, costs: CostModel,
                 mesh: Design | None = None,
                 parallel: int = 1) -> SelectionResult:
    """Simulate the archive and pick the best mesh-beating design.

    Members whose end-to-end latency is not strictly below the mesh
    baseline are discarded; the lowest-EDP survivor wins. If nothing
    survives, the lowest-latency member is returned with a warning
    flag.
    """
    entries = archive.alive()
    if not entries:
        raise ValueError("archive is empty")
    entries = sorted(entries, key=lambda e: (e.objectives.mu,
                                             e.objectives.sigma, e.index))
    if mesh is None:
        mesh = mesh_design(platform)
    mesh_report = simulate(mesh, trace, platform, costs)

    def run(entry: ArchiveEntry) -> SimReport:
        return simulate(entry.design, trace, platform, costs)

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            reports = list(pool.map(run, entries))
    else:
        reports = [run(e) for e in entries]

    rows = []
    for e, r in zip(entries, reports):
        rows.append({
            "design_index": e.index,
            "mu": e.objectives.mu,
            "sigma": e.objectives.sigma,
            "latency_cycles": r.end_to_end_cycles,
            "energy_joules": r.energy_joules,
            "edp": r.edp_joule_seconds,
            "links": e.design.planar_link_count,
        })

    survivors = [(e, r) for e, r in zip(entries, reports)
                 if r.end_to_end_cycles < mesh_report.end_to_end_cycles]
    if survivors:
        entry, report = min(
            survivors,
            key=lambda er: (er[1].edp_joule_seconds,
                            er[1].end_to_end_cycles, er[0].index))
        warned = False
    else:
        entry, report = min(
            zip(entries, reports),
            key=lambda er: (er[1].end_to_end_cycles, er[0].index))
        warned = True
    for row in rows:
        row["selected"] = row["design_index"] == entry.index
    return SelectionResult(design=entry.design, report=report,
                           mesh_report=mesh_report, warned=warned, rows=rows)

import dataclasses
import random

import pytest

from chipletnoi.noi import Design
from chipletnoi.platform import SystemConfig, build_platform, mesh_design
from chipletnoi.sim import (CostModel, block_latencies, closed_form_latency,
                            compare, edp, simulate)
from chipletnoi.traffic import (Flow, TrafficPhase, TrafficTrace,
                                default_mapping, generate_trace)
from chipletnoi.workload import SequenceConfig
from conftest import tiny_model

ANALYTIC = CostModel()
FLIT = CostModel(engine="flit")


def line_design(n, cell_mm=1.0, segment_mm=2.0):
    placement = {f"C{i}": (0, i) for i in range(n)}
    links = [((0, i), (0, i + 1)) for i in range(n - 1)]
    return Design((1, n), cell_mm, segment_mm, placement, links)


def single_phase(flows):
    return TrafficTrace([TrafficPhase(0, "Score[0]", "Score", 0,
                                      [Flow(*f) for f in flows])])


@pytest.fixture(scope="module")
def toy_platform():
    return build_platform(SystemConfig(
        total_chiplets=6, counts={"sm": 2, "mc": 1, "dram": 1, "reram": 2}))


def random_design(rng, max_cells=9):
    rows = rng.choice([2, 3])
    cols = rng.choice([2, 3])
    n = rng.randint(2, min(max_cells, rows * cols))
    cells = [(r, c) for r in range(rows) for c in range(cols)]
    rng.shuffle(cells)
    placement = {f"C{i}": cells[i] for i in range(n)}
    links = []
    connected = [cells[0]]
    for cell in cells[1:n]:
        links.append((rng.choice(connected), cell))
        connected.append(cell)
    return Design((rows, cols), rng.uniform(1.0, 4.0), 1.55, placement, links)


class TestClosedForm:
    def test_hand_traced_single_flit(self, toy_platform):
        d = line_design(2, cell_mm=1.0, segment_mm=2.0)  # one 1-stage link
        costs = CostModel(flit_bits=8 * 10 ** 6)  # everything fits one flit
        trace = single_phase([("C0", "C1", 100)])
        rep = simulate(d, trace, toy_platform, costs)
        # 1 stage + 2 routers x 2 cycles = 5
        assert rep.phases[0].comm_cycles == 5
        flit = simulate(d, trace, toy_platform,
                        dataclasses.replace(costs, engine="flit"))
        assert flit.phases[0].comm_cycles == 5

    @pytest.mark.parametrize("engine", ["analytic", "flit"])
    def test_randomized_single_flow_phases(self, engine, toy_platform):
        rng = random.Random(99)
        costs = CostModel(engine=engine)
        for _ in range(60):
            d = random_design(rng)
            ids = sorted(d.placement)
            src, dst = rng.sample(ids, 2)
            nbytes = rng.randint(1, 5000)
            trace = single_phase([(src, dst, nbytes)])
            rep = simulate(d, trace, toy_platform, costs)
            route = d.route(src, dst)
            expected = closed_form_latency(route, costs.flits_for(nbytes),
                                           costs, d)
            assert rep.phases[0].comm_cycles == expected

    def test_engines_agree_without_contention(self, toy_platform):
        d = line_design(4)
        trace = single_phase([("C0", "C3", 700)])
        a = simulate(d, trace, toy_platform, ANALYTIC)
        f = simulate(d, trace, toy_platform, FLIT)
        assert a.phases[0].comm_cycles == f.phases[0].comm_cycles


class TestContention:
    def test_lower_bound_holds_for_every_flow(self, toy_platform):
        rng = random.Random(5)
        for engine in (ANALYTIC, FLIT):
            for _ in range(15):
                d = random_design(rng)
                ids = sorted(d.placement)
                flows = []
                for _ in range(rng.randint(2, 5)):
                    src, dst = rng.sample(ids, 2)
                    flows.append((src, dst, rng.randint(1, 800)))
                rep = simulate(d, single_phase(flows), toy_platform, engine)
                for src, dst, nbytes in flows:
                    bound = closed_form_latency(
                        d.route(src, dst), engine.flits_for(nbytes), engine, d)
                    assert rep.phases[0].comm_cycles >= bound

    def test_shared_link_serializes(self, toy_platform):
        d = line_design(2)
        # two packets of 4 flits each over the same link
        costs = CostModel(flit_bits=8, engine="flit")
        rep = simulate(d, single_phase([("C0", "C1", 4), ("C0", "C1", 4)]),
                       toy_platform, costs)
        solo = closed_form_latency(d.route("C0", "C1"), 4, costs, d)
        assert rep.phases[0].comm_cycles == solo + 4

    def test_flit_conservation(self, toy_platform):
        rng = random.Random(12)
        d = random_design(rng)
        ids = sorted(d.placement)
        flows = [(a, b, rng.randint(1, 999))
                 for a in ids for b in ids if a != b]
        rep = simulate(d, single_phase(flows), toy_platform, ANALYTIC)
        assert rep.flits_injected == rep.flits_delivered
        assert rep.flits_injected == sum(ANALYTIC.flits_for(f[2])
                                         for f in flows)


class TestReports:
    def test_empty_trace(self, toy_platform):
        d = line_design(2)
        rep = simulate(d, TrafficTrace([]), toy_platform, ANALYTIC)
        assert rep.end_to_end_cycles == 0
        assert rep.energy_joules == 0.0
        assert rep.edp_joule_seconds == 0.0

    def test_edp_identity(self, toy_platform):
        d = line_design(3)
        rep = simulate(d, single_phase([("C0", "C2", 512)]), toy_platform,
                       ANALYTIC)
        assert edp(rep) == rep.energy_joules * rep.end_to_end_seconds
        assert rep.edp_joule_seconds == edp(rep)

    def test_edp_trivial_values(self, toy_platform):
        d = line_design(2)
        rep = simulate(d, TrafficTrace([]), toy_platform, ANALYTIC)
        assert edp(rep) == 0.0

    def test_json_roundtrip_fields(self, toy_platform):
        import json
        d = line_design(3)
        rep = simulate(d, single_phase([("C0", "C2", 64)]), toy_platform,
                       ANALYTIC)
        doc = json.loads(rep.to_json())
        assert doc["end_to_end_cycles"] == rep.end_to_end_cycles
        assert doc["energy_joules"] * doc["end_to_end_seconds"] == \
            pytest.approx(doc["edp_joule_seconds"])

    def test_determinism(self, toy_platform):
        d = line_design(4)
        trace = single_phase([("C0", "C3", 333), ("C1", "C2", 100)])
        a = simulate(d, trace, toy_platform, ANALYTIC)
        b = simulate(d, trace, toy_platform, ANALYTIC)
        assert a.to_json() == b.to_json()


class TestEnergy:
    def test_longer_path_costs_more(self, toy_platform):
        short = line_design(2, cell_mm=2.0)
        lng = line_design(3, cell_mm=2.0)
        trace_s = single_phase([("C0", "C1", 100)])
        trace_l = single_phase([("C0", "C2", 100)])
        e_short = simulate(short, trace_s, toy_platform, ANALYTIC).energy_joules
        e_long = simulate(lng, trace_l, toy_platform, ANALYTIC).energy_joules
        assert e_long > e_short

    def test_energy_linear_in_bits(self, toy_platform):
        d = line_design(3)
        e1 = simulate(d, single_phase([("C0", "C2", 100)]), toy_platform,
                      ANALYTIC).energy_joules
        e2 = simulate(d, single_phase([("C0", "C2", 200)]), toy_platform,
                      ANALYTIC).energy_joules
        assert e2 == pytest.approx(2 * e1)


class TestParallelFormulation:
    def _reports(self, platform36):
        seq = SequenceConfig(8)
        results = {}
        for form in ("parallel", "serial"):
            model = tiny_model(name=f"toy-{form}", d_model=64, num_heads=4,
                               num_layers=2, block_formulation=form)
            mapping = default_mapping(platform36, model)
            trace = generate_trace(platform36,
                                   platform36.canonical_placement(),
                                   mapping, model, seq)
            mesh = mesh_design(platform36)
            results[form] = simulate(mesh, trace, platform36, ANALYTIC)
        return results

    def test_block_latency_is_chain_max(self, platform36):
        rep = self._reports(platform36)["parallel"]
        by_t = {}
        for pr in rep.phases:
            by_t.setdefault(pr.t, []).append(pr)
        blocks = block_latencies(rep)
        for t, phases in by_t.items():
            if len(phases) == 1:
                assert blocks[t] == phases[0].cycles
            else:
                attn = sum(p.cycles for p in phases if p.chain == 0)
                ff = sum(p.cycles for p in phases if p.chain == 1)
                assert blocks[t] == max(attn, ff)

    def test_parallel_strictly_faster(self, platform36):
        reports = self._reports(platform36)
        assert (reports["parallel"].end_to_end_cycles
                < reports["serial"].end_to_end_cycles)


class TestCompare:
    def test_identical_reports_ratio_one(self, toy_platform):
        d = line_design(3)
        trace = single_phase([("C0", "C2", 64)])
        rep = simulate(d, trace, toy_platform, ANALYTIC)
        rows = compare([rep, rep])
        assert rows[1]["latency_speedup"] == 1.0
        assert rows[1]["energy_gain"] == 1.0
        assert rows[1]["edp_gain"] == 1.0

    def test_speedup_direction(self, toy_platform):
        slow = line_design(5)
        fast = Design((1, 5), 1.0, 2.0,
                      {f"C{i}": (0, i) for i in range(5)},
                      [((0, i), (0, i + 1)) for i in range(4)]
                      + [((0, 0), (0, 4))])
        trace = single_phase([("C0", "C4", 4000)])
        rows = compare([simulate(slow, trace, toy_platform, ANALYTIC),
                        simulate(fast, trace, toy_platform, ANALYTIC)])
        assert rows[1]["latency_speedup"] > 1.0

    def test_mismatched_traces_rejected(self, toy_platform):
        d = line_design(3)
        r1 = simulate(d, single_phase([("C0", "C2", 64)]), toy_platform,
                      ANALYTIC)
        r2 = simulate(d, single_phase([("C0", "C2", 65)]), toy_platform,
                      ANALYTIC)
        with pytest.raises(ValueError):
            compare([r1, r2])


class TestVerticalLinks:
    def test_stacked_dram_route_costs_one_cycle_hop(self, toy_platform):
        placement = {"MC0": (0, 0), "SM0": (0, 1), "DRAM0": (0, 0)}
        d = Design((1, 2), 3.1623, 1.55, placement, [((0, 0), (0, 1))],
                   vertical={"DRAM0": "MC0"})
        costs = CostModel(flit_bits=8 * 10 ** 6)
        rep = simulate(d, single_phase([("DRAM0", "MC0", 64)]), toy_platform,
                       costs)
        # vertical hop + one router
        assert rep.phases[0].comm_cycles == 1 + 2
        rep2 = simulate(d, single_phase([("DRAM0", "SM0", 64)]), toy_platform,
                        costs)
        stages = d.link_stages(next(iter(d.links)))
        assert rep2.phases[0].comm_cycles == 1 + 2 * 2 + stages
        flit = simulate(d, single_phase([("DRAM0", "SM0", 64)]), toy_platform,
                        dataclasses.replace(costs, engine="flit"))
        assert flit.phases[0].comm_cycles == rep2.phases[0].comm_cycles

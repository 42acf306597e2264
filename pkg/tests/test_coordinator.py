import dataclasses

import numpy as np
import pytest

from gridsplit import (
    FormationSnapshot,
    FormationWeights,
    GridFormingResource,
    Scenario,
    SwitchEdge,
    Timeline,
    ValidationError,
    ZoneGraph,
    ZoneNode,
    build_milp,
    decode,
    diff_topologies,
    fixed_topology_solution,
    formation_inputs,
    run,
    solve_milp,
)

QUIET_CLOSED = {1, 2, 3, 5, 6, 7, 9, 10}     # both ties in, one mid-span out each side
FAULTED_CLOSED = {1, 2, 3, 4, 5, 6, 7, 10}   # tie 9 out, zone 5 back on feeder 1


def closed_set(sol):
    return {e for e, on in sol.switch_status.items() if on}


def mirror_scenario(n_steps=72):
    """Two identical 2-zone feeders joined by one tie; nothing favors closing it."""
    nodes = (ZoneNode(1, 1, False, 100.0, True),
             ZoneNode(2, 1, False, 100.0, False),
             ZoneNode(3, 2, False, 100.0, True),
             ZoneNode(4, 2, False, 100.0, False))
    edges = (SwitchEdge(1, 1, 2, False, 1000.0),
             SwitchEdge(2, 3, 4, False, 1000.0),
             SwitchEdge(3, 2, 4, True, 1000.0))
    res = (GridFormingResource(1, 3000.0, 12000.0),
           GridFormingResource(3, 3000.0, 12000.0))
    return Scenario(name="mirror", graph=ZoneGraph(nodes, edges, res),
                    step_minutes=5,
                    load_kw={z: np.full(n_steps, 100.0) for z in range(1, 5)},
                    pv_kw={z: np.zeros(n_steps) for z in range(1, 5)})


class TestTimeline:
    def test_defaults(self):
        tl = Timeline()
        assert tl.n_formation_events == 16
        assert tl.n_steps == 576

    def test_divisibility_enforced(self):
        with pytest.raises(ValueError, match="multiple of the dispatch step"):
            Timeline(schedule_slot_minutes=31)
        with pytest.raises(ValueError, match="multiple of the slot"):
            Timeline(formation_step_minutes=100, total_minutes=2800)
        with pytest.raises(ValueError, match="multiple of the formation"):
            Timeline(total_minutes=2900, formation_step_minutes=180)
        with pytest.raises(ValueError, match="must be positive"):
            Timeline(dispatch_step_minutes=0)


class TestFlexibleRun:
    def test_event_grid(self, flex_run):
        assert [ev.time_min for ev in flex_run.events] \
            == list(range(0, 2880, 180))
        assert flex_run.n_steps == 576
        assert np.array_equal(flex_run.time_min, np.arange(576) * 5)

    def test_first_event_has_an_empty_diff(self, flex_run):
        ev0 = flex_run.events[0]
        assert ev0.diff.moved == () and ev0.diff.toggled == ()
        assert closed_set(ev0.solution) == QUIET_CLOSED

    def test_repartition_happens_exactly_at_the_fault_edges(self, flex_run):
        changes = {ev.time_min: ev.diff for ev in flex_run.events
                   if ev.diff.moved or ev.diff.toggled}
        assert sorted(changes) == [720, 1620]
        # tie 9 faults at noon: zone 5 returns to feeder 1 through switch 4
        assert changes[720].moved == ((5, 7, 1),)
        assert changes[720].toggled == ((4, False, True), (9, True, False))
        # fault clears at 03:00: the move reverses
        assert changes[1620].moved == ((5, 1, 7),)
        assert changes[1620].toggled == ((4, True, False), (9, False, True))

    def test_topologies_during_and_after_the_fault(self, flex_run):
        by_t = {ev.time_min: ev for ev in flex_run.events}
        assert closed_set(by_t[720].solution) == FAULTED_CLOSED
        assert closed_set(by_t[1440].solution) == FAULTED_CLOSED
        assert closed_set(by_t[1620].solution) == QUIET_CLOSED
        assert by_t[720].faulted_edges == (9, 11)
        assert by_t[1620].faulted_edges == (11,)

    def test_assignment_constant_between_events(self, flex_run):
        for ev in flex_run.events:
            s0 = ev.time_min // 5
            block = flex_run.assignment[s0:s0 + 36]
            assert (block == block[0]).all()
            for c, z in enumerate(flex_run.zone_ids):
                assert block[0, c] == ev.solution.assignment[z]

    def test_moved_zone_sits_out_the_first_step(self, flex_run):
        col5 = flex_run.zone_ids.index(5)
        s0 = 720 // 5
        assert not flex_run.committed[s0, col5]
        assert flex_run.committed[s0 + 1, col5]
        assert flex_run.unserved_kw[s0, col5] \
            == pytest.approx(flex_run.scenario.load_kw[5][s0])

    def test_storage_state_is_continuous_across_repartitions(self, flex_run,
                                                             scenario):
        dt_h = 5 / 60.0
        for c, j in enumerate(flex_run.gfm_ids):
            r = scenario.graph.resource_at(j)
            path = np.concatenate(
                [[r.battery_soc0 * r.battery_energy_kwh],
                 flex_run.soc_kwh[:, c]])
            assert np.all(np.abs(np.diff(path))
                          <= r.battery_power_kw * dt_h + 1e-9)
            fuel = np.concatenate([[r.diesel_fuel_kwh],
                                   flex_run.fuel_kwh[:, c]])
            assert np.all(np.diff(fuel) <= 1e-9)

    def test_rerun_is_deterministic(self, scenario, flex_run):
        again = run(scenario, mode="flexible")
        assert np.array_equal(again.served_kw, flex_run.served_kw)
        assert np.array_equal(again.soc_kwh, flex_run.soc_kwh)
        assert np.array_equal(again.fuel_kwh, flex_run.fuel_kwh)
        for a, b in zip(again.events, flex_run.events):
            assert closed_set(a.solution) == closed_set(b.solution)
            assert a.solution.objective_value == b.solution.objective_value


class TestFixedRun:
    def test_topology_never_changes(self, fixed_run):
        for ev in fixed_run.events:
            assert ev.diff.moved == () and ev.diff.toggled == ()
            assert closed_set(ev.solution) == {1, 2, 3, 4, 5, 6, 7, 8}

    def test_assignment_is_the_feeder_split_throughout(self, fixed_run):
        for c, z in enumerate(fixed_run.zone_ids):
            want = 1 if z <= 5 else 7
            assert (fixed_run.assignment[:, c] == want).all()


class TestRunValidation:
    def test_unknown_mode(self, scenario):
        with pytest.raises(ValueError, match="mode must be one of"):
            run(scenario, mode="adaptive")

    def test_step_mismatch(self, scenario):
        with pytest.raises(ValidationError, match="does not match the"):
            run(scenario, timeline=Timeline(dispatch_step_minutes=15))

    def test_short_profiles(self):
        sc = mirror_scenario(n_steps=36)   # 180 min of data
        with pytest.raises(ValidationError, match="shorter than the timeline"):
            run(sc, timeline=Timeline(total_minutes=360))


class TestFormationInputs:
    def test_matches_the_run_events(self, scenario, flex_run):
        tl = Timeline()
        for k in (0, 4, 9):
            g_t, snap = formation_inputs(scenario, tl, k)
            assert tuple(sorted(g_t.faulted_edges)) \
                == flex_run.events[k].faulted_edges
            s0, s1 = k * 36, (k + 1) * 36
            assert snap.load_kw[3] \
                == pytest.approx(scenario.load_kw[3][s0:s1].mean())
            assert snap.pv_kw[8] \
                == pytest.approx(scenario.pv_kw[8][s0:s1].mean())

    def test_solving_event_zero_reproduces_the_run(self, scenario, flex_run):
        g_t, snap = formation_inputs(scenario, None, 0)
        prob = build_milp(g_t, snap, FormationWeights())
        sol = decode(prob, solve_milp(prob.model))
        assert sol.objective_value \
            == pytest.approx(flex_run.events[0].solution.objective_value)
        assert closed_set(sol) == closed_set(flex_run.events[0].solution)

    def test_index_bounds(self, scenario):
        with pytest.raises(ValueError, match="outside 0..15"):
            formation_inputs(scenario, None, 16)
        with pytest.raises(ValueError, match="outside"):
            formation_inputs(scenario, None, -1)


class TestMirrorScenario:
    def test_tie_never_closes_without_a_reason(self):
        sc = mirror_scenario()
        r = run(sc, "flexible", Timeline(total_minutes=360))
        assert len(r.events) == 2
        for ev in r.events:
            assert closed_set(ev.solution) == {1, 2}
            assert ev.diff.moved == () and ev.diff.toggled == ()
        assert r.unserved_kw.sum() == 0.0


class TestSwitchPenaltyChaining:
    """Re-partition economics across two consecutive decisions.

    Step one has flat load and no PV: the normally-closed split is cheapest
    once each toggle costs 20. Step two adds 600 kW of must-take PV to every
    feeder-2 zone; keeping the split would need 2500 kW absorbed at a
    2000 kW battery, so the partition has to change, and handing the
    critical leaf zone 10 over (one tie in, one switch out) beats the
    alternatives.
    """

    def test_two_step_decision(self, scenario):
        g = scenario.graph
        wts = FormationWeights()
        load = {z: 100.0 for z in range(1, 11)}
        snap1 = FormationSnapshot(0, load, {z: 0.0 for z in range(1, 11)})
        base = fixed_topology_solution(g, snap1, wts)
        prob1 = build_milp(g, snap1, wts, prev=base, switch_change_penalty=20.0)
        sol1 = decode(prob1, solve_milp(prob1.model))
        assert closed_set(sol1) == {1, 2, 3, 4, 5, 6, 7, 8}
        assert sol1.objective_value == pytest.approx(95.0)

        snap2 = FormationSnapshot(
            1, load, {z: (600.0 if z >= 6 else 0.0) for z in range(1, 11)},
            pv_min_kw={z: 600.0 for z in range(6, 11)})
        prob2 = build_milp(g, snap2, wts, prev=sol1, switch_change_penalty=20.0)
        sol2 = decode(prob2, solve_milp(prob2.model))
        d = diff_topologies(sol1, sol2)
        assert d.moved == ((10, 7, 1),)
        assert d.toggled == ((8, True, False), (10, False, True))
        # 94 of weighted commodity units plus two toggles at 20 each
        assert sol2.objective_value == pytest.approx(134.0)
        assert sol2.load_shed_term == pytest.approx(0.0)

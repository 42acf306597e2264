"""Rolling-horizon restoration loop.

Three nested clocks: a partition decision every few hours, a commitment
schedule rebuilt at the same boundary on half-hour slots, and five-minute
dispatch against the true profiles. Storage state follows the grid-forming
node it belongs to, whatever zones come or go around it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .ems import MicrogridState, build_schedule, dispatch_window, service_order
from .formation import (SWITCH_CHANGE_PENALTY, FormationSnapshot,
                        FormationSolution, FormationWeights, build_milp,
                        decode, fixed_topology_solution,
                        warm_values_from_topology)
from .milp import SolverError, SolveStatus, solve_milp
from .scenario import Scenario, ValidationError

MODES = ("flexible", "fixed")


@dataclass(frozen=True)
class Timeline:
    """Clock structure of a run; all fields are minutes."""
    total_minutes: int = 2880
    formation_step_minutes: int = 180
    formation_lookahead_minutes: int = 1440
    schedule_slot_minutes: int = 30
    schedule_lookahead_minutes: int = 1440
    dispatch_step_minutes: int = 5

    def __post_init__(self):
        vals = (self.total_minutes, self.formation_step_minutes,
                self.formation_lookahead_minutes, self.schedule_slot_minutes,
                self.schedule_lookahead_minutes, self.dispatch_step_minutes)
        if any(v <= 0 for v in vals):
            raise ValueError("timeline entries must be positive")
        if self.schedule_slot_minutes % self.dispatch_step_minutes:
            raise ValueError("slot length must be a multiple of the dispatch step")
        if self.formation_step_minutes % self.schedule_slot_minutes:
            raise ValueError("formation step must be a multiple of the slot")
        if self.total_minutes % self.formation_step_minutes:
            raise ValueError("total horizon must be a multiple of the formation step")
        if self.schedule_lookahead_minutes % self.schedule_slot_minutes:
            raise ValueError("schedule lookahead must be a multiple of the slot")

    @property
    def n_steps(self) -> int:
        return self.total_minutes // self.dispatch_step_minutes

    @property
    def n_formation_events(self) -> int:
        return self.total_minutes // self.formation_step_minutes


@dataclass(frozen=True)
class TopologyDiff:
    """Zone moves and switch toggles between two partition solutions."""
    moved: tuple[tuple[int, int | None, int | None], ...]
    toggled: tuple[tuple[int, bool, bool], ...]


def diff_topologies(old: FormationSolution | None,
                    new: FormationSolution) -> TopologyDiff:
    """Changes the field crews would act on; empty diff when old is None."""
    if old is None:
        return TopologyDiff((), ())
    moved = tuple((z, old.assignment.get(z), a)
                  for z, a in sorted(new.assignment.items())
                  if old.assignment.get(z) != a)
    toggled = tuple((eid, old.switch_status.get(eid, False), now)
                    for eid, now in sorted(new.switch_status.items())
                    if old.switch_status.get(eid, False) != now)
    return TopologyDiff(moved, toggled)


@dataclass(frozen=True)
class FormationEvent:
    time_min: int
    solution: FormationSolution
    diff: TopologyDiff
    faulted_edges: tuple[int, ...]
    node_count: int = 0
    lp_iterations: int = 0
    wall_time_s: float = 0.0


@dataclass
class RestorationRun:
    """Full trace of one 48-hour restoration simulation."""
    scenario: Scenario
    mode: str
    timeline: Timeline
    zone_ids: tuple[int, ...]
    gfm_ids: tuple[int, ...]
    time_min: np.ndarray
    served_kw: np.ndarray        # (steps, zones)
    unserved_kw: np.ndarray
    pv_potential_kw: np.ndarray
    pv_used_kw: np.ndarray
    committed: np.ndarray        # bool (steps, zones)
    energized: np.ndarray
    assignment: np.ndarray       # int (steps, zones), -1 when unassigned
    battery_kw: np.ndarray       # (steps, gfms)
    diesel_kw: np.ndarray
    soc_kwh: np.ndarray
    fuel_kwh: np.ndarray
    events: tuple[FormationEvent, ...]
    wall_time_s: float = 0.0

    @property
    def n_steps(self) -> int:
        return len(self.time_min)


def _slot_means(series: np.ndarray, start_step: int, n_slots: int,
                steps_per_slot: int) -> np.ndarray:
    stop = start_step + n_slots * steps_per_slot
    return series[start_step:stop].reshape(n_slots, steps_per_slot).mean(axis=1)


def formation_inputs(scenario: Scenario, timeline: Timeline | None,
                     event_index: int):
    """Graph and demand snapshot the coordinator would use at one event.

    Exposed so an external caller (the CLI, a test harness) can reproduce a
    single partitioning decision without running the whole horizon.
    """
    tl = timeline or Timeline()
    if not 0 <= event_index < tl.n_formation_events:
        raise ValueError(
            f"event index {event_index} outside 0..{tl.n_formation_events - 1}")
    t = event_index * tl.formation_step_minutes
    g_t = scenario.graph.with_faulted(
        scenario.graph.faulted_edges | scenario.faulted_at(t))
    fc_load, fc_pv = scenario.forecast()
    s0 = t // tl.dispatch_step_minutes
    s1 = s0 + tl.formation_step_minutes // tl.dispatch_step_minutes
    snap = FormationSnapshot(
        step_index=event_index,
        load_kw={z: float(fc_load[z][s0:s1].mean()) for z in fc_load},
        pv_kw={z: float(fc_pv[z][s0:s1].mean()) for z in fc_pv})
    return g_t, snap


def run(scenario: Scenario, mode: str = "flexible",
        timeline: Timeline | None = None,
        weights: FormationWeights | None = None,
        switch_change_penalty: float = SWITCH_CHANGE_PENALTY) -> RestorationRun:
    """Simulate one restoration horizon.

    ``flexible`` re-partitions at every formation boundary; ``fixed`` holds
    the normally-closed topology and only the storage scheduling runs. Both
    modes share the same forecasts, dispatch loop and accounting, so their
    outputs are directly comparable.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    tl = timeline or Timeline()
    wts = weights or FormationWeights()
    if scenario.step_minutes != tl.dispatch_step_minutes:
        raise ValidationError(
            f"scenario step {scenario.step_minutes} min does not match the "
            f"dispatch step {tl.dispatch_step_minutes} min")
    if scenario.horizon_minutes < tl.total_minutes:
        raise ValidationError("scenario profiles are shorter than the timeline")

    t_start = time.perf_counter()
    g0 = scenario.graph
    zone_ids = tuple(sorted(n.id for n in g0.nodes))
    gfm_ids = tuple(g0.gfm_nodes)
    zcol = {z: c for c, z in enumerate(zone_ids)}
    gcol = {j: c for c, j in enumerate(gfm_ids)}
    n_steps = tl.n_steps
    steps_per_slot = tl.schedule_slot_minutes // tl.dispatch_step_minutes
    slots_per_event = tl.formation_step_minutes // tl.schedule_slot_minutes

    fc_load, fc_pv = scenario.forecast()

    served = np.zeros((n_steps, len(zone_ids)))
    unserved = np.zeros_like(served)
    pv_pot = np.zeros_like(served)
    pv_used = np.zeros_like(served)
    committed = np.zeros(served.shape, dtype=bool)
    energized = np.zeros(served.shape, dtype=bool)
    assign_arr = np.full(served.shape, -1, dtype=int)
    battery = np.zeros((n_steps, len(gfm_ids)))
    diesel = np.zeros_like(battery)
    soc = np.zeros_like(battery)
    fuel = np.zeros_like(battery)
    for z in zone_ids:
        pv_pot[:, zcol[z]] = scenario.pv_kw[z][:n_steps]

    states = {}
    for j in gfm_ids:
        r = g0.resource_at(j)
        states[j] = MicrogridState(j, r, r.battery_soc0 * r.battery_energy_kwh,
                                   r.diesel_fuel_kwh)

    events: list[FormationEvent] = []
    prev_sol: FormationSolution | None = None

    for t in range(0, tl.total_minutes, tl.formation_step_minutes):
        faults = scenario.faulted_at(t)
        g_t = g0.with_faulted(g0.faulted_edges | faults)
        s0 = t // tl.dispatch_step_minutes
        s1 = s0 + tl.formation_step_minutes // tl.dispatch_step_minutes
        snap = FormationSnapshot(
            step_index=len(events),
            load_kw={z: float(fc_load[z][s0:s1].mean()) for z in zone_ids},
            pv_kw={z: float(fc_pv[z][s0:s1].mean()) for z in zone_ids})

        t0 = time.perf_counter()
        if mode == "fixed":
            sol = fixed_topology_solution(g_t, snap, wts)
            nodes = lp_iters = 0
        else:
            prob = build_milp(g_t, snap, wts, prev=prev_sol,
                              switch_change_penalty=switch_change_penalty)
            warm = None
            if prev_sol is not None:
                active = {e.id for e in g_t.active_edges()}
                warm = warm_values_from_topology(
                    prob, {eid for eid, on in prev_sol.switch_status.items()
                           if on and eid in active},
                    prev_sol.assignment)
            rep = solve_milp(prob.model, warm_integer_values=warm)
            if rep.status is SolveStatus.ITERATION_LIMIT:
                raise SolverError(
                    f"partition solve at t={t} min hit the pivot budget")
            sol = decode(prob, rep)
            nodes, lp_iters = rep.node_count, rep.lp_iterations
        wall = time.perf_counter() - t0

        diff = diff_topologies(prev_sol, sol)
        events.append(FormationEvent(
            time_min=t, solution=sol, diff=diff,
            faulted_edges=tuple(sorted(g_t.faulted_edges)),
            node_count=nodes, lp_iterations=lp_iters, wall_time_s=wall))
        blocked = frozenset(z for z, _old, new in diff.moved
                            if new is not None)

        closed = frozenset(eid for eid, on in sol.switch_status.items() if on)
        gfms = set(gfm_ids)
        micro = []
        for tree in sol.trees:
            anchor = min(tree & gfms)
            micro.append((anchor, service_order(g_t, set(tree), anchor, closed)))
        micro.sort()

        n_slots = min(tl.schedule_lookahead_minutes,
                      tl.total_minutes - t) // tl.schedule_slot_minutes
        plans = []
        for anchor, order in micro:
            fl = {z: _slot_means(fc_load[z], s0, n_slots, steps_per_slot)
                  for z in order.members}
            fp = {z: _slot_means(fc_pv[z], s0, n_slots, steps_per_slot)
                  for z in order.members}
            plans.append((anchor, order, build_schedule(
                states[anchor], order, fl, fp,
                slot_minutes=tl.schedule_slot_minutes)))

        dark = [z for z in zone_ids if sol.assignment.get(z) is None]
        for z, a in sol.assignment.items():
            if a is not None:
                assign_arr[s0:s1, zcol[z]] = a
        for z in dark:
            unserved[s0:s1, zcol[z]] = scenario.load_kw[z][s0:s1]

        for slot in range(slots_per_event):
            a = s0 + slot * steps_per_slot
            b = a + steps_per_slot
            for anchor, order, plan in plans:
                al = {z: scenario.load_kw[z][a:b] for z in order.members}
                ap = {z: scenario.pv_kw[z][a:b] for z in order.members}
                win = dispatch_window(
                    states[anchor], plan, slot, al, ap,
                    step_minutes=tl.dispatch_step_minutes,
                    blocked_first_step=(blocked & set(order.members)
                                        if slot == 0 else frozenset()))
                for c, z in enumerate(win.zones):
                    zc = zcol[z]
                    served[a:b, zc] = win.served_kw[:, c]
                    unserved[a:b, zc] = win.unserved_kw[:, c]
                    pv_used[a:b, zc] = win.pv_used_kw[:, c]
                    committed[a:b, zc] = win.committed[:, c]
                    energized[a:b, zc] = win.energized[:, c]
                gc = gcol[anchor]
                battery[a:b, gc] = win.battery_kw
                diesel[a:b, gc] = win.diesel_kw
                soc[a:b, gc] = win.soc_kwh
                fuel[a:b, gc] = win.fuel_kwh

        prev_sol = sol

    return RestorationRun(
        scenario=scenario, mode=mode, timeline=tl, zone_ids=zone_ids,
        gfm_ids=gfm_ids,
        time_min=np.arange(n_steps) * tl.dispatch_step_minutes,
        served_kw=served, unserved_kw=unserved, pv_potential_kw=pv_pot,
        pv_used_kw=pv_used, committed=committed, energized=energized,
        assignment=assign_arr, battery_kw=battery, diesel_kw=diesel,
        soc_kwh=soc, fuel_kwh=fuel, events=tuple(events),
        wall_time_s=time.perf_counter() - t_start)

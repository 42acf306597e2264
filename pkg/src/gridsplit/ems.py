"""Per-microgrid energy management.

Two stages on different clocks. The scheduler walks 30-minute slots and
commits the largest priority prefix of zones the storage can carry; the
dispatcher replays each slot in 5-minute steps against actuals, absorbing
forecast error with the battery first, diesel second, and shedding from the
bottom of the priority order only when both run out.

Zone priority: critical zones first, then electrical distance from the
grid-forming node, then zone id. Energy accounting is construction-exact:
every step satisfies served = pv_used + diesel + discharge - charge.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .netmodel import GridFormingResource, ZoneGraph

BALANCE_TOL = 1e-9


class TopologyMismatch(Exception):
    """Member zones do not form a connected tree under the closed switches."""


@dataclass(frozen=True)
class ServiceOrder:
    """Static per-topology service data: priority ranking and feed paths."""
    gfm_node_id: int
    members: tuple[int, ...]
    ranked: tuple[int, ...]
    hops: dict[int, int]
    path_zones: dict[int, frozenset[int]]  # zone -> zones feeding it, gfm excluded


def service_order(g: ZoneGraph, members: frozenset[int] | set[int],
                  gfm_node_id: int,
                  closed_edges: frozenset[int] | set[int]) -> ServiceOrder:
    if gfm_node_id not in members:
        raise TopologyMismatch(
            f"grid-forming zone {gfm_node_id} is not a member")
    adj = g.adjacency(frozenset(closed_edges))
    hops = {gfm_node_id: 0}
    parent: dict[int, int] = {}
    q = deque([gfm_node_id])
    while q:
        u = q.popleft()
        for v, _eid in adj[u]:
            if v in members and v not in hops:
                hops[v] = hops[u] + 1
                parent[v] = u
                q.append(v)
    missing = set(members) - hops.keys()
    if missing:
        raise TopologyMismatch(
            f"zones {sorted(missing)} unreachable from zone {gfm_node_id}")

    ranked = tuple(sorted(members,
                          key=lambda i: (not g.node(i).is_critical, hops[i], i)))
    paths: dict[int, frozenset[int]] = {}
    for i in members:
        chain = []
        u = i
        while u != gfm_node_id:
            chain.append(u)
            u = parent[u]
        paths[i] = frozenset(chain)
    return ServiceOrder(gfm_node_id, tuple(sorted(members)), ranked, hops, paths)


@dataclass
class MicrogridState:
    """Mutable storage state carried across dispatch windows."""
    gfm_node_id: int
    resource: GridFormingResource
    soc_kwh: float
    fuel_kwh: float

    def __post_init__(self):
        cap = self.resource.battery_energy_kwh
        if not -BALANCE_TOL <= self.soc_kwh <= cap + BALANCE_TOL:
            raise ValueError(f"state of charge {self.soc_kwh} outside [0, {cap}]")
        if self.fuel_kwh < -BALANCE_TOL:
            raise ValueError("negative fuel")
        self.soc_kwh = min(max(self.soc_kwh, 0.0), cap)
        self.fuel_kwh = max(self.fuel_kwh, 0.0)


def _source_caps(res: GridFormingResource, soc: float, fuel: float,
                 hours: float) -> tuple[float, float]:
    discharge = min(res.battery_power_kw, soc / hours)
    diesel = min(res.diesel_power_kw, fuel / hours)
    return discharge, diesel


def _surplus_split(res: GridFormingResource, soc: float, surplus: float,
                   hours: float) -> float:
    """Chargeable share of a PV surplus, limited by power and headroom."""
    headroom = (res.battery_energy_kwh - soc) / (hours * res.battery_efficiency)
    return min(surplus, res.battery_power_kw, headroom)


@dataclass(frozen=True)
class SchedulePlan:
    """Slot-resolution commitment plan for one microgrid."""
    order: ServiceOrder
    slot_minutes: int
    committed: tuple[tuple[int, ...], ...]
    served_kw: np.ndarray
    pv_used_kw: np.ndarray
    battery_kw: np.ndarray  # discharge positive, charge negative
    diesel_kw: np.ndarray
    soc_kwh: np.ndarray     # end of slot
    fuel_kwh: np.ndarray

    @property
    def n_slots(self) -> int:
        return len(self.committed)


def build_schedule(state: MicrogridState, order: ServiceOrder,
                   load_kw: Mapping[int, Sequence[float]],
                   pv_kw: Mapping[int, Sequence[float]],
                   *, slot_minutes: int = 30) -> SchedulePlan:
    """Commit the largest feasible priority prefix in every slot.

    Projections only; the live state is untouched. A prefix is feasible when
    its net deficit fits under battery power, remaining energy, diesel power
    and remaining fuel for the slot length.
    """
    res = state.resource
    n_slots = min(len(load_kw[i]) for i in order.members)
    hours = slot_minutes / 60.0
    soc, fuel = state.soc_kwh, state.fuel_kwh

    committed: list[tuple[int, ...]] = []
    served = np.zeros(n_slots)
    pv_used = np.zeros(n_slots)
    battery = np.zeros(n_slots)
    diesel = np.zeros(n_slots)
    soc_t = np.zeros(n_slots)
    fuel_t = np.zeros(n_slots)

    for s in range(n_slots):
        dis_cap, die_cap = _source_caps(res, soc, fuel, hours)
        chosen: tuple[int, ...] = ()
        for k in range(len(order.ranked), 0, -1):
            prefix = order.ranked[:k]
            net = (sum(load_kw[i][s] for i in prefix)
                   - sum(pv_kw[i][s] for i in prefix))
            if net <= dis_cap + die_cap + BALANCE_TOL:
                chosen = prefix
                break

        load_tot = sum(load_kw[i][s] for i in chosen)
        pv_tot = sum(pv_kw[i][s] for i in chosen)
        net = load_tot - pv_tot
        if net >= 0:
            bat = min(net, dis_cap)
            die = min(net - bat, die_cap)
        else:
            bat = -_surplus_split(res, soc, -net, hours)
            die = 0.0
        if bat >= 0:
            soc -= bat * hours
        else:
            soc += -bat * hours * res.battery_efficiency
        fuel -= die * hours
        soc = min(max(soc, 0.0), res.battery_energy_kwh)
        fuel = max(fuel, 0.0)

        committed.append(chosen)
        served[s] = load_tot
        pv_used[s] = load_tot - die - bat
        battery[s] = bat
        diesel[s] = die
        soc_t[s] = soc
        fuel_t[s] = fuel

    return SchedulePlan(order, slot_minutes, tuple(committed), served,
                        pv_used, battery, diesel, soc_t, fuel_t)


@dataclass(frozen=True)
class DispatchWindow:
    """Step-resolution outcome of one schedule slot against actuals."""
    zones: tuple[int, ...]
    step_minutes: int
    served_kw: np.ndarray        # (steps, zones)
    unserved_kw: np.ndarray
    pv_potential_kw: np.ndarray
    pv_used_kw: np.ndarray
    committed: np.ndarray        # bool (steps, zones)
    energized: np.ndarray
    battery_kw: np.ndarray       # (steps,)
    diesel_kw: np.ndarray
    soc_kwh: np.ndarray          # end of step
    fuel_kwh: np.ndarray
    shed_zones: tuple[int, ...] = ()


def dispatch_window(state: MicrogridState, plan: SchedulePlan, slot_index: int,
                    load_kw: Mapping[int, Sequence[float]],
                    pv_kw: Mapping[int, Sequence[float]],
                    *, step_minutes: int = 5,
                    blocked_first_step: frozenset[int] = frozenset()) -> DispatchWindow:
    """Run one slot step by step, mutating the live storage state.

    Actual imbalance lands on the battery first, then diesel. When neither
    can close the gap the lowest-priority committed zone is shed and stays
    shed for the rest of the window. Zones in ``blocked_first_step`` sit out
    the first step only (switching interval after a topology change).
    """
    if plan.slot_minutes % step_minutes != 0:
        raise ValueError("slot length must be a multiple of the step length")
    order = plan.order
    res = state.resource
    n_steps = plan.slot_minutes // step_minutes
    hours = step_minutes / 60.0
    zones = order.members
    col = {i: c for c, i in enumerate(zones)}
    nz = len(zones)

    served = np.zeros((n_steps, nz))
    unserved = np.zeros((n_steps, nz))
    pv_pot = np.zeros((n_steps, nz))
    pv_used = np.zeros((n_steps, nz))
    com_mask = np.zeros((n_steps, nz), dtype=bool)
    ener_mask = np.zeros((n_steps, nz), dtype=bool)
    battery = np.zeros(n_steps)
    diesel = np.zeros(n_steps)
    soc_t = np.zeros(n_steps)
    fuel_t = np.zeros(n_steps)

    shed: list[int] = []
    base = list(plan.committed[slot_index])
    by_priority = {i: r for r, i in enumerate(order.ranked)}

    for step in range(n_steps):
        active = [i for i in base if i not in shed]
        if step == 0:
            active = [i for i in active if i not in blocked_first_step]

        while True:
            net = (sum(load_kw[i][step] for i in active)
                   - sum(pv_kw[i][step] for i in active))
            dis_cap, die_cap = _source_caps(res, state.soc_kwh,
                                            state.fuel_kwh, hours)
            if net <= dis_cap + die_cap + BALANCE_TOL or not active:
                break
            worst = max(active, key=lambda i: by_priority[i])
            active.remove(worst)
            shed.append(worst)

        load_tot = sum(load_kw[i][step] for i in active)
        pv_tot = sum(pv_kw[i][step] for i in active)
        net = load_tot - pv_tot
        if net >= 0:
            bat = min(net, dis_cap)
            die = min(net - bat, die_cap)
        else:
            bat = -_surplus_split(res, state.soc_kwh, -net, hours)
            die = 0.0
        if bat >= 0:
            state.soc_kwh -= bat * hours
        else:
            state.soc_kwh += -bat * hours * res.battery_efficiency
        state.fuel_kwh -= die * hours
        state.soc_kwh = min(max(state.soc_kwh, 0.0), res.battery_energy_kwh)
        state.fuel_kwh = max(state.fuel_kwh, 0.0)

        used_tot = load_tot - die - bat  # exact balance residual lands on PV
        energized = {order.gfm_node_id}
        for i in active:
            energized |= order.path_zones[i]

        for i in zones:
            c = col[i]
            pv_pot[step, c] = pv_kw[i][step]
            if i in active:
                served[step, c] = load_kw[i][step]
                com_mask[step, c] = True
            else:
                unserved[step, c] = load_kw[i][step]
            ener_mask[step, c] = i in energized
        if pv_tot > 0 and active:
            for i in active:
                pv_used[step, col[i]] = used_tot * pv_kw[i][step] / pv_tot
            # pin the row sum to the exact total despite share rounding
            c_last = col[active[-1]]
            pv_used[step, c_last] += used_tot - pv_used[step].sum()
        battery[step] = bat
        diesel[step] = die
        soc_t[step] = state.soc_kwh
        fuel_t[step] = state.fuel_kwh

    return DispatchWindow(zones, step_minutes, served, unserved, pv_pot,
                          pv_used, com_mask, ener_mask, battery, diesel,
                          soc_t, fuel_t, tuple(shed))

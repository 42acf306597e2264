"""Radial microgrid formation as a mixed-integer program.

One solve re-partitions the zone graph into GFM-anchored radial microgrids
for a single planning step. Binary switch states and zone-to-microgrid
assignment binaries are coupled through an exact product linearization;
radiality comes from an exact closed-switch count plus a single-commodity
connectivity flow emitted by the GFMs. Served load and PV are continuous,
so the objective trades weighted load shedding against weighted commodity
flow (a proxy for how far from its source each zone sits).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .milp import INT_TOL, MilpModel, SolveReport, SolveStatus
from .netmodel import (LateralPolicy, RadialCheck, ZoneGraph, _components,
                       is_radial_forest, load_islands)

OBJ_MATCH_RTOL = 1e-6            # decode recheck: |recomputed - reported|
SWITCH_CHANGE_PENALTY = 0.1      # default cost per switch state change


class ModelError(Exception):
    """The graph/snapshot pair cannot be turned into a well-posed model."""


class InfeasibleTopology(Exception):
    """A lateral policy asks for more than the graph can deliver."""


class DecodeError(Exception):
    """Solver output failed rounding or consistency checks."""


@dataclass(frozen=True)
class FormationSnapshot:
    """Aggregated per-zone load and PV for one formation step (kW).

    ``load_kw`` is the servable demand ceiling, ``pv_kw`` the available PV.
    The optional floors default to zero; a positive ``pv_min_kw`` models
    must-take PV that the step has to absorb somewhere.
    """

    step_index: int
    load_kw: dict[int, float]
    pv_kw: dict[int, float]
    load_min_kw: dict[int, float] = field(default_factory=dict)
    pv_min_kw: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class FormationWeights:
    critical_flow_weight: float = 10.0
    default_flow_weight: float = 1.0
    shed_weight: float = 1000.0

    def __post_init__(self) -> None:
        if min(self.critical_flow_weight, self.default_flow_weight,
               self.shed_weight) <= 0:
            raise ValueError("formation weights must be positive")
        if self.shed_weight <= self.critical_flow_weight:
            raise ValueError("shed_weight must dominate flow weights")

    def edge_weight(self, g: ZoneGraph, edge_id: int) -> float:
        head = g.edge(edge_id).head
        return (self.critical_flow_weight if g.node(head).is_critical
                else self.default_flow_weight)


@dataclass
class FormationSolution:
    """Decoded partition: switch states, zone assignment and step dispatch."""

    switch_status: dict[int, bool]
    assignment: dict[int, int | None]
    served_load_kw: dict[int, float]
    pv_dispatch_kw: dict[int, float]
    line_flow_kw: dict[int, float]
    commodity_flow: dict[int, float]
    injection_kw: dict[int, float]
    objective_value: float
    load_shed_term: float
    flow_term: float
    switch_change_term: float = 0.0
    trees: tuple[frozenset[int], ...] = ()


@dataclass
class FormationProblem:
    """A built model plus the column map needed to decode its solution."""

    graph: ZoneGraph
    snapshot: FormationSnapshot
    weights: FormationWeights
    prev: FormationSolution | None
    switch_change_penalty: float
    model: MilpModel
    gfm_order: tuple[int, ...]
    islands: frozenset[frozenset[int]]
    island_zones: frozenset[int]
    y: dict[int, int]
    x: dict[tuple[int, int], int]
    z: dict[tuple[int, int], int]
    t: dict[int, int]
    p: dict[int, int]
    d: dict[int, int]
    inj: dict[int, int]
    w: dict[int, int]
    fp: dict[int, int]
    fn: dict[int, int]


def _island_spanning_edges(g: ZoneGraph, islands: frozenset[frozenset[int]]) -> set[int]:
    """Deterministic BFS spanning tree inside each load island.

    Island-internal switches are not meaningful decisions (nothing there can
    be energized), but the closed-switch count identity assumes each island
    component is internally spanned, so pin a canonical tree.
    """
    chosen: set[int] = set()
    adj = g.adjacency()
    for comp in sorted(islands, key=min):
        root = min(comp)
        seen = {root}
        frontier = [root]
        while frontier:
            u = frontier.pop(0)
            for v, eid in sorted(adj[u]):
                if v in comp and v not in seen:
                    seen.add(v)
                    chosen.add(eid)
                    frontier.append(v)
    return chosen


def downstream_capacity(g: ZoneGraph, policy: LateralPolicy) -> int:
    """Zones a GFM could feed through the policy edge, at best.

    Counts non-GFM nodes reachable from the far endpoint without crossing any
    GFM: commodity cannot transit a foreign GFM because a closed edge forces
    shared assignment, and GFM zones never consume commodity.
    """
    e = g.edge(policy.edge_id)
    far = e.head if e.tail == policy.gfm_node_id else e.tail
    gfms = set(g.gfm_nodes)
    if far in gfms:
        return 0
    adj = g.adjacency()
    seen = {far}
    stack = [far]
    while stack:
        u = stack.pop()
        for v, eid in adj[u]:
            if eid == policy.edge_id or v in gfms or v in seen:
                continue
            seen.add(v)
            stack.append(v)
    return len(seen)


def build_milp(g: ZoneGraph, snap: FormationSnapshot, weights: FormationWeights,
               prev: FormationSolution | None = None, *,
               switch_change_penalty: float = SWITCH_CHANGE_PENALTY) -> FormationProblem:
    """Assemble the one-step partition MILP.

    Raises ModelError for ill-posed inputs and InfeasibleTopology when a
    lateral policy demands more downstream zones than the graph can route.
    """
    zones = sorted(n.id for n in g.nodes)
    gfm_order = g.gfm_nodes
    if not gfm_order:
        raise ModelError("graph has no grid-forming resources")
    for i in zones:
        if i not in snap.load_kw or i not in snap.pv_kw:
            raise ModelError(f"snapshot missing zone {i}")

    islands = load_islands(g)
    island_zones = frozenset().union(*islands) if islands else frozenset()
    if island_zones & set(gfm_order):
        raise ModelError("a grid-forming node sits inside a load island")
    island_tree = _island_spanning_edges(g, islands)

    for pol in g.lateral_policies:
        if pol.min_downstream_nodes >= 1:
            if pol.edge_id in g.faulted_edges:
                raise InfeasibleTopology(
                    f"policy edge {pol.edge_id} is faulted")
            cap = downstream_capacity(g, pol)
            if cap < pol.min_downstream_nodes:
                raise InfeasibleTopology(
                    f"policy on edge {pol.edge_id} wants "
                    f"{pol.min_downstream_nodes} downstream zones, "
                    f"only {cap} reachable")

    edges = g.active_edges()
    n_zones = len(zones)
    n_mg = len(gfm_order)
    big_m = float(n_zones)
    k_of = {gfm: k for k, gfm in enumerate(gfm_order)}

    mdl = MilpModel(f"formation_step_{snap.step_index}")

    # switch binaries; island-internal edges are pinned, not decided
    y: dict[int, int] = {}
    for e in edges:
        if e.tail in island_zones:
            fixed = 1.0 if e.id in island_tree else 0.0
            y[e.id] = mdl.add_variable(f"y_{e.id}", fixed, fixed, integer=True)
        else:
            y[e.id] = mdl.add_variable(f"y_{e.id}", 0, 1, integer=True)

    # assignment binaries; each GFM is pinned to its own microgrid
    x: dict[tuple[int, int], int] = {}
    for i in zones:
        for k in range(n_mg):
            if i in k_of:
                lo = hi = 1.0 if k_of[i] == k else 0.0
                x[i, k] = mdl.add_variable(f"x_{i}_{k}", lo, hi, integer=True)
            else:
                x[i, k] = mdl.add_variable(f"x_{i}_{k}", 0, 1, integer=True)

    # product columns z = x_tail * x_head, exact for binaries, so the
    # integrality declaration would only add dead branching candidates
    z: dict[tuple[int, int], int] = {}
    for e in edges:
        for k in range(n_mg):
            z[e.id, k] = mdl.add_variable(f"z_{e.id}_{k}", 0, 1)

    t: dict[int, int] = {}
    for e in edges:
        t[e.id] = mdl.add_variable(f"t_{e.id}", -e.flow_limit_kw, e.flow_limit_kw)

    p: dict[int, int] = {}
    d: dict[int, int] = {}
    shed_w = weights.shed_weight
    for i in zones:
        if i in island_zones:
            p[i] = mdl.add_variable(f"p_{i}", 0, 0)
            d[i] = mdl.add_variable(f"d_{i}", 0, 0, objective=-shed_w)
        else:
            p[i] = mdl.add_variable(f"p_{i}", snap.pv_min_kw.get(i, 0.0),
                                    snap.pv_kw[i])
            d[i] = mdl.add_variable(f"d_{i}", snap.load_min_kw.get(i, 0.0),
                                    snap.load_kw[i], objective=-shed_w)
    mdl.offset += shed_w * sum(snap.load_kw[i] for i in zones)

    inj: dict[int, int] = {}
    for j in gfm_order:
        r = g.resource_at(j)
        inj[j] = mdl.add_variable(f"inj_{j}", -r.battery_power_kw,
                                  r.battery_power_kw + r.diesel_power_kw)

    w: dict[int, int] = {}
    for j in gfm_order:
        w[j] = mdl.add_variable(f"w_{j}", 0, n_zones - 1)

    fp: dict[int, int] = {}
    fn: dict[int, int] = {}
    for e in edges:
        we = weights.edge_weight(g, e.id)
        fp[e.id] = mdl.add_variable(f"fp_{e.id}", 0, big_m, objective=we)
        fn[e.id] = mdl.add_variable(f"fn_{e.id}", 0, big_m, objective=we)

    # switch-change penalty, linearized exactly for binary y
    if prev is not None and switch_change_penalty > 0:
        eps = switch_change_penalty
        active_ids = {e.id for e in edges}
        for eid, closed in prev.switch_status.items():
            was = 1.0 if closed else 0.0
            if eid in active_ids:
                mdl.add_objective(y[eid], eps * (1.0 - 2.0 * was))
                mdl.offset += eps * was
            elif closed:
                mdl.offset += eps  # forced open by a fault: unavoidable change

    # each zone belongs to exactly one microgrid label
    for i in zones:
        mdl.add_constraint({x[i, k]: 1.0 for k in range(n_mg)}, "==", 1.0,
                           f"assign_{i}")

    # a closed edge requires both endpoints in the same microgrid
    for e in edges:
        mdl.add_constraint(
            {y[e.id]: 1.0, **{z[e.id, k]: -1.0 for k in range(n_mg)}},
            "==", 0.0, f"link_{e.id}")
        for k in range(n_mg):
            mdl.add_constraint({z[e.id, k]: 1.0, x[e.tail, k]: -1.0}, "<=", 0.0,
                               f"mc1_{e.id}_{k}")
            mdl.add_constraint({z[e.id, k]: 1.0, x[e.head, k]: -1.0}, "<=", 0.0,
                               f"mc2_{e.id}_{k}")
            mdl.add_constraint(
                {z[e.id, k]: 1.0, x[e.tail, k]: -1.0, x[e.head, k]: -1.0},
                ">=", -1.0, f"mc3_{e.id}_{k}")

    # exact spanning-forest count over zones, GFMs and island components
    mdl.add_constraint({y[e.id]: 1.0 for e in edges}, "==",
                       float(n_zones - n_mg - len(islands)), "radial_count")

    # real power balance per zone (positive t flows tail -> head)
    for i in zones:
        coeffs: dict[int, float] = {}
        for e in edges:
            if e.tail == i:
                coeffs[t[e.id]] = coeffs.get(t[e.id], 0.0) + 1.0
            elif e.head == i:
                coeffs[t[e.id]] = coeffs.get(t[e.id], 0.0) - 1.0
        coeffs[p[i]] = -1.0
        coeffs[d[i]] = 1.0
        if i in inj:
            coeffs[inj[i]] = -1.0
        mdl.add_constraint(coeffs, "==", 0.0, f"power_{i}")

    # line flow only on closed switches
    for e in edges:
        mdl.add_constraint({t[e.id]: 1.0, y[e.id]: -e.flow_limit_kw}, "<=", 0.0,
                           f"tcap_hi_{e.id}")
        mdl.add_constraint({t[e.id]: -1.0, y[e.id]: -e.flow_limit_kw}, "<=", 0.0,
                           f"tcap_lo_{e.id}")

    # connectivity commodity: every non-island, non-GFM zone consumes one unit
    for i in zones:
        if i in island_zones:
            continue
        coeffs = {}
        for e in edges:
            sgn = 1.0 if e.tail == i else (-1.0 if e.head == i else 0.0)
            if sgn:
                coeffs[fp[e.id]] = coeffs.get(fp[e.id], 0.0) + sgn
                coeffs[fn[e.id]] = coeffs.get(fn[e.id], 0.0) - sgn
        if i in w:
            coeffs[w[i]] = -1.0
            mdl.add_constraint(coeffs, "==", 0.0, f"comm_src_{i}")
        else:
            mdl.add_constraint(coeffs, "==", -1.0, f"comm_{i}")

    for e in edges:
        mdl.add_constraint({fp[e.id]: 1.0, fn[e.id]: 1.0, y[e.id]: -big_m},
                           "<=", 0.0, f"fcap_{e.id}")

    # lateral policies constrain commodity leaving the GFM on one edge
    for pol in g.lateral_policies:
        if pol.edge_id in g.faulted_edges:
            continue  # force_zero holds trivially; minimums were rejected above
        e = g.edge(pol.edge_id)
        outward = 1.0 if e.tail == pol.gfm_node_id else -1.0
        coeffs = {fp[e.id]: outward, fn[e.id]: -outward}
        if pol.force_zero:
            mdl.add_constraint(coeffs, "==", 0.0, f"pol_zero_{pol.edge_id}")
        elif pol.min_downstream_nodes >= 1:
            mdl.add_constraint(coeffs, ">=", float(pol.min_downstream_nodes),
                               f"pol_min_{pol.edge_id}")

    return FormationProblem(
        graph=g, snapshot=snap, weights=weights, prev=prev,
        switch_change_penalty=switch_change_penalty if prev is not None else 0.0,
        model=mdl, gfm_order=gfm_order, islands=islands,
        island_zones=island_zones, y=y, x=x, z=z, t=t, p=p, d=d, inj=inj, w=w,
        fp=fp, fn=fn)


def warm_values_from_topology(problem: FormationProblem,
                              closed_edges: set[int] | frozenset[int],
                              assignment: dict[int, int | None]) -> dict[int, float]:
    """Integer warm point for the solver from a known partition.

    Island zones and zones without an anchor are parked on microgrid 0; the
    solver only uses the point if it is feasible.
    """
    vals: dict[int, float] = {}
    k_of = {gfm: k for k, gfm in enumerate(problem.gfm_order)}
    for eid, col in problem.y.items():
        if problem.model.lower[col] == problem.model.upper[col]:
            vals[col] = problem.model.lower[col]
        else:
            vals[col] = 1.0 if eid in closed_edges else 0.0
    for (i, k), col in problem.x.items():
        anchor = assignment.get(i)
        kk = k_of.get(anchor, 0) if anchor is not None else 0
        vals[col] = 1.0 if k == kk else 0.0
    return vals


def _rounded(value: float, what: str) -> int:
    r = round(value)
    if abs(value - r) > INT_TOL:
        raise DecodeError(f"{what} = {value!r} is not integral within {INT_TOL}")
    return int(r)


def decode(problem: FormationProblem, report: SolveReport) -> FormationSolution:
    """Turn a solver report into a checked FormationSolution.

    Rounds binaries, rebuilds the partition, verifies radiality and re-derives
    the objective from decoded values; any mismatch is a DecodeError because
    it means the solver's tolerances were not actually met.
    """
    if report.status != SolveStatus.OPTIMAL:
        raise DecodeError(f"cannot decode a {report.status.value} report")
    g = problem.graph
    xv = report.values

    closed = {eid for eid, col in problem.y.items()
              if _rounded(xv[col], f"switch y_{eid}") == 1}
    assignment: dict[int, int | None] = {}
    for i in sorted(n.id for n in g.nodes):
        if i in problem.island_zones:
            assignment[i] = None
            continue
        picks = [k for k in range(len(problem.gfm_order))
                 if _rounded(xv[problem.x[i, k]], f"assign x_{i}_{k}") == 1]
        if len(picks) != 1:
            raise DecodeError(f"zone {i} assigned to {len(picks)} microgrids")
        assignment[i] = problem.gfm_order[picks[0]]

    check: RadialCheck = is_radial_forest(g, closed)
    if not check.is_radial:
        raise DecodeError("rounded switch set is not a radial forest")

    line_flow = {eid: float(xv[col]) for eid, col in problem.t.items()}
    commodity = {eid: float(xv[problem.fp[eid]] - xv[problem.fn[eid]])
                 for eid in problem.fp}
    served = {i: float(xv[col]) for i, col in problem.d.items()}
    pv = {i: float(xv[col]) for i, col in problem.p.items()}
    injection = {j: float(xv[col]) for j, col in problem.inj.items()}

    wts = problem.weights
    snap = problem.snapshot
    shed_term = wts.shed_weight * sum(snap.load_kw[i] - served[i] for i in served)
    flow_term = sum(wts.edge_weight(g, eid) * abs(f)
                    for eid, f in commodity.items())
    switch_term = 0.0
    if problem.prev is not None and problem.switch_change_penalty > 0:
        eps = problem.switch_change_penalty
        active = {e.id for e in g.active_edges()}
        for eid, was in problem.prev.switch_status.items():
            if eid in active:
                switch_term += eps * abs((1.0 if eid in closed else 0.0)
                                         - (1.0 if was else 0.0))
            elif was:
                switch_term += eps
    recomputed = shed_term + flow_term + switch_term
    if abs(recomputed - report.objective) > OBJ_MATCH_RTOL * (1 + abs(report.objective)):
        raise DecodeError(
            f"objective recheck failed: decoded {recomputed!r} vs "
            f"solver {report.objective!r}")

    return FormationSolution(
        switch_status={e.id: (e.id in closed) for e in g.edges},
        assignment=assignment, served_load_kw=served, pv_dispatch_kw=pv,
        line_flow_kw=line_flow, commodity_flow=commodity,
        injection_kw=injection, objective_value=float(report.objective),
        load_shed_term=float(shed_term), flow_term=float(flow_term),
        switch_change_term=float(switch_term), trees=check.trees)


def fixed_topology_solution(g: ZoneGraph, snap: FormationSnapshot | None = None,
                            weights: FormationWeights | None = None) -> FormationSolution:
    """Baseline partition: every normally-closed, non-faulted switch closed.

    No optimization; commodity flows come from tree traversal. With a
    snapshot, served load and line flows assume full service (nominal values
    for reporting; capacity checks are the optimizer's job, not the baseline's).
    """
    wts = weights or FormationWeights()
    closed = {e.id for e in g.active_edges() if not e.normally_open}
    gfms = set(g.gfm_nodes)
    trees: list[frozenset[int]] = []
    for comp in _components(g, frozenset(closed)):
        inside = sum(1 for eid in closed
                     if g.edge(eid).tail in comp and g.edge(eid).head in comp)
        if inside != len(comp) - 1:
            raise InfeasibleTopology("default closed switches contain a loop")
        anchors = comp & gfms
        if len(anchors) > 1:
            raise InfeasibleTopology(
                "default switches parallel two grid-forming nodes")
        if anchors:
            trees.append(comp)
    trees.sort(key=lambda c: min(c & gfms))

    # zones cut off from every GFM (faulted laterals, islands) stay dark;
    # the point of the baseline is that nothing gets rerouted
    assignment: dict[int, int | None] = {n.id: None for n in g.nodes}
    for tree in trees:
        anchor = min(tree & gfms)
        for i in tree:
            assignment[i] = anchor

    adj = g.adjacency(frozenset(closed))
    load = (snap.load_kw if snap else {n.id: 0.0 for n in g.nodes})
    pv = (snap.pv_kw if snap else {n.id: 0.0 for n in g.nodes})

    commodity = {e.id: 0.0 for e in g.edges}
    line_flow = {e.id: 0.0 for e in g.edges}
    injection: dict[int, float] = {}
    for tree in trees:
        anchor = min(tree & gfms)
        # iterative post-order accumulation of subtree counts and net load
        parent: dict[int, tuple[int, int] | None] = {anchor: None}
        order = [anchor]
        qi = 0
        while qi < len(order):
            u = order[qi]
            qi += 1
            for v, eid in sorted(adj[u]):
                if v not in parent:
                    parent[v] = (u, eid)
                    order.append(v)
        counts = {u: 1 for u in order}
        net = {u: load[u] - pv[u] for u in order}
        for u in reversed(order[1:]):
            pu, eid = parent[u]
            counts[pu] += counts[u]
            net[pu] += net[u]
            e = g.edge(eid)
            toward_child = 1.0 if e.tail == pu else -1.0
            commodity[eid] = toward_child * counts[u]
            line_flow[eid] = toward_child * net[u]
        injection[anchor] = net[anchor]

    served = {i: (load[i] if assignment[i] is not None else 0.0)
              for i in assignment}
    pv_used = {i: (pv[i] if assignment[i] is not None else 0.0)
               for i in assignment}
    shed_term = wts.shed_weight * sum(load[i] - served[i] for i in served)
    flow_term = sum(wts.edge_weight(g, eid) * abs(f)
                    for eid, f in commodity.items())
    return FormationSolution(
        switch_status={e.id: (e.id in closed) for e in g.edges},
        assignment=assignment, served_load_kw=served, pv_dispatch_kw=pv_used,
        line_flow_kw=line_flow, commodity_flow=commodity,
        injection_kw=injection,
        objective_value=float(shed_term + flow_term),
        load_shed_term=float(shed_term), flow_term=float(flow_term),
        trees=tuple(trees))

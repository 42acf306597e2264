"""Switchable zone-graph model for two-stage feeder restoration.

Zones are load groups bounded by sectionalizing switches; every edge is a
switch. A subset of nodes hosts grid-forming resources (battery plus diesel)
that can anchor an islanded microgrid. The predicates here are pure graph
queries shared by the partition optimizer, the enumeration oracle and the
rolling-horizon coordinator.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple


@dataclass(frozen=True)
class ZoneNode:
    """One load group (zone) of a feeder."""

    id: int
    feeder_id: int
    is_critical: bool = False
    peak_load_kw: float = 0.0
    has_gfm: bool = False


@dataclass(frozen=True)
class SwitchEdge:
    """Sectionalizing or tie switch between two zones.

    ``normally_open`` marks feeder-interconnection ties. ``flow_limit_kw``
    bounds real power transfer in either direction when closed.
    """

    id: int
    tail: int
    head: int
    normally_open: bool = False
    flow_limit_kw: float = 0.0


@dataclass(frozen=True)
class GridFormingResource:
    """Battery + diesel unit able to form an island at one zone."""

    node_id: int
    battery_power_kw: float
    battery_energy_kwh: float
    battery_soc0: float = 1.0
    battery_efficiency: float = 0.95
    diesel_power_kw: float = 0.0
    diesel_fuel_kwh: float = 0.0


@dataclass(frozen=True)
class LateralPolicy:
    """Restriction on the fictitious-commodity flow leaving a GFM on one edge.

    ``min_downstream_nodes >= 1`` forces the edge closed with at least that
    many zones fed through it, which pins the nearest zones of the lateral to
    the GFM's microgrid. ``force_zero`` instead forbids any commodity on the
    edge, so zones behind it must be reached another way or not at all.
    """

    gfm_node_id: int
    edge_id: int
    min_downstream_nodes: int = 0
    force_zero: bool = False


class RadialCheck(NamedTuple):
    is_radial: bool
    trees: tuple[frozenset[int], ...]


@dataclass(frozen=True)
class ZoneGraph:
    """Immutable zone graph with switch edges, resources and faults."""

    nodes: tuple[ZoneNode, ...]
    edges: tuple[SwitchEdge, ...]
    resources: tuple[GridFormingResource, ...] = ()
    faulted_edges: frozenset[int] = field(default_factory=frozenset)
    lateral_policies: tuple[LateralPolicy, ...] = ()

    def __post_init__(self) -> None:
        node_ids = [n.id for n in self.nodes]
        if len(set(node_ids)) != len(node_ids):
            raise ValueError("duplicate node ids")
        edge_ids = [e.id for e in self.edges]
        if len(set(edge_ids)) != len(edge_ids):
            raise ValueError("duplicate edge ids")
        known = set(node_ids)
        for e in self.edges:
            if e.tail not in known or e.head not in known:
                raise ValueError(f"edge {e.id} references unknown node")
            if e.tail == e.head:
                raise ValueError(f"edge {e.id} is a self-loop")
            if e.flow_limit_kw < 0:
                raise ValueError(f"edge {e.id} has negative flow limit")
        by_node = {r.node_id for r in self.resources}
        if len(by_node) != len(self.resources):
            raise ValueError("more than one resource at a node")
        for n in self.nodes:
            if n.has_gfm != (n.id in by_node):
                raise ValueError(
                    f"node {n.id}: has_gfm flag does not match resource placement"
                )
        for eid in self.faulted_edges:
            if eid not in set(edge_ids):
                raise ValueError(f"faulted edge {eid} does not exist")
        emap = {e.id: e for e in self.edges}
        for p in self.lateral_policies:
            if p.edge_id not in emap:
                raise ValueError(f"policy references unknown edge {p.edge_id}")
            e = emap[p.edge_id]
            if p.gfm_node_id not in (e.tail, e.head):
                raise ValueError(
                    f"policy edge {p.edge_id} is not incident to node {p.gfm_node_id}"
                )
            if p.gfm_node_id not in by_node:
                raise ValueError(f"policy node {p.gfm_node_id} hosts no resource")
            if p.force_zero and p.min_downstream_nodes != 0:
                raise ValueError("force_zero policy cannot carry a minimum count")
            if p.min_downstream_nodes < 0:
                raise ValueError("policy minimum count must be nonnegative")

    # -- lookups -------------------------------------------------------------

    def node(self, node_id: int) -> ZoneNode:
        return self._node_map[node_id]

    def edge(self, edge_id: int) -> SwitchEdge:
        return self._edge_map[edge_id]

    def resource_at(self, node_id: int) -> GridFormingResource:
        return self._resource_map[node_id]

    @property
    def _node_map(self) -> dict[int, ZoneNode]:
        return {n.id: n for n in self.nodes}

    @property
    def _edge_map(self) -> dict[int, SwitchEdge]:
        return {e.id: e for e in self.edges}

    @property
    def _resource_map(self) -> dict[int, GridFormingResource]:
        return {r.node_id: r for r in self.resources}

    @property
    def gfm_nodes(self) -> tuple[int, ...]:
        return tuple(sorted(n.id for n in self.nodes if n.has_gfm))

    def active_edges(self) -> tuple[SwitchEdge, ...]:
        """Edges that survived faults, in id order."""
        return tuple(e for e in sorted(self.edges, key=lambda e: e.id)
                     if e.id not in self.faulted_edges)

    def with_faulted(self, edge_ids: Iterable[int]) -> "ZoneGraph":
        return replace(self, faulted_edges=frozenset(edge_ids))

    def adjacency(self, closed: frozenset[int] | set[int] | None = None) -> dict[int, list[tuple[int, int]]]:
        """node -> [(neighbor, edge_id)] over the given closed set.

        ``closed=None`` means every non-faulted edge, i.e. the hypothetical
        all-switches-closed network used for island detection.
        """
        adj: dict[int, list[tuple[int, int]]] = {n.id: [] for n in self.nodes}
        for e in self.active_edges():
            if closed is not None and e.id not in closed:
                continue
            adj[e.tail].append((e.head, e.id))
            adj[e.head].append((e.tail, e.id))
        return adj


def _components(g: ZoneGraph, closed: frozenset[int] | None = None) -> list[frozenset[int]]:
    adj = g.adjacency(closed)
    seen: set[int] = set()
    comps: list[frozenset[int]] = []
    for start in sorted(adj):
        if start in seen:
            continue
        stack = [start]
        comp = {start}
        seen.add(start)
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if v not in comp:
                    comp.add(v)
                    seen.add(v)
                    stack.append(v)
        comps.append(frozenset(comp))
    return comps


def load_islands(g: ZoneGraph) -> frozenset[frozenset[int]]:
    """Components that cannot reach any GFM even with every switch closed.

    Faulted edges are removed first; everything else is treated as closed.
    Zones in a load island cannot be restored by any switching plan.
    """
    gfms = set(g.gfm_nodes)
    return frozenset(c for c in _components(g) if not c & gfms)


def leaf_nodes(g: ZoneGraph) -> frozenset[int]:
    """Endpoints of normally-open tie switches.

    These are the zones that a re-partition can hand from one feeder's
    microgrid to the other, so they bound the flexible set.
    """
    out: set[int] = set()
    for e in g.edges:
        if e.normally_open:
            out.add(e.tail)
            out.add(e.head)
    return frozenset(out)


def is_radial_forest(g: ZoneGraph, closed: Iterable[int]) -> RadialCheck:
    """Check that a closed-edge set is a valid radial partition.

    The set must be acyclic, every component holding a GFM must hold exactly
    one, and every zone outside a load island must sit in some GFM component.
    Returns the GFM-anchored tree census (node sets, ordered by GFM id).
    """
    closed_set = frozenset(closed)
    for eid in closed_set:
        if eid not in {e.id for e in g.edges}:
            raise ValueError(f"unknown edge id {eid}")
        if eid in g.faulted_edges:
            raise ValueError(f"edge {eid} is faulted and cannot be closed")

    # Cycle check via union-find over closed edges.
    parent: dict[int, int] = {n.id: n.id for n in g.nodes}

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    emap = {e.id: e for e in g.edges}
    for eid in sorted(closed_set):
        e = emap[eid]
        ra, rb = find(e.tail), find(e.head)
        if ra == rb:
            return RadialCheck(False, ())
        parent[ra] = rb

    comps = _components(g, closed_set)
    gfms = set(g.gfm_nodes)
    islands = load_islands(g)
    island_zones = set().union(*islands) if islands else set()

    trees: dict[int, frozenset[int]] = {}
    for comp in comps:
        anchors = sorted(comp & gfms)
        if len(anchors) > 1:
            return RadialCheck(False, ())
        if len(anchors) == 1:
            trees[anchors[0]] = comp
        else:
            # GFM-less component: legal only if entirely inside a load island.
            if not comp <= island_zones:
                return RadialCheck(False, ())
    return RadialCheck(True, tuple(trees[a] for a in sorted(trees)))

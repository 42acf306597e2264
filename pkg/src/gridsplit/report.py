"""Run aggregation, comparison, and columnar output files.

Everything written here is deterministic: floats are serialized with repr,
JSON keys are sorted, and wall-clock timings never reach the files, so two
runs of the same scenario and seed produce byte-identical artifacts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coordinator import RestorationRun

UNSERVED_TOL_KW = 1e-9

SUMMARY_NAME = "summary.json"
TRACE_NAME = "trace.csv"
MICROGRIDS_NAME = "microgrids.csv"
CHANGES_NAME = "topology_changes.csv"
PLOT_NAMES = ("fig5_load_pv.csv", "fig6_soc_fuel.csv",
              "fig7_connectivity.csv", "fig8_percent_served.csv")


class ScenarioMismatch(Exception):
    """The two runs being compared are not over the same scenario."""


@dataclass(frozen=True)
class MetricsSummary:
    scenario_name: str
    mode: str
    total_minutes: int
    percent_served: dict[int, float]          # zone -> served/demand, 0..100
    percent_served_total: float
    pv_utilization: dict[int, float]          # feeder -> used/avail, 0..100
    pv_utilization_total: float
    served_kwh: float
    demand_kwh: float
    topology_change_count: int
    final_soc_kwh: dict[int, float]           # gfm zone -> kWh
    final_fuel_kwh: dict[int, float]
    critical_unserved_hours: float

    def __post_init__(self):
        pcts = [self.percent_served_total, self.pv_utilization_total,
                *self.percent_served.values(), *self.pv_utilization.values()]
        if any(not -1e-9 <= p <= 100 + 1e-9 for p in pcts):
            raise ValueError("percentage outside [0, 100]")


def _pct(num: float, den: float) -> float:
    return float(100.0 * num / den) if den > 0 else 0.0


def summarize(run: RestorationRun) -> MetricsSummary:
    """Aggregate a dispatch trace; pure function of the run's arrays."""
    g = run.scenario.graph
    step_h = run.timeline.dispatch_step_minutes / 60.0
    zcol = {z: c for c, z in enumerate(run.zone_ids)}

    served_e = run.served_kw.sum(axis=0) * step_h
    unserved_e = run.unserved_kw.sum(axis=0) * step_h
    demand_e = served_e + unserved_e
    pct_zone = {z: _pct(served_e[zcol[z]], demand_e[zcol[z]])
                for z in run.zone_ids}

    feeders = sorted({n.feeder_id for n in g.nodes})
    pv_used_e = run.pv_used_kw.sum(axis=0) * step_h
    pv_avail_e = run.pv_potential_kw.sum(axis=0) * step_h
    pv_feeder = {}
    for f in feeders:
        cols = [zcol[n.id] for n in g.nodes if n.feeder_id == f]
        pv_feeder[f] = _pct(pv_used_e[cols].sum(), pv_avail_e[cols].sum())

    crit_cols = [zcol[n.id] for n in g.nodes if n.is_critical]
    crit_hours = float((run.unserved_kw[:, crit_cols] > UNSERVED_TOL_KW).sum()
                       * step_h)

    changes = sum(1 for ev in run.events
                  if ev.diff.moved or ev.diff.toggled)

    gcol = {j: c for c, j in enumerate(run.gfm_ids)}
    return MetricsSummary(
        scenario_name=run.scenario.name, mode=run.mode,
        total_minutes=run.timeline.total_minutes,
        percent_served=pct_zone,
        percent_served_total=_pct(served_e.sum(), demand_e.sum()),
        pv_utilization=pv_feeder,
        pv_utilization_total=_pct(pv_used_e.sum(), pv_avail_e.sum()),
        served_kwh=float(served_e.sum()), demand_kwh=float(demand_e.sum()),
        topology_change_count=changes,
        final_soc_kwh={j: float(run.soc_kwh[-1, gcol[j]]) for j in run.gfm_ids},
        final_fuel_kwh={j: float(run.fuel_kwh[-1, gcol[j]]) for j in run.gfm_ids},
        critical_unserved_hours=crit_hours)


def compare(a: RestorationRun | MetricsSummary,
            b: RestorationRun | MetricsSummary) -> list[dict[str, object]]:
    """Row-per-zone comparison table plus total rows.

    Deltas are b minus a: positive means the second run served more.
    """
    sa = a if isinstance(a, MetricsSummary) else summarize(a)
    sb = b if isinstance(b, MetricsSummary) else summarize(b)
    if sa.scenario_name != sb.scenario_name:
        raise ScenarioMismatch(
            f"scenario {sa.scenario_name!r} vs {sb.scenario_name!r}")
    if set(sa.percent_served) != set(sb.percent_served):
        raise ScenarioMismatch("zone sets differ")
    if sa.total_minutes != sb.total_minutes:
        raise ScenarioMismatch("horizons differ")

    rows: list[dict[str, object]] = []
    for z in sorted(sa.percent_served):
        pa, pb = sa.percent_served[z], sb.percent_served[z]
        rows.append({"row": f"zone_{z}", "metric": "percent_served",
                     "a": pa, "b": pb, "delta": pb - pa})
    rows.append({"row": "total", "metric": "percent_served",
                 "a": sa.percent_served_total, "b": sb.percent_served_total,
                 "delta": sb.percent_served_total - sa.percent_served_total})
    rows.append({"row": "total", "metric": "pv_utilization",
                 "a": sa.pv_utilization_total, "b": sb.pv_utilization_total,
                 "delta": sb.pv_utilization_total - sa.pv_utilization_total})
    return rows


# ---------------------------------------------------------------------------
# file outputs
# ---------------------------------------------------------------------------

def _summary_dict(s: MetricsSummary) -> dict:
    return {
        "scenario": s.scenario_name,
        "mode": s.mode,
        "total_minutes": s.total_minutes,
        "percent_served": {str(z): v for z, v in s.percent_served.items()},
        "percent_served_total": s.percent_served_total,
        "pv_utilization": {str(f): v for f, v in s.pv_utilization.items()},
        "pv_utilization_total": s.pv_utilization_total,
        "served_kwh": s.served_kwh,
        "demand_kwh": s.demand_kwh,
        "topology_change_count": s.topology_change_count,
        "final_soc_kwh": {str(j): v for j, v in s.final_soc_kwh.items()},
        "final_fuel_kwh": {str(j): v for j, v in s.final_fuel_kwh.items()},
        "critical_unserved_hours": s.critical_unserved_hours,
    }


def summary_from_file(path: str | Path) -> MetricsSummary:
    doc = json.loads(Path(path).read_text())
    return MetricsSummary(
        scenario_name=doc["scenario"], mode=doc["mode"],
        total_minutes=doc["total_minutes"],
        percent_served={int(z): v for z, v in doc["percent_served"].items()},
        percent_served_total=doc["percent_served_total"],
        pv_utilization={int(f): v for f, v in doc["pv_utilization"].items()},
        pv_utilization_total=doc["pv_utilization_total"],
        served_kwh=doc["served_kwh"], demand_kwh=doc["demand_kwh"],
        topology_change_count=doc["topology_change_count"],
        final_soc_kwh={int(j): v for j, v in doc["final_soc_kwh"].items()},
        final_fuel_kwh={int(j): v for j, v in doc["final_fuel_kwh"].items()},
        critical_unserved_hours=doc["critical_unserved_hours"])


def _write_trace(run: RestorationRun, path: Path) -> None:
    zs, gs = run.zone_ids, run.gfm_ids
    header = ["time_min"]
    for z in zs:
        header += [f"served_{z}", f"unserved_{z}", f"pv_avail_{z}",
                   f"pv_used_{z}", f"committed_{z}", f"energized_{z}",
                   f"assigned_{z}"]
    for j in gs:
        header += [f"battery_{j}", f"diesel_{j}", f"soc_{j}", f"fuel_{j}"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for s in range(run.n_steps):
            row: list[str] = [str(int(run.time_min[s]))]
            for c, _z in enumerate(zs):
                row += [repr(float(run.served_kw[s, c])),
                        repr(float(run.unserved_kw[s, c])),
                        repr(float(run.pv_potential_kw[s, c])),
                        repr(float(run.pv_used_kw[s, c])),
                        str(int(run.committed[s, c])),
                        str(int(run.energized[s, c])),
                        str(int(run.assignment[s, c]))]
            for c, _j in enumerate(gs):
                row += [repr(float(run.battery_kw[s, c])),
                        repr(float(run.diesel_kw[s, c])),
                        repr(float(run.soc_kwh[s, c])),
                        repr(float(run.fuel_kwh[s, c]))]
            wr.writerow(row)


def _write_microgrids(run: RestorationRun, path: Path) -> None:
    g = run.scenario.graph
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["time_min", "gfm", "members", "n_members", "n_critical",
                     "objective", "load_shed_term", "flow_term",
                     "switch_change_term", "closed_edges"])
        for ev in run.events:
            sol = ev.solution
            closed = ";".join(str(e) for e in sorted(
                eid for eid, on in sol.switch_status.items() if on))
            gfms = set(run.gfm_ids)
            for tree in sol.trees:
                anchor = min(tree & gfms)
                members = sorted(tree)
                ncrit = sum(1 for z in members if g.node(z).is_critical)
                wr.writerow([ev.time_min, anchor,
                             ";".join(str(z) for z in members), len(members),
                             ncrit, repr(sol.objective_value),
                             repr(sol.load_shed_term), repr(sol.flow_term),
                             repr(sol.switch_change_term), closed])


def _write_changes(run: RestorationRun, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["time_min", "kind", "id", "before", "after"])
        for ev in run.events:
            for z, old, new in ev.diff.moved:
                wr.writerow([ev.time_min, "zone", z,
                             "" if old is None else old,
                             "" if new is None else new])
            for eid, was, now in ev.diff.toggled:
                wr.writerow([ev.time_min, "switch", eid,
                             "closed" if was else "open",
                             "closed" if now else "open"])


def _write_plot_csvs(run: RestorationRun, out: Path) -> None:
    sc = run.scenario
    g = sc.graph
    feeders = sorted({n.feeder_id for n in g.nodes})
    by_feeder = {f: [n.id for n in g.nodes if n.feeder_id == f]
                 for f in feeders}
    n = run.n_steps

    with open(out / PLOT_NAMES[0], "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["time_min"] + [f"load_feeder_{f}" for f in feeders]
                    + [f"pv_feeder_{f}" for f in feeders])
        for s in range(n):
            row = [str(int(run.time_min[s]))]
            row += [repr(float(sum(sc.load_kw[z][s] for z in by_feeder[f])))
                    for f in feeders]
            row += [repr(float(sum(sc.pv_kw[z][s] for z in by_feeder[f])))
                    for f in feeders]
            wr.writerow(row)

    with open(out / PLOT_NAMES[1], "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["time_min"] + [f"soc_{j}" for j in run.gfm_ids]
                    + [f"fuel_{j}" for j in run.gfm_ids])
        for s in range(n):
            row = [str(int(run.time_min[s]))]
            row += [repr(float(run.soc_kwh[s, c]))
                    for c in range(len(run.gfm_ids))]
            row += [repr(float(run.fuel_kwh[s, c]))
                    for c in range(len(run.gfm_ids))]
            wr.writerow(row)

    with open(out / PLOT_NAMES[2], "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["time_min"] + [f"assigned_{z}" for z in run.zone_ids]
                    + [f"energized_{z}" for z in run.zone_ids])
        for s in range(n):
            row = [str(int(run.time_min[s]))]
            row += [str(int(run.assignment[s, c]))
                    for c in range(len(run.zone_ids))]
            row += [str(int(run.energized[s, c]))
                    for c in range(len(run.zone_ids))]
            wr.writerow(row)

    summary = summarize(run)
    with open(out / PLOT_NAMES[3], "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["zone", "is_critical", "percent_served"])
        for z in run.zone_ids:
            wr.writerow([z, int(g.node(z).is_critical),
                         repr(summary.percent_served[z])])
        wr.writerow(["total", "", repr(summary.percent_served_total)])


def write_outputs(run: RestorationRun, out_dir: str | Path,
                  emit_plots: bool = False) -> list[Path]:
    """Write summary, trace and topology logs; plot CSVs on request."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(run)
    paths = [out / SUMMARY_NAME, out / TRACE_NAME, out / MICROGRIDS_NAME,
             out / CHANGES_NAME]
    (out / SUMMARY_NAME).write_text(
        json.dumps(_summary_dict(summary), indent=2, sort_keys=True) + "\n")
    _write_trace(run, out / TRACE_NAME)
    _write_microgrids(run, out / MICROGRIDS_NAME)
    _write_changes(run, out / CHANGES_NAME)
    if emit_plots:
        _write_plot_csvs(run, out)
        paths += [out / name for name in PLOT_NAMES]
    return paths

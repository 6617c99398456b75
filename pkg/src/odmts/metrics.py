"""Reporting metrics computed from a design solution and a fleet result."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

from .design import DesignSolution, rider_minutes
from .fleet import FleetResult
from .instance import Instance
from .routegen import DROPOFF, PICKUP


@dataclass
class Report:
    capacity: int
    total_cost: float
    opened_lines: int
    direct_routes: int
    fleet_size: int
    avg_inconvenience: float
    avg_shuttle_usage: float | None
    usage_first_leg: float | None
    usage_last_leg: float | None
    cost_breakdown: dict[str, float]
    connectivity_flag: bool


def avg_inconvenience(ds: DesignSolution, inst: Instance) -> float:
    """Mean end-to-end minutes per rider, weighted by passenger counts."""
    total = 0.0
    riders = 0
    for c in inst.commodities:
        total += c.passengers * rider_minutes(ds, c.id, inst)
        riders += c.passengers
    return total / riders if riders else 0.0


def avg_shuttle_usage(ds: DesignSolution, inst: Instance) -> float | None:
    """Riders per shuttle route over all selected routes; each direct rider
    counts as one single-rider route. None when no routes exist."""
    riders = sum(w.passengers for w in ds.selected_routes)
    routes = len(ds.selected_routes)
    for cid in ds.direct:
        p = inst.commodity(cid).passengers
        riders += p
        routes += p
    return riders / routes if routes else None


def _leg_usage(ds: DesignSolution, kind: str) -> float | None:
    legs = [w for w in ds.selected_routes if w.kind == kind]
    if not legs:
        return None
    return sum(w.passengers for w in legs) / len(legs)


def lines_connected(opened: tuple[tuple[str, str], ...]) -> bool:
    """True when the opened lines form a single weakly connected component
    (trivially true with no lines)."""
    if not opened:
        return True
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for h, l in opened:
        parent[find(h)] = find(l)
    roots = {find(h) for hl in opened for h in hl}
    return len(roots) == 1


def build_report(ds: DesignSolution, fleet: FleetResult, inst: Instance) -> Report:
    direct_riders = sum(inst.commodity(cid).passengers for cid in ds.direct)
    return Report(
        capacity=inst.routing.shuttle_capacity,
        total_cost=ds.objective,
        opened_lines=len(ds.opened_lines),
        direct_routes=direct_riders,
        fleet_size=fleet.fleet_size,
        avg_inconvenience=avg_inconvenience(ds, inst),
        avg_shuttle_usage=avg_shuttle_usage(ds, inst),
        usage_first_leg=_leg_usage(ds, PICKUP),
        usage_last_leg=_leg_usage(ds, DROPOFF),
        cost_breakdown={
            "bus_fixed": ds.breakdown.bus_fixed,
            "shared_route": ds.breakdown.route_cost,
            "direct": ds.breakdown.direct_cost,
            "bus_inconvenience": ds.breakdown.bus_inconvenience,
        },
        connectivity_flag=lines_connected(ds.opened_lines),
    )


_CSV_COLUMNS = [
    "capacity",
    "total_cost",
    "fleet_size",
    "direct_routes",
    "opened_lines",
    "avg_inconvenience",
    "avg_shuttle_usage",
    "connectivity_flag",
]


def report_to_dict(report: Report) -> dict:
    out = {
        "capacity": report.capacity,
        "total_cost": report.total_cost,
        "opened_lines": report.opened_lines,
        "direct_routes": report.direct_routes,
        "fleet_size": report.fleet_size,
        "avg_inconvenience": report.avg_inconvenience,
        "cost_breakdown": dict(report.cost_breakdown),
        "connectivity_flag": report.connectivity_flag,
    }
    # Ratios over empty denominators are omitted rather than written as null.
    for key, val in (
        ("avg_shuttle_usage", report.avg_shuttle_usage),
        ("usage_first_leg", report.usage_first_leg),
        ("usage_last_leg", report.usage_last_leg),
    ):
        if val is not None:
            out[key] = val
    return out


def emit_report(reports: Report | list[Report], path: str, fmt: str) -> None:
    """Write one report (JSON) or a capacity-keyed table of reports (CSV)."""
    items = reports if isinstance(reports, list) else [reports]
    if fmt == "json":
        payload = [report_to_dict(r) for r in items]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload[0] if not isinstance(reports, list) else payload, fh, indent=2)
            fh.write("\n")
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_COLUMNS)
            for r in items:
                row = report_to_dict(r)
                writer.writerow([row.get(col, "") for col in _CSV_COLUMNS])
    else:
        raise ValueError(f"unknown report format {fmt!r} (expected 'json' or 'csv')")

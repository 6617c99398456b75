"""Fleet sizing: minimum number of shuttles to serve all selected routes.

Each selected route becomes a timed task (start location, end location,
start time, duration). Two tasks are compatible when one shuttle can serve
them back to back, i.e. finish the first and reposition before the second
starts. The minimum fleet is the minimum number of source-to-sink flow
units covering every task:

* the dense formulation puts an arc on every compatible ordered pair and
  requires exactly one unit through each task;
* the sparse formulation drops transitive arcs (kept only when no one-stop
  relay exists), requires at least one unit per task and lets arcs carry
  any integer flow. Both constraint matrices are totally unimodular, so a
  basic LP optimum is already integral.

Schedules come from decomposing the flow into source-sink paths; a task is
assigned to the first path that reaches it. A bipartite matching oracle
(minimum path cover) is provided for cross-checking.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .instance import EPS, Instance
from .milp import EQUAL, GREATER_EQUAL, MilpModel, OPTIMAL, solve_lp
from .routegen import DROPOFF, PICKUP

SOURCE = "s"
SINK = "t"

DENSE = "dense"
SPARSE = "sparse"


class FlowError(ValueError):
    """The flow handed to schedule recovery is not a valid integral flow."""


@dataclass(frozen=True)
class Task:
    id: str
    start_loc: str
    end_loc: str
    start: float
    duration: float


@dataclass
class FleetGraph:
    kind: str
    tasks: tuple[Task, ...]  # sorted by (start, id)
    arcs: set[tuple[int, int]]  # task-index pairs
    source_arcs: set[int]
    sink_arcs: set[int]


@dataclass
class FleetResult:
    fleet_size: int
    schedules: tuple[tuple[str, ...], ...]
    flows: dict[tuple, int]


def routes_to_tasks(ds, inst: Instance) -> list[Task]:
    """Tasks for a design solution: one per selected pickup/dropoff route and,
    for each direct commodity, one single-rider task per passenger."""
    tasks: list[Task] = []
    for w in ds.selected_routes:
        first, last = w.commodities[0], w.commodities[-1]
        if w.kind == PICKUP:
            tasks.append(
                Task(f"p:{w.hub}:{'|'.join(c.id for c in w.commodities)}",
                     first.origin, w.hub, w.start_time, w.duration)
            )
        elif w.kind == DROPOFF:
            tasks.append(
                Task(f"d:{w.hub}:{'|'.join(c.id for c in w.commodities)}",
                     w.hub, last.destination, w.start_time, w.duration)
            )
    for cid in sorted(ds.direct):
        c = inst.commodity(cid)
        for k in range(c.passengers):
            tasks.append(
                Task(f"direct:{cid}:{k}", c.origin, c.destination, c.depart,
                     inst.time(c.origin, c.destination))
            )
    return tasks


def _sorted_tasks(tasks) -> tuple[Task, ...]:
    return tuple(sorted(tasks, key=lambda t: (t.start, t.id)))


def compatible(a: Task, b: Task, inst: Instance) -> bool:
    """True when one shuttle can serve b right after a."""
    if b.start <= a.start + EPS:
        return False
    return a.start + a.duration + inst.time(a.end_loc, b.start_loc) <= b.start + EPS


def _compatibility(tasks: tuple[Task, ...], inst: Instance) -> np.ndarray:
    n = len(tasks)
    comp = np.zeros((n, n), dtype=bool)
    for i, a in enumerate(tasks):
        for j, b in enumerate(tasks):
            if i != j and compatible(a, b, inst):
                comp[i, j] = True
    return comp


def build_dense_graph(tasks, inst: Instance) -> FleetGraph:
    """Arc on every compatible ordered pair; source and sink connect to all."""
    ts = _sorted_tasks(tasks)
    comp = _compatibility(ts, inst)
    arcs = {(i, j) for i, j in np.argwhere(comp)}
    n = len(ts)
    return FleetGraph(DENSE, ts, arcs, set(range(n)), set(range(n)))


def build_sparse_graph(tasks, inst: Instance) -> FleetGraph:
    """Keep a compatibility arc only when no one-stop relay covers it; the
    source feeds tasks without predecessors and tasks without successors
    drain to the sink."""
    ts = _sorted_tasks(tasks)
    comp = _compatibility(ts, inst)
    relay = (comp.astype(np.int32) @ comp.astype(np.int32)) > 0
    keep = comp & ~relay
    arcs = {(i, j) for i, j in np.argwhere(keep)}
    n = len(ts)
    has_in = {j for _, j in arcs}
    has_out = {i for i, _ in arcs}
    return FleetGraph(SPARSE, ts, arcs, set(range(n)) - has_in, set(range(n)) - has_out)


def fleet_model(g: FleetGraph) -> tuple[MilpModel, dict[tuple, int]]:
    """Flow model for a fleet graph: exact unit visits on the dense graph,
    covering visits with uncapacitated arcs on the sparse one. Returns the
    model and the arc -> variable index map."""
    model = MilpModel(name=f"fleet-{g.kind}")
    binary = g.kind == DENSE
    var: dict[tuple, int] = {}
    for i in sorted(g.source_arcs):
        var[(SOURCE, i)] = model.add_var(f"v[s,{i}]", 0, 1 if binary else np.inf)
    for i, j in sorted(g.arcs):
        var[(i, j)] = model.add_var(f"v[{i},{j}]", 0, 1 if binary else np.inf)
    for i in sorted(g.sink_arcs):
        var[(i, SINK)] = model.add_var(f"v[{i},t]", 0, 1 if binary else np.inf)

    n = len(g.tasks)
    into = [[] for _ in range(n)]
    out_of = [[] for _ in range(n)]
    for key, idx in var.items():
        a, b = key
        if b != SINK:
            into[b].append(idx)
        if a != SOURCE:
            out_of[a].append(idx)

    for i in range(n):
        visit = {idx: 1.0 for idx in into[i]}
        model.add_constraint(visit, EQUAL if binary else GREATER_EQUAL, 1.0, name=f"visit[{i}]")
        balance = {idx: 1.0 for idx in into[i]}
        for idx in out_of[i]:
            balance[idx] = balance.get(idx, 0.0) - 1.0
        model.add_constraint(balance, EQUAL, 0.0, name=f"conserve[{i}]")

    model.set_objective({var[(SOURCE, i)]: 1.0 for i in sorted(g.source_arcs)})
    return model, var


def _solve_flow(g: FleetGraph) -> dict[tuple, int]:
    model, var = fleet_model(g)
    sol = solve_lp(model)
    if sol.status != OPTIMAL:
        raise FlowError(f"fleet model unexpectedly {sol.status}")
    flows = {}
    for key, idx in var.items():
        val = sol.values[model.variables[idx].name]
        if abs(val - round(val)) > 1e-6:
            raise FlowError(f"fleet LP returned fractional flow {val} on arc {key}")
        flows[key] = int(round(val))
    return flows


def solve_fleet_dense(g: FleetGraph) -> FleetResult:
    """Solve the exact-cover flow model; schedules read off the unit arcs."""
    if not g.tasks:
        return FleetResult(0, (), {})
    flows = _solve_flow(g)
    succ = {}
    for (a, b), val in flows.items():
        if val > 0 and a != SOURCE and b != SINK:
            succ[a] = b
    schedules = []
    for i in sorted(g.source_arcs):
        if flows.get((SOURCE, i), 0) < 1:
            continue
        chain = [i]
        while chain[-1] in succ:
            chain.append(succ[chain[-1]])
        schedules.append(tuple(g.tasks[k].id for k in chain))
    result = FleetResult(len(schedules), tuple(schedules), flows)
    _assert_partition(result, g)
    return result


def solve_fleet_sparse(g: FleetGraph) -> FleetResult:
    """Solve the covering flow model on the filtered graph; shuttles may share
    arcs so schedules are recovered by path decomposition."""
    if not g.tasks:
        return FleetResult(0, (), {})
    flows = _solve_flow(g)
    return recover_schedules(g, flows)


def recover_schedules(g: FleetGraph, flows: dict[tuple, int]) -> FleetResult:
    """Decompose an integral flow into source-sink paths; each path becomes one
    shuttle serving the not-yet-covered tasks along it, in path order."""
    residual = {}
    for key, val in flows.items():
        if val != int(val) or val < 0:
            raise FlowError(f"flow on arc {key} is not a nonnegative integer: {val}")
        if val:
            residual[key] = int(val)

    n = len(g.tasks)
    for i in range(n):
        inflow = sum(v for (a, b), v in residual.items() if b == i)
        outflow = sum(v for (a, b), v in residual.items() if a == i)
        if inflow != outflow:
            raise FlowError(f"flow not conserved at task {i}: in {inflow} vs out {outflow}")
        if inflow < 1:
            raise FlowError(f"task {i} is not covered by the flow")

    out_arcs: dict[object, list] = {}
    for (a, b) in residual:
        out_arcs.setdefault(a, []).append(b)
    for succs in out_arcs.values():
        succs.sort(key=lambda b: (1, "") if b == SINK else (0, g.tasks[b].id))

    covered: set[int] = set()
    schedules: list[tuple[str, ...]] = []
    total = sum(v for (a, _), v in residual.items() if a == SOURCE)
    for _ in range(total):
        path = []
        node: object = SOURCE
        while node != SINK:
            nxt = None
            for b in out_arcs.get(node, []):
                if residual.get((node, b), 0) > 0:
                    nxt = b
                    break
            if nxt is None:
                raise FlowError(f"flow decomposition stuck at node {node}")
            residual[(node, nxt)] -= 1
            if nxt != SINK:
                path.append(nxt)
            node = nxt
        fresh = [i for i in path if i not in covered]
        if not fresh:
            raise FlowError(
                "a flow unit covers no new task; the flow is not a minimum covering flow"
            )
        covered.update(fresh)
        schedules.append(tuple(g.tasks[i].id for i in fresh))
    if len(covered) != n:
        raise FlowError("flow decomposition left tasks unserved")
    result = FleetResult(len(schedules), tuple(schedules), dict(flows))
    _assert_partition(result, g)
    return result


def _assert_partition(result: FleetResult, g: FleetGraph) -> None:
    seen: list[str] = [tid for sched in result.schedules for tid in sched]
    if len(seen) != len(set(seen)) or set(seen) != {t.id for t in g.tasks}:
        raise FlowError("schedules do not partition the task set")


def schedules_feasible(result: FleetResult, tasks, inst: Instance) -> bool:
    """Every consecutive task pair in every schedule must be servable by one
    shuttle (holds even across filtered arcs, by the triangle inequality)."""
    by_id = {t.id: t for t in tasks}
    for sched in result.schedules:
        for a_id, b_id in zip(sched, sched[1:]):
            a, b = by_id[a_id], by_id[b_id]
            if a.start + a.duration + inst.time(a.end_loc, b.start_loc) > b.start + EPS:
                return False
    return True


def min_fleet_oracle(tasks, inst: Instance) -> int:
    """Independent check: minimum path cover of the compatibility relation,
    computed as task count minus a maximum bipartite matching."""
    ts = _sorted_tasks(tasks)
    n = len(ts)
    comp = _compatibility(ts, inst)
    adj = [list(np.flatnonzero(comp[i])) for i in range(n)]
    match_right: list[int | None] = [None] * n

    def try_assign(i: int, visited: list[bool]) -> bool:
        for j in adj[i]:
            if visited[j]:
                continue
            visited[j] = True
            if match_right[j] is None or try_assign(match_right[j], visited):
                match_right[j] = i
                return True
        return False

    matched = 0
    for i in range(n):
        if try_assign(i, [False] * n):
            matched += 1
    return n - matched


# -- serialization -----------------------------------------------------------


def result_to_dict(result: FleetResult, tasks) -> dict:
    by_id = {t.id: t for t in tasks}
    return {
        "fleet_size": result.fleet_size,
        "schedules": [list(s) for s in result.schedules],
        "tasks": [
            {
                "id": t.id,
                "start_loc": t.start_loc,
                "end_loc": t.end_loc,
                "start": t.start,
                "duration": t.duration,
            }
            for t in sorted(by_id.values(), key=lambda t: (t.start, t.id))
        ],
    }


def save_result(result: FleetResult, tasks, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result_to_dict(result, tasks), fh, indent=2, sort_keys=True)
        fh.write("\n")

"""Delimited reports, run figures, and solution (de)serialization.

Every CSV starts with reproducibility comment lines (seed, instance hash,
config echo). Figures are rendered with the Agg backend next to the CSVs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .bnp import Solution, SolverStats
from .degradation import FadeReport
from .instances import Instance
from .master import Column
from .network import CHARGE, SINK, SOURCE, TRIP, WAIT, DepotGraph


def write_csv(path, rows: list[dict], fieldnames: list[str], meta: dict) -> None:
    with open(path, "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}: {v}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def node_tag(graph: DepotGraph, idx: int) -> str:
    n = graph.nodes[idx]
    inst = graph.instance
    if n.kind == TRIP:
        return f"trip:{inst.trips[n.trip_idx].id}"
    if n.kind in (WAIT, CHARGE):
        return f"{n.kind}:{inst.stations[n.station_idx].id}:{n.interval}"
    return "source" if n.kind == SOURCE else "sink"


def _tag_lookup(graph: DepotGraph) -> dict[str, int]:
    return {node_tag(graph, i): i for i in range(len(graph.nodes))}


def solution_to_obj(solution: Solution, instance: Instance,
                    graphs: list[DepotGraph]) -> dict:
    return {
        "instance_hash": instance.content_hash(),
        "epsilon": solution.epsilon,
        "sigma_low": instance.policy.sigma_low,
        "sigma_up": instance.policy.sigma_up,
        "objective": solution.objective,
        "n_vehicles": solution.n_vehicles,
        "stats": asdict(solution.stats),
        "schedules": [{
            "depot": instance.depots[c.depot_idx].id,
            "cost": c.cost,
            "survival": c.survival,
            "log_survival": c.log_survival,
            "trips": [instance.trips[t].id for t in c.trips],
            "nodes": [node_tag(graphs[c.depot_idx], v) for v in c.node_seq],
        } for c in solution.columns],
    }


def write_solution(path, solution: Solution, instance: Instance,
                   graphs: list[DepotGraph]) -> None:
    with open(path, "w") as fh:
        json.dump(solution_to_obj(solution, instance, graphs), fh, indent=1)
        fh.write("\n")


def read_solution(path, instance: Instance,
                  graphs: list[DepotGraph]) -> Solution:
    with open(path) as fh:
        obj = json.load(fh)
    depot_ids = {d.id: i for i, d in enumerate(instance.depots)}
    lookups = [_tag_lookup(g) for g in graphs]
    trip_ids = {t.id: i for i, t in enumerate(instance.trips)}
    columns = []
    for sched in obj["schedules"]:
        d = depot_ids[sched["depot"]]
        g = graphs[d]
        node_seq = tuple(lookups[d][tag] for tag in sched["nodes"])
        arc_seq = []
        for a, b in zip(node_seq, node_seq[1:]):
            arc = g.arc_between(a, b)
            if arc is None:
                raise ValueError(f"solution path has no arc {a}->{b}")
            arc_seq.append(arc.index)
        charges = tuple(sorted((g.nodes[v].station_idx, g.nodes[v].interval)
                               for v in node_seq if g.nodes[v].kind == CHARGE))
        columns.append(Column(
            depot_idx=d, node_seq=node_seq, arc_seq=tuple(arc_seq),
            cost=sched["cost"],
            trips=tuple(sorted(trip_ids[t] for t in sched["trips"])),
            charger_usage=charges, survival=sched["survival"],
            log_survival=sched["log_survival"]))
    stats = SolverStats(**obj["stats"])
    return Solution(obj["objective"], columns, stats, obj["epsilon"])


# --- figures -----------------------------------------------------------


def sweep_figures(rows: list[dict], out_dir) -> list[str]:
    """Cost-vs-epsilon and fade-vs-epsilon curves, one line per SoC range."""
    written = []
    panels = [("objective", "Operational cost", "sweep_costs.png"),
              ("yearly_fade_kwh", "Yearly capacity fade per EB (kWh)", "sweep_fade.png")]
    ranges = sorted({r["range"] for r in rows})
    for key, ylabel, fname in panels:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for rng in ranges:
            pts = sorted(((r["epsilon"], r[key]) for r in rows
                          if r["range"] == rng and r[key] == r[key]))
            if not pts:
                continue
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    marker="o", label=f"range {rng}")
        ax.set_xlabel("overuse probability threshold")
        ax.set_ylabel(ylabel)
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = str(out_dir / fname)
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def fade_figure(report: FadeReport, out_path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.5))
    idx = [s.schedule_idx for s in report.per_schedule]
    ax1.bar(idx, [s.yearly_fade_kwh for s in report.per_schedule], color="tab:blue")
    ax1.set_xlabel("schedule")
    ax1.set_ylabel("yearly fade (kWh)")
    ax2.bar(idx, [s.overuse_frequency for s in report.per_schedule], color="tab:red")
    ax2.set_xlabel("schedule")
    ax2.set_ylabel("overuse frequency")
    fig.tight_layout()
    fig.savefig(str(out_path), dpi=150)
    plt.close(fig)

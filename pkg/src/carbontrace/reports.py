"""CSV/JSON writers for reports, contributions and flow graphs.

CSV floats use 9 significant digits so reruns diff cleanly; undefined
values are written as empty fields (``null`` in JSON).
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .emissions import EmissionReport
from .flowgraph import FlowGraph
from .network import Network
from .tracing import ContributionMatrix

REPORT_HEADER = ("bus", "demand_mw", "total_emission", "avg_rate", "marginal_rate")
SUMMARY_KEYS = (
    "load_factor",
    "status",
    "avg_rate_mean",
    "avg_rate_std",
    "marginal_rate_mean",
    "marginal_rate_std",
    "system_emission",
    "system_cost",
)


def fmt(x: Any) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    if x is None or math.isnan(x):
        return ""
    return format(float(x), ".9g")


def _json_num(x: float) -> float | None:
    return None if x is None or math.isnan(x) else float(x)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n")


def report_rows(r: EmissionReport) -> list[tuple]:
    return [
        (b, r.demand[i], r.node_total_emission[i], r.average_rate[i], r.marginal_rate[i])
        for i, b in enumerate(r.bus_ids)
    ]


def report_to_dict(r: EmissionReport) -> dict[str, Any]:
    return {
        "load_factor": r.load_factor,
        "system_emission": r.system_emission,
        "system_cost": r.system_cost,
        "buses": [
            {
                "bus": int(b),
                "demand_mw": float(d),
                "total_emission": float(e),
                "avg_rate": _json_num(a),
                "marginal_rate": _json_num(m),
            }
            for b, d, e, a, m in report_rows(r)
        ],
        "marginal_notes": {str(k): v for k, v in sorted(r.marginal_notes.items())},
    }


def write_report(r: EmissionReport, out_dir: Path, stem: str, formats: Iterable[str]) -> list[Path]:
    written = []
    for f in formats:
        path = out_dir / f"{stem}.{f}"
        if f == "csv":
            _write_csv(path, REPORT_HEADER, report_rows(r))
        else:
            _write_json(path, report_to_dict(r))
        written.append(path)
    return written


def write_summary(rows: list[dict[str, Any]], out_dir: Path, formats: Iterable[str]) -> list[Path]:
    written = []
    for f in formats:
        path = out_dir / f"summary.{f}"
        if f == "csv":
            _write_csv(path, SUMMARY_KEYS, ([row.get(k) for k in SUMMARY_KEYS] for row in rows))
        else:
            _write_json(path, [{k: _json_num(v) if isinstance(v, float) else v for k, v in row.items()} for row in rows])
        written.append(path)
    return written


def write_contributions(net: Network, m: ContributionMatrix, out_dir: Path, formats: Iterable[str]) -> list[Path]:
    gen_ids = [g.id for g in net.generators]
    bus_ids = m.flow_graph.bus_ids
    written = []
    for f in formats:
        if f == "csv":
            path = out_dir / "contributions.csv"
            _write_csv(
                path,
                ("bus", "generator", "mw"),
                ((b, gen_ids[k], m.node_contrib[i, k]) for i, b in enumerate(bus_ids) for k in range(len(gen_ids))),
            )
            lpath = out_dir / "line_contributions.csv"
            _write_csv(
                lpath,
                ("from", "to", "generator", "mw"),
                (
                    (ln.from_bus, ln.to_bus, gen_ids[k], m.line_contrib[l, k])
                    for l, ln in enumerate(net.lines)
                    for k in range(len(gen_ids))
                ),
            )
            written += [path, lpath]
        else:
            path = out_dir / "contributions.json"
            _write_json(
                path,
                {
                    "generators": gen_ids,
                    "buses": list(bus_ids),
                    "lines": [[ln.from_bus, ln.to_bus] for ln in net.lines],
                    "node_contrib": m.node_contrib.tolist(),
                    "line_contrib": m.line_contrib.tolist(),
                    "reachable_sets": {str(gen_ids[k]): sorted(s) for k, s in enumerate(m.reachable_sets)},
                },
            )
            written.append(path)
    return written


def write_flowgraph(g: FlowGraph, path: Path) -> Path:
    _write_csv(path, ("tail", "head", "flow_mw"), g.edges)
    return path

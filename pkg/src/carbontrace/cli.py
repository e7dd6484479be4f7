"""Command-line driver: ``carbontrace {run,sweep,trace,check}``.

Exit codes: 0 success, 1 bad input (parse or validation), 2 infeasible
dispatch, 3 failed invariant.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dispatch import TAU_FEAS, DispatchResult, load_dispatch, save_dispatch, solve_dcopf, verify_dispatch
from .emissions import EmissionReport, emission_report
from .errors import CaseFormatError, CycleError, InfeasibleDispatchError, InvariantError, ValidationError
from .flowgraph import build_flow_graph
from .network import Network, load_network, scale_loads
from .reports import fmt, write_contributions, write_flowgraph, write_report, write_summary
from .tracing import contribution_residuals, trace_all

log = logging.getLogger("carbontrace")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_INVARIANT = 0, 1, 2, 3
DEFAULT_FACTORS = (0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass
class RunConfig:
    case_path: str
    command: str
    load_factor: float = 1.0
    load_factors: list[float] = field(default_factory=lambda: list(DEFAULT_FACTORS))
    epsilon: float | None = None  # None means automatic
    method: str = "derivative"
    output_dir: Path = Path(".")
    formats: list[str] = field(default_factory=lambda: ["csv"])
    dispatch_in: str | None = None
    dispatch_out: str | None = None
    emit_flowgraph: bool = False
    emit_contrib: bool = False
    contrib_dir: Path | None = None


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _factor_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals or any(not v >= 0 for v in vals):
        raise argparse.ArgumentTypeError("load factors must be non-negative")
    return vals


def _nonneg(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _epsilon(text: str) -> float | None:
    if text == "auto":
        return None
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("epsilon must be > 0 or 'auto'")
    return v


def _formats(text: str) -> list[str]:
    vals = [v.strip() for v in text.split(",") if v.strip()]
    bad = [v for v in vals if v not in ("csv", "json")]
    if bad or not vals:
        raise argparse.ArgumentTypeError("formats must be drawn from csv,json")
    return list(dict.fromkeys(vals))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="carbontrace", description="Trace generator carbon emissions to loads.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--case", required=True, help="case JSON file or bundled case name")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", default="csv", type=_formats, help="csv, json or csv,json")
        p.add_argument("--emit-flowgraph", action="store_true")
        p.add_argument("--emit-contrib", action="store_true", help="write the contribution matrix to --out")
        p.add_argument("--contrib-out", help="write the contribution matrix to this directory")

    def single(p: argparse.ArgumentParser) -> None:
        p.add_argument("--load-factor", type=_nonneg, default=1.0)
        p.add_argument("--dispatch-in", help="use this dispatch JSON instead of solving")
        p.add_argument("--dispatch-out", help="write the dispatch used to this JSON file")

    def marginal(p: argparse.ArgumentParser) -> None:
        p.add_argument("--epsilon", type=_epsilon, default=None, help="perturbation in MW or 'auto'")
        p.add_argument("--method", choices=("derivative", "difference"), default="derivative")

    p = sub.add_parser("run", help="emission report for one load level")
    common(p)
    single(p)
    marginal(p)
    p = sub.add_parser("sweep", help="emission reports over several load levels")
    common(p)
    p.add_argument("--factors", type=_factor_list, default=list(DEFAULT_FACTORS))
    marginal(p)
    p = sub.add_parser("trace", help="dump the generator contribution matrix")
    common(p)
    single(p)
    p = sub.add_parser("check", help="verify conservation identities")
    common(p)
    single(p)
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    return RunConfig(
        case_path=ns.case,
        command=ns.command,
        load_factor=getattr(ns, "load_factor", 1.0),
        load_factors=getattr(ns, "factors", list(DEFAULT_FACTORS)),
        epsilon=getattr(ns, "epsilon", None),
        method=getattr(ns, "method", "derivative"),
        output_dir=Path(ns.out),
        formats=ns.format,
        dispatch_in=getattr(ns, "dispatch_in", None),
        dispatch_out=getattr(ns, "dispatch_out", None),
        emit_flowgraph=ns.emit_flowgraph,
        emit_contrib=ns.emit_contrib or ns.contrib_out is not None,
        contrib_dir=Path(ns.contrib_out) if ns.contrib_out else None,
    )


def _print_report(r: EmissionReport) -> None:
    print(f"load factor {r.load_factor:g}")
    print(f"{'bus':>6} {'demand_mw':>12} {'avg_rate':>12} {'marginal_rate':>14}")
    for i, b in enumerate(r.bus_ids):
        avg = fmt(r.average_rate[i]) or "undefined"
        mu = fmt(r.marginal_rate[i]) or "undefined"
        print(f"{b:>6} {fmt(r.demand[i]):>12} {avg:>12} {mu:>14}")
    print(f"system emission {fmt(r.system_emission)} lbs/h, system cost {fmt(r.system_cost)} $/h")
    for b, note in sorted(r.marginal_notes.items()):
        print(f"bus {b}: marginal rate undefined ({note})")


def _external_dispatch(cfg: RunConfig, net: Network) -> DispatchResult | None:
    if not cfg.dispatch_in:
        return None
    d = load_dispatch(cfg.dispatch_in)
    bad = verify_dispatch(net, d)
    if bad:
        raise ValidationError("external dispatch fails validation: " + "; ".join(v.describe(net) for v in bad[:5]))
    return d


def _write_contrib(cfg: RunConfig, net: Network, m) -> None:
    out = cfg.contrib_dir or cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_contributions(net, m, out, cfg.formats)


def _emit_extras(cfg: RunConfig, net: Network, r: EmissionReport) -> None:
    if cfg.emit_flowgraph and r.contributions is not None:
        write_flowgraph(r.contributions.flow_graph, cfg.output_dir / "flowgraph.csv")
    if cfg.emit_contrib and r.contributions is not None:
        _write_contrib(cfg, net, r.contributions)
    if cfg.dispatch_out and r.dispatch is not None:
        save_dispatch(r.dispatch, cfg.dispatch_out)


def cmd_run(cfg: RunConfig) -> int:
    net = load_network(cfg.case_path)
    scaled = scale_loads(net, cfg.load_factor)
    ext = _external_dispatch(cfg, scaled)
    r = emission_report(net, cfg.load_factor, epsilon=cfg.epsilon, dispatch=ext, method=cfg.method)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    write_report(r, cfg.output_dir, "report", cfg.formats)
    _emit_extras(cfg, scaled, r)
    _print_report(r)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    net = load_network(cfg.case_path)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    status = EXIT_OK
    for f in cfg.load_factors:
        try:
            r = emission_report(net, f, epsilon=cfg.epsilon, method=cfg.method)
        except InfeasibleDispatchError as exc:
            log.error("%s", exc)
            print(f"FAILED {exc}")
            rows.append({"load_factor": f, "status": "infeasible"})
            status = EXIT_INFEASIBLE
            continue
        write_report(r, cfg.output_dir, f"report_f{f:g}", cfg.formats)
        rows.append({**r.summary(), "status": "ok"})
        print(
            f"load factor {f:g}: mean avg rate {fmt(rows[-1]['avg_rate_mean'])}, "
            f"mean marginal rate {fmt(rows[-1]['marginal_rate_mean'])}"
        )
    write_summary(rows, cfg.output_dir, cfg.formats)
    return status


def cmd_trace(cfg: RunConfig) -> int:
    net = scale_loads(load_network(cfg.case_path), cfg.load_factor)
    d = _external_dispatch(cfg, net) or solve_dcopf(net)
    g = build_flow_graph(net, d)
    m = trace_all(net, g)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    _write_contrib(cfg, net, m)
    if cfg.emit_flowgraph:
        write_flowgraph(g, cfg.output_dir / "flowgraph.csv")
    if cfg.dispatch_out:
        save_dispatch(d, cfg.dispatch_out)
    gen_ids = [gen.id for gen in net.generators]
    print("bus " + " ".join(f"{'gen ' + str(k):>12}" for k in gen_ids))
    for i, b in enumerate(net.bus_ids):
        print(f"{b:>3} " + " ".join(f"{fmt(v):>12}" for v in m.node_contrib[i]))
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    net = scale_loads(load_network(cfg.case_path), cfg.load_factor)
    d = load_dispatch(cfg.dispatch_in) if cfg.dispatch_in else solve_dcopf(net)
    results: list[tuple[str, bool, str]] = []

    violations = verify_dispatch(net, d)
    results.append(
        ("dispatch feasibility and nodal balance", not violations, "; ".join(v.describe(net) for v in violations[:3]))
    )
    if not violations:
        try:
            g = build_flow_graph(net, d)
            results.append(("flow graph acyclic", True, f"{g.n_edges} edges"))
        except CycleError as exc:
            results.append(("flow graph acyclic", False, str(exc)))
            g = None
        if g is not None:
            m = trace_all(net, g, validate=False)
            demand_res = np.abs(m.node_contrib.sum(axis=1) - g.withdrawals).max()
            gen_res = np.abs(m.node_contrib.sum(axis=0) - d.generation).max()
            emis_res = abs(float((m.node_contrib @ net.emission_rate).sum() - net.emission_rate @ d.generation))
            emis_tol = TAU_FEAS * max(1.0, float(net.emission_rate.max(initial=0.0)))
            uncovered = [p for p in contribution_residuals(net, m) if "not reached" in p]
            results += [
                ("row sums equal demands", demand_res <= TAU_FEAS, f"max residual {demand_res:.3g} MW"),
                ("column sums equal generation", gen_res <= TAU_FEAS, f"max residual {gen_res:.3g} MW"),
                ("emission conservation", emis_res <= emis_tol, f"residual {emis_res:.3g} lbs/h"),
                ("every loaded bus reached by a generator", not uncovered, "; ".join(uncovered)),
            ]
    else:
        results.append(("remaining identities", False, "skipped: dispatch invalid"))

    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_INVARIANT


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "trace": cmd_trace,
    "check": cmd_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg = config_from_args(ns)
    try:
        return COMMANDS[cfg.command](cfg)
    except (CaseFormatError, ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleDispatchError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InvariantError, CycleError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())

import csv
import json
import subprocess
import sys
import time

import pytest

from carbontrace.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_INVARIANT, EXIT_OK, main


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_six_bus(tmp_path, capsys):
    assert main(["run", "--case", "six_bus.json", "--load-factor", "1.0", "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "report.csv")
    assert len(rows) == 6 and rows[0]["bus"] == "1" and rows[0]["avg_rate"] == "2388"
    assert "system emission" in capsys.readouterr().out


def test_run_thirty_bus_is_fast(tmp_path):
    t0 = time.perf_counter()
    assert main(["run", "--case", "thirty_bus.json", "--out", str(tmp_path)]) == EXIT_OK
    assert time.perf_counter() - t0 < 1.0


def test_output_is_byte_identical(tmp_path):
    for sub in ("a", "b"):
        main(["run", "--case", "thirty_bus", "--out", str(tmp_path / sub), "--emit-contrib"])
    for name in ("report.csv", "contributions.csv", "line_contributions.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_dispatch_round_trip(tmp_path):
    d = tmp_path / "d.json"
    assert main(["run", "--case", "six_bus", "--out", str(tmp_path / "a"), "--dispatch-out", str(d)]) == EXIT_OK
    assert main(["run", "--case", "six_bus", "--out", str(tmp_path / "b"), "--dispatch-in", str(d)]) == EXIT_OK
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_rejected_external_dispatch(tmp_path):
    d = tmp_path / "d.json"
    main(["trace", "--case", "six_bus", "--out", str(tmp_path), "--dispatch-out", str(d)])
    data = json.loads(d.read_text())
    data["generation"][0] += 5.0
    d.write_text(json.dumps(data))
    assert main(["run", "--case", "six_bus", "--out", str(tmp_path), "--dispatch-in", str(d)]) == EXIT_INPUT


def test_sweep_default(tmp_path):
    assert main(["sweep", "--case", "six_bus", "--out", str(tmp_path), "--format", "csv,json"]) == EXIT_OK
    for f in ("0.2", "0.4", "0.6", "0.8", "1"):
        assert (tmp_path / f"report_f{f}.csv").exists() and (tmp_path / f"report_f{f}.json").exists()
    summary = _rows(tmp_path / "summary.csv")
    means = [float(r["avg_rate_mean"]) for r in summary]
    assert all(b <= a + 1e-9 for a, b in zip(means, means[1:]))
    assert json.loads((tmp_path / "summary.json").read_text())[0]["status"] == "ok"


def test_sweep_zero_load(tmp_path):
    assert main(["sweep", "--case", "six_bus", "--factors", "0", "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "report_f0.csv")
    assert all(float(r["total_emission"]) == 0.0 and r["avg_rate"] == "" for r in rows)


def test_sweep_marks_infeasible_factor(tmp_path):
    code = main(["sweep", "--case", "thirty_bus", "--factors", "0.5,2.0", "--out", str(tmp_path)])
    assert code == EXIT_INFEASIBLE
    status = [r["status"] for r in _rows(tmp_path / "summary.csv")]
    assert status == ["ok", "infeasible"]
    assert (tmp_path / "report_f0.5.csv").exists()


def test_run_infeasible(tmp_path):
    assert main(["run", "--case", "six_bus", "--load-factor", "3", "--out", str(tmp_path)]) == EXIT_INFEASIBLE


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--case", "missing.json"],
        ["run", "--case", "six_bus", "--load-factor", "-1"],
        ["sweep", "--case", "six_bus", "--factors", "a,b"],
        ["run", "--case", "six_bus", "--format", "xml"],
        ["run", "--case", "six_bus", "--epsilon", "0"],
        ["bogus"],
    ],
)
def test_input_errors(argv):
    # argparse errors exit from inside main; validation errors return
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == EXIT_INPUT


def test_invalid_case_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"buses": [{"id": 1, "demand": -3}], "lines": [], "generators": [], "reference_bus": 1}')
    assert main(["run", "--case", str(p), "--out", str(tmp_path)]) == EXIT_INPUT


@pytest.mark.parametrize("case", ["six_bus", "thirty_bus"])
def test_check_passes(case, capsys):
    assert main(["check", "--case", case]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 6


def test_check_corrupted_dispatch(tmp_path, capsys):
    d = tmp_path / "d.json"
    main(["trace", "--case", "six_bus", "--out", str(tmp_path), "--dispatch-out", str(d)])
    data = json.loads(d.read_text())
    data["angles"][2] += 0.05
    d.write_text(json.dumps(data))
    capsys.readouterr()
    assert main(["check", "--case", "six_bus", "--dispatch-in", str(d)]) == EXIT_INVARIANT
    assert "FAIL  dispatch feasibility and nodal balance" in capsys.readouterr().out


def test_trace_outputs(tmp_path):
    assert main(["trace", "--case", "six_bus", "--out", str(tmp_path), "--emit-flowgraph", "--format", "csv,json"]) == 0
    contrib = _rows(tmp_path / "contributions.csv")
    assert len(contrib) == 18 and set(contrib[0]) == {"bus", "generator", "mw"}
    edges = _rows(tmp_path / "flowgraph.csv")
    assert set(edges[0]) == {"tail", "head", "flow_mw"}
    data = json.loads((tmp_path / "contributions.json").read_text())
    assert len(data["node_contrib"]) == 6


def test_contrib_out_directory(tmp_path):
    assert main(["run", "--case", "six_bus", "--out", str(tmp_path), "--contrib-out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "contributions.csv").exists()


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "carbontrace", "check", "--case", "six_bus"], capture_output=True, text=True
    )
    assert res.returncode == 0 and "PASS" in res.stdout

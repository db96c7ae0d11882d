import csv
import io
import json
from pathlib import Path

import pytest

from bilevel_sip.cli import EXIT_GUARD, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_OK, run

INSTANCES = Path(__file__).resolve().parent.parent / "instances"
THRESHOLD = str(INSTANCES / "threshold_uniform.json")
SQRT_LEADER = str(INSTANCES / "threshold_sqrt_leader.json")


def invoke(capsys, *argv):
    code = run([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_partition_report(capsys):
    code, out, _ = invoke(capsys, "partition", INSTANCES / "six_point_sum.json")
    report = json.loads(out)
    assert code == EXIT_OK
    assert len(report["instance_hash"]) == 16
    assert [r["cells"] for r in report["regions"]] == [
        [{"lo": [2], "hi": [4]}],
        [{"lo": [4], "hi": [5]}],
        [{"lo": [5], "hi": [6]}],
        [{"lo": [6], "hi": ["inf"]}],
    ]


def test_partition_map(capsys, tmp_path):
    target = tmp_path / "map.csv"
    code, _, _ = invoke(capsys, "partition", INSTANCES / "six_point_split.json", "--map", target)
    rows = list(csv.DictReader(target.open()))
    assert code == EXIT_OK and len(rows) == 4 * 3
    assert {r["region"] for r in rows} >= {"-1", "0"}


def test_eval_exact_and_mc(capsys):
    code, out, _ = invoke(capsys, "eval", INSTANCES / "six_point_sum.json", "--x", "4.5")
    report = json.loads(out)
    assert code == EXIT_OK
    assert report["distribution"]["values"] == [2.0, 5.0]
    assert report["value"] == pytest.approx(3.5)
    code, out, _ = invoke(
        capsys, "eval", INSTANCES / "six_point_sum.json", "--x", "4.5", "--mc", 20000, "--risk", "cvar:0.9"
    )
    assert code == EXIT_OK and json.loads(out)["distribution"]["source"] == "monte_carlo"


def test_eval_infeasible(capsys):
    code, _, err = invoke(capsys, "eval", THRESHOLD, "--x=-0.5")
    assert code == EXIT_INFEASIBLE and "infeasible" in err


def test_feasible_exit_codes(capsys):
    assert invoke(capsys, "feasible", THRESHOLD, "--x", "0")[0] == EXIT_OK
    code, out, _ = invoke(capsys, "feasible", THRESHOLD, "--x=-0.25")
    assert code == EXIT_INFEASIBLE
    assert json.loads(out)["witness"] == ["-0.25"]


def test_solve_grid_and_trace(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    code, out, _ = invoke(capsys, "solve", SQRT_LEADER, "--box", "0:1", "--resolution", 5, "--trace", trace)
    report = json.loads(out)
    assert code == EXIT_OK and report["best_x"] == ["0.75"]
    assert len(trace.read_text().splitlines()) == 6


def test_solve_pattern(capsys):
    code, out, _ = invoke(capsys, "solve", SQRT_LEADER, "--method", "pattern", "--x0", "0.1")
    report = json.loads(out)
    assert code == EXIT_OK and report["status"] == "converged"
    assert report["best_value"] == pytest.approx(-0.25, abs=1e-3)


def test_solve_infeasible_box(capsys):
    code, out, _ = invoke(capsys, "solve", THRESHOLD, "--box=-2:-1", "--resolution", 3)
    assert code == EXIT_INFEASIBLE and json.loads(out)["status"] == "infeasible"


def test_solve_needs_box(capsys):
    assert invoke(capsys, "solve", THRESHOLD)[0] == EXIT_INVALID


def test_fz_map(capsys):
    code, out, _ = invoke(capsys, "fz-map", THRESHOLD, "--box=-1:1", "--resolution", 5)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == EXIT_OK
    assert [r["in_FZ"] for r in rows] == ["0", "0", "1", "1", "1"]


def test_phi_curve(capsys):
    code, out, _ = invoke(
        capsys, "phi-curve", INSTANCES / "staircase.json", "--start=-0.5,0.5", "--end=-1.5,1.5", "--samples", 3
    )
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == EXIT_OK
    assert [r["phi"] for r in rows] == ["1", "2", "3"]  # ceil(-t1) + floor(t2)


def test_stability_table(capsys):
    code, out, _ = invoke(capsys, "stability", THRESHOLD, "--x", "0.5", "--sizes", "100,1000")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == EXIT_OK and [r["n"] for r in rows] == ["100", "1000"]
    assert all(float(r["q_deviation"]) <= float(r["three_over_sqrt_n"]) for r in rows)


def test_holder(capsys, tmp_path):
    code, out, _ = invoke(
        capsys, "holder", INSTANCES / "threshold_sqrt.json", "--x0", "1", "--table", tmp_path / "t.csv"
    )
    report = json.loads(out)
    assert code == EXIT_OK and report["exact"]
    assert report["exponent"] == pytest.approx(0.5, abs=1e-9)
    assert (tmp_path / "t.csv").exists()


def test_mc_workers_agree(capsys):
    args = ["mc", INSTANCES / "threshold_sqrt.json", "--x", "0.75", "--count", 150000, "--seed", 7]
    one = json.loads(invoke(capsys, *args)[1])
    two = json.loads(invoke(capsys, *args, "--workers", 2)[1])
    assert one["estimate"] == two["estimate"]
    assert one["estimate"] == pytest.approx(0.5, abs=4 * one["std_error"])


def test_output_file(capsys, tmp_path):
    target = tmp_path / "out.json"
    code, out, _ = invoke(capsys, "feasible", THRESHOLD, "--x", "0", "-o", target)
    assert code == EXIT_OK and out == ""
    assert json.loads(target.read_text())["in_FZ"]


def test_invalid_inputs(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert invoke(capsys, "partition", bad)[0] == EXIT_INVALID
    assert invoke(capsys, "eval", THRESHOLD, "--x", "1,2")[0] == EXIT_INVALID
    assert invoke(capsys, "eval", THRESHOLD, "--x", "abc")[0] == EXIT_INVALID
    assert invoke(capsys, "nonsense")[0] == EXIT_INVALID


def test_resource_guard(capsys):
    code, _, err = invoke(capsys, "partition", INSTANCES / "staircase.json", "--max-cells", 10)
    assert code == EXIT_GUARD and "resource guard" in err

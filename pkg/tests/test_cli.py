import csv
import json
import math
import subprocess
import sys

import pytest

from kemeny import __version__
from kemeny.cli import main
from kemeny.errors import PeriodicWarning


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def files(tmp_path):
    return {
        "two_state": write(tmp_path / "two_state.json",
                           {"kind": "dtmc", "matrix": [[.5, .5], [.5, .5]]}),
        "ctmc_ab": write(tmp_path / "ctmc_ab.json", {"kind": "ctmc", "matrix": [[-1, 1], [1, -1]]}),
        "malformed": write(tmp_path / "malformed.json",
                           {"kind": "dtmc", "matrix": [[.5, .5], [.3, .6]]}),
        "flip": write(tmp_path / "flip.json", {"kind": "dtmc", "matrix": [[0, 1], [1, 0]]}),
        "sped_up": write(tmp_path / "sped_up.json",
                         {"family": "sped_up_mm1", "rho": 0.5, "lambda": {"rule": "pow", "base": 2}}),
        "mm1": write(tmp_path / "mm1.json", {"family": "mm1", "lambda": 1.0, "mu": 2.0}),
        "unstable": write(tmp_path / "unstable.json", {"family": "mm1", "lambda": 2.0, "mu": 1.0}),
        "designed1": write(tmp_path / "designed1.json",
                           {"family": "designed_f", "f": {"rule": "inverse_square"}, "lambda": 1.0}),
        "short_table": write(tmp_path / "short.json",
                             {"family": "table", "lambda": {"values": [1, 1], "extend": "error"},
                              "mu": {"values": [2, 2], "extend": "error"}}),
    }


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


def test_analyze_two_state(capsys, files):
    code, rep, _ = run(capsys, "analyze", files["two_state"], "--method", "both")
    assert code == 0
    res = rep["result"]
    assert res["kprime"] == 1.0 and res["route_delta"] <= 1e-12
    assert rep["tool"] == "kemeny" and rep["version"] == __version__
    assert rep["config"]["method"] == "both" and len(rep["config"]["input_sha256"]) == 64


def test_analyze_generator(capsys, files):
    code, rep, _ = run(capsys, "analyze", files["ctmc_ab"])
    assert code == 0 and rep["result"]["kprime"] == pytest.approx(0.5, abs=1e-15)


def test_analyze_malformed_reports_row_sum(capsys, files):
    code, _, err = run(capsys, "analyze", files["malformed"])
    doc = json.loads(err)
    assert code == 2 and doc["violations"][0]["code"] == "row_sum"
    assert doc["violations"][0]["row"] == 1


def test_analyze_missing_file(capsys, tmp_path):
    code, _, _ = run(capsys, "analyze", str(tmp_path / "nope.json"))
    assert code == 2


def test_analyze_constancy_violation_exit(capsys, files):
    code, _, err = run(capsys, "analyze", files["two_state"], "--tol", "-1")
    assert code == 4 and json.loads(err)["error"] == "constancy_violation"


@pytest.mark.parametrize("method", ["hitting", "trace"])
def test_analyze_single_routes(capsys, files, method):
    code, rep, _ = run(capsys, "analyze", files["two_state"], "--method", method)
    assert code == 0
    key = "kprime" if method == "hitting" else "deviation_trace"
    assert rep["result"][key] == pytest.approx(1.0, abs=1e-14)


def test_analyze_csv(capsys, files, tmp_path):
    out = tmp_path / "csv"
    code, _, _ = run(capsys, "analyze", files["two_state"], "--csv-dir", str(out))
    assert code == 0
    names = sorted(p.name for p in out.iterdir())
    assert names and all(n.endswith(".csv") for n in names)


def test_bd_sped_up_with_ladder(capsys, files, tmp_path):
    ladder = tmp_path / "ladder.csv"
    code, rep, _ = run(capsys, "bd", files["sped_up"], "--ladder", "10,20,40,80",
                       "--ladder-csv", str(ladder))
    res = rep["result"]
    assert code == 0 and res["kprime"] == pytest.approx(4 / 3, abs=1e-9)
    rows = list(csv.DictReader(ladder.open()))
    assert [int(r["N"]) for r in rows] == [10, 20, 40, 80]
    errs = [abs(float(r["kprime_N"]) - 4 / 3) for r in rows]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_bd_mm1_diverges_analytically(capsys, files):
    code, rep, _ = run(capsys, "bd", files["mm1"])
    res = rep["result"]
    assert code == 0 and res["kprime"] is None and res["kprime_infinite"]
    assert res["verdicts"]["theta"] == "diverged(analytic)"


def test_bd_designed_theta(capsys, files):
    code, rep, _ = run(capsys, "bd", files["designed1"])
    assert code == 0 and rep["result"]["theta"] == pytest.approx(math.pi ** 2 / 6, abs=1e-7)


def test_bd_not_positive_recurrent(capsys, files):
    code, _, _ = run(capsys, "bd", files["unstable"])
    assert code == 5


def test_bd_undecided_exits_zero(capsys, files):
    code, rep, _ = run(capsys, "bd", files["short_table"])
    assert code == 0 and "undecided" in json.dumps(rep["result"]["verdicts"])


def test_bd_bad_config(capsys, tmp_path):
    code, _, _ = run(capsys, "bd", write(tmp_path / "bad.json", {"family": "nope"}))
    assert code == 2


def test_simulate_reports_exact_comparison(capsys, files):
    code, rep, _ = run(capsys, "simulate", files["two_state"], "--estimator", "stepcount",
                       "--horizon", "200", "--trajectories", "20000", "--seed", "42")
    res = rep["result"]
    assert code == 0 and res["exact"] == pytest.approx(1.0) and res["within_3se"]
    assert rep["config"]["seed"] == 42


def test_simulate_deficit(capsys, files):
    code, rep, _ = run(capsys, "simulate", files["two_state"], "--estimator", "deficit",
                       "--start", "0", "--target", "1", "--horizon", "200",
                       "--trajectories", "20000", "--seed", "42")
    assert code == 0 and rep["result"]["within_3se"]


@pytest.mark.slow
def test_simulate_full_size_example(capsys, files):
    code, rep, _ = run(capsys, "simulate", files["two_state"], "--estimator", "stepcount",
                       "--horizon", "5000", "--trajectories", "200000", "--seed", "42")
    assert code == 0 and rep["result"]["within_3se"]


def test_simulate_periodic_exit(capsys, files):
    with pytest.warns(PeriodicWarning):
        code, _, _ = run(capsys, "simulate", files["flip"], "--estimator", "stepcount",
                         "--horizon", "10", "--trajectories", "10", "--seed", "1")
    assert code == 6


def test_simulate_deficit_needs_states(capsys, files):
    code, _, _ = run(capsys, "simulate", files["two_state"], "--estimator", "deficit",
                     "--horizon", "10", "--trajectories", "10", "--seed", "1")
    assert code == 2


def test_simulate_is_bitwise_reproducible(capsys, files, tmp_path):
    outs = []
    for workers in ("1", "1", "4"):
        path = tmp_path / f"run{len(outs)}.json"
        code, _, _ = run(capsys, "simulate", files["ctmc_ab"], "--estimator", "stepcount",
                         "--horizon", "30", "--trajectories", "5000", "--seed", "9",
                         "--workers", workers, "--out", str(path))
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_replay_round_trip(capsys, files, tmp_path):
    report = tmp_path / "rep.json"
    run(capsys, "simulate", files["two_state"], "--estimator", "stepcount", "--horizon", "50",
        "--trajectories", "500", "--seed", "3", "--out", str(report))
    code, rep, _ = run(capsys, "replay", str(report))
    assert code == 0 and rep["result"]["identical"]
    doc = json.loads(report.read_text())
    doc["result"]["value"] += 1e-12
    report.write_text(json.dumps(doc))
    code, _, _ = run(capsys, "replay", str(report))
    assert code == 1


def test_replay_detects_changed_input(capsys, files, tmp_path):
    report = tmp_path / "rep.json"
    run(capsys, "analyze", files["two_state"], "--out", str(report))
    write(tmp_path / "two_state.json", {"kind": "dtmc", "matrix": [[.4, .6], [.5, .5]]})
    code, _, _ = run(capsys, "replay", str(report))
    assert code in (1, 2)


def test_design_emits_config_for_bd(capsys, tmp_path):
    cfg = tmp_path / "designed.json"
    code, rep, _ = run(capsys, "design", "--f", '{"rule": "inverse_square"}', "--lambda", "1",
                       "--show", "4", "--emit-config", str(cfg))
    res = rep["result"]
    assert code == 0 and res["roundtrip_max_rel_error"] <= 1e-12
    assert res["mu"] == pytest.approx([1.0, 8.0, 11.25, 16 * (1 + 1 / 9)], rel=1e-13)
    code, rep, _ = run(capsys, "bd", str(cfg))
    assert code == 0 and rep["result"]["theta"] == pytest.approx(math.pi ** 2 / 6, abs=1e-7)


def test_design_with_explicit_values(capsys):
    code, rep, _ = run(capsys, "design", "--f", "[0.5, 0.25, 0.125]", "--lambda", "2",
                       "--show", "3")
    assert code == 0 and rep["result"]["f"] == [0.5, 0.25, 0.125]


def test_design_rejects_bad_json(capsys):
    code, _, _ = run(capsys, "design", "--f", "{nope", "--lambda", "1")
    assert code == 2


def test_console_script_runs(files):
    out = subprocess.run([sys.executable, "-m", "kemeny.cli", "analyze", files["two_state"]],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["result"]["kprime"] == 1.0

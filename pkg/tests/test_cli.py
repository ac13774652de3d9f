import json
from pathlib import Path

import pytest

from mining_auction import analysis
from mining_auction.cli import main
from mining_auction.model import AuctionParams, CostProfile
from mining_auction.scenario import ScenarioError, parse

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

BASE = """
[miners]
costs = [3.0, 2.0]

[auction]
prize = 10.0
horizon = 2

[allocation]
family = "constant"
params = { value = 0.5 }
"""


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(cmd, scenario, out, *extra):
    return main([cmd, "--scenario", scenario, "--out", str(out), *extra])


def test_simulate_outputs(tmp_path):
    s = write(tmp_path, BASE + "[simulation]\ntrials = 20000\nseed = 4\n")
    assert run("simulate", s, tmp_path / "o") == 0
    doc = json.loads((tmp_path / "o" / "simulate.json").read_text())
    assert doc["schema_version"] == "1.0" and doc["report"] == "simulate"
    assert {"p", "q_exact", "q_hat", "stderr", "wins", "utility", "irrational"} <= doc.keys()
    assert doc["q_exact"] == pytest.approx([0.1344, 0.0784])
    header = (tmp_path / "o" / "simulate.csv").read_text().splitlines()[0]
    assert header == "miner,cost,p,q_exact,q_hat,stderr,utility,irrational"


def test_missing_seed_exit_code(tmp_path, capsys):
    s = write(tmp_path, BASE + "[simulation]\ntrials = 100\n")
    assert run("simulate", s, tmp_path) == 5
    assert "seed" in capsys.readouterr().err


def test_degenerate_profile_exit_code(tmp_path):
    text = BASE.replace("[3.0, 2.0]", "[0.0, 0.0]") + "[simulation]\ntrials = 100\nseed = 1\n"
    assert run("simulate", write(tmp_path, text), tmp_path) == 4


def test_not_converged_exit_code(tmp_path):
    text = BASE + "[solver]\ngrid_points = 17\nmax_iter = 1\n"
    assert run("solve", write(tmp_path, text), tmp_path) == 3
    assert json.loads((tmp_path / "solve.json").read_text())["converged"] is False


@pytest.mark.parametrize("snippet, field", [
    ("prize = -1.0", "auction.prize"),
    ("prize = 0.0", "auction.prize"),
])
def test_invalid_prize(tmp_path, capsys, snippet, field):
    text = BASE.replace("prize = 10.0", snippet)
    assert run("simulate", write(tmp_path, text), tmp_path) == 2
    assert field in capsys.readouterr().err


def test_empty_conditions_rejected(tmp_path, capsys):
    s = write(tmp_path, BASE + "[analysis]\nconditions = []\n")
    assert run("check", s, tmp_path) == 2
    assert "analysis.conditions" in capsys.readouterr().err


def test_zero_resolution_rejected():
    with pytest.raises(ScenarioError) as exc:
        parse(BASE + "[analysis.scan]\nresolution = 0\n")
    assert exc.value.path == "analysis.scan.resolution"


def test_unknown_key_rejected():
    with pytest.raises(ScenarioError) as exc:
        parse(BASE + "[simulation]\ntrails = 5\nseed = 1\n")
    assert exc.value.path == "simulation.trails"


def test_unknown_condition_rejected():
    with pytest.raises(ScenarioError) as exc:
        parse(BASE + "[analysis]\nconditions = ['lemma3']\n")
    assert exc.value.path == "analysis.conditions[0]"


def test_missing_file_exit_code(tmp_path):
    assert run("simulate", str(tmp_path / "nope.toml"), tmp_path) == 2


def test_check_demo(tmp_path):
    assert run("check", str(SCENARIOS / "check_demo.toml"), tmp_path) == 0
    doc = json.loads((tmp_path / "check.json").read_text())
    conds = [r["condition"] for r in doc["reports"]]
    assert sorted(conds) == sorted(["prop1", "lemma1", "lemma2", "logderiv", "quad", "pi-derivative"])
    for r in doc["reports"]:
        if r["condition"] != "quad":
            assert {"grid", "summary", "rows"} <= r.keys()


def test_single_cell_scan_matches_check_quad(tmp_path):
    text = BASE.replace("[3.0, 2.0]", "[1.5, 1.5, 1.5]") + """
[analysis]
conditions = ["quad"]

[analysis.scan]
prize = [10.0, 10.0]
horizon = [2, 2]
miners = [3, 3]
cost = [1.5, 1.5]
resolution = 1
"""
    s = write(tmp_path, text)
    assert run("check", s, tmp_path) == 0
    assert run("scan", s, tmp_path) == 0
    quad = json.loads((tmp_path / "check.json").read_text())["reports"][0]["cells"][0]
    scan = json.loads((tmp_path / "scan.json").read_text())
    assert scan["n_cells"] == 1
    direct = analysis.quadratic_feasibility(AuctionParams(10.0, 2), CostProfile([1.5] * 3))
    assert quad["b"] == direct.b and quad["d"] == direct.d
    assert (quad["verdict"] == analysis.FEASIBLE) == bool(scan["feasible_cells"])


def test_solve_plot_data(tmp_path):
    text = BASE + "[solver]\ngrid_points = 33\n"
    assert main(["solve", "--scenario", write(tmp_path, text), "--out", str(tmp_path),
                 "--emit-plot-data"]) == 0
    lines = (tmp_path / "plot" / "cost_density_0.csv").read_text().splitlines()
    assert lines[0] == "x,y" and len(lines) == 34


def _outputs(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.mark.parametrize("cmd, text", [
    ("simulate", BASE + "[simulation]\ntrials = 70000\nseed = 9\nsemantics = 'first-success'\n"),
    ("solve", BASE.replace("[3.0, 2.0]", "[1.0, 1.0, 1.0]") + "[solver]\ngrid_points = 17\n"),
    ("scan", BASE + "[analysis.scan]\nresolution = 3\n"),
])
def test_outputs_byte_identical(tmp_path, cmd, text):
    s = write(tmp_path, text)
    runs = []
    for k, threads in enumerate(("1", "1", "4")):
        out = tmp_path / f"run{k}"
        assert main([cmd, "--scenario", s, "--out", str(out), "--threads", threads,
                     "--emit-plot-data"]) == 0
        runs.append(_outputs(out))
    assert runs[0] == runs[1] == runs[2]
    assert runs[0]

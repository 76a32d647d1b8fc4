import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from riskshare.cli import build_parser, main, run
from riskshare.errors import NonPositiveWeight, ParseError, UnknownBelief
from riskshare.scenario import from_document, parse_scenario, parse_text, serialize, with_overrides
from riskshare.sharing import SharingProblem, align_cash, closed_form_for, solve

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
ARTIFACTS = {"report.txt", "allocation.csv", "risks.csv", "diagnostics.csv"}


def _doc(name):
    return json.loads((SCENARIOS / name).read_text())


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("name", sorted(p.name for p in SCENARIOS.glob("*.json")))
def test_scenarios_parse_and_round_trip(name):
    sc = parse_scenario(SCENARIOS / name)
    again = parse_text(serialize(sc))
    assert again == sc
    assert serialize(again) == serialize(sc)


def test_parse_errors_carry_location():
    with pytest.raises(ParseError) as err:
        parse_text('{"space": {\n  "atoms": [1, 2,\n}')
    assert err.value.line == 3
    doc = _doc("es_pair.json")
    doc["agents"][0]["kind"] = "quantile"
    with pytest.raises(ParseError) as err:
        from_document(doc)
    assert err.value.field == "agents[0].kind"


def test_unknown_belief_and_negative_weight():
    doc = _doc("es_pair.json")
    doc["agents"][1]["belief"] = "X"
    with pytest.raises(UnknownBelief, match="unknown belief 'X'"):
        from_document(doc)
    doc = _doc("es_pair.json")
    doc["space"]["weights"][0] = -doc["space"]["weights"][0]
    with pytest.raises(NonPositiveWeight):
        from_document(doc)


def test_overrides_replace_options():
    sc = with_overrides(parse_scenario(SCENARIOS / "es_pair.json"), tolerance=1e-7, seed=None)
    assert sc.options["tolerance"] == 1e-7 and sc.options["seed"] == 0


def test_solve_is_deterministic(tmp_path):
    sc = parse_scenario(SCENARIOS / "entropic_pair.json")
    assert run("solve", sc, tmp_path / "a") == 0
    assert run("solve", sc, tmp_path / "b") == 0
    for name in ARTIFACTS:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_entropic_csv_matches_closed_form(tmp_path):
    sc = parse_scenario(SCENARIOS / "entropic_pair.json")
    assert main(["solve", "--scenario", str(SCENARIOS / "entropic_pair.json"), "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "allocation.csv")
    assert rows[0] == ["atom", "X", "X_1", "X_2"]
    Y = np.array([[float(v) for v in r[2:]] for r in rows[1:]]).T
    ref = closed_form_for(SharingProblem(sc.space, sc.agents, sc.target)).allocation
    assert np.max(np.abs(align_cash(Y, ref) - ref)) <= 1e-6
    risks = _rows(tmp_path / "risks.csv")
    assert risks[0] == ["agent", "risk", "conjugate certificate"]
    assert [r[0] for r in risks[1:]] == ["insurer", "reinsurer"]


def test_every_command_writes_its_artifacts(tmp_path):
    cases = [
        ("solve", "es_heterogeneous.json", 0),
        ("improve", "improve.json", 0),
        ("capital", "capital_two_regimes.json", 0),
        ("probe", "non_exact.json", 2),
        ("oracle", "es_pair.json", 0),
        ("diagnose", "example_single_compatible.json", 0),
    ]
    for cmd, name, code in cases:
        out = tmp_path / cmd
        assert main([cmd, "--scenario", str(SCENARIOS / name), "--out", str(out)]) == code
        expected = {"report.txt", "diagnostics.csv"} if cmd == "diagnose" else ARTIFACTS
        assert {p.name for p in out.iterdir()} == expected
        assert (out / "report.txt").read_text().startswith(f"command = {cmd}\n")


def test_diagnose_reports_only_the_constant_density(tmp_path):
    assert main(["diagnose", "--scenario", str(SCENARIOS / "example_single_compatible.json"),
                 "--out", str(tmp_path)]) == 0
    text = (tmp_path / "report.txt").read_text()
    assert "compatible set = {constant}" in text
    assert "probe densities = 100" in text


def test_capital_on_cash_market_equals_sharing_total(tmp_path):
    sc = parse_scenario(SCENARIOS / "entropic_pair_cash.json")
    assert run("capital", sc, tmp_path) == 0
    eta = next(line for line in (tmp_path / "report.txt").read_text().splitlines() if line.startswith("eta = "))
    total = solve(SharingProblem(sc.space, sc.agents, sc.target), sc.solver_options()).total_risk
    assert float(eta.split("=")[1]) == pytest.approx(total, abs=1e-8)


def test_error_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert main(["capital", "--scenario", str(SCENARIOS / "es_pair.json"), "--out", str(tmp_path / "c")]) == 1
    assert "[error]" in (tmp_path / "c" / "report.txt").read_text()
    with pytest.raises(SystemExit):
        build_parser().parse_args(["plot", "--scenario", "x", "--out", "y"])


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "riskshare.cli", "solve", "--scenario",
                           str(SCENARIOS / "es_pair.json"), "--out", str(tmp_path), "--tolerance", "1e-9"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "allocation.csv").exists()

import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parent.parent
FEEDER = REPO / "scenarios" / "lv-feeder.json"


def run_cli(*args: str, scenario: dict | None = None, tmp_path: Path | None = None):
    argv = [sys.executable, "-m", "seculex", *args]
    if scenario is not None:
        assert tmp_path is not None
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(scenario))
        argv.append(str(path))
    return subprocess.run(argv, capture_output=True, text=True, timeout=120)


def test_allocate_table_golden():
    proc = run_cli("allocate", str(FEEDER))
    assert proc.returncode == 0, proc.stderr
    out = proc.stdout
    assert "C1" in out and "C4" in out
    assert "w* = 15" in out and "w* = 35" in out
    assert "fixed: C1" in out
    assert "\x1b" not in out  # piped output carries no ANSI codes


def test_allocate_csv_parses():
    proc = run_cli("allocate", str(FEEDER), "--format", "csv")
    assert proc.returncode == 0
    rows = list(csv.reader(io.StringIO(proc.stdout)))
    assert rows[0] == ["customer", "lower_kw", "upper_kw", "width_kw"]
    by_customer = {r[0]: r[1:] for r in rows[1:]}
    assert by_customer["C1"] == ["0", "15", "15"]
    assert by_customer["C2"] == ["-20", "15", "35"]
    raw = subprocess.run(
        [sys.executable, "-m", "seculex", "allocate", str(FEEDER), "--format", "csv"],
        capture_output=True,
        timeout=120,
    )
    assert raw.stdout.count(b"\r\n") == 5  # RFC-4180 line endings


def test_allocate_json_golden():
    proc = run_cli("allocate", str(FEEDER), "--format", "json")
    assert proc.returncode == 0
    body = json.loads(proc.stdout)
    assert body["limits"]["C2"] == {"lower_kw": -20.0, "upper_kw": 15.0}


def test_clear_table_golden():
    proc = run_cli("clear", str(FEEDER))
    assert proc.returncode == 0, proc.stderr
    assert "social welfare: 0.01 EUR" in proc.stdout
    assert "payment C3: 0.10 EUR" in proc.stdout
    assert "payment C4: -0.12 EUR" in proc.stdout


def test_clear_csv_remaining_book():
    proc = run_cli("clear", str(FEEDER), "--format", "csv")
    rows = list(csv.reader(io.StringIO(proc.stdout)))
    by_id = {r[0]: r for r in rows[1:]}
    # order 2: offered 6, accepted 5, 1 left in the book
    assert by_id["2"][3:6] == ["6", "5", "1"]
    assert by_id["3"][7] == "-0.12"


def test_compare_table_matches_reference_cells():
    proc = run_cli("compare", str(FEEDER))
    assert proc.returncode == 0
    out = proc.stdout
    for cell in ("17 or 7", "76 or 90", "0.50 or 0.30"):
        assert cell in out
    lines = {line.split("  ")[0]: line for line in out.splitlines()}
    assert "Curtailment [kW]" in lines
    curtailment = lines["Curtailment [kW]"].split()
    assert curtailment[-1] == "1" and "9" in curtailment
    welfare = lines["Market social welfare [EUR]"]
    assert welfare.rstrip().endswith("0.01")
    assert welfare.count("/") == 3


def test_compare_is_byte_stable():
    first = run_cli("compare", str(FEEDER))
    second = run_cli("compare", str(FEEDER))
    assert first.stdout == second.stdout
    assert first.stdout.encode() == second.stdout.encode()


def test_compare_csv_splits_static_variants():
    proc = run_cli("compare", str(FEEDER), "--format", "csv")
    rows = list(csv.reader(io.StringIO(proc.stdout)))
    assert rows[0] == ["metric", "no_control", "anm", "static_keep_schedule", "static_reschedule", "seculex"]
    table = {r[0]: r[1:] for r in rows[1:]}
    assert table["Curtailment [kW]"] == ["0", "9", "17", "7", "1"]
    assert table["Renewable utilization [%]"] == ["100", "87", "76", "90", "99"]
    assert table["Security violation"] == ["Yes", "No", "No", "No", "No"]
    assert table["Market social welfare [EUR]"] == ["/", "/", "/", "/", "0.01"]


def test_verify_secure_exit_zero():
    proc = run_cli("verify", str(FEEDER), "--samples", "100", "--seed", "42")
    assert proc.returncode == 0, proc.stderr
    assert "secure" in proc.stdout
    assert "agreement: yes" in proc.stdout


def test_verify_insecure_exit_one(tmp_path):
    scenario = json.loads(FEEDER.read_text())
    scenario["limits"] = {
        "C1": [0.0, 15.0],
        "C2": [-20.0, 15.0],
        "C3": [-20.0, 15.0],
        "C4": [-21.0, 15.0],
    }
    proc = run_cli("verify", "--samples", "50", scenario=scenario, tmp_path=tmp_path)
    assert proc.returncode == 1
    assert "INSECURE" in proc.stdout
    assert "margin 1 kW" in proc.stdout


def test_verify_zero_samples_is_usage_error():
    proc = run_cli("verify", str(FEEDER), "--samples", "0")
    assert proc.returncode == 2


def test_unknown_format_is_usage_error():
    proc = run_cli("compare", str(FEEDER), "--format", "yaml")
    assert proc.returncode == 2


def test_missing_file_is_usage_error():
    proc = run_cli("allocate", str(FEEDER) + ".nope")
    assert proc.returncode == 2
    assert "cannot read" in proc.stderr


def test_malformed_json_reports_line_and_column(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "network": }\n')
    proc = run_cli("allocate", str(path))
    assert proc.returncode == 2
    assert "line 2" in proc.stderr
    assert "column" in proc.stderr


def test_infeasible_guarantees_exit_three(tmp_path):
    scenario = json.loads(FEEDER.read_text())
    for c in scenario["customers"]:
        c["bounds"]["guaranteed_upper_kw"] = 20.0
    proc = run_cli("allocate", scenario=scenario, tmp_path=tmp_path)
    assert proc.returncode == 3
    assert "InfeasibleGuarantees" in proc.stderr


def test_insecure_clear_exit_three(tmp_path):
    scenario = json.loads(FEEDER.read_text())
    scenario["limits"] = {
        "C1": [0.0, 15.0],
        "C2": [-20.0, 15.0],
        "C3": [-20.0, 15.0],
        "C4": [-21.0, 15.0],
    }
    proc = run_cli("clear", scenario=scenario, tmp_path=tmp_path)
    assert proc.returncode == 3


def test_lenient_warns_on_stderr(tmp_path):
    scenario = json.loads(FEEDER.read_text())
    scenario["footnote"] = "extra"
    proc = run_cli("allocate", "--lenient", scenario=scenario, tmp_path=tmp_path)
    assert proc.returncode == 0
    assert "footnote" in proc.stderr
    strict = run_cli("allocate", scenario=scenario, tmp_path=tmp_path)
    assert strict.returncode == 2


def test_dump_lp_writes_to_stderr():
    proc = run_cli("clear", str(FEEDER), "--dump-lp")
    assert proc.returncode == 0
    assert "maximize" in proc.stderr
    assert "maximize" not in proc.stdout


def test_empty_customer_list_prints_header_only(tmp_path):
    scenario = {"network": {"nodes": ["T"], "lines": [], "root": "T"}, "customers": []}
    proc = run_cli("allocate", scenario=scenario, tmp_path=tmp_path)
    assert proc.returncode == 0
    assert "Customer" in proc.stdout
    assert len(proc.stdout.strip().splitlines()) == 1


def test_repo_scenario_matches_packaged_copy():
    from importlib import resources

    packaged = resources.files("seculex").joinpath("data/lv-feeder.json").read_bytes()
    assert FEEDER.read_bytes() == packaged

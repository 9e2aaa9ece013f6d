"""Test CLI."""

# standard
from pathlib import Path

# external
import pytest

# local
from sgpbft import RunReport
from sgpbft.cli import EXIT_CONFIG, EXIT_LIVENESS, EXIT_OK, main
from sgpbft.metrics import CSV_HEADER, read_csv


def _scenario(tmp_path: Path, text: str):
    path = tmp_path / "scenario.toml"
    path.write_text(text, encoding="utf-8")
    return str(path)


def _rows(path: Path):
    with open(path, encoding="utf-8", newline="") as handle:
        return read_csv(handle)


# ==> formulas <== #


def test_formulas_table(capsys: pytest.CaptureFixture[str]):
    """Test formulas table."""
    assert main(["formulas", "--n", "4", "1000"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["n", "PBFT", "SGPBFT", "GPBFT", "CPBFT"]
    assert lines[2].split() == ["1000", "1998000", "249999", "501500", "999000"]


def test_formulas_with_reduction(capsys: pytest.CaptureFixture[str]):
    """Test formulas with reduction."""
    assert main(["formulas", "--n", "5", "1000", "--reduction"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert "saved_vs_PBFT" in lines[0].split()
    assert lines[1].split()[2] == "-"
    assert lines[2].split()[5:] == ["0.8749", "0.5015", "0.7498"]


# ==> run <== #


def test_run_writes_report_and_csv(tmp_path: Path):
    """Test run writes report and CSV."""
    config = _scenario(tmp_path, 'scenario_id = "four"\nprotocol = "PBFT"\nn = 4\nf = 1\n')
    out = tmp_path / "out"
    assert main(["run", "--config", config, "--out", str(out), "--seed", "5"]) == EXIT_OK
    report = RunReport.from_text((out / "report-four.txt").read_text(encoding="utf-8"))
    assert report.scenario["seed"] == 5 and report.all_completed
    (row,) = _rows(out / "results.csv")
    assert row["messages_measured"] == "24" and row["source"] == "simulated"


def test_run_is_byte_for_byte_repeatable(tmp_path: Path):
    """Test run is byte for byte repeatable."""
    config = _scenario(
        tmp_path,
        'protocol = "SGPBFT"\nn = 16\nf = 2\nrequests = 5\nlatency_kind = "uniform"\n'
        "latency_hi = 7\nseed = 11\n",
    )
    outputs = []
    for name in ("a", "b"):
        assert main(["run", "--config", config, "--out", str(tmp_path / name)]) == EXIT_OK
        outputs.append((tmp_path / name / "report-scenario.txt").read_bytes())
    assert outputs[0] == outputs[1]


@pytest.mark.parametrize(
    "text",
    ['protocol = "SGPBFT"\nn = 6\nf = 1\n', "n = 3\n", 'protocol = "CPBFT"\n', "colour = 1\n"],
)
def test_run_exits_two_on_bad_config(
    tmp_path: Path, capsys: pytest.CaptureFixture[str], text: str
):
    """Test run exits two on bad config."""
    config = _scenario(tmp_path, text)
    assert main(["run", "--config", config, "--out", str(tmp_path / "out")]) == EXIT_CONFIG
    assert "invalid configuration" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_run_exits_three_when_requests_stall(tmp_path: Path):
    """Test run exits three when requests stall."""
    config = _scenario(
        tmp_path,
        "requests = 1\nmax_ticks = 200\n"
        'faults = [{ node = 1, behavior = "silent" }, { node = 2, behavior = "silent" }]\n',
    )
    assert main(["run", "--config", config, "--out", str(tmp_path)]) == EXIT_LIVENESS


# ==> sweep <== #


def test_sweep_covers_every_cell(tmp_path: Path):
    """Test sweep covers every cell."""
    config = _scenario(tmp_path, 'scenario_id = "sweep"\nrequests = 2\n')
    out = tmp_path / "out"
    argv = ["sweep", "--config", config, "--out", str(out), "--n", "8", "16", "32", "64"]
    assert main(argv) == EXIT_OK
    rows = _rows(out / "results.csv")
    assert len(rows) == 16
    assert tuple(rows[0]) == CSV_HEADER
    cells = {(row["protocol"], row["n"]): row for row in rows}
    assert cells[("PBFT", "64")]["messages_measured"] == "8064"
    assert cells[("SGPBFT", "64")]["messages_measured"] == "1023"
    assert cells[("CPBFT", "8")]["source"] == "analytic"
    assert not (out / "failures.txt").exists()


def test_sweep_records_failed_cells(tmp_path: Path):
    """Test sweep records failed cells."""
    out = tmp_path / "out"
    argv = ["sweep", "--out", str(out), "--n", "5", "--protocols", "pbft", "sg-pbft"]
    assert main(argv) == EXIT_OK
    assert [row["protocol"] for row in _rows(out / "results.csv")] == ["PBFT"]
    assert (out / "failures.txt").read_text(encoding="utf-8").startswith("SGPBFT 5: ")


def test_sweep_in_worker_processes(tmp_path: Path):
    """Test sweep in worker processes."""
    serial, parallel = tmp_path / "serial", tmp_path / "parallel"
    argv = ["sweep", "--n", "8", "16", "--protocols", "PBFT", "SGPBFT"]
    assert main([*argv, "--out", str(serial)]) == EXIT_OK
    assert main([*argv, "--out", str(parallel), "--parallel", "2"]) == EXIT_OK
    assert (serial / "results.csv").read_bytes() == (parallel / "results.csv").read_bytes()


# ==> auth demo <== #


def test_auth_demo(tmp_path: Path, capsys: pytest.CaptureFixture[str]):
    """Test auth demo."""
    out = tmp_path / "out"
    assert main(["auth-demo", "--out", str(out)]) == EXIT_OK
    transcript = capsys.readouterr().out.splitlines()
    assert transcript[-1] == "ledger: 5 entries"
    assert len(transcript) == 7
    assert len((out / "ledger.txt").read_text(encoding="utf-8").splitlines()) == 5
    report = RunReport.from_text((out / "report-auth-demo.txt").read_text(encoding="utf-8"))
    assert len(report.ledgers) == 8


def test_auth_demo_rejects_small_group(tmp_path: Path):
    """Test auth demo rejects small group."""
    config = _scenario(tmp_path, "n = 6\n")
    assert main(["auth-demo", "--config", config, "--out", str(tmp_path)]) == EXIT_CONFIG

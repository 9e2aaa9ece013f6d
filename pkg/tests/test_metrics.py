"""Test Metrics."""

# standard
import io

# external
from hypothesis import given
from hypothesis import strategies as st
import pytest

# local
from sgpbft import (
    LatencyModel,
    ProtocolKind,
    ScenarioConfig,
    aggregate,
    batch_means,
    formula_messages,
    reduction,
    run_scenario,
)
from sgpbft.metrics import (
    ANALYTIC,
    CSV_HEADER,
    SIMULATED,
    analytic_record,
    read_csv,
    write_csv,
)

# ==> formulas <== #


@pytest.mark.parametrize(
    "protocol, n, messages",
    [
        (ProtocolKind.PBFT, 4, 24),
        (ProtocolKind.PBFT, 16, 480),
        (ProtocolKind.SGPBFT, 8, 15),
        (ProtocolKind.SGPBFT, 1000, 249999),
        (ProtocolKind.GPBFT, 10, 65),
        (ProtocolKind.CPBFT, 1000, 999000),
    ],
)
def test_formula_values(protocol: ProtocolKind, n: int, messages: int):
    """Test formula values."""
    assert formula_messages(protocol, n) == messages


@pytest.mark.parametrize("protocol, n", [("PBFT", 3), ("SGPBFT", 9), ("CPBFT", 0)])
def test_formula_raises_outside_domain(protocol: str, n: int):
    """Test formula raises outside domain."""
    with pytest.raises(ValueError):
        formula_messages(protocol, n)


def test_formula_ordering_over_even_sizes():
    """Test formula ordering over even sizes."""
    order = (ProtocolKind.SGPBFT, ProtocolKind.GPBFT, ProtocolKind.CPBFT, ProtocolKind.PBFT)
    for n in range(6, 2001, 2):
        sg, gpbft, cpbft, pbft = (formula_messages(kind, n) for kind in order)
        assert sg < gpbft < cpbft < pbft


@given(st.integers(min_value=100, max_value=100_000))
def test_saving_tends_to_seven_eighths(half: int):
    """Test saving tends to seven eighths."""
    n = 2 * half
    ratio = formula_messages(ProtocolKind.SGPBFT, n) / formula_messages(ProtocolKind.PBFT, n)
    assert ratio == pytest.approx(1 / 8, rel=0.01)
    assert reduction(n)[ProtocolKind.CPBFT] == pytest.approx(0.75, abs=0.01)


# ==> aggregation <== #


def test_batch_means_of_two_hundred_delays():
    """Test batch means of two hundred delays."""
    means = batch_means([index % 10 for index in range(200)])
    assert len(means) == 20 and set(means) == {4.5}
    assert batch_means([1, 2, 3], size=2) == [1.5, 3.0]


def test_batch_means_rejects_empty_batches():
    """Test batch means rejects empty batches."""
    with pytest.raises(ValueError):
        batch_means([1.0], size=0)


def test_aggregate_nothing():
    """Test aggregate nothing."""
    assert aggregate([]) == []


def test_aggregate_one_run():
    """Test aggregate one run."""
    report = run_scenario(ScenarioConfig(scenario_id="a", n=16, f=1, requests=2))
    (record,) = aggregate([report])
    assert (record.protocol, record.n, record.f, record.requests) == ("PBFT", 16, 1, 2)
    assert record.messages_measured == record.messages_formula == 480
    assert record.mean_delay_ticks == record.p99_delay_ticks == 4.0
    assert record.source == SIMULATED


def test_aggregate_pools_seeds():
    """Test aggregate pools seeds."""
    reports = [
        run_scenario(ScenarioConfig(protocol=ProtocolKind.SGPBFT, n=8, seed=seed, requests=2))
        for seed in range(3)
    ]
    (record,) = aggregate(reports)
    assert record.requests == 6
    assert record.messages_measured == 15


def test_aggregate_rejects_mixed_configurations():
    """Test aggregate rejects mixed configurations."""
    one = run_scenario(ScenarioConfig(requests=1))
    two = run_scenario(ScenarioConfig(requests=2))
    with pytest.raises(ValueError):
        aggregate([one, two])


def test_analytic_record():
    """Test analytic record."""
    record = analytic_record("GPBFT", 10, 3, LatencyModel(ticks=2, service_ticks=1))
    assert record.messages_measured == record.messages_formula == 65
    assert record.mean_delay_ticks == 8 + 6.5
    assert record.throughput_per_kilotick == pytest.approx(1000 / 14.5)
    assert record.source == ANALYTIC


# ==> csv <== #


def test_csv_header_and_rows():
    """Test CSV header and rows."""
    records = [
        analytic_record("CPBFT", 8, 2, LatencyModel(), scenario_id="s"),
        *aggregate([run_scenario(ScenarioConfig(n=4))]),
    ]
    stream = io.StringIO()
    write_csv(records, stream)
    text = stream.getvalue()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    rows = read_csv(io.StringIO(text))
    assert [row["protocol"] for row in rows] == ["CPBFT", "PBFT"]
    assert rows[1]["messages_measured"] == "24"
    assert rows[1]["mean_delay_ticks"] == "4"


def test_csv_rejects_other_header():
    """Test CSV rejects other header."""
    with pytest.raises(ValueError):
        read_csv(io.StringIO("a,b\n1,2\n"))

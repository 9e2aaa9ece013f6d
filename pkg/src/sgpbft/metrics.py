"""Metrics.

Closed-form message counts for PBFT, SG-PBFT, G-PBFT and CPBFT, aggregation
of run reports into comparison records, and the results CSV.
"""

# standard
import csv
from dataclasses import astuple, dataclass
import logging
from typing import Any, Dict, Iterable, List, Sequence, TextIO, Tuple, Union

# external
import numpy as np

# local
from sgpbft.config import ProtocolKind
from sgpbft.report import RunReport
from sgpbft.simnet import LatencyModel, throughput

logger = logging.getLogger(__name__)

BATCH_SIZE = 10
SIMULATED = "simulated"
ANALYTIC = "analytic"

Number = Union[int, float]


def formula_messages(protocol: Union[ProtocolKind, str], n: int, /):
    """Protocol messages one fault-free consensus needs on `n` nodes.

    Examples:
        >>> [formula_messages(kind, 1000) for kind in ProtocolKind]
        [1998000, 249999, 501500, 999000]
        >>> formula_messages("SGPBFT", 8), formula_messages("GPBFT", 6)
        (15, 27)
        >>> formula_messages("CPBFT", 4)
        12

    Raises:
        (ValueError): If `n < 4`, or `n` is odd for SG-PBFT.
    """
    kind = ProtocolKind.parse(protocol)
    if n < 4:
        raise ValueError(f"formulas need n >= 4, got {n}")
    if kind is ProtocolKind.PBFT:
        return 2 * n * (n - 1)
    if kind is ProtocolKind.SGPBFT:
        if n % 2:
            raise ValueError(f"SG-PBFT needs an even n, got {n}")
        return (n // 2 - 1) * (n // 2 + 1)
    if kind is ProtocolKind.GPBFT:
        return (n + 3) * n // 2
    return n * (n - 1)


def reduction(n: int, /):
    """Fraction of messages SG-PBFT saves against each other protocol at `n`.

    Tends to 0.875 against PBFT and 0.75 against CPBFT as `n` grows.

    Examples:
        >>> round(reduction(1000)[ProtocolKind.PBFT], 4)
        0.8749
    """
    sg = formula_messages(ProtocolKind.SGPBFT, n)
    return {
        kind: 1 - sg / formula_messages(kind, n)
        for kind in ProtocolKind
        if kind is not ProtocolKind.SGPBFT
    }


def batch_means(delays: Sequence[Number], /, *, size: int = BATCH_SIZE):
    """Average every `size` consecutive delays; a short tail forms its own batch.

    Examples:
        >>> batch_means(list(range(20)))
        [4.5, 14.5]
        >>> batch_means([])
        []
    """
    if size < 1:
        raise ValueError("`size` must be positive")
    return [float(np.mean(delays[start : start + size])) for start in range(0, len(delays), size)]


CSV_HEADER = (
    "scenario_id",
    "protocol",
    "n",
    "f",
    "requests",
    "mean_delay_ticks",
    "p99_delay_ticks",
    "throughput_per_kilotick",
    "messages_measured",
    "messages_formula",
    "source",
)


@dataclass(frozen=True)
class MetricsRecord:
    """One row of the comparison table."""

    scenario_id: str
    protocol: str
    n: int
    f: int
    requests: int
    mean_delay_ticks: float
    p99_delay_ticks: float
    throughput_per_kilotick: float
    messages_measured: Number
    messages_formula: int
    source: str

    def row(self):
        """CSV cells in header order."""
        return [_cell(value) for value in astuple(self)]


def _cell(value: Any, /):
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value))
        return f"{value:.6f}".rstrip("0")
    return str(value)


def _cell_key(report: RunReport, /):
    scenario = report.scenario
    return (str(scenario["protocol"]), int(scenario["n"]), int(scenario["f"]))


def _shape(report: RunReport, /) -> Dict[str, Any]:
    return {
        key: value
        for key, value in report.scenario.items()
        if key not in ("scenario_id", "seed")
    }


def aggregate(reports: Iterable[RunReport], /):
    """One record per `(protocol, n, f)` cell, in first-seen order.

    Reports of one cell (typically different seeds) are pooled: delays are
    averaged over batches of ten, throughput over the runs.

    Raises:
        (ValueError): If one cell mixes reports of different configurations.
    """
    cells: Dict[Tuple[str, int, int], List[RunReport]] = {}
    for report in reports:
        cell = cells.setdefault(_cell_key(report), [])
        if cell and _shape(cell[0]) != _shape(report):
            raise ValueError(f"reports of cell {_cell_key(report)} mix configurations")
        cell.append(report)
    records: List[MetricsRecord] = []
    for (protocol, n, f), group in cells.items():
        delays = [r.delay for report in group for r in report.requests if r.delay is not None]
        completed = sum(report.completed for report in group)
        consensus = sum(report.consensus_messages for report in group)
        measured: Number = consensus / completed if completed else float(consensus)
        if isinstance(measured, float) and measured.is_integer():
            measured = int(measured)
        records.append(
            MetricsRecord(
                scenario_id=group[0].scenario_id,
                protocol=protocol,
                n=n,
                f=f,
                requests=sum(len(report.requests) for report in group),
                mean_delay_ticks=float(np.mean(batch_means(delays))) if delays else 0.0,
                p99_delay_ticks=float(np.percentile(delays, 99)) if delays else 0.0,
                throughput_per_kilotick=float(np.mean([throughput(r) for r in group])),
                messages_measured=measured,
                messages_formula=formula_messages(protocol, n),
                source=SIMULATED,
            )
        )
    logger.debug("aggregated %s cells", len(records))
    return records


def analytic_delay(protocol: Union[ProtocolKind, str], n: int, latency: LatencyModel, /):
    """Synthetic delay of the analytic baselines.

    Four message legs plus the inbox time of one consensus's messages spread
    over the `n` nodes.

    Examples:
        >>> analytic_delay("CPBFT", 4, LatencyModel(service_ticks=1))
        7.0
    """
    per_node = formula_messages(protocol, n) / n
    return 4 * latency.mean + latency.service_ticks * per_node


def analytic_record(
    protocol: Union[ProtocolKind, str],
    n: int,
    f: int,
    latency: LatencyModel,
    /,
    *,
    requests: int = 0,
    scenario_id: str = "",
):
    """Comparison record computed from the closed forms alone."""
    kind = ProtocolKind.parse(protocol)
    delay = analytic_delay(kind, n, latency)
    messages = formula_messages(kind, n)
    return MetricsRecord(
        scenario_id=scenario_id,
        protocol=kind.value,
        n=n,
        f=f,
        requests=requests,
        mean_delay_ticks=delay,
        p99_delay_ticks=delay,
        throughput_per_kilotick=1000 / delay,
        messages_measured=messages,
        messages_formula=messages,
        source=ANALYTIC,
    )


def write_csv(records: Iterable[MetricsRecord], stream: TextIO, /):
    """Write the header and one row per record."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for record in records:
        writer.writerow(record.row())


def read_csv(stream: TextIO, /):
    """Rows of a results CSV as dictionaries keyed by header name.

    Raises:
        (ValueError): If the header differs from `CSV_HEADER`.
    """
    reader = csv.DictReader(stream)
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return list(reader)


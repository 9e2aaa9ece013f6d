"""Plots.

Static SVG figures of a sweep: delay, throughput and message count against
`n`, one line per protocol. The CSV is the contract; if plotting fails the
sweep carries on without figures.
"""

# standard
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

# local
from sgpbft.metrics import MetricsRecord

logger = logging.getLogger(__name__)

FIGURES = (
    ("delay.svg", "mean_delay_ticks", "mean transaction delay (ticks)"),
    ("throughput.svg", "throughput_per_kilotick", "throughput (requests / 1000 ticks)"),
    ("messages.svg", "messages_formula", "messages per consensus"),
)


def _series(records: Iterable[MetricsRecord], column: str, /):
    lines: Dict[str, List[Tuple[int, float]]] = {}
    for record in records:
        lines.setdefault(record.protocol, []).append((record.n, float(getattr(record, column))))
    return {protocol: sorted(points) for protocol, points in lines.items()}


def plot_sweep(records: List[MetricsRecord], out_dir: Path, /):
    """Write the three sweep figures into `out_dir`.

    Returns:
        (List[Path]): Files written; empty if plotting is unavailable or failed.
    """
    if not records:
        return []
    try:
        import matplotlib

        matplotlib.use("Agg")
        matplotlib.rcParams["svg.hashsalt"] = "sgpbft"
        from matplotlib import pyplot as plt
    except ImportError as exp:
        logger.warning("plots skipped, matplotlib unavailable: %s", exp)
        return []
    written: List[Path] = []
    try:
        for filename, column, label in FIGURES:
            figure, axes = plt.subplots(figsize=(6.4, 4.0))
            for protocol, points in _series(records, column).items():
                xs = [n for n, _ in points]
                ys = [value for _, value in points]
                axes.plot(xs, ys, marker="o", label=protocol)
            axes.set_xscale("log")
            if column == "messages_formula":
                axes.set_yscale("log")
            axes.set_xlabel("nodes (n)")
            axes.set_ylabel(label)
            axes.legend()
            axes.grid(True, alpha=0.3)
            path = out_dir / filename
            figure.savefig(path, format="svg", metadata={"Date": None})
            plt.close(figure)
            written.append(path)
    except (OSError, ValueError, RuntimeError) as exp:
        logger.warning("plots skipped after %s file(s): %s", len(written), exp)
    return written

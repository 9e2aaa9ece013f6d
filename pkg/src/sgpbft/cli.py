"""CLI.

`sgpbft run`, `sgpbft sweep`, `sgpbft formulas` and `sgpbft auth-demo`.
Exit codes: 0 on success, 2 for an invalid configuration, 3 when a run
ends with incomplete requests.
"""

# standard
from argparse import ArgumentParser, Namespace
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
import logging
from pathlib import Path
import sys
from typing import Any, Dict, List, Optional, Sequence, TextIO, Union

# local
from sgpbft import __version__
from sgpbft.config import (
    DEFAULT_SWEEP_N,
    ProtocolKind,
    ScenarioConfig,
    check,
    load_config,
)
from sgpbft.iov import auth_demo
from sgpbft.metrics import (
    MetricsRecord,
    aggregate,
    analytic_record,
    formula_messages,
    reduction,
    write_csv,
)
from sgpbft.plots import plot_sweep
from sgpbft.simnet import LatencyModel, run_scenario
from sgpbft.utils import ConfigurationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_LIVENESS = 3


def _write(path: Path, text: str, /):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info("wrote %s", path)


def _load(args: Namespace, /, *, base: Optional[ScenarioConfig] = None):
    return load_config(args.config, overrides={"seed": args.seed}, base=base)


def cmd_run(args: Namespace, /):
    """Run one scenario and write its report and CSV row."""
    config = _load(args)
    check(config)
    report = run_scenario(config)
    out: Path = args.out
    _write(out / f"report-{config.scenario_id}.txt", report.to_text())
    with open(out / "results.csv", "w", encoding="utf-8", newline="") as handle:
        write_csv(aggregate([report]), handle)
    if not report.all_completed:
        missing = len(report.requests) - report.completed
        logger.error("%s of %s requests did not complete", missing, len(report.requests))
        return EXIT_LIVENESS
    return EXIT_OK


def max_faults(protocol: ProtocolKind, n: int, /):
    """Largest `f` the protocol tolerates with `n` nodes.

    Examples:
        >>> max_faults(ProtocolKind.PBFT, 16), max_faults(ProtocolKind.SGPBFT, 16)
        (5, 2)
    """
    voters = n // 2 if protocol is ProtocolKind.SGPBFT else n
    return max(0, (voters - 1) // 3)


def sweep_cells(base: ScenarioConfig, /):
    """One configuration per `(protocol, n)` cell, protocols first, in configured order.

    Engine runs are capped at `max_messages_per_cell` consensus messages.
    """
    cells: List[ScenarioConfig] = []
    for protocol in base.sweep_protocols:
        for n in base.sweep_n:
            requests = base.requests
            if protocol.simulated and n >= 4 and not (protocol is ProtocolKind.SGPBFT and n % 2):
                budget = base.max_messages_per_cell // formula_messages(protocol, n)
                requests = min(requests, max(1, budget))
            cells.append(
                replace(
                    base,
                    scenario_id=f"{base.scenario_id}-{protocol.value}-{n}",
                    protocol=protocol,
                    n=n,
                    f=max_faults(protocol, n),
                    requests=requests,
                    faults=(),
                )
            )
    return cells


def run_cell(config: ScenarioConfig, /) -> Union[MetricsRecord, str]:
    """Evaluate one sweep cell; a string describes why it failed."""
    try:
        if not config.protocol.simulated:
            return analytic_record(
                config.protocol,
                config.n,
                config.f,
                LatencyModel.from_config(config),
                requests=config.requests,
                scenario_id=config.scenario_id,
            )
        report = run_scenario(config)
    except (ConfigurationError, ValueError) as exp:
        return str(exp)
    if not report.all_completed:
        return f"{len(report.requests) - report.completed} requests incomplete"
    return aggregate([report])[0]


def cmd_sweep(args: Namespace, /):
    """Evaluate every cell, then write the CSV, the failures and the figures."""
    base = _load(args)
    overrides: Dict[str, Any] = {}
    if args.n is not None:
        overrides["sweep_n"] = tuple(args.n)
    if args.protocols is not None:
        overrides["sweep_protocols"] = tuple(ProtocolKind.parse(p) for p in args.protocols)
    base = replace(base, **overrides)
    cells = sweep_cells(base)
    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            outcomes = list(pool.map(run_cell, cells))
    else:
        outcomes = [run_cell(cell) for cell in cells]
    records: List[MetricsRecord] = []
    failures: List[str] = []
    for cell, outcome in zip(cells, outcomes):
        if isinstance(outcome, str):
            logger.warning("cell %s n=%s failed: %s", cell.protocol.value, cell.n, outcome)
            failures.append(f"{cell.protocol.value} {cell.n}: {outcome}")
        else:
            records.append(outcome)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", encoding="utf-8", newline="") as handle:
        write_csv(records, handle)
    if failures:
        _write(out / "failures.txt", "".join(line + "\n" for line in failures))
    plot_sweep(records, out)
    return EXIT_OK


def formulas_table(ns: Sequence[int], /, *, with_reduction: bool = False):
    """Rows of exact message counts per protocol; invalid cells read `-`.

    Examples:
        >>> for row in formulas_table([4, 1000]):
        ...     print(" ".join(row))
        n PBFT SGPBFT GPBFT CPBFT
        4 24 3 14 12
        1000 1998000 249999 501500 999000
    """
    header = ["n", *(kind.value for kind in ProtocolKind)]
    if with_reduction:
        header += [
            f"saved_vs_{kind.value}" for kind in ProtocolKind if kind is not ProtocolKind.SGPBFT
        ]
    rows: List[List[str]] = [header]
    for n in ns:
        row = [str(n)]
        for kind in ProtocolKind:
            try:
                row.append(str(formula_messages(kind, n)))
            except ValueError:
                row.append("-")
        if with_reduction:
            try:
                row += [f"{value:.4f}" for value in reduction(n).values()]
            except ValueError:
                row += ["-"] * (len(header) - len(row))
        rows.append(row)
    return rows


def cmd_formulas(args: Namespace, /, *, stream: Optional[TextIO] = None):
    """Print the formula table."""
    stream = stream or sys.stdout
    ns = list(DEFAULT_SWEEP_N) if args.n is None else args.n
    rows = formulas_table(ns, with_reduction=args.reduction)
    widths = [max(len(row[column]) for row in rows) for column in range(len(rows[0]))]
    for row in rows:
        stream.write("  ".join(cell.rjust(width) for cell, width in zip(row, widths)) + "\n")
    return EXIT_OK


AUTH_DEFAULTS = ScenarioConfig(
    scenario_id="auth-demo", protocol=ProtocolKind.SGPBFT, n=8, f=1, requests=0
)


def cmd_auth_demo(args: Namespace, /, *, stream: Optional[TextIO] = None):
    """Register, forge and authenticate vehicles through SG-PBFT."""
    stream = stream or sys.stdout
    config = _load(args, base=AUTH_DEFAULTS)
    check(config)
    run, transcript = auth_demo(config)
    for line in transcript:
        stream.write(line + "\n")
    out: Path = args.out
    _write(out / "ledger.txt", run.ledger.to_text())
    _write(out / f"report-{config.scenario_id}.txt", run.report.to_text())
    if not run.consistent:
        logger.error("honest RSU ledgers diverged")
        return EXIT_LIVENESS
    return EXIT_OK if run.report.all_completed else EXIT_LIVENESS


def build_parser():
    """Argument parser for the `sgpbft` command."""
    parser = ArgumentParser(prog="sgpbft", description="SG-PBFT simulator and benchmark")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG"
    )
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario TOML file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", parents=[common], help="simulate one scenario")
    run.set_defaults(handler=cmd_run)

    sweep = commands.add_parser("sweep", parents=[common], help="compare protocols over n")
    sweep.add_argument("--parallel", type=int, default=1, help="worker processes")
    sweep.add_argument("--n", type=int, nargs="*", help="node counts (default from config)")
    sweep.add_argument("--protocols", nargs="*", help="protocols (default: all four)")
    sweep.set_defaults(handler=cmd_sweep)

    formulas = commands.add_parser("formulas", help="print closed-form message counts")
    formulas.add_argument("--n", type=int, nargs="*", help="node counts")
    formulas.add_argument("--reduction", action="store_true", help="add SG-PBFT savings")
    formulas.set_defaults(handler=cmd_formulas)

    demo = commands.add_parser("auth-demo", parents=[common], help="vehicle authentication")
    demo.set_defaults(handler=cmd_auth_demo)
    return parser


def main(argv: Optional[Sequence[str]] = None, /):
    """Entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except ConfigurationError as exp:
        sys.stderr.write(f"sgpbft: invalid configuration: {exp}\n")
        return EXIT_CONFIG


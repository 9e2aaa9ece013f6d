"""Simnet.

Deterministic discrete-event simulation of a PBFT or SG-PBFT group and one
client. Events are processed in `(tick, insertion order)` order; every random
choice (latency samples, fault drops, node shuffling) is drawn from
generators seeded by the scenario seed, so a run is a pure function of its
configuration and workload.

Delivery time of a message is `now + latency + overhead + extra delay`. With
`service_ticks > 0` each node also works through its inbox one message at a
time, so a message is only handed to the engine once the node is free.
"""

# standard
from collections import Counter
from dataclasses import dataclass, field
import heapq
import logging
import math
import random
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

# local
from sgpbft.client import DEFAULT_CLIENT, Client, ClientState
from sgpbft.config import ProtocolKind, ScenarioConfig, check
from sgpbft.crypto.authenticator import KeyTable
from sgpbft.faults import Step, wrap
from sgpbft.messages import NodeId, ProtocolMessage, Sender, Timeout
from sgpbft.pbft import PbftClient, PbftConfig, PbftReplica, pbft_init
from sgpbft.replica import Application, Event, HashApplication, Replica
from sgpbft.report import RequestRecord, RunReport
from sgpbft.scoring import Committee
from sgpbft.sg_pbft import MasterCollector, SgClient, SgReplica, sg_init
from sgpbft.utils import ConfigurationError

logger = logging.getLogger(__name__)

CLIENT_TIMEOUT_FACTOR = 2
TIMEOUT_FACTOR = 10

AppFactory = Callable[[NodeId], Application]


@dataclass(frozen=True)
class LatencyModel:
    """Per-message network delay in ticks.

    Examples:
        >>> model = LatencyModel("constant", ticks=2, per_message_overhead=1)
        >>> model.sample(random.Random(0)), model.mean_one_way(4)
        (3, 3.0)
    """

    kind: str = "constant"
    ticks: int = 1
    lo: int = 1
    hi: int = 1
    per_message_overhead: int = 0
    service_ticks: int = 0

    def __post_init__(self):
        """Keep every delivery at least one tick after its send."""
        if self.kind == "constant":
            if self.ticks < 1:
                raise ConfigurationError("constant latency must be at least 1 tick")
        elif self.kind == "uniform":
            if not 1 <= self.lo <= self.hi:
                raise ConfigurationError("uniform latency needs 1 <= lo <= hi")
        else:
            raise ConfigurationError(f"unknown latency kind {self.kind!r}")
        if self.per_message_overhead < 0 or self.service_ticks < 0:
            raise ConfigurationError("overhead and service time must be non-negative")

    @classmethod
    def from_config(cls, config: ScenarioConfig, /):
        """Latency model described by a scenario."""
        return cls(
            config.latency_kind,
            ticks=config.latency_ticks,
            lo=config.latency_lo,
            hi=config.latency_hi,
            per_message_overhead=config.per_message_overhead,
            service_ticks=config.service_ticks,
        )

    @property
    def mean(self):
        """Expected network latency plus overhead, without queueing."""
        base = self.ticks if self.kind == "constant" else (self.lo + self.hi) / 2
        return float(base + self.per_message_overhead)

    def sample(self, rng: random.Random, /):
        """Draw one delay."""
        if self.kind == "constant":
            return self.ticks + self.per_message_overhead
        return rng.randint(self.lo, self.hi) + self.per_message_overhead

    def mean_one_way(self, voters: int, /):
        """Mean delay including a pessimistic inbox backlog of `2 * voters` messages."""
        return self.mean + self.service_ticks * 2 * voters


def default_timeout(latency: LatencyModel, voters: int, /):
    """Request timer used when a scenario sets none: ten mean one-way delays.

    Examples:
        >>> default_timeout(LatencyModel(), 4)
        10
    """
    return max(1, math.ceil(TIMEOUT_FACTOR * latency.mean_one_way(voters)))


class Deliver(NamedTuple):
    """Hand `message` to `dest`."""

    dest: Sender
    message: ProtocolMessage


class Fire(NamedTuple):
    """Expire a timer of `owner` (a node, or the client for retransmission)."""

    owner: Sender
    timeout: Timeout


class ClientInject(NamedTuple):
    """Issue the next workload request."""

    index: int


Payload = Union[Deliver, Fire, ClientInject]


class SimEvent(NamedTuple):
    """A scheduled payload; `order` breaks ties at equal ticks by insertion."""

    at: int
    order: int
    payload: Payload


@dataclass
class Tap:
    """Message counters per kind label and engine drops per reason."""

    sent: Counter[str] = field(default_factory=Counter)
    delivered: Counter[str] = field(default_factory=Counter)
    rejected: Counter[str] = field(default_factory=Counter)

    @property
    def dropped(self):
        """Sent messages that were never delivered."""
        return sum(self.sent.values()) - sum(self.delivered.values())


class Timeline:
    """Priority queue of events with a monotone clock."""

    def __init__(self):
        """Start empty at tick 0."""
        self.queue: List[SimEvent] = []
        self.now = 0
        self.tap = Tap()
        self.drop_log: List[Tuple[int, Sender, str, str]] = []
        self._order = 0

    def __len__(self):
        """Number of scheduled events."""
        return len(self.queue)

    def schedule(self, at: int, payload: Payload, /):
        """Enqueue `payload` for tick `at` (never in the past)."""
        heapq.heappush(self.queue, SimEvent(max(at, self.now), self._order, payload))
        self._order += 1

    def peek(self):
        """Tick of the next event, if any."""
        return self.queue[0].at if self.queue else None

    def pop(self):
        """Remove the next event and advance the clock to it."""
        event = heapq.heappop(self.queue)
        self.now = event.at
        return event


class OpenRound(NamedTuple):
    """A scored round whose master may still receive late responses."""

    round: int
    collector: MasterCollector
    result: bytes
    closed_at: int


class Simulation:
    """One scenario run: the group, the client, the network and the workload."""

    def __init__(
        self,
        config: ScenarioConfig,
        /,
        *,
        workload: Optional[Sequence[bytes]] = None,
        applications: Optional[AppFactory] = None,
    ):
        """Build the group described by `config`.

        Raises:
            (ConfigurationError): If `config` cannot drive a run.
        """
        check(config)
        self.config = config
        self.latency = LatencyModel.from_config(config)
        self.timeout_ticks = config.timeout_ticks or default_timeout(
            self.latency, config.consensus_size
        )
        self.client_timeout = CLIENT_TIMEOUT_FACTOR * self.timeout_ticks
        self.timeline = Timeline()
        self.rng = random.Random(f"sgpbft/net/{config.seed}")  # nosec B311
        self.keys = KeyTable.from_seed(config.seed, range(config.n), [DEFAULT_CLIENT])
        make_app: AppFactory = applications or (lambda node: HashApplication())
        self.committee: Optional[Committee] = None
        self.replicas: Dict[NodeId, Replica] = {}
        self.client: Client
        if config.protocol is ProtocolKind.PBFT:
            pbft = PbftConfig(config.n, config.f, self.timeout_ticks)
            for node in range(config.n):
                self.replicas[node] = PbftReplica(
                    pbft, pbft_init(pbft, node), keys=self.keys, app=make_app(node)
                )
            self.client = PbftClient(pbft, self.keys)
        else:
            states, sets = sg_init(
                config.n,
                config.f,
                config.seed,
                rotation_m=config.rotation_m,
                rotation_period=config.rotation_period,
            )
            self.committee = Committee(sets, config.f, strict=config.quorum_mode == "strict")
            for state in states:
                self.replicas[state.id] = SgReplica(
                    state, self.committee, keys=self.keys, app=make_app(state.id)
                )
            self.client = SgClient(self.committee, self.keys)
        self.steps: Dict[NodeId, Step] = {node: r.step for node, r in self.replicas.items()}
        for fault in config.faults:
            self.steps[fault.node] = wrap(
                self.steps[fault.node], fault, keys=self.keys, seed=config.seed
            )
        self.operations: List[bytes] = (
            list(workload)
            if workload is not None
            else [b"op-%d" % index for index in range(config.requests)]
        )
        self.issued: List[ClientState] = []
        self.busy: Dict[NodeId, int] = {}
        self.view_changes: List[Tuple[int, NodeId, int]] = []
        self.open_rounds: List[OpenRound] = []

    # network

    def transmit(self, dest: Sender, message: ProtocolMessage, delay: int = 0, /):
        """Put `message` on the wire to `dest`."""
        timeline = self.timeline
        at = timeline.now + self.latency.sample(self.rng) + delay
        if self.latency.service_ticks and isinstance(dest, int):
            at = max(at, self.busy.get(dest, 0)) + self.latency.service_ticks
            self.busy[dest] = at
        timeline.tap.sent[message.kind.label] += 1
        timeline.schedule(at, Deliver(dest, message))

    def step(self, node: NodeId, event: Event, /):
        """Feed one event to a node and route what it produced."""
        replica = self.replicas[node]
        before = replica.state.view
        transition = self.steps[node](event)
        if transition.dropped is not None and isinstance(event, ProtocolMessage):
            self.timeline.tap.rejected[transition.dropped] += 1
            self.timeline.drop_log.append(
                (self.timeline.now, node, event.kind.label, transition.dropped)
            )
        for send in transition.sends:
            self.transmit(send.dest, send.message, send.delay)
        for timer in transition.timers:
            self.timeline.schedule(self.timeline.now + self.timeout_ticks, Fire(node, timer))
        if replica.state.view != before:
            self.view_changes.append((self.timeline.now, node, replica.state.view))

    # client

    def inject(self, index: int, /):
        """Issue workload request `index`: the master gets it now, the others over the wire."""
        now = self.timeline.now
        message = self.client.issue(self.operations[index], now)
        request = message.body
        assert request is not None  # nosec B101
        self.issued.append(self.client.states[request.key])
        master = self.client.master()
        self.step(master, message)
        for node in self.client.targets():
            if node != master:
                self.transmit(node, message)
        timer = Fire(self.client.id, Timeout(0, request.key))
        self.timeline.schedule(now + self.client_timeout, timer)

    def retransmit(self, timeout: Timeout, /):
        """Resend an unanswered request to every target and wait again."""
        message = self.client.retransmission(timeout.key)
        if message is None:
            return
        logger.debug("client retransmits %s at %s", timeout.key, self.timeline.now)
        for node in self.client.targets():
            self.transmit(node, message)
        self.timeline.schedule(
            self.timeline.now + self.client_timeout, Fire(self.client.id, timeout)
        )

    def complete(self, state: ClientState, /):
        """Close the SG-PBFT round, rotate when due and pull the next request."""
        if self.committee is not None and state.accepted is not None:
            self.close_round(state.accepted)
            if self.committee.rotation_due and self.client.in_flight == 0:
                self.committee.rotate()
        if self.config.workload_mode == "sequential" and len(self.issued) < len(self.operations):
            self.timeline.schedule(self.timeline.now, ClientInject(len(self.issued)))

    # scoring

    def close_round(self, reply: ProtocolMessage, /):
        """Score the finalizing master's responses and evidence for an accepted reply."""
        committee = self.committee
        assert committee is not None and reply.result is not None  # nosec B101
        master = self.replicas[committee.master(reply.view)]
        collector: Optional[MasterCollector] = None
        if isinstance(master, SgReplica):
            collector = master.state.collectors.get((reply.view, reply.seq))
        judgments = collector.unscored() if collector is not None else {}
        number = committee.close_round(reply.seq, reply.result, judgments, master.state.evidence)
        if collector is not None:
            self.open_rounds.append(OpenRound(number, collector, reply.result, self.timeline.now))
        self.flush_rounds()

    def flush_rounds(self, *, final: bool = False):
        """Score responses that reached a master after its round closed."""
        committee = self.committee
        if committee is None:
            return
        still_open: List[OpenRound] = []
        for entry in self.open_rounds:
            late = entry.collector.unscored()
            if late:
                committee.score_late(entry.round, entry.result, late)
            if not final and self.timeline.now - entry.closed_at <= self.timeout_ticks:
                still_open.append(entry)
        self.open_rounds = still_open

    # main loop

    def run(self):
        """Process events until quiescence or the tick budget.

        Returns:
            (RunReport): The outcome; requests that never completed are marked so.
        """
        config = self.config
        logger.info(
            "scenario %s: %s n=%s f=%s, %s requests (%s)",
            config.scenario_id,
            config.protocol.value,
            config.n,
            config.f,
            len(self.operations),
            config.workload_mode,
        )
        if self.operations:
            count = len(self.operations) if config.workload_mode == "burst" else 1
            for index in range(count):
                self.timeline.schedule(0, ClientInject(index))
        timeline = self.timeline
        while timeline.queue:
            upcoming = timeline.peek()
            if upcoming is not None and upcoming > config.max_ticks:
                logger.warning(
                    "scenario %s hit the tick budget with %s events pending",
                    config.scenario_id,
                    len(timeline),
                )
                break
            payload = timeline.pop().payload
            if isinstance(payload, ClientInject):
                self.inject(payload.index)
            elif isinstance(payload, Fire):
                if isinstance(payload.owner, int):
                    self.step(payload.owner, payload.timeout)
                else:
                    self.retransmit(payload.timeout)
            elif isinstance(payload.dest, int):
                timeline.tap.delivered[payload.message.kind.label] += 1
                self.step(payload.dest, payload.message)
            else:
                timeline.tap.delivered[payload.message.kind.label] += 1
                state = self.client.on_reply(payload.message, timeline.now)
                if state is not None:
                    self.complete(state)
        self.flush_rounds(final=True)
        report = self.report()
        logger.info(
            "scenario %s finished at tick %s: %s/%s completed, %s messages",
            config.scenario_id,
            report.final_tick,
            report.completed,
            len(report.requests),
            report.total_sent,
        )
        return report

    def report(self):
        """Summarize the run."""
        records: List[RequestRecord] = []
        for index in range(len(self.operations)):
            if index >= len(self.issued):
                records.append(RequestRecord(index, self.client.id))
                continue
            state = self.issued[index]
            accepted = state.accepted
            records.append(
                RequestRecord(
                    index,
                    self.client.id,
                    timestamp=state.request.timestamp,
                    injected_at=state.injected_at,
                    completed_at=state.completed_at,
                    result=None if state.result is None else state.result.hex(),
                    view=None if accepted is None else accepted.view,
                    seq=None if accepted is None else accepted.seq,
                )
            )
        committee = self.committee
        tap = self.timeline.tap
        return RunReport(
            scenario=self.config.to_mapping(),
            requests=tuple(records),
            sent=dict(sorted(tap.sent.items())),
            delivered=dict(sorted(tap.delivered.items())),
            rejected=dict(sorted(tap.rejected.items())),
            final_tick=self.timeline.now,
            timeout_ticks=self.timeout_ticks,
            view_changes=tuple(self.view_changes),
            scores=(
                {}
                if committee is None
                else {str(node): score for node, score in sorted(committee.sets.scores.items())}
            ),
            score_events=(
                () if committee is None else tuple(tuple(event) for event in committee.events)
            ),
            rotations=(
                ()
                if committee is None
                else tuple((r.round, r.left, r.entered) for r in committee.rotations)
            ),
        )


def run_scenario(
    config: ScenarioConfig,
    /,
    *,
    workload: Optional[Sequence[bytes]] = None,
    applications: Optional[AppFactory] = None,
):
    """Simulate one scenario.

    Examples:
        >>> report = run_scenario(ScenarioConfig(protocol=ProtocolKind.PBFT, n=4, f=1))
        >>> report.consensus_messages, report.requests[0].delay
        (24, 4)

    Args:
        config:
            Protocol, group size, faults, latency model and seed.
        workload:
            Operations to submit, in order; defaults to `config.requests` generated ones.
        applications:
            Builds each node's state machine; defaults to `HashApplication`.

    Returns:
        (RunReport): Per-request ticks, message counts, scores and logs.

    Raises:
        (ConfigurationError): If `config` is invalid for its protocol.
    """
    return Simulation(config, workload=workload, applications=applications).run()


def transaction_delay(report: RunReport, index: int, /):
    """Completion tick minus injection tick of request `index`, or `None` if incomplete.

    Examples:
        >>> report = RunReport({}, (RequestRecord(0, "c", 0, 0, 37),))
        >>> transaction_delay(report, 0)
        37
    """
    return report.requests[index].delay


def throughput(report: RunReport, /):
    """Completed requests per 1000 ticks, measured from the first injection.

    Examples:
        >>> throughput(RunReport({}))
        0.0
    """
    done = [record for record in report.requests if record.completed_at is not None]
    injected = [record.injected_at for record in report.requests if record.injected_at is not None]
    if not done or not injected:
        return 0.0
    span = max(record.completed_at or 0 for record in done) - min(injected)
    if span <= 0:
        return 0.0
    return len(done) * 1000 / span

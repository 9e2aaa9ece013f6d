"""Report.

`RunReport` is the outcome of one simulated scenario. It serializes to
deterministic JSON text (sorted keys, two-space indent) so that re-running a
scenario with the same configuration yields byte-identical files.
"""

# standard
from dataclasses import asdict, dataclass, field
import json
from typing import Any, Dict, Mapping, Optional, Tuple

# local
from sgpbft.messages import CONSENSUS_KINDS


@dataclass(frozen=True)
class RequestRecord:
    """Life of one workload request; tick fields stay `None` if it never got there."""

    index: int
    client: str
    timestamp: Optional[int] = None
    injected_at: Optional[int] = None
    completed_at: Optional[int] = None
    result: Optional[str] = None
    view: Optional[int] = None
    seq: Optional[int] = None

    @property
    def completed(self):
        """Whether the client accepted a result."""
        return self.completed_at is not None

    @property
    def delay(self):
        """Completion tick minus injection tick, if completed."""
        if self.completed_at is None or self.injected_at is None:
            return None
        return self.completed_at - self.injected_at


@dataclass(frozen=True)
class RunReport:
    """Everything a run produced.

    `sent` and `delivered` count messages per kind label; `rejected` counts
    deliveries an engine ignored, per drop reason. Score fields are empty for
    PBFT runs.
    """

    scenario: Mapping[str, Any]
    requests: Tuple[RequestRecord, ...] = ()
    sent: Mapping[str, int] = field(default_factory=dict)
    delivered: Mapping[str, int] = field(default_factory=dict)
    rejected: Mapping[str, int] = field(default_factory=dict)
    final_tick: int = 0
    timeout_ticks: int = 0
    view_changes: Tuple[Tuple[int, int, int], ...] = ()
    scores: Mapping[str, int] = field(default_factory=dict)
    score_events: Tuple[Tuple[int, int, int, str], ...] = ()
    rotations: Tuple[Tuple[int, Tuple[int, ...], Tuple[int, ...]], ...] = ()
    ledgers: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    @property
    def scenario_id(self) -> str:
        """Identifier echoed from the configuration."""
        return str(self.scenario.get("scenario_id", ""))

    @property
    def completed(self):
        """Number of completed requests."""
        return sum(1 for record in self.requests if record.completed)

    @property
    def all_completed(self):
        """Whether every workload request completed (the liveness verdict)."""
        return all(record.completed for record in self.requests)

    @property
    def total_sent(self):
        """Messages of every kind put on the network."""
        return sum(self.sent.values())

    @property
    def dropped(self):
        """Messages sent but never delivered."""
        return self.total_sent - sum(self.delivered.values())

    @property
    def consensus_messages(self):
        """Sent pre-prepares, prepares, commits and responses."""
        return sum(self.sent.get(kind.label, 0) for kind in CONSENSUS_KINDS)

    @property
    def messages_per_consensus(self) -> float:
        """Consensus messages per completed request."""
        if not self.completed:
            return float(self.consensus_messages)
        return self.consensus_messages / self.completed

    def to_text(self):
        """Serialize to deterministic JSON text."""
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_text(cls, text: str, /):
        """Parse text written by `to_text`.

        Raises:
            (ValueError): If `text` is not a serialized report.
        """
        data: Dict[str, Any] = json.loads(text)
        try:
            return cls(
                scenario=data["scenario"],
                requests=tuple(RequestRecord(**record) for record in data["requests"]),
                sent=data["sent"],
                delivered=data["delivered"],
                rejected=data["rejected"],
                final_tick=data["final_tick"],
                timeout_ticks=data["timeout_ticks"],
                view_changes=tuple(tuple(entry) for entry in data["view_changes"]),
                scores=data["scores"],
                score_events=tuple(tuple(entry) for entry in data["score_events"]),
                rotations=tuple(
                    (entry[0], tuple(entry[1]), tuple(entry[2])) for entry in data["rotations"]
                ),
                ledgers={node: tuple(lines) for node, lines in data["ledgers"].items()},
            )
        except (KeyError, TypeError, IndexError) as exp:
            raise ValueError(f"not a run report: {exp}") from exp

"""Scoring.

Node scores and the consensus/candidate partition of SG-PBFT.

`NodeSets` is an immutable value and the module-level functions are pure.
`Committee` is the single mutable holder a scenario shares between its
replicas: it applies round outcomes, keeps the score ledger and remembers the
consensus set of every epoch so certificates from before a rotation still
verify.
"""

# standard
from dataclasses import dataclass, field, replace
import logging
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Set,
    Tuple,
)

# local
from sgpbft.messages import NodeId, SeqNum, View
from sgpbft.replica import quorum_size

logger = logging.getLogger(__name__)

Score = int

INITIAL_SCORE: Score = 100
CORRECT_DELTA: Score = 1
WRONG_DELTA: Score = -5
CONVICTION_DELTA: Score = -20
ROTATION_PERIOD = 50


class ScoreEvent(NamedTuple):
    """One score change: which round, which node, by how much and why."""

    round: int
    node: NodeId
    delta: Score
    reason: str


class Rotation(NamedTuple):
    """One membership update: after which round, who left and who entered."""

    round: int
    left: Tuple[NodeId, ...]
    entered: Tuple[NodeId, ...]


@dataclass(frozen=True)
class NodeSets:
    """Consensus list, candidate list, scores and the rotation counter.

    A node's position in `consensus` is its number for master selection.
    """

    consensus: Tuple[NodeId, ...]
    candidates: Tuple[NodeId, ...]
    scores: Mapping[NodeId, Score]
    request_count: int = 0
    rotation_m: int = 1
    rotation_period: int = ROTATION_PERIOD

    @property
    def cn(self):
        """Size of the consensus set."""
        return len(self.consensus)

    @property
    def universe(self):
        """Every node id, consensus first."""
        return self.consensus + self.candidates


def default_rotation_m(cn: int, /):
    """Rotation width used when none is configured.

    Examples:
        >>> default_rotation_m(4)
        1
        >>> default_rotation_m(50)
        5
    """
    return max(1, cn // 10)


def select_master(view: View, cn: int, /):
    """Position of the master in the consensus list.

    Examples:
        >>> select_master(0, 4), select_master(5, 4), select_master(8, 4)
        (0, 1, 0)

    Raises:
        (ValueError): If `cn` is not positive.
    """
    if cn <= 0:
        raise ValueError("`cn` must be positive")
    return view % cn


def score_events(
    sets: NodeSets,
    final_result: bytes,
    judgments: Mapping[NodeId, Optional[bytes]],
    byzantine_evidence: Iterable[NodeId] = (),
    /,
    *,
    round: int = 0,
):
    """Score changes earned by one round, in consensus-list order then evidence order."""
    events: List[ScoreEvent] = []
    for node in sets.consensus:
        judgment = judgments.get(node)
        if judgment is None:
            continue
        if judgment == final_result:
            events.append(ScoreEvent(round, node, CORRECT_DELTA, "correct"))
        else:
            events.append(ScoreEvent(round, node, WRONG_DELTA, "wrong"))
    for node in byzantine_evidence:
        events.append(ScoreEvent(round, node, CONVICTION_DELTA, "byzantine"))
    return events


def apply_scores(
    sets: NodeSets,
    final_result: bytes,
    judgments: Mapping[NodeId, Optional[bytes]],
    byzantine_evidence: Iterable[NodeId] = (),
    /,
    *,
    count_request: bool = True,
):
    """Reward matching judgments, punish differing ones and convicted nodes.

    Examples:
        >>> sets = NodeSets((0, 1), (2,), {0: 100, 1: 100, 2: 100})
        >>> after = apply_scores(sets, b"A", {0: b"A", 1: b"B"}, {1})
        >>> after.scores[0], after.scores[1], after.scores[2], after.request_count
        (101, 75, 100, 1)
    """
    scores: Dict[NodeId, Score] = dict(sets.scores)
    for event in score_events(sets, final_result, judgments, byzantine_evidence):
        scores[event.node] = scores.get(event.node, INITIAL_SCORE) + event.delta
    return replace(
        sets,
        scores=scores,
        request_count=sets.request_count + (1 if count_request else 0),
    )


def rotation_choice(sets: NodeSets, /):
    """Nodes `update_con_nodes` would swap: (leaving consensus, entering from candidates)."""
    m = max(0, min(sets.rotation_m, len(sets.candidates), sets.cn))
    if m == 0:
        return (), ()
    # lowest score first, and among equals the higher id goes first
    leaving = sorted(sets.consensus, key=lambda node: (sets.scores[node], -node))[:m]
    # highest score first, and among equals the lower id goes first
    entering = sorted(sets.candidates, key=lambda node: (-sets.scores[node], node))[:m]
    return tuple(leaving), tuple(entering)


def update_con_nodes(sets: NodeSets, /):
    """Swap the `m` lowest-scoring consensus nodes with the `m` best candidates.

    Leaving nodes join the candidate tail in consensus-list order, entering
    nodes join the consensus tail in rank order, and the counter restarts.

    Examples:
        >>> sets = NodeSets(
        ...     (0, 1, 2, 3), (4, 5),
        ...     {0: 101, 1: 95, 2: 99, 3: 80, 4: 100, 5: 100},
        ...     request_count=50,
        ... )
        >>> after = update_con_nodes(sets)
        >>> after.consensus, after.candidates, after.request_count
        ((0, 1, 2, 4), (5, 3), 0)
    """
    leaving, entering = rotation_choice(sets)
    gone, joined = set(leaving), set(entering)
    return replace(
        sets,
        consensus=tuple(node for node in sets.consensus if node not in gone) + entering,
        candidates=tuple(node for node in sets.candidates if node not in joined)
        + tuple(node for node in sets.consensus if node in gone),
        request_count=0,
    )


def replay(events: Iterable[ScoreEvent], nodes: Iterable[NodeId], /):
    """Rebuild scores from a ledger of score events.

    Examples:
        >>> replay([ScoreEvent(1, 0, -5, "wrong"), ScoreEvent(2, 0, 1, "correct")], [0, 1])
        {0: 96, 1: 100}
    """
    scores = {node: INITIAL_SCORE for node in nodes}
    for event in events:
        scores[event.node] = scores.get(event.node, INITIAL_SCORE) + event.delta
    return scores


@dataclass
class Committee:
    """The scenario's view of SG-PBFT membership and scoring.

    `epochs` holds `(first sequence number, consensus set)` for every
    membership since the start of the run.
    """

    sets: NodeSets
    f: int
    strict: bool = False
    events: List[ScoreEvent] = field(default_factory=list)
    rotations: List[Rotation] = field(default_factory=list)
    convicted: Set[Tuple[View, NodeId]] = field(default_factory=set)
    epochs: List[Tuple[SeqNum, FrozenSet[NodeId]]] = field(default_factory=list)
    rounds: int = 0
    last_seq: SeqNum = -1

    def __post_init__(self):
        """Open the first epoch."""
        if not self.epochs:
            self.epochs.append((0, frozenset(self.sets.consensus)))
        self.nodes = tuple(sorted(self.sets.universe))
        self.voters = tuple(sorted(self.sets.consensus))

    @property
    def consensus(self):
        """Current consensus list."""
        return self.sets.consensus

    @property
    def candidates(self):
        """Current candidate list."""
        return self.sets.candidates

    @property
    def threshold(self):
        """Matching responses needed to finalize a result."""
        return quorum_size(self.sets.cn, self.f) + (1 if self.strict else 0)

    @property
    def epoch_start(self):
        """First sequence number of the current membership."""
        return self.epochs[-1][0]

    def master(self, view: View, /):
        """Master node of `view` under the current membership."""
        return self.sets.consensus[select_master(view, self.sets.cn)]

    def is_consensus(self, node: NodeId, /):
        """Whether `node` currently votes."""
        return node in self.epochs[-1][1]

    def consensus_at(self, seq: SeqNum, /):
        """Consensus set of the epoch that `seq` belongs to."""
        members = self.epochs[0][1]
        for start, epoch_members in self.epochs:
            if start > seq:
                break
            members = epoch_members
        return members

    def close_round(
        self,
        seq: SeqNum,
        final_result: bytes,
        judgments: Mapping[NodeId, Optional[bytes]],
        evidence: Iterable[Tuple[View, NodeId]] = (),
        /,
    ):
        """Score a round the client accepted and count it towards rotation."""
        self.rounds += 1
        self.last_seq = max(self.last_seq, seq)
        fresh = sorted(set(evidence) - self.convicted)
        self.convicted.update(fresh)
        convicted_nodes = [node for _, node in fresh]
        self.events.extend(
            score_events(self.sets, final_result, judgments, convicted_nodes, round=self.rounds)
        )
        self.sets = apply_scores(self.sets, final_result, judgments, convicted_nodes)
        return self.rounds

    def score_late(
        self, round: int, final_result: bytes, judgments: Mapping[NodeId, Optional[bytes]], /
    ):
        """Score judgments that reached the master after its round closed."""
        self.events.extend(score_events(self.sets, final_result, judgments, round=round))
        self.sets = apply_scores(self.sets, final_result, judgments, count_request=False)

    @property
    def rotation_due(self):
        """Whether the request counter reached the rotation period."""
        return self.sets.request_count >= self.sets.rotation_period

    def rotate(self):
        """Apply `update_con_nodes` and open a new epoch after the last closed sequence."""
        leaving, entering = rotation_choice(self.sets)
        self.sets = update_con_nodes(self.sets)
        self.voters = tuple(sorted(self.sets.consensus))
        self.epochs.append((self.last_seq + 1, frozenset(self.sets.consensus)))
        rotation = Rotation(self.rounds, leaving, entering)
        self.rotations.append(rotation)
        logger.info("rotation after round %s: out %s, in %s", self.rounds, leaving, entering)
        return rotation

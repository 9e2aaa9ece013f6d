"""Test SG-PBFT."""

# standard
from collections import Counter, deque
from typing import Dict, List, Optional, Tuple

# external
import pytest

# local
from sgpbft import (
    Committee,
    ConfigurationError,
    DropRate,
    FaultSpec,
    KeyTable,
    MasterCollector,
    MessageKind,
    ProtocolKind,
    ProtocolMessage,
    ScenarioConfig,
    SgReplica,
    Silent,
    sg_client_step,
    sg_finalize,
    sg_init,
    sg_step,
)
from sgpbft.client import ClientState
from sgpbft.faults import Step
from sgpbft.messages import ClientRequest, Send, digest_of
from sgpbft.replica import Event
from sgpbft.sg_pbft import CANDIDATE, CONSENSUS, SgClient
from sgpbft.simnet import Simulation

KEY = ("client-0", 0)

# ==> initialization <== #


@pytest.mark.parametrize(
    "n, f, period",
    [(7, 1, 50), (6, 1, 50), (0, 0, 50), (8, -1, 50), (8, 1, 0), (12, 2, 50)],
)
def test_raises_on_invalid_group(n: int, f: int, period: int):
    """Test raises on invalid group."""
    with pytest.raises(ConfigurationError):
        sg_init(n, f, 0, rotation_period=period)


@pytest.mark.parametrize("n, f", [(8, 1), (16, 2), (28, 4)])
def test_partition_covers_every_node(n: int, f: int):
    """Test partition covers every node."""
    states, sets = sg_init(n, f, 5)
    assert sorted(sets.consensus + sets.candidates) == list(range(n))
    assert len(sets.consensus) == len(sets.candidates) == n // 2
    assert [state.id for state in states] == list(range(n))
    assert all(state.view == 0 for state in states)


def test_partition_follows_the_seed():
    """Test partition follows the seed."""
    assert sg_init(16, 1, 9)[1] == sg_init(16, 1, 9)[1]


def test_rotation_width_defaults_to_a_tenth():
    """Test rotation width defaults to a tenth."""
    assert sg_init(100, 3, 0)[1].rotation_m == 5
    assert sg_init(100, 3, 0, rotation_m=2)[1].rotation_m == 2


# ==> finalize <== #


def _response(sender: int, result: bytes, *, digest: bytes = b"d", seq: int = 0):
    return ProtocolMessage(MessageKind.RESPONSE, 0, seq, digest, sender, result=result)


@pytest.mark.parametrize(
    "cn, f, strict, needed",
    [(4, 1, False, 3), (4, 1, True, 4), (7, 2, False, 5), (7, 1, False, 5), (10, 3, False, 7)],
)
def test_finalize_threshold(cn: int, f: int, strict: bool, needed: int):
    """Test finalize threshold."""
    collector = MasterCollector(0, 0, b"d")
    for node in range(needed - 1):
        collector.record(_response(node, b"A"))
        assert sg_finalize(collector, f, cn=cn, strict=strict) is None
    collector.record(_response(needed - 1, b"A"))
    outcome = sg_finalize(collector, f, cn=cn, strict=strict)
    assert outcome is not None
    result, certificate = outcome
    assert result == b"A" and len(certificate) == needed
    assert collector.finalized == b"A"


def test_finalize_ignores_split_results():
    """Test finalize ignores split results."""
    collector = MasterCollector(0, 0, b"d")
    for node, result in enumerate((b"A", b"B", b"A", b"B")):
        collector.record(_response(node, result))
    assert sg_finalize(collector, 1) is None
    assert collector.result_multiset == {b"A": {0, 2}, b"B": {1, 3}}


def test_collector_keeps_first_response_per_node():
    """Test collector keeps first response per node."""
    collector = MasterCollector(0, 0, b"d")
    assert collector.record(_response(1, b"A"))
    assert not collector.record(_response(1, b"B"))
    assert collector.judgments() == {1: b"A"}
    assert collector.unscored() == {1: b"A"}
    assert collector.unscored() == {}


# ==> a group of eight <== #


def _deliver(replicas: Dict[int, SgReplica], sends: List[Send], /):
    queue = deque(sends)
    replies: List[ProtocolMessage] = []
    counts: Counter = Counter()
    while queue:
        dest, message, _ = queue.popleft()
        counts[message.kind] += 1
        if isinstance(dest, int):
            queue.extend(sg_step(replicas[dest], message).sends)
        else:
            replies.append(message)
    return replies, counts


class TestGroup:
    """Test one request through an eight-node group."""

    def setup_method(self):
        """Setup Method."""
        states, sets = sg_init(8, 1, 0)
        self.committee = Committee(sets, 1)
        self.keys = KeyTable.from_seed(0, range(8), ["client-0"])
        self.replicas = {
            state.id: SgReplica(state, self.committee, keys=self.keys) for state in states
        }
        self.master = self.committee.master(0)
        self.backups = [node for node in sets.consensus if node != self.master]
        self.candidates = list(sets.candidates)
        self.client = SgClient(self.committee, self.keys)
        self.request = self.client.issue(b"op", 0)
        self.proposal = sg_step(self.replicas[self.master], self.request)
        self.digest = self.request.digest

    def signed(self, sender: int, result: bytes = b"R", *, digest: Optional[bytes] = None):
        """A signed response for the proposed slot."""
        return self.keys.sign(_response(sender, result, digest=digest or self.digest))

    def certificate(self, senders: List[int], result: bytes = b"R"):
        """A result broadcast backed by responses of `senders`."""
        return self.keys.sign(
            ProtocolMessage(
                MessageKind.RESULT_BROADCAST,
                0,
                0,
                self.digest,
                self.master,
                body=self.request.body,
                result=result,
                certificate=tuple(self.signed(node, result) for node in senders),
            )
        )

    def test_roles(self):
        """Test roles."""
        assert self.replicas[self.master].role == CONSENSUS
        assert {self.replicas[node].role for node in self.candidates} == {CANDIDATE}

    def test_master_proposes_to_consensus_only(self):
        """Test master proposes to consensus only."""
        assert [send.dest for send in self.proposal.sends] == sorted(self.backups)

    def test_round_counts_and_applies_everywhere(self):
        """Test round counts and applies everywhere."""
        replies, counts = _deliver(self.replicas, self.proposal.sends)
        assert counts[MessageKind.PRE_PREPARE] == 3
        assert counts[MessageKind.PREPARE] == 9
        assert counts[MessageKind.RESPONSE] == 3
        assert counts[MessageKind.RESULT_BROADCAST] == 7
        assert len(replies) == 1
        assert self.client.on_reply(replies[0], 4) is not None
        results = {replica.state.executed[KEY] for replica in self.replicas.values()}
        assert len(results) == 1

    def test_candidate_ignores_consensus_traffic(self):
        """Test candidate ignores consensus traffic."""
        pre_prepare = self.proposal.sends[0].message
        assert sg_step(self.replicas[self.candidates[0]], pre_prepare).dropped == CANDIDATE

    def test_candidate_ignores_requests(self):
        """Test candidate ignores requests."""
        assert sg_step(self.replicas[self.candidates[0]], self.request).dropped == CANDIDATE

    def test_response_to_non_master(self):
        """Test response to non-master."""
        response = self.signed(self.backups[0])
        transition = sg_step(self.replicas[self.backups[1]], response)
        assert transition.dropped == "response to a non-master"

    def test_response_from_non_member(self):
        """Test response from non-member."""
        response = self.signed(self.candidates[0])
        transition = sg_step(self.replicas[self.master], response)
        assert transition.dropped == "response from a non-member"

    def test_response_digest_mismatch(self):
        """Test response digest mismatch."""
        response = self.signed(self.backups[0], digest=b"x" * 32)
        transition = sg_step(self.replicas[self.master], response)
        assert transition.dropped == "response digest mismatch"

    def test_certified_broadcast_applies_on_candidate(self):
        """Test certified broadcast applies on candidate."""
        candidate = self.replicas[self.candidates[0]]
        broadcast = self.certificate([self.master, *self.backups[:2]])
        assert sg_step(candidate, broadcast).dropped is None
        assert candidate.state.executed == {KEY: b"R"}
        assert sg_step(candidate, broadcast).dropped == "duplicate result"

    @pytest.mark.parametrize(
        "pick, reason",
        [
            (lambda t: [t.master, *t.backups[:1]], "certificate below threshold"),
            (lambda t: [t.master, t.backups[0], t.candidates[0]], "certificate from a non-member"),
        ],
    )
    def test_rejects_bad_certificate(self, pick, reason: str):
        """Test rejects bad certificate."""
        broadcast = self.certificate(pick(self))
        candidate = self.replicas[self.candidates[1]]
        assert sg_step(candidate, broadcast).dropped == reason
        assert candidate.state.executed == {}

    def test_rejects_forged_certificate(self):
        """Test rejects forged certificate."""
        responses = [self.signed(node) for node in (self.master, *self.backups[:2])]
        responses[1] = responses[1].with_auth(b"\x00" * 32)
        broadcast = self.keys.sign(
            ProtocolMessage(
                MessageKind.RESULT_BROADCAST,
                0,
                0,
                self.digest,
                self.master,
                body=self.request.body,
                result=b"R",
                certificate=tuple(responses),
            )
        )
        assert sg_step(self.replicas[self.candidates[0]], broadcast).dropped == "forged certificate"

    def test_rejects_result_not_backed_by_certificate(self):
        """Test rejects result not backed by certificate."""
        broadcast = self.certificate([self.master, *self.backups[:2]])
        flipped = self.keys.sign(
            ProtocolMessage(
                MessageKind.RESULT_BROADCAST,
                0,
                0,
                self.digest,
                self.master,
                body=self.request.body,
                result=b"W",
                certificate=broadcast.certificate,
            )
        )
        transition = sg_step(self.replicas[self.candidates[0]], flipped)
        assert transition.dropped == "certificate does not match"

    def test_rejects_broadcast_with_other_body(self):
        """Test rejects broadcast with other body."""
        broadcast = self.certificate([self.master, *self.backups[:2]])
        other = ClientRequest(b"other", 0, "client-0")
        assert digest_of(other) != broadcast.digest
        tampered = self.keys.sign(
            ProtocolMessage(
                MessageKind.RESULT_BROADCAST,
                0,
                0,
                broadcast.digest,
                self.master,
                body=other,
                result=b"R",
                certificate=broadcast.certificate,
            )
        )
        assert sg_step(self.replicas[self.candidates[0]], tampered).dropped == "digest mismatch"

    def test_client_trusts_one_certified_reply(self):
        """Test client trusts one certified reply."""
        state = ClientState(ClientRequest(b"op", 0, "client-0"))
        reply = self.certificate([self.master, *self.backups[:2]])
        weak = self.certificate([self.master])
        sg_client_step(state, weak, keys=self.keys, committee=self.committee, now=2)
        assert not state.completed
        sg_client_step(state, reply, keys=self.keys, committee=self.committee, now=3)
        assert (state.completed_at, state.result) == (3, b"R")

    def test_redelivered_messages_change_nothing(self):
        """Test redelivered messages change nothing."""
        delivered: List[Tuple[int, ProtocolMessage]] = []
        queue = deque(self.proposal.sends)
        while queue:
            dest, message, _ = queue.popleft()
            if isinstance(dest, int):
                delivered.append((dest, message))
                queue.extend(sg_step(self.replicas[dest], message).sends)
        executed = {node: dict(r.state.executed) for node, r in self.replicas.items()}
        assert {message.kind for _, message in delivered} >= {
            MessageKind.PREPARE,
            MessageKind.RESPONSE,
            MessageKind.RESULT_BROADCAST,
        }
        for dest, message in delivered:
            transition = sg_step(self.replicas[dest], message)
            assert transition.dropped is not None
            assert transition.sends == [] and transition.timers == []
        assert {node: r.state.executed for node, r in self.replicas.items()} == executed


@pytest.mark.parametrize("strict, threshold", [(False, 3), (True, 4)])
def test_committee_threshold(strict: bool, threshold: int):
    """Test committee threshold."""
    _, sets = sg_init(8, 1, 0)
    assert Committee(sets, 1, strict=strict).threshold == threshold


def test_strict_mode_needs_every_consensus_response():
    """Test strict mode needs every consensus response."""
    collector = MasterCollector(0, 0, b"d")
    responses: List[Tuple[int, bytes]] = [(0, b"A"), (1, b"A"), (2, b"A"), (3, b"B")]
    for node, result in responses:
        collector.record(_response(node, result))
    assert sg_finalize(collector, 1, cn=4, strict=True) is None


# ==> candidates <== #


@pytest.mark.parametrize("fault", [None, Silent(), DropRate(0.3)])
def test_candidates_never_vote(fault: Optional[object]):
    """Test candidates never prepare, respond or vote, even under a faulty master."""
    _, sets = sg_init(8, 1, 0)
    faults = () if fault is None else (FaultSpec(sets.consensus[0], fault),)
    config = ScenarioConfig(
        scenario_id="passive",
        protocol=ProtocolKind.SGPBFT,
        n=8,
        f=1,
        requests=5,
        faults=faults,  # type: ignore[arg-type]
    )
    simulation = Simulation(config)
    sent: Counter = Counter()

    def counting(step: Step, /):
        def wrapped(event: Event, /):
            transition = step(event)
            sent.update(send.message.kind for send in transition.sends)
            return transition

        return wrapped

    for node in sets.candidates:
        simulation.steps[node] = counting(simulation.steps[node])
    report = simulation.run()
    assert report.all_completed
    assert not report.rotations
    for kind in (MessageKind.PREPARE, MessageKind.RESPONSE, MessageKind.VIEW_CHANGE):
        assert sent[kind] == 0

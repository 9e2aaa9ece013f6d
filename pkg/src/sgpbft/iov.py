"""IoV.

Vehicle identity authentication with RSUs as consensus nodes. The service
provider (SP) issues each vehicle a pseudonymous credential; the SP then acts
as the client and submits credentials to the RSU group, whose nodes check
them while executing the request. Accepted credentials are written to every
RSU's append-only ledger.

Credential construction:

- pseudo ID `h = H1(ID ‖ t)` for a fresh random `t`,
- `T` is the registration tick,
- `S` is the SP's Schnorr signature over `(h, T)`, verifiable with `P_pub`.

The vehicle password is only kept at the SP, as a salted hash.
"""

# standard
from dataclasses import dataclass, replace
from hashlib import sha256
import hmac
import logging
import random
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

# local
from sgpbft.config import ScenarioConfig
from sgpbft.crypto.curve import SystemParams, schnorr_sign, schnorr_verify, sp_init
from sgpbft.messages import (
    ClientRequest,
    NodeId,
    SeqNum,
    View,
    decode_fields,
    encode_fields,
    encode_int,
)
from sgpbft.report import RunReport
from sgpbft.simnet import Simulation
from sgpbft.utils import LedgerError, RegistrationError, validator

logger = logging.getLogger(__name__)

ACCEPT = b"ACCEPT"
REJECT = b"REJECT"
CREDENTIAL_TAG = b"sgpbft/credential"
VEHICLE_TAG = b"sgpbft/vehicle"
SALT_SIZE = 16


def _scalar(value: int, /):
    return value.to_bytes((value.bit_length() + 7) // 8 or 1, "big")


def credential_message(pseudo_id: int, registered_at: int, /):
    """Bytes the SP signs for a credential."""
    return encode_fields(CREDENTIAL_TAG, _scalar(pseudo_id), encode_int(registered_at))


@dataclass(frozen=True)
class VehicleCredential:
    """Pseudo ID `h`, registration tick `T` and SP credential `S`."""

    pseudo_id: int
    registered_at: int
    signature: bytes

    @property
    def pseudo_id_hex(self):
        """Pseudo ID as lower-case hex, as written to ledgers."""
        return format(self.pseudo_id, "x")

    def encode(self):
        """Canonical bytes carried as the request operation."""
        return encode_fields(
            VEHICLE_TAG, _scalar(self.pseudo_id), encode_int(self.registered_at), self.signature
        )

    @classmethod
    def decode(cls, data: bytes, /):
        """Inverse of `encode`.

        Raises:
            (ValueError): If `data` is not an encoded credential.
        """
        parts = decode_fields(data)
        if len(parts) != 4 or parts[0] != VEHICLE_TAG or len(parts[2]) != 8:
            raise ValueError("Not a vehicle credential")
        return cls(
            int.from_bytes(parts[1], "big"),
            int.from_bytes(parts[2], "big"),
            parts[3],
        )


@validator
def verify_credential(
    params: SystemParams, pseudo_id: int, registered_at: int, signature: bytes, /
):
    """Check an SP-issued credential against `P_pub`.

    Examples:
        >>> sp = ServiceProvider.from_seed(7)
        >>> credential = sp.register_vehicle(b"car-1", b"secret", now=3)
        >>> verify_credential(
        ...     sp.params, credential.pseudo_id, credential.registered_at, credential.signature
        ... )
        True
        >>> bool(verify_credential(sp.params, credential.pseudo_id, 4, credential.signature))
        False

    Args:
        params:
            SP system parameters.
        pseudo_id:
            Pseudo ID `h`, an element of `Z_q*`.
        registered_at:
            Registration tick `T`.
        signature:
            Credential `S`.

    Returns:
        (Literal[True]): If `S` is the SP's signature over `(h, T)`.
        (ValidationError): Otherwise, including for malformed input.
    """
    if not 0 < pseudo_id < params.q or registered_at < 0:
        return False
    return schnorr_verify(params, credential_message(pseudo_id, registered_at), signature)


class ServiceProvider:
    """Issuer of vehicle credentials.

    Only the SP knows which real identity hides behind a pseudo ID.
    """

    def __init__(self, params: SystemParams, private_key: int, *, seed: int = 0):
        """Hold the SP key pair and a seeded generator for `t`, nonces and salts."""
        self.params = params
        self._private_key = private_key
        self._rng = random.Random(f"sgpbft/sp/{seed}")  # nosec B311
        self.pseudonyms: Dict[bytes, int] = {}
        self._passwords: Dict[bytes, Tuple[bytes, bytes]] = {}

    @classmethod
    def from_seed(cls, seed: int, /, **kwargs: int):
        """Run system initialization and wrap the result."""
        params, private_key = sp_init(seed, **kwargs)
        return cls(params, private_key, seed=seed)

    def register_vehicle(self, identity: bytes, password: bytes, /, *, now: int = 0):
        """Issue a credential for a new vehicle.

        Raises:
            (RegistrationError): For an empty or already registered identity.
        """
        if not identity:
            raise RegistrationError("vehicle identity must not be empty")
        if identity in self.pseudonyms:
            raise RegistrationError(f"vehicle {identity!r} is already registered")
        params = self.params
        t = self._rng.randrange(1, params.q)
        pseudo_id = params.h1(encode_fields(identity, _scalar(t)))
        message = credential_message(pseudo_id, now)
        while True:
            try:
                signature = schnorr_sign(
                    params, self._private_key, message, self._rng.randrange(1, params.q)
                )
                break
            except ValueError:
                continue
        salt = bytes(self._rng.getrandbits(8) for _ in range(SALT_SIZE))
        self._passwords[identity] = (salt, sha256(salt + password).digest())
        self.pseudonyms[identity] = pseudo_id
        logger.debug("registered vehicle with pseudo ID %x at tick %s", pseudo_id, now)
        return VehicleCredential(pseudo_id, now, signature)

    def check_password(self, identity: bytes, password: bytes, /):
        """Compare `password` with the salted hash kept for `identity`."""
        stored = self._passwords.get(identity)
        if stored is None:
            return False
        salt, digest = stored
        return hmac.compare_digest(sha256(salt + password).digest(), digest)

    def forge_credential(self, label: bytes, /, *, now: int = 0):
        """A credential with a random `S`, as an attacker without the SP key would produce."""
        params = self.params
        width = params.scalar_size
        pseudo_id = params.h1(encode_fields(b"forged", label))
        signature = b"".join(
            self._rng.randrange(1, params.q).to_bytes(width, "big") for _ in range(2)
        )
        return VehicleCredential(pseudo_id, now, signature)


class LedgerEntry(NamedTuple):
    """One ledger line: who was accepted and by which consensus slot."""

    pseudo_id: int
    registered_at: int
    view: View
    seq: SeqNum

    def line(self):
        """`pseudo_id_hex, T, view, seq`."""
        return f"{self.pseudo_id:x}, {self.registered_at}, {self.view}, {self.seq}"


class Ledger:
    """Append-only record of accepted vehicles; pseudo IDs are unique."""

    def __init__(self):
        """Start empty."""
        self._entries: List[LedgerEntry] = []
        self._ids: Dict[int, int] = {}

    def __len__(self):
        """Number of entries."""
        return len(self._entries)

    def __iter__(self) -> Iterator[LedgerEntry]:
        """Entries in append order."""
        return iter(self._entries)

    def __contains__(self, pseudo_id: object):
        """Whether a pseudo ID is on the ledger."""
        return pseudo_id in self._ids

    def append(self, entry: LedgerEntry, /):
        """Add an entry.

        Raises:
            (LedgerError): If the pseudo ID is already recorded.
        """
        if entry.pseudo_id in self._ids:
            raise LedgerError(f"pseudo ID {entry.pseudo_id:x} is already on the ledger")
        self._ids[entry.pseudo_id] = len(self._entries)
        self._entries.append(entry)

    def lines(self):
        """Serialized entries."""
        return [entry.line() for entry in self._entries]

    def to_text(self):
        """Line-delimited file content."""
        return "".join(line + "\n" for line in self.lines())

    @classmethod
    def from_text(cls, text: str, /):
        """Parse `to_text` output.

        Raises:
            (ValueError): On a malformed line.
            (LedgerError): On a repeated pseudo ID.
        """
        ledger = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            pseudo_hex, registered_at, view, seq = (part.strip() for part in line.split(","))
            ledger.append(LedgerEntry(int(pseudo_hex, 16), int(registered_at), int(view), int(seq)))
        return ledger


class RsuApplication:
    """The state machine every RSU runs: verify, then record on acceptance."""

    def __init__(self, params: SystemParams):
        """Start with an empty ledger."""
        self.params = params
        self.ledger = Ledger()

    def execute(self, request: ClientRequest, /):
        """`ACCEPT` for a well-formed, authentic, unrecorded credential; `REJECT` otherwise."""
        try:
            credential = VehicleCredential.decode(request.operation)
        except ValueError:
            return REJECT
        if credential.pseudo_id in self.ledger:
            return REJECT
        valid = verify_credential(
            self.params, credential.pseudo_id, credential.registered_at, credential.signature
        )
        return ACCEPT if valid else REJECT

    def apply(self, request: ClientRequest, result: bytes, view: View, seq: SeqNum, /):
        """Append an accepted credential, once."""
        if result != ACCEPT:
            return
        credential = VehicleCredential.decode(request.operation)
        if credential.pseudo_id in self.ledger:
            return
        self.ledger.append(LedgerEntry(credential.pseudo_id, credential.registered_at, view, seq))


@dataclass(frozen=True)
class AuthRun:
    """Outcome of submitting credentials to an RSU group.

    `accepted[i]` is `None` when request `i` never completed.
    """

    report: RunReport
    credentials: Tuple[VehicleCredential, ...]
    accepted: Tuple[Optional[bool], ...]
    ledgers: Dict[NodeId, Ledger]

    @property
    def ledger(self):
        """Ledger of the lowest-numbered honest RSU."""
        return self.ledgers[min(self.ledgers)] if self.ledgers else Ledger()

    @property
    def consistent(self):
        """Whether every honest RSU holds the same entries.

        Append order is ignored: an RSU that caught up on a missed outcome
        records it after its peers did.
        """
        return len({frozenset(ledger) for ledger in self.ledgers.values()}) <= 1


def authenticate(
    params: SystemParams, credentials: Sequence[VehicleCredential], config: ScenarioConfig, /
):
    """Have the RSU group of `config` decide on each credential, in order.

    Returns:
        (AuthRun): Per-credential decisions and the ledger of every honest RSU.

    Raises:
        (ConfigurationError): If `config` cannot drive a run.
    """
    apps: Dict[NodeId, RsuApplication] = {}

    def make_app(node: NodeId):
        apps[node] = RsuApplication(params)
        return apps[node]

    simulation = Simulation(
        replace(config, requests=len(credentials)),
        workload=[credential.encode() for credential in credentials],
        applications=make_app,
    )
    report = simulation.run()
    faulty = {fault.node for fault in config.faults}
    ledgers = {node: app.ledger for node, app in sorted(apps.items()) if node not in faulty}
    report = replace(
        report, ledgers={str(node): tuple(ledger.lines()) for node, ledger in ledgers.items()}
    )
    accepted = tuple(
        None if record.result is None else record.result == ACCEPT.hex()
        for record in report.requests
    )
    return AuthRun(report, tuple(credentials), accepted, ledgers)


def auth_demo(config: ScenarioConfig, /):
    """Register `config.vehicles` vehicles, forge `config.forged_vehicles` more, authenticate all.

    Returns:
        (Tuple[AuthRun, List[str]]): The run and a human-readable transcript.
    """
    sp = ServiceProvider.from_seed(config.seed)
    credentials: List[VehicleCredential] = []
    labels: List[str] = []
    for index in range(config.vehicles):
        identity = b"vehicle-%d" % index
        credentials.append(sp.register_vehicle(identity, b"password-%d" % index, now=index))
        labels.append(identity.decode())
    for index in range(config.forged_vehicles):
        credentials.append(sp.forge_credential(b"%d" % index, now=config.vehicles + index))
        labels.append(f"forged-{index}")
    run = authenticate(sp.params, credentials, config)
    transcript: List[str] = []
    for label, credential, verdict, record in zip(
        labels, credentials, run.accepted, run.report.requests
    ):
        decision = "INCOMPLETE" if verdict is None else ("ACCEPT" if verdict else "REJECT")
        transcript.append(
            f"{label} {credential.pseudo_id_hex} {decision} view={record.view} seq={record.seq}"
        )
    transcript.append(f"ledger: {len(run.ledger)} entries")
    return run, transcript

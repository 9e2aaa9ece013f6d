"""SG-PBFT."""

# local
from .config import ProtocolKind, ScenarioConfig, load_config, scenario
from .crypto import KeyTable, SystemParams, schnorr_sign, schnorr_verify, sp_init
from .faults import (
    DelayAll,
    DropRate,
    EquivocatePrePrepare,
    FaultSpec,
    Silent,
    WrongResult,
)
from .iov import (
    Ledger,
    RsuApplication,
    ServiceProvider,
    VehicleCredential,
    auth_demo,
    authenticate,
    verify_credential,
)
from .messages import ClientRequest, MessageKind, ProtocolMessage, digest_of
from .metrics import MetricsRecord, aggregate, batch_means, formula_messages, reduction
from .pbft import (
    PbftConfig,
    PbftReplica,
    pbft_client_step,
    pbft_init,
    pbft_step,
    pbft_view_change,
)
from .report import RequestRecord, RunReport
from .scoring import Committee, NodeSets, apply_scores, select_master, update_con_nodes
from .sg_pbft import (
    MasterCollector,
    SgReplica,
    sg_client_step,
    sg_finalize,
    sg_init,
    sg_step,
    sg_view_change,
    verify_certificate,
)
from .simnet import LatencyModel, run_scenario, throughput, transaction_delay
from .utils import (
    ConfigurationError,
    LedgerError,
    RegistrationError,
    ValidationError,
    validator,
)

__all__ = (
    # config
    "ProtocolKind",
    "ScenarioConfig",
    "load_config",
    "scenario",
    # crypto
    "KeyTable",
    "SystemParams",
    "schnorr_sign",
    "schnorr_verify",
    "sp_init",
    # faults
    "DelayAll",
    "DropRate",
    "EquivocatePrePrepare",
    "FaultSpec",
    "Silent",
    "WrongResult",
    # iov
    "Ledger",
    "RsuApplication",
    "ServiceProvider",
    "VehicleCredential",
    "auth_demo",
    "authenticate",
    "verify_credential",
    # messages
    "ClientRequest",
    "MessageKind",
    "ProtocolMessage",
    "digest_of",
    # metrics
    "MetricsRecord",
    "aggregate",
    "batch_means",
    "formula_messages",
    "reduction",
    # pbft
    "PbftConfig",
    "PbftReplica",
    "pbft_client_step",
    "pbft_init",
    "pbft_step",
    "pbft_view_change",
    # report
    "RequestRecord",
    "RunReport",
    # scoring
    "Committee",
    "NodeSets",
    "apply_scores",
    "select_master",
    "update_con_nodes",
    # sg_pbft
    "MasterCollector",
    "SgReplica",
    "sg_client_step",
    "sg_finalize",
    "sg_init",
    "sg_step",
    "sg_view_change",
    "verify_certificate",
    # simnet
    "LatencyModel",
    "run_scenario",
    "throughput",
    "transaction_delay",
    # utils
    "ConfigurationError",
    "LedgerError",
    "RegistrationError",
    "ValidationError",
    "validator",
)

__version__ = "0.1.0"

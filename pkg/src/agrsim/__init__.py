"""agrsim: deterministic agent/group/role simulation with a generic
blockchain model.

Agents play group-local roles; each group owns an environment agent that
mediates every message under a latency/drop policy; a discrete-event kernel
makes whole runs replayable bit-for-bit from (config, seed).
"""

from .blockchain import (
    Block,
    BlockError,
    BlockTree,
    ChainStats,
    ClientBehavior,
    FORK_CHOICE_RULES,
    InvalidBlockError,
    Mempool,
    NodeBehavior,
    NodeRole,
    NodeState,
    Transaction,
    genesis,
    make_block,
    make_transaction,
    next_block_delay,
    on_block_received,
    propose,
    submit_tx,
)
from .cli import TraceDiff, diff_trace
from .harness import (
    ConfigError,
    ExperimentConfig,
    MetricsRecord,
    ReplicationReport,
    TraceDigest,
    build_simulation,
    collect_metrics,
    export_metrics,
    export_run,
    load_config,
    replicate,
    run_experiment,
)
from .kernel import (
    FiredEvent,
    HandlerFault,
    Kernel,
    ScheduledEvent,
    ScheduleOverflowError,
    TraceRecorder,
    VirtualTime,
)
from .mediation import (
    BROADCAST,
    Broadcast,
    Constant,
    Delivery,
    Envelope,
    Exponential,
    MediationPolicy,
    MediatorBehavior,
    ToAgent,
    ToRole,
    Uniform,
    mediate,
    sample_latency,
)
from .organization import (
    AgentBehavior,
    ConfigurationError,
    ENVIRONMENT_ROLE,
    ForbiddenError,
    Group,
    NotMemberError,
    Organization,
    RoleUnknownError,
    SimulationError,
    UnknownAgentError,
    UnknownGroupError,
)
from .rng import RngStream
from .simulation import AgentContext, Simulation

__version__ = "0.1.0"

__all__ = [
    "AgentBehavior",
    "AgentContext",
    "BROADCAST",
    "Block",
    "BlockError",
    "BlockTree",
    "Broadcast",
    "ChainStats",
    "ClientBehavior",
    "ConfigError",
    "ConfigurationError",
    "Constant",
    "Delivery",
    "ENVIRONMENT_ROLE",
    "Envelope",
    "ExperimentConfig",
    "Exponential",
    "FORK_CHOICE_RULES",
    "FiredEvent",
    "ForbiddenError",
    "Group",
    "HandlerFault",
    "InvalidBlockError",
    "Kernel",
    "MediationPolicy",
    "MediatorBehavior",
    "Mempool",
    "MetricsRecord",
    "NodeBehavior",
    "NodeRole",
    "NodeState",
    "NotMemberError",
    "Organization",
    "ReplicationReport",
    "RngStream",
    "RoleUnknownError",
    "ScheduleOverflowError",
    "ScheduledEvent",
    "Simulation",
    "SimulationError",
    "ToAgent",
    "ToRole",
    "TraceDiff",
    "TraceDigest",
    "TraceRecorder",
    "Transaction",
    "Uniform",
    "UnknownAgentError",
    "UnknownGroupError",
    "VirtualTime",
    "build_simulation",
    "collect_metrics",
    "diff_trace",
    "export_metrics",
    "export_run",
    "genesis",
    "load_config",
    "make_block",
    "make_transaction",
    "mediate",
    "next_block_delay",
    "on_block_received",
    "propose",
    "replicate",
    "run_experiment",
    "sample_latency",
    "submit_tx",
]

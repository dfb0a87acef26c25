"""Experiment harness: config, execution, replication, metrics export.

An experiment is one network group: one environment agent applying the
configured mediation policy, `num_proposers` nodes under role "Node", and
`num_clients` workload agents under role "Client". The run executes to
`stop_time` and then drains - no new proposals or transactions start at or
after the horizon, and every in-flight event is executed - so consistency
can be judged at a quiescent point.

(config, seed) fully determines both the metrics and the trace digest;
equal digests mean byte-identical traces.
"""

import csv
import io
import json
import logging
import statistics
from dataclasses import dataclass, field, fields, replace
from typing import Any, BinaryIO, Optional, Sequence, Union

from .blockchain import (
    CLIENT_ROLE,
    FORK_CHOICE_RULES,
    NODE_ROLE,
    ChainStats,
    ClientBehavior,
    NodeBehavior,
)
from .kernel import Kernel, TraceRecorder, U64_MAX
from .mediation import Constant, Exponential, LatencyModel, MediationPolicy, MediatorBehavior, Uniform
from .simulation import Simulation

log = logging.getLogger("agrsim.harness")


class ConfigError(Exception):
    """A config document failed validation; `field` is the offending path."""

    def __init__(self, message: str, field_path: Optional[str] = None):
        self.field = field_path
        super().__init__(f"{field_path}: {message}" if field_path else message)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment, fully specified. Field defaults are the documented
    defaults of the JSON config format."""

    seed: int = 0
    stop_time: int = 1_000_000
    num_clients: int = 0
    num_proposers: int = 0
    tx_rate: float = 0.0
    block_rate: float = 1e-4
    latency: LatencyModel = Constant(1000)
    drop_prob: float = 0.0
    max_txs_per_block: int = 100
    fork_choice_rule: str = "longest-chain"

    def __post_init__(self):
        _check_u64(self.seed, "seed")
        _check_u64(self.stop_time, "stop_time")
        if self.stop_time <= 0:
            raise ConfigError("must be > 0", "stop_time")
        if self.num_clients < 0:
            raise ConfigError("must be >= 0", "num_clients")
        if self.num_proposers < 0:
            raise ConfigError("must be >= 0", "num_proposers")
        if self.tx_rate < 0:
            raise ConfigError("must be >= 0", "tx_rate")
        if self.block_rate < 0:
            raise ConfigError("must be >= 0", "block_rate")
        if self.num_proposers > 0 and not self.block_rate > 0:
            raise ConfigError("must be > 0 when proposers exist", "block_rate")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ConfigError("must be in [0, 1]", "drop_prob")
        if self.max_txs_per_block < 0:
            raise ConfigError("must be >= 0", "max_txs_per_block")
        if self.fork_choice_rule not in FORK_CHOICE_RULES:
            raise ConfigError(
                f"unknown rule {self.fork_choice_rule!r}; "
                f"known: {sorted(FORK_CHOICE_RULES)}",
                "fork_choice_rule",
            )


def _check_u64(value: int, path: str) -> None:
    if not 0 <= value <= U64_MAX:
        raise ConfigError("must fit in an unsigned 64-bit integer", path)


def _expect_int(obj: dict, key: str, default: int, path: Optional[str] = None) -> int:
    value = obj.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("must be an integer", path or key)
    return value


def _expect_number(obj: dict, key: str, default: float, path: Optional[str] = None) -> float:
    value = obj.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("must be a number", path or key)
    return float(value)


_TOP_LEVEL_KEYS = {
    "seed",
    "stop_time",
    "num_clients",
    "num_proposers",
    "tx_rate",
    "block_rate",
    "latency",
    "drop_prob",
    "max_txs_per_block",
    "fork_choice_rule",
}


def _parse_latency(obj: Any) -> LatencyModel:
    if not isinstance(obj, dict):
        raise ConfigError("must be an object", "latency")
    kind = obj.get("type")
    if kind == "constant":
        allowed = {"type", "ticks"}
        ticks = _expect_int(obj, "ticks", 0, "latency.ticks")
        _check_u64(ticks, "latency.ticks")
        model: LatencyModel = Constant(ticks)
    elif kind == "uniform":
        allowed = {"type", "lo", "hi"}
        lo = _expect_int(obj, "lo", 0, "latency.lo")
        hi = _expect_int(obj, "hi", 0, "latency.hi")
        _check_u64(lo, "latency.lo")
        _check_u64(hi, "latency.hi")
        if lo > hi:
            raise ConfigError("lo must be <= hi", "latency.lo")
        model = Uniform(lo, hi)
    elif kind == "exponential":
        allowed = {"type", "mean"}
        mean = _expect_number(obj, "mean", 0.0, "latency.mean")
        if not mean > 0:
            raise ConfigError("must be > 0", "latency.mean")
        model = Exponential(mean)
    else:
        raise ConfigError(
            "must be one of 'constant', 'uniform', 'exponential'", "latency.type"
        )
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", "latency")
    return model


def load_config(data: Union[bytes, str]) -> ExperimentConfig:
    """Parse and validate a UTF-8 JSON config document.

    Unknown keys are rejected (silent typos are how experiments stop being
    reproducible); every absent key takes its documented default. The
    machine-readable shape lives in docs/config.schema.json; this loader is
    additionally strict about cross-field rules the schema cannot express.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"not valid UTF-8: {exc}") from exc
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(obj) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")

    defaults = ExperimentConfig()
    latency = (
        _parse_latency(obj["latency"]) if "latency" in obj else defaults.latency
    )
    rule = obj.get("fork_choice_rule", defaults.fork_choice_rule)
    if not isinstance(rule, str):
        raise ConfigError("must be a string", "fork_choice_rule")
    return ExperimentConfig(
        seed=_expect_int(obj, "seed", defaults.seed),
        stop_time=_expect_int(obj, "stop_time", defaults.stop_time),
        num_clients=_expect_int(obj, "num_clients", defaults.num_clients),
        num_proposers=_expect_int(obj, "num_proposers", defaults.num_proposers),
        tx_rate=_expect_number(obj, "tx_rate", defaults.tx_rate),
        block_rate=_expect_number(obj, "block_rate", defaults.block_rate),
        latency=latency,
        drop_prob=_expect_number(obj, "drop_prob", defaults.drop_prob),
        max_txs_per_block=_expect_int(obj, "max_txs_per_block", defaults.max_txs_per_block),
        fork_choice_rule=rule,
    )


def latency_to_json(latency: LatencyModel) -> dict:
    if type(latency) is Constant:
        return {"type": "constant", "ticks": latency.ticks}
    if type(latency) is Uniform:
        return {"type": "uniform", "lo": latency.lo, "hi": latency.hi}
    if type(latency) is Exponential:
        return {"type": "exponential", "mean": latency.mean}
    raise TypeError(f"unknown latency model {latency!r}")


def config_to_json(config: ExperimentConfig) -> dict:
    doc = {f.name: getattr(config, f.name) for f in fields(config)}
    doc["latency"] = latency_to_json(config.latency)
    return doc


@dataclass(frozen=True)
class TraceDigest:
    """SHA-256 over the run's canonical trace stream."""

    sha256: bytes

    @property
    def hex(self) -> str:
        return self.sha256.hex()

    def __str__(self) -> str:
        return self.hex


@dataclass
class MetricsRecord:
    """What one run measured. Numeric fields are exactly reproducible from
    (config, seed)."""

    seed: int
    blocks_proposed: int
    canonical_height: dict[int, int]
    orphan_blocks: int
    mean_block_interval: float
    mean_propagation_delay: float
    undeliverable: int
    stale_deliveries: int
    dropped: int
    consistent: bool
    fired_events: int

    def __post_init__(self):
        if self.canonical_height and self.blocks_proposed < max(self.canonical_height.values()):
            raise ValueError("more canonical height than blocks proposed")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "blocks_proposed": self.blocks_proposed,
            "orphan_blocks": self.orphan_blocks,
            "mean_block_interval": self.mean_block_interval,
            "mean_propagation_delay": self.mean_propagation_delay,
            "consistent": self.consistent,
            "canonical_height": {str(k): v for k, v in self.canonical_height.items()},
            "undeliverable": self.undeliverable,
            "stale_deliveries": self.stale_deliveries,
            "dropped": self.dropped,
            "fired_events": self.fired_events,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsRecord":
        return cls(
            seed=doc["seed"],
            blocks_proposed=doc["blocks_proposed"],
            canonical_height={int(k): v for k, v in doc["canonical_height"].items()},
            orphan_blocks=doc["orphan_blocks"],
            mean_block_interval=doc["mean_block_interval"],
            mean_propagation_delay=doc["mean_propagation_delay"],
            undeliverable=doc["undeliverable"],
            stale_deliveries=doc["stale_deliveries"],
            dropped=doc["dropped"],
            consistent=doc["consistent"],
            fired_events=doc["fired_events"],
        )

    def consensus_height(self) -> int:
        """Max canonical height over nodes; 0 for a nodeless run."""
        return max(self.canonical_height.values(), default=0)


@dataclass
class ExperimentSetup:
    """A built-but-not-yet-run experiment; exposed so tests and power users
    can step the simulation in pieces and inspect state mid-run."""

    sim: Simulation
    group: int
    env_agent: int
    nodes: list[tuple[int, NodeBehavior]]
    clients: list[tuple[int, ClientBehavior]]
    stats: ChainStats
    config: ExperimentConfig
    recorder: TraceRecorder


def build_simulation(
    config: ExperimentConfig,
    queue: str = "heap",
    recorder: Optional[TraceRecorder] = None,
) -> ExperimentSetup:
    """Wire up the network group described by a config.

    Spawn order is part of the deterministic contract: the environment agent
    first (id 1), then proposers, then clients.
    """
    recorder = recorder if recorder is not None else TraceRecorder()
    kernel = Kernel(seed=config.seed, queue=queue, recorder=recorder)
    sim = Simulation(kernel)
    stats = ChainStats()
    policy = MediationPolicy(latency=config.latency, drop_prob=config.drop_prob)
    group = sim.create_group(MediatorBehavior(), policy, [NODE_ROLE, CLIENT_ROLE])
    env_agent = sim.organization.group(group).env_agent
    fork_rule = FORK_CHOICE_RULES[config.fork_choice_rule]

    nodes = []
    for _ in range(config.num_proposers):
        behavior = NodeBehavior(
            group,
            block_rate=config.block_rate,
            max_txs_per_block=config.max_txs_per_block,
            horizon=config.stop_time,
            stats=stats,
            fork_rule=fork_rule,
        )
        agent = sim.spawn_agent(behavior)
        sim.join(agent, group, NODE_ROLE)
        nodes.append((agent, behavior))

    clients = []
    for _ in range(config.num_clients):
        behavior = ClientBehavior(group, tx_rate=config.tx_rate, horizon=config.stop_time)
        agent = sim.spawn_agent(behavior)
        sim.join(agent, group, CLIENT_ROLE)
        clients.append((agent, behavior))

    return ExperimentSetup(sim, group, env_agent, nodes, clients, stats, config, recorder)


def collect_metrics(setup: ExperimentSetup) -> MetricsRecord:
    """Read the metrics off a finished (drained) experiment."""
    sim = setup.sim
    stats = setup.stats

    canonical_height: dict[int, int] = {}
    tips: set[bytes] = set()
    canonical_ids: set[bytes] = set()
    for agent, behavior in setup.nodes:
        tree = behavior.state.tree
        tip = behavior.state.fork_rule(tree)
        tips.add(tip)
        canonical_height[agent] = tree.get(tip).height
        for block in tree.canonical_chain(tip):
            if block.block_id != tree.genesis_id:
                canonical_ids.add(block.block_id)

    consistent = len(tips) <= 1
    proposed_ids = set(stats.block_created_at)
    orphan_blocks = len(proposed_ids - canonical_ids)

    times = sorted(stats.proposal_times)
    if len(times) >= 2:
        mean_block_interval = (times[-1] - times[0]) / (len(times) - 1)
    else:
        mean_block_interval = 0.0

    node_count = len(setup.nodes)
    delays = [
        stats.last_append[b] - stats.block_created_at[b]
        for b in proposed_ids
        if stats.append_counts.get(b, 0) == node_count
    ]
    mean_propagation_delay = sum(delays) / len(delays) if delays else 0.0

    return MetricsRecord(
        seed=setup.config.seed,
        blocks_proposed=stats.blocks_proposed,
        canonical_height=canonical_height,
        orphan_blocks=orphan_blocks,
        mean_block_interval=mean_block_interval,
        mean_propagation_delay=mean_propagation_delay,
        undeliverable=sim.counters["undeliverable"],
        stale_deliveries=sim.counters["stale_deliveries"],
        dropped=sim.counters["dropped"],
        consistent=consistent,
        fired_events=sim.kernel.fired_count,
    )


def run_experiment(
    config: ExperimentConfig,
    queue: str = "heap",
    trace_sink: Optional[BinaryIO] = None,
    keep_trace: bool = False,
) -> tuple[MetricsRecord, TraceDigest]:
    """Execute one experiment: run to stop_time, drain, measure."""
    recorder = TraceRecorder(keep_records=keep_trace, sink=trace_sink)
    setup = build_simulation(config, queue=queue, recorder=recorder)
    log.info("run start: seed=%d stop_time=%d", config.seed, config.stop_time)
    setup.sim.run_until(config.stop_time)
    setup.sim.run_to_quiescence()
    metrics = collect_metrics(setup)
    digest = TraceDigest(recorder.digest())
    log.info(
        "run done: seed=%d fired=%d digest=%s",
        config.seed,
        metrics.fired_events,
        digest.hex[:16],
    )
    return metrics, digest


# -- replication ------------------------------------------------------------

_SUMMARY_METRICS = (
    "blocks_proposed",
    "orphan_blocks",
    "canonical_height",
    "mean_block_interval",
    "mean_propagation_delay",
    "undeliverable",
    "stale_deliveries",
    "dropped",
    "fired_events",
)


@dataclass
class MetricSummary:
    mean: float
    min: float
    max: float
    stddev: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "min": self.min, "max": self.max, "stddev": self.stddev}


@dataclass
class SeedResult:
    seed: int
    metrics: Optional[MetricsRecord]
    digest: Optional[TraceDigest]
    error: Optional[str] = None


@dataclass
class ReplicationReport:
    results: list[SeedResult]
    summary: dict[str, MetricSummary] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seeds": [
                {
                    "seed": r.seed,
                    "error": r.error,
                    "trace_digest": r.digest.hex if r.digest else None,
                    "metrics": r.metrics.to_dict() if r.metrics else None,
                }
                for r in self.results
            ],
            "summary": {k: v.to_dict() for k, v in self.summary.items()},
        }


def _metric_value(metrics: MetricsRecord, name: str) -> float:
    if name == "canonical_height":
        return float(metrics.consensus_height())
    return float(getattr(metrics, name))


def replicate(
    config: ExperimentConfig, seeds: Sequence[int], queue: str = "heap"
) -> ReplicationReport:
    """Run the config once per seed; failed seeds are marked, not fatal.

    The summary holds mean/min/max/population-stddev for each numeric metric
    over the successful runs. Results are ordered by the given seed list.
    """
    if not seeds:
        raise ValueError("seeds must be non-empty")
    results = []
    for seed in seeds:
        cfg = replace(config, seed=seed)
        try:
            metrics, digest = run_experiment(cfg, queue=queue)
            results.append(SeedResult(seed, metrics, digest))
        except Exception as exc:  # noqa: BLE001 - a failed seed is a result
            log.warning("seed %d failed: %r", seed, exc)
            results.append(SeedResult(seed, None, None, error=f"{type(exc).__name__}: {exc}"))

    summary: dict[str, MetricSummary] = {}
    ok = [r.metrics for r in results if r.metrics is not None]
    if ok:
        for name in _SUMMARY_METRICS:
            values = [_metric_value(m, name) for m in ok]
            summary[name] = MetricSummary(
                mean=statistics.fmean(values),
                min=min(values),
                max=max(values),
                stddev=statistics.pstdev(values),
            )
    return ReplicationReport(results, summary)


# -- export -------------------------------------------------------------------

CSV_HEADER = (
    "seed,blocks_proposed,orphan_blocks,mean_block_interval,mean_propagation_delay,"
    "consistent,canonical_height,undeliverable,stale_deliveries,dropped,fired_events,"
    "trace_digest"
)

_CSV_COLUMNS = CSV_HEADER.split(",")


def _csv_row(metrics: MetricsRecord, digest_hex: str = "") -> list:
    return [
        metrics.seed,
        metrics.blocks_proposed,
        metrics.orphan_blocks,
        metrics.mean_block_interval,
        metrics.mean_propagation_delay,
        "true" if metrics.consistent else "false",
        metrics.consensus_height(),
        metrics.undeliverable,
        metrics.stale_deliveries,
        metrics.dropped,
        metrics.fired_events,
        digest_hex,
    ]


def _summary_row(report: ReplicationReport) -> list:
    ok = [r.metrics for r in report.results if r.metrics is not None]
    consistent_fraction = (
        sum(1 for m in ok if m.consistent) / len(ok) if ok else 0.0
    )
    s = report.summary

    def mean_of(name: str) -> float:
        return s[name].mean if name in s else 0.0

    return [
        "mean",
        mean_of("blocks_proposed"),
        mean_of("orphan_blocks"),
        mean_of("mean_block_interval"),
        mean_of("mean_propagation_delay"),
        consistent_fraction,
        mean_of("canonical_height"),
        mean_of("undeliverable"),
        mean_of("stale_deliveries"),
        mean_of("dropped"),
        mean_of("fired_events"),
        "",
    ]


def export_metrics(
    obj: Union[MetricsRecord, ReplicationReport], format: str = "json"
) -> bytes:
    """Serialize a metrics record or replication report.

    JSON round-trips losslessly. CSV uses the fixed header CSV_HEADER; a
    report adds one row per seed plus a final summary row whose seed column
    is the literal "mean" (its `consistent` column holds the consistent
    fraction). Failed seeds appear with the error in the digest column.
    """
    if format == "json":
        if isinstance(obj, MetricsRecord):
            doc: Any = obj.to_dict()
        elif isinstance(obj, ReplicationReport):
            doc = obj.to_dict()
        else:
            raise TypeError(f"cannot export {type(obj).__name__}")
        return (json.dumps(doc, indent=2) + "\n").encode("utf-8")
    if format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        if isinstance(obj, MetricsRecord):
            writer.writerow(_csv_row(obj))
        elif isinstance(obj, ReplicationReport):
            for r in obj.results:
                if r.metrics is not None:
                    writer.writerow(_csv_row(r.metrics, r.digest.hex if r.digest else ""))
                else:
                    writer.writerow([r.seed] + [""] * 10 + [f"failed: {r.error}"])
            writer.writerow(_summary_row(obj))
        else:
            raise TypeError(f"cannot export {type(obj).__name__}")
        return out.getvalue().encode("utf-8")
    raise ValueError(f"unknown format {format!r}; use 'json' or 'csv'")


def export_run(metrics: MetricsRecord, digest: TraceDigest, format: str = "json") -> bytes:
    """Serialize one run's metrics together with its trace digest."""
    if format == "json":
        doc = {"metrics": metrics.to_dict(), "trace_digest": digest.hex}
        return (json.dumps(doc, indent=2) + "\n").encode("utf-8")
    if format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        writer.writerow(_csv_row(metrics, digest.hex))
        return out.getvalue().encode("utf-8")
    raise ValueError(f"unknown format {format!r}; use 'json' or 'csv'")

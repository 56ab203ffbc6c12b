"""Deterministic in-process cluster: N nodes, a central log server, the
per-event sharding protocol, and the scripted adversary.

Every random decision (session id, recipient selection, polynomial
coefficients, workload content) comes from SplitMix64 streams split off the
config seed, so a config plus a workload length pins the whole run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable

from shardlog.gf_prime import DEFAULT_FIELD, FieldPrime
from shardlog.log_model import (
    EventUid,
    LogEvent,
    LogRecord,
    Severity,
    ShardPayload,
    ShardRecord,
    encode_chain_record,
    encode_shard_payload,
    flip_payload_bit,
)
from shardlog.mac_chain import ChainState, MacKey, chain_append
from shardlog.rng import SplitMix64
from shardlog.shamir import ThresholdParams, split

log = logging.getLogger(__name__)

DEFAULT_EPOCH_NS = 1_700_000_000_000_000_000
DEFAULT_TICK_NS = 1_000_000


class ConfigError(ValueError):
    pass


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterConfig:
    master_key: MacKey
    num_nodes: int = 10
    params: ThresholdParams = ThresholdParams(3, 5)
    field: FieldPrime = DEFAULT_FIELD
    seed: int = 42
    exclude_originator: bool = False
    epoch_ns: int = DEFAULT_EPOCH_NS
    tick_ns: int = DEFAULT_TICK_NS

    def __post_init__(self) -> None:
        if self.num_nodes < 1:
            raise ConfigError("need at least one node")
        pool = self.num_nodes - 1 if self.exclude_originator else self.num_nodes
        if self.params.n > pool:
            raise ConfigError(
                f"n={self.params.n} recipients requested but only {pool} eligible nodes"
            )
        self.params.check_field(self.field)

    def to_json(self) -> dict:
        # no key material
        return {
            "num_nodes": self.num_nodes,
            "k": self.params.k,
            "n": self.params.n,
            "prime": self.field.p,
            "seed": self.seed,
            "exclude_originator": self.exclude_originator,
            "epoch_ns": self.epoch_ns,
            "tick_ns": self.tick_ns,
        }

    @classmethod
    def from_json(cls, data: dict, master_key: MacKey) -> ClusterConfig:
        return cls(
            master_key=master_key,
            num_nodes=data["num_nodes"],
            params=ThresholdParams(data["k"], data["n"]),
            field=FieldPrime(data["prime"]),
            seed=data["seed"],
            exclude_originator=data.get("exclude_originator", False),
            epoch_ns=data.get("epoch_ns", DEFAULT_EPOCH_NS),
            tick_ns=data.get("tick_ns", DEFAULT_TICK_NS),
        )


@dataclass
class Stores:
    """Everything an attacker can reach: the central log, each node's shard
    store and each node's own event log."""

    num_nodes: int
    central: list[LogRecord] = field(default_factory=list)
    shards: dict[int, list[ShardRecord]] = field(default_factory=dict)
    events: dict[int, list[LogRecord]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for node in range(self.num_nodes):
            self.shards.setdefault(node, [])
            self.events.setdefault(node, [])

    def copy(self) -> Stores:
        return Stores(
            self.num_nodes,
            list(self.central),
            {k: list(v) for k, v in self.shards.items()},
            {k: list(v) for k, v in self.events.items()},
        )

    def all_shards(self) -> Iterable[ShardRecord]:
        for node in sorted(self.shards):
            yield from self.shards[node]


class ClusterState:
    """Mutable simulation state; one owner drives it at a time."""

    def __init__(self, config: ClusterConfig) -> None:
        self.config = config
        root = SplitMix64(config.seed)
        self.session_id = root.next_u64()
        self.rng = root.split()
        self.workload_rng = root.split()
        self.stores = Stores(config.num_nodes)
        self._keys = [config.master_key.derive(i) for i in range(config.num_nodes)]
        self.chains = [ChainState() for _ in range(config.num_nodes)]
        self.next_seq = [0] * config.num_nodes
        self.last_ts = [0] * config.num_nodes
        self.clock = 0

    @property
    def num_nodes(self) -> int:
        return self.config.num_nodes

    def select_nodes(self, n: int, origin: int | None = None) -> list[int]:
        """n distinct recipients, uniform without replacement."""
        pool = list(range(self.num_nodes))
        if self.config.exclude_originator and origin is not None:
            pool.remove(origin)
        if n > len(pool):
            raise ConfigError(f"cannot select {n} of {len(pool)} nodes")
        return self.rng.sample(pool, n)

    def record_event(
        self,
        origin: int,
        severity: int,
        message: bytes | str,
        timestamp_ns: int | None = None,
    ) -> LogRecord:
        if not 0 <= origin < self.num_nodes:
            raise ValueError(f"unknown origin node {origin}")
        if isinstance(message, str):
            message = message.encode("utf-8")
        cfg = self.config
        if timestamp_ns is None:
            timestamp_ns = cfg.epoch_ns + self.clock * cfg.tick_ns
        if timestamp_ns < self.last_ts[origin]:
            raise ValueError("timestamps must not decrease within a node")
        self.clock += 1

        event = LogEvent(origin, self.next_seq[origin], timestamp_ns, int(severity), message)
        addresses = tuple(self.select_nodes(cfg.params.n, origin))
        tag, self.chains[origin] = chain_append(
            self.chains[origin], self._keys[origin], encode_chain_record(event, addresses)
        )
        payload = ShardPayload(event, addresses, tag)
        uid = event.uid(self.session_id)
        shares = split(encode_shard_payload(payload), cfg.params, self.rng, cfg.field)
        for node, share in zip(addresses, shares):
            self.stores.shards[node].append(ShardRecord(uid, share.x, share.values, node))

        rec = LogRecord(uid, payload)
        self.stores.central.append(rec)
        self.stores.events[origin].append(rec)
        self.next_seq[origin] += 1
        self.last_ts[origin] = timestamp_ns
        return rec


def boot_cluster(config: ClusterConfig) -> ClusterState:
    """Fresh cluster where every node has chained and shared its boot record."""
    state = ClusterState(config)
    for node in range(config.num_nodes):
        state.record_event(node, Severity.INFO, f"boot session={state.session_id:016x}")
    log.debug("booted %d nodes, session %016x", config.num_nodes, state.session_id)
    return state


def select_nodes(state: ClusterState, n: int, origin: int | None = None) -> list[int]:
    return state.select_nodes(n, origin)


def record_event(state: ClusterState, origin: int, severity: int, message, timestamp_ns=None) -> LogRecord:
    return state.record_event(origin, severity, message, timestamp_ns)


_SERVICES = ("sshd", "sudo", "kernel", "cron", "nginx", "dockerd", "auditd", "systemd")
_TEMPLATES = {
    Severity.DEBUG: ("{svc}[{pid}]: heartbeat ok rtt={n}us", "{svc}[{pid}]: cache sweep freed {n} entries"),
    Severity.INFO: (
        "{svc}[{pid}]: Accepted publickey for user{u} from 10.0.{a}.{b} port {port}",
        "{svc}[{pid}]: session opened for user{u}",
        "{svc}[{pid}]: GET /api/v1/items/{n} 200",
    ),
    Severity.WARN: ("{svc}[{pid}]: disk usage at {pct}% on /var", "{svc}[{pid}]: slow response {n}ms"),
    Severity.ERROR: ("{svc}[{pid}]: worker exited with status {pct}", "{svc}[{pid}]: connection reset by 10.0.{a}.{b}"),
    Severity.SECURITY: (
        "{svc}[{pid}]: Failed password for root from 203.0.{a}.{b} port {port}",
        "{svc}[{pid}]: user{u} : COMMAND=/bin/cat /etc/shadow",
        "{svc}[{pid}]: rule modified: -w /var/log -p wa",
    ),
}
# cumulative weights over DEBUG, INFO, WARN, ERROR, SECURITY (sum 100)
_SEVERITY_CUTS = ((10, Severity.DEBUG), (70, Severity.INFO), (82, Severity.WARN), (92, Severity.ERROR), (100, Severity.SECURITY))


def random_message(rng: SplitMix64) -> tuple[Severity, str]:
    roll = rng.randbelow(100)
    severity = next(sev for cut, sev in _SEVERITY_CUTS if roll < cut)
    options = _TEMPLATES[severity]
    template = options[rng.randbelow(len(options))]
    text = template.format(
        svc=_SERVICES[rng.randbelow(len(_SERVICES))],
        pid=1000 + rng.randbelow(30000),
        n=rng.randbelow(100000),
        u=rng.randbelow(50),
        a=rng.randbelow(256),
        b=rng.randbelow(256),
        port=1024 + rng.randbelow(64000),
        pct=rng.randbelow(100),
    )
    return severity, text


def run_workload(state: ClusterState, events: int, rng: SplitMix64 | None = None) -> ClusterState:
    rng = rng if rng is not None else state.workload_rng
    for _ in range(events):
        origin = rng.randbelow(state.num_nodes)
        severity, text = random_message(rng)
        state.record_event(origin, severity, text)
    return state


# adversary

DEFAULT_TAMPER_BIT = 32 + 64 + 63  # lowest timestamp bit


@dataclass(frozen=True)
class WipeCentralRange:
    start: int = 0
    stop: int | None = None

    def apply(self, stores: Stores) -> None:
        size = len(stores.central)
        stop = size if self.stop is None else self.stop
        if not 0 <= self.start <= stop <= size:
            raise AttackError(f"central range [{self.start}, {stop}) outside 0..{size}")
        del stores.central[self.start:stop]


@dataclass(frozen=True)
class TamperCentralRecord:
    index: int
    bit: int = DEFAULT_TAMPER_BIT

    def apply(self, stores: Stores) -> None:
        if not 0 <= self.index < len(stores.central):
            raise AttackError(f"no central record {self.index}")
        rec = stores.central[self.index]
        try:
            mutated = flip_payload_bit(rec.payload, self.bit)
        except IndexError as exc:
            raise AttackError(str(exc)) from exc
        stores.central[self.index] = replace(rec, payload=mutated)


@dataclass(frozen=True)
class WipeNode:
    node: int

    def apply(self, stores: Stores) -> None:
        if self.node not in stores.shards:
            raise AttackError(f"no node {self.node}")
        stores.shards[self.node] = []
        stores.events[self.node] = []


def _find_shard(stores: Stores, uid: EventUid, x: int) -> tuple[int, int]:
    for node in sorted(stores.shards):
        for i, rec in enumerate(stores.shards[node]):
            if rec.uid == uid and rec.x == x:
                return node, i
    raise AttackError(f"no shard {uid} x={x}")


@dataclass(frozen=True)
class TamperShard:
    uid: EventUid
    x: int
    chunk: int = -1
    delta: int = 1

    def apply(self, stores: Stores, p: int) -> None:
        node, i = _find_shard(stores, self.uid, self.x)
        rec = stores.shards[node][i]
        values = list(rec.values)
        try:
            values[self.chunk] = (values[self.chunk] + self.delta) % p
        except IndexError as exc:
            raise AttackError(f"shard has no chunk {self.chunk}") from exc
        stores.shards[node][i] = rec.with_values(values)


@dataclass(frozen=True)
class DropShard:
    uid: EventUid
    x: int

    def apply(self, stores: Stores) -> None:
        node, i = _find_shard(stores, self.uid, self.x)
        del stores.shards[node][i]


@dataclass(frozen=True)
class TruncateNodeChain:
    node: int
    keep: int

    def apply(self, stores: Stores) -> None:
        if self.node not in stores.events:
            raise AttackError(f"no node {self.node}")
        if self.keep < 0:
            raise AttackError("keep must be non-negative")
        del stores.events[self.node][self.keep:]


_ACTIONS = {
    "wipe_central_range": WipeCentralRange,
    "tamper_central_record": TamperCentralRecord,
    "wipe_node": WipeNode,
    "tamper_shard": TamperShard,
    "drop_shard": DropShard,
    "truncate_node_chain": TruncateNodeChain,
}
_NAMES = {cls: name for name, cls in _ACTIONS.items()}


def parse_attack_script(items: list[dict]) -> list:
    actions = []
    for item in items:
        item = dict(item)
        name = item.pop("action", None)
        if name not in _ACTIONS:
            raise AttackError(f"unknown attack action {name!r}")
        if "uid" in item:
            item["uid"] = EventUid.parse(item["uid"])
        try:
            actions.append(_ACTIONS[name](**item))
        except TypeError as exc:
            raise AttackError(f"{name}: {exc}") from exc
    return actions


def attack_script_to_json(script) -> list[dict]:
    out = []
    for action in script:
        item = {"action": _NAMES[type(action)]}
        for key, value in vars(action).items():
            item[key] = str(value) if isinstance(value, EventUid) else value
        out.append(item)
    return out


def apply_attack(stores: Stores, script, field: FieldPrime = DEFAULT_FIELD) -> Stores:
    """Return attacked copy of ``stores``; keys are never touched."""
    out = stores.copy()
    for action in script:
        if isinstance(action, TamperShard):
            action.apply(out, field.p)
        else:
            action.apply(out)
    return out

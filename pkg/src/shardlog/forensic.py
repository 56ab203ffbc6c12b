"""Post-hack reconstruction.

Pipeline: gather every surviving share, rebuild each event's payload from
k-subsets, put events back in order (MAC-chain linkage within a node,
timestamps across nodes), verify every link with keys re-derived from the
master key, then cross-check whatever is left of the central log.

The MAC chain is the arbiter throughout. A subset that decodes to a payload
whose link does not verify is treated as poisoned and another subset is
tried.
"""

from __future__ import annotations

import heapq
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations, islice
from pathlib import Path
from typing import Callable, Iterable, Sequence

from shardlog.cluster_sim import Stores
from shardlog.gf_prime import DEFAULT_FIELD, FieldPrime
from shardlog.log_model import (
    EventUid,
    LogRecord,
    MalformedPayloadError,
    ShardPayload,
    ShardRecord,
    decode_shard_payload,
    encode_chain_record,
)
from shardlog.mac_chain import GENESIS_TAG, ChainVerdict, MacKey, chain_verify, link_ok
from shardlog.rundir import load_stores, read_config
from shardlog.shamir import (
    MalformedChunkStreamError,
    Share,
    ThresholdParams,
    chunk_decode,
    consistent_with,
)

log = logging.getLogger(__name__)

RECOVERED_VERIFIED = "RECOVERED_VERIFIED"
RECOVERED_CHAIN_BROKEN = "RECOVERED_CHAIN_BROKEN"
UNRECOVERABLE = "UNRECOVERABLE"

MISSING_FROM_CENTRAL = "MISSING_FROM_CENTRAL"
CENTRAL_TAMPERED = "CENTRAL_TAMPERED"
CENTRAL_ONLY = "CENTRAL_ONLY"

# every k-subset is tried up to this many available shares
EXHAUSTIVE_SHARES = 8
# beyond that, subsets are enumerated in x order up to this cap
MAX_SUBSETS = 256


@dataclass
class ShardPool:
    entries: dict[EventUid, list[ShardRecord]] = field(default_factory=dict)
    # (uid, x, holders) for the same x held with different values
    duplicates: list[tuple[EventUid, int, tuple[int, ...]]] = field(default_factory=list)
    parse_failures: dict[str, int] = field(default_factory=dict)

    def add(self, rec: ShardRecord) -> None:
        bucket = self.entries.setdefault(rec.uid, [])
        for other in bucket:
            if other.x == rec.x:
                if other.values != rec.values:
                    self.duplicates.append((rec.uid, rec.x, (other.holder, rec.holder)))
                return
        bucket.append(rec)

    def __len__(self) -> int:
        return len(self.entries)


def pool_from_shards(shards: Iterable[ShardRecord]) -> ShardPool:
    pool = ShardPool()
    for rec in shards:
        pool.add(rec)
    for bucket in pool.entries.values():
        bucket.sort(key=lambda r: (r.x, r.holder))
    return pool


def gather_shards(run: str | Path) -> ShardPool:
    """Pool every parseable shard line in a run directory."""
    stores, failures = load_stores(Path(run))
    pool = pool_from_shards(stores.all_shards())
    pool.parse_failures = {k: v for k, v in failures.items() if k.endswith(".shards.jsonl")}
    return pool


@dataclass
class Recovery:
    payload: ShardPayload | None
    holders_used: tuple[int, ...] = ()
    conflicting_holders: tuple[int, ...] = ()
    corrupt_subsets: int = 0

    @property
    def recovered(self) -> bool:
        return self.payload is not None


def _subsets(shards: Sequence[ShardRecord], k: int):
    subsets = combinations(shards, k)
    if len(shards) > EXHAUSTIVE_SHARES:
        subsets = islice(subsets, MAX_SUBSETS)
    return subsets


def recover_event(
    shards: Sequence[ShardRecord],
    params: ThresholdParams,
    field: FieldPrime = DEFAULT_FIELD,
    accept: Callable[[ShardPayload], bool] | None = None,
) -> Recovery:
    """Rebuild one event from its pooled shares.

    k-subsets are tried in ascending-x order. A subset counts only if it
    decodes, matches the uid it was filed under, and passes ``accept``.
    """
    shards = sorted(shards, key=lambda r: r.x)
    if len(shards) < params.k:
        return Recovery(None)
    uid = shards[0].uid
    p = field.p
    corrupt = 0
    for subset in _subsets(shards, params.k):
        if len({len(r.values) for r in subset}) != 1:
            corrupt += 1
            continue
        weights = field.lagrange_weights([r.x for r in subset])
        chunks = [
            sum(w * y for w, y in zip(weights, ys)) % p
            for ys in zip(*(r.values for r in subset))
        ]
        try:
            payload = decode_shard_payload(chunk_decode(chunks))
        except (MalformedChunkStreamError, MalformedPayloadError):
            corrupt += 1
            continue
        e = payload.event
        if (e.origin_node, e.seq) != (uid.origin_node, uid.seq) or (accept and not accept(payload)):
            corrupt += 1
            continue
        basis = [Share(r.x, r.values) for r in subset]
        conflicting = tuple(
            r.holder for r in shards
            if r not in subset and not consistent_with(basis, Share(r.x, r.values), field)
        )
        return Recovery(payload, tuple(r.holder for r in subset), conflicting, corrupt)
    return Recovery(None, corrupt_subsets=corrupt)


def _merge_key(item):
    uid, sp = item
    return (sp.event.timestamp_ns, uid.origin_node)


@dataclass
class Ordering:
    order: list[EventUid]
    per_node: dict[int, list[EventUid]]
    flags: list[dict]


def order_events(
    payloads: dict[EventUid, ShardPayload],
    keys: dict[int, MacKey] | None = None,
) -> Ordering:
    """Global order of recovered events.

    Within a node the sequence follows MAC linkage (each tag covers its
    predecessor's tag) when keys are available, with seq numbers as
    corroboration. Nodes are then merged by timestamp, ties broken by
    origin node and chain position.
    """
    by_node: dict[int, list[tuple[EventUid, ShardPayload]]] = defaultdict(list)
    for uid, sp in payloads.items():
        by_node[uid.origin_node].append((uid, sp))

    per_node: dict[int, list[EventUid]] = {}
    flags: list[dict] = []
    streams = []
    for node in sorted(by_node):
        items = sorted(by_node[node], key=lambda it: (it[0].seq, it[0].session_id))
        key = keys.get(node) if keys else None
        chained = _chain_order(items, key) if key is not None else items
        if chained is None:
            flags.append({"node": node, "kind": "LINKAGE_CONTRADICTS_SEQ"})
            chained = sorted(items, key=lambda it: (it[1].event.timestamp_ns, it[0].seq))
        per_node[node] = [uid for uid, _ in chained]
        streams.append([(_merge_key(it), pos, it[0]) for pos, it in enumerate(chained)])

    merged = heapq.merge(*streams, key=lambda s: (s[0], s[1]))
    return Ordering([uid for _, _, uid in merged], per_node, flags)


def _chain_order(items, key: MacKey):
    """Seq-sorted items rearranged by linkage; None if linkage contradicts seq."""
    remaining = list(items)
    out = []
    prev = GENESIS_TAG
    while remaining:
        uid, sp = remaining[0]
        rec = encode_chain_record(sp.event, sp.node_addresses)
        if not link_ok(key, rec, prev, sp.tag):
            for j in range(1, len(remaining)):
                _, other = remaining[j]
                if link_ok(key, encode_chain_record(other.event, other.node_addresses), prev, other.tag):
                    return None
        out.append(remaining.pop(0))
        prev = sp.tag
    return out


@dataclass
class ReconstructionReport:
    params: ThresholdParams
    statuses: dict[EventUid, str]
    order: list[EventUid]
    chains: dict[int, dict]
    central_discrepancies: list[tuple[EventUid, str]]
    holders: dict[EventUid, dict] = field(default_factory=dict)
    ordering_flags: list[dict] = field(default_factory=list)
    parse_failures: dict[str, int] = field(default_factory=dict)
    duplicate_shards: list[dict] = field(default_factory=list)
    payloads: dict[EventUid, ShardPayload] = field(default_factory=dict, repr=False)

    def count(self, status: str) -> int:
        return sum(1 for s in self.statuses.values() if s == status)

    @property
    def summary(self) -> dict:
        kinds = defaultdict(int)
        for _, kind in self.central_discrepancies:
            kinds[kind] += 1
        return {
            "events": len(self.statuses),
            RECOVERED_VERIFIED: self.count(RECOVERED_VERIFIED),
            RECOVERED_CHAIN_BROKEN: self.count(RECOVERED_CHAIN_BROKEN),
            UNRECOVERABLE: self.count(UNRECOVERABLE),
            "central_discrepancies": {k: kinds[k] for k in (MISSING_FROM_CENTRAL, CENTRAL_TAMPERED, CENTRAL_ONLY)},
            "chains_failed": sum(1 for c in self.chains.values() if not c["ok"]),
            "parse_failures": sum(self.parse_failures.values()),
            "duplicate_shards": len(self.duplicate_shards),
        }

    @property
    def clean(self) -> bool:
        """All events recovered and verified, no tampered central record."""
        s = self.summary
        return (
            s[RECOVERED_CHAIN_BROKEN] == 0
            and s[UNRECOVERABLE] == 0
            and s["central_discrepancies"][CENTRAL_TAMPERED] == 0
            and s["chains_failed"] == 0
        )

    def to_json(self) -> dict:
        events = {}
        for uid in sorted(self.statuses):
            entry = {"status": self.statuses[uid]}
            entry.update(self.holders.get(uid, {}))
            events[str(uid)] = entry
        return {
            "params": {"k": self.params.k, "n": self.params.n},
            "summary": self.summary,
            "order": [str(u) for u in self.order],
            "events": events,
            "chains": {str(n): c for n, c in sorted(self.chains.items())},
            "central_discrepancies": [
                {"uid": str(u), "kind": k} for u, k in sorted(self.central_discrepancies)
            ],
            "ordering_flags": self.ordering_flags,
            "parse_failures": dict(sorted(self.parse_failures.items())),
            "duplicate_shards": self.duplicate_shards,
        }

    def to_text(self) -> str:
        s = self.summary
        lines = [
            f"threshold k={self.params.k} n={self.params.n}",
            f"events seen:            {s['events']}",
            f"recovered and verified: {s[RECOVERED_VERIFIED]}",
            f"chain broken:           {s[RECOVERED_CHAIN_BROKEN]}",
            f"unrecoverable:          {s[UNRECOVERABLE]}",
        ]
        for kind, n in s["central_discrepancies"].items():
            lines.append(f"{kind.lower()}: {n}")
        for node, c in sorted(self.chains.items()):
            verdict = "OK" if c["ok"] else f"FIRST_FAILURE({c['first_failure']})"
            lines.append(f"node {node}: {c['length']} records, chain {verdict}")
        if self.parse_failures:
            lines.append(f"unparseable lines: {s['parse_failures']}")
        bad = [u for u in sorted(self.statuses) if self.statuses[u] != RECOVERED_VERIFIED]
        for uid in bad:
            lines.append(f"  {uid} {self.statuses[uid]}")
        lines.append("")
        lines.append("recovered timeline:")
        for uid in self.order:
            sp = self.payloads.get(uid)
            if sp is None:
                continue
            msg = sp.event.message.decode("utf-8", errors="replace")
            lines.append(f"  {sp.event.timestamp_ns} {uid} [{self.statuses[uid]}] {msg}")
        return "\n".join(lines) + "\n"


def verify_and_report(
    pool: ShardPool,
    recoveries: dict[EventUid, Recovery],
    central: Sequence[LogRecord],
    master_key: MacKey,
    params: ThresholdParams,
    field: FieldPrime = DEFAULT_FIELD,
) -> ReconstructionReport:
    payloads = {uid: r.payload for uid, r in recoveries.items() if r.payload is not None}
    nodes = {uid.origin_node for uid in pool.entries} | {r.uid.origin_node for r in central}
    keys = {node: master_key.derive(node) for node in nodes}

    central_by_uid: dict[EventUid, LogRecord] = {}
    discrepancies: list[tuple[EventUid, str]] = []
    for rec in central:
        if rec.uid in central_by_uid:
            discrepancies.append((rec.uid, CENTRAL_TAMPERED))
        else:
            central_by_uid[rec.uid] = rec

    ordering = order_events(payloads, keys)
    statuses: dict[EventUid, str] = {}
    chains: dict[int, dict] = {}
    central_link: dict[EventUid, bool] = {}

    for node in sorted(nodes):
        key = keys[node]
        recovered = [(uid.seq, 0, uid) for uid in ordering.per_node.get(node, [])]
        central_only = sorted(
            (uid.seq, 1, uid) for uid in central_by_uid
            if uid.origin_node == node and uid not in payloads
        )
        evidence = []
        prev = GENESIS_TAG
        for _, from_central, uid in heapq.merge(recovered, central_only):
            if from_central:
                sp = central_by_uid[uid].payload
                central_link[uid] = link_ok(key, encode_chain_record(sp.event, sp.node_addresses), prev, sp.tag)
            else:
                sp = payloads[uid]
                rec = encode_chain_record(sp.event, sp.node_addresses)
                if link_ok(key, rec, prev, sp.tag):
                    statuses[uid] = RECOVERED_VERIFIED
                else:
                    retry = recover_event(
                        pool.entries[uid], params, field,
                        accept=lambda cand, prev=prev: link_ok(
                            key, encode_chain_record(cand.event, cand.node_addresses), prev, cand.tag),
                    )
                    if retry.recovered:
                        recoveries[uid] = retry
                        payloads[uid] = sp = retry.payload
                        statuses[uid] = RECOVERED_VERIFIED
                    else:
                        statuses[uid] = RECOVERED_CHAIN_BROKEN
            evidence.append((encode_chain_record(sp.event, sp.node_addresses), sp.tag))
            prev = sp.tag
        verdict: ChainVerdict = chain_verify(key, evidence)
        chains[node] = {"ok": verdict.ok, "first_failure": verdict.first_failure, "length": len(evidence)}

    all_uids = set(pool.entries) | set(central_by_uid)
    for uid in all_uids:
        statuses.setdefault(uid, UNRECOVERABLE)
        crec = central_by_uid.get(uid)
        if uid in payloads:
            if crec is None:
                discrepancies.append((uid, MISSING_FROM_CENTRAL))
            elif crec.payload != payloads[uid]:
                discrepancies.append((uid, CENTRAL_TAMPERED))
        elif crec is not None:
            discrepancies.append((uid, CENTRAL_ONLY))
            if not central_link.get(uid, False):
                discrepancies.append((uid, CENTRAL_TAMPERED))

    # payload arbitration may have replaced timestamps; order again
    ordering2 = order_events(payloads, keys)

    holders = {}
    for uid, r in recoveries.items():
        entry = {"holders_used": list(r.holders_used)}
        if r.conflicting_holders:
            entry["conflicting_holders"] = list(r.conflicting_holders)
        if r.corrupt_subsets:
            entry["corrupt_subsets"] = r.corrupt_subsets
        holders[uid] = entry
    for uid, bucket in pool.entries.items():
        holders.setdefault(uid, {})["shards_available"] = len(bucket)

    return ReconstructionReport(
        params=params,
        statuses=statuses,
        order=ordering2.order,
        chains=chains,
        central_discrepancies=sorted(set(discrepancies)),
        holders=holders,
        ordering_flags=ordering2.flags,
        parse_failures=dict(pool.parse_failures),
        duplicate_shards=[
            {"uid": str(u), "x": x, "holders": list(h)} for u, x, h in pool.duplicates
        ],
        payloads=payloads,
    )


def reconstruct_pool(
    pool: ShardPool,
    central: Sequence[LogRecord],
    master_key: MacKey,
    params: ThresholdParams,
    field: FieldPrime = DEFAULT_FIELD,
) -> ReconstructionReport:
    recoveries = {
        uid: recover_event(bucket, params, field) for uid, bucket in pool.entries.items()
    }
    return verify_and_report(pool, recoveries, central, master_key, params, field)


def reconstruct_stores(
    stores: Stores,
    master_key: MacKey,
    params: ThresholdParams,
    field: FieldPrime = DEFAULT_FIELD,
) -> ReconstructionReport:
    """Full analysis over in-memory stores (what gather + recover does on disk)."""
    return reconstruct_pool(pool_from_shards(stores.all_shards()), stores.central, master_key, params, field)


def reconstruct_run(run: str | Path, master_key: MacKey) -> ReconstructionReport:
    run = Path(run)
    cfg = read_config(run)
    params = ThresholdParams(cfg["k"], cfg["n"])
    field = FieldPrime(cfg["prime"])
    stores, failures = load_stores(run)
    pool = pool_from_shards(stores.all_shards())
    pool.parse_failures = failures
    return reconstruct_pool(pool, stores.central, master_key, params, field)


@dataclass
class CentralCheck:
    node: int
    verdict: ChainVerdict
    central_index: int | None  # index in central.jsonl of the first failure
    length: int


def verify_central(central: Sequence[LogRecord], master_key: MacKey) -> list[CentralCheck]:
    """Chain-check the central log alone, one stream per origin node."""
    streams: dict[int, list[tuple[int, LogRecord]]] = defaultdict(list)
    for i, rec in enumerate(central):
        streams[rec.uid.origin_node].append((i, rec))
    out = []
    for node in sorted(streams):
        key = master_key.derive(node)
        items = streams[node]
        verdict = chain_verify(key, ((r.chain_record, r.payload.tag) for _, r in items))
        idx = None if verdict.ok else items[verdict.first_failure][0]
        out.append(CentralCheck(node, verdict, idx, len(items)))
    return out

import itertools
import json
import random

import pytest

from conftest import MASTER, golden_state
from shardlog.cluster_sim import (
    ClusterConfig,
    DropShard,
    TamperCentralRecord,
    TamperShard,
    WipeCentralRange,
    WipeNode,
    apply_attack,
    boot_cluster,
)
from shardlog.forensic import (
    CENTRAL_ONLY,
    CENTRAL_TAMPERED,
    MISSING_FROM_CENTRAL,
    RECOVERED_CHAIN_BROKEN,
    RECOVERED_VERIFIED,
    UNRECOVERABLE,
    gather_shards,
    order_events,
    pool_from_shards,
    reconstruct_run,
    reconstruct_stores,
    recover_event,
    verify_central,
)
from shardlog.log_model import LogEvent, LogRecord, Severity, ShardPayload
from shardlog.rundir import write_json, write_stores
from shardlog.shamir import ThresholdParams

P35 = ThresholdParams(3, 5)


def dump(state, stores, path):
    write_json(path / "config.json", state.config.to_json())
    write_stores(path, stores)
    return path


def holders_of(stores, uid):
    return sorted((s for s in stores.all_shards() if s.uid == uid), key=lambda s: s.x)


class TestGather:
    def test_untouched_pool(self, golden100, tmp_path):
        pool = gather_shards(dump(golden100, golden100.stores, tmp_path))
        assert len(pool) == 110
        assert all(len(b) == 5 for b in pool.entries.values())
        assert pool.parse_failures == {}

    def test_after_wiping_two(self, golden100, tmp_path):
        stores = apply_attack(golden100.stores, [WipeNode(1), WipeNode(6)])
        pool = gather_shards(dump(golden100, stores, tmp_path))
        assert all(len(b) >= 3 for b in pool.entries.values())

    def test_corrupt_line(self, golden100, tmp_path):
        run = dump(golden100, golden100.stores, tmp_path)
        with (run / "node_4.shards.jsonl").open("a") as fh:
            fh.write('{"uid": "garbage"\n')
        pool = gather_shards(run)
        assert pool.parse_failures == {"node_4.shards.jsonl": 1}
        assert len(pool) == 110

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            gather_shards(tmp_path / "nope")

    def test_conflicting_duplicate_flagged(self, golden100):
        shards = list(golden100.stores.all_shards())
        dup = shards[0].with_values([(v + 1) % (2**61 - 1) for v in shards[0].values])
        pool = pool_from_shards(shards + [dup])
        assert pool.duplicates == [(dup.uid, dup.x, (shards[0].holder, dup.holder))]


class TestRecoverEvent:
    def test_intact(self, golden100):
        rec = golden100.stores.central[60]
        got = recover_event(holders_of(golden100.stores, rec.uid)[:3], P35)
        assert got.payload == rec.payload

    def test_below_threshold(self, golden100):
        rec = golden100.stores.central[60]
        assert not recover_event(holders_of(golden100.stores, rec.uid)[:2], P35).recovered

    def test_tampered_shard_routed_around(self, golden100):
        rec = golden100.stores.central[60]
        stores = apply_attack(golden100.stores, [TamperShard(rec.uid, 1, chunk=0, delta=5)])
        got = recover_event(holders_of(stores, rec.uid), P35)
        assert got.payload == rec.payload
        bad_holder = rec.payload.node_addresses[0]
        assert got.conflicting_holders == (bad_holder,)
        assert bad_holder not in got.holders_used

    def test_accept_predicate_rejects(self, golden100):
        rec = golden100.stores.central[60]
        got = recover_event(holders_of(golden100.stores, rec.uid), P35, accept=lambda sp: False)
        assert not got.recovered and got.corrupt_subsets == 10


def _sp(node, seq, ts):
    return ShardPayload(LogEvent(node, seq, ts, Severity.INFO, b""), (0,), bytes(32))


class TestOrder:
    def test_single_node_seq_order(self, golden100):
        recs = [r for r in golden100.stores.central if r.uid.origin_node == 3][:3]
        payloads = {r.uid: r.payload for r in reversed(recs)}
        keys = {3: MASTER.derive(3)}
        assert order_events(payloads, keys).order == [r.uid for r in recs]

    def test_timestamp_merge_and_tie_break(self):
        from shardlog.log_model import EventUid

        u = lambda n, s: EventUid(1, n, s)  # noqa: E731
        payloads = {
            u(0, 0): _sp(0, 0, 10), u(1, 0): _sp(1, 0, 5), u(0, 1): _sp(0, 1, 20),
            u(1, 1): _sp(1, 1, 20), u(2, 0): _sp(2, 0, 20),
        }
        got = order_events(payloads).order
        assert got == [u(1, 0), u(0, 0), u(0, 1), u(1, 1), u(2, 0)]

    def test_equal_timestamps_within_node_use_chain(self):
        s = boot_cluster(ClusterConfig(MASTER, num_nodes=4, params=ThresholdParams(2, 3), seed=9))
        t = 2 * 10**18
        emitted = [r.uid for r in s.stores.central]
        for i in range(5):
            emitted.append(s.record_event(1, Severity.INFO, f"burst {i}", timestamp_ns=t).uid)
        for node in (3, 0, 2):
            emitted.append(s.record_event(node, Severity.WARN, "tick", timestamp_ns=t + 1).uid)
        report = reconstruct_stores(s.stores, MASTER, ThresholdParams(2, 3))
        # cross-node ties fall back to origin order
        expected = emitted[:-3] + sorted(emitted[-3:], key=lambda u: u.origin_node)
        assert report.order == expected
        assert report.count(RECOVERED_VERIFIED) == len(emitted)

    def test_linkage_contradiction_flagged(self, golden100):
        recs = [r for r in golden100.stores.central if r.uid.origin_node == 5][:3]
        # authentic payloads filed under each other's uid: seq order and
        # MAC linkage now disagree
        a, b = recs[1], recs[2]
        swapped = {recs[0].uid: recs[0].payload, a.uid: b.payload, b.uid: a.payload}
        got = order_events(swapped, {5: MASTER.derive(5)})
        assert got.flags == [{"node": 5, "kind": "LINKAGE_CONTRADICTS_SEQ"}]


class TestReport:
    def test_intact(self, golden100):
        r = reconstruct_stores(golden100.stores, MASTER, P35)
        assert r.count(RECOVERED_VERIFIED) == 110
        assert r.central_discrepancies == []
        assert r.clean
        assert r.order == [rec.uid for rec in golden100.stores.central]

    def test_central_and_two_nodes_wiped(self, golden100):
        stores = apply_attack(golden100.stores, [WipeCentralRange(), WipeNode(0), WipeNode(7)])
        r = reconstruct_stores(stores, MASTER, P35)
        assert r.count(RECOVERED_VERIFIED) == 110
        assert {k for _, k in r.central_discrepancies} == {MISSING_FROM_CENTRAL}
        assert len(r.central_discrepancies) == 110

    def test_central_bit_flip(self, golden100):
        stores = apply_attack(golden100.stores, [TamperCentralRecord(41)])
        r = reconstruct_stores(stores, MASTER, P35)
        uid = golden100.stores.central[41].uid
        assert r.central_discrepancies == [(uid, CENTRAL_TAMPERED)]
        assert r.statuses[uid] == RECOVERED_VERIFIED
        assert not r.clean

    def test_unrecoverable_bridged_by_central(self, golden100):
        rec = golden100.stores.central[70]
        stores = apply_attack(golden100.stores, [DropShard(rec.uid, x) for x in (1, 3, 5)])
        r = reconstruct_stores(stores, MASTER, P35)
        assert r.statuses[rec.uid] == UNRECOVERABLE
        assert r.central_discrepancies == [(rec.uid, CENTRAL_ONLY)]
        assert r.count(RECOVERED_VERIFIED) == 109

    def test_gap_without_central_breaks_next_link(self, golden100):
        node = 2
        recs = [r for r in golden100.stores.central if r.uid.origin_node == node]
        lost, nxt = recs[3], recs[4]
        script = [WipeCentralRange()] + [DropShard(lost.uid, x) for x in (1, 2, 3)]
        r = reconstruct_stores(apply_attack(golden100.stores, script), MASTER, P35)
        assert r.statuses[lost.uid] == UNRECOVERABLE
        assert r.statuses[nxt.uid] == RECOVERED_CHAIN_BROKEN
        assert r.count(RECOVERED_VERIFIED) == 108
        assert r.chains[node]["first_failure"] == 3

    def test_tampered_shards_arbitrated_by_mac(self, golden100):
        # tamper two data chunks in different shards; MAC picks the honest subset
        for idx in (15, 44, 90):
            rec = golden100.stores.central[idx]
            script = [TamperShard(rec.uid, 2, chunk=c, delta=7) for c in (1,)] + \
                     [TamperShard(rec.uid, 4, chunk=-1, delta=3)]
            r = reconstruct_stores(apply_attack(golden100.stores, script), MASTER, P35)
            assert r.statuses[rec.uid] == RECOVERED_VERIFIED
            assert r.payloads[rec.uid] == rec.payload
            assert len(r.holders[rec.uid]["conflicting_holders"]) == 2

    def test_undetectable_by_decoding_caught_by_mac(self, golden100):
        # small delta on a data chunk of the reconstruction-side basis: search
        # for a tamper that still decodes, then make sure MAC arbitration wins
        rec = golden100.stores.central[33]
        found = False
        for delta in range(1, 400):
            script = [TamperShard(rec.uid, 1, chunk=2, delta=delta)]
            stores = apply_attack(golden100.stores, script)
            first = recover_event(holders_of(stores, rec.uid), P35)
            if first.payload is not None and first.payload != rec.payload:
                found = True
                r = reconstruct_stores(stores, MASTER, P35)
                assert r.statuses[rec.uid] == RECOVERED_VERIFIED
                assert r.payloads[rec.uid] == rec.payload
                break
        assert found

    def test_report_json_and_text(self, golden100):
        r = reconstruct_stores(golden100.stores, MASTER, P35)
        j = r.to_json()
        json.dumps(j)
        assert j["summary"]["RECOVERED_VERIFIED"] == 110
        assert len(j["events"]) == 110
        assert "recovered timeline" in r.to_text()

    def test_reconstruct_run_reports_parse_failures(self, golden100, tmp_path):
        run = dump(golden100, golden100.stores, tmp_path)
        with (run / "central.jsonl").open("a") as fh:
            fh.write("not json\n")
        r = reconstruct_run(run, MASTER)
        assert r.parse_failures == {"central.jsonl": 1}
        assert r.count(RECOVERED_VERIFIED) == 110


def test_verify_central(golden100):
    assert all(c.verdict.ok for c in verify_central(golden100.stores.central, MASTER))
    removed = golden100.stores.central[20]
    stores = apply_attack(golden100.stores, [WipeCentralRange(20, 21)])
    bad = [c for c in verify_central(stores.central, MASTER) if not c.verdict.ok]
    # the failure surfaces at the same node's next surviving record
    nxt = next(i for i, r in enumerate(stores.central)
               if i >= 20 and r.uid.origin_node == removed.uid.origin_node)
    assert len(bad) == 1 and bad[0].node == removed.uid.origin_node
    assert bad[0].central_index == nxt


def test_resilience_exhaustive_small_cluster():
    # central wiped plus every subset of <= n - k node stores, num_nodes = 6
    state = golden_state(60, num_nodes=6, k=2, n=4, seed=3)
    params = ThresholdParams(2, 4)
    for r in range(0, 3):
        for wiped in itertools.combinations(range(6), r):
            script = [WipeCentralRange()] + [WipeNode(n) for n in wiped]
            rep = reconstruct_stores(apply_attack(state.stores, script), MASTER, params)
            assert rep.count(RECOVERED_VERIFIED) == 66, wiped


def test_soundness_random_mutations(golden100):
    # a tampered plaintext reaching the reconstructor is never VERIFIED
    rnd = random.Random(5)
    shards = list(golden100.stores.all_shards())
    for _ in range(60):
        rec = golden100.stores.central[rnd.randrange(110)]
        mine = [s for s in shards if s.uid == rec.uid]
        # the attacker controls k shares: rewrite them consistently to a fake payload
        from shardlog.log_model import encode_shard_payload, flip_payload_bit
        from shardlog.rng import SplitMix64
        from shardlog.shamir import split

        fake = flip_payload_bit(rec.payload, rnd.randrange(8 * 25))
        fake_shares = split(encode_shard_payload(fake), P35, SplitMix64(rnd.randrange(2**32)))
        forged = [s.with_values(fake_shares[s.x - 1].values) for s in mine]
        others = [s for s in shards if s.uid != rec.uid]
        from shardlog.cluster_sim import Stores

        st = Stores(10, central=[], shards={0: others + forged})
        r = reconstruct_stores(st, MASTER, P35)
        got = r.payloads.get(rec.uid)
        if got is not None and got != rec.payload:
            assert r.statuses[rec.uid] != RECOVERED_VERIFIED


def test_monotonicity(golden100):
    rnd = random.Random(8)
    shards = list(golden100.stores.all_shards())
    rank = {RECOVERED_VERIFIED: 2, RECOVERED_CHAIN_BROKEN: 1, UNRECOVERABLE: 0}
    from shardlog.cluster_sim import Stores

    kept = rnd.sample(shards, 300)
    small = reconstruct_stores(Stores(10, shards={0: kept}), MASTER, P35)
    more = kept + rnd.sample([s for s in shards if s not in kept], 100)
    big = reconstruct_stores(Stores(10, shards={0: more}), MASTER, P35)
    for uid, st in small.statuses.items():
        assert rank[big.statuses[uid]] >= rank[st]

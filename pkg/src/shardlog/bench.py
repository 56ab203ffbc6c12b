"""Per-event overhead of the logging scheme on the emitting node."""

from __future__ import annotations

import statistics
import time

from shardlog.cluster_sim import ClusterConfig, boot_cluster
from shardlog.gf_prime import DEFAULT_FIELD
from shardlog.log_model import LogEvent, ShardPayload, Severity, encode_chain_record, encode_shard_payload
from shardlog.mac_chain import ChainState, MacKey, chain_append
from shardlog.rng import SplitMix64
from shardlog.shamir import ThresholdParams, split

PROFILES = {
    "default": {"iterations": 2000, "events": 2000, "message_len": 256, "k": 3, "n": 5, "nodes": 10},
    "quick": {"iterations": 200, "events": 200, "message_len": 256, "k": 3, "n": 5, "nodes": 10},
}

MEDIAN_BUDGET_US = 1000.0
RATE_TARGET = 10_000


def mac_and_split_times(iterations: int, message_len: int, params: ThresholdParams, seed: int = 7) -> list[float]:
    """Wall time in microseconds of MAC + split for one event, per iteration."""
    rng = SplitMix64(seed)
    key = MacKey(rng.random_bytes(32))
    addresses = tuple(range(params.n))
    state = ChainState()
    message = bytes(rng.random_bytes(message_len))
    times = []
    clock = time.perf_counter_ns
    for seq in range(iterations):
        event = LogEvent(0, seq, seq, Severity.INFO, message)
        t0 = clock()
        tag, state = chain_append(state, key, encode_chain_record(event, addresses))
        split(encode_shard_payload(ShardPayload(event, addresses, tag)), params, rng, DEFAULT_FIELD)
        times.append((clock() - t0) / 1000)
    return times


def run_profile(name: str = "default") -> dict:
    prof = PROFILES[name]
    params = ThresholdParams(prof["k"], prof["n"])
    times = mac_and_split_times(prof["iterations"], prof["message_len"], params)
    median_us = statistics.median(times)

    state = boot_cluster(ClusterConfig(MacKey(bytes(32)), num_nodes=prof["nodes"], params=params, seed=1))
    message = "x" * prof["message_len"]
    t0 = time.perf_counter()
    for i in range(prof["events"]):
        state.record_event(i % prof["nodes"], Severity.INFO, message)
    elapsed = time.perf_counter() - t0

    return {
        "profile": name,
        "k": params.k,
        "n": params.n,
        "message_len": prof["message_len"],
        "mac_split_median_us": round(median_us, 2),
        "mac_split_p95_us": round(sorted(times)[int(0.95 * len(times))], 2),
        "mac_split_events_per_sec": round(1e6 / median_us),
        "record_event_events_per_sec": round(prof["events"] / elapsed),
        "median_within_budget": median_us < MEDIAN_BUDGET_US,
    }

import pytest

from shardlog.cluster_sim import ClusterConfig, boot_cluster, run_workload
from shardlog.mac_chain import MacKey
from shardlog.rng import SplitMix64
from shardlog.shamir import ThresholdParams

MASTER = MacKey(bytes(range(32)))


def golden_state(events=100, num_nodes=10, k=3, n=5, seed=42):
    cfg = ClusterConfig(MASTER, num_nodes=num_nodes, params=ThresholdParams(k, n), seed=seed)
    return run_workload(boot_cluster(cfg), events)


@pytest.fixture
def master():
    return MASTER


@pytest.fixture
def rng():
    return SplitMix64(20240607)


@pytest.fixture(scope="session")
def golden100():
    return golden_state(100)


@pytest.fixture(scope="session")
def golden1000():
    return golden_state(1000)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])

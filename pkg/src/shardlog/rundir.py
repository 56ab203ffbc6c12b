"""Run directory I/O.

Layout::

    config.json                 cluster config (no key material)
    central.jsonl               central log server records
    node_<id>.shards.jsonl      shares held by node <id>
    node_<id>.events.jsonl      node <id>'s own chained event log
    manifest.json               counts, sha256 digests, phase timestamps
    attack.json                 the script applied by the attack phase
"""

from __future__ import annotations

import hashlib
import json
import re
from datetime import datetime, timezone
from pathlib import Path

from shardlog import __version__
from shardlog.cluster_sim import Stores
from shardlog.log_model import LogRecord, ShardRecord

CONFIG = "config.json"
CENTRAL = "central.jsonl"
MANIFEST = "manifest.json"
ATTACK = "attack.json"
_NODE_FILE = re.compile(r"node_(\d+)\.(shards|events)\.jsonl$")


def shard_file(node: int) -> str:
    return f"node_{node}.shards.jsonl"


def events_file(node: int) -> str:
    return f"node_{node}.events.jsonl"


def dumps_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_jsonl(path: Path, rows) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(dumps_line(row) + "\n")


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_stores(run: Path, stores: Stores) -> None:
    run.mkdir(parents=True, exist_ok=True)
    _write_jsonl(run / CENTRAL, (r.to_json() for r in stores.central))
    for node in range(stores.num_nodes):
        _write_jsonl(run / shard_file(node), (s.to_json() for s in stores.shards[node]))
        _write_jsonl(run / events_file(node), (r.to_json() for r in stores.events[node]))


def data_files(run: Path) -> list[str]:
    names = [CONFIG, CENTRAL]
    names += sorted(
        (p.name for p in run.iterdir() if _NODE_FILE.match(p.name)),
        key=lambda n: (int(_NODE_FILE.match(n).group(1)), n),
    )
    return [n for n in names if (run / n).exists()]


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def update_manifest(run: Path, phase: str, stores: Stores | None = None) -> dict:
    path = run / MANIFEST
    manifest = json.loads(path.read_text()) if path.exists() else {"phases": {}}
    manifest["tool"] = "shardlog"
    manifest["version"] = __version__
    manifest["config"] = json.loads((run / CONFIG).read_text())
    manifest["digests"] = {name: file_digest(run / name) for name in data_files(run)}
    if stores is not None:
        manifest["counts"] = {
            "central": len(stores.central),
            "shards": {str(n): len(v) for n, v in sorted(stores.shards.items())},
            "events": {str(n): len(v) for n, v in sorted(stores.events.items())},
        }
    manifest["phases"][phase] = datetime.now(timezone.utc).isoformat()
    write_json(path, manifest)
    return manifest


def read_config(run: Path) -> dict:
    return json.loads((run / CONFIG).read_text())


def _read_jsonl(path: Path, parse, failures: dict[str, int]) -> list:
    out = []
    if not path.exists():
        return out
    with path.open(encoding="utf-8", errors="replace") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                out.append(parse(json.loads(line)))
            except (ValueError, KeyError, TypeError, AttributeError):
                failures[path.name] = failures.get(path.name, 0) + 1
    return out


def load_stores(run: Path) -> tuple[Stores, dict[str, int]]:
    """Read every store; unparseable lines are counted per file, not fatal."""
    run = Path(run)
    if not run.is_dir():
        raise FileNotFoundError(f"run directory {run} does not exist")
    num_nodes = read_config(run)["num_nodes"]
    failures: dict[str, int] = {}
    stores = Stores(num_nodes)
    stores.central = _read_jsonl(run / CENTRAL, LogRecord.from_json, failures)
    for node in range(num_nodes):
        stores.shards[node] = _read_jsonl(run / shard_file(node), ShardRecord.from_json, failures)
        stores.events[node] = _read_jsonl(run / events_file(node), LogRecord.from_json, failures)
    return stores, failures

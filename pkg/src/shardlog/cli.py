"""shardlog command line: simulate, attack, reconstruct, verify, bench.

Exit codes: 0 success / everything verified, 2 usage error,
3 verification failures or unrecoverable events, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from shardlog import __version__
from shardlog.bench import MEDIAN_BUDGET_US, PROFILES, run_profile
from shardlog.cluster_sim import (
    AttackError,
    ClusterConfig,
    ConfigError,
    DEFAULT_TAMPER_BIT,
    DropShard,
    TamperCentralRecord,
    TamperShard,
    TruncateNodeChain,
    WipeCentralRange,
    WipeNode,
    apply_attack,
    attack_script_to_json,
    boot_cluster,
    parse_attack_script,
    run_workload,
)
from shardlog.forensic import reconstruct_run, verify_central
from shardlog.gf_prime import M61, FieldPrime
from shardlog.log_model import EventUid
from shardlog.mac_chain import MacKey
from shardlog.rundir import (
    ATTACK,
    CONFIG,
    MANIFEST,
    load_stores,
    read_config,
    update_manifest,
    write_json,
    write_stores,
)
from shardlog.shamir import ThresholdParams

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAILED = 3
EXIT_IO = 4

log = logging.getLogger("shardlog")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _uid_x(text: str) -> tuple[EventUid, int]:
    uid, _, x = text.rpartition(":")
    try:
        return EventUid.parse(uid), int(x)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected UID:X, got {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated node ids, got {text!r}") from exc


def _pair(text: str) -> tuple[int, int | None]:
    a, sep, b = text.partition(":")
    try:
        return int(a), (int(b) if sep and b else None)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected A[:B], got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shardlog", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"shardlog {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="boot a cluster and log a random workload")
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--events", type=int, default=1000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--prime", type=int, default=M61)
    p.add_argument("--exclude-originator", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument(
        "--master-key-file", type=Path,
        help="read the master key from here, or create it if missing (default OUT/master.key)",
    )

    p = sub.add_parser("attack", help="apply adversary actions to a run directory in place")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--script", type=Path, help="JSON list of attack actions")
    p.add_argument("--wipe-central", action="store_true", help="delete the whole central log")
    p.add_argument("--wipe-central-range", type=_pair, metavar="START:STOP")
    p.add_argument("--wipe-nodes", type=_int_list, metavar="LIST")
    p.add_argument("--tamper-central", type=_pair, action="append", default=[], metavar="IDX[:BIT]")
    p.add_argument("--tamper-shard", type=_uid_x, action="append", default=[], metavar="UID:X")
    p.add_argument("--drop-shard", type=_uid_x, action="append", default=[], metavar="UID:X")
    p.add_argument("--truncate-node", type=_pair, action="append", default=[], metavar="NODE:KEEP")

    p = sub.add_parser("reconstruct", help="rebuild and verify the event history from shards")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--master-key-file", type=Path, required=True)
    p.add_argument("--report", type=Path, help="report.json path (default RUN/report.json)")

    p = sub.add_parser("verify", help="check the central log's MAC chains")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--master-key-file", type=Path, required=True)

    p = sub.add_parser("bench", help="measure per-event MAC + split overhead")
    p.add_argument("--profile", choices=sorted(PROFILES), default="default")
    return parser


def _simulate(args) -> int:
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    key_file = args.master_key_file or out / "master.key"
    if key_file.exists():
        master = MacKey.from_file(key_file)
    else:
        master = MacKey.generate()
        master.to_file(key_file)
        log.info("wrote new master key to %s", key_file)
    try:
        config = ClusterConfig(
            master_key=master,
            num_nodes=args.nodes,
            params=ThresholdParams(args.k, args.n),
            field=FieldPrime(args.prime),
            seed=args.seed,
            exclude_originator=args.exclude_originator,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    state = boot_cluster(config)
    run_workload(state, args.events)

    for stale in list(out.glob("node_*.jsonl")) + [out / ATTACK, out / MANIFEST]:
        stale.unlink(missing_ok=True)
    write_json(out / CONFIG, {**config.to_json(), "events": args.events})
    write_stores(out, state.stores)
    update_manifest(out, "simulate", state.stores)
    print(f"simulated {len(state.stores.central)} records on {args.nodes} nodes into {out}")
    return EXIT_OK


def _attack(args) -> int:
    script = []
    if args.script:
        script += parse_attack_script(json.loads(args.script.read_text()))
    if args.wipe_central:
        script.append(WipeCentralRange())
    if args.wipe_central_range:
        script.append(WipeCentralRange(*args.wipe_central_range))
    for node in args.wipe_nodes or []:
        script.append(WipeNode(node))
    for idx, bit in args.tamper_central:
        script.append(TamperCentralRecord(idx, DEFAULT_TAMPER_BIT if bit is None else bit))
    for uid, x in args.tamper_shard:
        script.append(TamperShard(uid, x))
    for uid, x in args.drop_shard:
        script.append(DropShard(uid, x))
    for node, keep in args.truncate_node:
        script.append(TruncateNodeChain(node, keep or 0))
    if not script:
        raise UsageError("attack: no actions given")

    run: Path = args.run
    cfg = read_config(run)
    stores, _ = load_stores(run)
    attacked = apply_attack(stores, script, FieldPrime(cfg["prime"]))
    write_stores(run, attacked)
    history = json.loads((run / ATTACK).read_text()) if (run / ATTACK).exists() else []
    write_json(run / ATTACK, history + attack_script_to_json(script))
    update_manifest(run, "attack", attacked)
    print(f"applied {len(script)} attack action(s) to {run}")
    return EXIT_OK


def _reconstruct(args) -> int:
    master = MacKey.from_file(args.master_key_file)
    report = reconstruct_run(args.run, master)
    path = args.report or args.run / "report.json"
    write_json(path, report.to_json())
    path.with_suffix(".txt").write_text(report.to_text(), encoding="utf-8")
    s = report.summary
    print(
        f"{s['events']} events: {s['RECOVERED_VERIFIED']} verified, "
        f"{s['RECOVERED_CHAIN_BROKEN']} chain broken, {s['UNRECOVERABLE']} unrecoverable; "
        f"report in {path}"
    )
    return EXIT_OK if report.clean else EXIT_FAILED


def _verify(args) -> int:
    master = MacKey.from_file(args.master_key_file)
    stores, failures = load_stores(args.run)
    checks = verify_central(stores.central, master)
    bad = [c for c in checks if not c.verdict.ok]
    for c in bad:
        print(
            f"node {c.node}: FIRST_FAILURE at stream index {c.verdict.first_failure} "
            f"(central record {c.central_index})",
            file=sys.stderr,
        )
    for name, count in sorted(failures.items()):
        print(f"{name}: {count} unparseable line(s)", file=sys.stderr)
    print(f"central log: {len(stores.central)} records, {len(checks)} chains, {len(bad)} failed")
    return EXIT_FAILED if bad or failures.get("central.jsonl") else EXIT_OK


def _bench(args) -> int:
    result = run_profile(args.profile)
    print(json.dumps(result, indent=2))
    verdict = "PASS" if result["median_within_budget"] else "FAIL"
    print(
        f"{verdict}: MAC + split median {result['mac_split_median_us']} us "
        f"(budget {MEDIAN_BUDGET_US:.0f} us), {result['record_event_events_per_sec']} events/sec end to end"
    )
    return EXIT_OK


_COMMANDS = {
    "simulate": _simulate,
    "attack": _attack,
    "reconstruct": _reconstruct,
    "verify": _verify,
    "bench": _bench,
}


def execute(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, ConfigError, AttackError) as exc:
        print(f"shardlog {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"shardlog {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed key file, config or script contents
        print(f"shardlog {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(execute())


if __name__ == "__main__":
    main()

"""HMAC-SHA-256 tags and per-stream MAC chains.

Each link is ``HMAC(key, record || previous_tag)``; the first link uses 32
zero bytes as the previous tag.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

TAG_LEN = 32
KEY_LEN = 32
GENESIS_TAG = bytes(TAG_LEN)


@dataclass(frozen=True, repr=False)
class MacKey:
    key_bytes: bytes

    def __post_init__(self) -> None:
        if len(self.key_bytes) != KEY_LEN:
            raise ValueError(f"MAC keys are exactly {KEY_LEN} bytes")

    def __repr__(self) -> str:
        return "MacKey(<redacted>)"

    @classmethod
    def generate(cls) -> MacKey:
        return cls(secrets.token_bytes(KEY_LEN))

    @classmethod
    def from_file(cls, path: str | Path) -> MacKey:
        """Key files hold 64 hex digits (surrounding whitespace ignored)."""
        text = Path(path).read_text().strip()
        try:
            raw = bytes.fromhex(text)
        except ValueError as exc:
            raise ValueError(f"{path}: key file is not hex") from exc
        return cls(raw)

    def to_file(self, path: str | Path) -> None:
        path = Path(path)
        path.write_text(self.key_bytes.hex() + "\n")
        path.chmod(0o600)

    def derive(self, node_id: int) -> MacKey:
        """Per-node key: HMAC(master, node_id as u32 big-endian)."""
        return MacKey(compute_mac(self, struct.pack(">I", node_id)))


def compute_mac(key: MacKey | bytes, message: bytes) -> bytes:
    raw = key.key_bytes if isinstance(key, MacKey) else key
    return hmac.new(raw, message, hashlib.sha256).digest()


@dataclass(frozen=True)
class ChainState:
    prev_tag: bytes = GENESIS_TAG
    length: int = 0


def chain_append(state: ChainState, key: MacKey, record: bytes) -> tuple[bytes, ChainState]:
    tag = compute_mac(key, record + state.prev_tag)
    return tag, ChainState(tag, state.length + 1)


@dataclass(frozen=True)
class ChainVerdict:
    first_failure: int | None = None

    @property
    def ok(self) -> bool:
        return self.first_failure is None

    def __str__(self) -> str:
        return "OK" if self.ok else f"FIRST_FAILURE({self.first_failure})"


def chain_verify(key: MacKey, records: Iterable[tuple[bytes, bytes]]) -> ChainVerdict:
    """Recompute the chain from genesis over ``(record, tag)`` pairs."""
    prev = GENESIS_TAG
    for i, (record, tag) in enumerate(records):
        if not hmac.compare_digest(compute_mac(key, record + prev), tag):
            return ChainVerdict(i)
        prev = tag
    return ChainVerdict()


def link_ok(key: MacKey, record: bytes, prev_tag: bytes, tag: bytes) -> bool:
    return hmac.compare_digest(compute_mac(key, record + prev_tag), tag)

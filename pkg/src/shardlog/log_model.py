"""Canonical byte layouts for events, MAC inputs and shard payloads, plus the
JSON Lines record forms used by the run directory.

All integers are fixed-width big-endian::

    event   = origin u32 | seq u64 | timestamp_ns u64 | severity u8
              | message_len u32 | message
    address block = count u16 | count * (node u32)
    chain record  = event | address block
    MAC input     = chain record | previous tag (32 bytes)
    shard payload = chain record | tag (32 bytes)
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, replace
from typing import Sequence

from shardlog.mac_chain import TAG_LEN

_EVENT_HEAD = struct.Struct(">IQQBI")
EVENT_HEADER_LEN = _EVENT_HEAD.size  # 25


class MalformedPayloadError(ValueError):
    pass


class Severity(enum.IntEnum):
    DEBUG = 0
    INFO = 1
    WARN = 2
    ERROR = 3
    SECURITY = 4


def severity_name(value: int) -> str | int:
    try:
        return Severity(value).name
    except ValueError:
        return value


def parse_severity(value: str | int) -> int:
    if isinstance(value, str):
        return int(Severity[value])
    return int(value)


@dataclass(frozen=True, order=True)
class EventUid:
    session_id: int
    origin_node: int
    seq: int

    def __str__(self) -> str:
        return f"{self.session_id:016x}:{self.origin_node}:{self.seq}"

    @classmethod
    def parse(cls, text: str) -> EventUid:
        try:
            session, origin, seq = text.split(":")
            return cls(int(session, 16), int(origin), int(seq))
        except ValueError as exc:
            raise ValueError(f"bad event uid {text!r}") from exc


@dataclass(frozen=True)
class LogEvent:
    origin_node: int
    seq: int
    timestamp_ns: int
    severity: int
    message: bytes

    def uid(self, session_id: int) -> EventUid:
        return EventUid(session_id, self.origin_node, self.seq)


@dataclass(frozen=True)
class ShardPayload:
    event: LogEvent
    node_addresses: tuple[int, ...]
    tag: bytes


def encode_event(e: LogEvent) -> bytes:
    if len(e.message) > 0xFFFFFFFF:
        raise ValueError("message longer than 2^32 - 1 bytes")
    try:
        head = _EVENT_HEAD.pack(e.origin_node, e.seq, e.timestamp_ns, e.severity, len(e.message))
    except struct.error as exc:
        raise ValueError(f"event field out of range: {exc}") from exc
    return head + e.message


def encode_addresses(addresses: Sequence[int]) -> bytes:
    if len(addresses) > 0xFFFF:
        raise ValueError("more than 65535 node addresses")
    return struct.pack(f">H{len(addresses)}I", len(addresses), *addresses)


def encode_chain_record(e: LogEvent, addresses: Sequence[int]) -> bytes:
    """The part of the MAC input that precedes the previous tag."""
    if not addresses:
        raise ValueError("an event needs at least one recipient address")
    return encode_event(e) + encode_addresses(addresses)


def encode_mac_input(e: LogEvent, addresses: Sequence[int], prev_tag: bytes) -> bytes:
    if len(prev_tag) != TAG_LEN:
        raise ValueError("previous tag must be 32 bytes")
    return encode_chain_record(e, addresses) + prev_tag


def encode_shard_payload(sp: ShardPayload) -> bytes:
    if len(sp.tag) != TAG_LEN:
        raise ValueError("tag must be 32 bytes")
    return encode_chain_record(sp.event, sp.node_addresses) + sp.tag


def decode_shard_payload(raw: bytes) -> ShardPayload:
    if len(raw) < EVENT_HEADER_LEN:
        raise MalformedPayloadError("malformed payload: truncated event header")
    origin, seq, ts, sev, mlen = _EVENT_HEAD.unpack_from(raw)
    pos = EVENT_HEADER_LEN + mlen
    if len(raw) < pos + 2:
        raise MalformedPayloadError("malformed payload: truncated message")
    message = raw[EVENT_HEADER_LEN:pos]
    (count,) = struct.unpack_from(">H", raw, pos)
    pos += 2
    end = pos + 4 * count
    if len(raw) != end + TAG_LEN:
        raise MalformedPayloadError(
            f"malformed payload: expected {end + TAG_LEN} bytes, got {len(raw)}"
        )
    addresses = struct.unpack_from(f">{count}I", raw, pos)
    return ShardPayload(LogEvent(origin, seq, ts, sev, message), tuple(addresses), raw[end:])


def payload_bit_count(sp: ShardPayload) -> int:
    """Number of flippable bits: every field except the length prefixes."""
    return 8 * (len(encode_shard_payload(sp)) - 4 - 2)


def flip_payload_bit(sp: ShardPayload, bit: int) -> ShardPayload:
    """Flip one content bit, counted MSB-first over the payload with the
    message-length and address-count prefixes skipped, so the layout stays
    decodable."""
    raw = bytearray(encode_shard_payload(sp))
    nbits = payload_bit_count(sp)
    if not 0 <= bit < nbits:
        raise IndexError(f"bit {bit} outside 0..{nbits - 1}")
    byte = bit // 8
    # skip message length (4 bytes at offset 21)
    if byte >= 21:
        byte += 4
    # skip address count (2 bytes after the message)
    if byte >= EVENT_HEADER_LEN + len(sp.event.message):
        byte += 2
    raw[byte] ^= 0x80 >> (bit % 8)
    return decode_shard_payload(bytes(raw))


# JSON Lines record forms


def payload_to_json(uid: EventUid, sp: ShardPayload) -> dict:
    e = sp.event
    rec = {
        "uid": str(uid),
        "origin_node": e.origin_node,
        "seq": e.seq,
        "timestamp_ns": e.timestamp_ns,
        "severity": severity_name(e.severity),
    }
    try:
        rec["message"] = e.message.decode("utf-8")
    except UnicodeDecodeError:
        rec["message_hex"] = e.message.hex()
    rec["addresses"] = list(sp.node_addresses)
    rec["tag_hex"] = sp.tag.hex()
    return rec


def payload_from_json(rec: dict) -> tuple[EventUid, ShardPayload]:
    if "message_hex" in rec:
        message = bytes.fromhex(rec["message_hex"])
    else:
        message = rec["message"].encode("utf-8")
    event = LogEvent(
        int(rec["origin_node"]),
        int(rec["seq"]),
        int(rec["timestamp_ns"]),
        parse_severity(rec["severity"]),
        message,
    )
    tag = bytes.fromhex(rec["tag_hex"])
    if len(tag) != TAG_LEN:
        raise ValueError("tag_hex must encode 32 bytes")
    return EventUid.parse(rec["uid"]), ShardPayload(event, tuple(int(a) for a in rec["addresses"]), tag)


@dataclass(frozen=True)
class ShardRecord:
    uid: EventUid
    x: int
    values: tuple[int, ...]
    holder: int

    def to_json(self) -> dict:
        return {
            "uid": str(self.uid),
            "x": self.x,
            "chunks_hex": [f"{v:016x}" for v in self.values],
            "holder": self.holder,
        }

    @classmethod
    def from_json(cls, rec: dict) -> ShardRecord:
        values = []
        for h in rec["chunks_hex"]:
            if len(h) != 16:
                raise ValueError("chunk hex must be 16 digits")
            values.append(int(h, 16))
        x = int(rec["x"])
        if not 1 <= x <= 255:
            raise ValueError(f"share index out of range: {x}")
        return cls(EventUid.parse(rec["uid"]), x, tuple(values), int(rec["holder"]))

    def with_values(self, values) -> ShardRecord:
        return replace(self, values=tuple(values))


@dataclass(frozen=True)
class LogRecord:
    """One line of the central store or of a node's own event log."""

    uid: EventUid
    payload: ShardPayload

    def to_json(self) -> dict:
        return payload_to_json(self.uid, self.payload)

    @classmethod
    def from_json(cls, rec: dict) -> LogRecord:
        return cls(*payload_from_json(rec))

    @property
    def chain_record(self) -> bytes:
        return encode_chain_record(self.payload.event, self.payload.node_addresses)

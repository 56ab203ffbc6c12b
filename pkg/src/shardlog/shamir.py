"""(k, n) threshold sharing of byte payloads.

A payload is cut into 7-byte big-endian chunks behind a length header, so
every chunk is below 2^56 and therefore below the default 61-bit prime. Each
chunk gets its own random polynomial with the chunk as constant term; share
``x`` carries that polynomial's value at ``x`` for every chunk.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence

from shardlog.gf_prime import DEFAULT_FIELD, FieldPrime

CHUNK_BYTES = 7
CHUNK_LIMIT = 1 << (8 * CHUNK_BYTES)
MAX_PAYLOAD = CHUNK_LIMIT - 1


class ShamirError(ValueError):
    pass


class BelowThresholdError(ShamirError):
    pass


class MalformedChunkStreamError(ShamirError):
    pass


class CorruptReconstructionError(ShamirError):
    pass


@dataclass(frozen=True)
class ThresholdParams:
    k: int
    n: int

    def __post_init__(self) -> None:
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        # share index travels as a single byte on the wire
        if self.n > 255:
            raise ValueError("at most 255 shares are supported")

    @classmethod
    def majority(cls, n: int) -> ThresholdParams:
        """k = ceil((n + 1) / 2), the smallest honest-majority threshold."""
        return cls(math.ceil((n + 1) / 2), n)

    @property
    def is_majority(self) -> bool:
        return self.n == 2 * self.k - 1

    def check_field(self, field: FieldPrime) -> None:
        if self.n >= field.p:
            raise ValueError(f"n={self.n} share indices do not fit in GF({field.p})")


@dataclass(frozen=True)
class Share:
    x: int
    values: tuple[int, ...]

    def __post_init__(self) -> None:
        if not 1 <= self.x <= 255:
            raise ValueError(f"share index out of range: {self.x}")

    def to_bytes(self) -> bytes:
        head = struct.pack(">BI", self.x, len(self.values))
        return head + b"".join(v.to_bytes(8, "big") for v in self.values)

    @classmethod
    def from_bytes(cls, raw: bytes) -> Share:
        if len(raw) < 5:
            raise ValueError("truncated share")
        x, count = struct.unpack_from(">BI", raw)
        if len(raw) != 5 + 8 * count:
            raise ValueError("share length does not match its chunk count")
        values = tuple(int.from_bytes(raw[5 + 8 * i: 13 + 8 * i], "big") for i in range(count))
        return cls(x, values)


def chunk_encode(payload: bytes) -> list[int]:
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload of {len(payload)} bytes is too long to chunk")
    pad = -len(payload) % CHUNK_BYTES
    padded = payload + bytes(pad)
    chunks = [len(payload)]
    chunks.extend(
        int.from_bytes(padded[i: i + CHUNK_BYTES], "big")
        for i in range(0, len(padded), CHUNK_BYTES)
    )
    return chunks


def chunk_decode(chunks: Sequence[int]) -> bytes:
    if not chunks:
        raise MalformedChunkStreamError("malformed chunk stream: no header")
    if any(not 0 <= c < CHUNK_LIMIT for c in chunks):
        raise MalformedChunkStreamError("malformed chunk stream: chunk value exceeds 56 bits")
    length = chunks[0]
    if len(chunks) - 1 != -(-length // CHUNK_BYTES):
        raise MalformedChunkStreamError(
            f"malformed chunk stream: header says {length} bytes, got {len(chunks) - 1} chunks"
        )
    data = b"".join(c.to_bytes(CHUNK_BYTES, "big") for c in chunks[1:])
    if any(data[length:]):
        raise MalformedChunkStreamError("malformed chunk stream: nonzero padding")
    return data[:length]


def split_chunks(
    chunks: Sequence[int],
    params: ThresholdParams,
    rng,
    field: FieldPrime = DEFAULT_FIELD,
) -> list[Share]:
    """Share each chunk with a fresh polynomial of degree k - 1.

    ``rng`` only needs ``randbelow(n)``; identical generator state gives
    identical shares.
    """
    params.check_field(field)
    p = field.p
    k, n = params.k, params.n
    columns: list[list[int]] = [[] for _ in range(n)]
    randbelow = rng.randbelow
    for c in chunks:
        if not 0 <= c < p:
            raise ValueError(f"chunk value {c} is not in GF({p})")
        coeffs = [c] + [randbelow(p) for _ in range(k - 1)]
        coeffs.reverse()
        for x in range(1, n + 1):
            acc = 0
            for a in coeffs:
                acc = (acc * x + a) % p
            columns[x - 1].append(acc)
    return [Share(x, tuple(col)) for x, col in enumerate(columns, start=1)]


def split(
    payload: bytes,
    params: ThresholdParams,
    rng,
    field: FieldPrime = DEFAULT_FIELD,
) -> list[Share]:
    return split_chunks(chunk_encode(payload), params, rng, field)


def _select(shares: Sequence[Share], params: ThresholdParams) -> list[Share]:
    if len({s.x for s in shares}) != len(shares):
        raise ShamirError("shares must have pairwise distinct x")
    if len(shares) < params.k:
        raise BelowThresholdError(
            f"below threshold: {len(shares)} shares supplied, {params.k} required"
        )
    if len({len(s.values) for s in shares}) != 1:
        raise ShamirError("shares disagree on chunk count")
    return sorted(shares, key=lambda s: s.x)[: params.k]


def reconstruct_chunks(
    shares: Sequence[Share],
    params: ThresholdParams,
    field: FieldPrime = DEFAULT_FIELD,
) -> list[int]:
    """Interpolate every chunk at zero from the k shares with smallest x."""
    chosen = _select(shares, params)
    p = field.p
    weights = field.lagrange_weights([s.x for s in chosen])
    out = []
    for ys in zip(*(s.values for s in chosen)):
        out.append(sum(w * y for w, y in zip(weights, ys)) % p)
    return out


def reconstruct(
    shares: Sequence[Share],
    params: ThresholdParams,
    field: FieldPrime = DEFAULT_FIELD,
) -> bytes:
    chunks = reconstruct_chunks(shares, params, field)
    try:
        return chunk_decode(chunks)
    except MalformedChunkStreamError as exc:
        raise CorruptReconstructionError(f"corrupt reconstruction: {exc}") from exc


def consistent_with(
    basis: Sequence[Share],
    other: Share,
    field: FieldPrime = DEFAULT_FIELD,
) -> bool:
    """True if ``other`` lies on the polynomials fixed by ``basis``."""
    p = field.p
    weights = field.lagrange_weights([s.x for s in basis], other.x)
    if len(other.values) != len(basis[0].values):
        return False
    for ys, y in zip(zip(*(s.values for s in basis)), other.values):
        if sum(w * v for w, v in zip(weights, ys)) % p != y:
            return False
    return True


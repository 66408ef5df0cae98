"""Packed bitstring sets and float vectors.

Bit ``j`` of a row is the occupation of orbital ``j``; rows are held as Python
integers so set algebra and Hamming distances stay exact and cheap. The textual
rendering prints orbital ``num_bits - 1`` first, so a width-6 RHF reference with
three electrons reads ``000111``.

Container layout (``pack_bitstrings``)::

    QCSC-BITSET/1 num_bits=<n> rows=<r> counts=<0|1>\\n
    <r rows, ceil(n/8) bytes each, bit j at byte j // 8, bit j % 8>
    <r little-endian uint32 multiplicities, only when counts=1>
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContainerFormatError

BITSET_MEDIA_TYPE = "application/vnd.qcsc.bitset"
VECTOR_MEDIA_TYPE = "application/vnd.qcsc.vector"

_BITSET_MAGIC = "QCSC-BITSET/1"
_VECTOR_MAGIC = "QCSC-VECTOR/1"
_BITSET_HEADER_RE = re.compile(
    rb"^QCSC-BITSET/1 num_bits=(\d+) rows=(\d+) counts=([01])$"
)
_VECTOR_HEADER_RE = re.compile(rb"^QCSC-VECTOR/1 dtype=<f8 length=(\d+)$")
_MAX_HEADER = 256


def row_bytes(num_bits: int) -> int:
    return (num_bits + 7) // 8


@dataclass(frozen=True)
class BitstringSet:
    """Fixed-width occupation bitstrings, optionally with multiplicities."""

    num_bits: int
    rows: Tuple[int, ...] = ()
    counts: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if isinstance(self.num_bits, bool) or not isinstance(self.num_bits, int) or self.num_bits < 1:
            raise ValueError("num_bits must be a positive integer")
        rows = tuple(int(row) for row in self.rows)
        limit = 1 << self.num_bits
        for row in rows:
            if row < 0 or row >= limit:
                raise ValueError(f"row {row:#x} does not fit in {self.num_bits} bits")
        object.__setattr__(self, "rows", rows)
        if self.counts is not None:
            counts = tuple(int(c) for c in self.counts)
            if len(counts) != len(rows):
                raise ValueError("counts and rows must have the same length")
            if any(c < 1 for c in counts):
                raise ValueError("multiplicities must be positive")
            object.__setattr__(self, "counts", counts)

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------
    @classmethod
    def from_strings(
        cls, strings: Iterable[str], counts: Optional[Sequence[int]] = None, num_bits: Optional[int] = None
    ) -> "BitstringSet":
        values = list(strings)
        width = num_bits if num_bits is not None else (len(values[0]) if values else None)
        if width is None:
            raise ValueError("num_bits is required for an empty set")
        for text in values:
            if len(text) != width or set(text) - {"0", "1"}:
                raise ValueError(f"'{text}' is not a {width}-bit string")
        return cls(width, tuple(int(text, 2) for text in values), None if counts is None else tuple(counts))

    @classmethod
    def from_array(cls, bits: np.ndarray, counts: Optional[Sequence[int]] = None) -> "BitstringSet":
        """Build from an ``(n, num_bits)`` 0/1 array, column ``j`` = orbital ``j``."""

        bits = np.asarray(bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise ValueError("bit array must be two-dimensional")
        packed = np.packbits(bits, axis=1, bitorder="little")
        rows = tuple(int.from_bytes(row.tobytes(), "little") for row in packed)
        return cls(int(bits.shape[1]), rows, None if counts is None else tuple(int(c) for c in counts))

    # ------------------------------------------------------------------
    # Views
    # ------------------------------------------------------------------
    def __len__(self) -> int:
        return len(self.rows)

    @property
    def is_unique(self) -> bool:
        return len(set(self.rows)) == len(self.rows)

    @property
    def total(self) -> int:
        """Number of samples, counting multiplicities."""

        return sum(self.counts) if self.counts is not None else len(self.rows)

    def multiplicities(self) -> Tuple[int, ...]:
        return self.counts if self.counts is not None else (1,) * len(self.rows)

    def as_frozenset(self) -> FrozenSet[int]:
        return frozenset(self.rows)

    def unique(self) -> "BitstringSet":
        """Distinct rows in ascending order, multiplicities dropped."""

        return BitstringSet(self.num_bits, tuple(sorted(set(self.rows))))

    def render(self, row: int) -> str:
        return format(row, f"0{self.num_bits}b")

    def render_rows(self) -> List[str]:
        return [self.render(row) for row in self.rows]

    def to_array(self) -> np.ndarray:
        nbytes = row_bytes(self.num_bits)
        raw = np.frombuffer(
            b"".join(row.to_bytes(nbytes, "little") for row in self.rows), dtype=np.uint8
        ).reshape(len(self.rows), nbytes)
        return np.unpackbits(raw, axis=1, count=self.num_bits, bitorder="little")


def pack_bitstrings(bitset: BitstringSet) -> bytes:
    nbytes = row_bytes(bitset.num_bits)
    has_counts = bitset.counts is not None
    header = f"{_BITSET_MAGIC} num_bits={bitset.num_bits} rows={len(bitset.rows)} counts={int(has_counts)}\n"
    body = b"".join(row.to_bytes(nbytes, "little") for row in bitset.rows)
    tail = np.asarray(bitset.counts, dtype="<u4").tobytes() if has_counts else b""
    return header.encode("ascii") + body + tail


def _split_header(data: bytes) -> Tuple[bytes, bytes]:
    newline = data.find(b"\n", 0, _MAX_HEADER)
    if newline < 0:
        raise ContainerFormatError("container header line missing")
    return data[:newline], data[newline + 1 :]


def unpack_bitstrings(data: bytes) -> BitstringSet:
    header, body = _split_header(bytes(data))
    match = _BITSET_HEADER_RE.match(header)
    if not match:
        raise ContainerFormatError(f"malformed bitset header {header[:64]!r}")
    num_bits, n_rows, has_counts = int(match.group(1)), int(match.group(2)), match.group(3) == b"1"
    if num_bits < 1:
        raise ContainerFormatError("bitset width must be positive")
    nbytes = row_bytes(num_bits)
    expected = n_rows * nbytes + (4 * n_rows if has_counts else 0)
    if len(body) < expected:
        raise ContainerFormatError(
            f"truncated bitset body: expected {expected} bytes, found {len(body)}"
        )
    if len(body) > expected:
        raise ContainerFormatError(
            f"bitset body has {len(body) - expected} trailing bytes; row/count mismatch"
        )
    rows = tuple(
        int.from_bytes(body[k * nbytes : (k + 1) * nbytes], "little") for k in range(n_rows)
    )
    counts = None
    if has_counts:
        counts = tuple(int(c) for c in np.frombuffer(body[n_rows * nbytes :], dtype="<u4"))
    try:
        return BitstringSet(num_bits, rows, counts)
    except ValueError as exc:
        raise ContainerFormatError(str(exc)) from exc


def pack_vector(values: Sequence[float]) -> bytes:
    array = np.asarray(values, dtype="<f8").reshape(-1)
    header = f"{_VECTOR_MAGIC} dtype=<f8 length={array.size}\n"
    return header.encode("ascii") + array.tobytes()


def unpack_vector(data: bytes) -> np.ndarray:
    header, body = _split_header(bytes(data))
    match = _VECTOR_HEADER_RE.match(header)
    if not match:
        raise ContainerFormatError(f"malformed vector header {header[:64]!r}")
    length = int(match.group(1))
    if len(body) != 8 * length:
        raise ContainerFormatError(
            f"vector body has {len(body)} bytes, expected {8 * length}"
        )
    return np.frombuffer(body, dtype="<f8").astype(np.float64)

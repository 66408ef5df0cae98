from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from qcsc_telemetry import (
    BitstringSet,
    BlobRef,
    ContainerFormatError,
    RecordValidationError,
    TelemetryLevel,
    TelemetryRecord,
    canonical_decode,
    canonical_encode,
    digest,
    new_record_id,
    new_run_id,
    pack_bitstrings,
    pack_vector,
    unpack_bitstrings,
    unpack_vector,
)
from qcsc_telemetry.canonical import decode_lines, encode_lines


def build_record(**overrides) -> TelemetryRecord:
    values = dict(
        record_id=new_record_id(),
        run_id=new_run_id(),
        task_name="run_primitive",
        level=TelemetryLevel.L3,
        kind="task_timing",
        timestamp=datetime(2025, 1, 1, 12, 0, 0, 123456, tzinfo=timezone.utc),
        iteration=2,
        population=1,
        payload={"wall_clock_s": 1.5, "outcome": "ok"},
    )
    values.update(overrides)
    return TelemetryRecord(**values)


def test_canonical_encoding_is_key_order_independent():
    record = build_record(payload={"b": 1, "a": 2.5})
    same = build_record(
        record_id=record.record_id,
        run_id=record.run_id,
        payload={"a": 2.5, "b": 1},
    )

    line = canonical_encode(record)

    assert line == canonical_encode(same)
    assert b"\n" not in line
    assert line.index(b'"blob_refs"') < line.index(b'"iteration"') < line.index(b'"timestamp"')
    assert b'"timestamp":"2025-01-01T12:00:00.123456Z"' in line
    assert canonical_decode(line) == record


def test_record_timestamp_is_normalized_to_utc():
    local = datetime(2025, 1, 1, 14, 0, tzinfo=timezone(timedelta(hours=2)))

    record = build_record(timestamp=local)

    assert record.timestamp == datetime(2025, 1, 1, 12, 0, tzinfo=timezone.utc)
    assert b"2025-01-01T12:00:00.000000Z" in canonical_encode(record)


@pytest.mark.parametrize(
    "overrides",
    [
        {"run_id": "not-a-run"},
        {"record_id": "ABCDEF" * 5 + "00"},
        {"task_name": ""},
        {"level": 7},
        {"level": "L9"},
        {"timestamp": datetime(2025, 1, 1)},
        {"iteration": -1},
        {"population": True},
        {"payload": {"nested": {"a": 1}}},
        {"payload": {"energy": float("nan")}},
    ],
)
def test_invalid_records_are_rejected(overrides):
    with pytest.raises(RecordValidationError):
        build_record(**overrides)


def test_artifact_record_needs_blob_or_payload():
    with pytest.raises(RecordValidationError):
        build_record(level=TelemetryLevel.L4, kind="sqd_artifact", payload={})

    ref = digest(b"payload")
    record = build_record(level=TelemetryLevel.L4, kind="sqd_artifact", payload={}, blob_refs=(ref,))
    assert record.blob_refs == (ref,)


def test_decode_rejects_unknown_fields_and_bad_json():
    line = canonical_encode(build_record())

    with pytest.raises(RecordValidationError):
        canonical_decode(line[:-1] + b',"extra":1}')
    with pytest.raises(RecordValidationError):
        canonical_decode(b"{not json")


def test_payload_is_read_only():
    record = build_record()

    with pytest.raises(TypeError):
        record.payload["outcome"] = "changed"  # type: ignore[index]


def test_level_parse_accepts_names_and_numbers():
    assert TelemetryLevel.parse("l2") is TelemetryLevel.L2
    assert TelemetryLevel.parse(4) is TelemetryLevel.L4
    with pytest.raises(ValueError):
        TelemetryLevel.parse(True)


def test_ndjson_lines_preserve_order():
    records = [build_record(iteration=k) for k in range(3)]

    data = encode_lines(records)

    assert data.count(b"\n") == 3
    assert decode_lines(data) == records


def test_digest_is_sha256_of_bytes():
    ref = digest(b"abc", "text/plain")

    assert ref.digest == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert ref.size_bytes == 3
    assert BlobRef.from_dict(ref.as_dict()) == ref


def test_bitset_renders_orbital_zero_rightmost():
    rhf = BitstringSet(6, (0b000111,))

    assert rhf.render_rows() == ["000111"]
    assert rhf.to_array().tolist() == [[1, 1, 1, 0, 0, 0]]
    assert BitstringSet.from_array(rhf.to_array()) == rhf
    assert BitstringSet.from_strings(["000111"]) == rhf


def test_bitset_container_keeps_duplicates_and_counts():
    bitset = BitstringSet(10, (5, 5, 1023, 0), (1, 3, 2, 7))

    data = pack_bitstrings(bitset)

    assert data.startswith(b"QCSC-BITSET/1 num_bits=10 rows=4 counts=1\n")
    restored = unpack_bitstrings(data)
    assert restored == bitset
    assert restored.total == 13
    assert not restored.is_unique
    assert restored.unique().rows == (0, 5, 1023)


def test_bitset_container_rejects_row_count_mismatch():
    data = pack_bitstrings(BitstringSet(12, (1, 2, 3)))

    with pytest.raises(ContainerFormatError):
        unpack_bitstrings(data[:-1])
    with pytest.raises(ContainerFormatError):
        unpack_bitstrings(data + b"\x00\x00")
    with pytest.raises(ContainerFormatError):
        unpack_bitstrings(b"QCSC-BITSET/2 num_bits=4 rows=0 counts=0\n")


def test_bitset_rejects_rows_wider_than_num_bits():
    with pytest.raises(ValueError):
        BitstringSet(3, (8,))
    with pytest.raises(ContainerFormatError):
        unpack_bitstrings(b"QCSC-BITSET/1 num_bits=3 rows=1 counts=0\n\x08")


def test_vector_container_is_exact():
    values = np.array([0.1, -2.5e-300, 1.0 / 3.0])

    restored = unpack_vector(pack_vector(values))

    assert np.array_equal(restored, values)
    with pytest.raises(ContainerFormatError):
        unpack_vector(pack_vector(values)[:-3])


def build_random_record(rng: np.random.Generator) -> TelemetryRecord:
    texts = ["ok", "failed", "", "ünïcode", 'quote "and" \\ backslash', "tab\tnewline\n"]
    payload = {}
    for k in range(int(rng.integers(0, 6))):
        choice = int(rng.integers(0, 5))
        if choice == 0:
            value = float(rng.normal() * 10.0 ** int(rng.integers(-12, 12)))
        elif choice == 1:
            value = int(rng.integers(-(2**62), 2**62))
        elif choice == 2:
            value = texts[int(rng.integers(0, len(texts)))]
        elif choice == 3:
            value = bool(rng.integers(0, 2))
        else:
            value = None
        payload[f"field_{k}"] = value
    refs = tuple(digest(rng.bytes(8)) for _ in range(int(rng.integers(0, 3))))
    return build_record(
        level=TelemetryLevel(int(rng.integers(0, 5))),
        kind=["task_timing", "qpu_job", "sqd_result", "sampler_stats"][int(rng.integers(0, 4))],
        timestamp=datetime(2025, 1, 1, tzinfo=timezone.utc)
        + timedelta(seconds=int(rng.integers(0, 10**8)), microseconds=int(rng.integers(0, 10**6))),
        iteration=None if rng.random() < 0.2 else int(rng.integers(0, 1000)),
        population=None if rng.random() < 0.2 else int(rng.integers(0, 64)),
        payload=payload,
        blob_refs=refs,
    )


def test_random_records_round_trip_byte_exactly():
    rng = np.random.default_rng(2025)

    for _ in range(1000):
        record = build_random_record(rng)
        line = canonical_encode(record)
        decoded = canonical_decode(line)

        assert decoded == record
        assert canonical_encode(decoded) == line


def test_wide_bitset_container_size():
    rng = np.random.default_rng(9)
    rows = tuple(int.from_bytes(rng.bytes(9), "little") for _ in range(10_000))
    bitset = BitstringSet(72, rows)

    data = pack_bitstrings(bitset)

    header = b"QCSC-BITSET/1 num_bits=72 rows=10000 counts=0\n"
    assert data.startswith(header)
    assert len(data) == len(header) + 9 * 10_000
    assert unpack_bitstrings(data) == bitset

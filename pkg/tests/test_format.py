import numpy as np
import pytest

from maskedge import parse_model, serialize_model
from maskedge.errors import ModelFormatError, ValidationError
from maskedge.model.format import MAGIC
from maskedge.model.graph import ModelGraph
from maskedge.zoo import random_graph, single_shot_model


def graphs_equal(a: ModelGraph, b: ModelGraph) -> bool:
    if a.version != b.version or a.layers != b.layers:
        return False
    if a.head != b.head or a.outputs != b.outputs or a.metadata != b.metadata:
        return False
    if set(a.weights) != set(b.weights):
        return False
    return all(a.weights[k].tobytes() == b.weights[k].tobytes() for k in a.weights)


def test_roundtrip_identity():
    g = single_shot_model()
    g2 = parse_model(serialize_model(g))
    assert graphs_equal(g, g2)


def test_empty_bytes_bad_magic_offset_zero():
    with pytest.raises(ModelFormatError) as exc:
        parse_model(b"")
    assert exc.value.kind == "bad_magic"
    assert exc.value.offset == 0


def test_wrong_magic():
    with pytest.raises(ModelFormatError) as exc:
        parse_model(b"NOPE" + b"\x00" * 20)
    assert exc.value.kind == "bad_magic"


def test_unsupported_version():
    data = bytearray(serialize_model(single_shot_model()))
    data[4] = 99
    with pytest.raises(ModelFormatError) as exc:
        parse_model(bytes(data))
    assert exc.value.kind == "unsupported_version"
    assert exc.value.offset == 4


def test_truncation_at_every_byte_boundary():
    data = serialize_model(single_shot_model())
    for cut in range(len(data)):
        with pytest.raises(ModelFormatError) as exc:
            parse_model(data[:cut])
        assert exc.value.offset >= 0


def test_trailing_data_rejected():
    data = serialize_model(single_shot_model())
    with pytest.raises(ModelFormatError) as exc:
        parse_model(data + b"\x00")
    assert exc.value.kind == "trailing_data"


def test_oversize_blob_rejected():
    # grow a declared blob length far past the element cap
    data = bytearray(serialize_model(single_shot_model()))
    # weight section: last section; blob length u64 sits 4 bytes into it
    import struct

    pos = 8
    for wide in (False, False, False):
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4 + length
    pos += 8  # u64 weight section length
    blob_len_at = pos + 4
    struct.pack_into("<Q", data, blob_len_at, (2**28 + 1) * 4)
    with pytest.raises(ModelFormatError) as exc:
        parse_model(bytes(data))
    assert exc.value.kind in ("oversize_blob", "truncated")
    assert exc.value.kind == "oversize_blob"


def test_dag_violation_detected():
    g = single_shot_model()
    bad = ModelGraph(
        version=g.version,
        layers=[g.layers[1], g.layers[0]],  # conv before its input
        weights=g.weights,
        head=g.head,
        outputs=g.outputs,
        metadata=g.metadata,
    )
    with pytest.raises(ValidationError):
        serialize_model(bad)


def test_serialization_deterministic():
    g = random_graph(np.random.default_rng(7))
    assert serialize_model(g) == serialize_model(g)


@pytest.mark.parametrize("seed", range(20))
def test_roundtrip_random_graphs(seed):
    g = random_graph(np.random.default_rng(seed))
    data = serialize_model(g)
    assert data[:4] == MAGIC
    g2 = parse_model(data)
    assert graphs_equal(g, g2)
    assert serialize_model(g2) == data


def test_container_overhead_under_5_percent():
    from maskedge.zoo import yolo_fastest_shaped

    g = yolo_fastest_shaped(seed=3, in_hw=320)
    data = serialize_model(g)
    raw = g.weight_bytes()
    assert raw >= 100_000
    assert len(data) < raw * 1.05


def test_mutation_fuzz_small():
    """Smoke-scale fuzz; the full 10,000-case run lives in the
    acceptance suite."""
    data = serialize_model(single_shot_model())
    rng = np.random.default_rng(0)
    crashes = 0
    for _ in range(500):
        buf = bytearray(data)
        for _ in range(int(rng.integers(1, 8))):
            buf[int(rng.integers(len(buf)))] = int(rng.integers(256))
        try:
            parse_model(bytes(buf))
        except ModelFormatError as exc:
            assert isinstance(exc.offset, int) and exc.offset >= 0
        except Exception:
            crashes += 1
    assert crashes == 0

import numpy as np
import pytest

from maskedge import ConvParams, Tensor, conv2d, convert_manifest, fold_batch_norm, from_array
from maskedge.errors import ManifestError, NarrowingError
from maskedge.executor import execute_no_reuse

RNG = np.random.default_rng(42)


def f32(a):
    return np.asarray(a, dtype="<f4").tobytes()


def base_manifest():
    """conv(3->4, 3x3, pad 1) + bn + activate feeding a 7-channel head conv."""
    return {
        "input": {"name": "image", "c": 3, "h": 32, "w": 32},
        "blobs": {
            "c1_w": {"shape": [4, 3, 3, 3], "dtype": "f32"},
            "c1_b": {"shape": [4], "dtype": "f32"},
            "bn_g": {"shape": [4], "dtype": "f32"},
            "bn_b": {"shape": [4], "dtype": "f32"},
            "bn_m": {"shape": [4], "dtype": "f32"},
            "bn_v": {"shape": [4], "dtype": "f32"},
            "h_w": {"shape": [7, 4, 1, 1], "dtype": "f32"},
            "h_b": {"shape": [7], "dtype": "f32"},
        },
        "layers": [
            {"name": "c1", "kind": "conv", "input": "image", "out_channels": 4,
             "kernel": [3, 3], "stride": [2, 2], "padding": [1, 1],
             "weights": "c1_w", "bias": "c1_b"},
            {"name": "bn1", "kind": "batch_norm", "input": "c1", "gamma": "bn_g",
             "beta": "bn_b", "mean": "bn_m", "var": "bn_v", "eps": 1e-5},
            {"name": "a1", "kind": "activate", "input": "bn1", "activation": "relu6"},
            {"name": "head", "kind": "conv", "input": "a1", "out_channels": 7,
             "kernel": [1, 1], "stride": [16, 16], "weights": "h_w", "bias": "h_b"},
        ],
        "head": {"anchors": [[[10, 14]]], "strides": [32],
                 "class_names": ["mask", "no_mask"], "outputs": ["head"]},
    }


def base_blobs(identity_bn=False):
    w = RNG.standard_normal((4, 3, 3, 3)).astype(np.float32)
    b = RNG.standard_normal(4).astype(np.float32)
    if identity_bn:
        g, beta, m, v = np.ones(4), np.zeros(4), np.zeros(4), np.ones(4)
    else:
        g = RNG.uniform(0.5, 2, 4)
        beta = RNG.standard_normal(4)
        m = RNG.standard_normal(4)
        v = RNG.uniform(0.1, 2, 4)
    return {
        "c1_w": f32(w), "c1_b": f32(b),
        "bn_g": f32(g), "bn_b": f32(beta), "bn_m": f32(m), "bn_v": f32(v),
        "h_w": f32(RNG.standard_normal((7, 4, 1, 1)) * 0.1),
        "h_b": f32(RNG.standard_normal(7) * 0.1),
    }, (w, b, g.astype(np.float32), beta.astype(np.float32), m.astype(np.float32),
        v.astype(np.float32))


def test_identity_fold_bitwise():
    m = base_manifest()
    m["layers"][1]["eps"] = 0.0
    blobs, (w, b, *_rest) = base_blobs(identity_bn=True)
    graph = convert_manifest(m, blobs)
    conv_id = next(l.id for l in graph.layers if l.kind == "conv")
    blob = graph.weights[conv_id]
    assert blob[: w.size].tobytes() == w.reshape(-1).tobytes()
    assert blob[w.size :].tobytes() == b.tobytes()


def test_fold_matches_two_step_oracle():
    m = base_manifest()
    blobs, (w, b, g, beta, mean, var) = base_blobs()
    graph = convert_manifest(m, blobs)
    conv_id = next(l.id for l in graph.layers if l.kind == "conv")
    params = graph.layer_by_id(conv_id).params
    blob = graph.weights[conv_id]
    wf = blob[: w.size].reshape(4, 3, 3, 3)
    bf = blob[w.size :]

    x = from_array(RNG.standard_normal((1, 3, 8, 8)))
    p = ConvParams(out_channels=4, kernel=(3, 3), stride=(2, 2), padding=(1, 1))
    folded = conv2d(x, Tensor(wf), bf, p).data.astype(np.float64)
    # oracle: conv then batch-norm as two explicit steps
    raw = conv2d(x, Tensor(w), b, p).data.astype(np.float64)
    scale = g.astype(np.float64) / np.sqrt(var.astype(np.float64) + 1e-5)
    two_step = (raw - mean.astype(np.float64)[None, :, None, None]) * scale[
        None, :, None, None
    ] + beta.astype(np.float64)[None, :, None, None]
    assert np.all(np.abs(folded - two_step) <= 1e-6 + 1e-5 * np.abs(two_step))
    assert params.has_bias


def test_fold_batch_norm_unit():
    w = np.ones((2, 1, 1, 1), np.float32)
    wf, bf = fold_batch_norm(w, None, [2.0, 4.0], [1.0, -1.0], [0.0, 0.0], [1.0, 1.0], 0.0)
    assert wf[0, 0, 0, 0] == 2.0 and wf[1, 0, 0, 0] == 4.0
    assert bf.tolist() == [1.0, -1.0]


def test_int64_overflow_narrowing_error():
    m = base_manifest()
    blobs, _ = base_blobs()
    m["layers"][0]["stride"] = [2**40, 2]
    with pytest.raises(NarrowingError) as exc:
        convert_manifest(m, blobs)
    assert "stride" in str(exc.value)
    assert str(2**40) in str(exc.value)


def test_i64_blob_overflow():
    m = base_manifest()
    blobs, _ = base_blobs()
    m["blobs"]["c1_b"] = {"shape": [4], "dtype": "i64"}
    blobs["c1_b"] = np.array([1, 2, 2**40, 3], dtype="<i8").tobytes()
    with pytest.raises(NarrowingError) as exc:
        convert_manifest(m, blobs)
    assert "c1_b" in str(exc.value)


def test_i64_blob_in_range_ok():
    m = base_manifest()
    blobs, _ = base_blobs()
    m["blobs"]["c1_b"] = {"shape": [4], "dtype": "i64"}
    blobs["c1_b"] = np.array([1, -2, 3, 4], dtype="<i8").tobytes()
    graph = convert_manifest(m, blobs)
    conv_id = next(l.id for l in graph.layers if l.kind == "conv")
    assert graph.weights[conv_id].dtype == np.float32


def test_unknown_operator_lists_supported_set():
    m = base_manifest()
    blobs, _ = base_blobs()
    m["layers"].insert(3, {"name": "soft", "kind": "softmax", "input": "a1"})
    with pytest.raises(ManifestError) as exc:
        convert_manifest(m, blobs)
    msg = str(exc.value)
    assert "softmax" in msg
    for kind in ("conv", "batch_norm", "max_pool", "upsample", "concat", "add"):
        assert kind in msg


def test_blob_length_mismatch():
    m = base_manifest()
    blobs, _ = base_blobs()
    blobs["c1_w"] = blobs["c1_w"][:-4]
    with pytest.raises(ManifestError) as exc:
        convert_manifest(m, blobs)
    assert "c1_w" in str(exc.value)


def test_converted_graph_executes():
    m = base_manifest()
    blobs, _ = base_blobs()
    graph = convert_manifest(m, blobs)
    x = from_array(RNG.random((1, 3, 32, 32), dtype=np.float32))
    outs, _ = execute_no_reuse(graph, x)
    assert outs[0].data.shape == (1, 7, 1, 1)

"""Acceptance suite: one test per release criterion, each printing a
PASS line (run with ``pytest -s tests/test_acceptance.py`` to see them).
"""

import time

import numpy as np
import pytest

from maskedge import (
    Activation,
    ConvParams,
    ImageFrame,
    Shape,
    Tensor,
    activate,
    add,
    average_precision,
    concat_channels,
    conv2d,
    decode_head,
    detect,
    execute,
    execute_no_reuse,
    from_array,
    max_pool,
    nms,
    parse_model,
    plan,
    serialize_model,
    tensor_allclose,
    upsample_nearest,
)
from maskedge.errors import ModelFormatError
from maskedge.model.graph import HeadConfig
from maskedge.zoo import parameter_count, random_graph, single_shot_model, yolo_fastest_shaped

from oracles import naive_conv2d, naive_decode, naive_max_pool, naive_nms, naive_upsample
from test_metrics import FIXTURE_DETS, FIXTURE_TRUTH
from test_pipeline import random_candidates

REL, ABS = 1e-5, 1e-6


def ok(name):
    print(f"\nACCEPTANCE {name}: PASS", flush=True)


def close(a, b, rel=REL, abs_=ABS):
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    return a.shape == b.shape and np.all(np.abs(a - b) <= abs_ + rel * np.abs(b))


def test_criterion_operator_oracles():
    """Every operator matches its brute-force oracle on >=200 random
    small cases, rel 1e-5 / abs 1e-6, in under 60 s."""
    t_start = time.perf_counter()
    rng = np.random.default_rng(2024)

    for case in range(200):  # conv2d: standard / grouped / depthwise mix
        c = int(rng.integers(1, 5))
        mode = case % 3
        if mode == 0:
            groups, oc = 1, int(rng.integers(1, 5))
        elif mode == 1:
            groups, oc = c, c  # depthwise
        else:
            groups = int(rng.choice([d for d in (1, 2, c) if c % d == 0]))
            oc = groups * int(rng.integers(1, 3))
        k = int(rng.choice([1, 2, 3]))
        s = int(rng.integers(1, 3))
        p = int(rng.integers(0, 2))
        h = int(rng.integers(max(k, 2), 7))
        w = int(rng.integers(max(k, 2), 7))
        x = rng.standard_normal((1, c, h, w)).astype(np.float32)
        wt = rng.standard_normal((oc, c // groups, k, k)).astype(np.float32)
        bias = rng.standard_normal(oc).astype(np.float32) if case % 2 else None
        params = ConvParams(out_channels=oc, kernel=(k, k), stride=(s, s),
                            padding=(p, p), groups=groups, has_bias=bias is not None)
        want = naive_conv2d(x, wt, bias, (s, s), (p, p), groups)
        for path in ("reference", "optimized"):
            got = conv2d(Tensor(x), Tensor(wt), bias, params, kernel_path=path)
            assert close(got.data, want), f"conv case {case} path {path}"

    for case in range(200):  # activate vs scalar definitions
        x = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
        kind = ["none", "relu", "relu6", "leaky_relu"][case % 4]
        act = Activation(kind)
        got = activate(Tensor(x), act).data
        flat_x = x.reshape(-1).astype(np.float64)
        if kind == "none":
            want = flat_x
        elif kind == "relu":
            want = np.array([v if v > 0 else 0.0 for v in flat_x])
        elif kind == "relu6":
            want = np.array([min(max(v, 0.0), 6.0) for v in flat_x])
        else:
            want = np.array([v if v > 0 else v * np.float32(0.1) for v in flat_x])
        assert close(got.reshape(-1), want)

    for case in range(200):  # max_pool: exact match against window scan
        c = int(rng.integers(1, 4))
        h = int(rng.integers(3, 8))
        w = int(rng.integers(3, 8))
        k = int(rng.integers(1, min(h, w) + 1))
        s = int(rng.integers(1, 4))
        x = rng.standard_normal((1, c, h, w)).astype(np.float32)
        got = max_pool(Tensor(x), (k, k), (s, s)).data
        assert np.array_equal(got, naive_max_pool(x, (k, k), (s, s)))

    for case in range(200):  # upsample: exact replication + stride-back
        f = int(rng.integers(1, 4))
        x = rng.standard_normal((1, 2, int(rng.integers(1, 5)), int(rng.integers(1, 5)))).astype(np.float32)
        got = upsample_nearest(Tensor(x), f).data
        assert np.array_equal(got, naive_upsample(x, f))
        assert np.array_equal(got[:, :, ::f, ::f], x)

    for case in range(200):  # concat + add: index-mapping oracle
        h, w = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        a = rng.standard_normal((1, int(rng.integers(1, 4)), h, w)).astype(np.float32)
        b = rng.standard_normal((1, int(rng.integers(1, 4)), h, w)).astype(np.float32)
        cat = concat_channels(Tensor(a), Tensor(b)).data
        assert np.array_equal(cat[:, : a.shape[1]], a)
        assert np.array_equal(cat[:, a.shape[1] :], b)
        total = add(Tensor(a), Tensor(a)).data
        assert close(total, a.astype(np.float64) * 2)

    elapsed = time.perf_counter() - t_start
    assert elapsed < 60.0, f"operator oracle suite took {elapsed:.1f}s"
    ok(f"operator-oracles (1000+ cases in {elapsed:.1f}s)")


def test_criterion_nms_and_decode_equivalence():
    """Greedy NMS matches O(n^2) brute force on 1,000 random candidate
    sets; decode matches the naive triple-loop decoder on 100 random
    head tensors, exactly."""
    rng = np.random.default_rng(7)
    for i in range(1000):
        cands = random_candidates(rng, int(rng.integers(1, 60)))
        thr = float(rng.uniform(0.2, 0.8))
        assert nms(cands, thr) == naive_nms(cands, thr), f"nms set {i}"

    cfg = HeadConfig(
        anchors=(((10.0, 14.0), (23.0, 27.0), (37.0, 58.0)),),
        strides=(16,),
        num_classes=2,
        class_names=("mask", "no_mask"),
    )
    for i in range(100):
        t = (rng.standard_normal((1, 3 * 7, 5, 5)) * 2).astype(np.float32)
        got = decode_head(from_array(t), 0, cfg, 0.25)
        want = naive_decode(t, cfg.anchors[0], 16, 2, 0.25)
        assert [(g.class_id, g.confidence, g.box) for g in got] == want, f"decode {i}"
    ok("nms-and-decode-equivalence")


def test_criterion_executor_equivalence():
    """Arena-reuse execution equals no-reuse execution (rel 1e-6) on 100
    random DAGs; arena peak never exceeds no-reuse peak."""
    for seed in range(100):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, n_layers=int(rng.integers(6, 14)))
        inp = g.layers[0].params
        x = from_array(rng.standard_normal((1, inp.c, inp.h, inp.w)).astype(np.float32))
        pl = plan(g, Shape(1, inp.c, inp.h, inp.w))
        out_reuse, _ = execute(g, pl, x)
        out_ref, peak = execute_no_reuse(g, x)
        assert len(out_reuse) == len(out_ref)
        for a, b in zip(out_reuse, out_ref):
            assert tensor_allclose(a, b, 1e-6, 1e-7), f"graph seed {seed}"
        assert pl.arena_size <= peak, f"graph seed {seed}: arena exceeds no-reuse peak"
    ok("executor-equivalence (100 DAGs)")


def test_criterion_format_robustness():
    """100 bitwise round-trips; 10,000-case mutation fuzz with zero
    crashes and offset-bearing errors; container overhead < 5%."""
    from test_format import graphs_equal

    for seed in range(100):
        g = random_graph(np.random.default_rng(seed))
        data = serialize_model(g)
        g2 = parse_model(data)
        assert graphs_equal(g, g2), f"round-trip seed {seed}"
        assert serialize_model(g2) == data

    base = serialize_model(single_shot_model())
    rng = np.random.default_rng(0)
    for i in range(10_000):
        buf = bytearray(base)
        kind = i % 3
        if kind == 0:  # byte flips
            for _ in range(int(rng.integers(1, 6))):
                buf[int(rng.integers(len(buf)))] = int(rng.integers(256))
        elif kind == 1:  # truncate
            buf = buf[: int(rng.integers(len(buf)))]
        else:  # flip + extend
            buf[int(rng.integers(len(buf)))] ^= 1 << int(rng.integers(8))
            buf += bytes(rng.integers(0, 256, int(rng.integers(0, 9)), dtype=np.uint8))
        try:
            parse_model(bytes(buf))
        except ModelFormatError as exc:
            assert isinstance(exc.offset, int) and exc.offset >= 0
        # any other exception type is a crash and fails the test

    g = yolo_fastest_shaped(seed=1)
    data = serialize_model(g)
    raw = g.weight_bytes()
    assert raw >= 100_000
    overhead = (len(data) - raw) / raw
    assert overhead < 0.05, f"container overhead {overhead:.2%}"
    ok(f"format-robustness (overhead {overhead:.3%})")


def test_criterion_metric_fixture():
    """AP matches the hand-enumerated 3-image fixture exactly; perfect
    detector scores 1.0; empty detector scores 0.0."""
    ap, mean = average_precision(FIXTURE_DETS, FIXTURE_TRUTH, 0.5)
    assert ap[0] == pytest.approx(173 / 303, abs=1e-12)
    assert ap[1] == pytest.approx(1.0)
    assert mean == pytest.approx((173 / 303 + 1) / 2, abs=1e-12)

    perfect_truth = FIXTURE_TRUTH
    perfect_dets = [
        [type(d)(g.class_id, 1.0, g.box) for g in img] for img, d in
        zip(perfect_truth, [FIXTURE_DETS[0][0]] * 3)
    ]
    _, perfect = average_precision(perfect_dets, perfect_truth, 0.5)
    assert perfect == 1.0
    _, empty = average_precision([[] for _ in perfect_truth], perfect_truth, 0.5)
    assert empty == 0.0
    ok("metric-fixture (AP0 = 173/303)")


def test_criterion_synthetic_end_to_end():
    """Hand-weighted model fires exactly one head cell; the detection
    lands within 1 px of the analytically predicted box through the full
    letterbox -> execute -> decode -> NMS -> inverse-map path."""
    g = single_shot_model()
    pl = plan(g, Shape(1, 3, 32, 32))
    px = np.zeros((32, 32, 3), np.uint8)
    px[16, 16] = 255
    dets = detect(ImageFrame(32, 32, px), g, pl, conf_threshold=0.5)
    assert len(dets) == 1
    d = dets[0]
    assert d.class_id == 0 and d.confidence > 0.999
    predicted = (20.0, 20.0, 28.0, 28.0)  # cell (1,1): center 24,24, anchor 8x8
    for got, want in zip(d.box, predicted):
        assert abs(got - want) <= 1.0
    ok("synthetic-end-to-end")


def test_criterion_performance_report():
    """Optimized single-frame inference on the ~250k-parameter reference
    graph at 320x320 finishes in < 200 ms; the optimized/reference
    speedup ratio is reported (not gated)."""
    g = yolo_fastest_shaped()
    n_params = parameter_count(g)
    assert 200_000 <= n_params <= 300_000, n_params
    pl = plan(g, Shape(1, 3, 320, 320))
    x = Tensor(np.random.default_rng(0).random((1, 3, 320, 320), dtype=np.float32))

    execute(g, pl, x, kernel_path="optimized")  # warmup
    times = []
    for _ in range(5):
        t0 = time.perf_counter()
        execute(g, pl, x, kernel_path="optimized")
        times.append(time.perf_counter() - t0)
    opt = min(times)
    t0 = time.perf_counter()
    execute(g, pl, x, kernel_path="reference")
    ref = time.perf_counter() - t0
    assert opt < 0.200, f"optimized frame took {opt * 1000:.1f} ms"
    ok(
        f"performance-report ({n_params} params, optimized {opt * 1000:.1f} ms/frame, "
        f"speedup over reference {ref / opt:.1f}x; report only, not gated)"
    )


def test_criterion_model_size_report():
    """Serialized reference-graph size is reported against the published
    581 KB / 1.3 MB figures, with the precision difference documented."""
    g = yolo_fastest_shaped()
    data = serialize_model(g)
    raw = g.weight_bytes()
    assert 1_000_000 <= len(data) <= 1_100_000, len(data)
    ok(
        f"model-size-report (MEF {len(data) / 1e6:.3f} MB at float32, "
        f"{raw / 1e6:.3f} MB raw weights; published NCNN file was 0.581 MB "
        "and the original checkpoint 1.3 MB -- the NCNN figure implies "
        "half-precision or compressed storage, while MEF v1 stores full "
        "float32, so ~4 bytes/parameter is expected)"
    )

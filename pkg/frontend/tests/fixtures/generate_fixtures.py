"""Regenerate the cross-runtime parity fixtures from the native engine.

Run from the repository root:

    python3 frontend/tests/fixtures/generate_fixtures.py

Outputs, all in this directory:

    single_shot.mef / frame_single_32x32.rgb / expected_single.json
    rand.mef / frame_rand_48x40.rgb / expected_rand.json
    letterbox_rand.f32   float32 letterbox tensor for the rand frame

The .rgb files are raw row-major RGB bytes; the .json files are the
engine's canonical detection JSON (reference kernel path), which the
browser runtime must reproduce byte for byte.
"""

import json
from pathlib import Path

import numpy as np

from maskedge import ImageFrame, Shape, detect, detections_to_json, letterbox, plan, serialize_model
from maskedge.zoo import random_graph, single_shot_model

HERE = Path(__file__).parent


def write_single_shot():
    g = single_shot_model()
    (HERE / "single_shot.mef").write_bytes(serialize_model(g))

    px = np.zeros((32, 32, 3), np.uint8)
    px[16, 16] = 255
    (HERE / "frame_single_32x32.rgb").write_bytes(px.tobytes())

    p = plan(g, Shape(1, 3, 32, 32))
    dets = detect(ImageFrame(32, 32, px), g, p, conf_threshold=0.5, kernel_path="reference")
    (HERE / "expected_single.json").write_text(
        detections_to_json(dets, g.head.class_names)
    )
    return len(dets)


def write_rand(seed=3):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n_layers=12, in_hw=32)
    (HERE / "rand.mef").write_bytes(serialize_model(g))

    px = rng.integers(0, 256, (40, 48, 3), dtype=np.uint8)  # 48 wide, 40 tall
    (HERE / "frame_rand_48x40.rgb").write_bytes(px.tobytes())

    frame = ImageFrame(48, 40, px)
    tensor, _ = letterbox(frame, (32, 32))
    (HERE / "letterbox_rand.f32").write_bytes(
        np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()
    )

    p = plan(g, Shape(1, g.layers[0].params.c, 32, 32))
    dets = detect(frame, g, p, conf_threshold=0.05, kernel_path="reference")
    (HERE / "expected_rand.json").write_text(detections_to_json(dets, g.head.class_names))
    return len(dets)


def main():
    n1 = write_single_shot()
    n2 = write_rand()
    meta = {
        "single": {"frame": [32, 32], "conf": 0.5, "detections": n1},
        "rand": {"frame": [48, 40], "conf": 0.05, "detections": n2},
    }
    (HERE / "fixtures.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(json.dumps(meta))


if __name__ == "__main__":
    main()

"""End-to-end detection on a synthetic image, twice: once through the
library API and once through the CLI, showing the two agree.

Run from the repository root:

    python3 demos/02_detect_and_draw.py
"""

import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from maskedge import ImageFrame, Shape, detect, detections_to_json, plan, serialize_model
from maskedge.cli import main
from maskedge.zoo import single_shot_model


def run() -> None:
    graph = single_shot_model()

    # One bright pixel at (16, 16). The demo model samples exactly one
    # source pixel per head cell, so this lights up cell (1, 1) and
    # nothing else: a fully predictable detection.
    px = np.zeros((32, 32, 3), np.uint8)
    px[16, 16] = 255

    print("== library API ==")
    p = plan(graph, Shape(1, 3, 32, 32))
    dets = detect(ImageFrame(32, 32, px), graph, p, conf_threshold=0.5)
    print(detections_to_json(dets, graph.head.class_names))

    print("\n== CLI, same image on disk ==")
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        model = root / "model.mef"
        model.write_bytes(serialize_model(graph))
        img = root / "frame.png"
        Image.fromarray(px).save(img)
        out_dir = root / "annotated"

        code = main(["detect", "--model", str(model), "--conf", "0.5",
                     "--json", "--annotate-dir", str(out_dir), str(img)])
        assert code == 0, code
        print(f"\nannotated copy written to {out_dir / 'frame.annotated.png'}")
        print("(the box is (20, 20, 28, 28): cell center 24,24 with an 8x8 anchor)")


if __name__ == "__main__":
    run()

"""Walk through the converter: write a weight manifest plus raw blobs,
convert them to a single .mef file, then inspect the result.

Run from the repository root:

    python3 demos/01_build_convert_inspect.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from maskedge.cli import main


def write_manifest(root: Path) -> Path:
    rng = np.random.default_rng(7)
    blobs = {
        "stem_w": rng.standard_normal((8, 3, 3, 3)).astype("<f4"),
        "stem_b": rng.standard_normal(8).astype("<f4"),
        "bn_gamma": np.ones(8, "<f4"),
        "bn_beta": np.zeros(8, "<f4"),
        "bn_mean": np.zeros(8, "<f4"),
        "bn_var": np.ones(8, "<f4"),
        "head_w": rng.standard_normal((21, 8, 1, 1)).astype("<f4"),
        "head_b": rng.standard_normal(21).astype("<f4"),
    }
    for name, arr in blobs.items():
        (root / f"{name}.bin").write_bytes(arr.tobytes())

    manifest = {
        "input": {"name": "image", "c": 3, "h": 64, "w": 64},
        "blobs": {
            name: {"shape": list(arr.shape), "dtype": "f32", "file": f"{name}.bin"}
            for name, arr in blobs.items()
        },
        "layers": [
            {"name": "stem", "kind": "conv", "input": "image", "out_channels": 8,
             "kernel": [3, 3], "stride": [2, 2], "padding": [1, 1],
             "weights": "stem_w", "bias": "stem_b"},
            # batch norm folds into the conv above during conversion
            {"name": "bn", "kind": "batch_norm", "input": "stem",
             "gamma": "bn_gamma", "beta": "bn_beta",
             "mean": "bn_mean", "var": "bn_var", "eps": 1e-5},
            {"name": "act", "kind": "activate", "input": "bn", "activation": "relu6"},
            {"name": "pool", "kind": "max_pool", "input": "act",
             "kernel": [2, 2], "stride": [2, 2]},
            {"name": "head", "kind": "conv", "input": "pool", "out_channels": 21,
             "kernel": [1, 1], "stride": [1, 1], "padding": [0, 0],
             "weights": "head_w", "bias": "head_b"},
        ],
        "head": {
            "anchors": [[[10, 14], [23, 27], [37, 58]]],
            "strides": [4],
            "class_names": ["mask", "no_mask"],
            "outputs": ["head"],
        },
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def run() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        manifest = write_manifest(root)
        out = root / "demo.mef"

        print("== convert ==")
        code = main(["convert", str(manifest), str(out), "--json"])
        assert code == 0, code

        print("\n== inspect ==")
        code = main(["inspect", "--model", str(out)])
        assert code == 0, code

        print("\nNote: the batch_norm layer is gone; its statistics were")
        print("folded into the stem conv's weights and bias at convert time.")


if __name__ == "__main__":
    run()

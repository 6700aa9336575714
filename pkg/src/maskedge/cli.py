"""Command-line front door.

Subcommands: detect, bench, convert, eval, inspect. Exit codes: 0
success, 1 usage error, 2 data/model error. With --json, stdout is a
single machine-parseable JSON document.
"""

from __future__ import annotations

import json
import logging
import os
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from .errors import MaskEdgeError
from .executor import execute, plan, profiles_to_jsonl
from .metrics import GroundTruthBox, average_precision
from .model.convert import convert_manifest
from .model.format import parse_model, serialize_model
from .model.graph import infer_shapes
from .pipeline import (
    DEFAULT_CONF_THRESHOLD,
    DEFAULT_IOU_THRESHOLD,
    Detection,
    ImageFrame,
    detect,
    detections_to_json,
)
from .tensor import Shape, Tensor

log = logging.getLogger("maskedge")


def _setup_logging():
    level = os.environ.get("MASKEDGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _load_model(path: str):
    data = Path(path).read_bytes()
    graph = parse_model(data)
    log.info("loaded model %s (%d bytes, %d layers)", path, len(data), len(graph.layers))
    return graph, data


def _load_frame(path: str) -> ImageFrame:
    from PIL import Image

    img = Image.open(path).convert("RGB")
    pixels = np.asarray(img, dtype=np.uint8)
    return ImageFrame(width=img.width, height=img.height, pixels=pixels)


@click.group()
def cli():
    """Tiny YOLO-style detector runtime: run, convert, benchmark, score."""
    _setup_logging()


@cli.command("detect")
@click.option("--model", "model_path", required=True, help="MEF model file")
@click.argument("images", nargs=-1, required=True)
@click.option("--conf", default=DEFAULT_CONF_THRESHOLD, show_default=True)
@click.option("--iou", default=DEFAULT_IOU_THRESHOLD, show_default=True)
@click.option("--kernel", type=click.Choice(["reference", "optimized"]), default="optimized")
@click.option("--json", "json_out", is_flag=True, help="machine-parseable stdout")
@click.option("--annotate-dir", type=click.Path(), default=None,
              help="also write annotated image copies here")
def cmd_detect(model_path, images, conf, iou, kernel, json_out, annotate_dir):
    """Run detection on image files; emit detection JSON per image."""
    graph, _ = _load_model(model_path)
    inp = next(l for l in graph.layers if l.kind == "input").params
    exec_plan = plan(graph, Shape(1, inp.c, inp.h, inp.w))
    results = []
    for path in images:
        frame = _load_frame(path)
        dets = detect(frame, graph, exec_plan, conf, iou, kernel_path=kernel)
        det_json = detections_to_json(dets, graph.head.class_names)
        results.append((path, det_json))
        if annotate_dir:
            _write_annotated(path, frame, dets, graph.head.class_names, annotate_dir)
    if json_out:
        body = ",".join(
            '{"image":%s,"detections":%s}' % (json.dumps(p), d) for p, d in results
        )
        click.echo("[" + body + "]")
    else:
        for path, det_json in results:
            click.echo(f"{path}: {det_json}")


def _write_annotated(path, frame: ImageFrame, dets: list[Detection], class_names, out_dir):
    from PIL import Image, ImageDraw

    os.makedirs(out_dir, exist_ok=True)
    img = Image.fromarray(frame.pixels.copy())
    draw = ImageDraw.Draw(img)
    colors = {0: (0, 200, 0), 1: (220, 30, 30)}
    for d in dets:
        color = colors.get(d.class_id, (250, 180, 0))
        draw.rectangle(d.box, outline=color, width=2)
        name = class_names[d.class_id] if d.class_id < len(class_names) else str(d.class_id)
        draw.text((d.box[0] + 2, max(0, d.box[1] - 12)), f"{name} {d.confidence:.2f}", fill=color)
    out = Path(out_dir) / (Path(path).stem + ".annotated.png")
    img.save(out)
    log.info("wrote %s", out)


def _bench_one(graph, exec_plan, x, iterations, warmup, kernel, profile_layers, threads):
    for _ in range(warmup):
        execute(graph, exec_plan, x, kernel_path=kernel)
    per_layer: dict[int, float] = {}
    t0 = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(
                lambda _: execute(graph, exec_plan, x, kernel_path=kernel),
                range(iterations),
            ))
    else:
        for _ in range(iterations):
            _, profs = execute(
                graph, exec_plan, x, profile=profile_layers, kernel_path=kernel
            )
            for p in profs:
                per_layer[p.layer_id] = per_layer.get(p.layer_id, 0.0) + p.micros
    total = time.perf_counter() - t0
    return {
        "kernel_path": kernel,
        "frames_processed": iterations,
        "total_seconds": total,
        "fps": iterations / total,
        "ms_per_frame": 1000.0 * total / iterations,
        "per_layer_micros": {str(k): v for k, v in sorted(per_layer.items())},
        "peak_arena_bytes": exec_plan.arena_size,
        "threads": threads,
    }


@cli.command("bench")
@click.option("--model", "model_path", required=True)
@click.option("--size", default=None, type=int, help="override square input size")
@click.option("--iterations", default=20, show_default=True)
@click.option("--warmup", default=5, show_default=True)
@click.option("--kernel", type=click.Choice(["reference", "optimized", "both"]), default="both")
@click.option("--seed", default=0, show_default=True, help="seed for the fixed input tensor")
@click.option("--threads", default=1, show_default=True)
@click.option("--profile-layers", is_flag=True, help="include per-layer timings")
@click.option("--json", "json_out", is_flag=True)
def cmd_bench(model_path, size, iterations, warmup, kernel, seed, threads, profile_layers, json_out):
    """Benchmark inference FPS; image decode time is excluded (the input
    is a fixed seeded random tensor reused across iterations)."""
    if iterations < 1:
        raise click.UsageError("--iterations must be >= 1")
    graph, _ = _load_model(model_path)
    inp = next(l for l in graph.layers if l.kind == "input").params
    if size is not None and size != inp.h:
        raise click.UsageError(
            f"--size {size} does not match the model's fixed input {inp.w}x{inp.h}"
        )
    shape = Shape(1, inp.c, inp.h, inp.w)
    exec_plan = plan(graph, shape)
    rng = np.random.default_rng(seed)
    x = Tensor(rng.random((1, inp.c, inp.h, inp.w), dtype=np.float32))

    paths = ["reference", "optimized"] if kernel == "both" else [kernel]
    reports = [
        _bench_one(graph, exec_plan, x, iterations, warmup, k, profile_layers, threads)
        for k in paths
    ]
    out = {"model": model_path, "input_shape": list(shape.as_tuple()),
           "note": "image decode excluded; inference pipeline only",
           "reports": reports}
    if len(reports) == 2:
        out["speedup_optimized_over_reference"] = (
            reports[0]["ms_per_frame"] / reports[1]["ms_per_frame"]
        )
    if json_out:
        click.echo(json.dumps(out, indent=2))
    else:
        for r in reports:
            click.echo(
                f"{r['kernel_path']:>9}: {r['fps']:8.2f} FPS  "
                f"({r['ms_per_frame']:.2f} ms/frame, arena {r['peak_arena_bytes']} B)"
            )
        if "speedup_optimized_over_reference" in out:
            click.echo(f"speedup (optimized/reference): "
                       f"{out['speedup_optimized_over_reference']:.2f}x")


@cli.command("convert")
@click.argument("manifest_path")
@click.argument("output_path")
@click.option("--json", "json_out", is_flag=True)
def cmd_convert(manifest_path, output_path, json_out):
    """Convert a JSON weight manifest (+ raw blob files) to a MEF file."""
    mpath = Path(manifest_path)
    manifest = json.loads(mpath.read_text())
    blobs = {}
    for name, decl in manifest.get("blobs", {}).items():
        fname = decl.get("file", name + ".bin")
        blobs[name] = (mpath.parent / fname).read_bytes()
    graph = convert_manifest(manifest, blobs)
    data = serialize_model(graph)
    Path(output_path).write_bytes(data)
    sections = _section_breakdown(data)
    raw = graph.weight_bytes()
    info = {
        "output": output_path,
        "file_bytes": len(data),
        "raw_weight_bytes": raw,
        "overhead_percent": 100.0 * (len(data) - raw) / raw if raw else None,
        "sections": sections,
    }
    if json_out:
        click.echo(json.dumps(info, indent=2))
    else:
        click.echo(f"wrote {output_path}: {len(data)} bytes "
                   f"({raw} weight bytes, "
                   f"{info['overhead_percent']:.2f}% container overhead)"
                   if raw else f"wrote {output_path}: {len(data)} bytes")
        for k, v in sections.items():
            click.echo(f"  {k:>10}: {v} bytes")


def _section_breakdown(data: bytes) -> dict[str, int]:
    import struct

    out = {"header": 8}
    pos = 8
    for name, wide in (("metadata", False), ("graph", False), ("head", False), ("weights", True)):
        if wide:
            (length,) = struct.unpack_from("<Q", data, pos)
            pos += 8
        else:
            (length,) = struct.unpack_from("<I", data, pos)
            pos += 4
        out[name] = length
        pos += length
    return out


@cli.command("eval")
@click.argument("detections_path")
@click.argument("truth_path")
@click.option("--iou", "iou_threshold", default=0.5, show_default=True)
@click.option("--json", "json_out", is_flag=True)
def cmd_eval(detections_path, truth_path, iou_threshold, json_out):
    """Score a detections JSONL file against a ground-truth JSONL file.

    Truth lines: {"image": id, "boxes": [{"class_id": n, "box": [x1,y1,x2,y2]}]}.
    Detection lines: {"image": id, "detections": [<detection schema>]}.
    """
    truth_by_image = {}
    for lineno, line in _jsonl(truth_path):
        try:
            boxes = [
                GroundTruthBox(class_id=int(b["class_id"]), box=tuple(map(float, b["box"])))
                for b in line["boxes"]
            ]
            truth_by_image[line["image"]] = boxes
        except (KeyError, TypeError, ValueError) as exc:
            raise MaskEdgeError(f"{truth_path}:{lineno}: bad ground-truth record: {exc}")
    dets_by_image = {img: [] for img in truth_by_image}
    for lineno, line in _jsonl(detections_path):
        try:
            dets = [
                Detection(
                    class_id=int(d["class_id"]),
                    confidence=float(d["confidence"]),
                    box=tuple(map(float, d["box"])),
                )
                for d in line["detections"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise MaskEdgeError(f"{detections_path}:{lineno}: bad detection record: {exc}")
        if line.get("image") in dets_by_image:
            dets_by_image[line["image"]] = dets
    images = sorted(truth_by_image)
    ap, mean = average_precision(
        [dets_by_image[i] for i in images],
        [truth_by_image[i] for i in images],
        iou_threshold,
    )
    out = {"iou_threshold": iou_threshold,
           "per_class_ap": {str(k): v for k, v in ap.items()}, "map": mean}
    if json_out:
        click.echo(json.dumps(out, indent=2))
    else:
        for k, v in ap.items():
            click.echo(f"AP class {k}: {v:.4f}")
        click.echo(f"mAP@{iou_threshold}: {mean:.4f}")


def _jsonl(path):
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            yield lineno, json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MaskEdgeError(f"{path}:{lineno}: invalid JSON: {exc}")


@cli.command("inspect")
@click.option("--model", "model_path", required=True)
@click.option("--json", "json_out", is_flag=True)
def cmd_inspect(model_path, json_out):
    """Print the model's layer table, shapes, and size breakdown."""
    graph, data = _load_model(model_path)
    shapes = infer_shapes(graph)
    sections = _section_breakdown(data)
    raw = graph.weight_bytes()
    rows = []
    for layer in graph.layers:
        blob = graph.weights.get(layer.id)
        rows.append({
            "id": layer.id,
            "kind": layer.kind,
            "output_shape": list(shapes[layer.id].as_tuple()),
            "inputs": list(layer.inputs),
            "params": int(blob.size) if blob is not None else 0,
        })
    out = {
        "file_bytes": len(data),
        "raw_weight_bytes": raw,
        "overhead_percent": 100.0 * (len(data) - raw) / raw if raw else None,
        "sections": sections,
        "parameter_count": sum(r["params"] for r in rows),
        "classes": list(graph.head.class_names),
        "strides": list(graph.head.strides),
        "output_layers": graph.outputs,
        "layers": rows,
    }
    if json_out:
        click.echo(json.dumps(out, indent=2))
    else:
        click.echo(f"{model_path}: {len(data)} bytes, "
                   f"{out['parameter_count']} parameters, "
                   f"classes {out['classes']}, strides {out['strides']}")
        for k, v in sections.items():
            click.echo(f"  section {k:>10}: {v} bytes")
        click.echo(f"  {'id':>4} {'kind':>9} {'output':>20} {'params':>9}  inputs")
        for r in rows:
            click.echo(
                f"  {r['id']:>4} {r['kind']:>9} {str(r['output_shape']):>20} "
                f"{r['params']:>9}  {r['inputs']}"
            )


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (MaskEdgeError, OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())

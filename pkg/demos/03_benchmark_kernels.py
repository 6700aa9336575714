"""Compare the two convolution kernel paths on the bundled
detector-shaped graph and print a small report.

Run from the repository root:

    python3 demos/03_benchmark_kernels.py
"""

import time

import numpy as np

from maskedge import Shape, Tensor, execute, plan
from maskedge.zoo import parameter_count, yolo_fastest_shaped


def time_path(graph, p, x, path, iters):
    execute(graph, p, x, kernel_path=path)  # warmup
    t0 = time.perf_counter()
    for _ in range(iters):
        execute(graph, p, x, kernel_path=path)
    return (time.perf_counter() - t0) / iters


def run() -> None:
    graph = yolo_fastest_shaped()
    print(f"graph: {len(graph.layers)} layers, {parameter_count(graph):,} parameters")

    p = plan(graph, Shape(1, 3, 320, 320))
    print(f"arena: {p.arena_size:,} bytes across {len(p.slot_sizes)} slots")

    x = Tensor(np.random.default_rng(0).random((1, 3, 320, 320), dtype=np.float32))

    opt = time_path(graph, p, x, "optimized", iters=5)
    print(f"optimized: {opt * 1000:7.1f} ms/frame  ({1 / opt:5.1f} fps)")

    ref = time_path(graph, p, x, "reference", iters=1)
    print(f"reference: {ref * 1000:7.1f} ms/frame  ({1 / ref:5.1f} fps)")
    print(f"speedup:   {ref / opt:.1f}x")

    # The two paths are interchangeable numerically, not just in shape.
    out_a, _ = execute(graph, p, x, kernel_path="optimized")
    out_b, _ = execute(graph, p, x, kernel_path="reference")
    worst = max(
        float(np.max(np.abs(a.data.astype(np.float64) - b.data.astype(np.float64))))
        for a, b in zip(out_a, out_b)
    )
    print(f"largest head-output difference between paths: {worst:.2e}")


if __name__ == "__main__":
    run()

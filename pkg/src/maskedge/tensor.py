"""Dense 4-D float32 tensor in NCHW layout.

Every value passed between layers is one of these. Data is a flat
row-major float32 buffer (w fastest); tensors are frozen after
construction so they can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllocationError, ShapeError

# Guards against malformed model files requesting huge buffers.
ELEMENT_CAP = 2**28


@dataclass(frozen=True)
class Shape:
    n: int
    c: int
    h: int
    w: int

    def __post_init__(self):
        for name in ("n", "c", "h", "w"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ShapeError(f"shape dimension {name}={v!r} must be a positive integer")

    @property
    def numel(self) -> int:
        return self.n * self.c * self.h * self.w

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.n, self.c, self.h, self.w)


class Tensor:
    """Immutable float32 NCHW tensor backed by a numpy array."""

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        if data.ndim != 4:
            raise ShapeError(f"tensor data must be 4-D, got ndim={data.ndim}")
        if any(d < 1 for d in data.shape):
            raise ShapeError(f"tensor dims must be >= 1, got {data.shape}")
        if data.size > ELEMENT_CAP:
            raise AllocationError(
                f"tensor with {data.size} elements exceeds the cap of {ELEMENT_CAP} (2^28)"
            )
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if arr is data:
            arr = arr.view()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Tensor is immutable")

    @property
    def shape(self) -> Shape:
        n, c, h, w = self.data.shape
        return Shape(n, c, h, w)

    @property
    def nbytes(self) -> int:
        return self.data.size * 4

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def tensor_new(shape: Shape | tuple[int, int, int, int], fill: float = 0.0) -> Tensor:
    """Tensor of the given shape with every element equal to ``fill``."""
    if not isinstance(shape, Shape):
        shape = Shape(*shape)
    if shape.numel > ELEMENT_CAP:
        raise AllocationError(
            f"shape {shape.as_tuple()} has {shape.numel} elements, "
            f"exceeding the cap of {ELEMENT_CAP} (2^28)"
        )
    return Tensor(np.full(shape.as_tuple(), np.float32(fill), dtype=np.float32))


def from_array(arr: np.ndarray) -> Tensor:
    return Tensor(np.asarray(arr, dtype=np.float32))


def tensor_allclose(a: Tensor, b: Tensor, rel_tol: float = 1e-5, abs_tol: float = 1e-7) -> bool:
    """True iff shapes match and |x - y| <= abs_tol + rel_tol * |y| elementwise."""
    if a.data.shape != b.data.shape:
        return False
    x = a.data.astype(np.float64)
    y = b.data.astype(np.float64)
    return bool(np.all(np.abs(x - y) <= abs_tol + rel_tol * np.abs(y)))


def flat_index(shape: Shape, n: int, c: int, h: int, w: int) -> int:
    """Row-major NCHW offset of element (n, c, h, w)."""
    return ((n * shape.c + c) * shape.h + h) * shape.w + w

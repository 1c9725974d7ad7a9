"""Dense array substrate: patch extraction and the on-disk tensor format.

Arrays are plain ``numpy.ndarray`` objects in float64. Patches are flattened
row-major over (height, width, depth), which is what ``reshape`` gives for a
C-contiguous ``(h, w, D)`` block.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when array extents do not fit an operation."""


@dataclass(frozen=True)
class PatchGrid:
    """Patches of an image laid out on their spatial grid.

    ``patches`` has shape ``(P_h, P_w, h*w*D)`` for a single image, or
    ``(B, P_h, P_w, h*w*D)`` when extracted from a batch.
    """

    patches: np.ndarray
    height: int
    width: int
    depth: int
    h: int
    w: int
    stride: int

    @property
    def grid_shape(self) -> tuple[int, int]:
        return output_extent(self.height, self.h, self.stride), output_extent(self.width, self.w, self.stride)

    @property
    def dim(self) -> int:
        return self.h * self.w * self.depth


def output_extent(size: int, window: int, stride: int) -> int:
    return (size - window) // stride + 1


def as_tensor(x) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if arr.ndim and 0 in arr.shape:
        raise ShapeError(f"all extents must be >= 1, got shape {arr.shape}")
    return arr


def extract_patches(image, h: int, w: int, stride: int = 1) -> PatchGrid:
    """Cut ``h x w`` patches with the given stride out of an ``H x W x D`` image.

    A leading batch axis is accepted: ``(B, H, W, D)`` yields patches of
    shape ``(B, P_h, P_w, h*w*D)``.
    """
    x = np.asarray(image, dtype=DTYPE)
    if x.ndim not in (3, 4):
        raise ShapeError(f"expected an H x W x D image (optionally batched), got shape {x.shape}")
    H, W, D = x.shape[-3:]
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if h < 1 or w < 1 or h > H or w > W:
        raise ShapeError(f"patch {h}x{w} does not fit input {H}x{W}")
    ax = (x.ndim - 3, x.ndim - 2)
    # (..., P_h', P_w', D, h, w) before striding
    win = sliding_window_view(x, (h, w), axis=ax)[..., ::stride, ::stride, :, :, :]
    win = np.moveaxis(win, -3, -1)  # (..., P_h, P_w, h, w, D)
    flat = win.reshape(win.shape[:-3] + (h * w * D,))
    return PatchGrid(np.ascontiguousarray(flat), H, W, D, h, w, stride)


def save_tensor(path, array) -> None:
    """Write ``shape: d1 ... dk`` followed by little-endian float64 data."""
    arr = np.ascontiguousarray(array, dtype="<f8")
    header = "shape: " + " ".join(str(s) for s in arr.shape) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(arr.tobytes(order="C"))


def load_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0 or not raw.startswith(b"shape:"):
        raise ShapeError(f"{path}: missing 'shape:' header")
    shape = tuple(int(tok) for tok in raw[6:nl].split())
    body = raw[nl + 1:]
    expected = int(np.prod(shape, dtype=np.int64)) * 8
    if len(body) != expected:
        raise ShapeError(f"{path}: header declares {shape} ({expected} bytes) but body has {len(body)} bytes")
    return np.frombuffer(body, dtype="<f8").reshape(shape).astype(DTYPE)

from functools import reduce

import numpy as np
from scipy import ndimage

from delineo.core import BinaryMask, MarginVector
from delineo.core.errors import GeometryError
from delineo.core.typing import *
from delineo.core.utils import same_grid, wrap_mask
from .structuring import build_structuring_offsets, StructuringOffsets

# 6-neighborhood: the element for smoothing, hole filling and surface extraction
SIX_NEIGHBORHOOD = ndimage.generate_binary_structure(3, 1)


def _sweep(src: BoolArray, offsets: StructuringOffsets) -> Tuple[BoolArray, np.ndarray]:
    """
    Minkowski sum of `src` with `offsets` on an unclipped canvas. Returns the canvas and the displacement of
    its [0, 0, 0] corner relative to src[0, 0, 0].

    Each x-run of the element is applied as one x-dilated copy of `src` shifted in y and z.
    """
    lo, hi = offsets.extents()
    span = hi - lo
    nx, ny, nz = src.shape
    lines = {}
    canvas = np.zeros((nx + span[0], ny + span[1], nz + span[2]), dtype=bool)
    for dj, dk, a, b in offsets.x_runs():
        if (a, b) not in lines:
            line = np.zeros((nx + span[0], ny, nz), dtype=bool)
            for di in range(a, b + 1):
                start = di - lo[0]
                line[start:start + nx] |= src
            lines[(a, b)] = line
        sj, sk = dj - lo[1], dk - lo[2]
        canvas[:, sj:sj + ny, sk:sk + nz] |= lines[(a, b)]
    return canvas, lo


def dilate(mask: BinaryMask, margin: MarginVector) -> BinaryMask:
    """
    Anisotropic Minkowski dilation by the octant-ellipsoid of `margin`, clipped to the grid
    """
    box = mask.bounding_box()
    if box is None:
        return mask
    (i0, j0, k0), (i1, j1, k1) = box
    room = [(hi, n - 1 - lo) for lo, hi, n in zip(box[0], box[1], mask.grid.dims)]
    offsets = build_structuring_offsets(margin, mask.grid.spacing, limit=room)
    if offsets.is_identity():
        return mask
    canvas, lo = _sweep(mask.array[i0:i1 + 1, j0:j1 + 1, k0:k1 + 1], offsets)

    out = mask.array.copy()
    dst, src = [], []
    for axis, start in enumerate((i0, j0, k0)):
        first = start + int(lo[axis])
        low = max(first, 0)
        high = min(first + canvas.shape[axis], mask.grid.dims[axis])
        dst.append(slice(low, high))
        src.append(slice(low - first, high - first))
    out[tuple(dst)] |= canvas[tuple(src)]
    return BinaryMask(mask.grid, out)


@wrap_mask
@same_grid
def union(masks: Sequence[BinaryMask]):
    masks = list(masks)
    if not masks:
        raise GeometryError("union needs at least one mask")
    return reduce(np.logical_or, (m.array for m in masks))


def subtract(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    return a - b


def intersect(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    return a & b


@wrap_mask
def fill_holes(mask: BinaryMask):
    """
    Set every background component that is not 6-connected to the grid boundary
    """
    return ndimage.binary_fill_holes(mask.array, structure=SIX_NEIGHBORHOOD)


@wrap_mask
def smooth(mask: BinaryMask):
    """
    Closing then opening with the 6-neighborhood. Space outside the grid counts as background; one voxel of
    padding keeps the closing from being truncated at the grid faces.
    """
    padded = np.pad(mask.array, 1)
    closed = ndimage.binary_erosion(ndimage.binary_dilation(padded, SIX_NEIGHBORHOOD), SIX_NEIGHBORHOOD)
    opened = ndimage.binary_dilation(ndimage.binary_erosion(closed, SIX_NEIGHBORHOOD), SIX_NEIGHBORHOOD)
    return opened[1:-1, 1:-1, 1:-1]


@wrap_mask
def surface_voxels(mask: BinaryMask):
    """
    Set voxels with at least one 6-neighbor that is background or outside the grid
    """
    interior = ndimage.binary_erosion(mask.array, SIX_NEIGHBORHOOD, border_value=0)
    return mask.array & ~interior

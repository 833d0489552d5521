"""
Brute-force reference for target construction. Deliberately shares no code with delineo.geometry: offsets
are enumerated with a separate membership test and applied one shifted copy at a time.
"""
import numpy as np

from delineo.core import BinaryMask, MarginVector
from delineo.core.typing import *
from delineo.core.utils import same_grid

TOLERANCE = 1e-9


def minkowski_offsets(margin: MarginVector, spacing: Sequence[float],
                      dims: Optional[Sequence[int]] = None) -> List[Index3]:
    """
    Every (di, dj, dk) inside the octant ellipsoid, di slowest. With `dims`, displacements of a grid length
    or more are left out.
    """
    values = margin.as_tuple()
    bounds = [(int(values[2 * a] / spacing[a]) + 2, int(values[2 * a + 1] / spacing[a]) + 2) for a in range(3)]
    if dims is not None:
        bounds = [(min(neg, n - 1), min(pos, n - 1)) for (neg, pos), n in zip(bounds, dims)]
    box = np.mgrid[-bounds[0][0]:bounds[0][1] + 1, -bounds[1][0]:bounds[1][1] + 1, -bounds[2][0]:bounds[2][1] + 1]
    d = box.reshape(3, -1).T
    total = np.zeros(len(d))
    for a in range(3):
        m = np.where(d[:, a] > 0, values[2 * a + 1], values[2 * a])
        reach = np.divide(d[:, a] * spacing[a], m, out=np.full(len(d), np.inf), where=m != 0)
        total = total + np.where(d[:, a] == 0, 0.0, reach ** 2)
    return [tuple(int(c) for c in row) for row in d[total <= 1.0 + TOLERANCE]]


def _shift(array: np.ndarray, offset: Sequence[int]) -> np.ndarray:
    """
    out[p + offset] = array[p], dropping whatever leaves the grid
    """
    out = np.zeros_like(array)
    dst, src = [], []
    for d, n in zip(offset, array.shape):
        if abs(d) >= n:
            return out
        dst.append(slice(max(d, 0), n + min(d, 0)))
        src.append(slice(max(-d, 0), n - max(d, 0)))
    out[tuple(dst)] = array[tuple(src)]
    return out


def brute_force_dilate(mask: BinaryMask, margin: MarginVector) -> BinaryMask:
    out = np.zeros(mask.grid.dims, dtype=bool)
    for offset in minkowski_offsets(margin, mask.grid.spacing, mask.grid.dims):
        out |= _shift(mask.array, offset)
    return BinaryMask(mask.grid, out)


@same_grid
def oracle_targets(gtv: BinaryMask, oars: Sequence[BinaryMask], m_ctv: MarginVector,
                   m_ptv: MarginVector) -> Tuple[BinaryMask, BinaryMask]:
    """
    CTV = (GTV dilated by m_ctv) minus every OAR, PTV = CTV dilated by m_ptv
    """
    excluded = np.zeros(gtv.grid.dims, dtype=bool)
    for oar in oars:
        excluded |= oar.array
    ctv = BinaryMask(gtv.grid, brute_force_dilate(gtv, m_ctv).array & ~excluded)
    return ctv, brute_force_dilate(ctv, m_ptv)

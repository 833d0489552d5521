import math
from dataclasses import dataclass

import numpy as np

from delineo.core import MarginVector
from delineo.core.typing import *

# slack on the unit-ellipsoid test so that offsets lying exactly on the margin survive float rounding
MEMBERSHIP_TOLERANCE = 1e-9


def axis_terms(d: Union[int, np.ndarray], step: float, neg: float, pos: float) -> np.ndarray:
    """
    Contribution of one axis to the octant-ellipsoid test, elementwise over displacements `d`. A zero margin on
    the side of a displacement admits only d == 0.
    """
    d = np.asarray(d, dtype=np.int64)
    m = np.where(d > 0, float(pos), float(neg))
    safe = np.where(m > 0, m, 1.0)
    terms = np.where(m > 0, (d * step / safe) ** 2, np.inf)
    return np.where(d == 0, 0.0, terms)


def admits(offset: Sequence[int], margin: MarginVector, spacing: Sequence[float]) -> bool:
    """
    Octant-wise ellipsoid membership. Swapping this predicate for a per-axis box test would turn every
    dilation into independent axis expansions.
    """
    total = 0.0
    for axis, (d, step) in enumerate(zip(offset, spacing)):
        total = total + float(axis_terms(d, step, *margin.axis(axis)))
    return total <= 1.0 + MEMBERSHIP_TOLERANCE


@dataclass(frozen=True)
class StructuringOffsets:
    """
    Integer voxel displacements of a structuring element, (n, 3) in x-fastest order and always containing
    (0, 0, 0)
    """

    offsets: np.ndarray

    def __len__(self):
        return len(self.offsets)

    def as_set(self) -> set:
        return {tuple(int(c) for c in row) for row in self.offsets}

    def is_identity(self) -> bool:
        return len(self.offsets) == 1

    def extents(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        (lowest, highest) displacement per axis
        """
        return self.offsets.min(axis=0), self.offsets.max(axis=0)

    def x_runs(self) -> List[Tuple[int, int, int, int]]:
        """
        (dj, dk, first di, last di) for every line of offsets along x. The element is convex along every axis
        line, so each line is one contiguous run.
        """
        rows = self.offsets[np.lexsort((self.offsets[:, 0], self.offsets[:, 1], self.offsets[:, 2]))]
        keys = rows[:, 1:]
        starts = np.flatnonzero(np.r_[True, np.any(keys[1:] != keys[:-1], axis=1)])
        ends = np.r_[starts[1:], len(rows)] - 1
        first, last = rows[starts, 0], rows[ends, 0]
        assert np.array_equal(last - first, ends - starts), "x-runs of the structuring element are not contiguous"
        return [(int(j), int(k), int(a), int(b))
                for j, k, a, b in zip(rows[starts, 1], rows[starts, 2], first, last)]


def _reach(mm: float, step: float) -> int:
    # one voxel past ceil() so rounding in mm / step can never hide a member
    return int(math.ceil(mm / step)) + 1 if mm > 0 else 0


def build_structuring_offsets(margin: MarginVector, spacing: Sequence[float],
                              limit: Optional[Sequence[Tuple[int, int]]] = None) -> StructuringOffsets:
    """
    Every offset `admits` accepts. `limit` caps the (negative, positive) reach per axis in voxels; dilation
    passes the room between the mask and the grid edges, since a longer displacement never lands on the grid.

    Example:
            offsets = build_structuring_offsets(MarginVector.isotropic(5.0), (1.0, 1.0, 2.5),
                                                limit=[(63, 63), (63, 63), (31, 31)])
    """
    spacing = tuple(float(s) for s in spacing)
    assert len(spacing) == 3 and all(s > 0 for s in spacing), f"spacing must be three positive lengths, got {spacing}"
    axes, terms = [], []
    for axis in range(3):
        neg, pos = margin.axis(axis)
        low, high = _reach(neg, spacing[axis]), _reach(pos, spacing[axis])
        if limit is not None:
            low, high = min(low, int(limit[axis][0])), min(high, int(limit[axis][1]))
        d = np.arange(-low, high + 1, dtype=np.int64)
        axes.append(d)
        terms.append(axis_terms(d, spacing[axis], neg, pos))
    total = terms[0][:, None, None] + terms[1][None, :, None] + terms[2][None, None, :]
    i, j, k = np.nonzero((total <= 1.0 + MEMBERSHIP_TOLERANCE).transpose(2, 1, 0))[::-1]
    return StructuringOffsets(np.stack([axes[0][i], axes[1][j], axes[2][k]], axis=1).reshape(-1, 3))

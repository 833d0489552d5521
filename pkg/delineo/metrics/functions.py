import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from delineo.core import BinaryMask
from delineo.core.errors import MetricError
from delineo.core.typing import *
from delineo.core.utils import same_grid
from delineo.geometry import surface_voxels
from delineo.plan import Plan, canonical_keys


def _overlap(a: BinaryMask, b: BinaryMask) -> int:
    return int(np.count_nonzero(a.array & b.array))


@same_grid
def dsc(a: BinaryMask, b: BinaryMask) -> float:
    """
    Dice similarity 2|a & b| / (|a| + |b|); 1.0 when both masks are empty
    """
    total = a.voxel_count() + b.voxel_count()
    if total == 0:
        return 1.0
    return 2 * _overlap(a, b) / total


@same_grid
def sensitivity(pred: BinaryMask, gt: BinaryMask) -> float:
    n = gt.voxel_count()
    if n == 0:
        raise MetricError("sensitivity is undefined for an empty ground truth")
    return _overlap(pred, gt) / n


@same_grid
def precision(pred: BinaryMask, gt: BinaryMask) -> float:
    n = pred.voxel_count()
    if n == 0:
        raise MetricError("precision is undefined for an empty prediction")
    return _overlap(pred, gt) / n


def _directed_surface_distances(src: np.ndarray, dst: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """
    Distance (mm) from every set voxel of `src` to the nearest set voxel of `dst`
    """
    both = src | dst
    lo = [int(np.flatnonzero(both.any(axis=tuple(a for a in range(3) if a != axis)))[0]) for axis in range(3)]
    hi = [int(np.flatnonzero(both.any(axis=tuple(a for a in range(3) if a != axis)))[-1]) + 1 for axis in range(3)]
    crop = tuple(slice(l, h) for l, h in zip(lo, hi))
    distance = ndimage.distance_transform_edt(~dst[crop], sampling=spacing)
    return distance[src[crop]]


@same_grid
def msd(a: BinaryMask, b: BinaryMask) -> float:
    """
    Symmetric mean surface distance in mm: the mean of the two directed means over 6-connected surface voxels,
    measured center to center with the grid spacing.

    Example:
            msd(a, a)  # 0.0
    """
    if a.is_empty() or b.is_empty():
        raise MetricError("surface distance is undefined when a mask is empty")
    sa, sb = surface_voxels(a).array, surface_voxels(b).array
    spacing = a.grid.spacing
    ab = _directed_surface_distances(sa, sb, spacing).mean()
    ba = _directed_surface_distances(sb, sa, spacing).mean()
    return float((ab + ba) / 2)


def matched_calls(generated: Plan, reference: Plan, initial_rois: Sequence[str] = ('GTV',)) -> Tuple[int, int, int]:
    """
    (calls in `generated`, calls in `reference`, size of the multiset intersection of their canonical keys)
    """
    g = Counter(canonical_keys(generated, initial_rois))
    r = Counter(canonical_keys(reference, initial_rois))
    return sum(g.values()), sum(r.values()), sum((g & r).values())


def tool_call_f1(generated: Plan, reference: Plan, initial_rois: Sequence[str] = ('GTV',)) -> float:
    """
    F1 between the multisets of canonical call keys of two plans
    """
    n_generated, n_reference, hits = matched_calls(generated, reference, initial_rois)
    if hits == 0:
        return 0.0
    p = hits / n_generated
    rec = hits / n_reference
    return 2 * p * rec / (p + rec)


@dataclass(frozen=True)
class TargetMetrics:
    target: str
    dsc: float
    msd_mm: float
    sensitivity: float
    precision: float

    def to_dict(self) -> dict:
        return {'target': self.target, 'dsc': self.dsc, 'msd_mm': self.msd_mm, 'sensitivity': self.sensitivity,
                'precision': self.precision}


@dataclass(frozen=True)
class CaseMetrics:
    case_id: str
    targets: Tuple[TargetMetrics, ...] = ()
    tool_call_f1: Optional[float] = None
    errors: Mapping[str, str] = field(default_factory=dict)

    def rows(self) -> List[dict]:
        rows = [{'case_id': self.case_id, **t.to_dict(), 'tool_call_f1': self.tool_call_f1, 'error': ''}
                for t in self.targets]
        rows += [{'case_id': self.case_id, 'target': target, 'dsc': math.nan, 'msd_mm': math.nan,
                  'sensitivity': math.nan, 'precision': math.nan, 'tool_call_f1': self.tool_call_f1,
                  'error': message} for target, message in self.errors.items()]
        return rows


def evaluate_target(target: str, pred: BinaryMask, gt: BinaryMask) -> TargetMetrics:
    """
    All volumetric metrics of one target. Metrics undefined for empty masks come back as NaN.
    """
    return TargetMetrics(
        target=target,
        dsc=dsc(pred, gt),
        msd_mm=msd(pred, gt) if not (pred.is_empty() or gt.is_empty()) else math.nan,
        sensitivity=sensitivity(pred, gt) if not gt.is_empty() else math.nan,
        precision=precision(pred, gt) if not pred.is_empty() else math.nan,
    )

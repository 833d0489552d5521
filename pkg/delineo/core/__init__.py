import math
from dataclasses import dataclass

import numpy as np

from delineo.core.typing import *
from .errors import GridError, MaskConstructionError, MarginError, GridMismatchError
from .utils import same_grid, wrap_mask

AXIS_CONVENTION = 'LPS'
MARGIN_FIELDS = ('x_neg', 'x_pos', 'y_neg', 'y_pos', 'z_neg', 'z_pos')


def _triple(values, name: str) -> tuple:
    values = tuple(values)
    if len(values) != 3:
        raise GridError(f"{name} needs exactly three components, got {values}")
    return values


@dataclass(frozen=True)
class Grid:
    """
    Axis-aligned voxel lattice in LPS patient coordinates. There is no direction matrix: voxel (i, j, k)
    has its center at origin + (i, j, k) * spacing, in millimeters.

    Example:
            grid = Grid((96, 96, 64), (1.5, 1.5, 3.0))
            grid.linear_index(1, 0, 0)  # == 1, x runs fastest
    """

    dims: Index3
    spacing: Vector3
    origin: Vector3 = (0.0, 0.0, 0.0)
    axis_convention: str = AXIS_CONVENTION

    def __post_init__(self):
        dims = _triple(self.dims, 'dims')
        if any(int(d) != d or d < 1 for d in dims):
            raise GridError(f"dims must be positive integers, got {dims}")
        spacing = tuple(float(s) for s in _triple(self.spacing, 'spacing'))
        if any(not math.isfinite(s) or s <= 0 for s in spacing):
            raise GridError(f"spacing must be positive, got {spacing}")
        origin = tuple(float(o) for o in _triple(self.origin, 'origin'))
        if any(not math.isfinite(o) for o in origin):
            raise GridError(f"origin must be finite, got {origin}")
        if self.axis_convention != AXIS_CONVENTION:
            raise GridError(f"only axis-aligned {AXIS_CONVENTION} grids are supported, got {self.axis_convention!r}")
        object.__setattr__(self, 'dims', tuple(int(d) for d in dims))
        object.__setattr__(self, 'spacing', spacing)
        object.__setattr__(self, 'origin', origin)

    @property
    def size(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def contains(self, index: Sequence[int]) -> bool:
        return len(index) == 3 and all(0 <= int(c) < n for c, n in zip(index, self.dims))

    def linear_index(self, i: int, j: int, k: int) -> int:
        nx, ny, _ = self.dims
        return i + nx * (j + ny * k)

    def unravel(self, index: int) -> Index3:
        nx, ny, _ = self.dims
        i, rest = index % nx, index // nx
        return i, rest % ny, rest // ny

    def centers(self, axis: int) -> np.ndarray:
        """
        Physical coordinates (mm) of the voxel centers along `axis`
        """
        return self.origin[axis] + np.arange(self.dims[axis]) * self.spacing[axis]

    def to_dict(self) -> dict:
        return {'dims': list(self.dims), 'spacing': list(self.spacing), 'origin': list(self.origin)}

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> 'Grid':
        return Grid(dims=data['dims'], spacing=data['spacing'], origin=data.get('origin', (0.0, 0.0, 0.0)),
                    axis_convention=data.get('axis_convention', AXIS_CONVENTION))


@dataclass(frozen=True)
class MarginVector:
    """
    Six non-negative expansions in mm, one per signed axis direction. Under LPS, x_neg/x_pos point
    right/left, y_neg/y_pos anterior/posterior and z_neg/z_pos inferior/superior.
    """

    x_neg: float = 0.0
    x_pos: float = 0.0
    y_neg: float = 0.0
    y_pos: float = 0.0
    z_neg: float = 0.0
    z_pos: float = 0.0

    def __post_init__(self):
        for name in MARGIN_FIELDS:
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise MarginError(f"margin component {name} must be a non-negative length, got {value}")
            object.__setattr__(self, name, value)

    @staticmethod
    def isotropic(mm: float) -> 'MarginVector':
        return MarginVector(*([mm] * 6))

    @staticmethod
    def from_axes(x: float, y: float, z: float) -> 'MarginVector':
        return MarginVector(x, x, y, y, z, z)

    @staticmethod
    def from_dict(data: Mapping[str, float]) -> 'MarginVector':
        return MarginVector(**{name: data.get(name, 0.0) for name in MARGIN_FIELDS})

    def to_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in MARGIN_FIELDS}

    def as_tuple(self) -> Tuple[float, ...]:
        return tuple(getattr(self, name) for name in MARGIN_FIELDS)

    def axis(self, axis: int) -> Tuple[float, float]:
        """
        (negative, positive) components for axis 0, 1 or 2
        """
        values = self.as_tuple()
        return values[2 * axis], values[2 * axis + 1]

    def is_zero(self) -> bool:
        return not any(self.as_tuple())

    def __add__(self, other: 'MarginVector') -> 'MarginVector':
        return MarginVector(*(a + b for a, b in zip(self.as_tuple(), other.as_tuple())))


class BinaryMask:
    """
    Immutable voxel occupancy on a Grid. The array is indexed [i, j, k] with shape grid.dims; the linear
    (file) order is x-fastest, z-slowest, i.e. Fortran order over that array.

    All operations return new masks; the backing array is read-only.
    """

    def __init__(self, grid: Grid, occupancy: Union[np.ndarray, Sequence]):
        array = np.asarray(occupancy, dtype=bool)
        if array.shape != grid.dims:
            raise MaskConstructionError(f"occupancy shape {array.shape} does not match grid dims {grid.dims}")
        if array.flags.writeable:
            array = array.copy()
            array.flags.writeable = False
        self._grid = grid
        self._array = array

    @property
    def grid(self) -> Grid:
        return self._grid

    @property
    def array(self) -> BoolArray:
        return self._array

    @staticmethod
    def empty(grid: Grid) -> 'BinaryMask':
        return BinaryMask(grid, np.zeros(grid.dims, dtype=bool))

    @staticmethod
    def full(grid: Grid) -> 'BinaryMask':
        return BinaryMask(grid, np.ones(grid.dims, dtype=bool))

    @staticmethod
    def from_linear(grid: Grid, data: Union[bytes, np.ndarray]) -> 'BinaryMask':
        """
        Build a mask from x-fastest linear data (one value per voxel, non-zero means set)
        """
        flat = np.frombuffer(data, dtype=np.uint8) if isinstance(data, (bytes, bytearray)) else np.asarray(data)
        if flat.size != grid.size:
            raise MaskConstructionError(f"expected {grid.size} voxels, got {flat.size}")
        return BinaryMask(grid, flat.reshape(grid.dims, order='F') != 0)

    def to_linear(self) -> np.ndarray:
        """
        Occupancy as uint8 0/1 values in x-fastest order
        """
        return self._array.ravel(order='F').astype(np.uint8)

    def packed_bits(self) -> bytes:
        """
        One bit per voxel, x-fastest, least significant bit first
        """
        return np.packbits(self.to_linear(), bitorder='little').tobytes()

    def voxel_count(self) -> int:
        return int(np.count_nonzero(self._array))

    def physical_volume_mm3(self) -> float:
        return self.voxel_count() * self._grid.voxel_volume

    def is_empty(self) -> bool:
        return not self._array.any()

    def voxels(self) -> List[Index3]:
        """
        Set voxel indices in linear (x-fastest) order
        """
        i, j, k = np.nonzero(self._array)
        order = np.lexsort((i, j, k))
        return [(int(i[n]), int(j[n]), int(k[n])) for n in order]

    def bounding_box(self) -> Optional[Tuple[Index3, Index3]]:
        """
        Inclusive (low, high) index corners of the set voxels, None for an empty mask
        """
        if self.is_empty():
            return None
        lo, hi = [], []
        for axis in range(3):
            other = tuple(a for a in range(3) if a != axis)
            hits = np.flatnonzero(self._array.any(axis=other))
            lo.append(int(hits[0]))
            hi.append(int(hits[-1]))
        return tuple(lo), tuple(hi)

    def touches_boundary(self) -> bool:
        a = self._array
        return bool(a[0].any() or a[-1].any() or a[:, 0].any() or a[:, -1].any() or a[:, :, 0].any()
                    or a[:, :, -1].any())

    @same_grid
    def equals(self, other: 'BinaryMask') -> bool:
        return bool(np.array_equal(self._array, other._array))

    @same_grid
    def issubset(self, other: 'BinaryMask') -> bool:
        return not (self._array & ~other._array).any()

    @wrap_mask
    @same_grid
    def __or__(self, other: 'BinaryMask'):
        return self._array | other._array

    @wrap_mask
    @same_grid
    def __and__(self, other: 'BinaryMask'):
        return self._array & other._array

    @wrap_mask
    @same_grid
    def __sub__(self, other: 'BinaryMask'):
        return self._array & ~other._array

    def __repr__(self):
        return f"<BinaryMask {self._grid.dims} voxels={self.voxel_count()}>"


def make_mask(grid: Grid, voxels: Iterable[Sequence[int]]) -> BinaryMask:
    """
    Mask with exactly the listed (i, j, k) voxels set; duplicates collapse
    """
    voxels = list(voxels)
    try:
        index = np.asarray(voxels) if voxels else np.zeros((0, 3), dtype=np.int64)
    except ValueError as e:
        raise MaskConstructionError(f"voxels must be (i, j, k) triples: {e}") from e
    if index.ndim != 2 or index.shape[1] != 3:
        raise MaskConstructionError(f"voxels must be (i, j, k) triples, got an array of shape {index.shape}")
    if not np.issubdtype(index.dtype, np.integer):
        raise MaskConstructionError(f"voxel indices must be integers, got {index.dtype}")
    index = index.astype(np.int64)
    inside = np.all((index >= 0) & (index < np.asarray(grid.dims)), axis=1)
    if not inside.all():
        bad = tuple(int(c) for c in index[np.argmin(inside)])
        raise MaskConstructionError(f"voxel index {bad} lies outside grid dims {grid.dims}")
    array = np.zeros(grid.dims, dtype=bool)
    array[index[:, 0], index[:, 1], index[:, 2]] = True
    return BinaryMask(grid, array)


def voxel_count(mask: BinaryMask) -> int:
    return mask.voxel_count()


def physical_volume_mm3(mask: BinaryMask) -> float:
    return mask.physical_volume_mm3()


def masks_equal(a: BinaryMask, b: BinaryMask) -> bool:
    return a.equals(b)

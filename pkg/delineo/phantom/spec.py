import json
import sys
from dataclasses import dataclass, field

import numpy as np

from delineo.core import Grid, MarginVector
from delineo.core.errors import PhantomError, GridError, MarginError
from delineo.core.typing import *

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SHAPE_KINDS = ('ellipsoid', 'cylinder', 'box')


@dataclass(frozen=True)
class Shape:
    """
    Analytic solid in patient mm.

    ellipsoid: `size` = semi-axes (rx, ry, rz)
    cylinder:  `size` = (radius, half_length), oriented along `axis`
    box:       `size` = half extents (hx, hy, hz)
    """

    kind: str
    center: Vector3
    size: Tuple[float, ...]
    axis: int = 2

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise PhantomError(f"unknown shape kind {self.kind!r}, expected one of {SHAPE_KINDS}")
        expected = 2 if self.kind == 'cylinder' else 3
        size = tuple(float(s) for s in self.size)
        if len(size) != expected or any(s <= 0 for s in size):
            raise PhantomError(f"{self.kind} needs {expected} positive size parameters, got {self.size}")
        if len(self.center) != 3 or self.axis not in (0, 1, 2):
            raise PhantomError(f"malformed {self.kind}: center {self.center}, axis {self.axis}")
        object.__setattr__(self, 'center', tuple(float(c) for c in self.center))
        object.__setattr__(self, 'size', size)

    @staticmethod
    def sphere(center: Sequence[float], radius: float) -> 'Shape':
        return Shape('ellipsoid', tuple(center), (radius, radius, radius))

    def half_extents(self) -> Vector3:
        if self.kind == 'cylinder':
            radius, half_length = self.size
            return tuple(half_length if a == self.axis else radius for a in range(3))
        return self.size

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Axis-aligned bounding box (low, high) in mm
        """
        c, h = np.asarray(self.center), np.asarray(self.half_extents())
        return c - h, c + h

    def contains(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """
        Center-inclusion test on broadcastable coordinate arrays
        """
        d = [x - self.center[0], y - self.center[1], z - self.center[2]]
        if self.kind == 'ellipsoid':
            return sum((d[a] / self.size[a]) ** 2 for a in range(3)) <= 1.0
        if self.kind == 'box':
            return np.logical_and.reduce([np.abs(d[a]) <= self.size[a] for a in range(3)])
        radius, half_length = self.size
        radial = sum(d[a] ** 2 for a in range(3) if a != self.axis)
        return (radial <= radius ** 2) & (np.abs(d[self.axis]) <= half_length)

    def to_dict(self) -> dict:
        d = {'kind': self.kind, 'center': list(self.center), 'size': list(self.size)}
        if self.kind == 'cylinder':
            d['axis'] = self.axis
        return d

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> 'Shape':
        try:
            return Shape(kind=data['kind'], center=tuple(data['center']), size=tuple(data['size']),
                         axis=int(data.get('axis', 2)))
        except (KeyError, TypeError) as e:
            raise PhantomError(f"malformed shape {data!r}: {e}") from e


@dataclass(frozen=True)
class PhantomSpec:
    seed: int
    dims: Index3
    spacing: Vector3
    gtv: Shape
    oars: Tuple[Tuple[str, Shape], ...]
    m_ctv: MarginVector
    m_ptv: MarginVector
    origin: Vector3 = (0.0, 0.0, 0.0)
    case_id: Optional[str] = None
    context: Mapping[str, Any] = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return Grid(self.dims, self.spacing, self.origin)

    @property
    def name(self) -> str:
        return self.case_id or f"phantom_{self.seed:04d}"

    def oar_names(self) -> List[str]:
        return [name for name, _ in self.oars]

    def check(self):
        """
        Raise PhantomError unless every shape keeps the combined CTV+PTV margin clear of the grid boundary.
        Voxel-level GTV/OAR overlap is checked by the generator after voxelization.
        """
        try:
            grid = self.grid
        except GridError as e:
            raise PhantomError(f"invalid phantom grid: {e}") from e
        names = self.oar_names()
        if len(set(names)) != len(names) or 'GTV' in names:
            raise PhantomError(f"OAR names must be unique and differ from GTV, got {names}")
        reach = self.m_ctv + self.m_ptv
        low_edge = np.asarray(grid.origin)
        high_edge = low_edge + (np.asarray(grid.dims) - 1) * np.asarray(grid.spacing)
        for name, shape in [('GTV', self.gtv)] + list(self.oars):
            lo, hi = shape.bounds()
            for a in range(3):
                neg, pos = reach.axis(a)
                if lo[a] - neg < low_edge[a] or hi[a] + pos > high_edge[a]:
                    raise PhantomError(f"{name} lies within the CTV+PTV margin of the grid boundary along axis {a} "
                                       f"({lo[a]:g}..{hi[a]:g} mm, margins {neg:g}/{pos:g} mm, grid "
                                       f"{low_edge[a]:g}..{high_edge[a]:g} mm)")

    def to_dict(self) -> dict:
        return {'seed': self.seed, 'case_id': self.name, 'dims': list(self.dims), 'spacing': list(self.spacing),
                'origin': list(self.origin), 'gtv': self.gtv.to_dict(),
                'oars': {name: shape.to_dict() for name, shape in self.oars},
                'm_ctv': self.m_ctv.to_dict(), 'm_ptv': self.m_ptv.to_dict(), 'context': dict(self.context)}

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> 'PhantomSpec':
        try:
            return PhantomSpec(seed=int(data.get('seed', 0)), dims=tuple(data['dims']),
                               spacing=tuple(data['spacing']), origin=tuple(data.get('origin', (0.0, 0.0, 0.0))),
                               gtv=Shape.from_dict(data['gtv']),
                               oars=tuple((name, Shape.from_dict(s)) for name, s in data['oars'].items()),
                               m_ctv=MarginVector.from_dict(data['m_ctv']),
                               m_ptv=MarginVector.from_dict(data['m_ptv']),
                               case_id=data.get('case_id'), context=dict(data.get('context') or {}))
        except (KeyError, TypeError, AttributeError, MarginError) as e:
            raise PhantomError(f"malformed phantom spec: {e}") from e

    @staticmethod
    def from_file(path: PathLike) -> 'PhantomSpec':
        """
        Load a spec from JSON or TOML (by suffix)
        """
        path = Path(path)
        try:
            if path.suffix == '.toml':
                data = tomllib.loads(path.read_text(encoding='utf-8'))
            else:
                data = json.loads(path.read_text(encoding='utf-8'))
        except (OSError, ValueError) as e:
            raise PhantomError(f"cannot read phantom spec {path}: {e}") from e
        return PhantomSpec.from_dict(data)


# radial CTV margin range 5-10 mm resolved to its midpoint, 30 mm along the esophagus
DEFAULT_M_CTV = MarginVector(7.5, 7.5, 7.5, 7.5, 30.0, 30.0)
DEFAULT_M_PTV = MarginVector.isotropic(5.0)


def esophageal_spec(seed: int = 0) -> PhantomSpec:
    """
    Mid-thoracic esophageal layout: cylindrical GTV between two ellipsoid lungs, the heart anterior-inferior
    and a cylindrical vertebral body posterior. Seed 0 is the unperturbed layout; any other seed shifts the
    whole anatomy by at most 2 mm in x/y and 3 mm in z and shrinks the structures a little, which keeps the
    clearance and non-overlap invariants.

    Example:
            spec = esophageal_spec(7)
            generate_phantom(spec, 'cases/phantom_0007')
    """
    gtv_r, gtv_h, heart_r = 9.0, 18.0, 20.0
    lung_r = (22.0, 40.0, 58.0)
    vb_r, vb_h = 12.0, 55.0
    shift = np.zeros(3)
    if seed:
        rng = np.random.default_rng(seed)
        shift = rng.uniform([-2.0, -2.0, -3.0], [2.0, 2.0, 3.0])
        gtv_r, gtv_h = rng.uniform(8.0, 9.0), rng.uniform(15.0, 18.0)
        heart_r = rng.uniform(18.0, 20.0)
        lung_r = (rng.uniform(20.0, 22.0), rng.uniform(36.0, 40.0), rng.uniform(50.0, 56.0))
        vb_r, vb_h = rng.uniform(10.0, 12.0), rng.uniform(45.0, 55.0)

    def at(x, y, z):
        return tuple(float(round(v, 6)) for v in np.asarray((x, y, z)) + shift)

    def mm(v):
        return float(round(v, 6))

    return PhantomSpec(
        seed=seed,
        dims=(96, 96, 64),
        spacing=(1.5, 1.5, 3.0),
        gtv=Shape('cylinder', at(71.25, 71.25, 94.5), (mm(gtv_r), mm(gtv_h))),
        oars=(
            ('Lung_L', Shape('ellipsoid', at(105.5, 70.0, 94.5), tuple(mm(r) for r in lung_r))),
            ('Lung_R', Shape('ellipsoid', at(37.0, 70.0, 94.5), tuple(mm(r) for r in lung_r))),
            ('Heart', Shape.sphere(at(71.25, 38.0, 62.0), mm(heart_r))),
            ('VB_whole', Shape('cylinder', at(71.25, 104.0, 94.5), (mm(vb_r), mm(vb_h)))),
        ),
        m_ctv=DEFAULT_M_CTV,
        m_ptv=DEFAULT_M_PTV,
        context={'tumor_site': 'mid-thoracic esophagus', 'dose_level': '50.4 Gy'},
    )

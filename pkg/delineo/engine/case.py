import json
import logging
from dataclasses import dataclass, field

from delineo.core import Grid, BinaryMask
from delineo.core.errors import ConfigError, GridMismatchError
from delineo.core.nrrd import read_mask
from delineo.core.typing import *
from delineo.plan import PatientContext, is_roi_name

logger = logging.getLogger(__name__)

CASE_FILE = 'case.json'
GROUND_TRUTH_DIR = 'ground_truth'
MASK_SUFFIX = '.nrrd'


class RoiEnvironment:
    """
    Named masks threaded through plan execution, all on one grid.

    Example:
            env = RoiEnvironment(grid, {'GTV': gtv})
            env2 = env.bind('CTV', ctv)  # env itself is unchanged
    """

    def __init__(self, grid: Grid, bindings: Optional[Mapping[str, BinaryMask]] = None):
        self._grid = grid
        self._bindings = {}
        for name, mask in (bindings or {}).items():
            self._check(name, mask)
            self._bindings[name] = mask

    def _check(self, name: str, mask: BinaryMask):
        assert is_roi_name(name), f"'{name}' is not a valid ROI name"
        if mask.grid != self._grid:
            raise GridMismatchError(self._grid, mask.grid, f"ROI '{name}' is not on the environment grid")

    @property
    def grid(self) -> Grid:
        return self._grid

    def names(self) -> List[str]:
        return list(self._bindings)

    def __contains__(self, name: str) -> bool:
        return name in self._bindings

    def __getitem__(self, name: str) -> BinaryMask:
        return self._bindings[name]

    def __len__(self):
        return len(self._bindings)

    def items(self) -> List[Tuple[str, BinaryMask]]:
        return list(self._bindings.items())

    def bind(self, name: str, mask: BinaryMask) -> 'RoiEnvironment':
        self._check(name, mask)
        return RoiEnvironment(self._grid, {**self._bindings, name: mask})

    def update(self, bindings: Mapping[str, BinaryMask]) -> 'RoiEnvironment':
        env = self
        for name, mask in bindings.items():
            env = env.bind(name, mask)
        return env

    def equals(self, other: 'RoiEnvironment') -> bool:
        return (self._grid == other.grid and self.names() == other.names()
                and all(mask.equals(other[name]) for name, mask in self.items()))

    def __repr__(self):
        return f"<RoiEnvironment {self._grid.dims} {self.names()}>"


@dataclass(frozen=True)
class CaseInfo:
    """
    Parsed case.json of a case directory
    """

    root: Path
    case_id: str
    grid: Grid
    initial_rois: Tuple[str, ...]
    context: PatientContext
    structures: Tuple[str, ...] = ()
    counts: Mapping[str, int] = field(default_factory=dict)
    extra: Mapping[str, Any] = field(default_factory=dict)

    def mask_path(self, name: str) -> Path:
        return self.root / f"{name}{MASK_SUFFIX}"


def ground_truth_path(case_dir: PathLike, target: str) -> Path:
    """
    <target>_gt.nrrd in the case directory or its ground_truth/ folder, whichever exists; the ground_truth/
    location when neither does
    """
    case_dir = Path(case_dir)
    for folder in (case_dir, case_dir / GROUND_TRUTH_DIR):
        path = folder / f"{target}_gt{MASK_SUFFIX}"
        if path.is_file():
            return path
    return case_dir / GROUND_TRUTH_DIR / f"{target}_gt{MASK_SUFFIX}"


def load_case(case_dir: PathLike) -> CaseInfo:
    root = Path(case_dir)
    path = root / CASE_FILE
    if not path.is_file():
        raise ConfigError(f"{root} is not a case directory: {CASE_FILE} is missing")
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
        case_id = str(data.get('case_id') or root.name)
        grid = Grid.from_dict(data['grid'])
        initial = tuple(data.get('initial_rois', ('GTV',)))
        context = dict(data.get('context') or {})
        context.setdefault('patient_id', case_id)
        context['initial_rois'] = initial
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"{path}: malformed case description ({e})") from e
    known = {'case_id', 'grid', 'initial_rois', 'context', 'structures', 'counts'}
    return CaseInfo(root=root, case_id=case_id, grid=grid, initial_rois=initial,
                    context=PatientContext.from_dict(context),
                    structures=tuple(data.get('structures', ())),
                    counts={k: int(v) for k, v in (data.get('counts') or {}).items()},
                    extra={k: v for k, v in data.items() if k not in known})


def initial_environment(case: CaseInfo) -> RoiEnvironment:
    """
    Environment holding the case's initial ROIs read from <name>.nrrd
    """
    bindings = {}
    for name in case.initial_rois:
        path = case.mask_path(name)
        if not path.is_file():
            raise ConfigError(f"case {case.case_id}: initial ROI file {path} is missing")
        mask = read_mask(path)
        if mask.grid != case.grid:
            raise GridMismatchError(case.grid, mask.grid, f"{path} is not on the case grid")
        bindings[name] = mask
    logger.debug("case %s: loaded initial ROIs %s", case.case_id, list(bindings))
    return RoiEnvironment(case.grid, bindings)

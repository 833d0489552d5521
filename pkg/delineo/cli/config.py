import enum
import sys
from dataclasses import dataclass, field, replace, fields

from delineo.core.errors import ConfigError, MarginError
from delineo.core.typing import *
from delineo.plan import MarginRangeSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

BACKENDS = ('scripted', 'remote')
APPROVAL_MODES = ('auto', 'interactive')


class ExitCode(enum.IntEnum):
    OK = 0
    USAGE = 2
    CONFIG = 3
    PLANNING = 4
    VALIDATION = 5
    EXECUTION = 6
    EVALUATION = 7
    REJECTED = 8
    PHANTOM = 9


@dataclass(frozen=True)
class RemoteSettings:
    base_url: str = 'https://api.openai.com/v1'
    model: str = 'gpt-4o'
    api_key_env: str = 'OPENAI_API_KEY'
    timeout: float = 60.0
    temperature: Optional[float] = 0.0
    max_retries: int = 3


@dataclass(frozen=True)
class RunConfig:
    """
    Everything one invocation needs. Paths in a config file are relative to that file; flags override it.

    Example config:
            [paths]
            case = "cases/phantom_0000"
            guideline = "guidelines/esophagus.md"
            catalog = "catalog.json"

            [planner]
            backend = "scripted"
            scripted_dir = "completions"
            max_refine = 3
    """

    case: Optional[Path] = None
    guideline: Optional[Path] = None
    aliases: Optional[Path] = None
    catalog: Optional[Path] = None
    reference_plan: Optional[Path] = None
    plan: Optional[Path] = None
    out: Path = Path('out')
    backend: str = 'scripted'
    scripted_dir: Optional[Path] = None
    max_refine: int = 3
    margin_ranges: Tuple[MarginRangeSpec, ...] = ()
    remote: RemoteSettings = field(default_factory=RemoteSettings)
    postprocess: bool = True
    approve: str = 'auto'
    segmentation_url: Optional[str] = None

    def check(self) -> 'RunConfig':
        if self.backend not in BACKENDS:
            raise ConfigError(f"planner backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.approve not in APPROVAL_MODES:
            raise ConfigError(f"approval mode must be one of {APPROVAL_MODES}, got {self.approve!r}")
        if self.max_refine < 1:
            raise ConfigError(f"max_refine must be at least 1, got {self.max_refine}")
        for name in ('case', 'guideline', 'aliases', 'catalog', 'reference_plan', 'scripted_dir'):
            path = getattr(self, name)
            if path is not None and not path.exists():
                raise ConfigError(f"{name} path {path} does not exist")
        return self

    def require(self, *names: str):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            flags = ', '.join('--' + n.replace('_', '-') for n in missing)
            raise ConfigError(f"missing required setting(s): {flags}")


_PATH_KEYS = ('case', 'guideline', 'aliases', 'catalog', 'reference_plan', 'plan', 'out')


def _section(data: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return value


def config_from_dict(data: Mapping[str, Any], base: Path = Path('.')) -> RunConfig:
    paths = _section(data, 'paths')
    planner = _section(data, 'planner')
    execution = _section(data, 'execution')
    unknown = set(paths) - set(_PATH_KEYS)
    if unknown:
        raise ConfigError(f"unknown [paths] key(s): {', '.join(sorted(unknown))}")
    values = {k: base / v for k, v in paths.items()}
    try:
        remote = planner.get('remote', {})
        values['remote'] = RemoteSettings(**remote)
        if 'scripted_dir' in planner:
            values['scripted_dir'] = base / planner['scripted_dir']
        for key in ('backend', 'max_refine'):
            if key in planner:
                values[key] = planner[key]
        values['margin_ranges'] = tuple(MarginRangeSpec(str(r['role']), float(r['low']), float(r['high']))
                                        for r in planner.get('margin_ranges', ()))
        for key in ('postprocess', 'approve', 'segmentation_url'):
            if key in execution:
                values[key] = execution[key]
    except (TypeError, KeyError, ValueError, MarginError) as e:
        raise ConfigError(f"malformed configuration: {e}") from e
    return RunConfig(**values)


def load_config(path: Optional[PathLike] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Read an optional TOML file, apply non-None overrides and check the result
    """
    config = RunConfig()
    if path is not None:
        path = Path(path)
        try:
            data = tomllib.loads(path.read_text(encoding='utf-8'))
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        config = config_from_dict(data, path.parent)
    known = {f.name for f in fields(RunConfig)}
    changes = {k: v for k, v in (overrides or {}).items() if v is not None and k in known}
    for key in _PATH_KEYS + ('scripted_dir',):
        if key in changes:
            changes[key] = Path(changes[key])
    return replace(config, **changes).check()

from dataclasses import dataclass

from delineo.core.typing import *

E_SCHEMA = 'E_SCHEMA'
E_UNKNOWN_TOOL = 'E_UNKNOWN_TOOL'
E_UNDEF_ROI = 'E_UNDEF_ROI'
E_DUP_OUTPUT = 'E_DUP_OUTPUT'
E_NEG_MARGIN = 'E_NEG_MARGIN'
E_UNKNOWN_STRUCTURE = 'E_UNKNOWN_STRUCTURE'
E_EMPTY_PLAN = 'E_EMPTY_PLAN'
E_BAD_NAME = 'E_BAD_NAME'

VIOLATION_CODES = (E_SCHEMA, E_UNKNOWN_TOOL, E_UNDEF_ROI, E_DUP_OUTPUT, E_NEG_MARGIN, E_UNKNOWN_STRUCTURE,
                   E_EMPTY_PLAN, E_BAD_NAME)


@dataclass(frozen=True)
class Violation:
    code: str
    call_id: Optional[int]
    message: str

    def __post_init__(self):
        assert self.code in VIOLATION_CODES, f"unknown violation code {self.code}"

    def location(self) -> str:
        return 'plan' if self.call_id is None else f"call {self.call_id}"

    def to_dict(self) -> dict:
        return {'code': self.code, 'call_id': self.call_id, 'message': self.message}


@dataclass(frozen=True)
class ValidationReport:
    """
    Every problem found in a plan, in discovery order. An empty report means the plan is valid.
    """

    violations: Tuple[Violation, ...] = ()

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def codes(self) -> List[str]:
        return [v.code for v in self.violations]

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def __add__(self, other: 'ValidationReport') -> 'ValidationReport':
        return ValidationReport(self.violations + other.violations)

    def format_lines(self) -> List[str]:
        return [f"{v.code} ({v.location()}): {v.message}" for v in self.violations]

    def to_dict(self) -> dict:
        return {'valid': self.is_valid, 'violations': [v.to_dict() for v in self.violations]}

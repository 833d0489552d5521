import math
from dataclasses import dataclass, field

from delineo.core.errors import MarginError
from delineo.core.typing import *


@dataclass(frozen=True)
class PatientContext:
    """
    Patient facts the planner may use: dose level, tumor site, physician margin preferences (margin role to mm)
    and the ROIs that exist before the plan runs.
    """

    patient_id: str
    initial_rois: Tuple[str, ...] = ('GTV',)
    dose_level: Optional[str] = None
    tumor_site: Optional[str] = None
    preferences: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'initial_rois', tuple(self.initial_rois))
        prefs = {}
        for role, value in dict(self.preferences).items():
            value = float(value)
            if not math.isfinite(value) or value < 0:
                raise MarginError(f"preference '{role}' must be a non-negative length, got {value}")
            prefs[role] = value
        object.__setattr__(self, 'preferences', prefs)

    def to_dict(self) -> dict:
        return {'patient_id': self.patient_id, 'initial_rois': list(self.initial_rois),
                'dose_level': self.dose_level, 'tumor_site': self.tumor_site,
                'preferences': dict(sorted(self.preferences.items()))}

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> 'PatientContext':
        return PatientContext(patient_id=str(data['patient_id']),
                              initial_rois=tuple(data.get('initial_rois', ('GTV',))),
                              dose_level=data.get('dose_level'),
                              tumor_site=data.get('tumor_site'),
                              preferences=data.get('preferences') or {})

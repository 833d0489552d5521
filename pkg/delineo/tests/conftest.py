import json

import numpy as np
import pytest

from delineo.core import Grid, BinaryMask
from delineo.core.errors import ProviderError
from delineo.core.typing import *
from delineo.engine import SegmentationProvider
from delineo.plan import StructureCatalog, AliasTable, PatientContext, parse_plan
from delineo.planner import GuidelineDoc
from delineo.phantom import esophageal_spec, generate_phantom

FIXTURES = Path(__file__).parent / 'fixtures'


def box_mask(grid: Grid, lo: Sequence[int], hi: Sequence[int]) -> BinaryMask:
    """
    Mask with every voxel in the inclusive index box [lo, hi] set
    """
    array = np.zeros(grid.dims, dtype=bool)
    array[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1] = True
    return BinaryMask(grid, array)


class StubProvider(SegmentationProvider):
    """
    In-memory masks; `missing` names are in the catalog but fail to segment
    """

    def __init__(self, grid, masks, missing=()):
        super().__init__(grid)
        self.masks = dict(masks)
        self._catalog = StructureCatalog(list(self.masks) + list(missing))
        self.fetched = []

    @property
    def catalog(self):
        return self._catalog

    def _fetch(self, case_id, structure):
        self.fetched.append(structure)
        if structure not in self.masks:
            raise ProviderError(f"model has no weights for {structure}")
        return self.masks[structure]


def plan_document(*calls, patient_id='p1') -> dict:
    return {'version': '1', 'guideline_id': 'g1', 'patient_id': patient_id, 'calls': list(calls)}


@pytest.fixture
def grid():
    return Grid((12, 10, 8), (1.0, 1.0, 1.0))


@pytest.fixture
def aniso_grid():
    return Grid((16, 16, 12), (1.5, 1.5, 3.0), (-10.0, 5.0, 2.5))


@pytest.fixture
def catalog():
    return StructureCatalog.from_json(FIXTURES / 'catalog.json')


@pytest.fixture
def aliases(catalog):
    return AliasTable.from_json(FIXTURES / 'aliases.json', catalog)


@pytest.fixture
def guideline():
    return GuidelineDoc.from_file(FIXTURES / 'esophagus_consensus.md')


@pytest.fixture
def context():
    return PatientContext('phantom_0000', tumor_site='mid-thoracic esophagus', dose_level='50.4 Gy')


@pytest.fixture
def reference_document():
    return json.loads((FIXTURES / 'reference_plan.json').read_text(encoding='utf-8'))


@pytest.fixture
def reference_plan(reference_document):
    return parse_plan(reference_document)


@pytest.fixture(scope='session')
def phantom_case(tmp_path_factory):
    """
    The default esophageal phantom, generated once per session
    """
    return generate_phantom(esophageal_spec(0), tmp_path_factory.mktemp('cases') / 'phantom_0000')

import logging
import threading
from abc import ABC, abstractmethod

import requests
from requests.adapters import HTTPAdapter, Retry

from delineo.core import Grid, BinaryMask
from delineo.core.errors import ProviderError, NrrdFormatError, DelineoError
from delineo.core.nrrd import read_mask, decode_mask
from delineo.core.typing import *
from delineo.plan import StructureCatalog
from .case import CaseInfo, MASK_SUFFIX

logger = logging.getLogger(__name__)


class SegmentationProvider(ABC):
    """
    Delineates a catalog structure for a case. Results must be deterministic per (case, structure), which is
    what makes the per-provider memo in `segment` sound.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self._cache = {}
        self._lock = threading.Lock()

    @property
    @abstractmethod
    def catalog(self) -> StructureCatalog:
        raise NotImplementedError

    @abstractmethod
    def _fetch(self, case_id: str, structure: str) -> BinaryMask:
        raise NotImplementedError

    def segment(self, case_id: str, structure: str) -> BinaryMask:
        key = (case_id, structure)
        with self._lock:
            if key in self._cache:
                logger.debug("provider cache hit for %s/%s", case_id, structure)
                return self._cache[key]
        if structure not in self.catalog:
            raise ProviderError(f"structure '{structure}' is not available for case {case_id}")
        mask = self._fetch(case_id, structure)
        if mask.grid != self.grid:
            raise ProviderError(f"{structure} for case {case_id} is on grid {mask.grid}, expected {self.grid}")
        with self._lock:
            self._cache[key] = mask
        return mask


def file_provider_segment(case_dir: PathLike, structure: str, grid: Optional[Grid] = None) -> BinaryMask:
    """
    Read <case_dir>/<structure>.nrrd, checking it against `grid` when one is given
    """
    path = Path(case_dir) / f"{structure}{MASK_SUFFIX}"
    if not path.is_file():
        raise ProviderError(f"no segmentation for '{structure}': {path} does not exist")
    try:
        mask = read_mask(path)
    except NrrdFormatError as e:
        raise ProviderError(str(e)) from e
    if grid is not None and mask.grid != grid:
        raise ProviderError(f"{path} grid {mask.grid} does not match the case grid {grid}")
    return mask


class FileSegmentationProvider(SegmentationProvider):
    """
    Precomputed masks from a case directory stand in for the segmentation model. The catalog is the case's
    declared structure list, or every non-initial NRRD in the directory when none is declared.
    """

    def __init__(self, case: CaseInfo):
        super().__init__(case.grid)
        self.case = case
        names = case.structures or sorted(p.stem for p in case.root.glob(f"*{MASK_SUFFIX}")
                                          if p.stem not in case.initial_rois)
        self._catalog = StructureCatalog(names)

    @property
    def catalog(self) -> StructureCatalog:
        return self._catalog

    def _fetch(self, case_id: str, structure: str) -> BinaryMask:
        if case_id != self.case.case_id:
            raise ProviderError(f"this provider serves case {self.case.case_id}, not {case_id}")
        return file_provider_segment(self.case.root, structure, self.grid)


class RemoteSegmentationProvider(SegmentationProvider):
    """
    Segmentation service answering GET {base_url}/cases/{case_id}/structures/{structure} with a NRRD mask
    """

    def __init__(self, base_url: str, grid: Grid, structures: Iterable[str], timeout: float = 120.0,
                 max_retries: int = 3, headers: Optional[Mapping[str, str]] = None):
        super().__init__(grid)
        self.base_url = base_url.rstrip('/')
        self.timeout = timeout
        self._catalog = StructureCatalog(structures)
        retry = Retry(total=max_retries, backoff_factor=1.0, status_forcelist=[429, 500, 502, 503, 504])
        self._session = requests.Session()
        self._session.mount('http://', HTTPAdapter(max_retries=retry))
        self._session.mount('https://', HTTPAdapter(max_retries=retry))
        self._session.headers.update(dict(headers or {}))

    @property
    def catalog(self) -> StructureCatalog:
        return self._catalog

    def _fetch(self, case_id: str, structure: str) -> BinaryMask:
        url = f"{self.base_url}/cases/{case_id}/structures/{structure}"
        try:
            response = self._session.get(url, timeout=self.timeout)
            response.raise_for_status()
            return decode_mask(response.content, url)
        except requests.exceptions.RequestException as e:
            logger.warning("segmentation request %s failed: %s", url, e)
            raise ProviderError(f"segmentation request for '{structure}' failed: {e}") from e
        except DelineoError as e:
            raise ProviderError(f"segmentation service returned an unreadable mask for '{structure}': {e}") from e

"""
NRRD wire format for binary masks on axis-aligned LPS grids, on top of pynrrd.

Masks are written as raw uint8 with diagonal space directions. Anything pynrrd reads is accepted as long as it
is a three-dimensional uint8 volume on an axis-aligned grid.
"""
import io
import logging

import nrrd
import numpy as np

from delineo.core import Grid, BinaryMask
from delineo.core.errors import NrrdFormatError
from delineo.core.typing import *

logger = logging.getLogger(__name__)

SPACE = 'left-posterior-superior'
_SPACES = (SPACE, 'lps')
_UINT8_NAMES = ('uint8', 'uchar', 'unsigned char', 'uint8_t')
_ENCODINGS = ('raw', 'gzip', 'gz')


def mask_header(grid: Grid) -> dict:
    return {
        'space': SPACE,
        'space directions': np.diag(np.asarray(grid.spacing, dtype=float)),
        'space origin': np.asarray(grid.origin, dtype=float),
        'kinds': ['domain', 'domain', 'domain'],
        'encoding': 'raw',
    }


def _check_header(header: dict, source):
    if str(header.get('type', '')).lower() not in _UINT8_NAMES:
        raise NrrdFormatError(f"{source}: type must be uint8, got {header.get('type')!r}")
    if int(header.get('dimension', 0)) != 3:
        raise NrrdFormatError(f"{source}: dimension must be 3, got {header.get('dimension')!r}")
    if 'data file' in header or 'datafile' in header:
        raise NrrdFormatError(f"{source}: detached data files are not supported")
    if str(header.get('encoding', '')).lower() not in _ENCODINGS:
        raise NrrdFormatError(f"{source}: unsupported encoding {header.get('encoding')!r}, only raw and gzip are read")


def _grid_from_header(header: dict, source) -> Grid:
    if str(header.get('space', SPACE)).lower() not in _SPACES:
        raise NrrdFormatError(f"{source}: space must be {SPACE}, got {header.get('space')!r}")
    if 'space directions' not in header:
        raise NrrdFormatError(f"{source}: missing space directions")
    directions = np.asarray(header['space directions'], dtype=float)
    if directions.shape != (3, 3) or np.isnan(directions).any():
        raise NrrdFormatError(f"{source}: expected three 3-vectors in space directions")
    spacing = np.diag(directions)
    if np.any(directions - np.diag(spacing)) or np.any(spacing <= 0):
        raise NrrdFormatError(f"{source}: space directions must be axis-aligned and positive, "
                              f"got {directions.tolist()}")
    origin = np.asarray(header.get('space origin', (0.0, 0.0, 0.0)), dtype=float)
    if origin.shape != (3,):
        raise NrrdFormatError(f"{source}: malformed space origin")
    return Grid(dims=tuple(int(n) for n in header['sizes']), spacing=tuple(float(s) for s in spacing),
                origin=tuple(float(o) for o in origin))


def _to_mask(data: np.ndarray, header: dict, source) -> BinaryMask:
    grid = _grid_from_header(header, source)
    if data.shape != grid.dims:
        raise NrrdFormatError(f"{source}: data block has shape {data.shape}, expected {grid.dims}")
    return BinaryMask(grid, data != 0)


def decode_mask(payload: bytes, source: Any = '<bytes>') -> BinaryMask:
    """
    Mask from the bytes of an attached-header NRRD file, e.g. an HTTP response body
    """
    fh = io.BytesIO(payload)
    try:
        header = nrrd.read_header(fh)
    except (nrrd.NRRDError, ValueError, KeyError) as e:
        raise NrrdFormatError(f"{source}: {e}")
    _check_header(header, source)
    try:
        data = nrrd.read_data(header, fh)
    except (nrrd.NRRDError, ValueError, OSError, EOFError) as e:
        raise NrrdFormatError(f"{source}: {e}")
    return _to_mask(data, header, source)


def write_mask(path: PathLike, mask: BinaryMask) -> Path:
    path = Path(path)
    nrrd.write(str(path), mask.array.astype(np.uint8), mask_header(mask.grid))
    logger.debug("wrote %s (%d voxels)", path, mask.voxel_count())
    return path


def read_mask(path: PathLike) -> BinaryMask:
    path = Path(path)
    try:
        data, header = nrrd.read(str(path))
    except (nrrd.NRRDError, ValueError, KeyError, EOFError) as e:
        raise NrrdFormatError(f"{path}: {e}")
    _check_header(header, path)
    return _to_mask(data, header, path)

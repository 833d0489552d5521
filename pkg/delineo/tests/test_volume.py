import nrrd
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delineo.core import Grid, MarginVector, BinaryMask, make_mask, voxel_count, physical_volume_mm3, masks_equal
from delineo.core.errors import GridError, MarginError, MaskConstructionError, GridMismatchError, NrrdFormatError
from delineo.core.nrrd import decode_mask, read_mask, write_mask, mask_header
from .conftest import box_mask


def test_grid_validation():
    with pytest.raises(GridError):
        Grid((0, 4, 4), (1, 1, 1))
    with pytest.raises(GridError):
        Grid((4, 4, 4), (1, -1, 1))
    with pytest.raises(GridError):
        Grid((4, 4), (1, 1, 1))
    with pytest.raises(GridError):
        Grid((4, 4, 4), (1, 1, 1), axis_convention='RAS')


def test_linear_index_is_x_fastest(grid):
    assert grid.linear_index(1, 0, 0) == 1
    assert grid.linear_index(0, 1, 0) == 12
    assert grid.linear_index(0, 0, 1) == 120


def _check_every_voxel(grid):
    index = np.arange(grid.size)
    i, j, k = grid.unravel(index)
    assert np.array_equal(grid.linear_index(i, j, k), index)
    assert np.array_equal(np.stack([i, j, k]), np.stack(np.unravel_index(index, grid.dims, order='F')))


def test_linear_index_round_trip_on_the_largest_grid():
    _check_every_voxel(Grid((64, 64, 64), (1.0, 1.0, 1.0)))


@settings(max_examples=60, deadline=None)
@given(st.tuples(st.integers(1, 64), st.integers(1, 64), st.integers(1, 64)))
def test_linear_index_round_trip(dims):
    _check_every_voxel(Grid(dims, (1.0, 1.0, 1.0)))


@settings(max_examples=80, deadline=None)
@given(st.data())
def test_make_mask_counts_distinct_voxels(data):
    dims = data.draw(st.tuples(st.integers(1, 10), st.integers(1, 10), st.integers(1, 10)))
    voxel = st.tuples(st.integers(0, dims[0] - 1), st.integers(0, dims[1] - 1), st.integers(0, dims[2] - 1))
    voxels = data.draw(st.lists(voxel, max_size=60))
    mask = make_mask(Grid(dims, (1.0, 1.0, 1.0)), voxels)
    assert voxel_count(mask) == len(set(voxels))
    assert set(mask.voxels()) == set(voxels)


def test_grid_round_trips_through_dict(aniso_grid):
    assert Grid.from_dict(aniso_grid.to_dict()) == aniso_grid


def test_margin_vector():
    with pytest.raises(MarginError):
        MarginVector(1, 1, -0.5, 1, 1, 1)
    m = MarginVector.from_axes(1, 2, 3)
    assert m.axis(1) == (2.0, 2.0)
    assert (m + MarginVector.isotropic(1)).as_tuple() == (2, 2, 3, 3, 4, 4)
    assert MarginVector().is_zero()


def test_make_mask(grid):
    mask = make_mask(grid, [(0, 0, 0), (1, 2, 3), (1, 2, 3)])
    assert voxel_count(mask) == 2
    assert mask.voxels() == [(0, 0, 0), (1, 2, 3)]
    with pytest.raises(MaskConstructionError, match=r"\(12, 0, 0\)"):
        make_mask(grid, [(12, 0, 0)])
    with pytest.raises(MaskConstructionError):
        make_mask(grid, [(0, -1, 0)])
    with pytest.raises(MaskConstructionError, match='triples'):
        make_mask(grid, [(1, 2), (3, 4), (5, 6)])
    with pytest.raises(MaskConstructionError, match='triples'):
        make_mask(grid, [(1, 2, 3), (4, 5)])
    with pytest.raises(MaskConstructionError, match='integers'):
        make_mask(grid, [(1.5, 0, 0)])
    assert make_mask(grid, np.array([[1, 2, 3]])).voxels() == [(1, 2, 3)]


def test_empty_mask(grid):
    empty = make_mask(grid, [])
    assert empty.is_empty() and voxel_count(empty) == 0
    assert empty.bounding_box() is None


def test_physical_volume(aniso_grid):
    mask = box_mask(aniso_grid, (0, 0, 0), (1, 1, 1))
    assert physical_volume_mm3(mask) == pytest.approx(8 * 1.5 * 1.5 * 3.0)


def test_voxels_in_linear_order(grid):
    mask = make_mask(grid, [(0, 0, 1), (5, 0, 0), (0, 1, 0)])
    assert mask.voxels() == [(5, 0, 0), (0, 1, 0), (0, 0, 1)]


def test_linear_layout(grid):
    mask = make_mask(grid, [(1, 0, 0), (0, 0, 1)])
    linear = mask.to_linear()
    assert linear.dtype == np.uint8
    assert np.flatnonzero(linear).tolist() == [1, 120]
    assert masks_equal(BinaryMask.from_linear(grid, linear.tobytes()), mask)
    assert len(mask.packed_bits()) == (grid.size + 7) // 8


def test_masks_are_read_only(grid):
    mask = box_mask(grid, (1, 1, 1), (2, 2, 2))
    with pytest.raises(ValueError):
        mask.array[0, 0, 0] = True


def test_bounding_box_and_boundary(grid):
    mask = make_mask(grid, [(2, 3, 4), (5, 1, 6)])
    assert mask.bounding_box() == ((2, 1, 4), (5, 3, 6))
    assert not mask.touches_boundary()
    assert make_mask(grid, [(11, 3, 3)]).touches_boundary()


def test_set_operators(grid):
    a = box_mask(grid, (0, 0, 0), (3, 3, 3))
    b = box_mask(grid, (2, 2, 2), (5, 5, 5))
    assert (a & b).voxel_count() == 8
    assert (a | b).voxel_count() == 64 + 64 - 8
    assert (a - b).voxel_count() == 64 - 8
    assert (a & b).issubset(a)


def test_grid_mismatch(grid, aniso_grid):
    with pytest.raises(GridMismatchError):
        BinaryMask.empty(grid) | BinaryMask.empty(Grid(grid.dims, (2.0, 1.0, 1.0)))
    with pytest.raises(MaskConstructionError):
        BinaryMask(aniso_grid, np.zeros(grid.dims, dtype=bool))


def test_nrrd_round_trip(tmp_path, aniso_grid):
    mask = box_mask(aniso_grid, (2, 3, 1), (6, 5, 4))
    path = write_mask(tmp_path / 'm.nrrd', mask)
    loaded = read_mask(path)
    assert loaded.grid == aniso_grid
    assert masks_equal(loaded, mask)
    assert masks_equal(decode_mask(path.read_bytes()), mask)


def test_nrrd_header(tmp_path, aniso_grid):
    path = write_mask(tmp_path / 'm.nrrd', BinaryMask.empty(aniso_grid))
    header = nrrd.read_header(str(path))
    assert header['type'] == 'uint8'
    assert header['sizes'].tolist() == [16, 16, 12]
    assert header['space'] == 'left-posterior-superior'
    assert header['space directions'].tolist() == [[1.5, 0, 0], [0, 1.5, 0], [0, 0, 3.0]]
    assert header['space origin'].tolist() == [-10.0, 5.0, 2.5]
    assert header['encoding'] == 'raw'


def test_nrrd_layout_is_x_fastest(tmp_path, grid):
    path = write_mask(tmp_path / 'm.nrrd', make_mask(grid, [(1, 0, 0), (0, 0, 1)]))
    data = path.read_bytes()[-grid.size:]
    assert np.flatnonzero(np.frombuffer(data, dtype=np.uint8)).tolist() == [1, 120]


def test_nrrd_reads_gzip(tmp_path, grid):
    mask = box_mask(grid, (1, 1, 1), (3, 4, 5))
    path = tmp_path / 'm.nrrd'
    nrrd.write(str(path), mask.array.astype(np.uint8), {**mask_header(grid), 'encoding': 'gzip'})
    assert masks_equal(read_mask(path), mask)
    assert masks_equal(decode_mask(path.read_bytes()), mask)


@pytest.mark.parametrize('data, fields', [
    (np.zeros((12, 10, 8), np.uint8),
     {'space directions': np.array([[0.7, 0.7, 0.0], [-0.7, 0.7, 0.0], [0.0, 0.0, 1.0]])}),
    (np.zeros((12, 10, 8), np.uint8), {'space': 'right-anterior-superior'}),
    (np.zeros((12, 10, 8), np.uint8), {'encoding': 'bzip2'}),
    (np.zeros((12, 10, 8), np.float32), {}),
    (np.zeros((12, 10), np.uint8), {'space directions': np.eye(2), 'kinds': ['domain', 'domain'],
                                    'space origin': np.zeros(2), 'space': '2D-right-handed'}),
])
def test_nrrd_rejects(tmp_path, grid, data, fields):
    path = tmp_path / 'bad.nrrd'
    nrrd.write(str(path), data, {**mask_header(grid), **fields})
    with pytest.raises(NrrdFormatError):
        read_mask(path)
    with pytest.raises(NrrdFormatError):
        decode_mask(path.read_bytes())


def test_nrrd_rejects_bad_bytes(tmp_path, grid):
    path = write_mask(tmp_path / 'm.nrrd', BinaryMask.empty(grid))
    with pytest.raises(NrrdFormatError):
        decode_mask(path.read_bytes()[:-1])
    with pytest.raises(NrrdFormatError):
        decode_mask(b'PNG\n\n' + bytes(grid.size))

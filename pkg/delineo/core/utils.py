import functools
import delineo.core as _core
from .errors import GridMismatchError
from .typing import *


def _iter_masks(args: Sequence[Any]) -> Iterator['_core.BinaryMask']:
    for a in args:
        if isinstance(a, _core.BinaryMask):
            yield a
        elif isinstance(a, (list, tuple)):
            yield from (m for m in a if isinstance(m, _core.BinaryMask))


def same_grid(func: Callable) -> Callable:
    """
    Reject calls whose mask arguments (directly or inside a list) live on different grids
    """
    @functools.wraps(func)
    def f(*args, **kwargs):
        masks = list(_iter_masks(args))
        for other in masks[1:]:
            if other.grid != masks[0].grid:
                raise GridMismatchError(masks[0].grid, other.grid,
                                        f"`{func.__name__}` needs masks on one grid")
        return func(*args, **kwargs)
    return f


def wrap_mask(func: Callable) -> Callable:
    """
    Turn a function returning a boolean voxel array into one returning a BinaryMask
    on the grid of its first mask argument.
    """
    @functools.wraps(func)
    def f(*args, **kwargs):
        array = func(*args, **kwargs)
        return _core.BinaryMask(next(_iter_masks(args)).grid, array)
    return f

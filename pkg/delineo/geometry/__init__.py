from .structuring import StructuringOffsets, build_structuring_offsets
from .functions import dilate, union, subtract, intersect, fill_holes, smooth, surface_voxels

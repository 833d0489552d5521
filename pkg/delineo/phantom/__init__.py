from .spec import PhantomSpec, Shape, esophageal_spec, DEFAULT_M_CTV, DEFAULT_M_PTV, SHAPE_KINDS
from .oracle import oracle_targets, brute_force_dilate, minkowski_offsets
from .generator import generate_phantom, build_phantom, voxelize, case_description

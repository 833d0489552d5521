import json
import logging

import numpy as np

from delineo.core import BinaryMask, Grid
from delineo.core.errors import PhantomError
from delineo.core.nrrd import write_mask
from delineo.core.typing import *
from delineo.engine.case import CASE_FILE, GROUND_TRUTH_DIR, MASK_SUFFIX
from .oracle import oracle_targets
from .spec import PhantomSpec, Shape

logger = logging.getLogger(__name__)


def voxelize(shape: Shape, grid: Grid) -> BinaryMask:
    """
    Voxels whose centers satisfy the shape inequality
    """
    x, y, z = np.meshgrid(grid.centers(0), grid.centers(1), grid.centers(2), indexing='ij')
    return BinaryMask(grid, shape.contains(x, y, z))


def build_phantom(spec: PhantomSpec) -> Dict[str, BinaryMask]:
    """
    Every mask of a phantom case: GTV, the OARs and the oracle targets CTV_gt and PTV_gt
    """
    spec.check()
    grid = spec.grid
    gtv = voxelize(spec.gtv, grid)
    if gtv.is_empty():
        raise PhantomError("the GTV covers no voxel center")
    oars = {name: voxelize(shape, grid) for name, shape in spec.oars}
    for name, oar in oars.items():
        if oar.is_empty():
            raise PhantomError(f"{name} covers no voxel center")
        if not (gtv & oar).is_empty():
            raise PhantomError(f"GTV intersects {name}")
    ctv, ptv = oracle_targets(gtv, list(oars.values()), spec.m_ctv, spec.m_ptv)
    return {'GTV': gtv, **oars, 'CTV_gt': ctv, 'PTV_gt': ptv}


def case_description(spec: PhantomSpec, masks: Mapping[str, BinaryMask]) -> dict:
    context = {'patient_id': spec.name, **dict(spec.context)}
    return {
        'case_id': spec.name,
        'grid': spec.grid.to_dict(),
        'initial_rois': ['GTV'],
        'structures': spec.oar_names(),
        'context': context,
        'counts': {name: mask.voxel_count() for name, mask in masks.items()},
        'phantom': spec.to_dict(),
    }


def generate_phantom(spec: PhantomSpec, out_dir: PathLike) -> Path:
    """
    Write a case directory: case.json, GTV.nrrd, one NRRD per OAR and ground_truth/{CTV,PTV}_gt.nrrd.
    Everything is computed before the first file is written, so an invalid spec leaves no partial case.

    Example:
            generate_phantom(esophageal_spec(), 'cases/phantom_0000')
    """
    masks = build_phantom(spec)
    out_dir = Path(out_dir)
    (out_dir / GROUND_TRUTH_DIR).mkdir(parents=True, exist_ok=True)
    for name, mask in masks.items():
        folder = out_dir / GROUND_TRUTH_DIR if name.endswith('_gt') else out_dir
        write_mask(folder / f"{name}{MASK_SUFFIX}", mask)
    description = case_description(spec, masks)
    (out_dir / CASE_FILE).write_text(json.dumps(description, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    logger.info("phantom %s written to %s (CTV %d, PTV %d voxels)", spec.name, out_dir,
                description['counts']['CTV_gt'], description['counts']['PTV_gt'])
    return out_dir

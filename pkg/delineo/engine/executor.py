import logging
import time
from dataclasses import dataclass, field

from delineo.core import BinaryMask
from delineo.core.errors import ExecutionError, DataflowError, PlanValidationError, DelineoError
from delineo.core.typing import *
from delineo.geometry import dilate, union, subtract, intersect, fill_holes, smooth
from delineo.plan import Plan, ToolCall, validate_plan
from .case import RoiEnvironment
from .providers import SegmentationProvider

logger = logging.getLogger(__name__)

BOUNDARY_CLIP = 'boundary-clip'
POSTPROCESS_OVERLAP = 'postprocess-overlap'

# applied left to right
POSTPROCESS_ORDER = (fill_holes, smooth)


@dataclass(frozen=True)
class CallRecord:
    call_id: int
    tool: str
    duration_s: float
    voxel_counts: Mapping[str, int]
    warnings: Tuple[str, ...] = ()

    def to_dict(self, durations: bool = True) -> dict:
        d = {'call_id': self.call_id, 'tool': self.tool, 'voxel_counts': dict(self.voxel_counts),
             'warnings': list(self.warnings)}
        if durations:
            d['duration_s'] = round(self.duration_s, 6)
        return d


@dataclass(frozen=True)
class PostprocessRecord:
    roi: str
    voxels_before: int
    voxels_after: int
    warnings: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {'roi': self.roi, 'voxels_before': self.voxels_before, 'voxels_after': self.voxels_after,
                'warnings': list(self.warnings)}


@dataclass(frozen=True)
class ExecutionTrace:
    records: Tuple[CallRecord, ...] = ()
    postprocessed: Tuple[PostprocessRecord, ...] = ()

    def __len__(self):
        return len(self.records)

    def warnings(self) -> List[str]:
        return [w for r in self.records for w in r.warnings] + [w for r in self.postprocessed for w in r.warnings]

    def to_dict(self, durations: bool = True) -> dict:
        return {'calls': [r.to_dict(durations) for r in self.records],
                'postprocess': [r.to_dict() for r in self.postprocessed]}


def postprocess(mask: BinaryMask) -> BinaryMask:
    for step in POSTPROCESS_ORDER:
        mask = step(mask)
    return mask


def _lookup(env: RoiEnvironment, call: ToolCall, name: str) -> BinaryMask:
    if name not in env:
        raise DataflowError(f"ROI '{name}' is not bound", call.id)
    return env[name]


def _run_segment(call, env, provider, case_id):
    outputs = {}
    for output, structure in call.segment_outputs():
        try:
            mask = provider.segment(case_id, structure)
        except DelineoError as e:
            raise ExecutionError(f"segmentation of '{structure}' failed: {e}", call.id, structure) from e
        outputs[output] = mask
    return outputs


def _run_dilate(call, env, provider, case_id):
    return {call.output: dilate(_lookup(env, call, call.args.input), call.args.margin.to_vector())}


def _run_union(call, env, provider, case_id):
    return {call.output: union([_lookup(env, call, n) for n in call.args.inputs])}


def _run_subtract(call, env, provider, case_id):
    args = call.args
    removed = union([_lookup(env, call, n) for n in args.subtrahends])
    return {call.output: subtract(_lookup(env, call, args.input), removed)}


def _run_intersect(call, env, provider, case_id):
    a, b = (_lookup(env, call, n) for n in call.args.inputs)
    return {call.output: intersect(a, b)}


_HANDLERS = {
    'segment': _run_segment,
    'dilate': _run_dilate,
    'union': _run_union,
    'subtract': _run_subtract,
    'intersect': _run_intersect,
}


def _subtrahend_union(plan: Plan, env: RoiEnvironment, name: str) -> Optional[BinaryMask]:
    for call in plan.calls:
        if call.tool == 'subtract' and call.output == name:
            return union([env[n] for n in call.args.subtrahends])
    return None


def execute_plan(plan: Plan, env: RoiEnvironment, provider: SegmentationProvider,
                 postprocess_outputs: Optional[Sequence[str]] = None,
                 case_id: Optional[str] = None) -> Tuple[RoiEnvironment, ExecutionTrace]:
    """
    Run a validated plan call by call, then post-process the named outputs (default: the plan's target
    outputs). Returns a new environment; `env` is left untouched.

    Example:
            env, trace = execute_plan(plan, initial_environment(case), FileSegmentationProvider(case),
                                      case_id=case.case_id)
            env['CTV'].voxel_count()
    """
    if not plan.calls:
        return env, ExecutionTrace()
    report = validate_plan(plan, provider.catalog, env.names())
    if not report.is_valid:
        raise PlanValidationError(report)
    case_id = case_id or plan.patient_id

    records = []
    for call in plan.calls:
        logger.debug("call %d: %s", call.id, call.tool)
        started = time.perf_counter()
        outputs = _HANDLERS[call.tool](call, env, provider, case_id)
        duration = time.perf_counter() - started

        warnings = []
        if call.tool == 'dilate':
            for name, mask in outputs.items():
                if mask.touches_boundary():
                    warnings.append(f"{BOUNDARY_CLIP}: call {call.id} output '{name}' reaches the grid boundary "
                                    f"and may be clipped")
        for w in warnings:
            logger.warning(w)
        env = env.update(outputs)
        records.append(CallRecord(call.id, call.tool, duration,
                                  {name: mask.voxel_count() for name, mask in outputs.items()}, tuple(warnings)))

    targets = plan.target_outputs() if postprocess_outputs is None else list(postprocess_outputs)
    processed, post_records = {}, []
    for name in targets:
        if name not in env:
            raise DataflowError(f"post-processing target '{name}' is not bound")
        before = env[name]
        after = postprocess(before)
        warnings = []
        removed = _subtrahend_union(plan, env, name)
        if removed is not None:
            overlap = (after & removed).voxel_count()
            if overlap:
                warnings.append(f"{POSTPROCESS_OVERLAP}: post-processing put {overlap} voxel(s) of '{name}' back "
                                f"inside its excluded structures")
                logger.warning(warnings[-1])
        processed[name] = after
        post_records.append(PostprocessRecord(name, before.voxel_count(), after.voxel_count(), tuple(warnings)))

    return env.update(processed), ExecutionTrace(tuple(records), tuple(post_records))

import json
import logging
import math
from dataclasses import dataclass

from pydantic import BaseModel, ConfigDict, StrictInt, StrictStr, ValidationError

from delineo.core.errors import PlanParseError, CanonicalizationError, MarginError
from delineo.core.typing import *
from .calls import ToolCall, Plan, ARGS_MODELS, TOOLS, PLAN_VERSION, is_roi_name
from .catalog import StructureCatalog
from .context import PatientContext
from .report import *

logger = logging.getLogger(__name__)

_HEADER_FIELDS = ('version', 'guideline_id', 'patient_id', 'calls')
_CALL_FIELDS = ('id', 'tool', 'args', 'output')


class _CallEnvelope(BaseModel):
    model_config = ConfigDict(extra='forbid')

    id: StrictInt
    tool: StrictStr
    args: Dict[str, Any]
    output: Union[StrictStr, List[StrictStr]]


def _path(prefix: str, loc: Sequence[Union[str, int]]) -> str:
    for part in loc:
        prefix += f"[{part}]" if isinstance(part, int) else f".{part}"
    return prefix


def _pydantic_violations(error: ValidationError, prefix: str, call_id: Optional[int]) -> List[Violation]:
    return [Violation(E_SCHEMA, call_id, f"{_path(prefix, e['loc'])}: {e['msg']}") for e in error.errors()]


def _parse_call(raw: Any, index: int, violations: List[Violation]) -> Optional[ToolCall]:
    path = f"$.calls[{index}]"
    if not isinstance(raw, dict):
        violations.append(Violation(E_SCHEMA, None, f"{path}: a call must be an object"))
        return None
    call_id = raw['id'] if type(raw.get('id')) is int else None

    tool = raw.get('tool')
    if isinstance(tool, str) and tool not in TOOLS:
        violations.append(Violation(E_UNKNOWN_TOOL, call_id,
                                    f"{path}.tool: unknown tool '{tool}', expected one of {', '.join(TOOLS)}"))
        return None
    try:
        envelope = _CallEnvelope.model_validate(raw)
    except ValidationError as e:
        violations.extend(_pydantic_violations(e, path, call_id))
        return None
    try:
        args = ARGS_MODELS[tool].model_validate(envelope.args)
    except ValidationError as e:
        violations.extend(_pydantic_violations(e, f"{path}.args", call_id))
        return None

    output = envelope.output
    if tool == 'segment':
        count = len(output) if isinstance(output, list) else 1
        if count != len(args.structures):
            violations.append(Violation(E_SCHEMA, call_id, f"{path}.output: segment declares {count} output(s) "
                                                           f"for {len(args.structures)} structure(s)"))
            return None
    elif isinstance(output, list):
        violations.append(Violation(E_SCHEMA, call_id, f"{path}.output: {tool} produces a single ROI name"))
        return None
    return ToolCall(id=envelope.id, tool=tool, args=args, output=output)


def parse_plan(document: Union[str, bytes, Mapping[str, Any]]) -> Plan:
    """
    Shape-check a plan document and build the Plan. Every shape problem is collected before raising
    PlanParseError; dataflow is left to validate_plan.
    """
    if isinstance(document, bytes):
        try:
            document = document.decode('utf-8')
        except UnicodeDecodeError as e:
            raise PlanParseError([Violation(E_SCHEMA, None, f"$: not valid UTF-8 (byte {e.start}: {e.reason})")])
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise PlanParseError([Violation(E_SCHEMA, None, f"$: not valid JSON ({e.msg} at line {e.lineno}, "
                                                            f"column {e.colno})")])
    if not isinstance(document, dict):
        raise PlanParseError([Violation(E_SCHEMA, None, "$: a plan document must be a JSON object")])

    violations = []
    for key in document:
        if key not in _HEADER_FIELDS:
            violations.append(Violation(E_SCHEMA, None, f"$.{key}: unexpected field"))
    for key in _HEADER_FIELDS[:3]:
        if key not in document:
            violations.append(Violation(E_SCHEMA, None, f"$.{key}: field required"))
        elif not isinstance(document[key], str):
            violations.append(Violation(E_SCHEMA, None, f"$.{key}: must be a string"))
    if isinstance(document.get('version'), str) and document['version'] != PLAN_VERSION:
        violations.append(Violation(E_SCHEMA, None, f"$.version: unsupported version '{document['version']}', "
                                                    f"expected '{PLAN_VERSION}'"))

    calls = []
    raw_calls = document.get('calls')
    if not isinstance(raw_calls, list):
        violations.append(Violation(E_SCHEMA, None, "$.calls: field required and must be an array"))
    else:
        for index, raw in enumerate(raw_calls):
            call = _parse_call(raw, index, violations)
            if call is not None:
                calls.append(call)

    if violations:
        raise PlanParseError(violations)
    return Plan(version=document['version'], guideline_id=document['guideline_id'],
                patient_id=document['patient_id'], calls=calls)


def serialize_plan(plan: Plan) -> str:
    return json.dumps(plan.model_dump(mode='json'), indent=2) + '\n'


def validate_plan(plan: Plan, catalog: StructureCatalog, initial_rois: Iterable[str]) -> ValidationReport:
    """
    Simulate the plan's dataflow in call order and report every violation found
    """
    violations = []
    if not plan.calls:
        violations.append(Violation(E_EMPTY_PLAN, None, "the plan has no calls"))

    producers = {name: None for name in initial_rois}
    previous_id = 0
    for call in plan.calls:
        cid = call.id
        if cid <= 0:
            violations.append(Violation(E_SCHEMA, cid, f"call id {cid} must be a positive integer"))
        elif cid <= previous_id:
            violations.append(Violation(E_SCHEMA, cid, f"call ids must strictly increase, {cid} follows {previous_id}"))
        previous_id = max(previous_id, cid)

        for name in call.inputs() + call.outputs():
            if not is_roi_name(name):
                violations.append(Violation(E_BAD_NAME, cid, f"ROI name '{name}' must be 1-64 letters, digits "
                                                             f"or underscores"))

        if call.tool == 'dilate':
            negative = [f"{k}={v:g}" for k, v in call.args.margin.values().items() if v < 0]
            if negative:
                violations.append(Violation(E_NEG_MARGIN, cid, f"negative margin component(s): {', '.join(negative)}"))
        elif call.tool == 'segment':
            for structure in call.args.structures:
                if structure not in catalog:
                    violations.append(Violation(E_UNKNOWN_STRUCTURE, cid,
                                                f"'{structure}' is not a segmentable structure; available: "
                                                f"{', '.join(catalog.names)}"))

        for name in call.inputs():
            if name not in producers:
                violations.append(Violation(E_UNDEF_ROI, cid, f"ROI '{name}' is used before any call defines it"))

        for name in call.outputs():
            if name in producers:
                origin = 'an initial ROI' if producers[name] is None else f"already produced by call {producers[name]}"
                violations.append(Violation(E_DUP_OUTPUT, cid, f"output '{name}' is {origin}"))
            else:
                producers[name] = cid
    return ValidationReport(tuple(violations))


def check_plan_document(document: Union[str, bytes, Mapping[str, Any]], catalog: StructureCatalog,
                        initial_rois: Iterable[str]) -> Tuple[Optional[Plan], ValidationReport]:
    """
    Parse and validate in one step, folding parse errors into the report
    """
    try:
        plan = parse_plan(document)
    except PlanParseError as e:
        return None, ValidationReport(tuple(e.violations))
    return plan, validate_plan(plan, catalog, initial_rois)


@dataclass(frozen=True)
class MarginRangeSpec:
    """
    A guideline margin given as a range, e.g. "5-10 mm" for the radial CTV margin
    """

    role: str
    low: float
    high: float

    def __post_init__(self):
        if not (math.isfinite(self.low) and math.isfinite(self.high) and 0 <= self.low <= self.high):
            raise MarginError(f"margin range '{self.role}' needs 0 <= low <= high, got ({self.low}, {self.high})")


def resolve_margin_range(spec: MarginRangeSpec, context: PatientContext,
                         warnings: Optional[List[str]] = None) -> float:
    """
    The context's override for `spec.role` clamped into [low, high], else the midpoint
    """
    override = context.preferences.get(spec.role)
    if override is None:
        return (spec.low + spec.high) / 2
    value = min(max(override, spec.low), spec.high)
    if value != override:
        message = (f"preference {spec.role}={override:g} mm lies outside [{spec.low:g}, {spec.high:g}] mm, "
                   f"clamped to {value:g} mm")
        logger.warning(message)
        if warnings is not None:
            warnings.append(message)
    return float(value)


def _mm(value: float) -> str:
    return f"{round(value, 1):.1f}"


def _call_key(call: ToolCall, roi_keys: Mapping[str, str]) -> str:
    def ref(name):
        if name not in roi_keys:
            raise CanonicalizationError(f"call {call.id} references undefined ROI '{name}'")
        return roi_keys[name]

    args = call.args
    if call.tool == 'segment':
        return f"segment(structures=[{','.join(sorted(args.structures))}])"
    if call.tool == 'dilate':
        margin = ','.join(_mm(v) for v in args.margin.values().values())
        return f"dilate(input={ref(args.input)},margin=[{margin}])"
    if call.tool == 'subtract':
        return f"subtract(input={ref(args.input)},subtrahends=[{','.join(sorted(ref(n) for n in args.subtrahends))}])"
    return f"{call.tool}(inputs=[{','.join(sorted(ref(n) for n in args.inputs))}])"


def canonical_keys(plan: Plan, initial_rois: Iterable[str]) -> List[str]:
    """
    Canonical key of every call, in plan order. ROI references are replaced by "INPUT:<name>" for initial ROIs
    and by their producer's key otherwise, so intermediate names never matter.
    """
    roi_keys = {name: f"INPUT:{name}" for name in initial_rois}
    keys = []
    for call in plan.calls:
        key = _call_key(call, roi_keys)
        keys.append(key)
        if call.tool == 'segment':
            for output, structure in call.segment_outputs():
                roi_keys[output] = f"segment(structures=[{structure}])"
        else:
            roi_keys[call.output] = key
    return keys


def canonicalize_call(call: ToolCall, plan: Plan, initial_rois: Iterable[str]) -> str:
    for position, candidate in enumerate(plan.calls):
        if candidate is call or candidate == call:
            prefix = plan.model_copy(update={'calls': plan.calls[:position + 1]})
            return canonical_keys(prefix, initial_rois)[-1]
    raise CanonicalizationError(f"call {call.id} is not part of the plan")

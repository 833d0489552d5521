import re
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, StrictInt, StrictStr

from delineo.core import MarginVector, MARGIN_FIELDS
from delineo.core.typing import *

PLAN_VERSION = '1'
TOOLS = ('segment', 'dilate', 'union', 'subtract', 'intersect')
ToolName = Literal['segment', 'dilate', 'union', 'subtract', 'intersect']

ROI_NAME = re.compile(r'^[A-Za-z0-9_]{1,64}$')


def is_roi_name(name: str) -> bool:
    return bool(ROI_NAME.match(name))


class _Args(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class MarginArgs(_Args):
    """
    Margin as written in a plan. Signs are not checked here: a negative component is a validation
    finding (E_NEG_MARGIN), not a shape error.
    """

    x_neg: float = Field(allow_inf_nan=False)
    x_pos: float = Field(allow_inf_nan=False)
    y_neg: float = Field(allow_inf_nan=False)
    y_pos: float = Field(allow_inf_nan=False)
    z_neg: float = Field(allow_inf_nan=False)
    z_pos: float = Field(allow_inf_nan=False)

    def values(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in MARGIN_FIELDS}

    def to_vector(self) -> MarginVector:
        return MarginVector(**self.values())

    @staticmethod
    def from_vector(margin: MarginVector) -> 'MarginArgs':
        return MarginArgs(**margin.to_dict())


class SegmentArgs(_Args):
    structures: List[StrictStr] = Field(min_length=1)


class DilateArgs(_Args):
    input: StrictStr
    margin: MarginArgs


class UnionArgs(_Args):
    inputs: List[StrictStr] = Field(min_length=1)


class SubtractArgs(_Args):
    input: StrictStr
    subtrahends: List[StrictStr] = Field(min_length=1)


class IntersectArgs(_Args):
    inputs: List[StrictStr] = Field(min_length=2, max_length=2)


ARGS_MODELS = {
    'segment': SegmentArgs,
    'dilate': DilateArgs,
    'union': UnionArgs,
    'subtract': SubtractArgs,
    'intersect': IntersectArgs,
}

ToolArgs = Union[SegmentArgs, DilateArgs, UnionArgs, SubtractArgs, IntersectArgs]


class ToolCall(BaseModel):
    """
    One plan step. `output` is a single ROI name, except for segment which may name one output per structure.
    """

    model_config = ConfigDict(extra='forbid', frozen=True)

    id: StrictInt
    tool: ToolName
    args: ToolArgs
    output: Union[StrictStr, List[StrictStr]]

    def inputs(self) -> List[str]:
        """
        ROI names this call reads
        """
        args = self.args
        if self.tool == 'dilate':
            return [args.input]
        if self.tool == 'subtract':
            return [args.input] + list(args.subtrahends)
        if self.tool in ('union', 'intersect'):
            return list(args.inputs)
        return []

    def outputs(self) -> List[str]:
        return list(self.output) if isinstance(self.output, list) else [self.output]

    def segment_outputs(self) -> List[Tuple[str, str]]:
        """
        (output ROI, structure) pairs of a segment call
        """
        assert self.tool == 'segment', "only segment calls produce per-structure outputs"
        return list(zip(self.outputs(), self.args.structures))

    def describe(self) -> str:
        """
        One human-readable line: tool, inputs, margins, output
        """
        args = self.args
        if self.tool == 'segment':
            body = ', '.join(args.structures)
        elif self.tool == 'dilate':
            m = args.margin
            body = (f"{args.input}  margin mm: R {m.x_neg:g} / L {m.x_pos:g}, A {m.y_neg:g} / P {m.y_pos:g}, "
                    f"I {m.z_neg:g} / S {m.z_pos:g}")
        elif self.tool == 'subtract':
            body = f"{args.input} minus {', '.join(args.subtrahends)}"
        else:
            body = ', '.join(args.inputs)
        return f"[{self.id}] {self.tool:<9} {body} -> {', '.join(self.outputs())}"


class Plan(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    version: StrictStr = PLAN_VERSION
    guideline_id: StrictStr
    patient_id: StrictStr
    calls: List[ToolCall]

    def outputs(self) -> List[str]:
        return [name for call in self.calls for name in call.outputs()]

    def summary_lines(self) -> List[str]:
        header = f"plan for patient {self.patient_id} under guideline {self.guideline_id} ({len(self.calls)} calls)"
        return [header] + [call.describe() for call in self.calls]

    def target_outputs(self) -> List[str]:
        """
        Outputs of geometric calls that no later union, subtract or intersect consumes: the final target
        volumes (a target may still seed a later dilation, as the CTV seeds the PTV).
        """
        combined = {name for call in self.calls if call.tool in ('union', 'subtract', 'intersect')
                    for name in call.inputs()}
        return [name for call in self.calls if call.tool != 'segment'
                for name in call.outputs() if name not in combined]

import json
from dataclasses import dataclass

from delineo.core.errors import CatalogError, GuidelineError
from delineo.core.typing import *
from delineo.plan import StructureCatalog, AliasTable, PatientContext, ValidationReport, MarginRangeSpec
from delineo.plan import resolve_margin_range, TOOLS, PLAN_VERSION

CTV_TEMPLATE = 'CTV = (GTV ⊕ m_ctv) \\ OARs'
PTV_TEMPLATE = 'PTV = CTV ⊕ m_ptv'

SEQUENCING_STEPS = (
    "Check the initial ROIs and the segmentable structures listed above. This step is context only: "
    "do not emit a call for it.",
    "segment: delineate every OAR the guideline names as a barrier.",
    "union: combine those OARs into one exclusion mask.",
    "dilate: expand the GTV by m_ctv into the CTV base.",
    "subtract: remove the exclusion mask from the CTV base; the result is the CTV.",
    "dilate: expand the CTV by m_ptv into the PTV.",
    "Your plan is validated against the schema. If violations come back, answer with a corrected, complete plan.",
)

TOOL_SIGNATURES = (
    ('segment', '{"structures": [structure, ...]}', 'one ROI name per structure (array), or one name for one '
                                                    'structure'),
    ('dilate', '{"input": ROI, "margin": {"x_neg": mm, "x_pos": mm, "y_neg": mm, "y_pos": mm, "z_neg": mm, '
               '"z_pos": mm}}', 'one ROI name'),
    ('union', '{"inputs": [ROI, ...]}', 'one ROI name'),
    ('subtract', '{"input": ROI, "subtrahends": [ROI, ...]}', 'one ROI name'),
    ('intersect', '{"inputs": [ROI, ROI]}', 'one ROI name'),
)
assert tuple(name for name, _, _ in TOOL_SIGNATURES) == TOOLS

_EXAMPLE_PLAN = {
    'version': PLAN_VERSION,
    'guideline_id': '<guideline id>',
    'patient_id': '<patient id>',
    'calls': [
        {'id': 1, 'tool': 'segment', 'args': {'structures': ['<OAR_A>', '<OAR_B>']},
         'output': ['<OAR_A>', '<OAR_B>']},
        {'id': 2, 'tool': 'union', 'args': {'inputs': ['<OAR_A>', '<OAR_B>']}, 'output': 'Exclusion'},
        {'id': 3, 'tool': 'dilate', 'args': {'input': 'GTV', 'margin': {'x_neg': 0, 'x_pos': 0, 'y_neg': 0,
                                                                          'y_pos': 0, 'z_neg': 0, 'z_pos': 0}},
         'output': 'CTV_base'},
    ],
}


@dataclass(frozen=True)
class GuidelineDoc:
    id: str
    body: str

    def __post_init__(self):
        if not self.body.strip():
            raise GuidelineError(f"guideline '{self.id}' is empty")

    @staticmethod
    def from_file(path: PathLike, id: Optional[str] = None) -> 'GuidelineDoc':
        path = Path(path)
        try:
            body = path.read_text(encoding='utf-8')
        except (OSError, UnicodeDecodeError) as e:
            raise GuidelineError(f"cannot read guideline {path}: {e}") from e
        return GuidelineDoc(id=id or path.stem, body=body)


def build_system_prompt(catalog: StructureCatalog, aliases: AliasTable, initial_rois: Sequence[str]) -> str:
    """
    The planner's system prompt: role and target templates, guideline parameterization, tool-call sequencing,
    the closed tool list and the plan document format. A pure function of its arguments.
    """
    if not len(catalog):
        raise CatalogError("the structure catalog is empty")
    lines = [
        "# Role",
        "You are an expert radiation oncology guideline-to-implementation agent. You read a clinical contouring "
        "guideline and write an executable delineation plan as an ordered list of tool calls.",
        "Every plan must follow these target volume templates:",
        f"  {CTV_TEMPLATE}",
        f"  {PTV_TEMPLATE}",
        "where ⊕ is a dilation by a direction-specific margin vector and \\ removes the organs at risk that act as "
        "anatomical barriers.",
        "",
        "# Guideline parameterization",
    ]
    if len(aliases):
        lines.append("OAR alias examples (guideline term -> structure names):")
        lines += [f"  - {term} -> {', '.join(targets)}" for term, targets in aliases.items()]
    else:
        lines.append("OAR alias examples: none. Use the structure names below as written.")
    lines += [
        "When a term maps to several structures, segment every component and union them before use.",
        "Segmentable structures:",
        *[f"  - {name}" for name in catalog.names],
        f"ROIs present before the plan runs: {', '.join(initial_rois) if initial_rois else 'none'}",
        "When the guideline gives a margin as a range (e.g. 5-10 mm), resolve it with the patient context: use the "
        "physician preference for that margin clamped into the range, otherwise the midpoint of the range.",
        "Margin directions follow LPS patient axes: x_neg right, x_pos left, y_neg anterior, y_pos posterior, "
        "z_neg inferior, z_pos superior. Margins are in mm and never negative.",
        "",
        "# Tool-call sequencing",
        *[f"{n}. {step}" for n, step in enumerate(SEQUENCING_STEPS, start=1)],
        "",
        "# Tools",
        f"Exactly these tools exist: {', '.join(TOOLS)}.",
        *[f"  - {name} args {signature}; output: {output}" for name, signature, output in TOOL_SIGNATURES],
        "",
        "# Plan document",
        "Answer with one JSON object (optionally inside a ```json fenced block) shaped like this example:",
        json.dumps(_EXAMPLE_PLAN, indent=2),
        "Rules: call ids start at 1 and strictly increase; each call reads only ROIs that exist already; every "
        "output name is new and differs from the initial ROIs; ROI names use letters, digits and underscores "
        "(at most 64 characters). Name the final volumes CTV and PTV.",
    ]
    return '\n'.join(lines) + '\n'


def build_user_message(guideline: GuidelineDoc, context: PatientContext,
                       margin_ranges: Sequence[MarginRangeSpec] = ()) -> str:
    """
    Guideline text followed by a labeled patient-context block
    """
    lines = [f"# Guideline: {guideline.id}", guideline.body.strip(), "", "# Patient context",
             f"patient_id: {context.patient_id}"]
    if context.tumor_site:
        lines.append(f"tumor_site: {context.tumor_site}")
    if context.dose_level:
        lines.append(f"dose_level: {context.dose_level}")
    lines.append(f"initial_rois: {', '.join(context.initial_rois)}")
    for role, value in sorted(context.preferences.items()):
        lines.append(f"preference.{role}: {value:g} mm")
    if margin_ranges:
        lines += ["", "# Margin ranges resolved for this patient"]
        for spec in margin_ranges:
            value = resolve_margin_range(spec, context)
            lines.append(f"{spec.role}: {spec.low:g}-{spec.high:g} mm -> {value:g} mm")
    lines += ["", f"Write the plan with guideline_id \"{guideline.id}\" and patient_id \"{context.patient_id}\"."]
    return '\n'.join(lines) + '\n'


def format_refinement_message(report: ValidationReport) -> str:
    """
    Feedback for one refinement round: every violation with its code and call id
    """
    if report.is_valid:
        raise ValueError("a refinement message needs at least one violation")
    lines = [f"Your plan failed validation with {len(report)} violation(s):"]
    lines += [f"{n}. {line}" for n, line in enumerate(report.format_lines(), start=1)]
    lines.append("Fix every violation and answer with the corrected, complete plan as one JSON object.")
    return '\n'.join(lines) + '\n'

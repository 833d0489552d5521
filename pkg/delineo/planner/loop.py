import json
import logging
import re
from dataclasses import dataclass

from delineo.core.errors import BackendError, PlanningError
from delineo.core.typing import *
from delineo.plan import (Plan, StructureCatalog, AliasTable, PatientContext, ValidationReport, Violation,
                          MarginRangeSpec, check_plan_document)
from delineo.plan.report import E_SCHEMA
from .backends import PlannerBackend, ChatMessage
from .prompt import GuidelineDoc, build_system_prompt, build_user_message, format_refinement_message

logger = logging.getLogger(__name__)

DEFAULT_MAX_REFINE = 3
_FENCE = re.compile(r"```[\w-]*[ \t]*\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class PlanningResult:
    plan: Plan
    attempts: int
    transcript: Tuple[ChatMessage, ...]
    reports: Tuple[ValidationReport, ...]

    def transcript_dicts(self) -> List[Dict[str, str]]:
        return [m.to_dict() for m in self.transcript]


def extract_plan_document(completion: str) -> Optional[dict]:
    """
    Plan document in a completion: the whole text if it parses, else the fenced code blocks in order. The first
    object carrying `calls` wins; failing that, the first object at all, so its schema problems get reported.
    """
    objects = []
    for candidate in [completion.strip()] + _FENCE.findall(completion):
        try:
            document = json.loads(candidate)
        except ValueError:
            continue
        if isinstance(document, dict):
            if 'calls' in document:
                return document
            objects.append(document)
    return objects[0] if objects else None


def check_completion(completion: str, catalog: StructureCatalog,
                     initial_rois: Sequence[str]) -> Tuple[Optional[Plan], ValidationReport]:
    document = extract_plan_document(completion)
    if document is None:
        return None, ValidationReport((Violation(E_SCHEMA, None, "no JSON plan document found in the reply"),))
    return check_plan_document(document, catalog, initial_rois)


def generate_plan(backend: PlannerBackend, guideline: GuidelineDoc, context: PatientContext,
                  catalog: StructureCatalog, aliases: AliasTable, max_refine: int = DEFAULT_MAX_REFINE,
                  margin_ranges: Sequence[MarginRangeSpec] = ()) -> PlanningResult:
    """
    Ask the backend for a plan and feed validation reports back until one validates or `max_refine`
    backend calls have been spent.
    """
    if max_refine < 1:
        raise PlanningError(f"max_refine must be at least 1, got {max_refine}")
    transcript = [
        ChatMessage('system', build_system_prompt(catalog, aliases, context.initial_rois)),
        ChatMessage('user', build_user_message(guideline, context, margin_ranges)),
    ]
    reports = []
    for attempt in range(1, max_refine + 1):
        try:
            completion = backend.complete(tuple(transcript))
        except BackendError as e:
            raise PlanningError(f"planner backend failed on attempt {attempt}: {e}", transcript,
                                reports[-1] if reports else None, attempt) from e
        transcript.append(ChatMessage('assistant', completion))

        plan, report = check_completion(completion, catalog, context.initial_rois)
        reports.append(report)
        if report.is_valid:
            logger.info("plan for %s validated after %d attempt(s)", context.patient_id, attempt)
            return PlanningResult(plan, attempt, tuple(transcript), tuple(reports))

        logger.info("attempt %d/%d for %s: %s", attempt, max_refine, context.patient_id,
                    ', '.join(report.codes()))
        if attempt < max_refine:
            transcript.append(ChatMessage('user', format_refinement_message(report)))

    raise PlanningError(f"no valid plan after {max_refine} attempt(s)", transcript, reports[-1], max_refine)

from delineo.plan.context import PatientContext
from .backends import ChatMessage, PlannerBackend, ScriptedBackend, RemoteBackend
from .prompt import (GuidelineDoc, build_system_prompt, build_user_message, format_refinement_message,
                     CTV_TEMPLATE, PTV_TEMPLATE)
from .loop import PlanningResult, generate_plan, extract_plan_document, check_completion, DEFAULT_MAX_REFINE

from .calls import (ToolCall, Plan, MarginArgs, SegmentArgs, DilateArgs, UnionArgs, SubtractArgs, IntersectArgs,
                    TOOLS, PLAN_VERSION, is_roi_name)
from .catalog import StructureCatalog, AliasTable, resolve_aliases, expand_terms
from .context import PatientContext
from .report import Violation, ValidationReport, VIOLATION_CODES
from .functions import (parse_plan, serialize_plan, validate_plan, check_plan_document, MarginRangeSpec,
                        resolve_margin_range, canonicalize_call, canonical_keys)

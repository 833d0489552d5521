from .functions import (dsc, msd, sensitivity, precision, tool_call_f1, matched_calls, evaluate_target,
                        TargetMetrics, CaseMetrics)
from .report import (evaluate_case, evaluate_cases, summarize, write_report, evaluate_guidelines,
                     evaluate_guideline_root, COLUMNS, GUIDELINE_COLUMNS, TARGETS)

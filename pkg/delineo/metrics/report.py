import json
import logging
import math

import pandas as pd

from delineo.core.errors import DelineoError
from delineo.core.nrrd import read_mask
from delineo.core.typing import *
from delineo.engine.case import ground_truth_path, CASE_FILE
from delineo.plan import Plan, parse_plan
from .functions import evaluate_target, tool_call_f1, matched_calls, CaseMetrics

logger = logging.getLogger(__name__)

COLUMNS = ['case_id', 'target', 'dsc', 'msd_mm', 'sensitivity', 'precision', 'tool_call_f1', 'error']
METRIC_COLUMNS = ['dsc', 'msd_mm', 'sensitivity', 'precision', 'tool_call_f1']
TARGETS = ('CTV', 'PTV')
PLAN_FILE = 'plan.json'
REPORT_CSV = 'report.csv'
SUMMARY_JSON = 'summary.json'
REFERENCE_PLAN_FILE = 'reference_plan.json'
GUIDELINE_COLUMNS = ['guideline_id', 'generated_calls', 'reference_calls', 'matched_calls', 'tool_call_f1', 'error']


def _case_id(gt_dir: Path) -> str:
    case_file = gt_dir / CASE_FILE
    if case_file.is_file():
        try:
            return str(json.loads(case_file.read_text(encoding='utf-8')).get('case_id') or gt_dir.name)
        except ValueError:
            pass
    return gt_dir.name


def evaluate_case(pred_dir: PathLike, gt_dir: PathLike, targets: Sequence[str] = TARGETS,
                  reference_plan: Optional[Plan] = None, initial_rois: Sequence[str] = ('GTV',)) -> CaseMetrics:
    """
    Compare <pred_dir>/<target>.nrrd with the case's <target>_gt.nrrd. Problems with one target become an error
    entry for that target instead of an exception.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    case_id = _case_id(gt_dir)
    results, errors = [], {}
    for target in targets:
        try:
            results.append(evaluate_target(target, read_mask(pred_dir / f"{target}.nrrd"),
                                           read_mask(ground_truth_path(gt_dir, target))))
        except (OSError, DelineoError) as e:
            logger.warning("case %s, %s: %s", case_id, target, e)
            errors[target] = str(e)

    f1 = None
    plan_path = pred_dir / PLAN_FILE
    if reference_plan is not None and plan_path.is_file():
        try:
            f1 = tool_call_f1(parse_plan(plan_path.read_text(encoding='utf-8')), reference_plan, initial_rois)
        except DelineoError as e:
            errors['plan'] = str(e)
    return CaseMetrics(case_id, tuple(results), f1, errors)


def _case_pairs(pred_root: Path, gt_root: Path, targets: Sequence[str]) -> List[Tuple[Path, Path]]:
    if any((pred_root / f"{t}.nrrd").is_file() for t in targets) or (gt_root / 'case.json').is_file():
        return [(pred_root, gt_root)]
    return [(d, gt_root / d.name) for d in sorted(pred_root.iterdir()) if d.is_dir()]


def evaluate_cases(pred_root: PathLike, gt_root: PathLike, targets: Sequence[str] = TARGETS,
                   reference_plan: Optional[Plan] = None, initial_rois: Sequence[str] = ('GTV',)) -> pd.DataFrame:
    """
    One row per (case, target). Either both roots are single case directories or both hold one sub-directory
    per case, matched by name.
    """
    pred_root, gt_root = Path(pred_root), Path(gt_root)
    rows = []
    for pred_dir, gt_dir in _case_pairs(pred_root, gt_root, targets):
        rows += evaluate_case(pred_dir, gt_dir, targets, reference_plan, initial_rois).rows()
    return pd.DataFrame(rows, columns=COLUMNS)


def summarize(report: pd.DataFrame) -> Dict[str, Dict[str, Optional[float]]]:
    """
    Mean and sample SD of every metric column over the rows without errors
    """
    ok = report[report['error'] == ''] if len(report) else report
    summary = {}
    for column in METRIC_COLUMNS:
        values = pd.to_numeric(ok[column], errors='coerce').dropna()
        mean, sd = values.mean(), values.std(ddof=1)
        summary[column] = {'mean': None if math.isnan(mean) else float(mean),
                           'sd': None if math.isnan(sd) else float(sd), 'n': int(values.size)}
    return summary


def write_report(report: pd.DataFrame, out_dir: PathLike) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out_dir / REPORT_CSV, out_dir / SUMMARY_JSON
    report.to_csv(csv_path, index=False, float_format='%.6f')
    summary = {'cases': int(report['case_id'].nunique()), 'rows': len(report),
               'errors': int((report['error'] != '').sum()), 'metrics': summarize(report)}
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return csv_path, json_path


def _guideline_row(guideline_id: str, error: str = '') -> dict:
    return {**dict.fromkeys(GUIDELINE_COLUMNS, math.nan), 'guideline_id': guideline_id, 'error': error}


def _compare(guideline_id: str, generated: Plan, reference: Plan, initial_rois: Sequence[str]) -> dict:
    try:
        n_generated, n_reference, hits = matched_calls(generated, reference, initial_rois)
        f1 = tool_call_f1(generated, reference, initial_rois)
    except DelineoError as e:
        logger.warning("guideline %s: %s", guideline_id, e)
        return _guideline_row(guideline_id, str(e))
    return {**_guideline_row(guideline_id), 'generated_calls': n_generated, 'reference_calls': n_reference,
            'matched_calls': hits, 'tool_call_f1': f1}


def evaluate_guidelines(plans: Mapping[str, Tuple[Plan, Plan]],
                        initial_rois: Sequence[str] = ('GTV',)) -> pd.DataFrame:
    """
    Tool Call F1 of a generated plan against its reference, one row per guideline id. `plans` maps the id to
    (generated, reference); a pair that cannot be canonicalized gets an error row.
    """
    rows = [_compare(gid, *plans[gid], initial_rois) for gid in sorted(plans)]
    return pd.DataFrame(rows, columns=GUIDELINE_COLUMNS)


def evaluate_guideline_root(root: PathLike, initial_rois: Sequence[str] = ('GTV',)) -> pd.DataFrame:
    """
    Same report for a directory holding one folder per guideline, each with the generated plan.json next to
    reference_plan.json
    """
    rows = []
    for folder in sorted(d for d in Path(root).iterdir() if d.is_dir()):
        try:
            generated = parse_plan((folder / PLAN_FILE).read_bytes())
            reference = parse_plan((folder / REFERENCE_PLAN_FILE).read_bytes())
        except (OSError, DelineoError) as e:
            logger.warning("guideline %s: %s", folder.name, e)
            rows.append(_guideline_row(folder.name, str(e)))
            continue
        rows.append(_compare(folder.name, generated, reference, initial_rois))
    return pd.DataFrame(rows, columns=GUIDELINE_COLUMNS)

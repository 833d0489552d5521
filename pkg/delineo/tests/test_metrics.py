import json
import math
import shutil

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, assume, strategies as st
from scipy.spatial.distance import cdist

from delineo.core import Grid, BinaryMask, make_mask
from delineo.core.errors import MetricError, GridMismatchError, CanonicalizationError
from delineo.core.nrrd import read_mask, write_mask
from delineo.metrics import (dsc, msd, sensitivity, precision, tool_call_f1, evaluate_cases, summarize,
                             evaluate_guidelines, evaluate_guideline_root, GUIDELINE_COLUMNS,
                             write_report, COLUMNS)
from delineo.plan import AliasTable, PatientContext, StructureCatalog, parse_plan, serialize_plan
from delineo.planner import GuidelineDoc, ScriptedBackend, generate_plan
from .conftest import FIXTURES, box_mask, plan_document


@st.composite
def mask_pairs(draw, max_dim=12):
    dims = tuple(draw(st.integers(1, max_dim)) for _ in range(3))
    spacing = tuple(draw(st.sampled_from([0.5, 1.0, 1.5, 2.0, 3.0])) for _ in range(3))
    grid = Grid(dims, spacing)
    rng = np.random.default_rng(draw(st.integers(0, 2 ** 32 - 1)))
    density = draw(st.sampled_from([0.01, 0.1, 0.4, 0.8]))
    return BinaryMask(grid, rng.random(dims) < density), BinaryMask(grid, rng.random(dims) < density)


def _brute_surface(array):
    padded = np.pad(array, 1)
    inner = padded[1:-1, 1:-1, 1:-1].copy()
    for axis in range(3):
        for step in (-1, 1):
            inner &= np.roll(padded, step, axis=axis)[1:-1, 1:-1, 1:-1]
    return np.argwhere(array & ~inner)


def _nearest(src, dst, chunk=512):
    return np.concatenate([cdist(src[i:i + chunk], dst).min(axis=1) for i in range(0, len(src), chunk)])


def _brute_msd(a, b):
    spacing = np.asarray(a.grid.spacing)
    pa, pb = _brute_surface(a.array) * spacing, _brute_surface(b.array) * spacing
    return (_nearest(pa, pb).mean() + _nearest(pb, pa).mean()) / 2


def test_dsc_examples(grid):
    a = box_mask(grid, (0, 0, 0), (9, 9, 0))
    b = box_mask(grid, (2, 0, 0), (11, 9, 0))
    assert a.voxel_count() == b.voxel_count() == 100
    assert dsc(a, b) == pytest.approx(0.8)
    assert dsc(a, a) == 1.0
    assert dsc(a, box_mask(grid, (0, 0, 5), (3, 3, 6))) == 0.0
    assert dsc(BinaryMask.empty(grid), BinaryMask.empty(grid)) == 1.0
    assert dsc(a, BinaryMask.empty(grid)) == 0.0


def test_sensitivity_and_precision_examples(grid):
    gt = box_mask(grid, (0, 0, 0), (9, 0, 0))
    pred = box_mask(grid, (3, 0, 0), (11, 0, 0)) | box_mask(grid, (0, 5, 0), (10, 5, 0))
    assert gt.voxel_count() == 10 and pred.voxel_count() == 20
    assert sensitivity(pred, gt) == pytest.approx(0.7)
    assert precision(pred, gt) == pytest.approx(0.35)
    pred2 = box_mask(grid, (0, 0, 0), (9, 1, 0)) - box_mask(grid, (0, 1, 0), (4, 1, 0))
    gt2 = box_mask(grid, (0, 0, 0), (9, 0, 0)) | box_mask(grid, (0, 3, 0), (4, 3, 0))
    assert pred2.voxel_count() == 15
    assert precision(pred2 | box_mask(grid, (0, 7, 0), (4, 7, 0)), gt2) == pytest.approx(0.5)
    assert sensitivity(gt, gt) == precision(gt, gt) == 1.0
    assert sensitivity(box_mask(grid, (0, 0, 0), (11, 1, 0)), gt) == 1.0
    assert precision(box_mask(grid, (0, 5, 5), (1, 5, 5)), gt) == 0.0
    with pytest.raises(MetricError):
        sensitivity(gt, BinaryMask.empty(grid))
    with pytest.raises(MetricError):
        precision(BinaryMask.empty(grid), gt)


def test_precision_three_quarters(grid):
    pred = box_mask(grid, (0, 0, 0), (9, 1, 0))
    gt = box_mask(grid, (0, 0, 0), (9, 0, 0)) | box_mask(grid, (0, 1, 0), (4, 1, 0))
    assert pred.voxel_count() == 20
    assert precision(pred, gt) == pytest.approx(0.75)


def test_msd_examples():
    for spacing, expected in (((1.0, 1.0, 1.0), 3.0), ((2.0, 1.0, 1.0), 6.0)):
        g = Grid((8, 4, 4), spacing)
        a, b = make_mask(g, [(1, 1, 1)]), make_mask(g, [(4, 1, 1)])
        assert msd(a, b) == pytest.approx(expected, abs=1e-12)
        assert msd(a, a) == 0.0
    with pytest.raises(MetricError):
        msd(a, BinaryMask.empty(g))


def test_metrics_need_one_grid(grid):
    other = Grid(grid.dims, (1.0, 1.0, 2.0))
    with pytest.raises(GridMismatchError):
        dsc(BinaryMask.empty(grid), BinaryMask.empty(other))


@settings(max_examples=80, deadline=None)
@given(mask_pairs())
def test_metric_identities(pair):
    a, b = pair
    assume(not a.is_empty() and not b.is_empty())
    assert dsc(a, b) == dsc(b, a)
    assert 0.0 <= dsc(a, b) <= 1.0
    assert sensitivity(a, b) == precision(b, a)
    p, r = precision(a, b), sensitivity(a, b)
    assert 0.0 <= p <= 1.0 and 0.0 <= r <= 1.0
    expected = 2 * p * r / (p + r) if p + r else 0.0
    assert abs(dsc(a, b) - expected) <= 1e-12
    assert msd(a, b) == pytest.approx(msd(b, a), abs=1e-12)
    assert msd(a, a) == 0.0


@settings(max_examples=60, deadline=None)
@given(mask_pairs(max_dim=24))
def test_msd_matches_all_pairs(pair):
    a, b = pair
    assume(not a.is_empty() and not b.is_empty())
    assert abs(msd(a, b) - _brute_msd(a, b)) <= 1e-9


def _segment(call_id, name):
    return {'id': call_id, 'tool': 'segment', 'args': {'structures': [name]}, 'output': name}


def _dilate(call_id, src, out, mm):
    margin = {k: mm for k in ('x_neg', 'x_pos', 'y_neg', 'y_pos', 'z_neg', 'z_pos')}
    return {'id': call_id, 'tool': 'dilate', 'args': {'input': src, 'margin': margin}, 'output': out}


def _subtract(call_id, src, minus, out):
    return {'id': call_id, 'tool': 'subtract', 'args': {'input': src, 'subtrahends': [minus]}, 'output': out}


def test_tool_call_f1_arithmetic():
    reference = parse_plan(plan_document(_segment(1, 'Heart'), _segment(2, 'Lung_L'), _dilate(3, 'GTV', 'A', 5),
                                         _subtract(4, 'A', 'Heart', 'B'), _dilate(5, 'B', 'C', 3)))
    generated = parse_plan(plan_document(_segment(1, 'Heart'), _segment(2, 'Lung_L'), _dilate(3, 'GTV', 'A', 5),
                                         _subtract(4, 'A', 'Lung_L', 'B')))
    assert abs(tool_call_f1(generated, reference) - 2 * 0.75 * 0.6 / 1.35) <= 1e-9
    assert tool_call_f1(generated, reference) == tool_call_f1(reference, generated)


def test_tool_call_f1_identity_and_disjoint(reference_plan):
    assert tool_call_f1(reference_plan, reference_plan) == 1.0
    other = parse_plan(plan_document(_segment(1, 'SpinalCord'), _dilate(2, 'GTV', 'X', 2)))
    assert tool_call_f1(other, reference_plan) == 0.0


def test_tool_call_f1_ignores_renaming(reference_plan, reference_document):
    text = json.dumps(reference_document).replace('"Exclusion"', '"OAR_all"').replace('"CTV_base"', '"GTV_plus"')
    assert tool_call_f1(parse_plan(text), reference_plan) == 1.0


def test_tool_call_f1_counts_duplicates():
    once = parse_plan(plan_document(_segment(1, 'Heart')))
    twice = parse_plan(plan_document(_segment(1, 'Heart'),
                                     {'id': 2, 'tool': 'segment', 'args': {'structures': ['Heart']},
                                      'output': 'Heart2'}))
    assert tool_call_f1(twice, once) == pytest.approx(2 * 0.5 * 1.0 / 1.5)


def test_tool_call_f1_rejects_broken_plans(reference_plan):
    broken = parse_plan(plan_document({'id': 1, 'tool': 'union', 'args': {'inputs': ['OARs']}, 'output': 'X'}))
    with pytest.raises(CanonicalizationError):
        tool_call_f1(broken, reference_plan)


def _predict_ground_truth(case_dir, pred_dir):
    pred_dir.mkdir(parents=True)
    for target in ('CTV', 'PTV'):
        shutil.copy(case_dir / 'ground_truth' / f"{target}_gt.nrrd", pred_dir / f"{target}.nrrd")


def test_evaluate_single_case(phantom_case, tmp_path, reference_plan, reference_document):
    pred = tmp_path / 'pred'
    _predict_ground_truth(phantom_case, pred)
    (pred / 'plan.json').write_text(json.dumps(reference_document), encoding='utf-8')
    report = evaluate_cases(pred, phantom_case, reference_plan=reference_plan)
    assert list(report.columns) == COLUMNS
    assert report['target'].tolist() == ['CTV', 'PTV']
    assert (report['dsc'] == 1.0).all() and (report['msd_mm'] == 0.0).all()
    assert (report['tool_call_f1'] == 1.0).all()
    assert (report['error'] == '').all()
    assert report['case_id'].iloc[0] == 'phantom_0000'


def test_evaluate_root_with_errors(phantom_case, tmp_path):
    gt_root, pred_root = tmp_path / 'gt', tmp_path / 'pred'
    for name in ('a', 'b'):
        shutil.copytree(phantom_case, gt_root / name)
        _predict_ground_truth(phantom_case, pred_root / name)
    (gt_root / 'b' / 'ground_truth' / 'PTV_gt.nrrd').unlink()
    ctv = read_mask(pred_root / 'a' / 'CTV.nrrd')
    write_mask(pred_root / 'a' / 'CTV.nrrd', BinaryMask.empty(Grid(ctv.grid.dims, (1.0, 1.0, 1.0))))

    report = evaluate_cases(pred_root, gt_root)
    assert len(report) == 4
    errors = report[report['error'] != '']
    assert sorted(errors['target']) == ['CTV', 'PTV']
    assert 'PTV_gt.nrrd' in errors[errors['target'] == 'PTV']['error'].iloc[0]
    assert math.isnan(errors['dsc'].iloc[0])

    summary = summarize(report)
    assert summary['dsc'] == {'mean': 1.0, 'sd': 0.0, 'n': 2}
    assert summary['tool_call_f1']['mean'] is None

    csv_path, json_path = write_report(report, tmp_path / 'report')
    assert pd.read_csv(csv_path).shape == (4, len(COLUMNS))
    written = json.loads(json_path.read_text())
    assert written['errors'] == 2 and written['rows'] == 4


GUIDELINES = FIXTURES / 'guidelines'
GUIDELINE_COUNTS = {
    # (generated calls, reference calls, matched calls)
    'esophagus_consensus': (6, 6, 6),
    'esophagus_cross': (6, 5, 3),
    'esophagus_jastro2024': (5, 6, 4),
    'prostate_rtog0126': (3, 5, 1),
}


def _planned(guideline_id, guideline, catalog, aliases, completions):
    result = generate_plan(ScriptedBackend.from_directory(completions), GuidelineDoc.from_file(guideline, guideline_id),
                           PatientContext('phantom_0000'), catalog, aliases)
    assert result.attempts == 1
    return result.plan


def _guideline_plans():
    catalog = StructureCatalog.from_json(FIXTURES / 'catalog.json')
    plans = {'esophagus_consensus': (
        _planned('esophagus_consensus', FIXTURES / 'esophagus_consensus.md', catalog,
                 AliasTable.from_json(FIXTURES / 'aliases.json', catalog), FIXTURES / 'completions' / 'valid'),
        parse_plan((FIXTURES / 'reference_plan.json').read_bytes()))}
    for folder in sorted(GUIDELINES.iterdir()):
        catalog = StructureCatalog.from_json(folder / 'catalog.json')
        aliases = AliasTable.from_json(folder / 'aliases.json', catalog)
        plans[folder.name] = (_planned(folder.name, folder / 'guideline.md', catalog, aliases, folder / 'completions'),
                              parse_plan((folder / 'reference_plan.json').read_bytes()))
    return plans


def test_cross_guideline_tool_call_f1():
    report = evaluate_guidelines(_guideline_plans())
    assert list(report.columns) == GUIDELINE_COLUMNS
    assert report['guideline_id'].tolist() == sorted(GUIDELINE_COUNTS)
    assert (report['error'] == '').all()
    for row in report.itertuples():
        generated, reference, matched = GUIDELINE_COUNTS[row.guideline_id]
        assert (row.generated_calls, row.reference_calls, row.matched_calls) == (generated, reference, matched)
        assert row.tool_call_f1 == pytest.approx(2 * matched / (generated + reference), abs=1e-12)
    f1 = dict(zip(report['guideline_id'], report['tool_call_f1']))
    assert f1['esophagus_consensus'] == 1.0
    assert f1['esophagus_jastro2024'] == pytest.approx(8 / 11)
    assert f1['esophagus_cross'] == pytest.approx(6 / 11)
    assert f1['prostate_rtog0126'] == pytest.approx(0.25)


def test_guideline_root(tmp_path):
    for guideline_id, (generated, reference) in _guideline_plans().items():
        folder = tmp_path / guideline_id
        folder.mkdir()
        (folder / 'plan.json').write_text(serialize_plan(generated), encoding='utf-8')
        (folder / 'reference_plan.json').write_text(serialize_plan(reference), encoding='utf-8')
    (tmp_path / 'esophagus_cross' / 'plan.json').unlink()
    (tmp_path / 'prostate_rtog0126' / 'plan.json').write_text(json.dumps(plan_document(
        {'id': 1, 'tool': 'dilate', 'args': {'input': 'CTV', 'margin': {'x_neg': 5.0, 'x_pos': 5.0, 'y_neg': 5.0,
                                                                        'y_pos': 5.0, 'z_neg': 5.0, 'z_pos': 5.0}},
         'output': 'PTV'})), encoding='utf-8')

    report = evaluate_guideline_root(tmp_path)
    assert report['guideline_id'].tolist() == sorted(GUIDELINE_COUNTS)
    rows = report.set_index('guideline_id')
    assert rows.loc['esophagus_consensus', 'tool_call_f1'] == 1.0
    assert rows.loc['esophagus_jastro2024', 'tool_call_f1'] == pytest.approx(8 / 11)
    assert 'plan.json' in rows.loc['esophagus_cross', 'error']
    assert math.isnan(rows.loc['esophagus_cross', 'tool_call_f1'])
    assert "'CTV'" in rows.loc['prostate_rtog0126', 'error']
    assert math.isnan(rows.loc['prostate_rtog0126', 'matched_calls'])

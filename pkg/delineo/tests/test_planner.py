import json

import pytest
import requests

from delineo.core.errors import BackendError, ConfigError, PlanningError
from delineo.plan import AliasTable, MarginRangeSpec, PatientContext, ValidationReport, Violation
from delineo.planner import (ChatMessage, PlannerBackend, ScriptedBackend, RemoteBackend, build_system_prompt,
                             build_user_message, format_refinement_message, extract_plan_document, generate_plan,
                             CTV_TEMPLATE, PTV_TEMPLATE)
from .conftest import FIXTURES

COMPLETIONS = FIXTURES / 'completions'


def test_system_prompt(catalog, aliases):
    prompt = build_system_prompt(catalog, aliases, ('GTV',))
    for heading in ('# Role', '# Guideline parameterization', '# Tool-call sequencing', '# Tools', '# Plan document'):
        assert heading in prompt
    assert CTV_TEMPLATE in prompt and PTV_TEMPLATE in prompt
    assert '  - Lung -> Lung_L, Lung_R' in prompt
    assert '  - SpinalCord' in prompt
    assert 'segment, dilate, union, subtract, intersect' in prompt
    assert prompt == build_system_prompt(catalog, aliases, ('GTV',))


def test_system_prompt_without_aliases(catalog):
    assert 'OAR alias examples: none' in build_system_prompt(catalog, AliasTable({}), ('GTV',))


def test_user_message(guideline, context):
    message = build_user_message(guideline, context, [MarginRangeSpec('ctv_radial', 5, 10)])
    assert message.startswith('# Guideline: esophagus_consensus')
    assert 'patient_id: phantom_0000' in message
    assert 'tumor_site: mid-thoracic esophagus' in message
    assert 'ctv_radial: 5-10 mm -> 7.5 mm' in message

    preferred = PatientContext('p2', preferences={'ctv_radial': 6})
    assert 'ctv_radial: 5-10 mm -> 6 mm' in build_user_message(guideline, preferred,
                                                               [MarginRangeSpec('ctv_radial', 5, 10)])


def test_refinement_message():
    report = ValidationReport((Violation('E_UNDEF_ROI', 5, "ROI 'OARs' is used before any call defines it"),
                               Violation('E_EMPTY_PLAN', None, 'the plan has no calls')))
    message = format_refinement_message(report)
    assert "1. E_UNDEF_ROI (call 5): ROI 'OARs'" in message
    assert '2. E_EMPTY_PLAN (plan)' in message
    with pytest.raises(ValueError):
        format_refinement_message(ValidationReport())


def test_extract_plan_document(reference_document):
    raw = json.dumps(reference_document)
    assert extract_plan_document(raw) == reference_document
    fenced = f"Plan:\n```json\n{raw}\n```\nDone."
    assert extract_plan_document(fenced) == reference_document
    two_blocks = f"```\nnot json\n```\nthen\n```json\n{raw}\n```"
    assert extract_plan_document(two_blocks) == reference_document
    assert extract_plan_document('I cannot help with that.') is None
    assert extract_plan_document('```json\n[1, 2]\n```') is None
    margins = '```json\n{"ctv_radial": 7.5}\n```'
    assert extract_plan_document(f"{margins}\nso the plan is\n```json\n{raw}\n```") == reference_document
    assert extract_plan_document(margins) == {'ctv_radial': 7.5}


def test_valid_first(guideline, context, catalog, aliases):
    backend = ScriptedBackend.from_directory(COMPLETIONS / 'valid')
    result = generate_plan(backend, guideline, context, catalog, aliases)
    assert result.attempts == 1
    assert [m.role for m in result.transcript] == ['system', 'user', 'assistant']
    assert result.plan.target_outputs() == ['CTV', 'PTV']


def test_invalid_then_valid(guideline, context, catalog, aliases, reference_plan):
    backend = ScriptedBackend.from_directory(COMPLETIONS / 'undef_then_valid')
    result = generate_plan(backend, guideline, context, catalog, aliases, max_refine=3)
    assert result.attempts == 2
    assert result.plan == reference_plan
    assert [m.role for m in result.transcript] == ['system', 'user', 'assistant', 'user', 'assistant']
    feedback = result.transcript[3].content
    assert 'E_UNDEF_ROI (call 5)' in feedback
    assert result.reports[0].codes() == ['E_UNDEF_ROI']
    assert result.reports[1].is_valid


@pytest.mark.parametrize('max_refine', [1, 3, 5])
def test_always_invalid(guideline, context, catalog, aliases, max_refine):
    backend = ScriptedBackend.from_directory(COMPLETIONS / 'invalid')
    with pytest.raises(PlanningError) as info:
        generate_plan(backend, guideline, context, catalog, aliases, max_refine=max_refine)
    assert backend.calls == max_refine
    assert info.value.attempts == max_refine
    assert 'E_UNKNOWN_STRUCTURE' in info.value.report.codes()
    assert sum(m.role == 'assistant' for m in info.value.transcript) == max_refine


def test_max_refine_must_be_positive(guideline, context, catalog, aliases):
    with pytest.raises(PlanningError, match='max_refine'):
        generate_plan(ScriptedBackend(['{}']), guideline, context, catalog, aliases, max_refine=0)


def test_reply_without_json_is_a_schema_violation(guideline, context, catalog, aliases):
    with pytest.raises(PlanningError) as info:
        generate_plan(ScriptedBackend(['no plan today']), guideline, context, catalog, aliases, max_refine=2)
    assert info.value.report.codes() == ['E_SCHEMA']


class _FailingBackend(PlannerBackend):
    def complete(self, messages):
        raise BackendError('connection reset')


def test_backend_failure_becomes_planning_error(guideline, context, catalog, aliases):
    with pytest.raises(PlanningError) as info:
        generate_plan(_FailingBackend(), guideline, context, catalog, aliases)
    assert info.value.attempts == 1
    assert len(info.value.transcript) == 2


def test_scripted_backend_repeats_last():
    backend = ScriptedBackend(['a', 'b'])
    assert [backend.complete(()) for _ in range(4)] == ['a', 'b', 'b', 'b']


def test_scripted_backend_needs_files(tmp_path):
    with pytest.raises(ConfigError):
        ScriptedBackend.from_directory(tmp_path)


def test_remote_backend_needs_api_key(monkeypatch):
    monkeypatch.delenv('DELINEO_TEST_KEY', raising=False)
    with pytest.raises(ConfigError, match='DELINEO_TEST_KEY'):
        RemoteBackend('http://localhost:9', 'model', api_key_env='DELINEO_TEST_KEY')


class _Response:
    def __init__(self, payload, status=200):
        self.payload, self.status = payload, status

    def raise_for_status(self):
        if self.status >= 400:
            raise requests.exceptions.HTTPError(f"{self.status} error")

    def json(self):
        return self.payload


class _Session:
    def __init__(self, response=None, error=None):
        self.response, self.error, self.sent = response, error, []

    def post(self, url, headers, json, timeout):
        self.sent.append((url, headers, json))
        if self.error is not None:
            raise self.error
        return self.response


def _remote(monkeypatch, session):
    monkeypatch.setenv('DELINEO_TEST_KEY', 'secret')
    backend = RemoteBackend('http://llm.local/v1/', 'planner-model', api_key_env='DELINEO_TEST_KEY',
                            temperature=0.0)
    monkeypatch.setattr(backend, '_session', lambda: session)
    return backend


def test_remote_backend_request(monkeypatch):
    session = _Session(_Response({'choices': [{'message': {'role': 'assistant', 'content': '{"calls": []}'}}]}))
    backend = _remote(monkeypatch, session)
    assert backend.complete([ChatMessage('system', 's'), ChatMessage('user', 'u')]) == '{"calls": []}'
    url, headers, body = session.sent[0]
    assert url == 'http://llm.local/v1/chat/completions'
    assert headers['Authorization'] == 'Bearer secret'
    assert body == {'model': 'planner-model', 'temperature': 0.0,
                    'messages': [{'role': 'system', 'content': 's'}, {'role': 'user', 'content': 'u'}]}


@pytest.mark.parametrize('session', [
    _Session(error=requests.exceptions.ConnectionError('refused')),
    _Session(_Response({}, status=503)),
    _Session(_Response({'choices': []})),
    _Session(_Response({'choices': [{'message': {'content': ''}}]})),
])
def test_remote_backend_failures(monkeypatch, session):
    with pytest.raises(BackendError):
        _remote(monkeypatch, session).complete([ChatMessage('user', 'u')])

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace

from delineo.core.errors import (ConfigError, PlanningError, PlanValidationError, ExecutionError, DataflowError,
                                 PhantomError, PlanParseError, DelineoError, CatalogError, GuidelineError,
                                 UnknownStructureError)
from delineo.core.nrrd import write_mask
from delineo.core.typing import *
from delineo.engine import (load_case, initial_environment, execute_plan, FileSegmentationProvider,
                            RemoteSegmentationProvider)
from delineo.metrics import evaluate_cases, write_report, summarize
from delineo.phantom import PhantomSpec, esophageal_spec, generate_phantom
from delineo.plan import AliasTable, StructureCatalog, Plan, check_plan_document, parse_plan, serialize_plan
from delineo.planner import GuidelineDoc, ScriptedBackend, RemoteBackend, generate_plan
from .config import RunConfig, ExitCode, load_config, BACKENDS, APPROVAL_MODES

logger = logging.getLogger(__name__)

PLAN_FILE = 'plan.json'
TRANSCRIPT_FILE = 'transcript.json'
TRACE_FILE = 'trace.json'
APPROVAL_SUFFIX = '.approved'


class CommandFailed(Exception):
    def __init__(self, code: ExitCode, message: str, details: Sequence[str] = ()):
        super().__init__(message)
        self.code = code
        self.details = list(details)


def plan_digest(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def approval_path(plan_path: PathLike) -> Path:
    plan_path = Path(plan_path)
    return plan_path.with_name(plan_path.name.replace('.json', '') + APPROVAL_SUFFIX)


def is_approved(plan_path: PathLike) -> bool:
    flag = approval_path(plan_path)
    return flag.is_file() and flag.read_text(encoding='utf-8').strip() == plan_digest(plan_path)


def _write_json(path: Path, data: Any):
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + '\n', encoding='utf-8')


def _catalog(config: RunConfig, case) -> StructureCatalog:
    if config.catalog is not None:
        return StructureCatalog.from_json(config.catalog)
    return FileSegmentationProvider(case).catalog


def _aliases(config: RunConfig, catalog: StructureCatalog) -> AliasTable:
    if not config.aliases:
        return AliasTable({})
    try:
        return AliasTable.from_json(config.aliases, catalog)
    except UnknownStructureError as e:
        raise ConfigError(f"alias table {config.aliases}: {e}") from e


def _guideline(config: RunConfig) -> GuidelineDoc:
    try:
        return GuidelineDoc.from_file(config.guideline)
    except GuidelineError as e:
        raise ConfigError(str(e)) from e


def _provider(config: RunConfig, case, catalog: StructureCatalog):
    if config.segmentation_url:
        return RemoteSegmentationProvider(config.segmentation_url, case.grid, catalog.names)
    return FileSegmentationProvider(case)


def _backend(config: RunConfig):
    if config.backend == 'remote':
        r = config.remote
        return RemoteBackend(r.base_url, r.model, r.api_key_env, r.timeout, r.temperature, r.max_retries)
    config.require('scripted_dir')
    return ScriptedBackend.from_directory(config.scripted_dir)


def _review(plan: Plan, plan_path: Path, input_fn: Callable[[str], str]):
    print('\n'.join(plan.summary_lines()))
    answer = input_fn("approve this plan? [y/N] ").strip().lower()
    if answer not in ('y', 'yes'):
        raise CommandFailed(ExitCode.REJECTED, f"plan {plan_path} rejected by the reviewer")
    approval_path(plan_path).write_text(plan_digest(plan_path) + '\n', encoding='utf-8')


def cmd_plan(config: RunConfig, input_fn: Callable[[str], str] = input) -> Path:
    config.require('case', 'guideline')
    case = load_case(config.case)
    catalog = _catalog(config, case)
    aliases = _aliases(config, catalog)
    guideline = _guideline(config)
    backend = _backend(config)
    out = config.out
    out.mkdir(parents=True, exist_ok=True)

    try:
        result = generate_plan(backend, guideline, case.context, catalog, aliases,
                               config.max_refine, config.margin_ranges)
    except PlanningError as e:
        _write_json(out / TRANSCRIPT_FILE, [m.to_dict() for m in e.transcript])
        details = e.report.format_lines() if e.report is not None else []
        raise CommandFailed(ExitCode.PLANNING, str(e), details) from e

    plan_path = out / PLAN_FILE
    plan_path.write_text(serialize_plan(result.plan), encoding='utf-8')
    _write_json(out / TRANSCRIPT_FILE, result.transcript_dicts())
    approval_path(plan_path).unlink(missing_ok=True)
    logger.info("plan written to %s after %d attempt(s)", plan_path, result.attempts)
    if config.approve == 'interactive':
        _review(result.plan, plan_path, input_fn)
    else:
        print('\n'.join(result.plan.summary_lines()))
    return plan_path


def cmd_execute(config: RunConfig) -> Path:
    config.require('case')
    plan_path = config.plan or config.out / PLAN_FILE
    if not plan_path.is_file():
        raise ConfigError(f"plan file {plan_path} does not exist")
    case = load_case(config.case)
    catalog = _catalog(config, case)
    env = initial_environment(case)

    plan, report = check_plan_document(plan_path.read_bytes(), catalog, env.names())
    if not report.is_valid:
        raise CommandFailed(ExitCode.VALIDATION, f"plan {plan_path} failed validation", report.format_lines())
    if config.approve == 'interactive' and not is_approved(plan_path):
        raise CommandFailed(ExitCode.REJECTED, f"plan {plan_path} has no matching approval; run `plan` with "
                                               f"--approve interactive first")

    provider = _provider(config, case, catalog)
    try:
        result, trace = execute_plan(plan, env, provider, None if config.postprocess else (), case.case_id)
    except PlanValidationError as e:
        raise CommandFailed(ExitCode.VALIDATION, str(e), e.report.format_lines()) from e
    except (ExecutionError, DataflowError) as e:
        raise CommandFailed(ExitCode.EXECUTION, str(e)) from e

    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    for name in plan.target_outputs():
        write_mask(out / f"{name}.nrrd", result[name])
    if plan_path.resolve() != (out / PLAN_FILE).resolve():
        (out / PLAN_FILE).write_text(serialize_plan(plan), encoding='utf-8')
    _write_json(out / TRACE_FILE, {'case_id': case.case_id, 'plan_sha256': plan_digest(plan_path),
                                   **trace.to_dict()})
    for warning in trace.warnings():
        print(f"warning: {warning}", file=sys.stderr)
    return out


def cmd_eval(config: RunConfig, pred_dir: Optional[PathLike] = None) -> Tuple[Path, Path]:
    config.require('case')
    reference = None
    if config.reference_plan is not None:
        try:
            reference = parse_plan(config.reference_plan.read_bytes())
        except PlanParseError as e:
            raise CommandFailed(ExitCode.VALIDATION, f"reference plan {config.reference_plan} is malformed",
                                [v.message for v in e.violations]) from e
    pred_dir = Path(pred_dir) if pred_dir is not None else config.out
    case = load_case(config.case) if (config.case / 'case.json').is_file() else None
    initial = case.initial_rois if case is not None else ('GTV',)
    report = evaluate_cases(pred_dir, config.case, reference_plan=reference, initial_rois=initial)
    paths = write_report(report, config.out)
    for column, stats in summarize(report).items():
        if stats['mean'] is not None:
            sd = 'n/a' if stats['sd'] is None else f"{stats['sd']:.4f}"
            print(f"{column:<12} mean {stats['mean']:.4f}  sd {sd}  (n={stats['n']})")
    failed = report[report['error'] != '']
    if len(failed) or not len(report):
        raise CommandFailed(ExitCode.EVALUATION, f"{len(failed)} evaluation row(s) failed",
                            [f"{r.case_id}/{r.target}: {r.error}" for r in failed.itertuples()])
    return paths


def cmd_phantom(spec_path: Optional[PathLike], seed: Optional[int], out: Path) -> Path:
    spec = PhantomSpec.from_file(spec_path) if spec_path is not None else esophageal_spec(seed or 0)
    return generate_phantom(spec, out)


def cmd_pipeline(config: RunConfig, input_fn: Callable[[str], str] = input) -> Tuple[Path, Path]:
    plan_path = cmd_plan(config, input_fn)
    cmd_execute(replace(config, plan=plan_path))
    return cmd_eval(config)


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument('--config', help="TOML run configuration")
    parser.add_argument('--case', help="case directory (case.json, GTV.nrrd, structure NRRDs)")
    parser.add_argument('--out', help="output directory")
    parser.add_argument('--catalog', help="JSON list of segmentable structures (default: the case's structures)")
    parser.add_argument('--approve', choices=APPROVAL_MODES)
    parser.add_argument('-v', '--verbose', action='store_true')


def _add_planning(parser: argparse.ArgumentParser):
    parser.add_argument('--guideline', help="guideline text file")
    parser.add_argument('--aliases', help="JSON alias table, guideline term to structure names")
    parser.add_argument('--backend', choices=BACKENDS)
    parser.add_argument('--scripted-dir', help="directory of canned completions for the scripted backend")
    parser.add_argument('--max-refine', type=int)


def _add_execution(parser: argparse.ArgumentParser, with_plan: bool = True):
    if with_plan:
        parser.add_argument('--plan', help="plan JSON (default: <out>/plan.json)")
    parser.add_argument('--no-postprocess', dest='postprocess', action='store_const', const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='delineo', description="Guideline-driven target volume delineation")
    commands = parser.add_subparsers(dest='command', required=True)

    p = commands.add_parser('plan', help="generate and validate a plan for a case")
    _add_common(p)
    _add_planning(p)

    p = commands.add_parser('execute', help="run a plan on a case")
    _add_common(p)
    _add_execution(p)

    p = commands.add_parser('eval', help="score predictions against ground truth")
    _add_common(p)
    p.add_argument('--pred', help="prediction directory (default: --out)")
    p.add_argument('--reference-plan', help="reference plan for tool call F1")

    p = commands.add_parser('phantom', help="generate a synthetic case")
    p.add_argument('spec', nargs='?', help="phantom spec (JSON or TOML); default: the esophageal layout")
    p.add_argument('--seed', type=int, help="seed for the default layout")
    p.add_argument('--out', required=True, help="case directory to write")
    p.add_argument('-v', '--verbose', action='store_true')

    p = commands.add_parser('pipeline', help="plan, execute and evaluate in one go")
    _add_common(p)
    _add_planning(p)
    _add_execution(p, with_plan=False)
    p.add_argument('--reference-plan', help="reference plan for tool call F1")
    return parser


def _report(error: CommandFailed):
    print(f"error: {error}", file=sys.stderr)
    for line in error.details:
        print(f"  {line}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None, input_fn: Callable[[str], str] = input) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        if args.command == 'phantom':
            try:
                print(cmd_phantom(args.spec, args.seed, Path(args.out)))
            except PhantomError as e:
                raise CommandFailed(ExitCode.PHANTOM, str(e)) from e
            return ExitCode.OK

        config = load_config(args.config, {k: v for k, v in vars(args).items() if k not in ('config', 'command')})
        if args.command == 'plan':
            print(cmd_plan(config, input_fn))
        elif args.command == 'execute':
            print(cmd_execute(config))
        elif args.command == 'eval':
            for path in cmd_eval(config, args.pred):
                print(path)
        else:
            for path in cmd_pipeline(config, input_fn):
                print(path)
    except CommandFailed as e:
        _report(e)
        return e.code
    except (ConfigError, CatalogError, GuidelineError) as e:
        _report(CommandFailed(ExitCode.CONFIG, str(e)))
        return ExitCode.CONFIG
    except DelineoError as e:
        _report(CommandFailed(ExitCode.EXECUTION, str(e)))
        return ExitCode.EXECUTION
    return ExitCode.OK


def run():
    sys.exit(int(main()))

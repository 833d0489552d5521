class DelineoError(Exception):
    """
    Base class of every error raised by delineo
    """


class GridError(DelineoError, ValueError):
    pass


class GridMismatchError(DelineoError, ValueError):
    def __init__(self, a, b, message: str = "masks live on different grids"):
        super().__init__(f"{message}: {a} != {b}")
        self.grids = (a, b)


class MaskConstructionError(DelineoError, ValueError):
    pass


class GeometryError(DelineoError, ValueError):
    pass


class MarginError(DelineoError, ValueError):
    pass


class NrrdFormatError(DelineoError, ValueError):
    pass


class PlanParseError(DelineoError, ValueError):
    """
    Raised when a plan document fails shape checks. `violations` holds every problem found
    as (code, call_id, message) triples, `call_id` being None for document-level problems.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = '; '.join(v.message for v in self.violations)
        super().__init__(f"malformed plan document: {lines}")


class UnknownStructureError(DelineoError, KeyError):
    code = 'E_UNKNOWN_STRUCTURE'

    def __init__(self, term: str):
        super().__init__(term)
        self.term = term

    def __str__(self):
        return f"{self.code}: '{self.term}' is neither an alias nor a segmentable structure"


class CanonicalizationError(DelineoError, ValueError):
    pass


class BackendError(DelineoError, RuntimeError):
    pass


class PlanningError(DelineoError, RuntimeError):
    def __init__(self, message: str, transcript=(), report=None, attempts: int = 0):
        super().__init__(message)
        self.transcript = tuple(transcript)
        self.report = report
        self.attempts = attempts


class PlanValidationError(DelineoError, ValueError):
    def __init__(self, report):
        super().__init__(f"plan failed validation with {len(report.violations)} violation(s)")
        self.report = report


class ProviderError(DelineoError, RuntimeError):
    pass


class ExecutionError(DelineoError, RuntimeError):
    def __init__(self, message: str, call_id: int = None, structure: str = None):
        super().__init__(f"call {call_id}: {message}")
        self.call_id = call_id
        self.structure = structure


class DataflowError(DelineoError, RuntimeError):
    """
    An ROI was missing at execution time although the plan validated. Always a bug.
    """

    def __init__(self, message: str, call_id: int = None):
        super().__init__(f"internal dataflow error at call {call_id}: {message}")
        self.call_id = call_id


class MetricError(DelineoError, ValueError):
    pass


class PhantomError(DelineoError, ValueError):
    pass


class ConfigError(DelineoError, ValueError):
    pass


class CatalogError(DelineoError, ValueError):
    """
    A structure catalog or alias table that cannot be used: unreadable, malformed or inconsistent
    """


class GuidelineError(DelineoError, ValueError):
    pass

from .case import (RoiEnvironment, CaseInfo, load_case, initial_environment, ground_truth_path, CASE_FILE,
                   GROUND_TRUTH_DIR)
from .providers import (SegmentationProvider, FileSegmentationProvider, RemoteSegmentationProvider,
                        file_provider_segment)
from .executor import (execute_plan, postprocess, ExecutionTrace, CallRecord, PostprocessRecord, POSTPROCESS_ORDER,
                       BOUNDARY_CLIP, POSTPROCESS_OVERLAP)

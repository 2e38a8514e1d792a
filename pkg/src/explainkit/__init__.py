"""explainkit: free-text-explanation pipelines as training-pair compilers,
inference orchestrators, and evaluation protocols over a pluggable
text-to-text backend."""

from .backend import (
    Backend,
    BackendError,
    GenerationConfig,
    HttpBackend,
    JobStatus,
    Ledger,
    LedgerEntry,
    MockBackend,
    TrainJob,
)
from .corpus import (
    CoseMapping,
    CorpusError,
    Dataset,
    DatasetStats,
    DatasetView,
    Instance,
    RowError,
    Split,
    Task,
    compute_stats,
    export_jsonl,
    ingest,
    ingest_with_report,
    sample_budget,
)
from .experiments import (
    ExperimentPlan,
    RunRecord,
    build_eval_pairs,
    efficiency_report,
    label_informedness,
    run_grid,
    run_structure,
)
from .metrics import EvalPair, MetricReport, evaluate, recover_ratio
from .pipelines import (
    InferenceResult,
    Provenance,
    StructureKind,
    StructureSpec,
    TrainingPair,
    compile_training_pairs,
    generate_conditioned,
    pairs_by_stage,
    run_inference,
    semi_label,
    structure,
)
from .taskformat import (
    ParsedOutput,
    StageKind,
    label_vocabulary,
    parse_output,
    render_input,
    render_target,
)

__version__ = "0.1.0"

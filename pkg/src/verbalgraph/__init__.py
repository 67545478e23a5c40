"""Fully text-interpretable node classification on text-attributed graphs.

The model's learned state is a set of per-class natural-language descriptions,
optimized iteratively by chat-completion roles (enhancer, predictor, optimizer,
summary) over mini-batches, with every prompt and completion recorded. A
scripted backend makes whole runs hermetic and byte-reproducible; an entropy
module numerically verifies the information-theoretic grounds for why faithful
descriptions must help.
"""

from .graphs import (
    MiniBatch,
    NodeRecord,
    TextAttributedGraph,
    TRAIN_SPLIT,
    TEST_SPLIT,
    load_graph,
    make_batches,
    make_split,
    save_graph,
)
from .llm import (
    BackendConfig,
    ChatMessage,
    ChatRequest,
    ChatResponse,
    HttpBackend,
    ScriptRule,
    ScriptedBackend,
    build_backend,
    complete,
    register_script,
)
from .prompts import (
    BLANK_DESCRIPTION,
    INVALID,
    CoTMode,
    ParsedPrediction,
    ParsedThetaText,
    PromptBundle,
    parse_prediction,
    parse_theta_text,
    render_enhancer_prompt,
    render_optimizer_prompt,
    render_predictor_prompt,
    render_summary_prompt,
)
from .engine import (
    Checkpoint,
    EnhancedRepresentation,
    IntermediateUpdate,
    PredictionRecord,
    RoleBackends,
    RunConfig,
    RunResult,
    StepResult,
    TranscriptRecorder,
    VerbalParameters,
    audit_description_provenance,
    enhance,
    init_theta,
    optimize,
    predict,
    resume,
    run,
    run_step,
    summarize,
)
from .evaluation import (
    ConfusionMatrix,
    EvalCache,
    MetricsRecord,
    accuracy,
    emit_confusion,
    emit_metrics,
    evaluate_theta,
    read_metrics,
)
from .entropy import (
    DiscreteJoint,
    TheoremReport,
    conditional_entropy,
    condition_satisfying_joint,
    mutual_information,
    random_joint,
    run_suite,
    verify_chain,
    verify_theorem,
)
from .hermetic import (
    DEFAULT_CLASS_KEYWORDS,
    build_oracle_backends,
    build_synthetic_graph,
    hermetic_run_config,
    write_oracle_script,
)

__version__ = "0.1.0"

"""Streaming CP decomposition with momentum and perturbation, plus a
one-class anomaly layer for sensor-network monitoring."""

from .anomaly import (
    AnomalyModel,
    FScore,
    decision_values,
    fit_one_class,
    fscore,
    localization_scores,
)
from .diagnostics import (
    ConvergenceTrace,
    CorcondiaResult,
    TraceEntry,
    TraceReport,
    compare_traces,
    corcondia,
)
from .errors import (
    DivergenceError,
    InvalidModeError,
    InvalidShapeError,
    RankTooLargeError,
)
from .io import (
    read_matrix_csv,
    read_tensor,
    read_trace_csv,
    write_matrix_csv,
    write_tensor,
    write_trace_csv,
)
from .pipeline import (
    EvalReport,
    EventRecord,
    HEALTHY_LABEL,
    PipelineConfig,
    RankScanEntry,
    RankScanResult,
    StreamResult,
    coerce_config_value,
    compare_algorithms,
    evaluate_bootstrap,
    extract_features,
    feature_tensor,
    load_config,
    parse_config_text,
    rank_scan,
    read_manifest,
    run_stream,
    stream_tensor,
    synth_cp,
    synth_shm,
    write_events,
)
from .solvers import (
    Sample,
    SolverConfig,
    SolverState,
    als_fit,
    fit,
    fit_stream_state,
    mode_gradients,
    momentum_fit,
    momentum_step,
    online_update,
    psgd_fit,
    sgd_fit,
    sgd_step,
)
from .tensor import (
    DenseTensor,
    KruskalModel,
    ResidualMetrics,
    fold,
    khatri_rao,
    kr_others,
    reconstruct,
    residual_metrics,
    unfold,
)

__version__ = "0.1.0"

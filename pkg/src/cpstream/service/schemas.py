"""Request and response bodies for the HTTP service."""

from pydantic import BaseModel, ConfigDict

from ..pipeline import PipelineConfig, load_config


class ConfigModel(BaseModel):
    """Mirror of PipelineConfig; unset fields keep the package defaults."""

    model_config = ConfigDict(extra="forbid")

    dims: list[int] | None = None
    rank: int | None = None
    algorithm: str | None = None
    sampler: str | None = None
    eta0: float | None = None
    schedule: str | None = None
    gamma: float | None = None
    beta: float | None = None
    noise_sigma: float | None = None
    max_epochs: int | None = None
    tol: float | None = None
    trace_every: int | None = None
    lookahead: bool | None = None
    seed: int | None = None
    noise_std: float | None = None
    nu: float | None = None
    k: int | None = None
    n_freq: int | None = None
    diff_adjacent: bool | None = None
    warmup: int | None = None
    bootstrap_fraction: float | None = None
    trials: int | None = None
    rmse_target: float | None = None
    timing: bool | None = None
    input_path: str | None = None
    output_dir: str | None = None

    def resolve(self) -> PipelineConfig:
        overrides = {k: v for k, v in self.model_dump().items() if v is not None}
        return load_config(overrides=overrides)


class SynthCpRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ConfigModel = ConfigModel()


class SynthCpResponse(BaseModel):
    tensor_path: str
    factor_paths: list[str]
    dims: list[int]
    rank: int


class SynthShmRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ConfigModel = ConfigModel()
    n_healthy: int = 125
    n_damage_per_class: list[int] = [107, 30]
    locations: int = 24
    n_features: int = 600
    damage_location: int = 3
    severity_levels: list[float] | None = None
    sample_rate_hz: float = 600.0
    damage_amp: float = 0.5


class SynthShmResponse(BaseModel):
    manifest_path: str
    n_events: int
    label_counts: dict[str, int]


class DecomposeRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ConfigModel = ConfigModel()


class DecomposeResponse(BaseModel):
    factor_paths: list[str]
    trace_path: str
    steps: int
    final_rmse: float
    final_fit: float


class RankScanRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ConfigModel = ConfigModel()
    max_rank: int = 8


class RankScanEntryModel(BaseModel):
    rank: int
    score: float
    fit: float
    rank_deficient: bool


class RankScanResponse(BaseModel):
    table_path: str
    entries: list[RankScanEntryModel]
    recommended: int


class DetectRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ConfigModel = ConfigModel()


class DetectResponse(BaseModel):
    decisions_path: str
    trace_path: str
    n_events: int
    warmup: int
    n_flagged: int


class LocalizeRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ConfigModel = ConfigModel()


class LocalizeResponse(BaseModel):
    scores_path: str
    n_scored: int
    locations: int
    top_location: int
    mean_scores: list[float]


class EvaluateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ConfigModel = ConfigModel()


class EvaluateResponse(BaseModel):
    trials_path: str
    mean_precision: float
    mean_recall: float
    mean_fscore: float
    std_fscore: float
    mean_decision_by_label: dict[str, float]


class CompareRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ConfigModel = ConfigModel()
    algorithms: list[str] = ["als", "sgd", "psgd", "momentum"]


class TraceSummaryModel(BaseModel):
    label: str
    final_t: int
    final_rmse: float
    final_fit: float
    steps_to_target: int | None


class CompareResponse(BaseModel):
    table_path: str
    rmse_target: float
    summaries: list[TraceSummaryModel]

"""HTTP face of the pipeline: every CLI verb maps to one endpoint.

Requests carry a PipelineConfig mirror plus per-verb knobs; tensor and
event files are read from and written to the service's filesystem, so the
CLI can run it in process or talk to a local server. Domain errors come
back as 400 with a machine-readable code ("invalid_input" or
"divergence") that the CLI turns into exit codes.
"""

import csv
from pathlib import Path

import numpy as np
from fastapi import APIRouter, FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import DivergenceError
from ..io import read_tensor, write_matrix_csv, write_tensor, write_trace_csv
from ..pipeline import (
    PipelineConfig,
    compare_algorithms,
    evaluate_bootstrap,
    rank_scan,
    read_manifest,
    run_stream,
    stream_tensor,
    synth_cp,
    synth_shm,
    write_events,
)
from ..solvers import fit
from . import schemas

router = APIRouter()


def _out_dir(cfg: PipelineConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _input_path(cfg: PipelineConfig) -> Path:
    if not cfg.input_path:
        raise ValueError("input_path is required for this operation")
    return Path(cfg.input_path)


def _write_factors(model, out: Path) -> list:
    paths = []
    for n, factor in enumerate(model.factors, start=1):
        path = out / f"factor_{n}.csv"
        write_matrix_csv(path, factor)
        paths.append(str(path))
    return paths


@router.get("/healthz")
def healthz():
    return {"status": "ok", "version": __version__}


@router.post("/synth/cp", response_model=schemas.SynthCpResponse)
def synth_cp_endpoint(req: schemas.SynthCpRequest):
    cfg = req.config.resolve()
    tensor, truth = synth_cp(cfg.dims, cfg.rank, cfg.noise_std, cfg.seed)
    out = _out_dir(cfg)
    tensor_path = out / "tensor.nten"
    write_tensor(tensor_path, tensor)
    paths = []
    for n, factor in enumerate(truth.factors, start=1):
        path = out / f"truth_factor_{n}.csv"
        write_matrix_csv(path, factor)
        paths.append(str(path))
    return schemas.SynthCpResponse(
        tensor_path=str(tensor_path),
        factor_paths=paths,
        dims=list(cfg.dims),
        rank=cfg.rank,
    )


@router.post("/synth/shm", response_model=schemas.SynthShmResponse)
def synth_shm_endpoint(req: schemas.SynthShmRequest):
    cfg = req.config.resolve()
    events = synth_shm(
        req.n_healthy,
        tuple(req.n_damage_per_class),
        locations=req.locations,
        n_features=req.n_features,
        damage_location=req.damage_location,
        severity_levels=None if req.severity_levels is None else tuple(req.severity_levels),
        seed=cfg.seed,
        sample_rate_hz=req.sample_rate_hz,
        damage_amp=req.damage_amp,
    )
    manifest = write_events(events, _out_dir(cfg))
    counts = {}
    for event in events:
        counts[event.label] = counts.get(event.label, 0) + 1
    return schemas.SynthShmResponse(
        manifest_path=str(manifest), n_events=len(events), label_counts=counts
    )


@router.post("/decompose", response_model=schemas.DecomposeResponse)
def decompose_endpoint(req: schemas.DecomposeRequest):
    cfg = req.config.resolve()
    tensor = read_tensor(_input_path(cfg))
    model, trace = fit(
        tensor,
        cfg.solver_config(),
        algorithm=cfg.algorithm,
        sampler=cfg.sampler,
        timing=cfg.timing,
    )
    out = _out_dir(cfg)
    trace_path = out / "trace.csv"
    write_trace_csv(trace_path, trace)
    final = trace.final
    return schemas.DecomposeResponse(
        factor_paths=_write_factors(model, out),
        trace_path=str(trace_path),
        steps=final.t,
        final_rmse=final.rmse,
        final_fit=final.fit,
    )


@router.post("/stream", response_model=schemas.DecomposeResponse)
def stream_endpoint(req: schemas.DecomposeRequest):
    cfg = req.config.resolve()
    tensor = read_tensor(_input_path(cfg))
    model, trace = stream_tensor(tensor, cfg)
    out = _out_dir(cfg)
    trace_path = out / "trace.csv"
    write_trace_csv(trace_path, trace)
    final = trace.final
    return schemas.DecomposeResponse(
        factor_paths=_write_factors(model, out),
        trace_path=str(trace_path),
        steps=final.t,
        final_rmse=final.rmse,
        final_fit=final.fit,
    )


@router.post("/rank-scan", response_model=schemas.RankScanResponse)
def rank_scan_endpoint(req: schemas.RankScanRequest):
    cfg = req.config.resolve()
    tensor = read_tensor(_input_path(cfg))
    result = rank_scan(tensor, req.max_rank, cfg.solver_config())
    out = _out_dir(cfg)
    table_path = out / "rank_scan.csv"
    with table_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "score", "fit", "rank_deficient"])
        for e in result.entries:
            writer.writerow(
                [e.rank, repr(e.score), repr(e.fit), str(e.rank_deficient).lower()]
            )
    return schemas.RankScanResponse(
        table_path=str(table_path),
        entries=[
            schemas.RankScanEntryModel(
                rank=e.rank, score=e.score, fit=e.fit, rank_deficient=e.rank_deficient
            )
            for e in result.entries
        ],
        recommended=result.recommended,
    )


@router.post("/detect", response_model=schemas.DetectResponse)
def detect_endpoint(req: schemas.DetectRequest):
    cfg = req.config.resolve()
    events = read_manifest(_input_path(cfg))
    result = run_stream(cfg, events)
    out = _out_dir(cfg)
    decisions_path = out / "decisions.csv"
    with decisions_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event", "decision_value", "label"])
        for eid, value, label in zip(result.event_ids, result.decisions, result.labels):
            writer.writerow([eid, repr(float(value)), label])
    trace_path = out / "trace.csv"
    write_trace_csv(trace_path, result.trace)
    flagged = result.anomaly_mask[result.warmup :]
    return schemas.DetectResponse(
        decisions_path=str(decisions_path),
        trace_path=str(trace_path),
        n_events=len(result.event_ids),
        warmup=result.warmup,
        n_flagged=int(flagged.sum()),
    )


@router.post("/localize", response_model=schemas.LocalizeResponse)
def localize_endpoint(req: schemas.LocalizeRequest):
    cfg = req.config.resolve()
    events = read_manifest(_input_path(cfg))
    result = run_stream(cfg, events)
    out = _out_dir(cfg)
    scores = result.location_scores
    scores_path = out / "localization.csv"
    with scores_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event"] + [f"loc{j}" for j in range(scores.shape[1])])
        for eid, row in zip(result.event_ids[result.warmup :], scores):
            writer.writerow([eid] + [repr(float(v)) for v in row])
    # summarize over the events the detector flagged; fall back to all
    # streamed events when nothing was flagged
    flagged = result.anomaly_mask[result.warmup :]
    pool = scores[flagged] if flagged.any() else scores
    mean = pool.mean(axis=0) if len(pool) else np.zeros(scores.shape[1])
    return schemas.LocalizeResponse(
        scores_path=str(scores_path),
        n_scored=scores.shape[0],
        locations=scores.shape[1],
        top_location=int(mean.argmax()) if mean.size else 0,
        mean_scores=[float(v) for v in mean],
    )


@router.post("/evaluate", response_model=schemas.EvaluateResponse)
def evaluate_endpoint(req: schemas.EvaluateRequest):
    cfg = req.config.resolve()
    events = read_manifest(_input_path(cfg))
    report = evaluate_bootstrap(cfg, events)
    out = _out_dir(cfg)
    trials_path = out / "trials.csv"
    with trials_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "precision", "recall", "fscore"])
        for i, t in enumerate(report.trials, start=1):
            writer.writerow([i, repr(t.precision), repr(t.recall), repr(t.fscore)])
    return schemas.EvaluateResponse(
        trials_path=str(trials_path),
        mean_precision=report.mean_precision,
        mean_recall=report.mean_recall,
        mean_fscore=report.mean_fscore,
        std_fscore=report.std_fscore,
        mean_decision_by_label=report.mean_decision_by_label,
    )


@router.post("/compare", response_model=schemas.CompareResponse)
def compare_endpoint(req: schemas.CompareRequest):
    cfg = req.config.resolve()
    if not req.algorithms:
        raise ValueError("algorithms list must be non-empty")
    tensor = read_tensor(_input_path(cfg))
    report = compare_algorithms(tensor, cfg, tuple(req.algorithms))
    out = _out_dir(cfg)
    table_path = out / "compare.csv"
    labels = [s.label for s in report.summaries]
    with table_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"rmse_{label}" for label in labels])
        for row in report.merged_rows():
            writer.writerow([row[0]] + ["" if v is None else repr(v) for v in row[1:]])
    return schemas.CompareResponse(
        table_path=str(table_path),
        rmse_target=report.rmse_target,
        summaries=[
            schemas.TraceSummaryModel(
                label=s.label,
                final_t=s.final_t,
                final_rmse=s.final_rmse,
                final_fit=s.final_fit,
                steps_to_target=s.steps_to_target,
            )
            for s in report.summaries
        ],
    )


def _divergence_handler(request, exc):
    return JSONResponse(status_code=400, content={"code": "divergence", "message": str(exc)})


def _invalid_input_handler(request, exc):
    return JSONResponse(status_code=400, content={"code": "invalid_input", "message": str(exc)})


def create_app() -> FastAPI:
    app = FastAPI(title="cpstream", version=__version__)
    app.include_router(router)
    app.add_exception_handler(DivergenceError, _divergence_handler)
    app.add_exception_handler(ValueError, _invalid_input_handler)
    app.add_exception_handler(FileNotFoundError, _invalid_input_handler)
    return app


app = create_app()

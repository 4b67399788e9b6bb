"""End-to-end pipeline: synthetic generators, spectral features, streaming
detection and localization, bootstrap evaluation, and the event file format."""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .anomaly import (
    AnomalyModel,
    FScore,
    decision_values,
    fit_one_class,
    fscore,
    localization_scores,
)
from .diagnostics import TraceReport, compare_traces, corcondia
from .errors import InvalidShapeError
from .rng import SYNTH, TRIAL, spawn
from .solvers import (
    FIT_ALGORITHMS,
    SAMPLERS,
    SolverConfig,
    als_fit,
    fit,
    fit_stream_state,
    online_update,
)
from .tensor import DenseTensor, KruskalModel, kr_others, reconstruct, residual_metrics, unfold

HEALTHY_LABEL = "healthy"

# near-constant signals divide by this instead of their true std
STD_FLOOR = 1e-12

# rank_scan keeps the largest rank whose core consistency stays this high
RANK_SCAN_ACCEPT = 90.0

_MANIFEST_HEADER = ["event_id", "path", "label", "sample_rate_hz"]
_EVENT_HEADER = ["sensor_id", "sample_index", "value"]


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob the CLI and service expose, one flat record.

    The solver fields mirror SolverConfig; the rest drive the generators,
    the feature extractor, the detector and the evaluation harness. Config
    files are plain ``key = value`` lines using these exact field names.
    """

    dims: tuple = (30, 8, 200)
    rank: int = 3
    algorithm: str = "momentum"
    sampler: str = "shuffle"
    eta0: float = 1.0
    schedule: str = "inverse_t"
    gamma: float = 0.9
    beta: float = 0.0
    noise_sigma: float = 0.0
    max_epochs: int = 10
    tol: float = 1e-6
    trace_every: int = 50
    lookahead: bool = False
    seed: int = 0
    noise_std: float = 0.0
    nu: float = 0.05
    k: int = 2
    n_freq: int = 150
    diff_adjacent: bool = False
    warmup: int = 50
    bootstrap_fraction: float = 0.8
    trials: int = 10
    rmse_target: float = 0.1
    timing: bool = False
    input_path: str = ""
    output_dir: str = "."

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) < 3 or any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be 3+ positive extents, got {self.dims}")
        if self.algorithm not in FIT_ALGORITHMS:
            raise ValueError(
                f"unknown algorithm {self.algorithm!r}, expected one of "
                f"{sorted(FIT_ALGORITHMS)}"
            )
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}, expected one of {SAMPLERS}")
        self.solver_config()  # validates the mirrored solver fields
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")
        if not 0.0 < self.nu < 1.0:
            raise ValueError(f"nu must lie in (0, 1), got {self.nu}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.n_freq < 1:
            raise ValueError(f"n_freq must be >= 1, got {self.n_freq}")
        if self.warmup < 1:
            raise ValueError(f"warmup must be >= 1, got {self.warmup}")
        if not 0.0 < self.bootstrap_fraction < 1.0:
            raise ValueError(
                f"bootstrap_fraction must lie in (0, 1), got {self.bootstrap_fraction}"
            )
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.rmse_target <= 0:
            raise ValueError(f"rmse_target must be > 0, got {self.rmse_target}")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            rank=self.rank,
            eta0=self.eta0,
            schedule=self.schedule,
            gamma=self.gamma,
            beta=self.beta,
            noise_sigma=self.noise_sigma,
            max_epochs=self.max_epochs,
            tol=self.tol,
            seed=self.seed,
            lookahead=self.lookahead,
            trace_every=self.trace_every,
        )


_DEFAULT_CONFIG = PipelineConfig()
_CONFIG_FIELDS = tuple(f.name for f in fields(PipelineConfig))

_TRUE_WORDS = {"true", "yes", "on", "1"}
_FALSE_WORDS = {"false", "no", "off", "0"}


def coerce_config_value(name: str, raw: str):
    """Parse one config value by the type of the field's default."""
    if name not in _CONFIG_FIELDS:
        raise ValueError(f"unknown config key {name!r}")
    template = getattr(_DEFAULT_CONFIG, name)
    try:
        if isinstance(template, bool):
            low = raw.strip().lower()
            if low in _TRUE_WORDS:
                return True
            if low in _FALSE_WORDS:
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if isinstance(template, int):
            return int(raw)
        if isinstance(template, float):
            return float(raw)
        if isinstance(template, tuple):
            parts = [p.strip() for p in raw.split(",")]
            return tuple(int(p) for p in parts if p)
    except ValueError as exc:
        raise ValueError(f"config key {name!r}: {exc}") from None
    return raw


def parse_config_text(text: str) -> dict:
    """``key = value`` lines into a raw-string mapping; blanks and # skipped."""
    out = {}
    for num, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ValueError(f"config line {num}: expected 'key = value', got {line!r}")
        key = key.strip()
        if key not in _CONFIG_FIELDS:
            raise ValueError(f"config line {num}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def load_config(path=None, overrides=None) -> PipelineConfig:
    """Build a PipelineConfig from an optional file plus explicit overrides.

    Overrides win over the file; None values are skipped so optional CLI
    flags can be passed straight through. String overrides are coerced the
    same way file values are.
    """
    values = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        for key, raw in parse_config_text(text).items():
            values[key] = coerce_config_value(key, raw)
    for key, val in dict(overrides or {}).items():
        if val is None:
            continue
        if key not in _CONFIG_FIELDS:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = coerce_config_value(key, val) if isinstance(val, str) else val
    return PipelineConfig(**values)


def synth_cp(dims, rank: int, noise_std: float = 0.0, seed: int = 0):
    """Seeded low-rank tensor with U[0,1] factors and optional Gaussian noise.

    Returns (tensor, generating model). With noise_std=0 the model fits the
    tensor exactly.
    """
    shape = tuple(int(d) for d in dims)
    if len(shape) < 3 or any(d < 1 for d in shape):
        raise InvalidShapeError(f"dims must be 3+ positive extents, got {dims!r}")
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    gen = spawn(seed, SYNTH)
    model = KruskalModel([gen.uniform(size=(d, int(rank))) for d in shape], copy=False)
    tensor = reconstruct(model)
    if noise_std > 0:
        tensor = DenseTensor(tensor.data + noise_std * gen.standard_normal(shape), copy=False)
    return tensor, model


@dataclass(frozen=True, eq=False)
class EventRecord:
    """One monitoring event: a matrix of sensor signals plus its label."""

    event_id: str
    signals: np.ndarray  # locations x samples, one row per sensor
    sample_rate_hz: float
    label: str = HEALTHY_LABEL

    def __post_init__(self):
        arr = np.array(self.signals, dtype=np.float64, order="C")
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidShapeError(
                f"signals must be a locations x samples matrix, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("signal entries must be finite")
        if not self.event_id:
            raise ValueError("event_id must be non-empty")
        if not np.isfinite(self.sample_rate_hz) or self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        object.__setattr__(self, "signals", arr)

    @property
    def locations(self) -> int:
        return self.signals.shape[0]

    @property
    def samples(self) -> int:
        return self.signals.shape[1]

    @property
    def is_healthy(self) -> bool:
        return self.label == HEALTHY_LABEL


def synth_shm(
    n_healthy: int,
    n_damage_per_class=(107, 30),
    locations: int = 24,
    n_features: int = 600,
    damage_location: int = 3,
    severity_levels=None,
    seed: int = 0,
    sample_rate_hz: float = 600.0,
    n_modes: int = 5,
    mode_jitter: float = 0.1,
    amp_jitter: float = 0.0125,
    noise_std: float = 0.05,
    damage_amp: float = 0.5,
) -> list:
    """Synthetic vibration events from a fixed modal process.

    Healthy events share location-dependent mode shapes and get small
    per-event random modal amplitudes. A damage event skews the modal
    response pattern at damage_location only: an alternating-sign mixture
    of the same modes, scaled by damage_amp times the class severity, is
    added to that one sensor. The skew is what a trained model cannot
    explain, so it separates damage events and points at the location.
    Signals are 2 * n_features samples long so extract_features with
    n_freq=n_features uses the full resolution.
    """
    counts = tuple(int(c) for c in n_damage_per_class)
    if n_healthy < 1:
        raise ValueError(f"n_healthy must be >= 1, got {n_healthy}")
    if any(c < 0 for c in counts):
        raise ValueError(f"damage counts must be >= 0, got {counts}")
    if locations < 2:
        raise ValueError(f"need at least 2 locations, got {locations}")
    if not 0 <= damage_location < locations:
        raise ValueError(
            f"damage_location {damage_location} outside 0..{locations - 1}"
        )
    if severity_levels is None:
        severity_levels = tuple(float(i) for i in range(1, len(counts) + 1))
    severity_levels = tuple(float(s) for s in severity_levels)
    if len(severity_levels) != len(counts):
        raise ValueError(
            f"{len(counts)} damage classes but {len(severity_levels)} severity levels"
        )
    if any(s < 0 or not np.isfinite(s) for s in severity_levels):
        raise ValueError(f"severity levels must be finite and >= 0, got {severity_levels}")
    if n_modes < 1:
        raise ValueError(f"n_modes must be >= 1, got {n_modes}")
    if noise_std < 0 or damage_amp < 0:
        raise ValueError("noise_std and damage_amp must be >= 0")

    n_samples = 2 * int(n_features)
    low = max(1, n_samples // 20)
    high = int(0.35 * n_samples)
    bins = np.unique(np.round(np.linspace(low, high, n_modes)).astype(int))
    if len(bins) != n_modes or high <= low:
        raise ValueError(
            f"n_features {n_features} too small for {n_modes} distinct mode bins"
        )

    gen = spawn(seed, SYNTH)
    t = np.arange(n_samples)
    angles = 2.0 * np.pi * t / n_samples
    mode_shapes = 1.0 + mode_jitter * gen.standard_normal((n_modes, locations))
    # damage skew: reweights the modes at one sensor without rescaling it
    skew = np.where(np.arange(n_modes) % 2 == 0, 1.0, -1.0)

    plan = [(HEALTHY_LABEL, 0.0)] * int(n_healthy)
    for ci, count in enumerate(counts):
        plan.extend([(f"damage-{ci + 1}", severity_levels[ci])] * count)

    events = []
    for idx, (label, severity) in enumerate(plan):
        amps = 1.0 + amp_jitter * gen.standard_normal(n_modes)
        phases = gen.uniform(0.0, 2.0 * np.pi, n_modes)
        waves = np.sin(np.outer(bins, angles) + phases[:, None])  # n_modes x T
        signals = (amps[:, None] * mode_shapes).T @ waves  # locations x T
        signals += noise_std * gen.standard_normal((locations, n_samples))
        if label != HEALTHY_LABEL:
            signals[damage_location] += damage_amp * severity * (
                (skew * amps) @ waves
            )
        events.append(
            EventRecord(f"event-{idx:04d}", signals, sample_rate_hz, label)
        )
    return events


def extract_features(event: EventRecord, n_freq: int, diff_adjacent: bool = False) -> np.ndarray:
    """Per-location magnitude spectrum, shape (n_freq, locations).

    Each signal is standardized to zero mean and unit std, then the first
    n_freq positive-frequency magnitudes of its real FFT are kept (DC is
    dropped). With diff_adjacent, sensor pairs are differenced first, so the
    location count halves.
    """
    if n_freq < 1:
        raise ValueError(f"n_freq must be >= 1, got {n_freq}")
    signals = event.signals
    if diff_adjacent:
        if signals.shape[0] % 2:
            raise InvalidShapeError(
                f"diff_adjacent needs an even sensor count, got {signals.shape[0]}"
            )
        signals = signals[1::2] - signals[0::2]
    if signals.shape[1] < 2 * n_freq:
        raise InvalidShapeError(
            f"need at least {2 * n_freq} samples for {n_freq} frequency bins, "
            f"got {signals.shape[1]}"
        )
    std = signals.std(axis=1, keepdims=True)
    low = std < STD_FLOOR
    if low.any():
        warnings.warn(
            f"{int(low.sum())} near-constant signal(s) in event "
            f"{event.event_id!r}, std floored to {STD_FLOOR}",
            stacklevel=2,
        )
        std = np.where(low, STD_FLOOR, std)
    z = (signals - signals.mean(axis=1, keepdims=True)) / std
    spectrum = np.abs(np.fft.rfft(z, axis=1))[:, 1 : n_freq + 1]
    return np.ascontiguousarray(spectrum.T)


def feature_tensor(events, n_freq: int, diff_adjacent: bool = False) -> DenseTensor:
    """Stack per-event feature matrices into features x locations x events."""
    events = list(events)
    if not events:
        raise ValueError("no events given")
    mats = [extract_features(e, n_freq, diff_adjacent) for e in events]
    first = mats[0].shape
    for event, mat in zip(events, mats):
        if mat.shape != first:
            raise InvalidShapeError(
                f"event {event.event_id!r} has feature shape {mat.shape}, "
                f"expected {first}"
            )
    return DenseTensor(np.stack(mats, axis=-1), copy=False)


def _attach_event(exc: BaseException, index: int, event_id) -> None:
    # keep the original type so exit-code mapping still recognizes it
    exc.event_index = index
    if hasattr(exc, "add_note"):
        exc.add_note(f"while streaming event {index} ({event_id})")


def _embed_rows(model: KruskalModel, data) -> np.ndarray:
    """Least-squares temporal rows for every slice of `data` under `model`.

    Same map online_update uses to seat a new slice, so rows embedded here
    are directly comparable with streamed ones.
    """
    last = model.order - 1
    kr = kr_others(model.factors, last)
    rows, *_ = np.linalg.lstsq(kr, unfold(data, last).T, rcond=None)
    return np.ascontiguousarray(rows.T)


@dataclass(frozen=True, eq=False)
class StreamResult:
    """Artifacts of one streaming run over an event sequence."""

    event_ids: tuple
    labels: tuple
    decisions: np.ndarray  # detector margin per event, negative = anomaly
    location_scores: np.ndarray  # one row of per-location drift per streamed event
    warmup: int
    trace: object
    detector: AnomalyModel
    model: KruskalModel

    @property
    def anomaly_mask(self) -> np.ndarray:
        return self.decisions < 0.0


def run_stream(cfg: PipelineConfig, events) -> StreamResult:
    """Warmup batch fit, then one online update per remaining event.

    The detector is fit on the warmup temporal rows; warmup events are
    scored in place and streamed events as they arrive. Each streamed event
    also snapshots the location factor for drift scoring.
    """
    events = list(events)
    n = len(events)
    w = cfg.warmup
    if w < 2:
        raise ValueError(f"warmup must cover at least 2 events, got {w}")
    if w > n:
        raise ValueError(f"warmup {w} exceeds the {n} available events")
    feats = [extract_features(e, cfg.n_freq, cfg.diff_adjacent) for e in events]
    first = feats[0].shape
    for event, mat in zip(events, feats):
        if mat.shape != first:
            raise InvalidShapeError(
                f"event {event.event_id!r} has feature shape {mat.shape}, "
                f"expected {first}"
            )
    scfg = cfg.solver_config()
    train_data = np.stack(feats[:w], axis=-1)
    # features are raw FFT magnitudes; bring them to unit scale so the
    # gradient step sizes stay meaningful, streamed slices included
    scale = float(np.max(np.abs(train_data))) or 1.0
    train = DenseTensor(train_data / scale, copy=False)
    state, trace = fit_stream_state(train, scfg, sampler=cfg.sampler, timing=cfg.timing)
    # seat the warmup events through the same least-squares map streamed
    # slices get, so train and test rows share one embedding
    warm_rows = _embed_rows(state.model, train)
    detector = fit_one_class(warm_rows, nu=cfg.nu)

    decisions = np.empty(n)
    decisions[:w] = decision_values(detector, warm_rows)
    baseline = state.model.factors[1].copy()
    snapshots = []
    for idx in range(w, n):
        try:
            online_update(state, feats[idx] / scale, scfg)
        except Exception as exc:
            _attach_event(exc, idx, events[idx].event_id)
            raise
        row = state.model.factors[-1][-1]
        decisions[idx] = decision_values(detector, row[None, :])[0]
        # snapshot each sensor's drift since warmup: static geometry cancels
        # and a damage-driven outlier row stands alone
        snapshots.append(state.model.factors[1] - baseline)
    if snapshots:
        location_scores = localization_scores(snapshots, cfg.k)
    else:
        location_scores = np.zeros((0, first[1]))
    return StreamResult(
        event_ids=tuple(e.event_id for e in events),
        labels=tuple(e.label for e in events),
        decisions=decisions,
        location_scores=location_scores,
        warmup=w,
        trace=trace,
        detector=detector,
        model=state.model,
    )


def stream_tensor(x, cfg: PipelineConfig):
    """Stream a plain tensor's temporal slices instead of event records.

    Batch-fits the first `warmup` slices, then absorbs the rest one online
    update at a time. Trace rows keep accumulating through the stream, each
    measured against everything seen so far. Returns (model, trace).
    """
    data = x.data if isinstance(x, DenseTensor) else np.asarray(x, dtype=np.float64)
    if data.ndim < 3:
        raise InvalidShapeError(f"streaming needs an order-3+ tensor, got order {data.ndim}")
    n = data.shape[-1]
    w = cfg.warmup
    if not 1 <= w <= n:
        raise ValueError(f"warmup {w} outside 1..{n}")
    scfg = cfg.solver_config()
    state, trace = fit_stream_state(
        DenseTensor(data[..., :w], copy=False), scfg, sampler=cfg.sampler, timing=cfg.timing
    )
    t0 = time.perf_counter()
    last = trace.entries[-1].t if trace.entries else 0
    for k in range(w, n):
        try:
            online_update(state, data[..., k], scfg)
        except Exception as exc:
            _attach_event(exc, k, f"slice {k}")
            raise
        if state.t % cfg.trace_every == 0 or k == n - 1:
            metrics = residual_metrics(data[..., : k + 1], state.model)
            wall = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
            if state.t > last:
                trace.add(state.t, metrics.rmse, metrics.fit, wall)
                last = state.t
    return state.model, trace


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Bootstrap holdout results: per-trial scores plus their sample statistics."""

    trials: tuple  # FScore per trial
    mean_precision: float
    mean_recall: float
    mean_fscore: float
    std_fscore: float
    mean_decision_by_label: dict


def evaluate_bootstrap(cfg: PipelineConfig, events) -> EvalReport:
    """Repeated seeded holdout of the full detection pipeline.

    Each trial trains on a random bootstrap_fraction of the healthy events
    and scores the held-out healthy plus every damage event, each absorbed
    independently from the trained state. Reports per-trial precision,
    recall and fscore with their mean and population std.
    """
    events = list(events)
    healthy = [i for i, e in enumerate(events) if e.label == HEALTHY_LABEL]
    damage = [i for i, e in enumerate(events) if e.label != HEALTHY_LABEL]
    if len(healthy) < 10:
        raise ValueError(f"need at least 10 healthy events, got {len(healthy)}")
    feats = [extract_features(e, cfg.n_freq, cfg.diff_adjacent) for e in events]
    first = feats[0].shape
    for event, mat in zip(events, feats):
        if mat.shape != first:
            raise InvalidShapeError(
                f"event {event.event_id!r} has feature shape {mat.shape}, "
                f"expected {first}"
            )
    n_train = int(round(cfg.bootstrap_fraction * len(healthy)))
    n_train = min(max(n_train, 2), len(healthy) - 1)
    scfg = cfg.solver_config()

    trials = []
    sums = {}
    counts = {}
    for trial in range(cfg.trials):
        order = spawn(cfg.seed, TRIAL, trial).permutation(len(healthy))
        train_idx = [healthy[j] for j in order[:n_train]]
        test_idx = [healthy[j] for j in order[n_train:]] + damage
        train_data = np.stack([feats[i] for i in train_idx], axis=-1)
        scale = float(np.max(np.abs(train_data))) or 1.0
        train = DenseTensor(train_data / scale, copy=False)
        state, _ = fit_stream_state(train, scfg, sampler=cfg.sampler)
        detector = fit_one_class(_embed_rows(state.model, train), nu=cfg.nu)
        tp = fp = fn = 0
        for i in test_idx:
            probe = state.clone()  # each test event scored from the trained state
            try:
                online_update(probe, feats[i] / scale, scfg)
            except Exception as exc:
                _attach_event(exc, i, events[i].event_id)
                raise
            row = probe.model.factors[-1][-1]
            value = float(decision_values(detector, row[None, :])[0])
            label = events[i].label
            flagged = value < 0.0
            if label == HEALTHY_LABEL:
                fp += flagged
            else:
                tp += flagged
                fn += not flagged
            sums[label] = sums.get(label, 0.0) + value
            counts[label] = counts.get(label, 0) + 1
        trials.append(fscore(tp, fp, fn))

    f_col = np.array([t.fscore for t in trials])
    labels = sorted(sums, key=lambda lb: (lb != HEALTHY_LABEL, lb))
    by_label = {lb: sums[lb] / counts[lb] for lb in labels}
    return EvalReport(
        trials=tuple(trials),
        mean_precision=float(np.mean([t.precision for t in trials])),
        mean_recall=float(np.mean([t.recall for t in trials])),
        mean_fscore=float(f_col.mean()),
        std_fscore=float(f_col.std()),
        mean_decision_by_label=by_label,
    )


@dataclass(frozen=True)
class RankScanEntry:
    rank: int
    score: float
    fit: float
    rank_deficient: bool


@dataclass(frozen=True)
class RankScanResult:
    entries: tuple
    recommended: int


def rank_scan(x, max_rank: int, cfg: SolverConfig, accept: float = RANK_SCAN_ACCEPT) -> RankScanResult:
    """Batch fit plus core consistency for every rank 1..max_rank.

    Recommends the largest rank whose diagnostic stays at or above `accept`
    with a clean inversion; rank 1 if none qualifies.
    """
    if max_rank < 1:
        raise ValueError(f"max_rank must be >= 1, got {max_rank}")
    entries = []
    for r in range(1, max_rank + 1):
        model, trace = als_fit(x, replace(cfg, rank=r))
        diag = corcondia(x, model)
        entries.append(
            RankScanEntry(
                rank=r,
                score=diag.score,
                fit=trace.final.fit,
                rank_deficient=diag.rank_deficient,
            )
        )
    good = [e.rank for e in entries if e.score >= accept and not e.rank_deficient]
    return RankScanResult(entries=tuple(entries), recommended=max(good) if good else 1)


def compare_algorithms(x, cfg: PipelineConfig, algorithms=("als", "sgd", "psgd", "momentum")) -> TraceReport:
    """Fit each named algorithm on the same tensor and tabulate the traces."""
    names = list(algorithms)
    if not names:
        raise ValueError("no algorithms given")
    traces = []
    for name in names:
        _, trace = fit(x, cfg.solver_config(), algorithm=name, sampler=cfg.sampler,
                       timing=cfg.timing)
        traces.append((name, trace))
    return compare_traces(traces, rmse_target=cfg.rmse_target)


def write_events(events, directory, manifest_name: str = "manifest.csv") -> Path:
    """One CSV per event plus a manifest; manifest paths are relative."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / manifest_name
    with manifest.open("w", newline="", encoding="utf-8") as mfh:
        mw = csv.writer(mfh)
        mw.writerow(_MANIFEST_HEADER)
        for event in events:
            if any(sep in event.event_id for sep in ("/", "\\")):
                raise ValueError(f"event id {event.event_id!r} is not a safe file name")
            name = f"{event.event_id}.csv"
            with (directory / name).open("w", newline="", encoding="utf-8") as efh:
                ew = csv.writer(efh)
                ew.writerow(_EVENT_HEADER)
                for s in range(event.signals.shape[0]):
                    row_vals = event.signals[s]
                    ew.writerows(
                        (s, i, repr(float(v))) for i, v in enumerate(row_vals)
                    )
            mw.writerow([event.event_id, name, event.label, repr(float(event.sample_rate_hz))])
    return manifest


def _read_event_csv(path: Path, event_id: str, label: str, rate: float) -> EventRecord:
    entries = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _EVENT_HEADER:
            raise ValueError(f"{path}: bad event header {header!r}")
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}: expected 3 columns, got {row!r}")
            entries.append((int(row[0]), int(row[1]), float(row[2])))
    if not entries:
        raise ValueError(f"{path}: event file has no samples")
    n_sensors = max(e[0] for e in entries) + 1
    n_samples = max(e[1] for e in entries) + 1
    signals = np.full((n_sensors, n_samples), np.nan)
    for s, i, v in entries:
        if s < 0 or i < 0:
            raise ValueError(f"{path}: negative sensor or sample index")
        signals[s, i] = v
    if np.isnan(signals).any():
        raise ValueError(f"{path}: missing samples, sensors must share a sample count")
    return EventRecord(event_id, signals, rate, label)


def read_manifest(path) -> list:
    """Load the events listed in a manifest CSV, resolving relative paths."""
    path = Path(path)
    base = path.parent
    events = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _MANIFEST_HEADER:
            raise ValueError(f"{path}: bad manifest header {header!r}")
        for row in reader:
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}: expected 4 columns, got {row!r}")
            event_id, rel, label, rate = row
            events.append(_read_event_csv(base / rel, event_id, label, float(rate)))
    if not events:
        raise ValueError(f"{path}: manifest lists no events")
    return events

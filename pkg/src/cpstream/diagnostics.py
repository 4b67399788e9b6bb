"""Model-quality instrumentation: convergence traces and the core
consistency diagnostic used for rank selection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidShapeError
from .tensor import DenseTensor, KruskalModel, _as_array, fold, unfold


class TraceEntry(NamedTuple):
    t: int
    rmse: float
    fit: float
    wall_ms: float


@dataclass
class ConvergenceTrace:
    """(step, rmse, fit, wall_ms) samples recorded while a solver runs."""

    entries: list[TraceEntry] = field(default_factory=list)

    def add(self, t: int, rmse: float, fit: float, wall_ms: float = 0.0) -> None:
        if self.entries and t <= self.entries[-1].t:
            raise ValueError(f"step {t} not after previous step {self.entries[-1].t}")
        if rmse < 0.0:
            raise ValueError("rmse must be nonnegative")
        if fit > 1.0 + 1e-12:
            raise ValueError("fit cannot exceed 1")
        self.entries.append(TraceEntry(int(t), float(rmse), float(fit), float(wall_ms)))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def final(self) -> TraceEntry:
        if not self.entries:
            raise ValueError("trace is empty")
        return self.entries[-1]

    def steps_to_rmse(self, target: float) -> int | None:
        """First recorded step at which rmse <= target, None if never reached."""
        for e in self.entries:
            if e.rmse <= target:
                return e.t
        return None


class CorcondiaResult(NamedTuple):
    score: float
    rank_deficient: bool


def corcondia(x, model: KruskalModel, rcond: float = 1e-10) -> CorcondiaResult:
    """Core consistency of `model` against `x`, as a percentage.

    Computes the least-squares Tucker core of the tensor in the model's
    factor basis (pseudo-inverse applied mode by mode) and measures how far
    it is from the R x ... x R superdiagonal of ones:

        100 * (1 - ||core - superdiag||_F^2 / R)

    100 means the factors explain the tensor with a clean CP structure;
    scores drop sharply (and can go negative) when the rank is overstated.
    Near rank-deficient factors make the pseudo-inverse unstable; that is
    reported via the `rank_deficient` flag rather than an exception.
    """
    data = _as_array(x)
    if data.shape != model.dims:
        raise InvalidShapeError(
            f"tensor dims {data.shape} do not match model dims {model.dims}"
        )
    rank = model.rank
    core = data
    flagged = False
    for n, f in enumerate(model.factors):
        svals = np.linalg.svd(f, compute_uv=False)
        if svals[-1] <= rcond * svals[0]:
            flagged = True
        dims = core.shape[:n] + (rank,) + core.shape[n + 1 :]
        core = fold(np.linalg.pinv(f, rcond=rcond) @ unfold(core, n), n, dims).data
    target = np.zeros((rank,) * model.order)
    np.fill_diagonal(target, 1.0)
    score = 100.0 * (1.0 - float(((core - target) ** 2).sum()) / rank)
    return CorcondiaResult(score=score, rank_deficient=flagged)


@dataclass
class TraceSummary:
    label: str
    final_t: int
    final_rmse: float
    final_fit: float
    steps_to_target: int | None


@dataclass
class TraceReport:
    """Aligned view over labelled convergence traces."""

    rmse_target: float
    summaries: list[TraceSummary]
    steps: list[int]
    columns: dict[str, dict[int, float]]  # label -> {t: rmse}

    def merged_rows(self) -> list[list]:
        """Rows t, rmse_<label>... with None where a trace has no sample."""
        labels = [s.label for s in self.summaries]
        return [
            [t] + [self.columns[lab].get(t) for lab in labels] for t in self.steps
        ]

    def summary_text(self) -> str:
        lines = [f"rmse target: {self.rmse_target}"]
        for s in self.summaries:
            reached = "never" if s.steps_to_target is None else str(s.steps_to_target)
            lines.append(
                f"{s.label}: final_t={s.final_t} final_rmse={s.final_rmse:.6g} "
                f"final_fit={s.final_fit:.6g} steps_to_target={reached}"
            )
        return "\n".join(lines)


def compare_traces(
    traces: Sequence[tuple[str, ConvergenceTrace]], rmse_target: float = 0.1
) -> TraceReport:
    """Merge labelled traces on step index and summarize each one.

    Output is independent of input order: labels are sorted. Duplicate
    labels or empty traces are rejected.
    """
    if not traces:
        raise ValueError("at least one trace required")
    labels = [label for label, _ in traces]
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate trace labels")
    pairs = sorted(traces, key=lambda lt: lt[0])
    summaries = []
    columns: dict[str, dict[int, float]] = {}
    steps: set[int] = set()
    for label, trace in pairs:
        if not trace.entries:
            raise ValueError(f"trace {label!r} is empty")
        final = trace.final
        summaries.append(
            TraceSummary(
                label=label,
                final_t=final.t,
                final_rmse=final.rmse,
                final_fit=final.fit,
                steps_to_target=trace.steps_to_rmse(rmse_target),
            )
        )
        columns[label] = {e.t: e.rmse for e in trace.entries}
        steps.update(columns[label])
    return TraceReport(
        rmse_target=float(rmse_target),
        summaries=summaries,
        steps=sorted(steps),
        columns=columns,
    )

"""CP solvers: batch alternating least squares, stochastic gradient
variants (plain, perturbed, momentum-smoothed), and a one-step online
update for streamed temporal slices.

Gradient convention, fixed package-wide: gradients are the residual form

    G^(n) = (X_(n) - F_n @ KR_n^T) @ KR_n

which is an ascent direction for fit, so update steps ADD eta * direction.
This equals -d/dF_n of 0.5 * ||X - reconstruct||_F^2 and is pinned against
finite differences in the tests.

A stochastic sample is one slice of the last (temporal) mode. A step
touches every non-temporal factor in full but only the sampled row of the
temporal factor, so velocity and perturbation state for rows that were not
sampled stay exactly as they were.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .diagnostics import ConvergenceTrace
from .errors import DivergenceError, InvalidShapeError, RankTooLargeError
from .rng import INIT, NOISE, SAMPLER, spawn
from .tensor import (
    KruskalModel,
    _as_array,
    kr_others,
    residual_metrics,
    unfold,
)

SCHEDULES = ("inverse_t",)
SAMPLERS = ("shuffle", "sequential")

# ALS normal equations: ridge added when the Gram matrix is this close to
# singular (relative smallest singular value).
_GRAM_SINGULAR_RTOL = 1e-12
_GRAM_RIDGE = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    """Shared knobs for every solver.

    eta0 feeds the step-size rule eta(t) = eta0 / (1 + t) with t the global
    0-based step counter. gamma is the velocity friction, beta the L1
    shrinkage coefficient, noise_sigma the std of the Gaussian perturbation
    added to each factor update. lookahead switches the momentum step to
    evaluating gradients at the velocity-shifted point instead of the
    current iterate.
    """

    rank: int
    eta0: float = 1.0
    schedule: str = "inverse_t"
    gamma: float = 0.9
    beta: float = 0.0
    noise_sigma: float = 0.0
    max_epochs: int = 10
    tol: float = 1e-6
    seed: int = 0
    lookahead: bool = False
    trace_every: int = 50

    def __post_init__(self):
        if int(self.rank) != self.rank or self.rank < 1:
            raise ValueError(f"rank must be a positive integer, got {self.rank}")
        if not self.eta0 > 0.0:
            raise ValueError(f"eta0 must be positive, got {self.eta0}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if self.noise_sigma < 0.0:
            raise ValueError(f"noise_sigma must be nonnegative, got {self.noise_sigma}")
        if int(self.max_epochs) != self.max_epochs or self.max_epochs < 1:
            raise ValueError(f"max_epochs must be a positive integer, got {self.max_epochs}")
        if not self.tol > 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if int(self.trace_every) != self.trace_every or self.trace_every < 1:
            raise ValueError(f"trace_every must be a positive integer, got {self.trace_every}")

    def step_size(self, t: int) -> float:
        return self.eta0 / (1.0 + t)


class Sample(NamedTuple):
    """One temporal slice: its index along the last mode and its values
    (shape = the non-temporal extents)."""

    index: int
    values: np.ndarray


@dataclass
class SolverState:
    """Everything a stochastic step needs to be resumable: the model, one
    velocity matrix per factor, the global step counter and the
    perturbation stream."""

    model: KruskalModel
    velocities: list
    t: int
    noise_rng: np.random.Generator

    @classmethod
    def init(cls, dims: Sequence[int], cfg: SolverConfig) -> "SolverState":
        dims = tuple(int(d) for d in dims)
        if len(dims) < 2:
            raise InvalidShapeError(f"need at least 2 modes, got {len(dims)}")
        gen = spawn(cfg.seed, INIT)
        factors = [gen.uniform(size=(d, cfg.rank)) for d in dims]
        return cls(
            model=KruskalModel(factors, copy=False),
            velocities=[np.zeros((d, cfg.rank)) for d in dims],
            t=0,
            noise_rng=spawn(cfg.seed, NOISE),
        )

    def clone(self) -> "SolverState":
        gen = np.random.Generator(np.random.PCG64())
        gen.bit_generator.state = self.noise_rng.bit_generator.state
        return SolverState(
            model=self.model.copy(),
            velocities=[v.copy() for v in self.velocities],
            t=self.t,
            noise_rng=gen,
        )


def _gradients(data: np.ndarray, factors: Sequence[np.ndarray]) -> list:
    # overflow here just means a diverging iterate; the step functions turn
    # the resulting non-finite entries into DivergenceError
    out = []
    with np.errstate(over="ignore", invalid="ignore"):
        for n, f in enumerate(factors):
            kr = kr_others(factors, n)
            resid = unfold(data, n) - f @ kr.T
            out.append(resid @ kr)
    return out


def mode_gradients(x, model: KruskalModel) -> list:
    """Residual-form gradient matrix per mode (see module docstring)."""
    data = _as_array(x)
    if data.shape != model.dims:
        raise InvalidShapeError(
            f"tensor dims {data.shape} do not match model dims {model.dims}"
        )
    return _gradients(data, model.factors)


def _step_gradients(factors, velocities, sample: Sample, shift: float) -> list:
    """Gradients of one temporal slice w.r.t. the non-temporal factors and
    the sampled temporal row. shift > 0 evaluates them at the
    velocity-shifted point factor + shift * velocity."""
    last = len(factors) - 1
    k = sample.index
    if not 0 <= k < factors[last].shape[0]:
        raise InvalidShapeError(
            f"slice index {k} out of range for temporal extent {factors[last].shape[0]}"
        )
    values = np.asarray(sample.values, dtype=np.float64)
    expected = tuple(f.shape[0] for f in factors[:last])
    if values.shape != expected:
        raise InvalidShapeError(
            f"slice shape {values.shape} does not match non-temporal dims {expected}"
        )
    if shift != 0.0:
        subs = [factors[n] + shift * velocities[n] for n in range(last)]
        subs.append(factors[last][k : k + 1] + shift * velocities[last][k : k + 1])
    else:
        subs = [*factors[:last], factors[last][k : k + 1]]
    return _gradients(values[..., None], subs)


def sgd_step(state: SolverState, sample: Sample, cfg: SolverConfig) -> SolverState:
    """One plain SGD step on a slice. Mutates and returns `state`;
    velocities and the noise stream are untouched."""
    factors = state.model.factors
    grads = _step_gradients(factors, state.velocities, sample, 0.0)
    eta = cfg.step_size(state.t)
    last = len(factors) - 1
    with np.errstate(over="ignore", invalid="ignore"):
        for n, g in enumerate(grads):
            part = factors[n][sample.index : sample.index + 1] if n == last else factors[n]
            part += eta * g
            if not np.all(np.isfinite(part)):
                raise DivergenceError(mode=n, step=state.t)
    state.t += 1
    return state


def momentum_step(state: SolverState, sample: Sample, cfg: SolverConfig) -> SolverState:
    """One velocity-smoothed step with optional Gaussian perturbation and
    L1 shrinkage.

    Per mode, in order: v := gamma * v + (1 - gamma) * g, then the factor
    gains eta * v, a Gaussian draw of std noise_sigma, and finally
    -beta * sign(factor before the update), as separate in-place additions.
    With gamma = beta = noise_sigma = 0 this reproduces sgd_step bit for
    bit, and with only noise_sigma > 0 it is exactly sgd_step plus the
    seeded draw (the perturbed-SGD baseline). sign(0) is 0, the usual L1
    subgradient choice. Mutates and returns `state`.
    """
    factors = state.model.factors
    vels = state.velocities
    shift = cfg.gamma if cfg.lookahead else 0.0
    grads = _step_gradients(factors, vels, sample, shift)
    eta = cfg.step_size(state.t)
    last = len(factors) - 1
    keep = 1.0 - cfg.gamma
    with np.errstate(over="ignore", invalid="ignore"):
        for n, g in enumerate(grads):
            if n == last:
                rows = slice(sample.index, sample.index + 1)
                fpart = factors[n][rows]
                vpart = vels[n][rows]
            else:
                fpart = factors[n]
                vpart = vels[n]
            shrink = cfg.beta * np.sign(fpart) if cfg.beta > 0.0 else None
            vpart *= cfg.gamma
            vpart += keep * g
            fpart += eta * vpart
            if cfg.noise_sigma > 0.0:
                fpart += cfg.noise_sigma * state.noise_rng.standard_normal(fpart.shape)
            if shrink is not None:
                fpart -= shrink
            if not np.all(np.isfinite(fpart)):
                raise DivergenceError(mode=n, step=state.t)
    state.t += 1
    return state


def _record(trace, t, metrics, t0, timing):
    wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
    trace.add(t, metrics.rmse, metrics.fit, wall)


def _stochastic_fit(x, cfg: SolverConfig, step_fn: Callable, sampler: str, timing: bool):
    data = _as_array(x)
    if data.ndim < 3:
        raise InvalidShapeError(
            f"streaming solvers need an order-3+ tensor, got order {data.ndim}"
        )
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}, expected one of {SAMPLERS}")
    t0 = time.perf_counter()
    state = SolverState.init(data.shape, cfg)
    order_rng = spawn(cfg.seed, SAMPLER)
    n_slices = data.shape[-1]
    trace = ConvergenceTrace()
    metrics = residual_metrics(data, state.model)
    _record(trace, 0, metrics, t0, timing)
    prev_fit = metrics.fit
    last_recorded = 0
    for _ in range(cfg.max_epochs):
        if sampler == "shuffle":
            order = order_rng.permutation(n_slices)
        else:
            order = np.arange(n_slices)
        for k in order:
            step_fn(state, Sample(int(k), data[..., k]), cfg)
            if state.t % cfg.trace_every == 0:
                metrics = residual_metrics(data, state.model)
                _record(trace, state.t, metrics, t0, timing)
                last_recorded = state.t
        if state.t == last_recorded:
            epoch_fit = metrics.fit
        else:
            metrics = residual_metrics(data, state.model)
            _record(trace, state.t, metrics, t0, timing)
            last_recorded = state.t
            epoch_fit = metrics.fit
        if abs(epoch_fit - prev_fit) < cfg.tol:
            break
        prev_fit = epoch_fit
    return state, trace


def sgd_fit(x, cfg: SolverConfig, sampler: str = "shuffle", timing: bool = False):
    """Plain SGD over temporal slices, shuffled each epoch by default."""
    state, trace = _stochastic_fit(x, cfg, sgd_step, sampler, timing)
    return state.model, trace


def psgd_fit(x, cfg: SolverConfig, sampler: str = "shuffle", timing: bool = False):
    """Perturbed SGD: plain SGD plus the Gaussian factor perturbation.
    gamma and beta are forced to zero; cfg.noise_sigma sets the noise."""
    state, trace = _stochastic_fit(
        x, replace(cfg, gamma=0.0, beta=0.0), momentum_step, sampler, timing
    )
    return state.model, trace


def momentum_fit(x, cfg: SolverConfig, sampler: str = "shuffle", timing: bool = False):
    """The full streaming solver: velocity smoothing, perturbation and L1
    shrinkage per cfg, one temporal slice per step."""
    state, trace = _stochastic_fit(x, cfg, momentum_step, sampler, timing)
    return state.model, trace


def fit_stream_state(x, cfg: SolverConfig, sampler: str = "shuffle", timing: bool = False):
    """momentum_fit, but returns the full solver state so the caller can
    keep streaming new slices into it with online_update."""
    return _stochastic_fit(x, cfg, momentum_step, sampler, timing)


def als_fit(x, cfg: SolverConfig, timing: bool = False):
    """Batch alternating least squares.

    Each pass solves every mode's normal equations against the Khatri-Rao
    of the remaining factors; near-singular Gram matrices get a small ridge
    instead of failing. Full-tensor loss is non-increasing across passes.
    Stops when the fit change drops below cfg.tol or after max_epochs
    passes. Returns (model, per-pass trace).
    """
    data = _as_array(x)
    if data.ndim < 3:
        raise InvalidShapeError(
            f"als_fit needs an order-3+ tensor, got order {data.ndim}; "
            "use a matrix factorization for order 2"
        )
    if cfg.rank > min(data.shape):
        raise RankTooLargeError(
            f"rank {cfg.rank} exceeds the smallest unfolding row count {min(data.shape)}"
        )
    t0 = time.perf_counter()
    gen = spawn(cfg.seed, INIT)
    factors = [gen.uniform(size=(d, cfg.rank)) for d in data.shape]
    unfoldings = [unfold(data, n) for n in range(data.ndim)]
    eye = np.eye(cfg.rank)
    trace = ConvergenceTrace()
    metrics = residual_metrics(data, KruskalModel(factors, copy=False))
    _record(trace, 0, metrics, t0, timing)
    prev_fit = metrics.fit
    for it in range(1, cfg.max_epochs + 1):
        for n in range(data.ndim):
            kr = kr_others(factors, n)
            gram = kr.T @ kr
            svals = np.linalg.svd(gram, compute_uv=False)
            if svals[-1] <= _GRAM_SINGULAR_RTOL * svals[0]:
                gram = gram + _GRAM_RIDGE * eye
            factors[n] = np.linalg.solve(gram, (unfoldings[n] @ kr).T).T
        metrics = residual_metrics(data, KruskalModel(factors, copy=False))
        _record(trace, it, metrics, t0, timing)
        if abs(metrics.fit - prev_fit) < cfg.tol:
            break
        prev_fit = metrics.fit
    return KruskalModel(factors, copy=False), trace


def online_update(state: SolverState, new_slice, cfg: SolverConfig) -> SolverState:
    """Absorb one new temporal slice in a single step.

    The temporal factor gains a row initialized by least squares of the
    slice against the Khatri-Rao of the non-temporal factors (its velocity
    row starts at zero), then exactly one momentum_step runs on that slice.
    Non-temporal factors and velocities persist across calls.
    """
    factors = state.model.factors
    last = len(factors) - 1
    values = np.asarray(new_slice, dtype=np.float64)
    expected = tuple(f.shape[0] for f in factors[:last])
    if values.shape != expected:
        raise InvalidShapeError(
            f"slice shape {values.shape} does not match non-temporal dims {expected}"
        )
    if not np.all(np.isfinite(values)):
        raise ValueError("slice entries must be finite")
    kr = kr_others(factors, last)
    row, *_ = np.linalg.lstsq(kr, values.reshape(-1, order="F"), rcond=None)
    rank = factors[last].shape[1]
    factors[last] = np.vstack([factors[last], row.reshape(1, rank)])
    state.velocities[last] = np.vstack([state.velocities[last], np.zeros((1, rank))])
    return momentum_step(state, Sample(factors[last].shape[0] - 1, values), cfg)


FIT_ALGORITHMS = {
    "als": als_fit,
    "sgd": sgd_fit,
    "psgd": psgd_fit,
    "momentum": momentum_fit,
}


def fit(x, cfg: SolverConfig, algorithm: str = "momentum", sampler: str = "shuffle",
        timing: bool = False):
    """Dispatch by algorithm name; see FIT_ALGORITHMS for the choices."""
    if algorithm not in FIT_ALGORITHMS:
        raise ValueError(
            f"unknown algorithm {algorithm!r}, expected one of {sorted(FIT_ALGORITHMS)}"
        )
    if algorithm == "als":
        return als_fit(x, cfg, timing=timing)
    return FIT_ALGORITHMS[algorithm](x, cfg, sampler=sampler, timing=timing)

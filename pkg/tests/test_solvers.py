"""Solver contracts: gradients, step semantics, reductions, ALS, streaming."""

import numpy as np
import pytest

from cpstream import (
    DenseTensor,
    DivergenceError,
    InvalidShapeError,
    KruskalModel,
    RankTooLargeError,
    Sample,
    SolverConfig,
    SolverState,
    als_fit,
    fit,
    mode_gradients,
    momentum_fit,
    momentum_step,
    online_update,
    psgd_fit,
    reconstruct,
    residual_metrics,
    sgd_fit,
    sgd_step,
    synth_cp,
)


def _loss(data, factors):
    diff = np.asarray(data) - reconstruct(KruskalModel(factors, copy=False)).data
    return 0.5 * float(np.sum(diff**2))


def _fd_gradient(data, factors, n, h=1e-6):
    # central differences of -0.5 * ||X - reconstruct||^2 per entry
    g = np.zeros_like(factors[n])
    for i in range(g.shape[0]):
        for j in range(g.shape[1]):
            plus = [f.copy() for f in factors]
            minus = [f.copy() for f in factors]
            plus[n][i, j] += h
            minus[n][i, j] -= h
            g[i, j] = (_loss(data, minus) - _loss(data, plus)) / (2 * h)
    return g


def _zero_state(dims, cfg):
    state = SolverState.init(dims, cfg)
    for f in state.model.factors:
        f[:] = 0.0
    return state


def test_gradients_zero_at_exact_model():
    x, truth = synth_cp((4, 3, 5), 2, seed=100)
    grads = mode_gradients(x, truth)
    assert all(np.max(np.abs(g)) < 1e-10 for g in grads)


def test_gradients_zero_at_origin():
    # the all-zeros saddle: residual times a zero Khatri-Rao
    rng = np.random.default_rng(101)
    x = rng.uniform(size=(4, 3, 5))
    zero = KruskalModel([np.zeros((d, 2)) for d in (4, 3, 5)])
    grads = mode_gradients(x, zero)
    assert all(np.array_equal(g, np.zeros_like(g)) for g in grads)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(102)
    data = rng.standard_normal((4, 3, 5))
    factors = [rng.standard_normal((d, 2)) for d in (4, 3, 5)]
    grads = mode_gradients(data, KruskalModel(factors))
    for n in range(3):
        fd = _fd_gradient(data, factors, n)
        rel = np.max(np.abs(grads[n] - fd)) / max(np.max(np.abs(fd)), 1e-12)
        assert rel <= 1e-4


def test_gradients_shape_mismatch():
    m = KruskalModel([np.ones((2, 1)), np.ones((3, 1)), np.ones((4, 1))])
    with pytest.raises(InvalidShapeError):
        mode_gradients(np.zeros((2, 3, 5)), m)


def test_sgd_step_zero_gradient_only_advances_t():
    x, truth = synth_cp((4, 3, 6), 2, seed=103)
    cfg = SolverConfig(rank=2, eta0=0.5, seed=103)
    state = SolverState.init((4, 3, 6), cfg)
    for n, f in enumerate(truth.factors):
        state.model.factors[n][:] = f
    before = [f.copy() for f in state.model.factors]
    sgd_step(state, Sample(2, x.data[..., 2]), cfg)
    assert state.t == 1
    for f, b in zip(state.model.factors, before):
        assert np.allclose(f, b, atol=1e-12)


def test_sgd_step_scalar_hand_oracle():
    # 1x1x1 tensor, R=1: one step is f += eta * (x - abc) * (product of
    # others), every mode evaluated at the pre-step factors
    cfg = SolverConfig(rank=1, eta0=0.3, seed=0)
    state = SolverState.init((1, 1, 1), cfg)
    a, b, c = (float(state.model.factors[n][0, 0]) for n in range(3))
    x = 2.0
    eta = cfg.step_size(0)
    resid = x - a * b * c
    a1 = a + eta * resid * b * c
    b1 = b + eta * resid * a * c
    c1 = c + eta * resid * a * b
    sgd_step(state, Sample(0, np.array([[x]])), cfg)
    got = [float(state.model.factors[n][0, 0]) for n in range(3)]
    assert got == pytest.approx([a1, b1, c1], rel=1e-12)


def test_sgd_step_divergence_error_names_mode():
    x, _ = synth_cp((6, 5, 10), 2, seed=104)
    cfg = SolverConfig(rank=2, eta0=1e6, seed=104)
    state = SolverState.init((6, 5, 10), cfg)
    with pytest.raises(DivergenceError) as err:
        for k in range(10):
            sgd_step(state, Sample(k, x.data[..., k]), cfg)
    assert err.value.mode in (0, 1, 2)


def test_sgd_temporal_update_touches_only_sampled_row():
    x, _ = synth_cp((4, 3, 8), 2, seed=105)
    cfg = SolverConfig(rank=2, eta0=0.1, seed=105)
    state = SolverState.init((4, 3, 8), cfg)
    before = state.model.factors[2].copy()
    sgd_step(state, Sample(5, x.data[..., 5]), cfg)
    after = state.model.factors[2]
    changed = np.any(after != before, axis=1)
    assert changed[5]
    assert not changed[np.arange(8) != 5].any()


def test_momentum_reduces_to_sgd_bitwise():
    x, _ = synth_cp((6, 4, 30), 2, noise_std=0.05, seed=106)
    cfg = SolverConfig(rank=2, eta0=0.2, gamma=0.0, beta=0.0, noise_sigma=0.0,
                      max_epochs=4, tol=1e-15, seed=3, trace_every=10)
    m_sgd, t_sgd = sgd_fit(x, cfg)
    m_mom, t_mom = momentum_fit(x, cfg)
    assert t_sgd.entries == t_mom.entries
    for a, b in zip(m_sgd.factors, m_mom.factors):
        assert np.array_equal(a, b)


def test_momentum_with_noise_reduces_to_psgd_bitwise():
    x, _ = synth_cp((6, 4, 30), 2, noise_std=0.05, seed=107)
    cfg = SolverConfig(rank=2, eta0=0.2, gamma=0.0, beta=0.0, noise_sigma=1e-3,
                      max_epochs=4, tol=1e-15, seed=4, trace_every=10)
    m_psgd, t_psgd = psgd_fit(x, cfg)
    m_mom, t_mom = momentum_fit(x, cfg)
    assert t_psgd.entries == t_mom.entries
    for a, b in zip(m_psgd.factors, m_mom.factors):
        assert np.array_equal(a, b)


def test_velocity_constant_gradient_closed_form():
    # eta tiny enough that factors never move, so the per-step gradient is
    # bit-constant and the velocity recurrence telescopes exactly
    rng = np.random.default_rng(108)
    data = rng.uniform(size=(4, 3, 2))
    for gamma in (0.5, 0.9):
        cfg = SolverConfig(rank=2, eta0=1e-300, gamma=gamma, seed=8)
        state = SolverState.init((4, 3, 2), cfg)
        g0 = None
        for _ in range(100):
            momentum_step(state, Sample(0, data[..., 0]), cfg)
            if g0 is None:
                g0 = [v.copy() / (1.0 - gamma) for v in state.velocities]
        for n in range(2):  # non-temporal velocities see every step
            want = (1.0 - gamma**100) * g0[n]
            assert np.max(np.abs(state.velocities[n] - want)) <= 1e-10


def test_saddle_escape_perturbed_vs_plain():
    rng = np.random.default_rng(109)
    data = 0.7 * rng.uniform(size=(6, 5, 8))
    plain = SolverConfig(rank=2, eta0=20.0, gamma=0.0, seed=1)
    state = _zero_state((6, 5, 8), plain)
    loss0 = _loss(data, state.model.factors)
    for _ in range(50):
        sgd_step(state, Sample(0, data[..., 0]), plain)
    assert _loss(data, state.model.factors) == loss0  # exactly stuck

    noisy = SolverConfig(rank=2, eta0=20.0, gamma=0.9, noise_sigma=1e-2, seed=1)
    state = _zero_state((6, 5, 8), noisy)
    for _ in range(50):
        momentum_step(state, Sample(0, data[..., 0]), noisy)
    assert _loss(data, state.model.factors) < loss0


def test_lookahead_variant_differs_but_converges():
    x, _ = synth_cp((8, 5, 60), 2, seed=110)
    base = SolverConfig(rank=2, eta0=0.4, gamma=0.5, max_epochs=8, tol=1e-15,
                       seed=5, trace_every=60)
    look = SolverConfig(rank=2, eta0=0.4, gamma=0.5, max_epochs=8, tol=1e-15,
                       seed=5, trace_every=60, lookahead=True)
    _, t_base = momentum_fit(x, base)
    _, t_look = momentum_fit(x, look)
    assert t_base.entries != t_look.entries
    assert t_look.final.fit > 0.3


def test_fit_determinism_bitwise():
    x, _ = synth_cp((6, 4, 40), 2, seed=111)
    cfg = SolverConfig(rank=2, eta0=0.3, gamma=0.5, noise_sigma=1e-3,
                      max_epochs=3, tol=1e-15, seed=6, trace_every=20)
    m1, t1 = momentum_fit(x, cfg)
    m2, t2 = momentum_fit(x, cfg)
    assert t1.entries == t2.entries
    for a, b in zip(m1.factors, m2.factors):
        assert np.array_equal(a, b)


def test_sampler_validation_and_order2_rejected():
    x, _ = synth_cp((4, 3, 5), 2, seed=112)
    cfg = SolverConfig(rank=2, seed=0)
    with pytest.raises(ValueError, match="sampler"):
        sgd_fit(x, cfg, sampler="bogus")
    with pytest.raises(InvalidShapeError):
        sgd_fit(np.zeros((4, 5)), cfg)
    with pytest.raises(InvalidShapeError):
        als_fit(np.zeros((4, 5)), cfg)


def test_als_loss_non_increasing_and_rank1_exact():
    x, _ = synth_cp((5, 4, 6), 1, seed=113)
    cfg = SolverConfig(rank=1, max_epochs=50, tol=1e-14, seed=0)
    model, trace = als_fit(x, cfg)
    rmse = [e.rmse for e in trace.entries]
    assert all(rmse[i + 1] <= rmse[i] + 1e-12 for i in range(len(rmse) - 1))
    assert trace.final.fit >= 1.0 - 1e-8
    assert model.rank == 1


def test_als_noisy_recovery_near_noise_floor():
    x, _ = synth_cp((10, 8, 12), 2, noise_std=0.01, seed=114)
    cfg = SolverConfig(rank=2, max_epochs=100, tol=1e-12, seed=2)
    _, trace = als_fit(x, cfg)
    assert trace.final.rmse <= 0.02  # twice the injected noise


def test_als_rank_too_large():
    with pytest.raises(RankTooLargeError):
        als_fit(np.zeros((4, 3, 5)), SolverConfig(rank=4, seed=0))


def test_als_handles_collinear_data():
    # a rank-1 tensor fit at rank 2 has singular normal equations; the
    # ridge fallback must keep the run finite
    x, _ = synth_cp((5, 4, 6), 1, seed=115)
    model, trace = als_fit(x, SolverConfig(rank=2, max_epochs=30, tol=1e-12, seed=1))
    assert all(np.all(np.isfinite(f)) for f in model.factors)
    assert trace.final.fit >= 1.0 - 1e-6


def test_online_update_shape_contract():
    x, _ = synth_cp((5, 4, 12), 2, seed=116)
    cfg = SolverConfig(rank=2, eta0=0.3, max_epochs=2, tol=1e-15, seed=7)
    from cpstream import fit_stream_state

    state, _ = fit_stream_state(DenseTensor(x.data[..., :8], copy=False), cfg)
    rows_before = state.model.factors[2].shape[0]
    for k in range(8, 12):
        online_update(state, x.data[..., k], cfg)
        assert state.model.factors[2].shape[0] == rows_before + (k - 7)
        assert state.model.factors[0].shape == (5, 2)
        assert state.model.factors[1].shape == (4, 2)
        assert state.velocities[2].shape == state.model.factors[2].shape


def test_online_update_zero_residual_row_is_lstsq():
    from cpstream import fit_stream_state, kr_others

    x, _ = synth_cp((5, 4, 10), 2, seed=117)
    cfg = SolverConfig(rank=2, eta0=0.3, gamma=0.9, max_epochs=3, tol=1e-15, seed=9)
    state, _ = fit_stream_state(DenseTensor(x.data[..., :9], copy=False), cfg)
    # a slice the current model reproduces exactly
    coeffs = np.array([0.4, 1.3])
    new_slice = np.einsum(
        "ir,jr,r->ij", state.model.factors[0], state.model.factors[1], coeffs
    )
    nonzero_vel = [v.copy() for v in state.velocities[:2]]
    online_update(state, new_slice, cfg)
    row = state.model.factors[2][-1]
    assert row == pytest.approx(coeffs, abs=1e-8)
    # zero residual: the gradient contribution vanishes, so each velocity
    # just decays by gamma
    for n, v_prev in enumerate(nonzero_vel):
        assert np.allclose(state.velocities[n], cfg.gamma * v_prev, atol=1e-8)


def test_online_update_bad_slice_shape():
    from cpstream import fit_stream_state

    x, _ = synth_cp((5, 4, 8), 2, seed=118)
    cfg = SolverConfig(rank=2, max_epochs=1, seed=0)
    state, _ = fit_stream_state(x, cfg)
    with pytest.raises(InvalidShapeError):
        online_update(state, np.zeros((4, 5)), cfg)


def test_stream_vs_batch_rmse_within_2x():
    x, _ = synth_cp((8, 5, 80), 2, seed=119)
    cfg = SolverConfig(rank=2, eta0=0.3, gamma=0.9, max_epochs=1, tol=1e-15,
                      seed=11, trace_every=1000)
    from cpstream import PipelineConfig, stream_tensor

    pcfg = PipelineConfig(dims=(8, 5, 80), rank=2, eta0=0.3, gamma=0.9,
                          max_epochs=1, tol=1e-15, seed=11, trace_every=1000,
                          warmup=10, sampler="sequential")
    _, stream_trace = stream_tensor(x, pcfg)
    _, batch_trace = momentum_fit(x, cfg, sampler="sequential")
    assert stream_trace.final.rmse <= 2.0 * batch_trace.final.rmse


def test_fit_dispatcher_names():
    x, _ = synth_cp((4, 3, 6), 1, seed=120)
    cfg = SolverConfig(rank=1, eta0=0.2, max_epochs=2, seed=0)
    for name in ("als", "sgd", "psgd", "momentum"):
        model, trace = fit(x, cfg, algorithm=name)
        assert model.dims == (4, 3, 6)
        assert len(trace.entries) >= 1
    with pytest.raises(ValueError, match="algorithm"):
        fit(x, cfg, algorithm="adam")


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(rank=0)
    with pytest.raises(ValueError):
        SolverConfig(rank=1, eta0=0.0)
    with pytest.raises(ValueError):
        SolverConfig(rank=1, gamma=1.0)
    with pytest.raises(ValueError):
        SolverConfig(rank=1, beta=-0.1)
    with pytest.raises(ValueError):
        SolverConfig(rank=1, noise_sigma=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(rank=1, schedule="constant")
    with pytest.raises(ValueError):
        SolverConfig(rank=1, tol=0.0)


def test_step_size_schedule():
    cfg = SolverConfig(rank=1, eta0=2.0)
    assert cfg.step_size(0) == 2.0
    assert cfg.step_size(1) == 1.0
    assert cfg.step_size(19) == pytest.approx(0.1)

"""Core simulation and conditioning tests."""

import math

import numpy as np
import pytest

from qubitfreq import bloch
from qubitfreq.common import NonFiniteState, NotPure


def test_sim_params_defaults_and_validation():
    p = bloch.SimParams()
    assert p.omega_x == pytest.approx(2.0 * math.pi)
    assert p.period == pytest.approx(1.0)
    assert p.dt_fine == pytest.approx(1.0 / 4000)
    assert p.k_dimensionless == pytest.approx(0.07)
    with pytest.raises(ValueError):
        bloch.SimParams(k=0.0)
    with pytest.raises(ValueError):
        bloch.SimParams(omega_x=-1.0)
    with pytest.raises(ValueError):
        bloch.SimParams(dt_fine=1.0 / 500)   # coarser than period/1000


def test_drift_diffusion_frozen_example():
    # [DERIVED] state (1, 0, 0), k = 0.07, omega = 2 pi:
    # drift = (-4k, 0, 0) = (-0.28, 0, 0)
    # diffusion = (0, 0, sqrt(8k)) = (0, 0, sqrt(0.56))
    drift, diff = bloch.drift_diffusion([1.0, 0.0, 0.0], 2.0 * math.pi,
                                        0.07)
    assert drift == pytest.approx([-0.28, 0.0, 0.0], abs=1e-15)
    assert diff == pytest.approx([0.0, 0.0, math.sqrt(0.56)], abs=1e-15)


def test_purity_and_fidelity_basics():
    assert bloch.purity([0.0, 0.0, 0.0]) == pytest.approx(0.5)
    assert bloch.purity([0.0, 0.0, 1.0]) == pytest.approx(1.0)
    assert bloch.fidelity([0, 0, 1], [0, 0, 1]) == pytest.approx(1.0)
    assert bloch.fidelity([0, 0, 1], [0, 0, -1]) == pytest.approx(0.0)
    assert bloch.fidelity([0, 0, 1], [0, 0, 0]) == pytest.approx(0.5)
    with pytest.raises(NotPure):
        bloch.fidelity([0, 0, 0.5], [0, 0, 1])


def test_rng_stream_reproducible_and_independent():
    a = bloch.RngStream(7, 0).wiener_increments(100, 0.01)
    b = bloch.RngStream(7, 0).wiener_increments(100, 0.01)
    c = bloch.RngStream(7, 1).wiener_increments(100, 0.01)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.var() == pytest.approx(0.01, rel=0.5)


def test_simulate_truth_shapes_and_purity():
    params = bloch.SimParams(k=0.07)
    n = 25 * 4000
    traj, record = bloch.simulate_truth(params, rng=bloch.RngStream(3))
    assert traj.shape == (n + 1, 3)
    assert record.n == n
    assert record.total_time == pytest.approx(25.0)
    norms = np.linalg.norm(traj, axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-6


def test_simulate_truth_rejects_mixed_init():
    params = bloch.SimParams()
    with pytest.raises(NotPure):
        bloch.simulate_truth(params, init=[0.0, 0.0, 0.5],
                             rng=bloch.RngStream(0))


def test_record_statistics():
    # dy = sqrt(8k) r_z dt + dW: subtracting the predictable part must
    # leave increments with variance ~ dt
    params = bloch.SimParams(k=0.07)
    traj, record = bloch.simulate_truth(params, n_steps=20000,
                                        rng=bloch.RngStream(5))
    c = math.sqrt(8.0 * params.k)
    innov = record.increments - c * traj[:-1, 2] * params.dt_fine
    assert innov.mean() == pytest.approx(0.0, abs=5e-5)
    assert innov.var() == pytest.approx(params.dt_fine, rel=0.05)


def test_self_conditioning_bit_for_bit():
    params = bloch.SimParams(k=0.07)
    traj, record = bloch.simulate_truth(params, n_steps=10000,
                                        rng=bloch.RngStream(11))
    est = bloch.condition_record(traj[0], params.omega_x, record)
    assert np.array_equal(est, traj)


def test_mixed_init_conditioning_converges():
    params = bloch.SimParams(k=0.07)
    traj, record = bloch.simulate_truth(params, rng=bloch.RngStream(13))
    est = bloch.condition_record(np.zeros(3), params.omega_x, record)
    assert bloch.purity(est[0]) == pytest.approx(0.5)
    assert bloch.fidelity(traj[-1], est[-1]) > 0.98


def test_wrong_frequency_conditioning_degrades():
    params = bloch.SimParams(k=0.07)
    traj, record = bloch.simulate_truth(params, rng=bloch.RngStream(17))
    good = bloch.condition_record(np.zeros(3), params.omega_x, record)
    bad = bloch.condition_record(np.zeros(3), params.omega_x * 1.05,
                                 record)
    n_sat = len(traj) // 5
    f_good = np.mean([bloch.fidelity(t, e) for t, e in
                      zip(traj[-n_sat:], good[-n_sat:])])
    f_bad = np.mean([bloch.fidelity(t, e) for t, e in
                     zip(traj[-n_sat:], bad[-n_sat:])])
    assert f_good > f_bad


def test_milstein_step_stays_on_ball():
    rng = np.random.default_rng(1)
    state = np.array([0.0, 0.0, 0.9])   # mixed
    for _ in range(2000):
        state = bloch.milstein_step(state, 2.0 * math.pi, 0.07,
                                    1.0 / 4000, rng.normal(0, 1 / 63.2))
        assert float(state @ state) <= 1.0 + 2e-9


def test_milstein_step_nonfinite_raises():
    with pytest.raises(NonFiniteState):
        bloch.milstein_step([0.0, 0.0, 1.0], 2 * math.pi, 0.07,
                            1 / 4000, math.inf)


def test_condition_step_matches_record_kernel():
    params = bloch.SimParams(k=0.07)
    _, record = bloch.simulate_truth(params, n_steps=50,
                                     rng=bloch.RngStream(19))
    traj = bloch.condition_record(np.zeros(3), params.omega_x, record)
    state = np.zeros(3)
    for i in range(record.n):
        state = bloch.condition_step(state, params.omega_x, params.k,
                                     record.increments[i], params.dt_fine)
    assert np.array_equal(state, traj[-1])

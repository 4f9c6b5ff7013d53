"""Numba kernels for the stochastic integration inner loops.

All trajectory propagation goes through ``milstein_core`` so that the truth
simulator, the record-conditioned observer and the grid-based hybrid filter
share one arithmetic path. This is what makes the "feed the record back and
recover the truth trajectory bit-for-bit" identity hold exactly in floating
point.

Status codes returned by the loop kernels:
    0  success
    1  non-finite state encountered (step size too large)
    2  posterior weights all underflowed to zero (hybrid only)
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_DEGENERATE = 2


@njit(cache=True)
def milstein_core(x, y, z, omega, k, dt, dW, eps_phys):
    """One Milstein step of the Bloch-vector measurement SDE.

    Drift: (-4k x, -omega z - 4k y, omega y)
    Diffusion: sqrt(8k) (-x z, -y z, 1 - z^2)
    Single Wiener process, so the Milstein correction is
    0.5 * (b . grad) b * (dW^2 - dt) with no Levy-area terms.

    Returns (x, y, z, rescued) where rescued flags a rescale back onto the
    unit ball after an overshoot beyond 1 + eps_phys.

    The continuous dynamics maps pure states to pure states for any driving
    noise, so when the incoming state is pure (within eps_phys) the result
    is projected back onto the unit sphere; this removes the O(dt^{3/2})
    per-step purity drift that would otherwise random-walk over long runs.
    Mixed states are only rescued one-sidedly when they overshoot the ball.
    """
    n0 = x * x + y * y + z * z
    c = np.sqrt(8.0 * k)
    mil = dW * dW - dt
    two_z2_m1 = 2.0 * z * z - 1.0
    one_m_z2 = 1.0 - z * z

    xn = x - 4.0 * k * x * dt - c * x * z * dW + 4.0 * k * x * two_z2_m1 * mil
    yn = y - (omega * z + 4.0 * k * y) * dt - c * y * z * dW \
        + 4.0 * k * y * two_z2_m1 * mil
    zn = z + omega * y * dt + c * one_m_z2 * dW - 8.0 * k * z * one_m_z2 * mil

    rescued = 0
    n2 = xn * xn + yn * yn + zn * zn
    lim = 1.0 + eps_phys
    if abs(n0 - 1.0) <= 2.0 * eps_phys:
        s = 1.0 / np.sqrt(n2)
        xn *= s
        yn *= s
        zn *= s
        if n2 > lim * lim:
            rescued = 1
    elif n2 > lim * lim:
        s = 1.0 / np.sqrt(n2)
        xn *= s
        yn *= s
        zn *= s
        rescued = 1
    return xn, yn, zn, rescued


@njit(cache=True)
def simulate_kernel(x0, y0, z0, omega, k, dt, dWs, eps_phys, traj, dys):
    """Generate a truth trajectory and its measurement record.

    traj has shape (n+1, 3), dys shape (n,); both are written in place.
    The step uses the innovation reconstructed from dy rather than the raw
    Wiener draw, so conditioning on the emitted record reproduces this
    trajectory exactly.

    Returns (status, n_rescues).
    """
    c = np.sqrt(8.0 * k)
    x, y, z = x0, y0, z0
    traj[0, 0] = x
    traj[0, 1] = y
    traj[0, 2] = z
    rescues = 0
    for i in range(dWs.shape[0]):
        pred = c * z * dt
        dy = pred + dWs[i]
        dW = dy - pred
        x, y, z, r = milstein_core(x, y, z, omega, k, dt, dW, eps_phys)
        if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
            return STATUS_NONFINITE, rescues
        rescues += r
        dys[i] = dy
        traj[i + 1, 0] = x
        traj[i + 1, 1] = y
        traj[i + 1, 2] = z
    return STATUS_OK, rescues


@njit(cache=True)
def condition_kernel(x0, y0, z0, omega, k, dt, dys, eps_phys, traj):
    """Condition an observer state on an existing record.

    The innovation at each step is dy - sqrt(8k) <r_z> dt with <r_z> taken
    from the observer's own current state. Returns (status, n_rescues).
    """
    c = np.sqrt(8.0 * k)
    x, y, z = x0, y0, z0
    traj[0, 0] = x
    traj[0, 1] = y
    traj[0, 2] = z
    rescues = 0
    for i in range(dys.shape[0]):
        dW = dys[i] - c * z * dt
        x, y, z, r = milstein_core(x, y, z, omega, k, dt, dW, eps_phys)
        if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
            return STATUS_NONFINITE, rescues
        rescues += r
        traj[i + 1, 0] = x
        traj[i + 1, 1] = y
        traj[i + 1, 2] = z
    return STATUS_OK, rescues


@njit(cache=True)
def hybrid_kernel(states, weights, lambdas, k, dt, dys, eps_phys,
                  check_steps, means, stds, map_idx, rho_c):
    """Grid-based hybrid filter: per-grid-point states plus Bayesian weights.

    states   (G, 3)  conditioned state given each candidate frequency
    weights  (G,)    discrete posterior, kept normalized
    lambdas  (G,)    candidate frequencies
    dys      (n,)    fine record increments
    check_steps (m,) sorted step counts at which to snapshot outputs; a value
                     of 0 records the prior before any data.

    Per step the weights are multiplied by the linearized Bayes factor
    1 + sqrt(8k) (<y>_lambda - <y>) dW_c  with  dW_c = dy - sqrt(8k) <y> dt,
    clipped at zero and renormalized (<y> values taken before the state
    update). Each state advances with its own innovation dy - sqrt(8k) z dt.

    Outputs at checkpoint i: posterior mean/std of lambda, argmax index
    (lowest on ties), and the weighted mixture state rho_c[i].

    Returns (status, step_of_failure_or_total).
    """
    c = np.sqrt(8.0 * k)
    G = lambdas.shape[0]
    n = dys.shape[0]
    m = check_steps.shape[0]
    ci = 0

    # checkpoint at step 0 = prior
    while ci < m and check_steps[ci] == 0:
        _hybrid_snapshot(states, weights, lambdas, ci, means, stds,
                         map_idx, rho_c)
        ci += 1

    for i in range(n):
        dy = dys[i]
        zbar = 0.0
        for j in range(G):
            zbar += weights[j] * states[j, 2]
        dWc = dy - c * zbar * dt

        wsum = 0.0
        for j in range(G):
            w = weights[j] * (1.0 + c * (states[j, 2] - zbar) * dWc)
            if w < 0.0:
                w = 0.0
            weights[j] = w
            wsum += w
        if wsum <= 0.0 or not np.isfinite(wsum):
            return STATUS_DEGENERATE, i
        for j in range(G):
            weights[j] /= wsum

        for j in range(G):
            dWj = dy - c * states[j, 2] * dt
            x, y, z, _ = milstein_core(states[j, 0], states[j, 1],
                                       states[j, 2], lambdas[j], k, dt,
                                       dWj, eps_phys)
            if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
                return STATUS_NONFINITE, i
            states[j, 0] = x
            states[j, 1] = y
            states[j, 2] = z

        while ci < m and check_steps[ci] == i + 1:
            _hybrid_snapshot(states, weights, lambdas, ci, means, stds,
                             map_idx, rho_c)
            ci += 1

    return STATUS_OK, n


@njit(cache=True)
def _hybrid_snapshot(states, weights, lambdas, ci, means, stds, map_idx,
                     rho_c):
    G = lambdas.shape[0]
    mu = 0.0
    m2 = 0.0
    for j in range(G):
        mu += weights[j] * lambdas[j]
        m2 += weights[j] * lambdas[j] * lambdas[j]
    var = m2 - mu * mu
    if var < 0.0:
        var = 0.0
    means[ci] = mu
    stds[ci] = np.sqrt(var)
    best = 0
    for j in range(1, G):
        if weights[j] > weights[best]:
            best = j
    map_idx[ci] = best
    for a in range(3):
        acc = 0.0
        for j in range(G):
            acc += weights[j] * states[j, a]
        rho_c[ci, a] = acc

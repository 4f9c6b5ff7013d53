"""Grid-based Bayesian joint state and frequency estimation.

The estimator propagates one conditioned state per candidate frequency on a
uniform grid together with a discrete posterior over the candidates, driven
by the same fine-grained measurement record as the plain conditioned
evolution. The posterior update is the (linearized) Kushner-Stratonovich
multiplier

    P_j <- P_j * [1 + sqrt(8k) (<y>_j - <y>) dW_c],   dW_c = dy - sqrt(8k) <y> dt,

with <y> the posterior-averaged prediction. Probability flows toward the
candidates whose predictions match the record best; negative values from
the linearization are clipped to zero before renormalizing. The overall
conditioned state is the posterior-weighted mixture of the per-candidate
states.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .common import (DegeneratePosterior, FrequencyEstimate, InvalidGrid,
                     NonFiniteState)

GRID_POINTS_FULL = 301
GRID_POINTS_DESK = 61
GRID_SPAN_SIGMAS = 5.0


@dataclass
class FrequencyGrid:
    """Uniform grid of candidate frequencies with prior weights."""

    points: np.ndarray
    prior: np.ndarray

    def validate(self):
        pts = np.asarray(self.points, dtype=float)
        pri = np.asarray(self.prior, dtype=float)
        if pts.ndim != 1 or pts.size == 0 or pri.shape != pts.shape:
            raise InvalidGrid("grid must be 1-D and match its prior")
        if pts.size > 1:
            d = np.diff(pts)
            if np.any(d <= 0):
                raise InvalidGrid("grid points must be strictly increasing")
            if not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
                raise InvalidGrid("grid spacing must be uniform")
        if np.any(pri < 0):
            raise InvalidGrid("prior weights must be non-negative")
        if abs(pri.sum() - 1.0) > 1e-12:
            raise InvalidGrid(f"prior sums to {pri.sum()!r}, not 1")

    @classmethod
    def uniform(cls, lo, hi, n):
        pts = np.linspace(lo, hi, n)
        return cls(points=pts, prior=np.full(n, 1.0 / n))

    @classmethod
    def gaussian(cls, center, sigma, n, span_sigmas=GRID_SPAN_SIGMAS):
        """Gaussian prior of width sigma, truncated at +-span_sigmas and
        renormalized on the grid."""
        pts = np.linspace(center - span_sigmas * sigma,
                          center + span_sigmas * sigma, n)
        w = np.exp(-0.5 * ((pts - center) / sigma) ** 2)
        return cls(points=pts, prior=w / w.sum())


@dataclass
class HybridPosterior:
    """Joint state of the hybrid estimator.

    rho_c is maintained as the weights-weighted mixture of rho_lambda after
    each step (the two O(dt)-equivalent routes agree; see the test suite).
    """

    rho_c: np.ndarray          # (3,)
    rho_lambda: np.ndarray     # (G, 3)
    weights: np.ndarray        # (G,)
    lambdas: np.ndarray        # (G,)
    k: float
    dt: float
    eps_phys: float = 1e-9


def init_hybrid(grid, k, dt, eps_phys=1e-9):
    """Start the estimator: every state completely mixed, weights = prior."""
    grid.validate()
    g = len(grid.points)
    return HybridPosterior(
        rho_c=np.zeros(3),
        rho_lambda=np.zeros((g, 3)),
        weights=np.asarray(grid.prior, dtype=float).copy(),
        lambdas=np.asarray(grid.points, dtype=float).copy(),
        k=k, dt=dt, eps_phys=eps_phys)


def _run_kernel(h, dys, check_steps):
    states = h.rho_lambda.copy()
    weights = h.weights.copy()
    m = len(check_steps)
    means = np.empty(m)
    stds = np.empty(m)
    map_idx = np.empty(m, dtype=np.int64)
    rho_c = np.empty((m, 3))
    status, step = _kernels.hybrid_kernel(
        states, weights, h.lambdas, h.k, h.dt, dys, h.eps_phys,
        np.asarray(check_steps, dtype=np.int64), means, stds, map_idx, rho_c)
    if status == _kernels.STATUS_DEGENERATE:
        raise DegeneratePosterior(
            f"all weights vanished at step {step}; grid does not cover "
            "the truth")
    if status == _kernels.STATUS_NONFINITE:
        raise NonFiniteState(f"non-finite state at step {step}; reduce dt")
    return states, weights, means, stds, map_idx, rho_c


def hybrid_step(h, dy):
    """Advance the posterior one record increment; returns a new posterior."""
    if h.weights.sum() <= 0:
        raise DegeneratePosterior("weights sum to zero")
    states, weights, _, _, _, rho_c = _run_kernel(
        h, np.array([dy]), np.array([1]))
    return HybridPosterior(rho_c=rho_c[0], rho_lambda=states,
                           weights=weights, lambdas=h.lambdas,
                           k=h.k, dt=h.dt, eps_phys=h.eps_phys)


def hybrid_run(h, record, check_steps=None):
    """Drive the posterior through a whole record in one kernel call.

    check_steps is a sorted array of step counts at which to snapshot the
    posterior (0 = prior). Returns (final posterior, snapshots dict with
    'steps', 'mean', 'std', 'map', 'rho_c').
    """
    if record.k != h.k or not math.isclose(record.dt, h.dt,
                                           rel_tol=1e-12):
        raise ValueError("record k/dt do not match the posterior")
    if check_steps is None:
        check_steps = np.array([record.n])
    check_steps = np.asarray(check_steps, dtype=np.int64)
    states, weights, means, stds, map_idx, rho_c = _run_kernel(
        h, record.increments, check_steps)
    final = HybridPosterior(rho_c=(weights[:, None] * states).sum(axis=0),
                            rho_lambda=states, weights=weights,
                            lambdas=h.lambdas, k=h.k, dt=h.dt,
                            eps_phys=h.eps_phys)
    snapshots = {
        "steps": check_steps,
        "mean": means,
        "std": stds,
        "map": h.lambdas[map_idx],
        "rho_c": rho_c,
    }
    return final, snapshots


def freq_estimate(h):
    """Posterior mean, standard deviation and MAP point of the frequency."""
    w = h.weights
    lam = h.lambdas
    mean = float(w @ lam)
    var = float(w @ (lam * lam)) - mean * mean
    std = math.sqrt(max(var, 0.0))
    map_val = float(lam[int(np.argmax(w))])
    return FrequencyEstimate(mean=mean, std=std, map=map_val,
                             method="bayes",
                             diagnostics={"n_grid": len(lam)})


def export_posterior_csv(path, times, lambdas, weight_rows):
    """Posterior snapshots as CSV rows (t, lambda_j, P_j)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "lambda", "P"])
        for t, row in zip(times, weight_rows):
            for lam, p in zip(lambdas, row):
                w.writerow([repr(float(t)), repr(float(lam)),
                            repr(float(p))])


def export_estimates_csv(path, times, means, stds, maps):
    """Estimate time series as CSV rows (t, mean, std, map)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "mean", "std", "map"])
        for t, mu, sd, mp in zip(times, means, stds, maps):
            w.writerow([repr(float(t)), repr(float(mu)), repr(float(sd)),
                        repr(float(mp))])

"""Monte-Carlo experiment orchestration and reporting.

Experiments reproduce the headline comparisons at desk scale: conditioned
state fidelity vs. time and vs. frequency error, Bayesian frequency error
vs. measurement strength, the classical estimator comparison, and a simple
sliding-window frequency tracker. (config, master seed) fully determines
every output byte; realizations use independent, index-keyed noise streams
so aggregates do not depend on execution order.
"""

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import bayes, bloch, classical
from .common import FlatSpectrum, OutOfRange, QubitFreqError

OMEGA_X = bloch.OMEGA_CANONICAL
EXPERIMENTS = ("fidelity_vs_time", "fidelity_vs_error", "bayes_error",
               "classical_comparison", "sliding_track")
RESULT_COLUMNS = ("experiment", "k", "sigma", "method", "t_cycles",
                  "statistic", "value", "stderr", "n")
WORKERS_ENV = "QUBITFREQ_WORKERS"
MIN_AGGREGATE_N = 10


@dataclass
class ExperimentConfig:
    """Parameters of one Monte-Carlo experiment.

    k values are dimensionless measurement strengths 2*pi*k/omega_x; sigma
    values are expected frequency errors in percent.
    """

    experiment: str
    k: list = field(default_factory=lambda: [0.07])
    sigma: list = field(default_factory=lambda: [1.0, 2.0, 5.0])
    cycles: int = 25
    realizations: int = 200
    steps_per_cycle: int = 4000
    samples_per_cycle: int = 50
    grid_points: int = 61
    grid_span_sigmas: float = 5.0
    bayes_sigma_pct: float = 2.0
    checkpoints: list = None          # cycle counts; None = experiment default
    seed: int = 0
    estimator_init: str = "mixed"     # "mixed" or "truth"
    horizon_cycles: int = 25
    qf_init_error_pct: float = 1.0
    band_frac: float = 0.10
    window_cycles: int = 50
    hop_cycles: int = 25
    track_method: str = "music"
    workers: int = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; "
                             f"choose from {EXPERIMENTS}")
        if self.realizations < 1 or self.cycles < 1:
            raise ValueError("realizations and cycles must be >= 1")
        if any(v <= 0 for v in self.k) or any(s < 0 for s in self.sigma):
            raise ValueError("k must be positive and sigma non-negative")

    @property
    def dt_fine(self):
        return 1.0 / self.steps_per_cycle

    def sim_params(self, k_dimensionless):
        return bloch.SimParams(omega_x=OMEGA_X, k=k_dimensionless,
                               dt_fine=self.dt_fine)

    @classmethod
    def from_file(cls, path, experiment=None, **overrides):
        """Load a flat key = value config file; CLI overrides win."""
        values = {}
        with open(path) as f:
            for raw in f:
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                key, _, val = line.partition("=")
                values[key.strip()] = val.strip()
        if experiment is not None:
            values["experiment"] = experiment
        for key, val in overrides.items():
            if val is not None:
                values[key] = val
        kwargs = {}
        by_name = {f.name: f for f in fields(cls)}
        for key, val in values.items():
            if key not in by_name:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, val)
        return cls(**kwargs)


def _coerce(key, val):
    if isinstance(val, str):
        if key in ("experiment", "estimator_init", "track_method"):
            return val
        parts = [p for p in val.split(",") if p.strip() != ""]
        if key in ("k", "sigma", "checkpoints"):
            out = [float(p) for p in parts]
            return [int(v) if key == "checkpoints" else v for v in out]
        if key in ("cycles", "realizations", "steps_per_cycle",
                   "samples_per_cycle", "grid_points", "seed",
                   "horizon_cycles", "window_cycles", "hop_cycles",
                   "workers"):
            return int(val)
        return float(val)
    return val


class ResultTable:
    """Long-format result rows keyed by
    (experiment, k, sigma, method, t_cycles, statistic)."""

    def __init__(self):
        self.rows = []

    def add(self, experiment, k, sigma, method, t_cycles, statistic,
            value, stderr, n):
        self.rows.append({
            "experiment": experiment, "k": k, "sigma": sigma,
            "method": method, "t_cycles": t_cycles,
            "statistic": statistic, "value": value, "stderr": stderr,
            "n": n})

    def add_sample(self, experiment, k, sigma, method, t_cycles,
                   statistic, samples):
        """Aggregate a sample vector into mean +- stderr."""
        samples = np.asarray(samples, dtype=float)
        n = len(samples)
        mean = float(samples.mean()) if n else math.nan
        stderr = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        self.add(experiment, k, sigma, method, t_cycles, statistic, mean,
                 stderr, n)
        if 0 < n < MIN_AGGREGATE_N:
            self.add(experiment, k, sigma, method, t_cycles,
                     statistic + "_small_n_warning", float(n), 0.0, n)

    def add_rms(self, experiment, k, sigma, method, t_cycles, statistic,
                errors):
        """Aggregate error samples into an rms with a delta-method stderr."""
        e = np.asarray(errors, dtype=float)
        n = len(e)
        if n == 0:
            self.add(experiment, k, sigma, method, t_cycles, statistic,
                     math.nan, math.nan, 0)
            return
        rms = float(np.sqrt((e ** 2).mean()))
        if n > 1 and rms > 0:
            stderr = float((e ** 2).std(ddof=1)
                           / (2.0 * rms * math.sqrt(n)))
        else:
            stderr = 0.0
        self.add(experiment, k, sigma, method, t_cycles, statistic, rms,
                 stderr, n)
        if 0 < n < MIN_AGGREGATE_N:
            self.add(experiment, k, sigma, method, t_cycles,
                     statistic + "_small_n_warning", float(n), 0.0, n)

    def sorted_rows(self):
        def key(row):
            return (row["experiment"], row["k"], row["sigma"],
                    row["method"], row["t_cycles"], row["statistic"])
        return sorted(self.rows, key=key)

    def value(self, **match):
        """Look up the single row value matching the given column filters."""
        hits = [r for r in self.rows
                if all(r[c] == v for c, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {match}")
        return hits[0]

    def extend(self, other):
        self.rows.extend(other.rows)


def emit_results(table, path, fmt="csv"):
    """Write results with a deterministic row order and float formatting."""
    rows = table.sorted_rows()
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(RESULT_COLUMNS)
                for row in rows:
                    w.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])
        elif fmt == "json":
            with open(path, "w") as f:
                json.dump({"schema_version": 1, "columns":
                           list(RESULT_COLUMNS), "rows": rows}, f,
                          sort_keys=True, indent=1)
                f.write("\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _cell_seed(master_seed, *cell):
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(cell))
    return int(ss.generate_state(2, np.uint64)[0])


def _param_rng(cell_seed, realization):
    ss = np.random.SeedSequence(entropy=cell_seed,
                                spawn_key=(realization, 1))
    return np.random.default_rng(ss)


def _workers(cfg):
    if cfg.workers is not None:
        return max(int(cfg.workers), 1)
    env = os.environ.get(WORKERS_ENV)
    return max(int(env), 1) if env else 1


def _pmap(fn, args_list, workers):
    if workers <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, args_list, chunksize=1))


# ---------------------------------------------------------------------------
# fidelity experiments

def _fidelity_realization(args):
    (cell_seed, i, kd, sigma_pct, cycles, steps_per_cycle,
     estimator_init) = args
    params = bloch.SimParams(omega_x=OMEGA_X, k=kd,
                             dt_fine=1.0 / steps_per_cycle)
    delta = _param_rng(cell_seed, i).normal(0.0, sigma_pct / 100.0)
    omega_assumed = OMEGA_X * (1.0 + delta)
    n_steps = cycles * steps_per_cycle
    truth, record = bloch.simulate_truth(
        params, n_steps=n_steps, rng=bloch.RngStream(cell_seed, i))
    init = truth[0] if estimator_init == "truth" else np.zeros(3)
    est = bloch.condition_record(init, omega_assumed, record)
    idx = np.arange(cycles + 1) * steps_per_cycle
    return 0.5 * (1.0 + (truth[idx] * est[idx]).sum(axis=1))


def run_fidelity_experiment(cfg):
    """Fidelity of the conditioned state under a mis-assumed frequency.

    Per realization the assumed frequency is omega_x (1 + delta) with
    delta ~ N(0, sigma^2); fidelity against the pure truth is recorded at
    every cycle. fidelity_vs_error additionally reports the infidelity at
    the configured horizon; the "saturated" statistic is the mean over the
    final fifth of the run.
    """
    if cfg.experiment not in ("fidelity_vs_time", "fidelity_vs_error"):
        raise ValueError("config experiment tag does not match")
    table = ResultTable()
    workers = _workers(cfg)
    horizon = min(cfg.horizon_cycles, cfg.cycles)
    for ci, kd in enumerate(cfg.k):
        for si, sigma in enumerate(cfg.sigma):
            cell = _cell_seed(cfg.seed, ci, si)
            args = [(cell, i, kd, sigma, cfg.cycles, cfg.steps_per_cycle,
                     cfg.estimator_init) for i in range(cfg.realizations)]
            fid = np.array(_pmap(_fidelity_realization, args, workers))
            cyc_checks = cfg.checkpoints or list(range(cfg.cycles + 1))
            for t in cyc_checks:
                table.add_sample(cfg.experiment, kd, sigma, "sme", t,
                                 "fidelity", fid[:, t])
            sat_lo = max(int(cfg.cycles * 0.8), 1)
            table.add_sample(cfg.experiment, kd, sigma, "sme", cfg.cycles,
                             "fidelity_saturated",
                             fid[:, sat_lo:].mean(axis=1))
            if cfg.experiment == "fidelity_vs_error":
                table.add_sample(cfg.experiment, kd, sigma, "sme",
                                 horizon, "infidelity",
                                 1.0 - fid[:, horizon])
    return table


# ---------------------------------------------------------------------------
# Bayesian frequency estimation

def _bayes_realization(args):
    (cell_seed, i, kd, sigma_pct, cycles, steps_per_cycle, grid_points,
     span_sigmas, check_cycles) = args
    params = bloch.SimParams(omega_x=OMEGA_X, k=kd,
                             dt_fine=1.0 / steps_per_cycle)
    n_steps = cycles * steps_per_cycle
    _, record = bloch.simulate_truth(
        params, n_steps=n_steps, rng=bloch.RngStream(cell_seed, i))
    grid = bayes.FrequencyGrid.gaussian(
        OMEGA_X, sigma_pct / 100.0 * OMEGA_X, grid_points,
        span_sigmas=span_sigmas)
    h = bayes.init_hybrid(grid, params.k, params.dt_fine)
    checks = np.array(check_cycles, dtype=np.int64) * steps_per_cycle
    try:
        _, snap = bayes.hybrid_run(h, record, check_steps=checks)
    except QubitFreqError:
        return None
    return snap["mean"], snap["std"]


def run_bayes_experiment(cfg):
    """Hybrid-estimator frequency error vs. time for each k.

    Truth runs at the nominal frequency; the estimator starts from the
    completely mixed state with a Gaussian prior of width bayes_sigma_pct.
    Reports the rms error of the posterior-mean estimate (in percent of
    omega_x) and the average posterior standard deviation; at t = 0 the
    latter is the prior width.
    """
    if cfg.experiment != "bayes_error":
        raise ValueError("config experiment tag does not match")
    table = ResultTable()
    workers = _workers(cfg)
    check_cycles = cfg.checkpoints or [0, 10, 25, 50, 100, cfg.cycles]
    check_cycles = sorted(set(min(t, cfg.cycles) for t in check_cycles))
    sigma = cfg.bayes_sigma_pct
    for ci, kd in enumerate(cfg.k):
        cell = _cell_seed(cfg.seed, ci)
        args = [(cell, i, kd, sigma, cfg.cycles, cfg.steps_per_cycle,
                 cfg.grid_points, cfg.grid_span_sigmas, check_cycles)
                for i in range(cfg.realizations)]
        results = _pmap(_bayes_realization, args, workers)
        ok = [r for r in results if r is not None]
        n_failed = len(results) - len(ok)
        means = np.array([r[0] for r in ok])
        stds = np.array([r[1] for r in ok])
        for j, t in enumerate(check_cycles):
            errs = (means[:, j] - OMEGA_X) / OMEGA_X * 100.0
            table.add_rms(cfg.experiment, kd, sigma, "bayes", t,
                          "rms_error_pct", errs)
            table.add_sample(cfg.experiment, kd, sigma, "bayes", t,
                             "mean_posterior_std_pct",
                             stds[:, j] / OMEGA_X * 100.0)
        table.add(cfg.experiment, kd, sigma, "bayes", cfg.cycles,
                  "n_failed", float(n_failed), 0.0, cfg.realizations)
    return table


# ---------------------------------------------------------------------------
# classical estimator comparison

def _classical_realization(args):
    (cell_seed, i, kd, cycles, steps_per_cycle, samples_per_cycle,
     check_cycles, band_frac, qf_init_error_pct) = args
    params = bloch.SimParams(omega_x=OMEGA_X, k=kd,
                             dt_fine=1.0 / steps_per_cycle)
    n_steps = cycles * steps_per_cycle
    _, record = bloch.simulate_truth(
        params, n_steps=n_steps, rng=bloch.RngStream(cell_seed, i))
    disc = classical.decimate(record, samples_per_cycle, OMEGA_X)
    band = (OMEGA_X * (1.0 - band_frac), OMEGA_X * (1.0 + band_frac))
    sign = 1.0 if _param_rng(cell_seed, i).random() < 0.5 else -1.0
    qf_init = OMEGA_X * (1.0 + sign * qf_init_error_pct / 100.0)
    trim = 3 * samples_per_cycle

    out = {}
    for t in check_cycles:
        prefix = disc.prefix(t * samples_per_cycle)
        cell = {}
        try:
            est = classical.periodogram_max(prefix, band)
            cell["periodogram"] = est.mean
        except (FlatSpectrum, OutOfRange, QubitFreqError):
            cell["periodogram"] = None
        for method, init in (("qf_perfect", OMEGA_X), ("qf_1pct", qf_init)):
            try:
                est = classical.quinn_fernandes(prefix, init)
                cell[method] = est.mean if est.diagnostics["converged"] \
                    else None
            except (OutOfRange, QubitFreqError):
                cell[method] = None
        try:
            filt, fdiag = classical.butterworth_bandpass(
                prefix, OMEGA_X, frac_band=band_frac)
            trimmed = classical.DiscreteRecord(
                filt.samples[trim:], filt.delta_t)
            # the prefilter localizes the spectrum; search everything
            # below Nyquist for the global pseudo-spectrum maximum
            est = classical.music_estimate(
                trimmed, band=(0.05 * OMEGA_X, 0.98 * trimmed.nyquist))
            cell["music"] = None if est.diagnostics["low_confidence"] \
                else est.map
        except QubitFreqError:
            cell["music"] = None
        out[t] = cell
    return out


CLASSICAL_METHODS = ("periodogram", "qf_perfect", "qf_1pct", "music")


def run_classical_comparison(cfg):
    """rms frequency error of the classical estimators on growing record
    prefixes; flagged or failed estimates are excluded and counted."""
    if cfg.experiment != "classical_comparison":
        raise ValueError("config experiment tag does not match")
    table = ResultTable()
    workers = _workers(cfg)
    check_cycles = cfg.checkpoints or [10, 25, 50, 100, 150, 250,
                                       cfg.cycles]
    check_cycles = sorted(set(min(t, cfg.cycles) for t in check_cycles))
    for ci, kd in enumerate(cfg.k):
        cell = _cell_seed(cfg.seed, ci)
        args = [(cell, i, kd, cfg.cycles, cfg.steps_per_cycle,
                 cfg.samples_per_cycle, check_cycles, cfg.band_frac,
                 cfg.qf_init_error_pct) for i in range(cfg.realizations)]
        results = _pmap(_classical_realization, args, workers)
        for t in check_cycles:
            for method in CLASSICAL_METHODS:
                vals = [r[t][method] for r in results]
                good = [v for v in vals if v is not None]
                errs = [(v - OMEGA_X) / OMEGA_X * 100.0 for v in good]
                table.add_rms(cfg.experiment, kd, 0.0, method, t,
                              "rms_error_pct", errs)
                table.add(cfg.experiment, kd, 0.0, method, t,
                          "n_excluded", float(len(vals) - len(good)),
                          0.0, len(vals))
    return table


# ---------------------------------------------------------------------------
# sliding-window tracking

def sliding_window_track(record, window_cycles, hop_cycles, method,
                         init_band, samples_per_cycle=50):
    """Re-estimate the frequency over a moving window of the record.

    Each window's search band (and, for Quinn-Fernandes, initial guess) is
    seeded from the previous window's output. Flagged windows leave a NaN
    gap and do not move the seed. Returns an array of (t_center,
    omega_hat) rows.
    """
    if window_cycles < 10:
        raise ValueError("window must cover at least 10 cycles")
    if method not in ("periodogram", "music", "quinn_fernandes"):
        raise ValueError(f"unknown method {method!r}")
    lo, hi = init_band
    omega0 = 0.5 * (lo + hi)
    frac = (hi - lo) / (hi + lo)
    disc = classical.decimate(record, samples_per_cycle, omega0)
    win = window_cycles * samples_per_cycle
    hop = hop_cycles * samples_per_cycle
    if disc.n < win:
        raise ValueError("record shorter than one window")
    prev = omega0
    track = []
    for start in range(0, disc.n - win + 1, hop):
        sub = classical.DiscreteRecord(disc.samples[start:start + win],
                                       disc.delta_t)
        band = (prev * (1.0 - frac), prev * (1.0 + frac))
        omega_hat = None
        try:
            if method == "periodogram":
                omega_hat = classical.periodogram_max(sub, band).mean
            elif method == "quinn_fernandes":
                est = classical.quinn_fernandes(sub, prev)
                if est.diagnostics["converged"]:
                    omega_hat = est.mean
            else:
                filt, fdiag = classical.butterworth_bandpass(
                    sub, prev, frac_band=max(frac, 0.02))
                trimmed = classical.DiscreteRecord(
                    filt.samples[3 * samples_per_cycle:], filt.delta_t)
                est = classical.music_estimate(trimmed, band=band)
                if not est.diagnostics["low_confidence"]:
                    omega_hat = est.map
        except QubitFreqError:
            omega_hat = None
        t_center = (start + 0.5 * win) * disc.delta_t
        track.append((t_center, omega_hat if omega_hat is not None
                      else math.nan))
        if omega_hat is not None:
            prev = omega_hat
    return np.array(track)


def run_sliding_track(cfg):
    """Track a constant-frequency qubit record with a moving window."""
    if cfg.experiment != "sliding_track":
        raise ValueError("config experiment tag does not match")
    table = ResultTable()
    for ci, kd in enumerate(cfg.k):
        cell = _cell_seed(cfg.seed, ci)
        params = cfg.sim_params(kd)
        for i in range(cfg.realizations):
            _, record = bloch.simulate_truth(
                params, n_steps=cfg.cycles * cfg.steps_per_cycle,
                rng=bloch.RngStream(cell, i))
            band = (OMEGA_X * (1.0 - cfg.band_frac),
                    OMEGA_X * (1.0 + cfg.band_frac))
            track = sliding_window_track(
                record, cfg.window_cycles, cfg.hop_cycles,
                cfg.track_method, band,
                samples_per_cycle=cfg.samples_per_cycle)
            for t_center, omega_hat in track:
                table.add(cfg.experiment, kd, 0.0, cfg.track_method,
                          float(t_center), f"omega_hat_real{i}",
                          float(omega_hat), 0.0, 1)
    return table


RUNNERS = {
    "fidelity_vs_time": run_fidelity_experiment,
    "fidelity_vs_error": run_fidelity_experiment,
    "bayes_error": run_bayes_experiment,
    "classical_comparison": run_classical_comparison,
    "sliding_track": run_sliding_track,
}


def run_experiment(cfg):
    return RUNNERS[cfg.experiment](cfg)

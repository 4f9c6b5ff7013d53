"""Command-line interface.

Subcommands cover the single-record operations (simulate, condition,
bayes, classify, track) and the Monte-Carlo experiments (experiment).
Failures from the physics or estimation layers exit nonzero and print one
machine-readable line ``ERROR <Category>: <detail>`` on stderr.
"""

import argparse
import sys

import numpy as np

from . import bayes, bloch, classical, harness, io
from .common import QubitFreqError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qubitfreq",
        description="Continuously measured qubit simulation and frequency "
                    "estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate",
                       help="simulate a truth trajectory and its record")
    p.add_argument("--k", type=float, default=0.07,
                   help="dimensionless measurement strength (default 0.07)")
    p.add_argument("--cycles", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream-id", type=int, default=0)
    p.add_argument("--steps-per-cycle", type=int,
                   default=bloch.DEFAULT_STEPS_PER_CYCLE)
    p.add_argument("--out", required=True,
                   help="trajectory CSV (t, r_x, r_y, r_z, dy)")
    p.add_argument("--record-out",
                   help="optionally also write the bare record CSV")

    p = sub.add_parser("condition",
                       help="condition an observer state on a record")
    p.add_argument("--record", required=True, help="record CSV from simulate")
    p.add_argument("--delta-pct", type=float, default=0.0,
                   help="assumed-frequency error in percent of omega_x")
    p.add_argument("--init", choices=("mixed", "excited"), default="mixed")
    p.add_argument("--out", required=True)

    p = sub.add_parser("bayes",
                       help="run the grid-based Bayesian frequency estimator")
    p.add_argument("--record", required=True)
    p.add_argument("--sigma", type=float, default=2.0,
                   help="Gaussian prior width in percent (default 2)")
    p.add_argument("--grid-points", type=int,
                   default=bayes.GRID_POINTS_DESK)
    p.add_argument("--checkpoints-per-cycle", type=int, default=1,
                   help="posterior snapshots per nominal cycle")
    p.add_argument("--out", required=True,
                   help="estimate time series CSV (t, mean, std, map)")
    p.add_argument("--posterior-out",
                   help="optionally dump posterior snapshots (t, lambda, P)")

    p = sub.add_parser("classify",
                       help="classical frequency estimates from a record")
    p.add_argument("--record", required=True)
    p.add_argument("--method", choices=("all",) + harness.CLASSICAL_METHODS,
                   default="all")
    p.add_argument("--band-frac", type=float, default=0.10)
    p.add_argument("--samples-per-cycle", type=int, default=50)
    p.add_argument("--out", required=True)

    p = sub.add_parser("experiment", help="run a Monte-Carlo experiment")
    p.add_argument("tag", choices=harness.EXPERIMENTS)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--realizations", type=int)
    p.add_argument("--cycles", type=int)
    p.add_argument("--k", help="comma-separated k values")
    p.add_argument("--sigma", help="comma-separated sigma values in percent")
    p.add_argument("--workers", type=int)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", required=True)

    p = sub.add_parser("track",
                       help="sliding-window frequency tracking of a record")
    p.add_argument("--record", required=True)
    p.add_argument("--window-cycles", type=int, default=50)
    p.add_argument("--hop-cycles", type=int, default=25)
    p.add_argument("--method", default="music",
                   choices=("periodogram", "music", "quinn_fernandes"))
    p.add_argument("--band-frac", type=float, default=0.10)
    p.add_argument("--samples-per-cycle", type=int, default=50)
    p.add_argument("--out", required=True)
    return parser


def _cmd_simulate(args):
    params = bloch.SimParams(k=args.k,
                             dt_fine=1.0 / args.steps_per_cycle)
    rng = bloch.RngStream(args.seed, args.stream_id)
    traj, record = bloch.simulate_truth(
        params, n_steps=args.cycles * args.steps_per_cycle, rng=rng)
    io.write_trajectory_csv(args.out, traj, record, seed=args.seed,
                            stream_id=args.stream_id,
                            omega_x=params.omega_x)
    if args.record_out:
        io.write_record_csv(args.record_out, record, seed=args.seed,
                            stream_id=args.stream_id,
                            omega_x=params.omega_x)
    print(f"wrote {traj.shape[0]} states to {args.out}")


def _cmd_condition(args):
    record, meta = io.read_record_csv(args.record)
    omega = bloch.OMEGA_CANONICAL * (1.0 + args.delta_pct / 100.0)
    init = np.zeros(3) if args.init == "mixed" \
        else np.array([0.0, 0.0, 1.0])
    traj = bloch.condition_record(init, omega, record)
    io.write_trajectory_csv(args.out, traj, record,
                            omega_x=bloch.OMEGA_CANONICAL)
    print(f"wrote {traj.shape[0]} conditioned states to {args.out}")


def _cmd_bayes(args):
    record, meta = io.read_record_csv(args.record)
    omega_x = float(meta.get("omega_x", bloch.OMEGA_CANONICAL))
    grid = bayes.FrequencyGrid.gaussian(
        omega_x, args.sigma / 100.0 * omega_x, args.grid_points)
    h = bayes.init_hybrid(grid, record.k, record.dt)
    steps_per_cycle = int(round(2.0 * np.pi / omega_x / record.dt))
    stride = max(steps_per_cycle // args.checkpoints_per_cycle, 1)
    checks = np.arange(0, record.n + 1, stride, dtype=np.int64)
    if checks[-1] != record.n:
        checks = np.append(checks, record.n)
    final, snap = bayes.hybrid_run(h, record, check_steps=checks)
    times = snap["steps"] * record.dt
    bayes.export_estimates_csv(args.out, times, snap["mean"], snap["std"],
                               snap["map"])
    if args.posterior_out:
        bayes.export_posterior_csv(
            args.posterior_out, [times[0], times[-1]], h.lambdas,
            [np.asarray(grid.prior, dtype=float), final.weights])
    est = bayes.freq_estimate(final)
    print(f"posterior mean {est.mean:.6f}  std {est.std:.3e}  "
          f"map {est.map:.6f}")


def _cmd_classify(args):
    record, meta = io.read_record_csv(args.record)
    omega_x = float(meta.get("omega_x", bloch.OMEGA_CANONICAL))
    disc = classical.decimate(record, args.samples_per_cycle, omega_x)
    band = (omega_x * (1.0 - args.band_frac),
            omega_x * (1.0 + args.band_frac))
    t_end = disc.n * disc.delta_t
    methods = harness.CLASSICAL_METHODS if args.method == "all" \
        else (args.method,)
    rows = []
    for method in methods:
        try:
            if method == "periodogram":
                est = classical.periodogram_max(disc, band)
                rows.append((method, 0.0, t_end, est.mean, est.std, None))
            elif method in ("qf_perfect", "qf_1pct"):
                init = omega_x if method == "qf_perfect" \
                    else omega_x * 1.01
                est = classical.quinn_fernandes(disc, init)
                flag = "converged" if est.diagnostics["converged"] \
                    else "not_converged"
                rows.append((method, 0.0, t_end, est.mean, flag,
                             est.diagnostics["iterations"]))
            else:
                filt, _ = classical.butterworth_bandpass(
                    disc, omega_x, frac_band=args.band_frac)
                trimmed = classical.DiscreteRecord(
                    filt.samples[3 * args.samples_per_cycle:],
                    filt.delta_t)
                est = classical.music_estimate(
                    trimmed, band=(0.05 * omega_x, 0.98 * trimmed.nyquist))
                flag = "low_confidence" \
                    if est.diagnostics["low_confidence"] else "ok"
                rows.append((method, 0.0, t_end, est.map, flag, None))
        except QubitFreqError as exc:
            rows.append((method, 0.0, t_end, float("nan"),
                         type(exc).__name__, None))
    io.write_estimates_csv(args.out, rows)
    for method, _, _, omega_hat, flag, _ in rows:
        print(f"{method}: omega_hat = {omega_hat!r}  [{flag}]")


def _cmd_experiment(args):
    overrides = {"seed": args.seed, "realizations": args.realizations,
                 "cycles": args.cycles, "k": args.k, "sigma": args.sigma,
                 "workers": args.workers}
    if args.config:
        cfg = harness.ExperimentConfig.from_file(
            args.config, experiment=args.tag, **overrides)
    else:
        kwargs = {key: harness._coerce(key, val)
                  for key, val in overrides.items() if val is not None}
        cfg = harness.ExperimentConfig(experiment=args.tag, **kwargs)
    table = harness.run_experiment(cfg)
    harness.emit_results(table, args.out, fmt=args.format)
    print(f"wrote {len(table.rows)} result rows to {args.out}")


def _cmd_track(args):
    record, meta = io.read_record_csv(args.record)
    omega_x = float(meta.get("omega_x", bloch.OMEGA_CANONICAL))
    band = (omega_x * (1.0 - args.band_frac),
            omega_x * (1.0 + args.band_frac))
    track = harness.sliding_window_track(
        record, args.window_cycles, args.hop_cycles, args.method, band,
        samples_per_cycle=args.samples_per_cycle)
    window_t = args.window_cycles * 2.0 * np.pi / omega_x
    rows = [(args.method, t - 0.5 * window_t, t + 0.5 * window_t, w,
             None if np.isfinite(w) else "flagged", None)
            for t, w in track]
    io.write_estimates_csv(args.out, rows)
    n_ok = int(np.isfinite(track[:, 1]).sum())
    print(f"tracked {len(rows)} windows ({n_ok} confident) to {args.out}")


COMMANDS = {
    "simulate": _cmd_simulate,
    "condition": _cmd_condition,
    "bayes": _cmd_bayes,
    "classify": _cmd_classify,
    "experiment": _cmd_experiment,
    "track": _cmd_track,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except QubitFreqError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

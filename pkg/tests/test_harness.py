"""Experiment harness, I/O and CLI tests (small, fast runs)."""

import math

import numpy as np
import pytest

from qubitfreq import bloch, cli, harness, io


def test_config_from_file_and_overrides(tmp_path):
    cfg_file = tmp_path / "exp.cfg"
    cfg_file.write_text(
        "# comment line\n"
        "experiment = fidelity_vs_time\n"
        "k = 0.05, 0.07\n"
        "sigma = 1.0\n"
        "cycles = 12   # trailing comment\n"
        "realizations = 4\n")
    cfg = harness.ExperimentConfig.from_file(cfg_file)
    assert cfg.experiment == "fidelity_vs_time"
    assert cfg.k == [0.05, 0.07]
    assert cfg.cycles == 12
    cfg = harness.ExperimentConfig.from_file(cfg_file, cycles="20",
                                             seed="5")
    assert cfg.cycles == 20 and cfg.seed == 5


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        harness.ExperimentConfig(experiment="bogus")
    with pytest.raises(ValueError):
        harness.ExperimentConfig(experiment="bayes_error", k=[-0.1])
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("experiment = bayes_error\nnot_a_key = 3\n")
    with pytest.raises(ValueError):
        harness.ExperimentConfig.from_file(cfg_file)


def test_result_table_aggregation():
    t = harness.ResultTable()
    t.add_rms("x", 0.07, 0.0, "m", 10, "rms_error_pct",
              [3.0, 4.0] * 10)
    row = t.value(statistic="rms_error_pct")
    assert row["value"] == pytest.approx(math.sqrt(12.5))
    assert row["n"] == 20
    t2 = harness.ResultTable()
    t2.add_sample("x", 0.07, 0.0, "m", 10, "fidelity", [0.5] * 12)
    row = t2.value(statistic="fidelity")
    assert row["value"] == 0.5 and row["stderr"] == 0.0


def test_emit_results_deterministic(tmp_path):
    cfg = harness.ExperimentConfig(experiment="fidelity_vs_time",
                                   k=[0.07], sigma=[0.0], cycles=4,
                                   realizations=3, seed=1,
                                   checkpoints=[4])
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    harness.emit_results(harness.run_experiment(cfg), p1)
    harness.emit_results(harness.run_experiment(cfg), p2)
    assert p1.read_bytes() == p2.read_bytes()
    harness.emit_results(harness.run_experiment(cfg),
                         tmp_path / "a.json", fmt="json")
    assert (tmp_path / "a.json").read_text().startswith("{")


def test_fidelity_experiment_sigma_effect():
    cfg = harness.ExperimentConfig(experiment="fidelity_vs_time",
                                   k=[0.07], sigma=[0.0, 5.0],
                                   cycles=10, realizations=10, seed=2,
                                   checkpoints=[10])
    t = harness.run_fidelity_experiment(cfg)
    f0 = t.value(sigma=0.0, statistic="fidelity_saturated")["value"]
    f5 = t.value(sigma=5.0, statistic="fidelity_saturated")["value"]
    assert 0.9 < f0 <= 1.0
    assert f5 < f0


def test_bayes_experiment_prior_row():
    cfg = harness.ExperimentConfig(experiment="bayes_error", k=[0.035],
                                   cycles=5, realizations=3, seed=3,
                                   checkpoints=[0, 5])
    t = harness.run_bayes_experiment(cfg)
    assert t.value(t_cycles=0,
                   statistic="rms_error_pct")["value"] == \
        pytest.approx(0.0, abs=1e-9)
    assert t.value(t_cycles=0,
                   statistic="mean_posterior_std_pct")["value"] == \
        pytest.approx(cfg.bayes_sigma_pct, rel=1e-3)
    assert t.value(statistic="n_failed")["value"] == 0.0


def test_classical_comparison_rows():
    cfg = harness.ExperimentConfig(experiment="classical_comparison",
                                   k=[0.07], cycles=25, realizations=3,
                                   seed=4, checkpoints=[25])
    t = harness.run_classical_comparison(cfg)
    for method in harness.CLASSICAL_METHODS:
        row = t.value(method=method, statistic="n_excluded")
        assert 0 <= row["value"] <= 3


def _synthetic_record(cycles, omega, dt=1 / 4000):
    n = int(round(cycles * 2 * math.pi / omega / dt))
    t = np.arange(n) * dt
    incr = 5.0 * np.cos(omega * t) * dt + \
        np.random.default_rng(9).normal(0, 0.5 * math.sqrt(dt), n)
    return bloch.MeasurementRecord(dt=dt, increments=incr, k=0.07)


def test_sliding_window_track_constant_frequency():
    # windows must span many cycles so the +-10% band is wide compared
    # with the (oversampled) periodogram mainlobe
    omega = 2 * math.pi
    record = _synthetic_record(140, omega)
    band = (0.9 * omega, 1.1 * omega)
    track = harness.sliding_window_track(record, 40, 20, "periodogram",
                                         band)
    assert track.shape[1] == 2
    good = track[np.isfinite(track[:, 1])]
    assert len(good) >= len(track) - 1
    assert np.all(np.abs(good[:, 1] - omega) / omega < 0.02)


def test_sliding_window_track_validation():
    record = _synthetic_record(15, 2 * math.pi)
    band = (0.9 * 2 * math.pi, 1.1 * 2 * math.pi)
    with pytest.raises(ValueError):
        harness.sliding_window_track(record, 5, 5, "periodogram", band)
    with pytest.raises(ValueError):
        harness.sliding_window_track(record, 10, 5, "bogus", band)


def test_io_record_roundtrip(tmp_path):
    params = bloch.SimParams(k=0.07)
    _, record = bloch.simulate_truth(params, n_steps=100,
                                     rng=bloch.RngStream(41))
    path = tmp_path / "rec.csv"
    io.write_record_csv(path, record, seed=41, stream_id=0,
                        omega_x=params.omega_x)
    back, meta = io.read_record_csv(path)
    assert np.array_equal(back.increments, record.increments)
    assert back.dt == record.dt and back.k == record.k
    assert meta["seed"] == "41"


def test_io_discrete_roundtrip(tmp_path):
    from qubitfreq import classical
    disc = classical.DiscreteRecord(np.linspace(-1, 1, 7), 0.02)
    path = tmp_path / "disc.csv"
    io.write_discrete_csv(path, disc)
    back, _ = io.read_discrete_csv(path)
    assert np.array_equal(back.samples, disc.samples)
    assert back.delta_t == disc.delta_t


def test_cli_simulate_condition_classify(tmp_path):
    traj_csv = tmp_path / "traj.csv"
    rec_csv = tmp_path / "rec.csv"
    rc = cli.main(["simulate", "--cycles", "25", "--seed", "51",
                   "--out", str(traj_csv), "--record-out", str(rec_csv)])
    assert rc == 0
    assert traj_csv.exists() and rec_csv.exists()

    cond_csv = tmp_path / "cond.csv"
    rc = cli.main(["condition", "--record", str(rec_csv),
                   "--delta-pct", "1.0", "--out", str(cond_csv)])
    assert rc == 0 and cond_csv.exists()

    est_csv = tmp_path / "est.csv"
    rc = cli.main(["classify", "--record", str(rec_csv),
                   "--method", "qf_perfect", "--out", str(est_csv)])
    assert rc == 0
    assert est_csv.read_text().splitlines()[1].startswith("qf_perfect,")


def test_cli_bayes_and_track(tmp_path):
    rec_csv = tmp_path / "rec.csv"
    assert cli.main(["simulate", "--cycles", "30", "--seed", "52",
                     "--out", str(tmp_path / "t.csv"),
                     "--record-out", str(rec_csv)]) == 0
    est_csv = tmp_path / "bayes.csv"
    rc = cli.main(["bayes", "--record", str(rec_csv), "--grid-points",
                   "21", "--checkpoints-per-cycle", "1",
                   "--out", str(est_csv),
                   "--posterior-out", str(tmp_path / "post.csv")])
    assert rc == 0
    assert est_csv.read_text().splitlines()[0] == "t,mean,std,map"

    track_csv = tmp_path / "track.csv"
    rc = cli.main(["track", "--record", str(rec_csv), "--window-cycles",
                   "10", "--hop-cycles", "10", "--method", "periodogram",
                   "--out", str(track_csv)])
    assert rc == 0 and track_csv.exists()


def test_cli_experiment_and_errors(tmp_path):
    cfg_file = tmp_path / "exp.cfg"
    cfg_file.write_text("experiment = fidelity_vs_time\nk = 0.07\n"
                        "sigma = 0.0\ncycles = 4\nrealizations = 2\n"
                        "checkpoints = 4\n")
    out = tmp_path / "res.csv"
    rc = cli.main(["experiment", "fidelity_vs_time", "--config",
                   str(cfg_file), "--seed", "1", "--out", str(out)])
    assert rc == 0
    header = out.read_text().splitlines()[0]
    assert header == ",".join(harness.RESULT_COLUMNS)

    rc = cli.main(["condition", "--record", str(tmp_path / "nope.csv"),
                   "--out", str(tmp_path / "x.csv")])
    assert rc == 1

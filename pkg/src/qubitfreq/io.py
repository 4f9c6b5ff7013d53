"""CSV serialization for trajectories, records and estimates.

All floats are written with ``repr`` (shortest round-trip form), so a file
written twice from the same data is byte-identical and reads back exactly.
Metadata travels in ``# key = value`` comment lines before the header row.
"""

import csv

import numpy as np

from .bloch import MeasurementRecord
from .classical import DiscreteRecord


def _write_meta(f, meta):
    for key, val in meta.items():
        f.write(f"# {key} = {_scalar(val)}\n")


def _scalar(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _read_meta(f):
    """Consume leading comment lines; returns (meta dict, rest of lines)."""
    meta = {}
    lines = []
    for raw in f:
        if raw.startswith("#"):
            key, _, val = raw[1:].partition("=")
            meta[key.strip()] = val.strip()
        else:
            lines.append(raw)
    return meta, lines


def write_trajectory_csv(path, traj, record, seed=None, stream_id=None,
                         omega_x=None):
    """Trajectory + record as rows (t, r_x, r_y, r_z, dy).

    The final row's dy is empty: a trajectory has one more state than the
    record has increments.
    """
    traj = np.asarray(traj, dtype=float)
    with open(path, "w", newline="") as f:
        meta = {}
        if seed is not None:
            meta["seed"] = seed
        if stream_id is not None:
            meta["stream_id"] = stream_id
        if omega_x is not None:
            meta["omega_x"] = float(omega_x)
        meta["k"] = float(record.k)
        meta["dt"] = float(record.dt)
        meta["n_steps"] = record.n
        _write_meta(f, meta)
        w = csv.writer(f)
        w.writerow(["t", "r_x", "r_y", "r_z", "dy"])
        for i in range(traj.shape[0]):
            dy = repr(float(record.increments[i])) if i < record.n else ""
            w.writerow([repr(i * record.dt), repr(traj[i, 0]),
                        repr(traj[i, 1]), repr(traj[i, 2]), dy])


def write_record_csv(path, record, seed=None, stream_id=None, omega_x=None):
    """Fine measurement record as rows (t, dy)."""
    with open(path, "w", newline="") as f:
        meta = {}
        if seed is not None:
            meta["seed"] = seed
        if stream_id is not None:
            meta["stream_id"] = stream_id
        if omega_x is not None:
            meta["omega_x"] = float(omega_x)
        meta["k"] = float(record.k)
        meta["dt"] = float(record.dt)
        meta["n_steps"] = record.n
        _write_meta(f, meta)
        w = csv.writer(f)
        w.writerow(["t", "dy"])
        for i in range(record.n):
            w.writerow([repr(i * record.dt),
                        repr(float(record.increments[i]))])


def read_record_csv(path):
    """Inverse of write_record_csv; returns (MeasurementRecord, meta)."""
    with open(path, newline="") as f:
        meta, lines = _read_meta(f)
    rows = list(csv.reader(lines))
    header, rows = rows[0], rows[1:]
    if header[:2] != ["t", "dy"]:
        raise ValueError(f"unexpected record header {header!r} in {path}")
    dys = np.array([float(r[1]) for r in rows])
    return MeasurementRecord(dt=float(meta["dt"]), increments=dys,
                             k=float(meta["k"])), meta


def write_discrete_csv(path, disc, seed=None):
    """Decimated record as rows (n, t_n, y_n)."""
    with open(path, "w", newline="") as f:
        meta = {"delta_t": float(disc.delta_t), "n_samples": disc.n}
        if seed is not None:
            meta["seed"] = seed
        _write_meta(f, meta)
        w = csv.writer(f)
        w.writerow(["n", "t_n", "y_n"])
        for i in range(disc.n):
            w.writerow([i, repr(i * disc.delta_t),
                        repr(float(disc.samples[i]))])


def read_discrete_csv(path):
    """Inverse of write_discrete_csv; returns (DiscreteRecord, meta)."""
    with open(path, newline="") as f:
        meta, lines = _read_meta(f)
    rows = list(csv.reader(lines))
    header, rows = rows[0], rows[1:]
    if header[:3] != ["n", "t_n", "y_n"]:
        raise ValueError(f"unexpected sample header {header!r} in {path}")
    samples = np.array([float(r[2]) for r in rows])
    return DiscreteRecord(samples=samples,
                          delta_t=float(meta["delta_t"])), meta


def write_estimates_csv(path, rows):
    """Estimate rows (method, window_start, window_end, omega_hat,
    std_or_flag, iterations); std_or_flag and iterations may be None."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "window_start", "window_end", "omega_hat",
                    "std_or_flag", "iterations"])
        for method, t0, t1, omega_hat, flag, iters in rows:
            w.writerow([method, repr(float(t0)), repr(float(t1)),
                        repr(float(omega_hat)),
                        "" if flag is None else _scalar(flag),
                        "" if iters is None else int(iters)])

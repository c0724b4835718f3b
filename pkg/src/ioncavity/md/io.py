"""Trajectory and snapshot files.

Trajectory CSV, one row per ion per recorded sample::

    # ioncavity-trajectory v1
    time_s,id,species,x_m,y_m,z_m,vx_m_s,vy_m_s,vz_m_s

Snapshot CSV, positions only::

    # ioncavity-snapshot v1
    id,species,x_m,y_m,z_m

Columnar binary output is a NumPy ``.npz`` archive with arrays ``time``
(T,), ``species`` (N,), ``positions`` (T, N, 3), ``velocities`` (T, N, 3) and
a ``schema`` string equal to the CSV header line.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

TRAJECTORY_HEADER = "# ioncavity-trajectory v1"
SNAPSHOT_HEADER = "# ioncavity-snapshot v1"
TRAJECTORY_COLUMNS = ["time_s", "id", "species", "x_m", "y_m", "z_m", "vx_m_s", "vy_m_s", "vz_m_s"]
SNAPSHOT_COLUMNS = ["id", "species", "x_m", "y_m", "z_m"]


def write_trajectory_csv(path, times, species_index, positions, velocities):
    times = np.asarray(times)
    positions = np.asarray(positions)
    velocities = np.asarray(velocities)
    with open(path, "w", newline="") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for t, pos, vel in zip(times, positions, velocities):
            for i, (s, p, v) in enumerate(zip(species_index, pos, vel)):
                w.writerow([repr(float(t)), i, int(s), *map(repr, map(float, p)), *map(repr, map(float, v))])


def read_trajectory_csv(path):
    """Returns (times, species_index, positions, velocities)."""
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != TRAJECTORY_HEADER:
            raise ValueError(f"{path}: expected header {TRAJECTORY_HEADER!r}, got {header!r}")
        rows = list(csv.DictReader(fh))
    if not rows:
        return np.empty(0), np.empty(0, dtype=int), np.empty((0, 0, 3)), np.empty((0, 0, 3))
    ids = np.array([int(r["id"]) for r in rows])
    n = ids.max() + 1
    t_all = np.array([float(r["time_s"]) for r in rows])
    times = t_all[::n]
    data = np.array([[float(r[c]) for c in TRAJECTORY_COLUMNS[3:]] for r in rows]).reshape(len(times), n, 6)
    species = np.array([int(r["species"]) for r in rows[:n]])
    return times, species, data[..., :3], data[..., 3:]


def write_snapshot_csv(path, species_index, positions):
    with open(path, "w", newline="") as fh:
        fh.write(SNAPSHOT_HEADER + "\n")
        w = csv.writer(fh)
        w.writerow(SNAPSHOT_COLUMNS)
        for i, (s, p) in enumerate(zip(species_index, positions)):
            w.writerow([i, int(s), *map(repr, map(float, p))])


def read_snapshot_csv(path):
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != SNAPSHOT_HEADER:
            raise ValueError(f"{path}: expected header {SNAPSHOT_HEADER!r}, got {header!r}")
        rows = list(csv.DictReader(fh))
    species = np.array([int(r["species"]) for r in rows], dtype=int)
    pos = np.array([[float(r["x_m"]), float(r["y_m"]), float(r["z_m"])] for r in rows]).reshape(-1, 3)
    return species, pos


def write_trajectory_npz(path, times, species_index, positions, velocities):
    np.savez(
        Path(path),
        schema=np.array(TRAJECTORY_HEADER),
        time=np.asarray(times),
        species=np.asarray(species_index),
        positions=np.asarray(positions),
        velocities=np.asarray(velocities),
    )


def read_trajectory_npz(path):
    with np.load(path) as f:
        if str(f["schema"]) != TRAJECTORY_HEADER:
            raise ValueError(f"{path}: unsupported schema {f['schema']}")
        return f["time"], f["species"], f["positions"], f["velocities"]

"""Deterministic CSV and JSON writers.

Floats are rendered with repr() (shortest round-trip form), so identical
runs produce byte-identical files and every value reloads exactly.
"""

from __future__ import annotations

import json
import os

import numpy as np

CURVE_COLUMNS = ["algo", "task", "seed", "env_steps", "window_mean_reward",
                 "policy_loss", "value_loss", "entropy", "clip_fraction"]
CONTINUAL_COLUMNS = ["algo", "preset", "seed", "phase", "task", "env_steps",
                     "window_mean_reward", "phase_start"]
EPISODE_COLUMNS = ["episode", "total_reward", "length", "stockout_terminated"]


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_cell(cell) for cell in row) + "\n")


class CsvAppender:
    """Streaming writer with a fixed header, for step traces."""

    def __init__(self, path, header):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self._fh = open(path, "w", newline="")
        self._fh.write(",".join(header) + "\n")

    def __call__(self, row):
        self._fh.write(",".join(format_cell(cell) for cell in row) + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def jsonable(obj):
    """Recursively convert numpy containers/scalars for json.dumps."""
    if isinstance(obj, dict):
        return {key: jsonable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(value) for value in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(path, payload):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(jsonable(payload), fh, indent=1)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)

"""Versioned checkpoint serialization.

Checkpoints are JSON: parameter arrays as nested lists (repr-exact floats),
optimizer moments, step counters, reward-window contents and every RNG
state, which makes save -> load -> save byte-identical and a resumed run
bit-equal to an uninterrupted one.
"""

from __future__ import annotations

import json

from .artifacts import jsonable, write_json
from .errors import CheckpointError

FORMAT = "echelonrl-checkpoint"
VERSION = 1


def save_checkpoint(path, algo: str, hp_dict: dict, machine_state: dict,
                    harness: dict):
    payload = {
        "format": FORMAT,
        "version": VERSION,
        "algo": algo,
        "hp": hp_dict,
        "harness": harness,
        "state": machine_state,
    }
    write_json(path, payload)


def load_checkpoint(path) -> dict:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    if payload.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not an {FORMAT} file")
    if payload.get("version") != VERSION:
        raise CheckpointError(
            f"checkpoint version {payload.get('version')} unsupported "
            f"(expected {VERSION})")
    return payload


def resave_checkpoint(path, payload: dict):
    """Write a loaded payload back out (round-trip identity helper)."""
    write_json(path, jsonable(payload))

"""Customer demand generation for the six task variants.

Demand is drawn from a normal distribution, rounded half-away-from-zero and
clamped at zero so all downstream inventory arithmetic stays integral. Batched
variants repeat each draw ``batch_size`` times; batches are aligned to the
stream start, not to episode resets, so an episode reset never disturbs the
batch phase unless the stream itself is reseeded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

# Canonical task names; these identifiers appear in CLI flags, config files
# and CSV columns.
TASKS = {
    "Bat3": (2.0, 0.1, 3),
    "Bat7": (2.0, 0.1, 7),
    "Bat10": (2.0, 0.1, 10),
    "Sto1": (2.0, 1.0, 1),
    "Sto01": (2.0, 0.1, 1),
    "Sto0": (2.0, 0.0, 1),
}

# Recorded in run metadata so traces can be reproduced bit-exactly.
RNG_FAMILY = "numpy.random.Generator(PCG64)"
NORMAL_METHOD = "numpy Generator.normal (ziggurat); round half away from zero, clamp at 0"


@dataclass(frozen=True)
class DemandConfig:
    """Parameters of one demand regime: units/day mean and std, repetition count."""

    mean: float
    std: float
    batch_size: int = 1

    def __post_init__(self):
        if self.mean < 0:
            raise ConfigError(f"demand mean must be >= 0, got {self.mean}")
        if self.std < 0:
            raise ConfigError(f"demand std must be >= 0, got {self.std}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


def make_task(name: str) -> DemandConfig:
    """Return the demand parameters for a canonical task name."""
    try:
        mean, std, batch = TASKS[name]
    except KeyError:
        raise ConfigError(
            f"unknown task {name!r}; expected one of {', '.join(TASKS)}"
        ) from None
    return DemandConfig(mean=mean, std=std, batch_size=batch)


def _round_half_away_from_zero(x: float) -> int:
    q = int(math.floor(abs(x) + 0.5))
    return q if x >= 0 else -q


class DemandStream:
    """Seeded, stateful generator of integer customer demand.

    Each fresh value is drawn once from Normal(mean, std) and then re-emitted
    for ``batch_size`` consecutive calls. Streams are independent; mutation
    requires exclusive access.
    """

    def __init__(self, config: DemandConfig, seed=None):
        self.config = config
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.held_value = 0
        self.repeats_remaining = 0

    def next_demand(self) -> int:
        if self.repeats_remaining > 0:
            self.repeats_remaining -= 1
            return self.held_value
        x = self.rng.normal(self.config.mean, self.config.std)
        self.held_value = max(0, _round_half_away_from_zero(x))
        self.repeats_remaining = self.config.batch_size - 1
        return self.held_value

    # -- checkpoint support ------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "config": {
                "mean": self.config.mean,
                "std": self.config.std,
                "batch_size": self.config.batch_size,
            },
            "rng_state": self.rng.bit_generator.state,
            "held_value": self.held_value,
            "repeats_remaining": self.repeats_remaining,
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "DemandStream":
        stream = cls(DemandConfig(**state["config"]))
        stream.rng.bit_generator.state = state["rng_state"]
        stream.held_value = int(state["held_value"])
        stream.repeats_remaining = int(state["repeats_remaining"])
        return stream

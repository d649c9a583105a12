"""Pull-based three-echelon supply-chain MDP.

Echelons are indexed 0 = retailer, 1 = warehouse, 2 = factory. Stock moves
only in response to downstream orders: a single trigger (retailer inventory
below the reorder point with nothing already in transit to the retailer)
gates all three echelons' orders for the step. Unmet customer demand is
lost, penalized per unit, and counted as one stockout occasion per step.

Each step runs five phases in a fixed order:

1. arrivals   - pipeline entries due now are added to their destination,
                clamped at capacity with the overflow discarded (and logged);
2. demand     - the customer draw is sold against retailer stock; a step
                with unmet demand increments the stockout counter;
3. ordering   - the reorder point is updated from the action, and if the
                trigger fires each echelon ships min(requested, upstream
                stock, destination headroom), with per-hop lead times;
                the factory draws from an infinite raw-material source;
4. reward     - per-unit holding cost on post-phase inventories plus the
                per-unit penalty on this step's unmet demand, negated;
5. clock      - the day counter advances; the episode ends once stockouts
                exceed ``max_stockouts`` or the day exceeds ``max_days``.

All quantities are integers; capacities bound inventories at every phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .demand import DemandConfig, DemandStream
from .errors import EpisodeDoneError

N_ECHELONS = 3
OBS_SIZE = 10

# Step-trace CSV schema (one row per step); reproduces the data behind the
# action-policy and inventory-policy figures.
TRACE_COLUMNS = [
    "day", "task", "I0", "I1", "I2", "demand",
    "Q0", "Q1", "Q2", "R0",
    "shipped0", "shipped1", "shipped2",
    "reward", "stockouts", "done",
]


@dataclass(frozen=True)
class EnvConfig:
    capacities: tuple = (30, 30, 30)
    holding_costs: tuple = (1000.0, 5.0, 1000.0)
    stockout_cost: float = 10000.0
    processing_time_warehouse: int = 3
    processing_time_factory: int = 1
    service_time: int = 0
    max_days: int = 30
    max_stockouts: int = 3
    initial_inventory: tuple = (10, 0, 0)
    max_order: tuple = (10, 30, 30)
    reorder_point_max: int = 10
    # When True, any in-transit stock anywhere blocks the order trigger
    # (instead of only stock destined for the retailer).
    system_wide_transit_gate: bool = False

    def __post_init__(self):
        assert all(c > 0 for c in self.capacities)
        assert all(h >= 0 for h in self.holding_costs) and self.stockout_cost >= 0
        assert all(m <= c for m, c in zip(self.max_order, self.capacities))
        assert self.max_days > 0


@dataclass(frozen=True)
class Action:
    """Per-echelon order quantities plus the retailer reorder point."""

    q0: int
    q1: int
    q2: int
    r0: int

    @staticmethod
    def from_sequence(values) -> "Action":
        q0, q1, q2, r0 = (int(v) for v in values)
        return Action(q0, q1, q2, r0)

    def clamped(self, config: EnvConfig) -> "Action":
        return Action(
            min(max(self.q0, 0), config.max_order[0]),
            min(max(self.q1, 0), config.max_order[1]),
            min(max(self.q2, 0), config.max_order[2]),
            min(max(self.r0, 0), config.reorder_point_max),
        )


@dataclass
class PipelineEntry:
    destination: int
    quantity: int
    arrival_day: int


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


def holding_cost(inventories: Sequence[int], config: EnvConfig) -> float:
    return sum(h * min(i, c) for i, h, c
               in zip(inventories, config.holding_costs, config.capacities))


def compute_reward(inventories: Sequence[int], demand: int, config: EnvConfig) -> float:
    """Negative cost: per-unit stockout penalty on demand not covered by
    retailer stock, plus per-unit holding cost at every echelon. Pure."""
    unmet = max(demand - inventories[0], 0)
    return -(config.stockout_cost * unmet + holding_cost(inventories, config))


def clip_order(requested: int, upstream_available: int, headroom: int) -> int:
    """Shippable quantity: bounded by the request, the upstream stock and
    the destination headroom (capacity minus on-hand minus in-transit)."""
    return min(requested, upstream_available, headroom)


def in_transit(pipeline: Sequence[PipelineEntry], destination: int) -> int:
    return sum(e.quantity for e in pipeline if e.destination == destination)


def is_order_triggered(inventory_0: int, reorder_point: int,
                       pipeline: Sequence[PipelineEntry],
                       system_wide: bool = False) -> bool:
    """Order gate: retailer stock below the reorder point with no incoming
    retailer shipment (or no shipment anywhere when ``system_wide``)."""
    if inventory_0 >= reorder_point:
        return False
    if system_wide:
        return len(pipeline) == 0
    return not any(e.destination == 0 for e in pipeline)


class SupplyChainEnv:
    """Simulator with gym-style ``reset``/``step``.

    ``reset()`` restores inventories and the clock but keeps the demand
    stream running (the market does not restart with the episode); install
    a new stream with ``set_task`` or by passing ``task``/``seed``.
    Instances are independent; one instance must not be stepped concurrently.
    """

    def __init__(self, config: EnvConfig = EnvConfig(),
                 task: Optional[DemandConfig] = None,
                 task_name: str = "", seed=None):
        self.config = config
        self.task_name = task_name
        self.demand_stream: Optional[DemandStream] = None
        if task is not None:
            self.set_task(task, seed=seed, task_name=task_name)
        self.done = True  # must reset before stepping
        self.day = 0
        self.inventories = list(config.initial_inventory)
        self.pipeline: list[PipelineEntry] = []
        self.stockout_count = 0
        self.last_demand = 0
        self.reorder_point = 0

    def set_task(self, task: DemandConfig, seed=None, task_name: str = ""):
        self.demand_stream = DemandStream(task, seed=seed)
        if task_name:
            self.task_name = task_name

    def reset(self, task: Optional[DemandConfig] = None, seed=None,
              task_name: str = "") -> np.ndarray:
        if task is not None or seed is not None:
            self.set_task(task or self.demand_stream.config, seed=seed,
                          task_name=task_name)
        if self.demand_stream is None:
            raise ValueError("no demand task installed; pass task= on reset")
        self.day = 0
        self.inventories = list(self.config.initial_inventory)
        self.pipeline = []
        self.stockout_count = 0
        self.last_demand = 0
        self.reorder_point = 0
        self.done = False
        return self.observation()

    def observation(self) -> np.ndarray:
        """Flat vector [I0 I1 I2 D InTransit0 InTransit1 InTransit2 PT1 PT2 ST0]."""
        c = self.config
        return np.array(
            [
                self.inventories[0], self.inventories[1], self.inventories[2],
                self.last_demand,
                in_transit(self.pipeline, 0),
                in_transit(self.pipeline, 1),
                in_transit(self.pipeline, 2),
                c.processing_time_warehouse, c.processing_time_factory,
                c.service_time,
            ],
            dtype=np.float64,
        )

    def step(self, action) -> StepResult:
        if self.done:
            raise EpisodeDoneError("step() called on a finished episode; reset first")
        c = self.config
        if not isinstance(action, Action):
            action = Action.from_sequence(action)
        action = action.clamped(c)
        inv = self.inventories

        # Phase 1: arrivals. Entries due by tomorrow's clock land now;
        # anything beyond capacity is discarded.
        delivered = [0, 0, 0]
        overflow = [0, 0, 0]
        remaining = []
        for entry in self.pipeline:
            if entry.arrival_day <= self.day + 1:
                d = entry.destination
                accepted = min(entry.quantity, c.capacities[d] - inv[d])
                inv[d] += accepted
                delivered[d] += accepted
                overflow[d] += entry.quantity - accepted
            else:
                remaining.append(entry)
        self.pipeline = remaining

        # Phase 2: demand (lost sales).
        demand = self.demand_stream.next_demand()
        self.last_demand = demand
        sold = min(demand, inv[0])
        inv[0] -= sold
        unmet = demand - sold
        if unmet > 0:
            self.stockout_count += 1

        # Phase 3: ordering. The reorder point always updates; the order
        # quantities only take effect when the trigger fires.
        self.reorder_point = action.r0
        triggered = is_order_triggered(inv[0], self.reorder_point, self.pipeline,
                                       c.system_wide_transit_gate)
        shipped = [0, 0, 0]
        if triggered:
            # warehouse -> retailer, lead 1 + PT_1 + ST_0
            headroom0 = c.capacities[0] - inv[0] - in_transit(self.pipeline, 0)
            shipped[0] = clip_order(action.q0, inv[1], headroom0)
            inv[1] -= shipped[0]
            if shipped[0] > 0:
                self.pipeline.append(PipelineEntry(
                    0, shipped[0],
                    self.day + 1 + c.processing_time_warehouse + c.service_time))
            # factory -> warehouse, lead 1 + PT_2
            headroom1 = c.capacities[1] - inv[1] - in_transit(self.pipeline, 1)
            shipped[1] = clip_order(action.q1, inv[2], headroom1)
            inv[2] -= shipped[1]
            if shipped[1] > 0:
                self.pipeline.append(PipelineEntry(
                    1, shipped[1], self.day + 1 + c.processing_time_factory))
            # raw material -> factory, immediate production
            headroom2 = c.capacities[2] - inv[2]
            shipped[2] = clip_order(action.q2, action.q2, headroom2)
            inv[2] += shipped[2]

        # Phase 4: reward. Holding cost on post-phase inventories; the
        # stockout term charges exactly this step's unmet units (a step
        # whose demand was fully met costs only the holding).
        reward = -(c.stockout_cost * unmet + holding_cost(inv, c))

        # Phase 5: clock and termination.
        self.day += 1
        self.done = (self.stockout_count > c.max_stockouts
                     or self.day > c.max_days)

        info = {
            "demand": demand,
            "unmet_demand": unmet,
            "stockout_count": self.stockout_count,
            "orders_placed": triggered,
            "shipped_quantities": tuple(shipped),
            "delivered": tuple(delivered),
            "arrival_overflow": tuple(overflow),
            "day": self.day,
        }
        return StepResult(self.observation(), reward, self.done, info)

    # -- checkpoint support ------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "task_name": self.task_name,
            "day": self.day,
            "inventories": list(self.inventories),
            "pipeline": [[e.destination, e.quantity, e.arrival_day]
                         for e in self.pipeline],
            "stockout_count": self.stockout_count,
            "last_demand": self.last_demand,
            "reorder_point": self.reorder_point,
            "done": self.done,
            "demand_stream": self.demand_stream.state_dict(),
        }

    def load_state_dict(self, state: dict):
        self.task_name = state["task_name"]
        self.day = int(state["day"])
        self.inventories = [int(v) for v in state["inventories"]]
        self.pipeline = [PipelineEntry(int(d), int(q), int(a))
                         for d, q, a in state["pipeline"]]
        self.stockout_count = int(state["stockout_count"])
        self.last_demand = int(state["last_demand"])
        self.reorder_point = int(state["reorder_point"])
        self.done = bool(state["done"])
        self.demand_stream = DemandStream.from_state_dict(state["demand_stream"])


def trace_row(env: SupplyChainEnv, action: Action, result: StepResult) -> list:
    """One TRACE_COLUMNS row; ``day`` is the day index during the step."""
    return [
        result.info["day"] - 1, env.task_name,
        env.inventories[0], env.inventories[1], env.inventories[2],
        result.info["demand"],
        action.q0, action.q1, action.q2, action.r0,
        *result.info["shipped_quantities"],
        float(result.reward), result.info["stockout_count"], int(result.done),
    ]

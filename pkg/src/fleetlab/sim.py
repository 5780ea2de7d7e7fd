"""Discrete-time fleet simulator.

An epoch proceeds in two stages:

1. sequential assignment -- vehicles are ordered canonically and each one
   picks an atomic action (fulfill / reposition / charge / pass) against a
   working copy of the state in which earlier commitments are already
   reflected; atomic rewards sum exactly to the epoch reward;
2. transition -- committed tasks start, etas and charger clocks tick down,
   unfulfilled orders age (and abandon past the connection patience), and new
   orders arrive as Poisson counts truncated at the queue cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import NetworkConfig
from .errors import ContractViolation
from .model import (
    AtomicAction,
    FleetAction,
    SystemState,
    TripStatus,
    VehicleStatus,
    action_to_index,
    atomic_reward,
    check_fleet_action,
    epoch_reward,
    feasible_mask,
    index_to_action,
    validate_state,
)


def initial_state(config: NetworkConfig) -> SystemState:
    """Day-zero state: idle fleet spread round-robin, half battery, all free."""
    V, B = config.num_regions, config.battery_capacity
    vehicles = np.zeros((V, config.eta_cap + 1, B + 1), dtype=np.int64)
    b0 = B // 2
    for n in range(config.fleet_size):
        vehicles[n % V, 0, b0] += 1
    trips = np.zeros((V, V, config.connection_patience + 1), dtype=np.int64)
    chargers = np.zeros((V, config.num_rates, config.charge_period), dtype=np.int64)
    chargers[:, :, 0] = config.charger_counts
    return SystemState(0, vehicles, trips, chargers)


def draw_arrivals(config: NetworkConfig, t: int, rng: np.random.Generator) -> np.ndarray:
    """Poisson order arrivals during epoch t, one count per (origin, dest)."""
    return rng.poisson(config.arrival_rate[:, :, t]).astype(np.int64)


@dataclass
class StepInfo:
    reward: float = 0.0
    fulfilled: int = 0
    abandoned: int = 0
    arrived: int = 0
    rejected: int = 0
    repositioned: int = 0
    charges_started: int = 0


def transition(
    config: NetworkConfig, state: SystemState, action: FleetAction, arrivals: np.ndarray,
    validate: bool = True,
) -> tuple[SystemState, StepInfo]:
    """Apply a fleet action and an arrival matrix; returns next state and stats.

    ``validate=False`` skips the feasibility/conservation checks for callers
    that already guarantee them (the exact-solver enumeration)."""
    if validate:
        check_fleet_action(config, state, action)
    V, B, R, J = config.num_regions, config.battery_capacity, config.num_rates, config.charge_period
    t = state.t
    info = StepInfo(reward=epoch_reward(config, action, t))

    vehicles = np.zeros_like(state.vehicles)
    trips = state.trips.copy()
    chargers = np.zeros_like(state.chargers)
    new_charges = np.zeros((V, R), dtype=np.int64)
    assigned = np.zeros_like(state.vehicles)

    for (c, o), n in action.fulfill.items():
        assigned[c.dest, c.eta, c.battery] += n
        trips[o.origin, o.dest, o.age] -= n
        tau = int(config.trip_duration[o.origin, o.dest, t])
        vehicles[o.dest, c.eta + tau - 1, c.battery - config.battery_cost[o.origin, o.dest]] += n
        info.fulfilled += n
    for (c, v), n in action.reposition.items():
        assigned[c.dest, c.eta, c.battery] += n
        tau = int(config.trip_duration[c.dest, v, t])
        vehicles[v, tau - 1, c.battery - config.battery_cost[c.dest, v]] += n
        info.repositioned += n
    for (c, rate), n in action.charge.items():
        assigned[c.dest, c.eta, c.battery] += n
        vehicles[c.dest, J - 1, config.charge_result(c.battery, rate)] += n
        new_charges[c.dest, config.rate_index(rate)] += n
        info.charges_started += n

    # passing vehicles: eta ticks down toward idle, idle stays put
    passing = state.vehicles - assigned
    if (passing < 0).any():
        raise ContractViolation("more vehicles assigned than present")
    vehicles[:, 0, :] += passing[:, 0, :]
    if config.eta_cap >= 1:
        vehicles[:, :-1, :] += passing[:, 1:, :]

    # trips age by one epoch; those past the connection patience abandon
    Lc = config.connection_patience
    info.abandoned = int(trips[:, :, Lc].sum())
    aged = np.zeros_like(trips)
    aged[:, :, 1:] = trips[:, :, :Lc]
    carried = aged.sum(axis=2)
    info.arrived = int(arrivals.sum())
    accepted = np.minimum(arrivals, np.maximum(config.trip_cap - carried, 0))
    np.fill_diagonal(accepted, 0)
    info.rejected = info.arrived - int(accepted.sum())
    aged[:, :, 0] = accepted

    # charger clocks tick; newly engaged chargers run for a full period
    chargers[:, :, 0] = state.chargers[:, :, 0] - new_charges
    if J >= 2:
        chargers[:, :, 0] += state.chargers[:, :, 1]
        chargers[:, :, 1:-1] = state.chargers[:, :, 2:]
    chargers[:, :, J - 1] += new_charges
    if (chargers < 0).any():
        raise ContractViolation("charger accounting went negative")

    nxt = SystemState((t + 1) % config.horizon_steps, vehicles, aged, chargers)
    if validate:
        validate_state(config, nxt)
    return nxt, info


def step(
    config: NetworkConfig, state: SystemState, action: FleetAction, rng: np.random.Generator
) -> tuple[SystemState, StepInfo]:
    """One epoch under random arrivals. Orders deposited into the next state
    (age 0 at epoch t+1) are drawn at rate lambda[t+1], so the age-0 queue
    observed at any epoch t has mean lambda[t] -- the convention the fleet-flow
    LP's order-cap constraint assumes."""
    t_next = (state.t + 1) % config.horizon_steps
    return transition(config, state, action, draw_arrivals(config, t_next, rng))


# -- sequential atomic assignment ---------------------------------------------


@dataclass
class AtomicRecord:
    vehicle: VehicleStatus
    action: AtomicAction
    index: int
    prob: float
    reward: float


@dataclass
class EpochResult:
    action: FleetAction
    records: list[AtomicRecord]
    info: StepInfo = field(default=None)  # filled in by run_day

    def atomic_reward_sum(self) -> float:
        return math.fsum(r.reward for r in self.records)


class WorkingState:
    """Mutable intra-epoch view; reflects commitments made so far this epoch."""

    def __init__(self, state: SystemState):
        self.t = state.t
        self.vehicles = state.vehicles.copy()
        self.trips = state.trips.copy()
        self.chargers = state.chargers.copy()

    def commit(self, config: NetworkConfig, vehicle: VehicleStatus, action: AtomicAction) -> None:
        self.vehicles[vehicle.dest, vehicle.eta, vehicle.battery] -= 1
        if action.kind == "fulfill":
            o = action.trip
            self.trips[o.origin, o.dest, o.age] -= 1
        elif action.kind == "charge":
            self.chargers[vehicle.dest, config.rate_index(action.rate), 0] -= 1


def run_epoch(
    config: NetworkConfig, state: SystemState, policy, rng: np.random.Generator
) -> EpochResult:
    """Assign every vehicle in canonical order; returns the fleet action built."""
    work = WorkingState(state)
    action = FleetAction.empty()
    records: list[AtomicRecord] = []
    if hasattr(policy, "begin_epoch"):
        policy.begin_epoch(config, state, rng)
    for vehicle in state.vehicle_units():
        mask = feasible_mask(config, _as_state_view(work), vehicle)
        idx, prob = policy.act(config, work, vehicle, mask, rng)
        if not mask[idx]:
            raise ContractViolation(f"policy chose infeasible action index {idx}")
        atomic = index_to_action(config, idx)
        r = atomic_reward(config, vehicle, atomic, state.t)
        records.append(AtomicRecord(vehicle, atomic, idx, prob, r))
        action.add_atomic(vehicle, atomic)
        work.commit(config, vehicle, atomic)
    return EpochResult(action, records)


def _as_state_view(work: WorkingState) -> SystemState:
    # feasible_mask only reads trips/chargers/vehicle presence; build a light view
    view = object.__new__(SystemState)
    object.__setattr__(view, "t", work.t)
    object.__setattr__(view, "vehicles", work.vehicles)
    object.__setattr__(view, "trips", work.trips)
    object.__setattr__(view, "chargers", work.chargers)
    return view


# -- rollouts -----------------------------------------------------------------


@dataclass
class DayTrace:
    epochs: list[EpochResult]
    states: list[SystemState]          # length T+1: state before each epoch + final
    total_reward: float

    @property
    def infos(self) -> list[StepInfo]:
        return [e.info for e in self.epochs]


def run_day(
    config: NetworkConfig, state: SystemState, policy, rng: np.random.Generator
) -> DayTrace:
    epochs: list[EpochResult] = []
    states = [state]
    for _ in range(config.horizon_steps):
        res = run_epoch(config, state, policy, rng)
        state, info = step(config, state, res.action, rng)
        res.info = info
        epochs.append(res)
        states.append(state)
    total = math.fsum(e.info.reward for e in epochs)
    return DayTrace(epochs, states, total)


def run_days(
    config: NetworkConfig, policy, days: int, rng: np.random.Generator,
    state: SystemState | None = None,
) -> list[DayTrace]:
    if state is None:
        state = initial_state(config)
    traces = []
    for _ in range(days):
        tr = run_day(config, state, policy, rng)
        traces.append(tr)
        state = tr.states[-1]
    return traces


def average_daily_reward(traces: list[DayTrace]) -> float:
    return math.fsum(t.total_reward for t in traces) / len(traces)

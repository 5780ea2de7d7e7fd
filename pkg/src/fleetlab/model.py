"""Domain types for the fleet-dispatch MDP and the per-epoch reward.

Counts live in dense integer arrays indexed by status tuples:

* vehicles  -- shape (V, eta_cap+1, B+1), entry = number of vehicles with
  (destination/charging region v, remaining steps eta, battery-on-completion b)
* trips     -- shape (V, V, L_c+1), entry = queued orders (origin, dest, age)
* chargers  -- shape (V, R, J), entry = chargers (region, rate index,
  remaining steps)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .config import NetworkConfig
from .errors import ContractViolation, InvalidArgument


class VehicleStatus(NamedTuple):
    dest: int
    eta: int
    battery: int


class TripStatus(NamedTuple):
    origin: int
    dest: int
    age: int


class ChargerStatus(NamedTuple):
    region: int
    rate: int
    remaining: int


class AtomicAction(NamedTuple):
    """A single-vehicle task: fulfill a trip, reposition, charge, or pass."""

    kind: str                       # "fulfill" | "reposition" | "charge" | "pass"
    trip: Optional[TripStatus] = None
    region: Optional[int] = None
    rate: Optional[int] = None


PASS = AtomicAction("pass")


def fulfill(trip: TripStatus) -> AtomicAction:
    return AtomicAction("fulfill", trip=trip)


def reposition(region: int) -> AtomicAction:
    return AtomicAction("reposition", region=region)


def charge(rate: int) -> AtomicAction:
    return AtomicAction("charge", rate=rate)


@dataclass(frozen=True)
class SystemState:
    """Integer counts of vehicles, queued trips and chargers at one epoch."""

    t: int                          # time of day, 0-based in [0, T)
    vehicles: np.ndarray
    trips: np.ndarray
    chargers: np.ndarray

    def __post_init__(self):
        for f in ("vehicles", "trips", "chargers"):
            arr = np.ascontiguousarray(getattr(self, f), dtype=np.int64)
            arr.flags.writeable = False
            object.__setattr__(self, f, arr)

    def vehicle_units(self) -> list[VehicleStatus]:
        """All vehicles expanded one per unit, in canonical assignment order.

        Canonical order: eta ascending, battery descending, region ascending.
        """
        out = []
        vs, es, bs = np.nonzero(self.vehicles)
        order = sorted(zip(es, -bs, vs), key=lambda k: (k[0], k[1], k[2]))
        for e, nb, v in order:
            out.extend([VehicleStatus(int(v), int(e), int(-nb))] * int(self.vehicles[v, e, -nb]))
        return out

    def replace_time(self, t: int) -> "SystemState":
        return SystemState(t, self.vehicles, self.trips, self.chargers)

    def key(self) -> tuple:
        """Hashable identity, used by the exact-solution oracle."""
        return (self.t, self.vehicles.tobytes(), self.trips.tobytes(), self.chargers.tobytes())


def validate_state(config: NetworkConfig, state: SystemState) -> None:
    V, B, R, J = config.num_regions, config.battery_capacity, config.num_rates, config.charge_period
    if state.vehicles.shape != (V, config.eta_cap + 1, B + 1):
        raise ContractViolation(f"vehicles array shape {state.vehicles.shape}")
    if state.trips.shape != (V, V, config.connection_patience + 1):
        raise ContractViolation(f"trips array shape {state.trips.shape}")
    if state.chargers.shape != (V, R, J):
        raise ContractViolation(f"chargers array shape {state.chargers.shape}")
    if not (0 <= state.t < config.horizon_steps):
        raise ContractViolation(f"time of day {state.t} out of range")
    if (state.vehicles < 0).any() or (state.trips < 0).any() or (state.chargers < 0).any():
        raise ContractViolation("negative counts")
    if int(state.vehicles.sum()) != config.fleet_size:
        raise ContractViolation("fleet size not conserved")
    per_station = state.chargers.sum(axis=2)
    if (per_station != config.charger_counts).any():
        raise ContractViolation("charger totals not conserved")
    if (state.trips > config.trip_cap).any():
        raise ContractViolation("trip queue exceeds N(L_c+1) cap")


@dataclass
class FleetAction:
    """A fleet flow: counts per (vehicle status, task), plus passes."""

    fulfill: dict[tuple[VehicleStatus, TripStatus], int]
    reposition: dict[tuple[VehicleStatus, int], int]
    charge: dict[tuple[VehicleStatus, int], int]        # keyed by rate value
    pass_count: dict[VehicleStatus, int]

    @classmethod
    def empty(cls) -> "FleetAction":
        return cls({}, {}, {}, {})

    def add_atomic(self, vehicle: VehicleStatus, action: AtomicAction) -> None:
        if action.kind == "fulfill":
            k = (vehicle, action.trip)
            self.fulfill[k] = self.fulfill.get(k, 0) + 1
        elif action.kind == "reposition":
            k = (vehicle, action.region)
            self.reposition[k] = self.reposition.get(k, 0) + 1
        elif action.kind == "charge":
            k = (vehicle, action.rate)
            self.charge[k] = self.charge.get(k, 0) + 1
        elif action.kind == "pass":
            self.pass_count[vehicle] = self.pass_count.get(vehicle, 0) + 1
        else:
            raise InvalidArgument(f"unknown atomic action kind {action.kind!r}")

    def all_pass(self) -> bool:
        return not (self.fulfill or self.reposition or self.charge)


def all_pass_action(config: NetworkConfig, state: SystemState) -> FleetAction:
    act = FleetAction.empty()
    vs, es, bs = np.nonzero(state.vehicles)
    for v, e, b in zip(vs, es, bs):
        act.pass_count[VehicleStatus(int(v), int(e), int(b))] = int(state.vehicles[v, e, b])
    return act


# -- atomic action index space -----------------------------------------------
#
# Policies emit a distribution over a fixed index space:
#   [fulfill (u, v, xi) for u, v != u, xi]  ++  [reposition v]  ++
#   [charge rate]  ++  [pass]


def action_count(config: NetworkConfig) -> int:
    V, Lc1, R = config.num_regions, config.connection_patience + 1, config.num_rates
    return V * (V - 1) * Lc1 + V + R + 1


def fulfill_index(config: NetworkConfig, trip: TripStatus) -> int:
    V, Lc1 = config.num_regions, config.connection_patience + 1
    u, v, xi = trip
    voff = v if v < u else v - 1
    return (u * (V - 1) + voff) * Lc1 + xi


def action_to_index(config: NetworkConfig, action: AtomicAction) -> int:
    V, Lc1, R = config.num_regions, config.connection_patience + 1, config.num_rates
    nf = V * (V - 1) * Lc1
    if action.kind == "fulfill":
        return fulfill_index(config, action.trip)
    if action.kind == "reposition":
        return nf + action.region
    if action.kind == "charge":
        return nf + V + config.rate_index(action.rate)
    if action.kind == "pass":
        return nf + V + R
    raise InvalidArgument(f"unknown atomic action kind {action.kind!r}")


def index_to_action(config: NetworkConfig, idx: int) -> AtomicAction:
    V, Lc1, R = config.num_regions, config.connection_patience + 1, config.num_rates
    nf = V * (V - 1) * Lc1
    if idx < 0 or idx >= action_count(config):
        raise InvalidArgument(f"action index {idx} out of range")
    if idx < nf:
        u, rem = divmod(idx, (V - 1) * Lc1)
        voff, xi = divmod(rem, Lc1)
        v = voff if voff < u else voff + 1
        return fulfill(TripStatus(u, v, xi))
    idx -= nf
    if idx < V:
        return reposition(idx)
    idx -= V
    if idx < R:
        return charge(config.charge_rates[idx])
    return PASS


# -- feasibility --------------------------------------------------------------


def _check_vehicle(config: NetworkConfig, state: SystemState, vehicle: VehicleStatus) -> None:
    v, e, b = vehicle
    if not (
        0 <= v < config.num_regions
        and 0 <= e <= config.eta_cap
        and 0 <= b <= config.battery_capacity
    ):
        raise InvalidArgument(f"vehicle status {vehicle} out of range")
    if state.vehicles[v, e, b] <= 0:
        raise InvalidArgument(f"no vehicle with status {vehicle} in state")


def feasible_mask(config: NetworkConfig, state: SystemState, vehicle: VehicleStatus) -> np.ndarray:
    """Boolean mask over the atomic action index space for one vehicle.

    Trip queues and charger availability are read from `state`, so passing an
    intra-epoch working state yields the sequential-assignment feasible set.
    """
    _check_vehicle(config, state, vehicle)
    V, Lc1, R = config.num_regions, config.connection_patience + 1, config.num_rates
    nf = V * (V - 1) * Lc1
    mask = np.zeros(action_count(config), dtype=bool)
    mask[-1] = True                                          # pass, always
    u, eta, b = vehicle
    if eta <= config.pickup_patience:
        for v in range(V):
            if v == u or b < config.battery_cost[u, v]:
                continue
            avail = state.trips[u, v, :] > 0
            if avail.any():
                base = fulfill_index(config, TripStatus(u, v, 0))
                mask[base : base + Lc1] = avail
    if eta == 0:
        for v in range(V):
            if v != u and b >= config.battery_cost[u, v]:
                mask[nf + v] = True
        for r in range(R):
            if state.chargers[u, r, 0] > 0:
                mask[nf + V + r] = True
    return mask


def feasible_atomic_actions(
    config: NetworkConfig, state: SystemState, vehicle: VehicleStatus
) -> set[AtomicAction]:
    mask = feasible_mask(config, state, vehicle)
    return {index_to_action(config, i) for i in np.nonzero(mask)[0]}


def check_fleet_action(config: NetworkConfig, state: SystemState, action: FleetAction) -> None:
    """Verify a fleet flow against the per-status feasibility and resource caps."""
    Lp = config.pickup_patience
    outgoing: dict[VehicleStatus, int] = {}

    def out(c: VehicleStatus, n: int):
        outgoing[c] = outgoing.get(c, 0) + n

    trip_usage: dict[TripStatus, int] = {}
    charger_usage: dict[tuple[int, int], int] = {}
    for (c, o), n in action.fulfill.items():
        if n < 0:
            raise ContractViolation("negative fulfill count")
        if c.dest != o.origin or c.eta > Lp or c.battery < config.battery_cost[o.origin, o.dest]:
            raise ContractViolation(f"infeasible fulfill {c} -> {o}")
        if o.origin == o.dest:
            raise ContractViolation("intra-region trips are excluded")
        trip_usage[o] = trip_usage.get(o, 0) + n
        out(c, n)
    for (c, v), n in action.reposition.items():
        if n < 0:
            raise ContractViolation("negative reposition count")
        if c.eta != 0 or v == c.dest or c.battery < config.battery_cost[c.dest, v]:
            raise ContractViolation(f"infeasible reposition {c} -> {v}")
        out(c, n)
    for (c, rate), n in action.charge.items():
        if n < 0:
            raise ContractViolation("negative charge count")
        if c.eta != 0:
            raise ContractViolation(f"infeasible charge for busy vehicle {c}")
        r = config.rate_index(rate)
        charger_usage[(c.dest, r)] = charger_usage.get((c.dest, r), 0) + n
        out(c, n)
    for c, n in action.pass_count.items():
        if n < 0:
            raise ContractViolation("negative pass count")
        out(c, n)

    for o, n in trip_usage.items():
        if n > state.trips[o.origin, o.dest, o.age]:
            raise ContractViolation(f"fulfillment of {o} exceeds queue")
    for (v, r), n in charger_usage.items():
        if n > state.chargers[v, r, 0]:
            raise ContractViolation(f"charging at region {v} rate idx {r} exceeds free chargers")
    # flow conservation: every vehicle of every status is assigned exactly once
    vs, es, bs = np.nonzero(state.vehicles)
    counted = 0
    for v, e, b in zip(vs, es, bs):
        c = VehicleStatus(int(v), int(e), int(b))
        if outgoing.get(c, 0) != int(state.vehicles[v, e, b]):
            raise ContractViolation(f"flow conservation violated at {c}")
        counted += 1
    if len(outgoing) != counted:
        raise ContractViolation("action assigns vehicles of a status absent from the state")


# -- rewards ------------------------------------------------------------------


def atomic_reward(
    config: NetworkConfig, vehicle: VehicleStatus, action: AtomicAction, t: int
) -> float:
    """Reward of one atomic assignment at time-of-day t (0-based)."""
    if action.kind == "pass":
        return 0.0
    if action.kind == "fulfill":
        o = action.trip
        if o.origin != vehicle.dest:
            raise InvalidArgument(f"vehicle at {vehicle.dest} cannot serve trip from {o.origin}")
        return float(config.trip_reward[o.origin, o.dest, t])
    if action.kind == "reposition":
        return float(config.reposition_reward[vehicle.dest, action.region, t])
    if action.kind == "charge":
        return float(config.charge_reward[config.rate_index(action.rate), t])
    raise InvalidArgument(f"unknown atomic action kind {action.kind!r}")


def epoch_reward(config: NetworkConfig, action: FleetAction, t: int) -> float:
    """Total reward of a fleet action; passes and idles contribute nothing.

    Computed with an exactly-rounded sum over unit contributions, so it equals
    the sum of the matching atomic rewards bit-for-bit in any order.
    """
    terms: list[float] = []
    for (c, o), n in action.fulfill.items():
        terms.extend([float(config.trip_reward[o.origin, o.dest, t])] * n)
    for (c, v), n in action.reposition.items():
        terms.extend([float(config.reposition_reward[c.dest, v, t])] * n)
    for (c, rate), n in action.charge.items():
        terms.extend([float(config.charge_reward[config.rate_index(rate), t])] * n)
    return math.fsum(terms)

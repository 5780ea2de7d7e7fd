"""Benchmark dispatch policies and an exact small-instance solver.

The power-of-k heuristic is trip-centric: each queued order, oldest first,
looks at the k nearest (smallest remaining time) vehicles in its origin
region and takes the highest-battery one that can afford the trip. Idle
leftovers plug into free chargers, and vehicles stranded in charger-less
regions head for the nearest region that has chargers.

exact_value_iteration enumerates the full (truncated-arrival) state space of
a tiny instance and runs relative value iteration on the one-day Bellman
operator, giving the optimal average daily reward used as a ground-truth
comparison point for the fluid bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig
from .errors import StateSpaceTooLarge
from .model import (
    PASS,
    AtomicAction,
    FleetAction,
    SystemState,
    TripStatus,
    VehicleStatus,
    action_to_index,
    charge,
    fulfill,
    reposition,
)
from .sim import initial_state, transition


class AlwaysPassPolicy:
    def act(self, config, work, vehicle, mask, rng):
        return action_to_index(config, PASS), 1.0


class RandomFeasiblePolicy:
    """Uniform over the feasible atomic actions at every step."""

    def act(self, config, work, vehicle, mask, rng):
        choices = np.nonzero(mask)[0]
        idx = int(choices[rng.integers(choices.size)])
        return idx, 1.0 / choices.size


class _IntentPolicy:
    """Shared plumbing: begin_epoch fills per-status intent queues; act pops
    one intent for the acting vehicle's exact status and falls back to Pass."""

    def __init__(self):
        self.intents: dict[VehicleStatus, list[AtomicAction]] = {}

    def _push(self, status: VehicleStatus, action: AtomicAction) -> None:
        self.intents.setdefault(status, []).append(action)

    def act(self, config, work, vehicle, mask, rng):
        queue = self.intents.get(vehicle)
        idx = action_to_index(config, PASS)
        while queue:
            cand = action_to_index(config, queue.pop(0))
            if mask[cand]:
                idx = cand
                break
        return idx, 1.0


class PowerOfKPolicy(_IntentPolicy):
    def __init__(self, config: NetworkConfig, k: int = 2):
        super().__init__()
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.charger_regions = [
            v for v in range(config.num_regions) if config.charger_counts[v].sum() > 0
        ]

    def begin_epoch(self, config, state, rng):
        self.intents = {}
        t = state.t
        pool: dict[VehicleStatus, int] = {}
        vs, es, bs = np.nonzero(state.vehicles)
        for v, e, b in zip(vs, es, bs):
            pool[VehicleStatus(int(v), int(e), int(b))] = int(state.vehicles[v, e, b])

        # serve queued orders, oldest first
        orders = []
        us, vvs, ages = np.nonzero(state.trips)
        for u, v, xi in zip(us, vvs, ages):
            orders.extend([TripStatus(int(u), int(v), int(xi))] * int(state.trips[u, v, xi]))
        orders.sort(key=lambda o: (-o.age, o.origin, o.dest))
        for o in orders:
            nearby = sorted(
                (c for c, n in pool.items()
                 if n > 0 and c.dest == o.origin and c.eta <= config.pickup_patience),
                key=lambda c: (c.eta, -c.battery, c.dest))
            window = nearby[: self.k]
            window.sort(key=lambda c: (-c.battery, c.eta))
            need = int(config.battery_cost[o.origin, o.dest])
            for c in window:
                if c.battery >= need:
                    self._push(c, fulfill(o))
                    pool[c] -= 1
                    break

        # idle leftovers: charge if possible, else chase the nearest chargers
        free = state.chargers[:, :, 0].copy()
        for c in sorted(pool, key=lambda c: (c.eta, -c.battery, c.dest)):
            if c.eta != 0:
                continue
            for _ in range(pool[c]):
                region_rates = [
                    ri for ri in np.argsort(config.charge_rates)[::-1]
                    if free[c.dest, ri] > 0
                ]
                if region_rates and c.battery < config.battery_capacity:
                    ri = int(region_rates[0])
                    self._push(c, charge(config.charge_rates[ri]))
                    free[c.dest, ri] -= 1
                elif not config.charger_counts[c.dest].sum() and self.charger_regions:
                    dest = min(
                        self.charger_regions,
                        key=lambda v: (int(config.trip_duration[c.dest, v, t]), v))
                    if dest != c.dest and c.battery >= config.battery_cost[c.dest, dest]:
                        self._push(c, reposition(dest))


# -- exact solution of tiny instances --------------------------------------------


def _arrival_distributions(config: NetworkConfig, t: int, cap: int):
    """Independent per-pair renormalized-Poisson arrival counts for epoch t."""
    pairs = []
    for u in range(config.num_regions):
        for v in range(config.num_regions):
            lam = float(config.arrival_rate[u, v, t])
            if lam <= 0.0:
                continue
            pmf = np.array([lam ** k / math.factorial(k) * math.exp(-lam)
                            for k in range(cap + 1)])
            pmf /= pmf.sum()
            pairs.append((u, v, pmf))
    return pairs


def _joint_outcomes(config: NetworkConfig, t: int, cap: int):
    """All arrival matrices for epoch t with their probabilities."""
    pairs = _arrival_distributions(config, t, cap)
    V = config.num_regions
    outcomes = []
    for counts in itertools.product(*[range(len(p[2])) for p in pairs]):
        arr = np.zeros((V, V), dtype=np.int64)
        prob = 1.0
        for (u, v, pmf), k in zip(pairs, counts):
            arr[u, v] = k
            prob *= pmf[k]
        outcomes.append((arr, prob))
    return outcomes if outcomes else [(np.zeros((V, V), dtype=np.int64), 1.0)]


def _enumerate_fleet_actions(config: NetworkConfig, state: SystemState):
    """All feasible joint assignments, deduplicated over identical vehicles."""
    statuses = []
    vs, es, bs = np.nonzero(state.vehicles)
    for v, e, b in zip(vs, es, bs):
        statuses.append((VehicleStatus(int(v), int(e), int(b)), int(state.vehicles[v, e, b])))

    results: list[FleetAction] = []

    def recurse(i: int, trips: np.ndarray, chargers_free: np.ndarray, acc):
        if i == len(statuses):
            fa = FleetAction.empty()
            for status, action, n in acc:
                for _ in range(n):
                    fa.add_atomic(status, action)
            results.append(fa)
            return
        status, count = statuses[i]
        # feasible atomic actions for this status under current availability
        feas = [PASS]
        u, eta, b = status
        if eta <= config.pickup_patience:
            for v in range(config.num_regions):
                if v != u and b >= config.battery_cost[u, v] and trips[u, v].sum() > 0:
                    for xi in np.nonzero(trips[u, v])[0]:
                        feas.append(fulfill(TripStatus(u, v, int(xi))))
        if eta == 0:
            for v in range(config.num_regions):
                if v != u and b >= config.battery_cost[u, v]:
                    feas.append(reposition(v))
            for ri, rate in enumerate(config.charge_rates):
                if chargers_free[u, ri] > 0:
                    feas.append(charge(rate))
        for combo in itertools.combinations_with_replacement(feas, count):
            t2 = trips.copy()
            c2 = chargers_free.copy()
            ok = True
            for a in combo:
                if a.kind == "fulfill":
                    o = a.trip
                    if t2[o.origin, o.dest, o.age] == 0:
                        ok = False
                        break
                    t2[o.origin, o.dest, o.age] -= 1
                elif a.kind == "charge":
                    ri = config.rate_index(a.rate)
                    if c2[u, ri] == 0:
                        ok = False
                        break
                    c2[u, ri] -= 1
            if not ok:
                continue
            tally: dict[AtomicAction, int] = {}
            for a in combo:
                tally[a] = tally.get(a, 0) + 1
            recurse(i + 1, t2, c2, acc + [(status, a, n) for a, n in tally.items()])

    recurse(0, state.trips.copy(), state.chargers[:, :, 0].copy(), [])
    return results


@dataclass
class ExactSolution:
    gain: float                     # optimal average daily reward
    span: float                     # final span of the day-operator differences
    states: int
    policy: dict                    # (t, state key) -> FleetAction
    iterations: int


def exact_value_iteration(config: NetworkConfig, arrival_cap: int = 2,
                          tol: float = 1e-8, max_states: int = 2_000_000,
                          max_iters: int = 100_000) -> ExactSolution:
    """Optimal gain of the truncated-arrival instance by relative value
    iteration on the one-day backward-induction operator."""
    T = config.horizon_steps
    outcomes = [_joint_outcomes(config, (t + 1) % T, arrival_cap) for t in range(T)]

    # breadth-first discovery of the reachable layered state space
    layers: list[dict] = [dict() for _ in range(T)]      # key -> layer index
    start = initial_state(config)
    frontier = [start]
    layers[0][start.key()] = 0
    total = 1
    # per layer, flat action lists in CSR form over states and branches
    state_actions: list[dict] = [dict() for _ in range(T)]  # idx -> [(r, [(p, idx')], fa)]
    zero_arr = np.zeros((config.num_regions, config.num_regions), dtype=np.int64)
    while frontier:
        state = frontier.pop()
        t = state.t
        acts = _enumerate_fleet_actions(config, state)
        entry = []
        for fa in acts:
            # arrivals only fill the age-0 queue: apply the action once under
            # zero arrivals, then graft each arrival outcome onto the result
            base, info = transition(config, state, fa, zero_arr, validate=False)
            headroom = np.maximum(config.trip_cap - base.trips.sum(axis=2), 0)
            branches = []
            for arr, p in outcomes[t]:
                accepted = np.minimum(arr, headroom)
                trips = base.trips.copy()
                trips[:, :, 0] = accepted
                nxt = SystemState(base.t, base.vehicles, trips, base.chargers)
                k = nxt.key()
                lay = layers[nxt.t]
                if k not in lay:
                    lay[k] = len(lay)
                    frontier.append(nxt)
                    total += 1
                    if total > max_states:
                        raise StateSpaceTooLarge(
                            f"more than {max_states} reachable states")
                branches.append((p, lay[k]))
            entry.append((info.reward, branches, fa))
        state_actions[t][layers[t][state.key()]] = entry

    # freeze each layer into flat arrays so a sweep is pure vector work
    compiled = []
    for t in range(T):
        n_states = len(layers[t])
        rewards, probs, nexts = [], [], []
        state_ptr = np.zeros(n_states + 1, dtype=np.int64)
        branch_ptr = [0]
        fas = []
        for i in range(n_states):
            entry = state_actions[t][i]
            state_ptr[i + 1] = state_ptr[i] + len(entry)
            for reward, branches, fa in entry:
                rewards.append(reward)
                fas.append(fa)
                for p, j in branches:
                    probs.append(p)
                    nexts.append(j)
                branch_ptr.append(len(probs))
        compiled.append((
            np.array(rewards), np.array(probs), np.array(nexts, dtype=np.int64),
            np.array(branch_ptr, dtype=np.int64), state_ptr, fas,
        ))

    def day_pass(v_next: np.ndarray, want_argmax: bool = False):
        choices = []
        for t in reversed(range(T)):
            rewards, probs, nexts, branch_ptr, state_ptr, _ = compiled[t]
            q = rewards + np.add.reduceat(probs * v_next[nexts], branch_ptr[:-1])
            # maximum per state over its contiguous action block
            v_cur = np.maximum.reduceat(q, state_ptr[:-1])
            if want_argmax:
                arg = np.empty(len(state_ptr) - 1, dtype=np.int64)
                for i in range(len(arg)):
                    blk = q[state_ptr[i]:state_ptr[i + 1]]
                    arg[i] = state_ptr[i] + int(np.argmax(blk))
                choices.append(arg)
            v_next = v_cur
        choices.reverse()
        return (v_next, choices) if want_argmax else v_next

    h = np.zeros(len(layers[0]))
    gain = 0.0
    span = math.inf
    it = 0
    while span > tol and it < max_iters:
        it += 1
        v = day_pass(h)
        diffs = v - h
        span = float(diffs.max() - diffs.min())
        gain = float(diffs.max() + diffs.min()) / 2.0
        h = v - v[0]
    _, choices = day_pass(h, want_argmax=True)
    policy: dict = {}
    for t in range(T):
        fas = compiled[t][5]
        for key, i in layers[t].items():
            policy[(t, key)] = fas[choices[t][i]]
    return ExactSolution(gain, span, total, policy, it)

"""Fleet-allocation linear programs and the reward upper bound.

Two equivalent formulations of the stationary (periodic, one-day) flow
relaxation of the dispatch MDP:

* the full LP tracks a flow variable for every (vehicle status, action, time);
* the reduced LP tracks only statuses with remaining time eta <= L_p -- the
  ones that can accept new tasks -- and accounts for in-flight vehicles
  through time-window sums, cutting variable count from O(V^2) to O(V) in the
  duration scale.

The optimum R-bar (scaled by fleet size N) upper-bounds the long-run average
daily reward of every admissible policy. The reduced form needs the
assignment-to-trackable delay to be well defined: for every (u,v,eta',t)
there must be exactly one assignment time phi with
phi + eta' + tau_uv(phi) - L_p = t (always true for time-constant durations).

The occupancy (fleet-total) constraint uses half-open in-flight windows
(strict inequality in the psi membership test, and charge window
t-J+L_p+1..t): a vehicle whose remaining time has just reached L_p is counted
through its new assignment or pass flow, not through the old in-flight flow.
The full LP, where occupancy is implied by per-status conservation, is the
cross-check for this choice.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig
from .errors import ContractViolation, InvalidArgument, ReductionUnavailable
from .simplex import LpProblem, LpSolution, solve


def _charge_gains(config: NetworkConfig) -> list[int]:
    """Battery gained per charge period in the LP's linear model.

    Linear mode: rate * period. With a charging curve configured the LP is
    linearized at the curve's 10-40% band average pace; the resulting bound
    is indicative only and flagged on the solution.
    """
    if config.charging_curve is None:
        return [r * config.charge_period for r in config.charge_rates]
    # band-average pace: 10-40% of the curve, same for every rate column
    total_s = 0.0
    prev = 0
    for hi, sec in config.charging_curve:
        lo = prev
        prev = hi
        overlap = max(0, min(hi, 40) - max(lo, 10))
        total_s += overlap * sec
    pace = total_s / 30.0                                 # seconds per percent
    period_s = config.charge_period * config.epoch_minutes * 60.0
    gain = int(period_s / pace * config.battery_capacity / 100.0)
    return [max(min(gain, config.battery_capacity), 1) for _ in config.charge_rates]


@dataclass
class FluidSolution:
    objective: float
    flows: dict[tuple, float]
    formulation: str                      # "full" | "reduced"
    iterations: int
    residual: float
    indicative_only: bool = False

    def nonzero_flows(self, tol: float = 1e-9) -> dict[tuple, float]:
        return {k: v for k, v in self.flows.items() if v > tol}

    def to_json(self) -> str:
        payload = {
            "objective": self.objective,
            "formulation": self.formulation,
            "iterations": self.iterations,
            "residual": self.residual,
            "indicative_only": self.indicative_only,
            "flows": {"/".join(map(str, k)): v for k, v in self.nonzero_flows().items()},
        }
        return json.dumps(payload, sort_keys=True, indent=1)


class _Builder:
    """Accumulates named variables and sparse rows, then emits an LpProblem."""

    def __init__(self, name: str):
        self.name = name
        self.vars: dict[tuple, int] = {}
        self.obj: list[float] = []
        self.rows: list[dict[int, float]] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.row_names: list[str] = []

    def var(self, key: tuple, coeff: float = 0.0) -> int:
        if key in self.vars:
            raise InvalidArgument(f"duplicate variable {key}")
        self.vars[key] = len(self.obj)
        self.obj.append(coeff)
        return self.vars[key]

    def row(self, terms: dict[tuple, float], sense: str, rhs: float, name: str) -> None:
        entries = {}
        for key, coef in terms.items():
            if key not in self.vars:
                continue                    # battery-infeasible flows are fixed at 0
            j = self.vars[key]
            entries[j] = entries.get(j, 0.0) + coef
        self.rows.append(entries)
        self.senses.append(sense)
        self.rhs.append(rhs)
        self.row_names.append(name)

    def build(self, maximize: bool = True) -> LpProblem:
        n = len(self.obj)
        A = np.zeros((len(self.rows), n))
        for i, entries in enumerate(self.rows):
            for j, coef in entries.items():
                A[i, j] = coef
        names = ["/".join(map(str, k)) for k in self.vars]
        return LpProblem(np.asarray(self.obj), A, self.senses, np.asarray(self.rhs),
                         maximize=maximize, var_names=names,
                         row_names=self.row_names, name=self.name)


# -- full formulation -----------------------------------------------------------


def build_full_lp(config: NetworkConfig) -> tuple[LpProblem, dict[tuple, int]]:
    """Flow variables per (status, action, time); periodic in t."""
    V, B, T = config.num_regions, config.battery_capacity, config.horizon_steps
    Lp, Lc, J = config.pickup_patience, config.connection_patience, config.charge_period
    rates = config.charge_rates
    gains = _charge_gains(config)
    ecap = config.eta_cap
    N = config.fleet_size
    bld = _Builder("full")

    # variables; battery-infeasible combinations are never created
    for t in range(T):
        for u in range(V):
            for eta in range(ecap + 1):
                for b in range(B + 1):
                    if eta <= Lp:
                        for v in range(V):
                            if v == u or b < config.battery_cost[u, v]:
                                continue
                            for xi in range(Lc + 1):
                                bld.var(("x", u, eta, b, v, xi, t),
                                        N * float(config.trip_reward[u, v, t]))
                    if eta == 0:
                        for v in range(V):
                            if v == u or b < config.battery_cost[u, v]:
                                continue
                            bld.var(("y", u, b, v, t),
                                    N * float(config.reposition_reward[u, v, t]))
                        for ri in range(len(rates)):
                            bld.var(("z", u, b, ri, t),
                                    N * float(config.charge_reward[ri, t]))
                    bld.var(("w", u, eta, b, t), 0.0)

    # conservation: inflow at t-1 == outflow at t, per status and time
    for t in range(T):
        tp = (t - 1) % T
        for v in range(V):
            for eta in range(ecap + 1):
                for b in range(B + 1):
                    terms: dict[tuple, float] = {}
                    # (i) fulfillments arriving into (v, eta, b)
                    for u in range(V):
                        if u == v:
                            continue
                        tau = int(config.trip_duration[u, v, tp])
                        cost = int(config.battery_cost[u, v])
                        ep = eta - tau + 1
                        if 0 <= ep <= Lp and b + cost <= B:
                            for xi in range(Lc + 1):
                                terms[("x", u, ep, b + cost, v, xi, tp)] = 1.0
                            # (ii) repositions
                            if ep == 0:
                                terms[("y", u, b + cost, v, tp)] = 1.0
                    # (iii) charging completions
                    if eta == J - 1:
                        for ri, gain in enumerate(gains):
                            if b - gain >= 0:
                                terms[("z", v, b - gain, ri, tp)] = \
                                    terms.get(("z", v, b - gain, ri, tp), 0.0) + 1.0
                            if b == B:
                                for bp in range(max(B - gain + 1, 0), B + 1):
                                    terms[("z", v, bp, ri, tp)] = \
                                        terms.get(("z", v, bp, ri, tp), 0.0) + 1.0
                    # (iv)+(v) passing
                    if eta == 0:
                        terms[("w", v, 0, b, tp)] = terms.get(("w", v, 0, b, tp), 0.0) + 1.0
                    if eta + 1 <= ecap:
                        terms[("w", v, eta + 1, b, tp)] = \
                            terms.get(("w", v, eta + 1, b, tp), 0.0) + 1.0
                    # outflow (negated)
                    if eta <= Lp:
                        for vv in range(V):
                            if vv == v:
                                continue
                            for xi in range(Lc + 1):
                                terms[("x", v, eta, b, vv, xi, t)] = \
                                    terms.get(("x", v, eta, b, vv, xi, t), 0.0) - 1.0
                    if eta == 0:
                        for vv in range(V):
                            if vv != v:
                                terms[("y", v, b, vv, t)] = \
                                    terms.get(("y", v, b, vv, t), 0.0) - 1.0
                        for ri in range(len(rates)):
                            terms[("z", v, b, ri, t)] = \
                                terms.get(("z", v, b, ri, t), 0.0) - 1.0
                    terms[("w", v, eta, b, t)] = terms.get(("w", v, eta, b, t), 0.0) - 1.0
                    bld.row(terms, "=", 0.0, f"cons/{v}/{eta}/{b}/{t}")

    # trip-order cap: service of the cohort arriving at t, across ages
    for t in range(T):
        for u in range(V):
            for v in range(V):
                if u == v:
                    continue
                terms = {}
                for xi in range(Lc + 1):
                    ts = (t + xi) % T
                    for eta in range(Lp + 1):
                        for b in range(B + 1):
                            terms[("x", u, eta, b, v, xi, ts)] = 1.0
                bld.row(terms, "<=", float(config.arrival_rate[u, v, t]) / N,
                        f"trip/{u}/{v}/{t}")

    # charger cap over the active window
    for t in range(T):
        for v in range(V):
            for ri in range(len(rates)):
                terms = {}
                for j in range(J):
                    ts = (t - j) % T
                    for b in range(B + 1):
                        terms[("z", v, b, ri, ts)] = terms.get(("z", v, b, ri, ts), 0.0) + 1.0
                bld.row(terms, "<=", float(config.charger_counts[v, ri]) / N,
                        f"chg/{v}/{ri}/{t}")

    # fleet totals to one at every time
    for t in range(T):
        terms = {key: 1.0 for key in bld.vars if key[-1] == t}
        bld.row(terms, "=", 1.0, f"tot/{t}")

    return bld.build(), bld.vars


# -- reduced formulation ---------------------------------------------------------


def _phi(config: NetworkConfig, u: int, v: int, eta_p: int, t: int) -> int:
    """Unique assignment time phi with phi + eta' + tau(phi) - L_p = t."""
    T, Lp = config.horizon_steps, config.pickup_patience
    sols = [tp for tp in range(T)
            if (tp + eta_p + int(config.trip_duration[u, v, tp]) - Lp) % T == t]
    if len(sols) != 1:
        raise ReductionUnavailable(
            f"assignment-time map not unique for ({u},{v},eta'={eta_p},t={t}): "
            f"{len(sols)} solutions; use the full formulation")
    return sols[0]


def _window_counts(T: int, t: int, width: int) -> list[tuple[int, int]]:
    """(start time, multiplicity) pairs for a width-step window covering t.

    Flows repeat daily, so when a window spans more than one full day the
    same daily flow occupies several concurrent copies at time t; the
    multiplicity is the number of lags back >= 0 with back = (t - t') mod T
    and back < width."""
    out = []
    for tp in range(T):
        r = (t - tp) % T
        if width > r:
            out.append((tp, (width - r - 1) // T + 1))
    return out


def _psi(config: NetworkConfig, u: int, v: int, eta_p: int,
         t: int) -> list[tuple[int, int]]:
    """Assignment times (with multiplicity) still in flight (eta > L_p) at t."""
    T, Lp = config.horizon_steps, config.pickup_patience
    out = []
    for tp in range(T):
        width = eta_p + int(config.trip_duration[u, v, tp]) - Lp
        r = (t - tp) % T
        if width > r:
            out.append((tp, (width - r - 1) // T + 1))
    return out


def build_reduced_lp(config: NetworkConfig) -> tuple[LpProblem, dict[tuple, int]]:
    """Tracked-window formulation over statuses with eta <= L_p."""
    V, B, T = config.num_regions, config.battery_capacity, config.horizon_steps
    Lp, Lc, J = config.pickup_patience, config.connection_patience, config.charge_period
    rates = config.charge_rates
    gains = _charge_gains(config)
    N = config.fleet_size
    bld = _Builder("reduced")

    def cost(u, v):
        return int(config.battery_cost[u, v])

    phi_cache: dict[tuple, int] = {}

    def phi(u, v, ep, t):
        k = (u, v, ep, t)
        if k not in phi_cache:
            phi_cache[k] = _phi(config, u, v, ep, t)
        return phi_cache[k]

    for t in range(T):
        for u in range(V):
            for v in range(V):
                if v != u:
                    for b in range(cost(u, v), B + 1):
                        for eta in range(Lp + 1):
                            bld.var(("xb", u, v, b, eta, t), 0.0)
                    for eta in range(Lp + 1):
                        for xi in range(Lc + 1):
                            bld.var(("xt", u, v, eta, xi, t),
                                    N * float(config.trip_reward[u, v, t]))
                    for b in range(cost(u, v), B + 1):
                        bld.var(("yb", u, v, b, t),
                                N * float(config.reposition_reward[u, v, t]))
                else:
                    for b in range(B + 1):
                        bld.var(("yb", u, u, b, t), 0.0)      # idling
            for ri in range(len(rates)):
                for b in range(B + 1):
                    bld.var(("zb", u, ri, b, t), N * float(config.charge_reward[ri, t]))
            for eta in range(1, Lp + 1):
                for b in range(B + 1):
                    bld.var(("wb", u, b, eta, t), 0.0)

    # conservation for every tracked status (u, eta <= L_p, b) and time
    for t in range(T):
        tp = (t - 1) % T
        for u in range(V):
            for eta in range(Lp + 1):
                for b in range(B + 1):
                    terms: dict[tuple, float] = {}
                    if eta == Lp:
                        for v in range(V):
                            if v == u or b + cost(v, u) > B:
                                continue
                            for ep in range(Lp + 1):
                                terms[("xb", v, u, b + cost(v, u), ep,
                                       phi(v, u, ep, t))] = 1.0
                            terms[("yb", v, u, b + cost(v, u),
                                   phi(v, u, 0, t))] = 1.0
                        tc = (t + Lp - J) % T
                        for ri, gain in enumerate(gains):
                            if b - gain >= 0:
                                terms[("zb", u, ri, b - gain, tc)] = \
                                    terms.get(("zb", u, ri, b - gain, tc), 0.0) + 1.0
                            if b == B:
                                for bp in range(max(B - gain + 1, 0), B + 1):
                                    terms[("zb", u, ri, bp, tc)] = \
                                        terms.get(("zb", u, ri, bp, tc), 0.0) + 1.0
                    if eta == 0:
                        terms[("yb", u, u, b, tp)] = terms.get(("yb", u, u, b, tp), 0.0) + 1.0
                    if eta < Lp:
                        terms[("wb", u, b, eta + 1, tp)] = \
                            terms.get(("wb", u, b, eta + 1, tp), 0.0) + 1.0
                    for v in range(V):
                        if v == u:
                            continue
                        terms[("xb", u, v, b, eta, t)] = \
                            terms.get(("xb", u, v, b, eta, t), 0.0) - 1.0
                    if eta == 0:
                        for v in range(V):
                            terms[("yb", u, v, b, t)] = \
                                terms.get(("yb", u, v, b, t), 0.0) - 1.0
                        for ri in range(len(rates)):
                            terms[("zb", u, ri, b, t)] = \
                                terms.get(("zb", u, ri, b, t), 0.0) - 1.0
                    else:
                        terms[("wb", u, b, eta, t)] = \
                            terms.get(("wb", u, b, eta, t), 0.0) - 1.0
                    bld.row(terms, "=", 0.0, f"cons/{u}/{eta}/{b}/{t}")

    # linking: battery-aggregated and age-aggregated fulfill flows agree
    for t in range(T):
        for u in range(V):
            for v in range(V):
                if u == v:
                    continue
                for eta in range(Lp + 1):
                    terms = {("xb", u, v, b, eta, t): 1.0 for b in range(B + 1)}
                    for xi in range(Lc + 1):
                        terms[("xt", u, v, eta, xi, t)] = -1.0
                    bld.row(terms, "=", 0.0, f"link/{u}/{v}/{eta}/{t}")

    # trip-order cap per arrival cohort
    for t in range(T):
        for u in range(V):
            for v in range(V):
                if u == v:
                    continue
                terms = {}
                for xi in range(Lc + 1):
                    ts = (t + xi) % T
                    for eta in range(Lp + 1):
                        terms[("xt", u, v, eta, xi, ts)] = 1.0
                bld.row(terms, "<=", float(config.arrival_rate[u, v, t]) / N,
                        f"trip/{u}/{v}/{t}")

    # charger cap over the active window
    for t in range(T):
        for v in range(V):
            for ri in range(len(rates)):
                terms = {}
                for ts, mult in _window_counts(T, t, J):
                    for b in range(B + 1):
                        terms[("zb", v, ri, b, ts)] = \
                            terms.get(("zb", v, ri, b, ts), 0.0) + mult
                bld.row(terms, "<=", float(config.charger_counts[v, ri]) / N,
                        f"chg/{v}/{ri}/{t}")

    # occupancy: every vehicle counted exactly once per time step
    for t in range(T):
        terms: dict[tuple, float] = {}
        for u in range(V):
            for v in range(V):
                if v == u:
                    for b in range(B + 1):
                        terms[("yb", u, u, b, t)] = terms.get(("yb", u, u, b, t), 0.0) + 1.0
                    continue
                for eta in range(Lp + 1):
                    for ts, mult in _psi(config, u, v, eta, t):
                        for b in range(B + 1):
                            key = ("xb", u, v, b, eta, ts)
                            terms[key] = terms.get(key, 0.0) + mult
                for ts, mult in _psi(config, u, v, 0, t):
                    for b in range(B + 1):
                        key = ("yb", u, v, b, ts)
                        terms[key] = terms.get(key, 0.0) + mult
            for ri in range(len(rates)):
                for ts, mult in _window_counts(T, t, J - Lp):
                    for b in range(B + 1):
                        key = ("zb", u, ri, b, ts)
                        terms[key] = terms.get(key, 0.0) + mult
            for eta in range(1, Lp + 1):
                for b in range(B + 1):
                    terms[("wb", u, b, eta, t)] = terms.get(("wb", u, b, eta, t), 0.0) + 1.0
        bld.row(terms, "=", 1.0, f"tot/{t}")

    return bld.build(), bld.vars


# -- solving and the bound -------------------------------------------------------


def solve_fluid(problem: LpProblem, index: dict[tuple, int],
                formulation: str, indicative: bool = False) -> FluidSolution:
    sol: LpSolution = solve(problem)
    x = np.where(np.abs(sol.x) < 1e-12, 0.0, sol.x)
    flows = {key: float(x[j]) for key, j in index.items()}
    residual = float(problem.residuals(sol.x).max(initial=0.0))
    if residual > 1e-8 * max(1.0, float(np.abs(problem.b).max(initial=0.0))):
        raise ContractViolation(f"fluid solution residual {residual:.3e}")
    return FluidSolution(sol.objective, flows, formulation, sol.iterations,
                         residual, indicative_only=indicative)


def upper_bound(config: NetworkConfig, formulation: str = "auto") -> FluidSolution:
    """Daily-reward upper bound R-bar; reduced form when available."""
    indicative = config.charging_curve is not None
    if formulation in ("auto", "reduced"):
        try:
            prob, index = build_reduced_lp(config)
            return solve_fluid(prob, index, "reduced", indicative)
        except ReductionUnavailable:
            if formulation == "reduced":
                raise
    prob, index = build_full_lp(config)
    return solve_fluid(prob, index, "full", indicative)


# -- randomized-rounding policy ---------------------------------------------------


@dataclass
class _Intent:
    kind: str
    dest: int = -1
    rate: int = -1


class FluidRoundingPolicy:
    """Rounds the fluid flows to integer per-epoch assignment targets.

    At each epoch the target count for every (status, action) flow is
    N*fraction, rounded by floor plus a Bernoulli trial on the remainder.
    Vehicles then claim intents matching their exact status; infeasible
    intents degrade along fulfill -> reposition -> pass (oldest queued trips
    are served first).
    """

    def __init__(self, config: NetworkConfig, solution: FluidSolution):
        self.config = config
        self.solution = solution
        self._by_time: dict[int, list[tuple[tuple, float]]] = {}
        for key, frac in solution.nonzero_flows().items():
            kind = key[0]
            if kind in ("x", "xb", "y", "yb", "z", "zb"):
                t = key[-1]
                self._by_time.setdefault(t, []).append((key, frac))
        for lst in self._by_time.values():
            lst.sort(key=lambda kv: kv[0])
        self.intents: dict[tuple, list[_Intent]] = {}

    def _status_key(self, key: tuple) -> tuple | None:
        """(region, eta, battery) the flow applies to; None if aggregated."""
        kind = key[0]
        if kind == "x":
            _, u, eta, b, v, xi, t = key
            return (u, eta, b)
        if kind == "xb":
            _, u, v, b, eta, t = key
            return (u, eta, b)
        if kind in ("y",):
            _, u, b, v, t = key
            return (u, 0, b)
        if kind == "yb":
            _, u, v, b, t = key
            return (u, 0, b)
        if kind == "z":
            _, u, b, ri, t = key
            return (u, 0, b)
        if kind == "zb":
            _, u, ri, b, t = key
            return (u, 0, b)
        return None

    def _intent(self, key: tuple) -> _Intent:
        kind = key[0]
        if kind == "x":
            return _Intent("fulfill", dest=key[4])
        if kind == "xb":
            return _Intent("fulfill", dest=key[2])
        if kind == "y":
            return _Intent("reposition", dest=key[3])
        if kind == "yb":
            u, v = key[1], key[2]
            return _Intent("pass") if u == v else _Intent("reposition", dest=v)
        return _Intent("charge", rate=self.config.charge_rates[
            key[3] if kind == "z" else key[2]])

    def begin_epoch(self, config, state, rng):
        self.intents = {}
        N = config.fleet_size
        for key, frac in self._by_time.get(state.t, []):
            target = N * frac
            count = int(target) + (1 if rng.random() < target - int(target) else 0)
            if count <= 0:
                continue
            status = self._status_key(key)
            self.intents.setdefault(status, []).extend([self._intent(key)] * count)

    def act(self, config, work, vehicle, mask, rng):
        from .model import PASS, TripStatus, action_to_index, charge, fulfill, reposition
        queue = self.intents.get((vehicle.dest, vehicle.eta, vehicle.battery))
        idx = action_to_index(config, PASS)
        while queue:
            intent = queue.pop(0)
            if intent.kind == "fulfill":
                u, v = vehicle.dest, intent.dest
                ages = np.nonzero(work.trips[u, v, :] > 0)[0]
                if ages.size:
                    cand = action_to_index(config, fulfill(TripStatus(u, v, int(ages[-1]))))
                    if mask[cand]:
                        idx = cand
                        break
                cand = action_to_index(config, reposition(intent.dest))
                if intent.dest != u and mask[cand]:
                    idx = cand
                    break
            elif intent.kind == "reposition":
                cand = action_to_index(config, reposition(intent.dest))
                if mask[cand]:
                    idx = cand
                    break
            elif intent.kind == "charge":
                cand = action_to_index(config, charge(intent.rate))
                if mask[cand]:
                    idx = cand
                    break
            # infeasible intent: fall through to the next one, else pass
        return idx, 1.0

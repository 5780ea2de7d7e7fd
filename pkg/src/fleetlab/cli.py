"""Command-line drivers.

Subcommands: calibrate, train, evaluate, bound, compare, sweep-chargers,
sweep-hardware.  Every command is deterministic under --seed (overridable
with the FLEETLAB_SEED environment variable): reports contain no timestamps,
JSON keys are sorted, and all randomness flows from the seed, so repeated
runs produce byte-identical output.

Exit codes: 0 ok, 2 input error, 3 missing artifact, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import baselines, fluid, nn, ppo, sim
from .calibrate import (calibrate, estimate_reference_fleet, read_region_map,
                        read_trip_records, scale_demand)
from .config import NetworkConfig
from .errors import (ConfigError, ContractViolation, FleetlabError,
                     InvalidArgument, LpInfeasible, LpUnbounded,
                     ReductionUnavailable, StateSpaceTooLarge,
                     TrainingDiagnostic)
from .scenarios import TEMPLATES, synth_scenario
from .simplex import export_mps

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4


# -- shared helpers -----------------------------------------------------------


def _load_config(args) -> NetworkConfig:
    if getattr(args, "scenario", None):
        return synth_scenario(args.scenario, seed=args.seed)
    path = getattr(args, "config", None)
    if not path:
        raise ConfigError("provide --config FILE or --scenario TEMPLATE")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return NetworkConfig.load(path)


def _effective_seed(args) -> int:
    env = os.environ.get("FLEETLAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"FLEETLAB_SEED={env!r} is not an integer") from exc
    return args.seed


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=1)
        f.write("\n")


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _print_table(header: list[str], rows: list[list]) -> None:
    cells = [header] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    for row in cells:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())


# -- policy construction ------------------------------------------------------


@dataclass
class PolicySpec:
    """Picklable recipe so worker processes can rebuild a fresh policy.

    A fresh instance per trajectory keeps stateful policies (queued rounding
    intents, recorded logs) from leaking across trajectories, which is what
    makes parallel and serial evaluation byte-identical.
    """

    name: str
    k: int = 2
    checkpoint: str | None = None
    fluid_solution: fluid.FluidSolution | None = None

    def build(self, config: NetworkConfig):
        if self.name == "ppo":
            pset = nn.load_set(self.checkpoint)
            return ppo.NeuralPolicy(config, pset)
        if self.name == "power-of-k":
            return baselines.PowerOfKPolicy(config, k=self.k)
        if self.name == "fluid":
            return fluid.FluidRoundingPolicy(config, self.fluid_solution)
        if self.name == "random":
            return baselines.RandomFeasiblePolicy()
        raise InvalidArgument(f"unknown policy {self.name!r}")


def parse_policy(token: str) -> PolicySpec:
    """ppo | power-of-k[:k] | fluid | random"""
    if token.startswith("power-of-"):
        tail = token[len("power-of-"):]
        parts = tail.split(":")
        try:
            k = int(parts[1]) if len(parts) > 1 else int(parts[0])
        except ValueError as exc:
            raise InvalidArgument(f"bad power-of-k policy {token!r}") from exc
        return PolicySpec("power-of-k", k=k)
    if token in ("ppo", "fluid", "random"):
        return PolicySpec(token)
    raise InvalidArgument(
        f"unknown policy {token!r}; expected ppo | power-of-k:k | fluid | random")


def _trajectory_worker(payload) -> dict:
    config, spec, days, seed_words = payload
    policy = spec.build(config)
    rng = np.random.default_rng(list(seed_words))
    traces = sim.run_days(config, policy, days, rng)
    status = []
    for tr in traces:
        for state in tr.states[:-1]:
            eta = state.vehicles.sum(axis=2)          # (V, eta_cap+1)
            idle = int(eta[:, 0].sum())
            charging = int(state.chargers[:, :, 1:].sum())
            busy = config.fleet_size - idle - charging
            status.append((idle, busy, charging))
    return {
        "daily_rewards": [tr.total_reward for tr in traces],
        "fulfilled": sum(i.fulfilled for tr in traces for i in tr.infos),
        "arrived": sum(i.arrived for tr in traces for i in tr.infos),
        "abandoned": sum(i.abandoned for tr in traces for i in tr.infos),
        "repositioned": sum(i.repositioned for tr in traces for i in tr.infos),
        "charges_started": sum(i.charges_started for tr in traces for i in tr.infos),
        "rewards_by_epoch": [i.reward for tr in traces for i in tr.infos],
        "status_by_epoch": status,
    }


def evaluate_spec(config: NetworkConfig, spec: PolicySpec, trajectories: int,
                  days: int, seed: int, jobs: int = 1) -> dict:
    """Independent seeded trajectories; results identical for any job count."""
    payloads = [(config, spec, days, (seed, 5, k, 11)) for k in range(trajectories)]
    if jobs > 1 and trajectories > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, trajectories)) as pool:
            results = list(pool.map(_trajectory_worker, payloads))
    else:
        results = [_trajectory_worker(p) for p in payloads]
    traj_means = [math.fsum(r["daily_rewards"]) / days for r in results]
    mean = math.fsum(traj_means) / trajectories
    if trajectories > 1:
        var = math.fsum((m - mean) ** 2 for m in traj_means) / (trajectories - 1)
        stderr = math.sqrt(var / trajectories)
    else:
        stderr = 0.0
    fulfilled = sum(r["fulfilled"] for r in results)
    arrived = sum(r["arrived"] for r in results)
    return {
        "policy": spec.name if spec.name != "power-of-k" else f"power-of-{spec.k}",
        "trajectories": trajectories,
        "days": days,
        "mean_daily_reward": mean,
        "stderr": stderr,
        "trajectory_means": traj_means,
        "fulfilled": fulfilled,
        "arrived": arrived,
        "abandoned": sum(r["abandoned"] for r in results),
        "repositioned": sum(r["repositioned"] for r in results),
        "charges_started": sum(r["charges_started"] for r in results),
        "fulfillment_rate": fulfilled / arrived if arrived else 0.0,
        "last_trajectory": results[-1],
    }


def _resolve_spec(spec: PolicySpec, config: NetworkConfig, args) -> PolicySpec:
    """Attach artifacts (checkpoint path, fluid solution) a spec needs."""
    if spec.name == "ppo":
        path = getattr(args, "checkpoint", None)
        if not path:
            raise ConfigError("ppo policy needs --checkpoint FILE")
        if not os.path.exists(path):
            raise FileNotFoundError(path)
        return PolicySpec("ppo", checkpoint=path)
    if spec.name == "fluid":
        sol = fluid.upper_bound(config)
        return PolicySpec("fluid", fluid_solution=sol)
    return spec


# -- commands -----------------------------------------------------------------


def cmd_calibrate(args) -> int:
    for path in (args.records, args.regions):
        if not os.path.exists(path):
            raise FileNotFoundError(path)
    records = read_trip_records(args.records)
    region_map = read_region_map(args.regions)
    config = calibrate(records, region_map, epoch_minutes=args.epoch_min,
                       fleet_size=args.fleet, name=args.name)
    if args.scale_fleet:
        ref = estimate_reference_fleet(records)
        config = config.with_updates(fleet_size=args.scale_fleet)
        config = scale_demand(config, args.scale_fleet, ref)
        print(f"reference fleet estimate: {ref}; demand scaled by "
              f"{args.scale_fleet / ref:.6g}")
    config.validate()
    config.save(args.out)
    lam = config.arrival_rate
    print(f"wrote {args.out} (digest {config.digest()})")
    _print_table(
        ["regions", "epochs/day", "fleet", "total daily demand", "mean fare"],
        [[config.num_regions, config.horizon_steps, config.fleet_size,
          float(lam.sum()), float(config.trip_reward[lam > 0].mean()) if
          (lam > 0).any() else 0.0]])
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args)
    config.validate()
    pcfg = ppo.PpoConfig(seed=args.seed)
    if args.iterations is not None:
        pcfg.policy_iterations = args.iterations
    if args.trajectories is not None:
        pcfg.trajectories_per_iter = args.trajectories
    if args.days is not None:
        pcfg.days_per_trajectory = args.days
    if args.hidden is not None:
        pcfg.hidden = args.hidden
    os.makedirs(args.out, exist_ok=True)
    result = ppo.train(config, pcfg, checkpoint_dir=args.out, log=print)
    best = max(result.reports, key=lambda r: r.eval_reward)
    nn.save_set(os.path.join(args.out, "policy.bin"), result.policy)
    nn.save_set(os.path.join(args.out, "value.bin"), result.value)
    _write_json(os.path.join(args.out, "training_report.json"), {
        "config_digest": config.digest(),
        "seed": args.seed,
        "iterations_run": len(result.reports),
        "stopped_early": result.stopped_early,
        "best_iteration": best.iteration,
        "best_eval_reward": best.eval_reward,
        "reports": [r.to_dict() for r in result.reports],
    })
    print(f"trained {len(result.reports)} iterations; best eval reward "
          f"{best.eval_reward:.6g} at iteration {best.iteration}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    config.validate()
    spec = _resolve_spec(parse_policy(args.policy), config, args)
    report = evaluate_spec(config, spec, args.trajectories, args.days,
                           args.seed, jobs=args.jobs)
    last = report.pop("last_trajectory")
    report["config_digest"] = config.digest()
    report["seed"] = args.seed
    if args.out:
        _write_json(args.out, report)
    if args.trace_csv:
        T = config.horizon_steps
        rows = []
        for i, ((idle, busy, charging), r) in enumerate(
                zip(last["status_by_epoch"], last["rewards_by_epoch"])):
            rows.append([i // T, i % T, f"{r:.10g}", idle, busy, charging])
        _write_csv(args.trace_csv,
                   ["day", "epoch", "reward", "idle", "busy", "charging"], rows)
    print(f"{report['policy']}: mean daily reward "
          f"{report['mean_daily_reward']:.6g} +- {report['stderr']:.6g} "
          f"(fulfillment {report['fulfillment_rate']:.3f})")
    return EXIT_OK


def cmd_bound(args) -> int:
    config = _load_config(args)
    config.validate()
    sol = fluid.upper_bound(config, formulation=args.formulation)
    if args.out:
        with open(args.out, "w") as f:
            f.write(sol.to_json())
            f.write("\n")
    if args.mps:
        prob, _ = (fluid.build_reduced_lp(config) if sol.formulation == "reduced"
                   else fluid.build_full_lp(config))
        export_mps(prob, args.mps)
    note = " (indicative: nonlinear charging linearized)" if sol.indicative_only else ""
    print(f"R-bar = {sol.objective:.6g} [{sol.formulation} formulation, "
          f"{sol.iterations} pivots, residual {sol.residual:.2e}]{note}")
    return EXIT_OK


def cmd_compare(args) -> int:
    config = _load_config(args)
    config.validate()
    bound = fluid.upper_bound(config)
    rows = []
    reports = []
    for token in args.policies:
        spec = parse_policy(token)
        if spec.name == "fluid":
            spec = PolicySpec("fluid", fluid_solution=bound)
        else:
            spec = _resolve_spec(spec, config, args)
        rep = evaluate_spec(config, spec, args.trajectories, args.days,
                            args.seed, jobs=args.jobs)
        rep.pop("last_trajectory")
        reports.append(rep)
        ratio = rep["mean_daily_reward"] / bound.objective \
            if abs(bound.objective) > 1e-12 else None
        rows.append([rep["policy"], rep["mean_daily_reward"],
                     "n/a" if ratio is None else f"{ratio:.4f}"])
    _print_table(["policy", "avg_daily_reward", "ratio_to_bound"], rows)
    if args.out:
        _write_json(args.out, {
            "config_digest": config.digest(),
            "seed": args.seed,
            "upper_bound": bound.objective,
            "bound_formulation": bound.formulation,
            "policies": reports,
        })
    if args.csv:
        _write_csv(args.csv, ["policy", "avg_daily_reward", "ratio_to_bound"],
                   [[r[0], f"{r[1]:.10g}", r[2]] for r in rows])
    return EXIT_OK


def _sweep_point(config: NetworkConfig, label: str, args) -> tuple[list, dict]:
    bound = fluid.upper_bound(config)
    pcfg = ppo.PpoConfig(seed=args.seed,
                         policy_iterations=args.train_iterations)
    if args.trajectories is not None:
        pcfg.trajectories_per_iter = args.trajectories
    result = ppo.train(config, pcfg)
    eval_days, eval_trajs = args.days, args.eval_trajectories

    def _eval(policy):
        means = []
        for k in range(eval_trajs):
            rng = np.random.default_rng([args.seed, 5, k, 11])
            traces = sim.run_days(config, policy, eval_days, rng)
            means.append(sim.average_daily_reward(traces))
        return math.fsum(means) / len(means)
    ppo_reward = _eval(ppo.NeuralPolicy(config, result.policy))
    pok_reward = _eval(baselines.PowerOfKPolicy(config, k=args.k))
    ratio = (lambda r: r / bound.objective if abs(bound.objective) > 1e-12
             else float("nan"))
    row = [label, f"{bound.objective:.10g}", f"{ppo_reward:.10g}",
           f"{pok_reward:.10g}", f"{ratio(ppo_reward):.6f}",
           f"{ratio(pok_reward):.6f}"]
    detail = {"label": label, "bound": bound.objective,
              "ppo_reward": ppo_reward, "power_of_k_reward": pok_reward,
              "config_digest": config.digest()}
    return row, detail


SWEEP_HEADER = ["configuration", "upper_bound", "ppo_reward",
                "power_of_k_reward", "ppo_ratio", "power_of_k_ratio"]


def _finish_sweep(rows, details, args) -> int:
    _print_table(SWEEP_HEADER, rows)
    if args.csv:
        _write_csv(args.csv, SWEEP_HEADER, rows)
    if args.out:
        _write_json(args.out, {"seed": args.seed, "points": details})
    return EXIT_OK


def cmd_sweep_chargers(args) -> int:
    base = _load_config(args)
    base.validate()
    rows, details = [], []
    for alloc in args.allocation:
        try:
            counts = [int(x) for x in alloc.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad allocation {alloc!r}: comma-separated "
                              f"integers expected") from exc
        if len(counts) != base.num_regions:
            raise ConfigError(f"allocation {alloc!r} has {len(counts)} entries "
                              f"for {base.num_regions} regions")
        charger_counts = np.zeros_like(base.charger_counts)
        charger_counts[:, 0] = counts
        config = base.with_updates(charger_counts=charger_counts)
        config.validate()
        row, detail = _sweep_point(config, alloc, args)
        rows.append(row)
        details.append(detail)
    return _finish_sweep(rows, details, args)


def cmd_sweep_hardware(args) -> int:
    base = _load_config(args)
    base.validate()
    rows, details = [], []
    for pair in args.pair:
        try:
            rate_s, cap_s = pair.split(":")
            rate, cap = int(rate_s), int(cap_s)
        except ValueError as exc:
            raise ConfigError(f"bad pair {pair!r}: expected RATE:CAPACITY") from exc
        config = base.with_updates(
            charge_rates=(rate,) * len(base.charge_rates),
            battery_capacity=cap)
        config.validate()
        row, detail = _sweep_point(config, pair, args)
        rows.append(row)
        details.append(detail)
    return _finish_sweep(rows, details, args)


# -- argument parsing ----------------------------------------------------------


def _add_config_args(p):
    p.add_argument("--config", help="scenario JSON (fleetlab-config-v1)")
    p.add_argument("--scenario", choices=TEMPLATES,
                   help="built-in synthetic scenario template")


def _add_eval_args(p):
    p.add_argument("--trajectories", type=int, default=10)
    p.add_argument("--days", type=int, default=10,
                   help="days per trajectory")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker processes for independent trajectories")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fleetlab",
        description="Electric robo-taxi fleet dispatch: simulate, train, "
                    "bound, and compare policies.")
    parser.add_argument("--seed", type=int, default=0,
                        help="master seed (FLEETLAB_SEED env overrides)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="build a scenario from trip records")
    p.add_argument("--records", required=True, help="trip CSV (optionally .gz)")
    p.add_argument("--regions", required=True, help="zone,region CSV")
    p.add_argument("--epoch-min", type=float, default=5.0)
    p.add_argument("--fleet", type=int, default=300)
    p.add_argument("--scale-fleet", type=int, default=None,
                   help="scale demand to this fleet size using the "
                        "max-simultaneous-trips reference estimate")
    p.add_argument("--name", default="calibrated")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", help="train a dispatch policy")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--trajectories", type=int, default=None)
    p.add_argument("--days", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="roll a named policy")
    _add_config_args(p)
    p.add_argument("--policy", required=True,
                   help="ppo | power-of-k:k | fluid | random")
    p.add_argument("--checkpoint", help="policy.bin for --policy ppo")
    _add_eval_args(p)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--trace-csv", help="fleet-status time series CSV path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bound", help="fluid-relaxation reward upper bound")
    _add_config_args(p)
    p.add_argument("--formulation", choices=("auto", "full", "reduced"),
                   default="auto")
    p.add_argument("--out", help="JSON solution path")
    p.add_argument("--mps", help="export the LP in fixed MPS format")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("compare", help="benchmark policies against the bound")
    _add_config_args(p)
    p.add_argument("--policies", nargs="+",
                   default=["power-of-2", "fluid", "random"])
    p.add_argument("--checkpoint", help="policy.bin when ppo is listed")
    _add_eval_args(p)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--csv", help="CSV report path")
    p.set_defaults(func=cmd_compare)

    for name, fn, flag, metavar, helptext in (
        ("sweep-chargers", cmd_sweep_chargers, "--allocation", "N,N,...",
         "per-region charger counts (repeatable)"),
        ("sweep-hardware", cmd_sweep_hardware, "--pair", "RATE:CAPACITY",
         "charge rate and battery capacity (repeatable)"),
    ):
        p = sub.add_parser(name, help=f"bound+train+evaluate over {metavar}")
        _add_config_args(p)
        p.add_argument(flag, action="append", default=[], metavar=metavar,
                       help=helptext)
        p.add_argument("--train-iterations", type=int, default=5)
        p.add_argument("--trajectories", type=int, default=None,
                       help="training trajectories per iteration")
        p.add_argument("--eval-trajectories", type=int, default=5)
        p.add_argument("--days", type=int, default=5)
        p.add_argument("--k", type=int, default=2)
        p.add_argument("--csv", help="CSV report path")
        p.add_argument("--out", help="JSON report path")
        p.set_defaults(func=fn)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.seed = _effective_seed(args)
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (LpInfeasible, LpUnbounded, ReductionUnavailable,
            TrainingDiagnostic, ContractViolation, StateSpaceTooLarge) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FleetlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

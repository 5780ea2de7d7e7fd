"""Policy training: atomic-action PPO for the average-reward dispatch MDP.

Each iteration collects K trajectories of D days under the frozen policy,
estimates the long-run average daily reward g, builds Monte-Carlo relative
value targets by a reverse pass of (r - g/(T*N)), fits the value networks by
minibatch Adam on squared error, forms advantages
A = r - g/(T*N) + h(next obs) - h(obs), and ascends the clipped surrogate
mean(min(rho*A, clip(rho, 1-eps, 1+eps)*A)) with a decaying clip radius
eps_m = max(eps * gamma^m, floor).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .config import NetworkConfig
from .errors import InvalidArgument, TrainingDiagnostic
from .model import action_count
from .reduce import obs_dim, reduce_vector, vehicle_feature_dim, vehicle_features
from .sim import DayTrace, initial_state, run_days


@dataclass
class PpoConfig:
    policy_iterations: int = 30
    trajectories_per_iter: int = 30
    days_per_trajectory: int = 8
    initial_clip: float = 0.1
    clip_decay: float = 0.97
    clip_floor: float = 0.01
    lr_policy: float = 5e-4
    lr_value: float = 3e-4
    batch_policy: int = 1024
    batch_value: int = 1024
    policy_update_steps: int = 20
    value_update_steps: int = 100
    seed: int = 0
    hidden: int = 128
    shared_time_net: bool = False
    normalize_advantages: bool = True
    eval_days: int = 4
    early_stop_patience: int = 3

    def validate(self) -> None:
        if self.policy_iterations < 0 or self.trajectories_per_iter < 1:
            raise InvalidArgument("need >= 1 trajectory and >= 0 iterations")
        if self.days_per_trajectory < 1:
            raise InvalidArgument("days_per_trajectory must be >= 1")
        if not (0 < self.initial_clip <= 1 and 0 < self.clip_decay <= 1):
            raise InvalidArgument("clip parameters out of range")


def clip_schedule(m: int, eps: float, gamma: float, floor: float = 0.01) -> float:
    return max(eps * gamma ** m, floor)


class NeuralPolicy:
    """Samples atomic actions from masked-softmax network outputs.

    With record=True it stores, per atomic call, the observation and vehicle
    features actually fed to the network, in call order, so the trainer can
    rebuild ratios under the identical inputs.
    """

    def __init__(self, config: NetworkConfig, pset: nn.MlpSet, record: bool = False):
        self.config = config
        self.pset = pset
        self.record = record
        self.obs_log: list[np.ndarray] = []
        self.veh_log: list[np.ndarray] = []
        self.mask_log: list[np.ndarray] = []

    def act(self, config, work, vehicle, mask, rng):
        obs = reduce_vector(config, work)
        veh = vehicle_features(config, vehicle)
        probs = nn.forward_policy(self.pset, obs, veh, mask, work.t)
        idx = int(rng.choice(probs.size, p=probs))
        if self.record:
            self.obs_log.append(obs)
            self.veh_log.append(veh)
            self.mask_log.append(mask.copy())
        return idx, float(probs[idx])


@dataclass
class EpisodeTrace:
    """Flat per-atomic-step arrays for one K-trajectory member."""

    obs: np.ndarray          # (L, obs_dim)
    veh: np.ndarray          # (L, veh_dim)
    mask: np.ndarray         # (L, n_actions) bool
    t: np.ndarray            # (L,) time of day
    d: np.ndarray            # (L,) day index
    action: np.ndarray       # (L,) atomic action index
    old_prob: np.ndarray     # (L,)
    reward: np.ndarray       # (L,)
    terminal_obs: np.ndarray
    terminal_t: int
    days: list[DayTrace] = field(default_factory=list)

    def __len__(self) -> int:
        return self.action.size


def collect_trajectory(config: NetworkConfig, pset: nn.MlpSet, days: int,
                       rng: np.random.Generator) -> EpisodeTrace:
    policy = NeuralPolicy(config, pset, record=True)
    day_traces = run_days(config, policy, days, rng)
    t_arr, d_arr, act, prob, rew = [], [], [], [], []
    for d, tr in enumerate(day_traces):
        for t, ep in enumerate(tr.epochs):
            for rec in ep.records:
                t_arr.append(t)
                d_arr.append(d)
                act.append(rec.index)
                prob.append(rec.prob)
                rew.append(rec.reward)
    final = day_traces[-1].states[-1]
    return EpisodeTrace(
        obs=np.asarray(policy.obs_log),
        veh=np.asarray(policy.veh_log),
        mask=np.asarray(policy.mask_log, dtype=bool),
        t=np.asarray(t_arr, dtype=np.int64),
        d=np.asarray(d_arr, dtype=np.int64),
        action=np.asarray(act, dtype=np.int64),
        old_prob=np.asarray(prob),
        reward=np.asarray(rew),
        terminal_obs=reduce_vector(config, final),
        terminal_t=final.t,
        days=day_traces,
    )


def estimate_g(traces: list[EpisodeTrace], days: int) -> float:
    if not traces:
        raise InvalidArgument("no traces")
    total = math.fsum(math.fsum(tr.reward.tolist()) for tr in traces)
    return total / (len(traces) * days)


def value_targets(trace: EpisodeTrace, g: float, config: NetworkConfig) -> np.ndarray:
    """Tail sums of (r - g/(T*N)), one reverse pass."""
    bias = g / (config.horizon_steps * config.fleet_size)
    adj = trace.reward - bias
    return adj[::-1].cumsum()[::-1]


def _value_batch(vset: nn.MlpSet, obs: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Vectorized value forward over mixed times (grouped per network)."""
    out = np.empty(len(t))
    for tt in np.unique(t):
        sel = t == tt
        x = vset.augment(obs[sel], int(tt))
        out[sel] = vset.net_for(int(tt)).forward(x)[:, 0]
    return out


def fit_value(vset: nn.MlpSet, obs: np.ndarray, t: np.ndarray, targets: np.ndarray,
              ppo: PpoConfig, rng: np.random.Generator,
              adam: nn.AdamState | None = None) -> tuple[nn.AdamState, list[float]]:
    """Minibatch Adam on mean squared error; returns losses per step."""
    params = [p for net in vset.nets for p in net.params()]
    if adam is None:
        adam = nn.AdamState.for_params(params)
    losses = []
    n = len(targets)
    for _ in range(ppo.value_update_steps):
        idx = rng.choice(n, size=min(ppo.batch_value, n), replace=False)
        grads = [np.zeros_like(p) for p in params]
        loss_terms = []
        offset = 0
        offsets = {}
        for i, net in enumerate(vset.nets):
            offsets[i] = offset
            offset += 2 * len(net.weights)
        for tt in np.unique(t[idx]):
            sel = idx[t[idx] == tt]
            net = vset.net_for(int(tt))
            x = vset.augment(obs[sel], int(tt))
            y, cache = net.forward(x, want_cache=True)
            err = y[:, 0] - targets[sel]
            loss_terms.append(float(err @ err))
            g, _ = net.backward(cache, (2.0 * err / len(idx))[:, None])
            ni = 0 if vset.shared else int(tt)
            for j, gj in enumerate(g):
                grads[offsets[ni] + j] += gj
        loss = math.fsum(loss_terms) / len(idx)
        if not math.isfinite(loss):
            raise TrainingDiagnostic("value loss diverged (NaN/inf)")
        losses.append(loss)
        nn.adam_step(params, grads, adam, ppo.lr_value)
    return adam, losses


def compute_advantages(trace: EpisodeTrace, vset: nn.MlpSet, g: float,
                       config: NetworkConfig) -> np.ndarray:
    """A = r - g/(T*N) + h(next obs) - h(obs); the final step bootstraps on
    the trajectory's terminal observation."""
    bias = g / (config.horizon_steps * config.fleet_size)
    h = _value_batch(vset, trace.obs, trace.t)
    h_term = nn.forward_value(vset, trace.terminal_obs, trace.terminal_t)
    h_next = np.append(h[1:], h_term)
    return trace.reward - bias + h_next - h


def surrogate_terms(probs_new: np.ndarray, old_prob: np.ndarray, adv: np.ndarray,
                    eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample min(rho*A, clip(rho)*A) and whether the clip bound binds."""
    rho = probs_new / old_prob
    t1 = rho * adv
    t2 = np.clip(rho, 1.0 - eps, 1.0 + eps) * adv
    return np.minimum(t1, t2), t2 < t1


@dataclass
class PolicyUpdateStats:
    clip_fraction: float
    surrogate_before: float
    dropped: int


def ppo_update(pset: nn.MlpSet, traces: list[EpisodeTrace], advantages: np.ndarray,
               eps_m: float, ppo: PpoConfig, rng: np.random.Generator,
               adam: nn.AdamState | None = None) -> tuple[nn.AdamState, PolicyUpdateStats]:
    """Clipped-surrogate ascent over the pooled atomic dataset."""
    obs = np.vstack([tr.obs for tr in traces])
    veh = np.vstack([tr.veh for tr in traces])
    mask = np.vstack([tr.mask for tr in traces])
    t = np.concatenate([tr.t for tr in traces])
    act = np.concatenate([tr.action for tr in traces])
    old_prob = np.concatenate([tr.old_prob for tr in traces])

    keep = old_prob > 1e-12
    dropped = int((~keep).sum())
    if dropped:
        obs, veh, mask, t, act = obs[keep], veh[keep], mask[keep], t[keep], act[keep]
        old_prob, advantages = old_prob[keep], advantages[keep]

    params = [p for net in pset.nets for p in net.params()]
    if adam is None:
        adam = nn.AdamState.for_params(params)
    offsets = {}
    off = 0
    for i, net in enumerate(pset.nets):
        offsets[i] = off
        off += 2 * len(net.weights)

    n = len(act)
    xfull = np.hstack([obs, veh])
    clip_fracs = []
    surrogate_before = float(advantages.mean()) if n else 0.0
    for _ in range(ppo.policy_update_steps):
        idx = rng.choice(n, size=min(ppo.batch_policy, n), replace=False)
        grads = [np.zeros_like(p) for p in params]
        clipped_ct = 0
        for tt in np.unique(t[idx]):
            sel = idx[t[idx] == tt]
            net = pset.net_for(int(tt))
            x = pset.augment(xfull[sel], int(tt))
            logits, cache = net.forward(x, want_cache=True)
            m = mask[sel]
            z = np.where(m, logits, -np.inf)
            z = z - z.max(axis=1, keepdims=True)
            ez = np.where(m, np.exp(z), 0.0)
            p = ez / ez.sum(axis=1, keepdims=True)
            pa = p[np.arange(len(sel)), act[sel]]
            rho = pa / old_prob[sel]
            adv = advantages[sel]
            clipped = (np.clip(rho, 1 - eps_m, 1 + eps_m) * adv) < (rho * adv)
            clipped_ct += int(clipped.sum())
            # d/dlogits of mean surrogate; zero where the clip bound binds
            coef = np.where(clipped, 0.0, adv * rho) / len(idx)
            dlogits = -coef[:, None] * p
            dlogits[np.arange(len(sel)), act[sel]] += coef
            g, _ = net.backward(cache, -dlogits)       # ascend: negate for Adam
            ni = 0 if pset.shared else int(tt)
            for j, gj in enumerate(g):
                grads[offsets[ni] + j] += gj
        clip_fracs.append(clipped_ct / len(idx))
        nn.adam_step(params, grads, adam, ppo.lr_policy)
    stats = PolicyUpdateStats(
        clip_fraction=float(np.mean(clip_fracs)) if clip_fracs else 0.0,
        surrogate_before=surrogate_before,
        dropped=dropped,
    )
    return adam, stats


# -- evaluation and the outer loop ---------------------------------------------


def evaluate_policy(config: NetworkConfig, policy, days: int, seed: int,
                    warmup_days: int = 1) -> dict:
    """Mean daily reward and service metrics over one evaluation rollout."""
    rng = np.random.default_rng([seed, 0])
    traces = run_days(config, policy, warmup_days + days, rng)
    scored = traces[warmup_days:]
    daily = [tr.total_reward for tr in scored]
    fulfilled = sum(i.fulfilled for tr in scored for i in tr.infos)
    arrived = sum(i.arrived for tr in scored for i in tr.infos)
    return {
        "mean_daily_reward": math.fsum(daily) / len(daily),
        "daily_rewards": daily,
        "fulfilled": fulfilled,
        "arrived": arrived,
        "fulfillment_rate": fulfilled / arrived if arrived else 0.0,
    }


@dataclass
class IterationReport:
    iteration: int
    g_estimate: float
    value_losses: list[float]
    surrogate: float
    clip_fraction: float
    clip_eps: float
    eval_reward: float
    dropped_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    policy: nn.MlpSet
    value: nn.MlpSet
    reports: list[IterationReport]
    stopped_early: bool


def _write_checkpoint(directory: str, m: int, pset: nn.MlpSet, vset: nn.MlpSet,
                      config: NetworkConfig, report: IterationReport) -> None:
    d = os.path.join(directory, f"iter_{m}")
    os.makedirs(d, exist_ok=True)
    nn.save_set(os.path.join(d, "policy.bin"), pset)
    nn.save_set(os.path.join(d, "value.bin"), vset)
    manifest = {
        "iteration": m,
        "config_digest": config.digest(),
        "g_estimate": report.g_estimate,
        "eval_reward": report.eval_reward,
        "policy_params": pset.param_count(),
        "value_params": vset.param_count(),
    }
    with open(os.path.join(d, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")


def init_networks(config: NetworkConfig, ppo: PpoConfig) -> tuple[nn.MlpSet, nn.MlpSet]:
    rng = np.random.default_rng([ppo.seed, 1])
    pset = nn.create_policy_set(obs_dim(config), vehicle_feature_dim(config),
                                action_count(config), config.horizon_steps, rng,
                                hidden=ppo.hidden, shared=ppo.shared_time_net)
    vset = nn.create_value_set(obs_dim(config), config.horizon_steps, rng,
                               hidden=ppo.hidden, shared=ppo.shared_time_net)
    return pset, vset


def train(config: NetworkConfig, ppo: PpoConfig,
          checkpoint_dir: str | None = None, log=None) -> TrainResult:
    """Full training loop; returns the final policy and per-iteration reports."""
    ppo.validate()
    pset, vset = init_networks(config, ppo)
    value_adam = policy_adam = None
    reports: list[IterationReport] = []
    best = -math.inf
    stale = 0
    stopped = False
    for m in range(1, ppo.policy_iterations + 1):
        traces = [
            collect_trajectory(config, pset, ppo.days_per_trajectory,
                               np.random.default_rng([ppo.seed, 2, m, k]))
            for k in range(ppo.trajectories_per_iter)
        ]
        g = estimate_g(traces, ppo.days_per_trajectory)
        targets = np.concatenate([value_targets(tr, g, config) for tr in traces])
        all_obs = np.vstack([tr.obs for tr in traces])
        all_t = np.concatenate([tr.t for tr in traces])
        value_adam, losses = fit_value(
            vset, all_obs, all_t, targets, ppo, np.random.default_rng([ppo.seed, 3, m]),
            adam=value_adam)
        adv = np.concatenate([compute_advantages(tr, vset, g, config) for tr in traces])
        if ppo.normalize_advantages and adv.std() > 0:
            adv = (adv - adv.mean()) / adv.std()
        eps_m = clip_schedule(m, ppo.initial_clip, ppo.clip_decay, ppo.clip_floor)
        policy_adam, stats = ppo_update(
            pset, traces, adv, eps_m, ppo, np.random.default_rng([ppo.seed, 4, m]),
            adam=policy_adam)
        ev = evaluate_policy(config, NeuralPolicy(config, pset), ppo.eval_days,
                             seed=ppo.seed + 1000 + m)
        report = IterationReport(
            iteration=m, g_estimate=g, value_losses=losses,
            surrogate=stats.surrogate_before, clip_fraction=stats.clip_fraction,
            clip_eps=eps_m, eval_reward=ev["mean_daily_reward"],
            dropped_samples=stats.dropped)
        reports.append(report)
        if log is not None:
            log(json.dumps({"iteration": m, "g": g, "eval_reward": report.eval_reward,
                            "clip_fraction": report.clip_fraction}, sort_keys=True))
        if checkpoint_dir:
            _write_checkpoint(checkpoint_dir, m, pset, vset, config, report)
        if report.eval_reward > best + 1e-9:
            best = report.eval_reward
            stale = 0
        else:
            stale += 1
            if stale >= ppo.early_stop_patience:
                stopped = True
                break
    return TrainResult(pset, vset, reports, stopped)

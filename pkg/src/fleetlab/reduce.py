"""Fixed-width observation vectors for the dispatch networks.

Full states grow quadratically in the number of regions; the observation
clusters them down to linear size:

* vehicles  -> counts per (region, eta bucket, battery class), / fleet size
* orders    -> per-origin and per-destination totals, / demand normalizer
* chargers  -> free-charger counts per (region, rate), / fleet size
* time      -> a single normalized time-of-day scalar

Battery classes use 10% / 40% cutoffs of the pack; eta buckets are
{idle, dispatchable (1..L_p), busy (>L_p)}, the ranges that determine which
atomic actions a vehicle may take.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig
from .model import SystemState, VehicleStatus

N_ETA_BUCKETS = 3
N_BATTERY_CLASSES = 3


def battery_class(config: NetworkConfig, battery: int) -> int:
    """0 = low (<10% of B), 1 = medium (10-40%), 2 = high (>=40%); exact in ints."""
    B = config.battery_capacity
    if battery * 10 < B:
        return 0
    if battery * 10 < 4 * B:
        return 1
    return 2


def eta_bucket(config: NetworkConfig, eta: int) -> int:
    """0 = idle, 1 = en-route but dispatchable (1..L_p), 2 = busy (>L_p)."""
    if eta == 0:
        return 0
    if eta <= config.pickup_patience:
        return 1
    return 2


def obs_dim(config: NetworkConfig) -> int:
    V, R = config.num_regions, config.num_rates
    return V * N_ETA_BUCKETS * N_BATTERY_CLASSES + 2 * V + V * R + 1


def vehicle_feature_dim(config: NetworkConfig) -> int:
    return config.num_regions + N_ETA_BUCKETS + N_BATTERY_CLASSES


def demand_normalizer(config: NetworkConfig) -> float:
    return config.fleet_size * config.effective_demand_scale()


@dataclass(frozen=True)
class ReducedObservation:
    time_of_day: int
    fleet_features: np.ndarray        # (V, 3, 3) normalized counts
    trip_origin_counts: np.ndarray    # (V,)
    trip_dest_counts: np.ndarray      # (V,)
    charger_avail: np.ndarray         # (V, R)

    def vector(self, horizon_steps: int) -> np.ndarray:
        return np.concatenate([
            self.fleet_features.ravel(),
            self.trip_origin_counts,
            self.trip_dest_counts,
            self.charger_avail.ravel(),
            [self.time_of_day / horizon_steps],
        ])


def reduce_state(config: NetworkConfig, state) -> ReducedObservation:
    """Cluster a full state (or intra-epoch working state) into an observation."""
    V, R = config.num_regions, config.num_rates
    fleet = np.zeros((V, N_ETA_BUCKETS, N_BATTERY_CLASSES))
    eta_map = np.array([eta_bucket(config, e) for e in range(config.eta_cap + 1)])
    bat_map = np.array([battery_class(config, b) for b in range(config.battery_capacity + 1)])
    vs, es, bs = np.nonzero(state.vehicles)
    for v, e, b in zip(vs, es, bs):
        fleet[v, eta_map[e], bat_map[b]] += state.vehicles[v, e, b]
    fleet /= config.fleet_size

    dnorm = demand_normalizer(config)
    origin = state.trips.sum(axis=(1, 2)) / dnorm
    dest = state.trips.sum(axis=(0, 2)) / dnorm
    avail = state.chargers[:, :, 0] / config.fleet_size
    return ReducedObservation(state.t, fleet, origin, dest, avail)


def reduce_vector(config: NetworkConfig, state) -> np.ndarray:
    return reduce_state(config, state).vector(config.horizon_steps)


def vehicle_features(config: NetworkConfig, vehicle: VehicleStatus) -> np.ndarray:
    """One-hot (region, eta bucket, battery class) for the acting vehicle."""
    V = config.num_regions
    out = np.zeros(vehicle_feature_dim(config))
    out[vehicle.dest] = 1.0
    out[V + eta_bucket(config, vehicle.eta)] = 1.0
    out[V + N_ETA_BUCKETS + battery_class(config, vehicle.battery)] = 1.0
    return out

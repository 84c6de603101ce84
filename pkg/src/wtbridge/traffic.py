"""Stochastic traffic streams on a multi-lane bridge.

Vehicles arrive at both bridge ends, are assigned a class and a desired speed
for the wind case, and move along their lane under a car-following law. Lane
changes are not modelled, so the order within a lane never changes.

Positions are kept in a per-lane travel coordinate ``s`` (front bumper,
metres from the entry end); :meth:`TrafficStream.deck_x` maps to the span
coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .vehicles import VehicleParams, sample_params

KMH = 1.0 / 3.6
SECONDS_PER_DAY = 86400.0

CASE_SPEED_LIMITS_KMH = {1: 110.0, 2: 90.0, 3: 70.0}
CASE_WIND_BANDS = {1: (10.0, 15.0), 2: (15.0, 20.0), 3: (20.0, 25.0)}

DEFAULT_COMPOSITION = {"car": 0.72, "van": 0.12, "bus": 0.02, "truck2": 0.07, "truck3": 0.07}
DEFAULT_CLASS_CAPS_KMH = {"bus": 100.0, "truck2": 80.0, "truck3": 80.0}
DEFAULT_LANES = ((1, -5.625), (1, -1.875), (-1, 1.875), (-1, 5.625))


@dataclass(frozen=True)
class CarFollowing:
    """Desired-speed relaxation with linear gap keeping.

    ``a = min((v0 - v) / relax_time, k_gap (gap - s0 - T v) + k_speed (v_lead - v))``
    bounded to ``[-b_emergency, a_max]``. In equilibrium behind a leader at
    speed ``v`` the gap settles at ``standstill_gap + time_gap * v``.
    """

    time_gap: float = 1.2
    standstill_gap: float = 2.0
    a_max: float = 1.5
    b_emergency: float = 8.0
    relax_time: float = 4.0
    k_gap: float = 0.1
    k_speed: float = 0.6
    speed_sigma: float = 0.05

    def acceleration(self, gap, v, v_lead, v0):
        a_free = (v0 - v) / self.relax_time
        a_follow = self.k_gap * (gap - self.standstill_gap - self.time_gap * v) + self.k_speed * (v_lead - v)
        return np.clip(np.minimum(a_free, a_follow), -self.b_emergency, self.a_max)

    def safe_gap(self, v):
        return self.standstill_gap + self.time_gap * v


@dataclass(frozen=True)
class TrafficConfig:
    daily_volume: float = 56000.0
    composition: dict = field(default_factory=lambda: dict(DEFAULT_COMPOSITION))
    lanes: tuple = DEFAULT_LANES
    case_speed_limit: dict = field(default_factory=lambda: dict(CASE_SPEED_LIMITS_KMH))
    class_caps: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_CAPS_KMH))
    min_headway: float = 1.0
    car_following: CarFollowing = CarFollowing()
    dt: float = 0.1

    def __post_init__(self):
        total = sum(self.composition.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"traffic composition sums to {total}, expected 1")
        if any(p < 0 for p in self.composition.values()):
            raise ValueError("negative composition share")
        dirs = [d for d, _ in self.lanes]
        if dirs.count(1) != 2 or dirs.count(-1) != 2:
            raise ValueError("need two lanes per direction")
        if self.daily_volume < 0:
            raise ValueError("daily volume must be non-negative")

    @property
    def lane_rate(self) -> float:
        """Mean arrivals per second in one lane."""
        return self.daily_volume / (SECONDS_PER_DAY * len(self.lanes))


@dataclass(frozen=True)
class Arrival:
    time: float
    lane: int
    vehicle_class: str


def generate_arrivals(config: TrafficConfig, duration: float, seed, t_start: float = 0.0) -> list[list[Arrival]]:
    """Arrival events per lane over ``[t_start, t_start + duration)``.

    Headways are exponential shifted by ``min_headway`` with the mean kept at
    ``1 / lane_rate``, so the long-run flow equals the Poisson rate while no
    two arrivals in a lane are closer than ``min_headway``.
    """
    rng = np.random.default_rng(seed)
    classes = sorted(config.composition)
    probs = np.array([config.composition[c] for c in classes])
    out = []
    rate = config.lane_rate
    for lane in range(len(config.lanes)):
        events = []
        if rate > 0:
            mean_gap = 1.0 / rate
            h_min = min(config.min_headway, 0.5 * mean_gap)
            t = t_start + rng.exponential(mean_gap)
            while t < t_start + duration:
                cls = classes[int(rng.choice(len(classes), p=probs))]
                events.append(Arrival(float(t), lane, cls))
                t += h_min + rng.exponential(mean_gap - h_min)
        out.append(events)
    return out


def assign_speed(case: int, vehicle_class: str, rng: np.random.Generator, config: TrafficConfig | None = None,
                 jitter: float | None = None) -> float:
    """Desired speed [m/s] for a vehicle under the speed limit of ``case``."""
    config = config or TrafficConfig()
    if case not in config.case_speed_limit:
        raise ValueError(f"unknown wind case {case}")
    limit = config.case_speed_limit[case] * KMH
    cap = config.class_caps.get(vehicle_class, math.inf) * KMH
    sigma = config.car_following.speed_sigma if jitter is None else jitter
    base = min(limit, cap)
    v = base + rng.normal(0.0, sigma * limit) if sigma > 0 else base
    return max(v, 0.5 * limit)


@dataclass
class VehicleInstance:
    id: int
    vehicle_class: str
    params: VehicleParams
    lane: int
    direction: int
    offset: float
    arrival_time: float
    desired_speed: float
    entry_time: float = math.nan
    exit_time: float = math.nan

    @property
    def length(self) -> float:
        return self.params.length


def advance_traffic(s, v, v0, lengths, law: CarFollowing, dt: float):
    """One step of a lane ordered front (index 0) to back.

    Returns new positions and speeds. The first vehicle drives freely.
    """
    n = s.size
    if n == 0:
        return s, v
    gap = np.full(n, np.inf)
    v_lead = v.copy()
    gap[1:] = s[:-1] - lengths[:-1] - s[1:]
    v_lead[1:] = v[:-1]
    a = law.acceleration(gap, v, v_lead, v0)
    v_new = np.maximum(v + a * dt, 0.0)
    s_new = s + 0.5 * (v + v_new) * dt
    # hard spacing guard, applied front to back
    for i in range(1, n):
        limit = s_new[i - 1] - lengths[i - 1] - law.standstill_gap
        if s_new[i] > limit:
            s_new[i] = max(limit, s[i])
            v_new[i] = min(v_new[i], v_new[i - 1])
    return s_new, v_new


@dataclass
class TrafficStream:
    vehicles: list[VehicleInstance]
    positions: np.ndarray          # (n_vehicles, n_times) front-bumper s, NaN off the road except the exit sample
    t0: float
    dt: float
    bridge_length: float
    case: int
    seed: object = None
    lanes: tuple = DEFAULT_LANES

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.positions.shape[1])

    def deck_x(self, vehicle: VehicleInstance, s):
        return s if vehicle.direction > 0 else self.bridge_length - s

    def travel_positions(self, t: float) -> np.ndarray:
        """Front-bumper travel coordinate of every vehicle at ``t`` (NaN if absent)."""
        k = (t - self.t0) / self.dt
        if k < 0 or k > self.positions.shape[1] - 1:
            return np.full(len(self.vehicles), np.nan)
        i = min(int(math.floor(k)), self.positions.shape[1] - 2)
        w = k - i
        return (1 - w) * self.positions[:, i] + w * self.positions[:, i + 1]

    def travel_speeds(self, t: float) -> np.ndarray:
        k = (t - self.t0) / self.dt
        i = int(np.clip(math.floor(k), 0, self.positions.shape[1] - 2))
        return (self.positions[:, i + 1] - self.positions[:, i]) / self.dt


def loads_at(stream: TrafficStream, t: float):
    """Vehicles with at least one axle on the deck at time ``t``.

    Returns ``(id, x, e, direction)`` tuples, ``x`` being the front-axle span
    coordinate. An axle exactly at the far end of the deck is off the deck.
    """
    s = stream.travel_positions(t)
    L = stream.bridge_length
    out = []
    for veh, si in zip(stream.vehicles, s):
        if math.isnan(si):
            continue
        axles = si - veh.params.axle_offsets_from_front()
        if np.any((axles >= 0.0) & (axles < L)):
            out.append((veh.id, float(stream.deck_x(veh, axles[0])), veh.offset, veh.direction))
    return out


def simulate_traffic(
    config: TrafficConfig,
    case: int,
    catalog: dict[str, VehicleParams],
    bridge_length: float,
    t_start: float,
    t_end: float,
    seed,
    params_seed=None,
    param_rel_std: float = 0.05,
    vary_sprung: bool = False,
) -> TrafficStream:
    """Arrivals, vehicle parameters and trajectories over ``[t_start, t_end]``."""
    rng = np.random.default_rng(seed)
    arrivals = generate_arrivals(config, t_end - t_start, rng, t_start=t_start)
    prng = np.random.default_rng(params_seed if params_seed is not None else rng)
    vehicles = []
    for lane, events in enumerate(arrivals):
        direction, offset = config.lanes[lane]
        for ev in events:
            v0 = assign_speed(case, ev.vehicle_class, rng, config)
            params = sample_params(catalog[ev.vehicle_class], prng, param_rel_std, vary_sprung)
            vehicles.append(VehicleInstance(len(vehicles), ev.vehicle_class, params, lane, direction,
                                            offset, ev.time, v0))
    return run_trajectories(vehicles, config, bridge_length, t_start, t_end, case, seed)


def run_trajectories(vehicles: list[VehicleInstance], config: TrafficConfig, bridge_length: float,
                     t_start: float, t_end: float, case: int = 0, seed=None) -> TrafficStream:
    """Integrate the car-following law for pre-built vehicles (fills entry/exit times)."""
    law = config.car_following
    dt = config.dt
    n_t = int(math.ceil((t_end - t_start) / dt)) + 1
    P = np.full((len(vehicles), n_t), np.nan)
    n_lanes = len(config.lanes)
    queues = [sorted((v for v in vehicles if v.lane == lane), key=lambda v: (v.arrival_time, v.id))
              for lane in range(n_lanes)]
    qpos = [0] * n_lanes
    active = [[] for _ in range(n_lanes)]  # vehicle indices, front first
    s_state = np.zeros(len(vehicles))
    v_state = np.zeros(len(vehicles))
    v0 = np.array([v.desired_speed for v in vehicles])
    lengths = np.array([v.length for v in vehicles])
    for k in range(n_t):
        t = t_start + k * dt
        for lane in range(n_lanes):
            act = active[lane]
            if act:
                idx = np.array(act)
                s_new, v_new = advance_traffic(s_state[idx], v_state[idx], v0[idx], lengths[idx], law, dt) \
                    if k > 0 else (s_state[idx], v_state[idx])
                s_state[idx] = s_new
                v_state[idx] = v_new
                while act and s_state[act[0]] - lengths[act[0]] >= bridge_length:
                    gone = act.pop(0)
                    vehicles[gone].exit_time = t
                    P[gone, k] = s_state[gone]  # keeps the last interval interpolable
            queue = queues[lane]
            while qpos[lane] < len(queue) and queue[qpos[lane]].arrival_time <= t:
                veh = queue[qpos[lane]]
                speed = veh.desired_speed
                if act:
                    last = act[-1]
                    gap = s_state[last] - lengths[last]
                    speed = min(speed, v_state[last])
                    if gap < law.safe_gap(speed):
                        break  # entry blocked, try again next step
                s_state[veh.id] = 0.0
                v_state[veh.id] = speed
                veh.entry_time = t
                act.append(veh.id)
                qpos[lane] += 1
            if act:
                P[act, k] = s_state[act]
    return TrafficStream(vehicles, P, t_start, dt, bridge_length, case, seed, tuple(config.lanes))


def occupancy(stream: TrafficStream, t: float) -> int:
    return len(loads_at(stream, t))


def mean_occupancy(stream: TrafficStream, t_from: float, t_to: float, step: float = 1.0) -> float:
    ts = np.arange(t_from, t_to, step)
    return float(np.mean([occupancy(stream, t) for t in ts]))


def export_trajectories(stream: TrafficStream, path, every: int = 10) -> None:
    """Audit CSV with columns t, id, lane, x, v (span coordinate, m and m/s)."""
    times = stream.times
    with open(path, "w") as fh:
        fh.write("# t [s], id, lane, x [m] front bumper, v [m/s] along travel direction\n")
        fh.write("t,id,lane,x,v\n")
        for k in range(0, len(times) - 1, every):
            col = stream.positions[:, k]
            for veh in stream.vehicles:
                s = col[veh.id]
                if math.isnan(s):
                    continue
                nxt = stream.positions[veh.id, k + 1]
                v = (nxt - s) / stream.dt if not math.isnan(nxt) else math.nan
                fh.write(f"{times[k]:.6g},{veh.id},{veh.lane},{stream.deck_x(veh, s):.6f},{v:.6f}\n")


def single_vehicle_stream(params: VehicleParams, speed: float, bridge_length: float, t_entry: float,
                          t_end: float, lane: int = 1, lanes=DEFAULT_LANES, dt: float = 0.1,
                          t0: float | None = None) -> TrafficStream:
    """One vehicle crossing at constant ``speed``, front bumper at the entry end at ``t_entry``."""
    direction, offset = lanes[lane]
    t0 = t_entry if t0 is None else t0
    veh = VehicleInstance(0, params.vehicle_class, params, lane, direction, offset, t_entry, speed,
                          entry_time=t_entry)
    times = t0 + dt * np.arange(int(math.ceil((t_end - t0) / dt)) + 1)
    s = speed * (times - t_entry)
    off = np.flatnonzero(s - params.length >= bridge_length)
    veh.exit_time = float(times[off[0]]) if off.size else math.nan
    s[times < t_entry] = np.nan
    s[off[1:]] = np.nan  # the exit sample itself is kept
    return TrafficStream([veh], s[None, :], t0, dt, bridge_length, 0, None, tuple(lanes))

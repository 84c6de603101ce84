"""Time-domain wind-vehicle-bridge simulation.

The bridge modal equations and every vehicle are advanced with the
average-acceleration Newmark scheme. Within a step the wind and tyre forces
are iterated to a fixed point so that they are consistent with the deck state
at the end of the step. The inner loop lives in :mod:`wtbridge._kernels`.

Responses are reported about the unloaded equilibrium (no wind, no vehicles)
by default, so the mean-wind static deflection is part of the W and WT
histories. ``response_reference="mean_wind"`` measures them from the static
mean-wind state of the empty deck instead.
"""

from __future__ import annotations

import functools
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .aerodynamics import load_coefficients, tributary_lengths
from .bridge_model import ModalBridge, assemble_modal_matrices, load_bridge, shapes_at
from .stochastic_fields import (RoughnessSpec, RoughnessSurface, TurbulenceSpec, WindField,
                                generate_roughness, generate_wind_field)
from .traffic import CASE_WIND_BANDS, TrafficConfig, TrafficStream, simulate_traffic
from .vehicles import load_catalog, n_body_dofs, static_wheel_loads, vehicle_matrices

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
SCENARIOS = ("W", "T", "WT")
RESPONSE_REFERENCES = ("unloaded", "mean_wind")
SEED_STREAMS = ("wind", "roughness", "traffic", "params")


class SimulationError(RuntimeError):
    """A realisation could not be integrated."""


@dataclass(frozen=True)
class SimulationConfig:
    scenario: str = "WT"
    case: int = 3
    mean_wind_U: float | None = None       # None: middle of the case band
    duration: float = 600.0
    dt: float = 0.02
    run_up: float = 60.0
    n_stations: int = 201
    output_stations: int = 55
    record_every: int = 5
    master_seed: int = 2024
    realisation: int = 0
    bridge_file: str | None = None
    coefficients_file: str | None = None
    catalog_file: str | None = None
    # turbulence
    intensity: tuple[float, float, float] = (0.10, 0.08, 0.05)
    length_scale: tuple[float, float, float] = (170.0, 60.0, 30.0)
    davenport_decay: tuple[float, float, float] = (10.0, 10.0, 10.0)
    air_density: float = 1.25
    # aerodynamics
    static_angle_deg: float = 0.0
    aero_centre: tuple[float, float, float] = (0.0, 0.25, -0.25)
    equations_as_printed: bool = False
    # road and traffic
    roughness: RoughnessSpec = RoughnessSpec()
    roughness_enabled: bool = True
    roughness_dx: float = 0.1
    track_gap: float = 1.8
    traffic: TrafficConfig = TrafficConfig()
    param_rel_std: float = 0.05
    vary_sprung: bool = False
    rigid_truck3: bool = False
    unilateral_contact: bool = False
    # solver
    linear_oracle: bool = False
    tol: float = 1e-8
    max_iter: int = 30
    response_reference: str = "unloaded"

    def __post_init__(self):
        if self.response_reference not in RESPONSE_REFERENCES:
            raise ValueError(f"response_reference must be one of {RESPONSE_REFERENCES}, "
                             f"got {self.response_reference!r}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.case not in CASE_WIND_BANDS:
            raise ValueError(f"unknown case {self.case}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        for name in ("duration", "run_up"):
            n = getattr(self, name) / self.dt
            if getattr(self, name) < 0 or abs(n - round(n)) > 1e-6:
                raise ValueError(f"{name} must be a non-negative multiple of dt")
        if self.n_duration % self.record_every:
            raise ValueError("record_every must divide duration / dt")
        lo, hi = CASE_WIND_BANDS[self.case]
        if not lo <= self.wind_speed <= hi:
            raise ValueError(f"case/wind-band mismatch: case {self.case} needs U in [{lo}, {hi}] m/s, "
                             f"got {self.wind_speed}")

    @property
    def wind_speed(self) -> float:
        if self.mean_wind_U is None:
            return 0.5 * sum(CASE_WIND_BANDS[self.case])
        return float(self.mean_wind_U)

    @property
    def n_duration(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def n_run_up(self) -> int:
        return int(round(self.run_up / self.dt))

    @property
    def has_wind(self) -> bool:
        return "W" in self.scenario

    @property
    def has_traffic(self) -> bool:
        return "T" in self.scenario

    def turbulence(self) -> TurbulenceSpec:
        return TurbulenceSpec(self.wind_speed, tuple(self.intensity), tuple(self.length_scale),
                              tuple(self.davenport_decay), self.air_density)


def realisation_seeds(master_seed: int, realisation: int) -> dict[str, int]:
    """Independent sub-seeds of one realisation.

    ``SeedSequence(master_seed, spawn_key=(realisation,))`` is split into one
    child per stream, so realisation ``r`` never depends on how many others
    exist and every scenario of a realisation shares its seeds.
    """
    root = np.random.SeedSequence(master_seed, spawn_key=(realisation,))
    return {name: int(child.generate_state(1, np.uint64)[0])
            for name, child in zip(SEED_STREAMS, root.spawn(len(SEED_STREAMS)))}


def config_hash(config: SimulationConfig) -> str:
    """SHA-256 over the resolved config (minus the realisation index) and referenced files."""
    d = asdict(config)
    d.pop("realisation")
    d.pop("scenario")
    h = hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode())
    for p in resource_paths(config).values():
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def resource_paths(config: SimulationConfig) -> dict[str, Path]:
    return {
        "bridge": Path(config.bridge_file or DATA_DIR / "greatbelt_like.bridge"),
        "coefficients": Path(config.coefficients_file or DATA_DIR / "box_girder_coefficients.csv"),
        "catalog": Path(config.catalog_file or DATA_DIR / "vehicle_catalog.yaml"),
    }


@functools.lru_cache(maxsize=8)
def _load_resources(bridge: str, coefficients: str, catalog: str, rigid_truck3: bool):
    return load_bridge(bridge), load_coefficients(coefficients), load_catalog(catalog, rigid_truck3)


def load_resources(config: SimulationConfig):
    p = resource_paths(config)
    return _load_resources(str(p["bridge"]), str(p["coefficients"]), str(p["catalog"]), config.rigid_truck3)


@dataclass
class SystemState:
    """Bridge modal state at time ``t`` (vehicle states live inside the kernel)."""

    q: np.ndarray
    q_dot: np.ndarray
    q_ddot: np.ndarray
    t: float = 0.0


def step(state: SystemState, M, C, K, force_next, dt: float) -> SystemState:
    """One average-acceleration step of diagonal modal equations under a known force."""
    a0, a1, a2 = 4.0 / dt**2, 2.0 / dt, 4.0 / dt
    kh = K + a0 * M + a1 * C
    rhs = force_next + M * (a0 * state.q + a2 * state.q_dot + state.q_ddot) + C * (a1 * state.q + state.q_dot)
    q1 = rhs / kh
    qd1 = a1 * (q1 - state.q) - state.q_dot
    qdd1 = a0 * (q1 - state.q) - a2 * state.q_dot - state.q_ddot
    return SystemState(q1, qd1, qdd1, state.t + dt)


@dataclass
class ResponseHistory:
    t: np.ndarray                  # (n_rec,) time after run-up [s]
    station_x: np.ndarray          # (n_out,)
    h: np.ndarray                  # (n_rec, n_out) vertical [m], upward positive
    p: np.ndarray                  # lateral [m], downwind positive
    alpha: np.ndarray              # rotation [rad], nose-up positive
    q: np.ndarray                  # (n_rec, n_modes) modal coordinates
    scenario: str
    case: int
    metadata: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    trace: np.ndarray | None = None

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else math.nan

    def dof(self, name: str) -> np.ndarray:
        return {"h": self.h, "p": self.p, "alpha": self.alpha, "α": self.alpha}[name]

    def station_index(self, x: float) -> int:
        return int(np.argmin(np.abs(self.station_x - x)))


def superpose(a: ResponseHistory, b: ResponseHistory) -> ResponseHistory:
    """Element-wise sum of two aligned histories (scenario ``W+T``)."""
    if a.t.shape != b.t.shape or not np.array_equal(a.t, b.t):
        raise ValueError("history time grids differ")
    if not np.array_equal(a.station_x, b.station_x):
        raise ValueError("history station grids differ")
    if a.q.shape != b.q.shape:
        raise ValueError("history mode counts differ")
    meta = {"sources": [a.metadata, b.metadata]}
    name = "+".join(sorted({a.scenario, b.scenario})) if a.scenario != b.scenario else a.scenario
    if {a.scenario, b.scenario} == {"W", "T"}:
        name = "W+T"
    return ResponseHistory(a.t.copy(), a.station_x.copy(), a.h + b.h, a.p + b.p, a.alpha + b.alpha,
                           a.q + b.q, name, a.case, meta)


# ---------------------------------------------------------------------------
# Input preparation
# ---------------------------------------------------------------------------


@dataclass
class PackedVehicles:
    entry_t: np.ndarray
    direction: np.ndarray
    dof_off: np.ndarray
    ndof: np.ndarray
    mat_off: np.ndarray
    w_off: np.ndarray
    nw: np.ndarray
    Kinv: np.ndarray
    Minv: np.ndarray
    Khinv: np.ndarray
    M: np.ndarray
    C: np.ndarray
    w_dof: np.ndarray
    w_kt: np.ndarray
    w_ct: np.ndarray
    w_static: np.ndarray
    w_front: np.ndarray
    w_y: np.ndarray
    w_track: np.ndarray
    positions: np.ndarray
    order: np.ndarray              # packed index -> stream vehicle id


def pack_vehicles(stream: TrafficStream | None, track_y: np.ndarray, dt: float) -> PackedVehicles:
    """Flatten vehicle matrices and wheel data, sorted by road entry time."""
    vehicles = [] if stream is None else stream.vehicles
    entry = np.array([v.entry_time if not math.isnan(v.entry_time) else math.inf for v in vehicles])
    order = np.argsort(entry, kind="stable").astype(np.int64)
    a0, a1 = 4.0 / dt**2, 2.0 / dt
    ndof, nw, mats = [], [], {"Kinv": [], "Minv": [], "Khinv": [], "M": [], "C": []}
    wd = {k: [] for k in ("dof", "kt", "ct", "static", "front", "y", "track")}
    for idx in order:
        veh = vehicles[idx]
        prm = veh.params
        M, C, K = vehicle_matrices(prm)
        nb = n_body_dofs(prm)
        ndof.append(M.shape[0])
        nw.append(prm.n_wheels)
        mats["Kinv"].append(np.linalg.inv(K).ravel())
        mats["Minv"].append(np.linalg.inv(M).ravel())
        mats["Khinv"].append(np.linalg.inv(K + a0 * M + a1 * C).ravel())
        mats["M"].append(M.ravel())
        mats["C"].append(C.ravel())
        static = static_wheel_loads(prm)
        front = prm.axle_offsets_from_front()
        for k, w in enumerate(prm.wheels):
            y = veh.offset + veh.direction * w.b
            wd["dof"].append(nb + k)
            wd["kt"].append(w.k_t)
            wd["ct"].append(w.c_t)
            wd["static"].append(static[k])
            wd["front"].append(front[k])
            wd["y"].append(y)
            wd["track"].append(int(np.argmin(np.abs(track_y - y))) if track_y.size else 0)
    ndof = np.array(ndof, dtype=np.int64)
    nw = np.array(nw, dtype=np.int64)

    def offsets(sizes):
        out = np.zeros(sizes.size, dtype=np.int64)
        if sizes.size:
            out[1:] = np.cumsum(sizes)[:-1]
        return out

    def flat(key):
        return np.concatenate(mats[key]) if mats[key] else np.zeros(0)

    if stream is None:
        positions = np.full((0, 2), np.nan)
    else:
        positions = np.ascontiguousarray(stream.positions[order])
    return PackedVehicles(
        entry_t=entry[order].astype(float),
        direction=np.array([vehicles[i].direction for i in order], dtype=np.int64),
        dof_off=offsets(ndof), ndof=ndof, mat_off=offsets(ndof * ndof), w_off=offsets(nw), nw=nw,
        Kinv=flat("Kinv"), Minv=flat("Minv"), Khinv=flat("Khinv"), M=flat("M"), C=flat("C"),
        w_dof=np.array(wd["dof"], dtype=np.int64), w_kt=np.array(wd["kt"], float),
        w_ct=np.array(wd["ct"], float), w_static=np.array(wd["static"], float),
        w_front=np.array(wd["front"], float), w_y=np.array(wd["y"], float),
        w_track=np.array(wd["track"], dtype=np.int64), positions=positions, order=order,
    )


def traffic_window(config: SimulationConfig, bridge_length: float) -> tuple[float, float]:
    """Traffic simulation interval: warm-up so the deck is populated at t = 0."""
    v_limit = config.traffic.case_speed_limit[config.case] / 3.6
    warm = math.ceil(1.5 * (bridge_length + 20.0) / v_limit)
    return -float(warm), config.run_up + config.duration + 1.0


def build_traffic(config: SimulationConfig, bridge: ModalBridge, catalog, seeds) -> TrafficStream:
    t0, t1 = traffic_window(config, bridge.total_length)
    return simulate_traffic(config.traffic, config.case, catalog, bridge.total_length, t0, t1,
                            seeds["traffic"], seeds["params"], config.param_rel_std, config.vary_sprung)


def build_roughness(config: SimulationConfig, bridge: ModalBridge, seed) -> RoughnessSurface:
    lanes = [e for _, e in config.traffic.lanes]
    margin = 30.0
    surface = generate_roughness(config.roughness, bridge.total_length + 2 * margin, config.roughness_dx,
                                 lanes, config.track_gap, seed, x0=-margin)
    if not config.roughness_enabled:
        surface = replace(surface, z=np.zeros_like(surface.z))
    return surface


def build_wind(config: SimulationConfig, stations, seed) -> WindField:
    n_total = config.n_run_up + config.n_duration
    return generate_wind_field(config.turbulence(), stations, config.dt, n_total * config.dt, seed)


def _static_modal(K, aero_args, Q_vehicles, feedback: bool, tol: float = 1e-12, max_iter: int = 200):
    """Static modal displacement under mean wind plus constant vehicle loads."""
    n_m = K.size
    q = np.zeros(n_m)
    Fa = np.zeros(n_m)
    stats = np.zeros(_kernels.N_STATS, dtype=np.int64)
    for _ in range(max_iter):
        if aero_args is not None:
            ok = _kernels.aero_modal(q, np.zeros(n_m), aero_args["U"], aero_args["zeros"], aero_args["zeros"],
                                     feedback, *aero_args["rest"], Fa, stats)
            if not ok:
                raise SimulationError("flow reversal in static mean-wind solution")
        q_new = (Fa + Q_vehicles) / K
        if np.max(np.abs(q_new - q)) <= tol * max(np.max(np.abs(q_new)), 1e-30):
            return q_new
        q = q_new
    raise SimulationError("static equilibrium iteration did not converge")


def _vehicle_static_loads(bridge: ModalBridge, packed: PackedVehicles, stream, t: float) -> np.ndarray:
    """Generalised force of the static wheel loads of vehicles on the deck at ``t``."""
    Q = np.zeros(bridge.n_modes)
    if stream is None or packed.entry_t.size == 0:
        return Q
    L = bridge.total_length
    k = (t - stream.t0) / stream.dt
    i = int(math.floor(k))
    if i < 0 or i >= packed.positions.shape[1] - 1:
        return Q
    f = k - i
    s_all = (1 - f) * packed.positions[:, i] + f * packed.positions[:, i + 1]
    for v, s in enumerate(s_all):
        if math.isnan(s):
            continue
        sl = slice(packed.w_off[v], packed.w_off[v] + packed.nw[v])
        x = s - packed.w_front[sl]
        if packed.direction[v] < 0:
            x = L - x
        on = (x >= 0) & (x < L)
        if not on.any():
            continue
        xs = x[on]
        g = shapes_at(bridge, xs, "h") + packed.w_y[sl][on][:, None] * shapes_at(bridge, xs, "alpha")
        Q -= g.T @ packed.w_static[sl][on]
    return Q


def run(
    config: SimulationConfig,
    *,
    stream: TrafficStream | None = None,
    wind: WindField | None = None,
    roughness: RoughnessSurface | None = None,
    resources=None,
    trace_vehicle: int | None = None,
) -> ResponseHistory:
    """Integrate one realisation and return the history after the run-up.

    Missing inputs are generated from the realisation seeds; passing them in
    lets callers share fields between scenarios or use hand-built traffic.
    """
    t_start = time.perf_counter()
    bridge, coeffs, catalog = resources or load_resources(config)
    seeds = realisation_seeds(config.master_seed, config.realisation)
    Mb, Cb, Kb = (np.ascontiguousarray(a) for a in assemble_modal_matrices(bridge))
    n_m = bridge.n_modes
    dt = config.dt
    n_total = config.n_run_up + config.n_duration

    stations = np.linspace(bridge.node_grid[0], bridge.node_grid[-1], config.n_stations)
    Ph, Pp, Pa = (np.ascontiguousarray(shapes_at(bridge, stations, d)) for d in ("h", "p", "alpha"))
    trib = tributary_lengths(stations)
    feedback = not config.linear_oracle
    kinds = np.array([m.dof for m in bridge.modes])
    ih, ip, ia = (np.flatnonzero(kinds == d).astype(np.int64) for d in ("h", "p", "alpha"))
    iw = np.flatnonzero((kinds == "h") | (kinds == "alpha")).astype(np.int64)
    aero_rest = (Ph, Pp, Pa, ih, ip, ia, trib, coeffs.alpha, coeffs.CD, coeffs.CL, coeffs.CM,
                 np.array(config.aero_centre, float), bridge.section.width_B, config.air_density,
                 math.radians(config.static_angle_deg), config.equations_as_printed)

    use_aero = config.has_wind and config.wind_speed > 0
    if use_aero:
        if wind is None:
            wind = build_wind(config, stations, seeds["wind"])
        if wind.n_samples < n_total or not np.allclose(wind.station_x, stations):
            raise SimulationError("wind field does not cover the simulation stations and duration")
        wind_u, wind_w = wind.u, wind.w
        aero_static = {"U": config.wind_speed, "zeros": np.zeros(stations.size), "rest": aero_rest}
    else:
        wind_u = wind_w = np.zeros((1, stations.size))
        aero_static = None

    if config.has_traffic:
        if stream is None:
            stream = build_traffic(config, bridge, catalog, seeds)
        if roughness is None:
            roughness = build_roughness(config, bridge, seeds["roughness"])
        track_y = roughness.track_y
        rz, rx0, rdx = np.ascontiguousarray(roughness.z), roughness.x0, roughness.dx
    else:
        stream = None
        track_y = np.zeros(0)
        rz, rx0, rdx = np.zeros((1, 2)), 0.0, 1.0
    packed = pack_vehicles(stream, track_y, dt)
    tr_t0 = stream.t0 if stream is not None else 0.0
    tr_dt = stream.dt if stream is not None else 1.0

    q_ref = np.zeros(n_m)
    if use_aero and config.response_reference == "mean_wind":
        q_ref = _static_modal(Kb, aero_static, np.zeros(n_m), feedback)
    Qv = _vehicle_static_loads(bridge, packed, stream, 0.0)
    q0 = _static_modal(Kb, aero_static, Qv, feedback) if (use_aero or Qv.any()) else np.zeros(n_m)

    n_rec = config.n_duration // config.record_every
    out_q = np.zeros((n_rec, n_m))
    tv = -1
    if trace_vehicle is not None:
        tv = int(np.flatnonzero(packed.order == trace_vehicle)[0])
    trace = np.full(n_total if tv >= 0 else 0, np.nan)
    stats = np.zeros(_kernels.N_STATS, dtype=np.int64)
    shapes_T = {d: np.ascontiguousarray(bridge.shape_matrix(d).T) for d in ("h", "alpha")}

    status, at = _kernels.integrate(
        Mb, Cb, Kb, dt, n_total, q0.copy(), np.zeros(n_m), q_ref, np.zeros((0, n_m)),
        use_aero, feedback, config.wind_speed, wind_u, wind_w, *aero_rest,
        np.ascontiguousarray(bridge.node_grid), shapes_T["h"], shapes_T["alpha"], iw,
        float(rx0), float(rdx), rz,
        float(tr_t0), float(tr_dt), packed.positions, packed.entry_t, packed.direction, packed.dof_off,
        packed.ndof, packed.mat_off, packed.w_off, packed.nw, packed.Kinv, packed.Minv, packed.Khinv,
        packed.M, packed.C, packed.w_dof, packed.w_kt, packed.w_ct, packed.w_static, packed.w_front,
        packed.w_y, packed.w_track,
        float(config.tol), int(config.max_iter), bool(config.linear_oracle), bool(config.unilateral_contact),
        config.n_run_up, config.record_every, out_q, tv, trace, stats,
    )
    if status != _kernels.OK:
        reason = {_kernels.NOT_CONVERGED: f"interaction iteration not converged after {config.max_iter} iterations",
                  _kernels.NON_FINITE: "non-finite state",
                  _kernels.FLOW_REVERSAL: "quasi-steady validity violation (U + u - p_dot <= 0)"}[status]
        raise SimulationError(f"{config.scenario} case {config.case} realisation {config.realisation}: "
                              f"{reason} at t = {at * dt:.3f} s")

    out_x = np.linspace(bridge.node_grid[0], bridge.node_grid[-1], config.output_stations)
    Oh, Op, Oa = (shapes_at(bridge, out_x, d) for d in ("h", "p", "alpha"))
    t = config.run_up + np.arange(n_rec) * dt * config.record_every
    steps = max(n_total - 1, 1)
    stat = {
        "mean_iterations": float(stats[_kernels.S_ITER_TOTAL]) / steps,
        "max_iterations": int(stats[_kernels.S_ITER_MAX]),
        "coefficient_clamps": int(stats[_kernels.S_CLAMPS]),
        "separations": int(stats[_kernels.S_SEPARATIONS]),
        "max_active_vehicles": int(stats[_kernels.S_ACTIVE_MAX]),
        "activations": int(stats[_kernels.S_ACTIVATIONS]),
        "wall_time_s": time.perf_counter() - t_start,
    }
    if stat["coefficient_clamps"]:
        logger.warning("effective angle left the coefficient table %d times", stat["coefficient_clamps"])
    meta = {
        "scenario": config.scenario, "case": config.case, "realisation": config.realisation,
        "master_seed": config.master_seed, "seeds": seeds, "mean_wind_U": config.wind_speed,
        "linear_oracle": config.linear_oracle,
    }
    hist = ResponseHistory(t, out_x, out_q @ Oh.T, out_q @ Op.T, out_q @ Oa.T, out_q, config.scenario,
                           config.case, meta, stat)
    if tv >= 0:
        hist.trace = trace
    return hist


def simulate_modal(M, C, K, forces, dt: float, q0=None, qd0=None) -> np.ndarray:
    """Modal response to prescribed generalised forces ``(n_t, n_modes)``.

    Uses the same compiled integrator as :func:`run` with wind and traffic
    switched off. Returns ``q`` at every force sample.
    """
    M, C, K = (np.ascontiguousarray(np.atleast_1d(np.asarray(a, float))) for a in (M, C, K))
    forces = np.ascontiguousarray(np.asarray(forces, float).reshape(-1, M.size))
    n_t = forces.shape[0]
    n_m = M.size
    q0 = np.zeros(n_m) if q0 is None else np.atleast_1d(np.asarray(q0, float)).copy()
    qd0 = np.zeros(n_m) if qd0 is None else np.atleast_1d(np.asarray(qd0, float)).copy()
    out = np.zeros((n_t, n_m))
    stats = np.zeros(_kernels.N_STATS, dtype=np.int64)
    zi = np.zeros(0, dtype=np.int64)
    zf = np.zeros(0)
    z2 = np.zeros((1, 1))
    status, _ = _kernels.integrate(
        M, C, K, float(dt), n_t, q0, qd0, np.zeros(n_m), forces,
        False, False, 0.0, z2, z2, np.zeros((1, n_m)), np.zeros((1, n_m)), np.zeros((1, n_m)), zi, zi, zi,
        np.ones(1),
        np.array([-1.0, 1.0]), np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(3), 1.0, 1.0, 0.0, False,
        np.array([0.0, 1.0]), np.zeros((2, n_m)), np.zeros((2, n_m)), zi,
        0.0, 1.0, np.zeros((1, 2)),
        0.0, 1.0, np.full((0, 2), np.nan), zf, zi, zi, zi, zi, zi, zi, zf, zf, zf, zf, zf,
        zi, zf, zf, zf, zf, zf, zi,
        1e-12, 30, False, False, 0, 1, out, -1, np.zeros(0), stats,
    )
    if status != _kernels.OK:
        raise SimulationError(f"modal integration failed with status {status}")
    return out


# ---------------------------------------------------------------------------
# History files
# ---------------------------------------------------------------------------


def write_history_csv(hist: ResponseHistory, path, config_digest: str = "") -> None:
    """One row per recorded time: t, then h, p, alpha at every output station."""
    cols = ["t"]
    for x in hist.station_x:
        cols += [f"h@{x:.3f}", f"p@{x:.3f}", f"alpha@{x:.3f}"]
    data = np.empty((hist.t.size, 1 + 3 * hist.station_x.size))
    data[:, 0] = hist.t
    data[:, 1::3] = hist.h
    data[:, 2::3] = hist.p
    data[:, 3::3] = hist.alpha
    m = hist.metadata
    with open(path, "w") as fh:
        fh.write(f"# scenario={hist.scenario} case={hist.case} realisation={m.get('realisation', '')} "
                 f"master_seed={m.get('master_seed', '')} config_hash={config_digest}\n")
        fh.write("# seeds=" + json.dumps(m.get("seeds", {}), sort_keys=True).replace(" ", "") + "\n")
        fh.write("# units: t [s], h [m] upward, p [m] downwind, alpha [rad] nose-up;"
                 " about the mean-wind static state\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.10g", header=",".join(cols), comments="")


def read_history_csv(path) -> ResponseHistory:
    meta = {}
    with open(path) as fh:
        first = fh.readline()
    for token in first.lstrip("# ").split():
        key, _, value = token.partition("=")
        meta[key] = value
    data = np.loadtxt(path, delimiter=",", comments="#", skiprows=4, ndmin=2)
    with open(path) as fh:
        for _ in range(3):
            fh.readline()
        cols = fh.readline().strip().split(",")
    x = np.array([float(c.split("@")[1]) for c in cols[1::3]])
    meta["realisation"] = int(meta["realisation"]) if meta.get("realisation", "").isdigit() else meta.get("realisation")
    return ResponseHistory(data[:, 0], x, data[:, 1::3], data[:, 2::3], data[:, 3::3],
                           np.zeros((data.shape[0], 0)), meta.get("scenario", "?"), int(meta.get("case", 0)), meta)

"""YAML run configuration.

A run file has the sections ``simulation``, ``files``, ``wind``,
``aerodynamics``, ``roughness``, ``traffic``, ``vehicles`` and ``solver``;
every key is optional and falls back to the defaults below. Shape and type
errors are reported with their field path. Cross-field checks (wind speed
inside the case band, composition summing to one, referenced files
existing) are collected by :func:`violations` instead of raising, so a whole
file can be reported at once.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .coupled_solver import SCENARIOS, SimulationConfig, resource_paths
from .stochastic_fields import ISO8608_CLASSES, RoughnessSpec
from .traffic import (CASE_SPEED_LIMITS_KMH, CASE_WIND_BANDS, DEFAULT_CLASS_CAPS_KMH, DEFAULT_COMPOSITION,
                      DEFAULT_LANES, CarFollowing, TrafficConfig)


class ConfigError(ValueError):
    """The configuration file cannot be read or has the wrong shape."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SimulationSection(_Section):
    scenarios: list[str] = ["WT"]
    cases: list[int] = [3]
    mean_wind_U: float | None = None
    duration: float = Field(600.0, gt=0)
    dt: float = Field(0.02, gt=0)
    run_up: float = Field(60.0, ge=0)
    realisations: int = Field(6, ge=1)
    master_seed: int = Field(2024, ge=0)
    n_stations: int = Field(201, ge=2)
    output_stations: int = Field(55, ge=2)
    record_every: int = Field(5, ge=1)


class FilesSection(_Section):
    bridge: str | None = None
    coefficients: str | None = None
    catalog: str | None = None


class WindSection(_Section):
    intensity: tuple[float, float, float] = (0.10, 0.08, 0.05)
    length_scale: tuple[float, float, float] = (170.0, 60.0, 30.0)
    davenport_decay: tuple[float, float, float] = (10.0, 10.0, 10.0)
    air_density: float = Field(1.25, gt=0)


class AeroSection(_Section):
    static_angle_deg: float = 0.0
    aero_centre: tuple[float, float, float] = (0.0, 0.25, -0.25)
    equations_as_printed: bool = False


class RoughnessSection(_Section):
    enabled: bool = True
    iso_class: str = "B"
    reference_psd: float | None = None
    waviness_exponent: float = 2.0
    transverse_decay: float = Field(4.0, gt=0)
    wavenumber_band: tuple[float, float] = (0.01, 4.0)
    dx: float = Field(0.1, gt=0)
    track_gap: float = Field(1.8, gt=0)


class CarFollowingSection(_Section):
    time_gap: float = Field(1.2, gt=0)
    standstill_gap: float = Field(2.0, ge=0)
    a_max: float = Field(1.5, gt=0)
    b_emergency: float = Field(8.0, gt=0)
    relax_time: float = Field(4.0, gt=0)
    k_gap: float = Field(0.1, ge=0)
    k_speed: float = Field(0.6, ge=0)
    speed_sigma: float = Field(0.05, ge=0)


class TrafficSection(_Section):
    daily_volume: float = 56000.0
    composition: dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_COMPOSITION))
    lanes: list[tuple[int, float]] = Field(default_factory=lambda: [tuple(x) for x in DEFAULT_LANES])
    case_speed_limit_kmh: dict[int, float] = Field(default_factory=lambda: dict(CASE_SPEED_LIMITS_KMH))
    class_caps_kmh: dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_CLASS_CAPS_KMH))
    min_headway: float = Field(1.0, ge=0)
    dt: float = Field(0.1, gt=0)
    car_following: CarFollowingSection = CarFollowingSection()


class VehiclesSection(_Section):
    param_rel_std: float = Field(0.05, ge=0)
    vary_sprung: bool = False
    rigid_truck3: bool = False
    unilateral_contact: bool = False


class SolverSection(_Section):
    linear_oracle: bool = False
    tol: float = Field(1e-8, gt=0)
    max_iter: int = Field(30, ge=1)
    response_reference: Literal["unloaded", "mean_wind"] = "unloaded"


class RunConfig(_Section):
    simulation: SimulationSection = SimulationSection()
    files: FilesSection = FilesSection()
    wind: WindSection = WindSection()
    aerodynamics: AeroSection = AeroSection()
    roughness: RoughnessSection = RoughnessSection()
    traffic: TrafficSection = TrafficSection()
    vehicles: VehiclesSection = VehiclesSection()
    solver: SolverSection = SolverSection()

    def resolved(self) -> dict:
        return self.model_dump(mode="json")


def _format_errors(err: ValidationError) -> list[str]:
    return [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in err.errors()]


def parse_config(data: dict | None, base_dir=None) -> RunConfig:
    """Validate a mapping; raise :class:`ConfigError` listing every bad field path.

    Relative file references are resolved against ``base_dir``.
    """
    try:
        cfg = RunConfig.model_validate(data or {})
    except ValidationError as e:
        raise ConfigError("; ".join(_format_errors(e))) from None
    if base_dir is not None:
        files = {k: (str((Path(base_dir) / v).resolve()) if v is not None else None)
                 for k, v in cfg.files.model_dump().items()}
        cfg = cfg.model_copy(update={"files": FilesSection(**files)})
    return cfg


def load_config(path=None) -> RunConfig:
    """Read a YAML config file; ``None`` gives the built-in defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data, path.parent)


def set_value(cfg: RunConfig, dotted: str, value: str) -> RunConfig:
    """Override one field given as ``section.key`` with a YAML-parsed value."""
    data = cfg.model_dump(mode="json")
    node = data
    parts = dotted.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"{dotted}: unknown section {p!r}")
        node = node[p]
    node[parts[-1]] = yaml.safe_load(value)
    return parse_config(data)


def violations(cfg: RunConfig) -> list[str]:
    """Cross-field problems that can be found without running anything."""
    out = []
    sim = cfg.simulation
    for s in sim.scenarios:
        if s not in SCENARIOS:
            out.append(f"simulation.scenarios: unknown scenario {s!r} (expected one of {', '.join(SCENARIOS)})")
    for c in sim.cases:
        if c not in CASE_WIND_BANDS:
            out.append(f"simulation.cases: unknown case {c}")
            continue
        lo, hi = CASE_WIND_BANDS[c]
        U = 0.5 * (lo + hi) if sim.mean_wind_U is None else sim.mean_wind_U
        if not lo <= U <= hi:
            out.append(f"simulation.mean_wind_U: case/wind-band mismatch: case {c} needs U in "
                       f"[{lo}, {hi}] m/s, got {U}")
    for name in ("duration", "run_up"):
        n = getattr(sim, name) / sim.dt
        if abs(n - round(n)) > 1e-6:
            out.append(f"simulation.{name}: not a multiple of dt = {sim.dt}")
    if round(sim.duration / sim.dt) % sim.record_every:
        out.append("simulation.record_every: does not divide duration / dt")
    if any(i < 0 for i in cfg.wind.intensity):
        out.append("wind.intensity: negative turbulence intensity")
    if any(v <= 0 for v in cfg.wind.length_scale):
        out.append("wind.length_scale: must be positive")
    if any(v <= 0 for v in cfg.wind.davenport_decay):
        out.append("wind.davenport_decay: must be positive")
    if any(abs(m) > 1 for m in cfg.aerodynamics.aero_centre):
        out.append("aerodynamics.aero_centre: factors must satisfy |m| <= 1")
    if cfg.roughness.iso_class.upper() not in ISO8608_CLASSES:
        out.append(f"roughness.iso_class: unknown class {cfg.roughness.iso_class!r}")
    lo, hi = cfg.roughness.wavenumber_band
    if not 0 < lo < hi:
        out.append("roughness.wavenumber_band: need 0 < low < high")
    tr = cfg.traffic
    total = sum(tr.composition.values())
    if not math.isclose(total, 1.0, abs_tol=1e-9):
        out.append(f"traffic.composition: shares sum to {total:g}, expected 1")
    if any(v < 0 for v in tr.composition.values()):
        out.append("traffic.composition: negative share")
    dirs = [d for d, _ in tr.lanes]
    if dirs.count(1) != 2 or dirs.count(-1) != 2 or len(dirs) != 4:
        out.append("traffic.lanes: need exactly two lanes per direction (direction +1 or -1)")
    if tr.daily_volume < 0:
        out.append("traffic.daily_volume: must be non-negative")
    for c in sim.cases:
        if c in CASE_WIND_BANDS and c not in tr.case_speed_limit_kmh:
            out.append(f"traffic.case_speed_limit_kmh: no limit for case {c}")
    for key, p in resource_paths(SimulationConfig(
            bridge_file=cfg.files.bridge, coefficients_file=cfg.files.coefficients,
            catalog_file=cfg.files.catalog)).items():
        if not Path(p).is_file():
            out.append(f"files.{key}: file not found: {p}")
    if not any(v.startswith("files.catalog") for v in out):
        try:
            from .vehicles import load_catalog

            classes = set(load_catalog(resource_paths(SimulationConfig(catalog_file=cfg.files.catalog))["catalog"]))
            missing = sorted(set(tr.composition) - classes)
            if missing:
                out.append(f"traffic.composition: classes not in the vehicle catalog: {missing}")
        except (OSError, ValueError, KeyError) as e:
            out.append(f"files.catalog: {e}")
    return out


def simulation_config(cfg: RunConfig, scenario: str, case: int, realisation: int = 0) -> SimulationConfig:
    """The solver configuration for one cell of the run matrix."""
    sim, rough, tr, veh = cfg.simulation, cfg.roughness, cfg.traffic, cfg.vehicles
    traffic = TrafficConfig(
        daily_volume=tr.daily_volume, composition=dict(tr.composition),
        lanes=tuple((int(d), float(y)) for d, y in tr.lanes),
        case_speed_limit=dict(tr.case_speed_limit_kmh), class_caps=dict(tr.class_caps_kmh),
        min_headway=tr.min_headway, car_following=CarFollowing(**tr.car_following.model_dump()), dt=tr.dt)
    roughness = RoughnessSpec(rough.iso_class, rough.reference_psd, rough.waviness_exponent,
                              rough.transverse_decay, tuple(rough.wavenumber_band))
    return SimulationConfig(
        scenario=scenario, case=case, mean_wind_U=sim.mean_wind_U, duration=sim.duration, dt=sim.dt,
        run_up=sim.run_up, n_stations=sim.n_stations, output_stations=sim.output_stations,
        record_every=sim.record_every, master_seed=sim.master_seed, realisation=realisation,
        bridge_file=cfg.files.bridge, coefficients_file=cfg.files.coefficients, catalog_file=cfg.files.catalog,
        intensity=tuple(cfg.wind.intensity), length_scale=tuple(cfg.wind.length_scale),
        davenport_decay=tuple(cfg.wind.davenport_decay), air_density=cfg.wind.air_density,
        static_angle_deg=cfg.aerodynamics.static_angle_deg, aero_centre=tuple(cfg.aerodynamics.aero_centre),
        equations_as_printed=cfg.aerodynamics.equations_as_printed,
        roughness=roughness, roughness_enabled=rough.enabled, roughness_dx=rough.dx, track_gap=rough.track_gap,
        traffic=traffic, param_rel_std=veh.param_rel_std, vary_sprung=veh.vary_sprung,
        rigid_truck3=veh.rigid_truck3, unilateral_contact=veh.unilateral_contact,
        linear_oracle=cfg.solver.linear_oracle, tol=cfg.solver.tol, max_iter=cfg.solver.max_iter,
        response_reference=cfg.solver.response_reference,
    )


def dump(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.resolved(), sort_keys=False)


__all__ = ["ConfigError", "RunConfig", "dump", "load_config", "parse_config", "set_value",
           "simulation_config", "violations"]

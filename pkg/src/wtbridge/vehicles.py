"""Linear multi-body vehicle models with tyre contact.

A vehicle is one sprung body (heave ``z``, pitch ``theta``, roll ``alpha``)
or, for articulated trucks, a tractor and a semi-trailer joined by a pin at
the fifth wheel. Each wheel is an unsprung mass on a suspension spring-damper
below the body and a tyre spring-damper above the road.

Coordinates are measured from static equilibrium on a flat rigid road, so
gravity does not appear in the equations of motion; the static wheel loads are
added back when computing contact forces.

Geometry convention: a body point at longitudinal offset ``a`` (positive
towards the vehicle front) and lateral offset ``b`` (positive to the vehicle
left) moves by ``z + a * theta + b * alpha``.

DOF order: body DOFs (tractor heave, pitch, roll, then trailer pitch, roll
for articulated vehicles), then one vertical DOF per wheel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

GRAVITY = 9.81
VEHICLE_CLASSES = ("car", "van", "bus", "truck2", "truck3")
BODY_DOFS = ("heave", "pitch", "roll")


class VehicleModelError(ValueError):
    pass


@dataclass(frozen=True)
class Wheel:
    x: float          # longitudinal offset from the tractor CG [m], +forward
    b: float          # lateral offset [m], +left
    k_s: float
    c_s: float
    m_u: float
    k_t: float
    c_t: float
    body: int = 0     # 0 tractor / rigid body, 1 trailer


@dataclass(frozen=True)
class Trailer:
    mass: float
    pitch_inertia: float
    roll_inertia: float
    cg_x: float       # trailer CG offset from tractor CG [m] (negative)
    hitch_x: float    # fifth-wheel offset from tractor CG [m]


@dataclass(frozen=True)
class VehicleParams:
    vehicle_class: str
    sprung_mass: float
    pitch_inertia: float
    roll_inertia: float
    wheels: tuple[Wheel, ...]
    length: float
    front_overhang: float = 1.0
    trailer: Trailer | None = None
    dofs: tuple[str, ...] = BODY_DOFS

    def __post_init__(self):
        positive = [self.sprung_mass, self.length]
        if "pitch" in self.dofs:
            positive.append(self.pitch_inertia)
        if "roll" in self.dofs:
            positive.append(self.roll_inertia)
        for w in self.wheels:
            positive += [w.k_s, w.m_u, w.k_t]
            if w.c_s < 0 or w.c_t < 0:
                raise VehicleModelError(f"{self.vehicle_class}: negative damping")
        if self.trailer is not None:
            positive += [self.trailer.mass, self.trailer.pitch_inertia, self.trailer.roll_inertia]
        if any(not v > 0 for v in positive):
            raise VehicleModelError(f"{self.vehicle_class}: masses, inertias and stiffnesses must be positive")
        if not self.wheels:
            raise VehicleModelError(f"{self.vehicle_class}: no wheels")

    @property
    def n_wheels(self) -> int:
        return len(self.wheels)

    @property
    def total_mass(self) -> float:
        m = self.sprung_mass + sum(w.m_u for w in self.wheels)
        if self.trailer is not None:
            m += self.trailer.mass
        return m

    @property
    def weight(self) -> float:
        return self.total_mass * GRAVITY

    @property
    def front_axle_x(self) -> float:
        return max(w.x for w in self.wheels)

    def axle_offsets_from_front(self) -> np.ndarray:
        """Distance of every wheel behind the vehicle front bumper [m]."""
        front = self.front_axle_x + self.front_overhang
        return np.array([front - w.x for w in self.wheels])


def _body_layout(params: VehicleParams):
    """Unconstrained body DOF names and the reduction matrix to independent DOFs."""
    names = [("body0", d) for d in params.dofs]
    if params.trailer is not None:
        names += [("body1", "heave"), ("body1", "pitch"), ("body1", "roll")]
    n_body = len(names)
    if params.trailer is None:
        return names, np.eye(n_body), names
    # trailer heave eliminated: z1 = z0 + hitch_x * th0 - (hitch_x - cg_x) * th1
    tr = params.trailer
    if params.dofs != BODY_DOFS:
        raise VehicleModelError("articulated vehicles need heave, pitch and roll on the tractor")
    kept = [n for n in names if n != ("body1", "heave")]
    T = np.zeros((n_body, len(kept)))
    for j, n in enumerate(kept):
        T[names.index(n), j] = 1.0
    row = names.index(("body1", "heave"))
    T[row, kept.index(("body0", "heave"))] = 1.0
    T[row, kept.index(("body0", "pitch"))] = tr.hitch_x
    T[row, kept.index(("body1", "pitch"))] = -(tr.hitch_x - tr.cg_x)
    return names, T, kept


def _attachment_row(params: VehicleParams, names, wheel: Wheel) -> np.ndarray:
    """Body displacement at a wheel's suspension mount, in unconstrained DOFs."""
    g = np.zeros(len(names))
    key = f"body{wheel.body}"
    x_rel = wheel.x if wheel.body == 0 else wheel.x - params.trailer.cg_x
    for dof, coeff in (("heave", 1.0), ("pitch", x_rel), ("roll", wheel.b)):
        if (key, dof) in names:
            g[names.index((key, dof))] = coeff
    return g


def vehicle_matrices(params: VehicleParams):
    """Mass, damping and stiffness matrices with tyres grounded.

    Returns ``(M, C, K)`` of size ``n_body + n_wheels``.
    """
    names, T, kept = _body_layout(params)
    nb = len(names)
    nw = params.n_wheels
    n = nb + nw
    M = np.zeros((n, n))
    inertia = {"heave": params.sprung_mass, "pitch": params.pitch_inertia, "roll": params.roll_inertia}
    for j, (body, dof) in enumerate(names):
        if body == "body0":
            M[j, j] = inertia[dof]
        else:
            tr = params.trailer
            M[j, j] = {"heave": tr.mass, "pitch": tr.pitch_inertia, "roll": tr.roll_inertia}[dof]
    K = np.zeros((n, n))
    C = np.zeros((n, n))
    for k, wheel in enumerate(params.wheels):
        M[nb + k, nb + k] = wheel.m_u
        d = np.zeros(n)
        d[:nb] = -_attachment_row(params, names, wheel)
        d[nb + k] = 1.0
        K += wheel.k_s * np.outer(d, d)
        C += wheel.c_s * np.outer(d, d)
        K[nb + k, nb + k] += wheel.k_t
        C[nb + k, nb + k] += wheel.c_t
    full_T = np.zeros((n, T.shape[1] + nw))
    full_T[:nb, :T.shape[1]] = T
    full_T[nb:, T.shape[1]:] = np.eye(nw)
    M, C, K = (full_T.T @ A @ full_T for A in (M, C, K))
    return M, C, K


def n_body_dofs(params: VehicleParams) -> int:
    return len(_body_layout(params)[2])


def tyre_matrices(params: VehicleParams):
    """(K_t, C_t) mapping road displacement/velocity at each wheel to generalised forces.

    Shapes (n_dof, n_wheels); only wheel rows are non-zero.
    """
    nb = n_body_dofs(params)
    n = nb + params.n_wheels
    Kt = np.zeros((n, params.n_wheels))
    Ct = np.zeros((n, params.n_wheels))
    for k, w in enumerate(params.wheels):
        Kt[nb + k, k] = w.k_t
        Ct[nb + k, k] = w.c_t
    return Kt, Ct


def gravity_vector(params: VehicleParams) -> np.ndarray:
    """Generalised gravity load (downward negative) in independent DOFs."""
    names, T, kept = _body_layout(params)
    f = np.zeros(len(names))
    f[names.index(("body0", "heave"))] = -params.sprung_mass * GRAVITY
    if params.trailer is not None:
        f[names.index(("body1", "heave"))] = -params.trailer.mass * GRAVITY
    wheels = np.array([-w.m_u * GRAVITY for w in params.wheels])
    return np.concatenate([T.T @ f, wheels])


def static_wheel_loads(params: VehicleParams) -> np.ndarray:
    """Tyre reaction of every wheel at rest on a flat rigid road [N]."""
    _, _, K = vehicle_matrices(params)
    try:
        z = np.linalg.solve(K, gravity_vector(params))
    except np.linalg.LinAlgError:
        raise VehicleModelError(f"{params.vehicle_class}: singular static system") from None
    nb = n_body_dofs(params)
    return -np.array([w.k_t for w in params.wheels]) * z[nb:]


def natural_frequencies(params: VehicleParams) -> np.ndarray:
    """Undamped natural frequencies [Hz] with tyres grounded, ascending."""
    from scipy.linalg import eigh

    M, _, K = vehicle_matrices(params)
    w2 = eigh(K, M, eigvals_only=True)
    return np.sqrt(np.clip(w2, 0, None)) / (2 * math.pi)


@dataclass
class VehicleState:
    z: np.ndarray
    z_dot: np.ndarray
    z_ddot: np.ndarray

    @classmethod
    def at_rest(cls, n_dof: int):
        return cls(np.zeros(n_dof), np.zeros(n_dof), np.zeros(n_dof))


@dataclass(frozen=True)
class ContactPoint:
    """Road under one wheel, in the structural frame (up positive)."""

    x: float
    e: float
    deck: float = 0.0        # deck vertical displacement incl. rotation lever
    deck_rate: float = 0.0
    roughness: float = 0.0
    roughness_rate: float = 0.0

    @property
    def road(self) -> float:
        return self.deck + self.roughness

    @property
    def road_rate(self) -> float:
        return self.deck_rate + self.roughness_rate


def contact_forces(state: VehicleState, contacts, params: VehicleParams,
                   static_loads: np.ndarray | None = None, unilateral: bool = False) -> np.ndarray:
    """Downward force of every wheel on the road [N].

    ``static_share + k_t * (road - z_wheel) + c_t * (road_rate - z_wheel_rate)``.
    The wheel receives the same force upward.
    """
    if static_loads is None:
        static_loads = static_wheel_loads(params)
    nb = n_body_dofs(params)
    road = np.array([c.road for c in contacts])
    rate = np.array([c.road_rate for c in contacts])
    kt = np.array([w.k_t for w in params.wheels])
    ct = np.array([w.c_t for w in params.wheels])
    F = static_loads + kt * (road - state.z[nb:]) + ct * (rate - state.z_dot[nb:])
    if unilateral:
        F = np.maximum(F, 0.0)
    return F


def quarter_car(m_s: float, m_u: float, k_s: float, c_s: float, k_t: float, c_t: float = 0.0) -> VehicleParams:
    """Single-wheel heave-only model."""
    return VehicleParams("car", m_s, 0.0, 0.0, (Wheel(0.0, 0.0, k_s, c_s, m_u, k_t, c_t),),
                         length=1.0, dofs=("heave",))


def quarter_car_frequencies(m_s, m_u, k_s, k_t) -> tuple[float, float]:
    """Closed-form undamped frequencies [Hz] of the two-mass quarter car."""
    a = m_s * m_u
    b = -(m_s * (k_s + k_t) + m_u * k_s)
    c = k_s * k_t
    disc = math.sqrt(b * b - 4 * a * c)
    w2_lo = (2 * c) / (-b + disc)    # numerically stable root pair
    w2_hi = (-b + disc) / (2 * a)
    return math.sqrt(w2_lo) / (2 * math.pi), math.sqrt(w2_hi) / (2 * math.pi)


# ---------------------------------------------------------------------------
# Catalog and sampling
# ---------------------------------------------------------------------------


def _params_from_entry(name: str, entry: dict, rigid_truck3: bool = False) -> VehicleParams:
    body = entry["body"]
    wheels = []
    for axle in entry["axles"]:
        for side in (1.0, -1.0):
            wheels.append(Wheel(
                x=float(axle["x"]),
                b=side * float(axle["half_track"]),
                k_s=float(axle["k_s"]), c_s=float(axle["c_s"]), m_u=float(axle["m_u"]),
                k_t=float(axle["k_t"]), c_t=float(axle.get("c_t", 0.0)),
                body=int(axle.get("body", 0)),
            ))
    trailer = None
    if "trailer" in entry:
        t = entry["trailer"]
        trailer = Trailer(float(t["mass"]), float(t["pitch_inertia"]), float(t["roll_inertia"]),
                          float(t["cg_x"]), float(t["hitch_x"]))
    params = VehicleParams(
        vehicle_class=name,
        sprung_mass=float(body["mass"]),
        pitch_inertia=float(body["pitch_inertia"]),
        roll_inertia=float(body["roll_inertia"]),
        wheels=tuple(wheels),
        length=float(entry["length"]),
        front_overhang=float(entry.get("front_overhang", 1.0)),
        trailer=trailer,
    )
    if rigid_truck3 and trailer is not None:
        params = rigidify(params)
    return params


def rigidify(params: VehicleParams) -> VehicleParams:
    """Merge tractor and trailer into one rigid sprung body."""
    tr = params.trailer
    if tr is None:
        return params
    m0, m1 = params.sprung_mass, tr.mass
    m = m0 + m1
    xc = m1 * tr.cg_x / m
    pitch = params.pitch_inertia + m0 * xc**2 + tr.pitch_inertia + m1 * (tr.cg_x - xc) ** 2
    roll = params.roll_inertia + tr.roll_inertia
    wheels = tuple(replace(w, x=w.x - xc, body=0) for w in params.wheels)
    return replace(params, sprung_mass=m, pitch_inertia=pitch, roll_inertia=roll, wheels=wheels,
                   trailer=None, front_overhang=params.front_overhang)


def load_catalog(path, rigid_truck3: bool = False) -> dict[str, VehicleParams]:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    catalog = {}
    for name, entry in raw["classes"].items():
        if name not in VEHICLE_CLASSES:
            raise VehicleModelError(f"{path}: unknown vehicle class {name!r}")
        try:
            catalog[name] = _params_from_entry(name, entry, rigid_truck3)
        except (KeyError, TypeError) as exc:
            raise VehicleModelError(f"{path}: class {name!r}: missing or invalid field {exc}") from None
    return catalog


def sample_params(nominal: VehicleParams, rng: np.random.Generator, rel_std: float = 0.05,
                  vary_sprung: bool = False) -> VehicleParams:
    """Draw unsprung masses uniformly with standard deviation ``rel_std`` of nominal.

    A uniform law with std ``s`` has half-width ``sqrt(3) s``. One draw per
    wheel, in wheel order. ``vary_sprung`` applies the same law to the body
    mass(es) after the wheels.
    """
    half = math.sqrt(3.0) * rel_std
    draws = rng.uniform(-half, half, size=nominal.n_wheels)
    wheels = tuple(replace(w, m_u=w.m_u * (1.0 + d)) for w, d in zip(nominal.wheels, draws))
    params = replace(nominal, wheels=wheels)
    if vary_sprung:
        d = rng.uniform(-half, half, size=2)
        params = replace(params, sprung_mass=params.sprung_mass * (1.0 + d[0]))
        if params.trailer is not None:
            params = replace(params, trailer=replace(params.trailer, mass=params.trailer.mass * (1.0 + d[1])))
    return params


def default_catalog_path() -> Path:
    return Path(__file__).parent / "data" / "vehicle_catalog.yaml"

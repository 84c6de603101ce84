"""Quasi-steady buffeting forces on the deck.

Aerodynamic frame
-----------------
The force equations work in the frame used by the bridge aerodynamics
literature: vertical deck motion ``h`` positive *downward*, vertical gust
``w`` positive upward, lateral motion ``p`` positive downwind and rotation
``alpha`` positive nose-up. In that frame a deck moving down sees the flow
coming from below, so ``w`` and ``h_dot`` add in the effective angle of
attack. :func:`assemble_wind_forces` converts from the structural frame of
:mod:`wtbridge.bridge_model` (``h`` upward) before evaluating forces.

Forces returned are drag ``D`` (along-wind, positive downwind), lift ``L``
(positive upward) and moment ``M`` (positive nose-up), per unit length.
With ``equations_as_printed`` the literal resolution
``D = F_L sin(phi) - F_D cos(phi)``, ``L = F_L cos(phi) - F_D sin(phi)`` is used
instead, which yields ``D = -F_D`` in still air.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bridge_model import DeckSection, ModalBridge, shapes_at

logger = logging.getLogger(__name__)

FORCE_INDEX = {"D": 0, "L": 1, "M": 2}


class QuasiSteadyValidityError(ArithmeticError):
    """Relative along-wind velocity is not positive (flow reversal)."""


@dataclass
class AeroCoefficients:
    """Static coefficient table, angles in radians, linear interpolation.

    Queries outside the table are clamped to the end values and counted in
    ``clamp_count``.
    """

    alpha: np.ndarray
    CD: np.ndarray
    CL: np.ndarray
    CM: np.ndarray
    clamp_count: int = field(default=0, compare=False)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.CD, self.CL, self.CM = (np.asarray(c, dtype=float) for c in (self.CD, self.CL, self.CM))
        if np.any(np.diff(self.alpha) <= 0):
            raise ValueError("coefficient table angles must be strictly increasing")
        if not (self.alpha.shape == self.CD.shape == self.CL.shape == self.CM.shape):
            raise ValueError("coefficient columns must have equal length")
        ten = math.radians(10.0)
        if self.alpha[0] > -ten + 1e-12 or self.alpha[-1] < ten - 1e-12:
            raise ValueError("coefficient table must cover at least +/-10 degrees")

    @property
    def valid_range(self) -> tuple[float, float]:
        return float(self.alpha[0]), float(self.alpha[-1])

    def __call__(self, alpha_e):
        a = np.asarray(alpha_e, dtype=float)
        outside = np.count_nonzero((a < self.alpha[0]) | (a > self.alpha[-1]))
        if outside:
            self.clamp_count += int(outside)
        return (np.interp(a, self.alpha, self.CD),
                np.interp(a, self.alpha, self.CL),
                np.interp(a, self.alpha, self.CM))

    def slopes(self, alpha_e: float = 0.0) -> tuple[float, float, float]:
        """Table slopes dC/dalpha [1/rad] of the segment containing ``alpha_e``."""
        i = int(np.clip(np.searchsorted(self.alpha, alpha_e, side="right") - 1, 0, self.alpha.size - 2))
        da = self.alpha[i + 1] - self.alpha[i]
        return tuple(float((c[i + 1] - c[i]) / da) for c in (self.CD, self.CL, self.CM))

    @classmethod
    def constant(cls, CD=0.0, CL=0.0, CM=0.0, span_deg=20.0):
        a = np.radians([-span_deg, span_deg])
        return cls(a, [CD, CD], [CL, CL], [CM, CM])


def load_coefficients(path) -> AeroCoefficients:
    """Read a CSV with columns alpha_deg, CD, CL, CM (comment lines start with #)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.lstrip().startswith("#"))
        missing = {"alpha_deg", "CD", "CL", "CM"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
        for row in reader:
            rows.append([float(row[k]) for k in ("alpha_deg", "CD", "CL", "CM")])
    data = np.array(rows)
    return AeroCoefficients(np.radians(data[:, 0]), data[:, 1], data[:, 2], data[:, 3])


@dataclass(frozen=True)
class AeroConfig:
    section: DeckSection
    static_angle: float = 0.0
    aero_centre: tuple[float, float, float] = (0.0, 0.25, -0.25)  # m_D, m_L, m_M
    density: float = 1.25
    equations_as_printed: bool = False
    motion_feedback: bool = True

    def __post_init__(self):
        if any(abs(m) > 1 for m in self.aero_centre):
            raise ValueError("aerodynamic centre factors must satisfy |m_i| <= 1")


@dataclass(frozen=True)
class DeckMotionSample:
    """Deck state at one station in the aerodynamic frame (h positive down)."""

    h: float = 0.0
    p: float = 0.0
    alpha: float = 0.0
    h_dot: float = 0.0
    p_dot: float = 0.0
    alpha_dot: float = 0.0


@dataclass(frozen=True)
class WindSample:
    U: float
    u: float = 0.0
    w: float = 0.0
    v: float = 0.0


def _components(motion, wind, cfg, i):
    m = cfg.aero_centre[FORCE_INDEX[i]]
    vertical = wind.w + motion.h_dot + m * cfg.section.width_B * motion.alpha_dot
    horizontal = wind.U + wind.u - motion.p_dot
    return vertical, horizontal


def effective_angle(motion: DeckMotionSample, wind: WindSample, cfg: AeroConfig, i: str) -> float:
    vertical, horizontal = _components(motion, wind, cfg, i)
    if not horizontal > 0:
        raise QuasiSteadyValidityError(
            f"quasi-steady validity violation: U + u - p_dot = {horizontal} m/s"
        )
    return cfg.static_angle + motion.alpha + math.atan(vertical / horizontal)


def resultant_velocity(motion: DeckMotionSample, wind: WindSample, cfg: AeroConfig, i: str) -> float:
    vertical, horizontal = _components(motion, wind, cfg, i)
    return math.hypot(vertical, horizontal)


def quasi_steady_forces(motion: DeckMotionSample, wind: WindSample, coeffs: AeroCoefficients,
                        cfg: AeroConfig) -> tuple[float, float, float]:
    """Drag, lift and moment per unit length [N/m, N/m, N m/m]."""
    out = quasi_steady_forces_array(
        np.array([motion.h_dot]), np.array([motion.p_dot]), np.array([motion.alpha]),
        np.array([motion.alpha_dot]), wind.U, np.array([wind.u]), np.array([wind.w]), coeffs, cfg)
    return float(out[0][0]), float(out[1][0]), float(out[2][0])


def quasi_steady_forces_array(h_dot, p_dot, alpha, alpha_dot, U, u, w, coeffs: AeroCoefficients,
                              cfg: AeroConfig):
    """Vectorised :func:`quasi_steady_forces` over stations (aerodynamic frame)."""
    B = cfg.section.width_B
    q_dyn = 0.5 * cfg.density
    horizontal = U + u - p_dot
    if np.any(horizontal <= 0):
        raise QuasiSteadyValidityError(
            f"quasi-steady validity violation: min(U + u - p_dot) = {np.min(horizontal)} m/s"
        )
    result = []
    for i in ("D", "L", "M"):
        m = cfg.aero_centre[FORCE_INDEX[i]]
        vertical = w + h_dot + m * B * alpha_dot
        phi = np.arctan(vertical / horizontal)
        alpha_e = cfg.static_angle + alpha + phi
        Ur2 = vertical**2 + horizontal**2
        CD, CL, CM = coeffs(alpha_e)
        FD = q_dyn * Ur2 * B * CD
        FL = q_dyn * Ur2 * B * CL
        if i == "D":
            if cfg.equations_as_printed:
                result.append(FL * np.sin(phi) - FD * np.cos(phi))
            else:
                result.append(FD * np.cos(phi) - FL * np.sin(phi))
        elif i == "L":
            if cfg.equations_as_printed:
                result.append(FL * np.cos(phi) - FD * np.sin(phi))
            else:
                result.append(FL * np.cos(phi) + FD * np.sin(phi))
        else:
            result.append(q_dyn * Ur2 * B * B * CM)
    return tuple(result)


def tributary_lengths(x: np.ndarray) -> np.ndarray:
    """Trapezoid-rule weights for a strictly increasing station grid."""
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    d = np.diff(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


class WindForceAssembler:
    """Strip-theory generalised wind forces for a fixed station grid.

    Shape matrices at the stations are computed once; each call evaluates the
    quasi-steady forces at every station and projects them onto the modes.
    """

    def __init__(self, bridge: ModalBridge, stations, coeffs: AeroCoefficients, cfg: AeroConfig):
        self.bridge = bridge
        self.stations = np.asarray(stations, dtype=float)
        self.coeffs = coeffs
        self.cfg = cfg
        self.trib = tributary_lengths(self.stations)
        self.phi_h = shapes_at(bridge, self.stations, "h")
        self.phi_p = shapes_at(bridge, self.stations, "p")
        self.phi_a = shapes_at(bridge, self.stations, "alpha")

    def station_forces(self, q, q_dot, U, u, w):
        """(D, L, M) per unit length at every station."""
        if self.cfg.motion_feedback:
            h_dot = -(self.phi_h @ q_dot)  # structural h is upward
            p_dot = self.phi_p @ q_dot
            alpha = self.phi_a @ q
            alpha_dot = self.phi_a @ q_dot
        else:
            h_dot = p_dot = alpha = alpha_dot = np.zeros_like(self.stations)
        return quasi_steady_forces_array(h_dot, p_dot, alpha, alpha_dot, U, u, w, self.coeffs, self.cfg)

    def __call__(self, q, q_dot, U, u, w) -> np.ndarray:
        D, L, M = self.station_forces(q, q_dot, U, u, w)
        t = self.trib
        return self.phi_p.T @ (D * t) + self.phi_h.T @ (L * t) + self.phi_a.T @ (M * t)


def assemble_wind_forces(bridge: ModalBridge, field_, q, q_dot, coeffs: AeroCoefficients,
                         cfg: AeroConfig, t: float) -> np.ndarray:
    """Generalised wind force vector at time ``t`` for deck state (q, q_dot).

    Wind is taken at the field stations (linear in time between samples);
    every station is a strip whose length is its tributary length.
    """
    if t < 0 or t > field_.duration - field_.dt + 1e-9:
        raise ValueError(f"t = {t} s outside wind field duration")
    lo, hi = bridge.node_grid[0], bridge.node_grid[-1]
    if np.any(field_.station_x < lo) or np.any(field_.station_x > hi):
        raise ValueError("wind station outside bridge extent")
    if field_.mean_speed_U <= 0:
        return np.zeros(bridge.n_modes)  # still air
    s = t / field_.dt
    k = min(int(math.floor(s)), field_.n_samples - 2)
    a = s - k
    u = (1 - a) * field_.u[k] + a * field_.u[k + 1]
    w = (1 - a) * field_.w[k] + a * field_.w[k + 1]
    assembler = WindForceAssembler(bridge, field_.station_x, coeffs, cfg)
    return assembler(np.asarray(q, float), np.asarray(q_dot, float), field_.mean_speed_U, u, w)

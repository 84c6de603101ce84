"""Modal representation of the bridge deck.

The deck is described by a set of mode shapes sampled on a node grid along the
span. Each mode belongs to exactly one deck degree of freedom family:
vertical (``h``), lateral (``p``) or torsional (``alpha``). The modal
equations of motion are uncoupled, so the mass, damping and stiffness
matrices are diagonal.

Sign conventions used throughout the package (structural frame):

* ``x`` along the span, from the first abutment.
* ``h`` vertical displacement, positive upward.
* ``p`` lateral displacement, positive downwind.
* ``alpha`` torsional rotation, positive nose-up (upwind edge rises).
* ``y`` lateral offset from the deck centreline, positive towards the upwind
  edge, so a point at offset ``y`` moves vertically by ``h + y * alpha``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

DOFS = ("h", "p", "alpha")
KIND_TO_DOF = {"vertical": "h", "lateral": "p", "torsional": "alpha"}
_DOF_ALIASES = {"h": "h", "p": "p", "alpha": "alpha", "a": "alpha", "α": "alpha"}


class BridgeFileError(ValueError):
    """Raised when a bridge model file cannot be parsed or is invalid."""


@dataclass(frozen=True)
class DeckSection:
    width_B: float
    depth_H: float
    mass_per_length: float
    torsional_inertia_per_length: float

    def __post_init__(self):
        if self.width_B <= 0:
            raise ValueError("deck width B must be positive")
        if self.depth_H <= 0:
            raise ValueError("deck depth H must be positive")
        if self.mass_per_length <= 0:
            raise ValueError("deck mass per length must be positive")
        if self.torsional_inertia_per_length <= 0:
            raise ValueError("deck torsional inertia per length must be positive")


@dataclass(frozen=True)
class Mode:
    index: int
    kind: str
    frequency: float
    damping_ratio: float
    shape: np.ndarray
    modal_mass: float

    def __post_init__(self):
        if self.kind not in KIND_TO_DOF:
            raise ValueError(f"mode {self.index}: unknown kind {self.kind!r}")
        if not self.frequency > 0:
            raise ValueError(f"mode {self.index}: non-positive frequency")
        if not self.damping_ratio >= 0:
            raise ValueError(f"mode {self.index}: negative damping ratio")
        if not self.modal_mass > 0:
            raise ValueError(f"mode {self.index}: non-positive modal mass")
        shape = np.asarray(self.shape, dtype=float)
        shape.setflags(write=False)
        object.__setattr__(self, "shape", shape)

    @property
    def dof(self) -> str:
        return KIND_TO_DOF[self.kind]

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.frequency


@dataclass(frozen=True)
class ModalBridge:
    section: DeckSection
    node_grid: np.ndarray
    main_span: float
    side_spans: tuple[float, ...]
    modes: tuple[Mode, ...]
    name: str = ""
    _shape_matrix: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        grid = np.asarray(self.node_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("node grid needs at least two nodes")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("node grid must be strictly increasing")
        grid.setflags(write=False)
        object.__setattr__(self, "node_grid", grid)
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "side_spans", tuple(float(s) for s in self.side_spans))
        if not self.modes:
            raise ValueError("bridge needs at least one mode")
        for mode in self.modes:
            if mode.shape.shape != grid.shape:
                raise ValueError(
                    f"mode {mode.index}: shape has {mode.shape.size} values, grid has {grid.size} nodes"
                )
        indices = [m.index for m in self.modes]
        if len(set(indices)) != len(indices):
            raise ValueError("duplicate mode indices")

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def total_length(self) -> float:
        return float(self.node_grid[-1] - self.node_grid[0])

    @property
    def main_span_start(self) -> float:
        return float(self.node_grid[0] + (self.side_spans[0] if self.side_spans else 0.0))

    @property
    def midspan(self) -> float:
        return self.main_span_start + 0.5 * self.main_span

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([m.frequency for m in self.modes])

    def modes_of_kind(self, kind: str) -> list[Mode]:
        return [m for m in self.modes if m.kind == kind]

    def first_frequency(self, kind: str) -> float:
        return min(m.frequency for m in self.modes_of_kind(kind))

    def position(self, mode_index: int) -> int:
        for j, mode in enumerate(self.modes):
            if mode.index == mode_index:
                return j
        raise KeyError(f"no mode with index {mode_index}")

    def shape_matrix(self, dof: str) -> np.ndarray:
        """(n_modes, n_nodes) node values of every mode for one DOF family.

        Rows of modes belonging to another family are zero.
        """
        dof = _DOF_ALIASES[dof]
        cached = self._shape_matrix.get(dof)
        if cached is None:
            cached = np.zeros((self.n_modes, self.node_grid.size))
            for j, mode in enumerate(self.modes):
                if mode.dof == dof:
                    cached[j] = mode.shape
            cached.setflags(write=False)
            self._shape_matrix[dof] = cached
        return cached

    def is_single_family(self) -> bool:
        return len({m.kind for m in self.modes}) == 1


def _check_x(bridge: ModalBridge, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    lo, hi = bridge.node_grid[0], bridge.node_grid[-1]
    if np.any(x < lo) or np.any(x > hi) or np.any(~np.isfinite(x)):
        raise ValueError(f"span position outside [{lo}, {hi}]")
    return x


def interpolation_weights(grid: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left-node index and right-node weight for linear interpolation."""
    idx = np.searchsorted(grid, x, side="right") - 1
    idx = np.clip(idx, 0, grid.size - 2)
    w = (x - grid[idx]) / (grid[idx + 1] - grid[idx])
    return idx, w


def shape_at(bridge: ModalBridge, mode_index: int, x, dof: str):
    """Value of a mode shape at span position(s) ``x`` for ``dof``.

    Returns 0 when ``dof`` does not match the mode kind.
    """
    dof = _DOF_ALIASES[dof]
    mode = bridge.modes[bridge.position(mode_index)]
    x = _check_x(bridge, x)
    if mode.dof != dof:
        return np.zeros_like(x) if x.ndim else 0.0
    idx, w = interpolation_weights(bridge.node_grid, x)
    value = (1.0 - w) * mode.shape[idx] + w * mode.shape[idx + 1]
    return value if x.ndim else float(value)


def shapes_at(bridge: ModalBridge, x, dof: str) -> np.ndarray:
    """(len(x), n_modes) matrix of all mode shapes at positions ``x``."""
    x = np.atleast_1d(_check_x(bridge, x))
    idx, w = interpolation_weights(bridge.node_grid, x)
    S = bridge.shape_matrix(dof)
    return (1.0 - w)[:, None] * S[:, idx].T + w[:, None] * S[:, idx + 1].T


def assemble_modal_matrices(bridge: ModalBridge) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    M = np.array([m.modal_mass for m in bridge.modes], dtype=float)
    omega = np.array([m.omega for m in bridge.modes])
    zeta = np.array([m.damping_ratio for m in bridge.modes])
    K = M * omega**2
    C = 2.0 * zeta * M * omega
    return M, C, K


def project_point_force(bridge: ModalBridge, x: float, force) -> np.ndarray:
    """Generalised force vector of a point force (F_h, F_p, F_alpha) at ``x``."""
    F = np.asarray(force, dtype=float)
    if F.shape != (3,):
        raise ValueError("force must have three components (F_h, F_p, F_alpha)")
    _check_x(bridge, x)
    Q = np.zeros(bridge.n_modes)
    for comp, dof in zip(F, DOFS):
        if comp != 0.0:
            Q += comp * shapes_at(bridge, x, dof)[0]
    return Q


def project_forces(bridge: ModalBridge, x, forces) -> np.ndarray:
    """Sum of the generalised forces of several point forces, shape (n, 3)."""
    forces = np.atleast_2d(np.asarray(forces, dtype=float))
    x = np.atleast_1d(x)
    Q = np.zeros(bridge.n_modes)
    for k, dof in enumerate(DOFS):
        Q += shapes_at(bridge, x, dof).T @ forces[:, k]
    return Q


def physical_response(bridge: ModalBridge, q, x) -> np.ndarray:
    """Deck (h, p, alpha) at position(s) ``x`` for modal coordinates ``q``.

    Returns shape (3,) for scalar ``x`` and (len(x), 3) otherwise.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (bridge.n_modes,):
        raise ValueError(f"expected {bridge.n_modes} modal coordinates, got {q.shape}")
    scalar = np.ndim(x) == 0
    out = np.stack([shapes_at(bridge, x, dof) @ q for dof in DOFS], axis=-1)
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# Bridge file format
# ---------------------------------------------------------------------------
#
#   # comment
#   [section]
#   B = 31.0
#   H = 4.30
#   mass = 22740        # kg/m
#   inertia = 2.47e6    # kg m^2/m
#
#   [grid]
#   main_span = 1624
#   side_spans = 535 535
#   x = 0 5.35 10.7 ...  (values may continue on following lines)
#
#   [mode]                (repeated, one block per mode)
#   index = 1
#   kind = vertical       # vertical | lateral | torsional
#   frequency_hz = 0.100
#   damping_ratio = 0.005
#   modal_mass = 1.846e7  # kg, or kg m^2 for torsional modes
#   shape = 0 0 ... 0.0193 ...
#
# Lists are whitespace or comma separated. A line without "=" continues the
# value of the previous key.

_SECTION_RE = re.compile(r"^\[(\w+)\]$")
_REQUIRED = {
    "section": ("B", "H", "mass", "inertia"),
    "grid": ("main_span", "x"),
    "mode": ("index", "kind", "frequency_hz", "damping_ratio", "modal_mass", "shape"),
}


def _parse_blocks(text: str, source: str):
    blocks = []  # (name, line, {key: (line, value)})
    current = None
    last_key = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            name = m.group(1)
            if name not in _REQUIRED:
                raise BridgeFileError(f"{source}:{lineno}: unknown section [{name}]")
            current = (name, lineno, {})
            blocks.append(current)
            last_key = None
            continue
        if current is None:
            raise BridgeFileError(f"{source}:{lineno}: content before first section")
        if "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            if key in current[2]:
                raise BridgeFileError(f"{source}:{lineno}: duplicate key {key!r}")
            current[2][key] = (lineno, value)
            last_key = key
        elif last_key is not None:
            ln, value = current[2][last_key]
            current[2][last_key] = (ln, value + " " + line)
        else:
            raise BridgeFileError(f"{source}:{lineno}: expected 'key = value'")
    return blocks


def _number(source, lineno, key, value) -> float:
    try:
        return float(value)
    except ValueError:
        raise BridgeFileError(f"{source}:{lineno}: field {key!r} is not a number: {value!r}") from None


def _numbers(source, lineno, key, value) -> np.ndarray:
    try:
        return np.array([float(v) for v in value.replace(",", " ").split()])
    except ValueError as exc:
        raise BridgeFileError(f"{source}:{lineno}: field {key!r}: {exc}") from None


def parse_bridge(text: str, source: str = "<string>") -> ModalBridge:
    blocks = _parse_blocks(text, source)
    for name, lineno, fields_ in blocks:
        missing = [k for k in _REQUIRED[name] if k not in fields_]
        if missing:
            raise BridgeFileError(f"{source}:{lineno}: [{name}] missing field(s) {', '.join(missing)}")

    sections = [b for b in blocks if b[0] == "section"]
    grids = [b for b in blocks if b[0] == "grid"]
    if len(sections) != 1 or len(grids) != 1:
        raise BridgeFileError(f"{source}: need exactly one [section] and one [grid] block")

    _, _, sf = sections[0]
    vals = {k: _number(source, sf[k][0], k, sf[k][1]) for k in sf}
    try:
        section = DeckSection(vals["B"], vals["H"], vals["mass"], vals["inertia"])
    except ValueError as exc:
        raise BridgeFileError(f"{source}:{sections[0][1]}: {exc}") from None

    _, gline, gf = grids[0]
    grid = _numbers(source, gf["x"][0], "x", gf["x"][1])
    main_span = _number(source, gf["main_span"][0], "main_span", gf["main_span"][1])
    side = ()
    if "side_spans" in gf:
        side = tuple(_numbers(source, gf["side_spans"][0], "side_spans", gf["side_spans"][1]))
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise BridgeFileError(f"{source}:{gf['x'][0]}: node grid must be strictly increasing")
    expected = main_span + sum(side)
    if not math.isclose(grid[-1] - grid[0], expected, rel_tol=1e-9, abs_tol=1e-6):
        raise BridgeFileError(
            f"{source}:{gline}: node grid spans {grid[-1] - grid[0]} m, spans add up to {expected} m"
        )

    modes = []
    seen = {}
    for _, mline, mf in (b for b in blocks if b[0] == "mode"):
        index_line, index_raw = mf["index"]
        try:
            index = int(index_raw)
        except ValueError:
            raise BridgeFileError(f"{source}:{index_line}: mode index is not an integer") from None
        if index in seen:
            raise BridgeFileError(
                f"{source}:{index_line}: duplicate mode index {index} (first defined at line {seen[index]})"
            )
        seen[index] = index_line
        kind = mf["kind"][1].lower()
        shape = _numbers(source, mf["shape"][0], "shape", mf["shape"][1])
        if shape.size != grid.size:
            raise BridgeFileError(
                f"{source}:{mf['shape'][0]}: mode {index} shape has {shape.size} values, grid has {grid.size}"
            )
        try:
            modes.append(
                Mode(
                    index=index,
                    kind=kind,
                    frequency=_number(source, mf["frequency_hz"][0], "frequency_hz", mf["frequency_hz"][1]),
                    damping_ratio=_number(source, mf["damping_ratio"][0], "damping_ratio", mf["damping_ratio"][1]),
                    shape=shape,
                    modal_mass=_number(source, mf["modal_mass"][0], "modal_mass", mf["modal_mass"][1]),
                )
            )
        except ValueError as exc:
            raise BridgeFileError(f"{source}:{mline}: {exc}") from None
    if not modes:
        raise BridgeFileError(f"{source}: no [mode] blocks")
    return ModalBridge(section, grid, main_span, side, tuple(modes), name=Path(source).stem)


def load_bridge(model_file) -> ModalBridge:
    path = Path(model_file)
    return parse_bridge(path.read_text(), str(path))


def format_bridge(bridge: ModalBridge) -> str:
    """Serialise a bridge in the file format read by :func:`load_bridge`."""

    def row(values, per_line=8):
        vals = [f"{v:.10g}" for v in values]
        return "\n    ".join(" ".join(vals[i:i + per_line]) for i in range(0, len(vals), per_line))

    s = bridge.section
    out = [
        "[section]",
        f"B = {s.width_B:.10g}",
        f"H = {s.depth_H:.10g}",
        f"mass = {s.mass_per_length:.10g}",
        f"inertia = {s.torsional_inertia_per_length:.10g}",
        "",
        "[grid]",
        f"main_span = {bridge.main_span:.10g}",
    ]
    if bridge.side_spans:
        out.append("side_spans = " + " ".join(f"{v:.10g}" for v in bridge.side_spans))
    out.append("x = " + row(bridge.node_grid))
    for m in bridge.modes:
        out += [
            "",
            "[mode]",
            f"index = {m.index}",
            f"kind = {m.kind}",
            f"frequency_hz = {m.frequency:.10g}",
            f"damping_ratio = {m.damping_ratio:.10g}",
            f"modal_mass = {m.modal_mass:.10g}",
            "shape = " + row(m.shape),
        ]
    return "\n".join(out) + "\n"


def synthetic_suspension_bridge(
    section: DeckSection,
    main_span: float = 1624.0,
    side_span: float = 535.0,
    n_vertical: int = 14,
    n_lateral: int = 4,
    n_torsional: int = 12,
    f_vertical: float = 0.100,
    f_lateral: float = 0.052,
    f_torsional: float = 0.278,
    damping_ratio: float = 0.005,
    stiffening: float = 0.005,
    main_intervals: int = 200,
    side_intervals: int = 100,
) -> ModalBridge:
    """Bridge with sinusoidal main-span modes, zero on the side spans.

    Vertical and torsional families follow ``f1 * n * sqrt(1 + s (n^2 - 1))``
    (cable-dominated low modes, beam stiffening at higher orders); lateral
    modes scale as ``n^2``. Modal masses integrate shape^2 against the section
    mass or torsional inertia with the trapezoid rule on the node grid.
    """
    left = np.linspace(0.0, side_span, side_intervals + 1)
    main = np.linspace(side_span, side_span + main_span, main_intervals + 1)
    right = np.linspace(side_span + main_span, 2 * side_span + main_span, side_intervals + 1)
    grid = np.concatenate([left, main[1:], right[1:]])
    on_main = (grid >= side_span) & (grid <= side_span + main_span)
    xi = np.where(on_main, (grid - side_span) / main_span, 0.0)

    def shape(n):
        s = np.where(on_main, np.sin(n * np.pi * xi), 0.0)
        s[np.abs(s) < 1e-15] = 0.0
        return s

    families = []
    for n in range(1, n_vertical + 1):
        families.append(("vertical", f_vertical * n * math.sqrt(1 + stiffening * (n * n - 1)), n))
    for n in range(1, n_lateral + 1):
        families.append(("lateral", f_lateral * n * n, n))
    for n in range(1, n_torsional + 1):
        families.append(("torsional", f_torsional * n * math.sqrt(1 + stiffening * (n * n - 1)), n))
    families.sort(key=lambda item: item[1])

    modes = []
    for index, (kind, freq, n) in enumerate(families, start=1):
        phi = shape(n)
        density = section.torsional_inertia_per_length if kind == "torsional" else section.mass_per_length
        modal_mass = density * trapezoid(phi**2, grid)
        modes.append(Mode(index, kind, round(freq, 6), damping_ratio, phi, float(modal_mass)))
    return ModalBridge(section, grid, main_span, (side_span, side_span), tuple(modes), name="synthetic")

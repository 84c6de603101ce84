"""Correlated Gaussian random fields: turbulent wind and road roughness.

Both generators use the spectral representation method. For every discrete
frequency the cross-spectral matrix between points is ``S(f) * R(f)`` where
``R`` is an exponential coherence matrix ``exp(-a(f) |x_i - x_j|)``. For points
ordered along a line this matrix is the covariance of a first-order Markov
chain, so its lower Cholesky factor is applied by the recursion::

    X_0 = e_0
    X_i = rho_i X_{i-1} + sqrt(1 - rho_i^2) e_i,   rho_i = exp(-a(f) dx_i)

with unit-modulus random phases ``e_i``. This costs O(points) per frequency
instead of a dense factorisation. :func:`coherence_factor` exposes the factor
so it can be checked against ``numpy.linalg.cholesky``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

COMPONENTS = ("u", "v", "w")

# ISO 8608 displacement PSD class centres at n0 = 0.1 cycles/m [m^3]
ISO8608_N0 = 0.1
ISO8608_CLASSES = {c: 16e-6 * 4.0**k for k, c in enumerate("ABCDEFGH")}

DEFAULT_MEMORY_BUDGET = 2 * 1024**3


class FieldResourceError(MemoryError):
    """Requested synthesis exceeds the configured memory budget."""


class FieldDomainError(ValueError):
    """Query outside the domain of a generated field."""


@dataclass(frozen=True)
class TurbulenceSpec:
    mean_speed_U: float
    intensity: tuple[float, float, float] = (0.10, 0.08, 0.05)
    length_scale: tuple[float, float, float] = (170.0, 60.0, 30.0)
    davenport_decay: tuple[float, float, float] = (10.0, 10.0, 10.0)
    air_density: float = 1.25

    def __post_init__(self):
        if not self.mean_speed_U > 0:
            raise ValueError("mean wind speed must be positive")
        if any(i < 0 for i in self.intensity):
            raise ValueError("turbulence intensities must be non-negative")
        if any(L <= 0 for L in self.length_scale):
            raise ValueError("turbulence length scales must be positive")
        if any(C <= 0 for C in self.davenport_decay):
            raise ValueError("Davenport decay coefficients must be positive")

    def sigma(self, component: str) -> float:
        return self.intensity[COMPONENTS.index(component)] * self.mean_speed_U


def von_karman_psd(f, spec: TurbulenceSpec, component: str):
    """One-sided von Karman velocity spectrum [(m/s)^2/Hz]."""
    k = COMPONENTS.index(component)
    sigma2 = (spec.intensity[k] * spec.mean_speed_U) ** 2
    a = spec.length_scale[k] / spec.mean_speed_U
    f = np.asarray(f, dtype=float)
    fn = f * a
    if component == "u":
        S = 4.0 * sigma2 * a / (1.0 + 70.8 * fn**2) ** (5.0 / 6.0)
    else:
        S = 4.0 * sigma2 * a * (1.0 + 755.2 * fn**2) / (1.0 + 283.2 * fn**2) ** (11.0 / 6.0)
    return S if S.ndim else float(S)


def davenport_coherence(f, dx, U: float, C: float):
    return np.exp(-C * np.asarray(f, dtype=float) * np.abs(np.asarray(dx, dtype=float)) / U)


def coherence_factor(positions, decay_rate: float) -> np.ndarray:
    """Lower factor L with L L^T = exp(-decay_rate |x_i - x_j|), points sorted.

    ``decay_rate`` is the coherence exponent per metre at one frequency
    (``C f / U`` for Davenport).
    """
    x = np.asarray(positions, dtype=float)
    n = x.size
    rho = np.exp(-decay_rate * np.diff(x))
    L = np.zeros((n, n))
    L[0, 0] = 1.0
    for i in range(1, n):
        L[i, :i] = rho[i - 1] * L[i - 1, :i]
        L[i, i] = math.sqrt(max(0.0, 1.0 - rho[i - 1] ** 2))
    return L


def _correlated_phases(rng, positions_sorted, decay, n_freq):
    """Markov-chain factor applied to random unit phasors.

    ``decay`` has shape (n_freq,) and is the coherence exponent per metre.
    Returns complex array (n_points, n_freq).
    """
    n_pts = positions_sorted.size
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(n_pts, n_freq))
    e = np.exp(1j * theta)
    X = np.empty((n_pts, n_freq), dtype=complex)
    X[0] = e[0]
    gaps = np.diff(positions_sorted)
    for i in range(1, n_pts):
        rho = np.exp(-decay * gaps[i - 1])
        X[i] = rho * X[i - 1] + np.sqrt(1.0 - rho**2) * e[i]
    return X


def _synthesise(rng, positions, one_sided_psd, freqs, decay, n_samples):
    """Real fields (n_points, n_samples) with the given PSD and coherence."""
    positions = np.asarray(positions, dtype=float)
    order = np.argsort(positions, kind="stable")
    df = freqs[1] - freqs[0] if freqs.size > 1 else 0.0
    amp = np.sqrt(2.0 * one_sided_psd * df)
    X = _correlated_phases(rng, positions[order], decay, freqs.size)
    spec = np.zeros((positions.size, n_samples // 2 + 1), dtype=complex)
    k = np.arange(1, freqs.size + 1)
    spec[:, k] = 0.5 * n_samples * amp * X
    out = np.empty((positions.size, n_samples))
    out[order] = np.fft.irfft(spec, n=n_samples, axis=1)
    return out


def _positive_freqs(n_samples: int, step: float) -> np.ndarray:
    # drop DC and (for even n) the Nyquist bin, whose phase cannot be random
    n_pos = (n_samples - 1) // 2
    return np.arange(1, n_pos + 1) / (n_samples * step)


@dataclass(frozen=True)
class WindField:
    station_x: np.ndarray
    dt: float
    duration: float
    u: np.ndarray  # (n_time, n_stations)
    v: np.ndarray
    w: np.ndarray
    seed: object = None
    mean_speed_U: float = 0.0

    @property
    def n_samples(self) -> int:
        return self.u.shape[0]

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    def component(self, name: str) -> np.ndarray:
        return {"u": self.u, "v": self.v, "w": self.w}[name]


def generate_wind_field(
    spec: TurbulenceSpec,
    stations,
    dt: float,
    duration: float,
    seed,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> WindField:
    """Three-component turbulence at ``stations`` over ``duration`` seconds.

    Components are mutually independent; each is homogeneous along the span
    with von Karman spectrum and Davenport coherence. Frequencies run from
    1/duration up to (below) Nyquist.
    """
    stations = np.asarray(stations, dtype=float)
    if dt <= 0 or duration <= 0:
        raise ValueError("dt and duration must be positive")
    n = int(round(duration / dt))
    if not math.isclose(n * dt, duration, rel_tol=1e-9):
        raise ValueError("duration must be a multiple of dt")
    n_freq = (n - 1) // 2
    need = stations.size * (n // 2 + 1) * 16 * 3 + 3 * stations.size * n * 8
    if need > memory_budget:
        raise FieldResourceError(
            f"wind synthesis needs ~{need / 1024**2:.0f} MiB for {stations.size} stations x "
            f"{n_freq} frequencies, budget is {memory_budget / 1024**2:.0f} MiB"
        )
    rng = np.random.default_rng(seed)
    freqs = _positive_freqs(n, dt)
    out = {}
    for k, comp in enumerate(COMPONENTS):
        psd = von_karman_psd(freqs, spec, comp)
        decay = spec.davenport_decay[k] * freqs / spec.mean_speed_U
        if spec.intensity[k] == 0.0:
            # keep the random stream aligned with the non-degenerate case
            rng.uniform(size=(stations.size, freqs.size))
            out[comp] = np.zeros((n, stations.size))
            continue
        out[comp] = np.ascontiguousarray(_synthesise(rng, stations, psd, freqs, decay, n).T)
    return WindField(stations.copy(), dt, n * dt, out["u"], out["v"], out["w"], seed, spec.mean_speed_U)


# ---------------------------------------------------------------------------
# Road roughness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoughnessSpec:
    iso_class: str = "B"
    reference_psd: float | None = None
    waviness_exponent: float = 2.0
    transverse_decay: float = 4.0
    wavenumber_band: tuple[float, float] = (0.01, 4.0)

    def __post_init__(self):
        cls = self.iso_class.upper()
        if cls not in ISO8608_CLASSES:
            raise ValueError(f"unknown ISO 8608 class {self.iso_class!r}")
        object.__setattr__(self, "iso_class", cls)
        if self.reference_psd is None:
            object.__setattr__(self, "reference_psd", ISO8608_CLASSES[cls])
        centre = ISO8608_CLASSES[cls]
        if not (centre / 2 <= self.reference_psd <= centre * 2):
            raise ValueError(f"G_d(n0) = {self.reference_psd} outside ISO 8608 class {cls}")
        lo, hi = self.wavenumber_band
        if not 0 < lo < hi:
            raise ValueError("wavenumber band must satisfy 0 < n_min < n_max")
        if self.transverse_decay < 0:
            raise ValueError("transverse decay must be non-negative")


def iso8608_psd(n, spec: RoughnessSpec):
    """Displacement PSD G_d(n) [m^3] at spatial frequency n [cycles/m]."""
    n = np.asarray(n, dtype=float)
    G = spec.reference_psd * (n / ISO8608_N0) ** (-spec.waviness_exponent)
    return G if G.ndim else float(G)


@dataclass(frozen=True)
class RoughnessSurface:
    x0: float
    dx: float
    track_y: np.ndarray          # lateral position of every track
    z: np.ndarray                # (n_tracks, n_x)
    lane_offsets: np.ndarray
    track_gap: float
    seed: object = None

    @property
    def x(self) -> np.ndarray:
        return self.x0 + np.arange(self.z.shape[1]) * self.dx

    @property
    def length(self) -> float:
        return (self.z.shape[1] - 1) * self.dx

    def track_index(self, lane: int, side: str) -> int:
        """Track of the left (+y) or right (-y) wheel path of a lane."""
        return 2 * lane + (0 if side == "left" else 1)

    def tracks(self, lane: int) -> tuple[np.ndarray, np.ndarray]:
        return self.z[2 * lane], self.z[2 * lane + 1]


def generate_roughness(
    spec: RoughnessSpec,
    length: float,
    dx: float,
    lanes,
    track_gap: float,
    seed,
    x0: float = 0.0,
) -> RoughnessSurface:
    """Two wheel-path profiles per lane, all drawn from one coherent surface.

    Tracks sit at ``lane +/- track_gap / 2``. Between any two tracks the
    wavenumber coherence is ``exp(-transverse_decay * n * |dy|)``.
    """
    n_lo, n_hi = spec.wavenumber_band
    if dx > 1.0 / (2.0 * n_hi) * (1 + 1e-12):
        raise ValueError(f"dx = {dx} m cannot resolve n_max = {n_hi} cycles/m")
    lanes = np.asarray(lanes, dtype=float)
    n = int(math.ceil(length / dx)) + 1
    if n % 2:
        n += 1
    track_y = np.empty(2 * lanes.size)
    track_y[0::2] = lanes + 0.5 * track_gap
    track_y[1::2] = lanes - 0.5 * track_gap
    rng = np.random.default_rng(seed)
    freqs = _positive_freqs(n, dx)
    G = np.where((freqs >= n_lo) & (freqs <= n_hi), iso8608_psd(freqs, spec), 0.0)
    decay = spec.transverse_decay * freqs
    z = _synthesise(rng, track_y, G, freqs, decay, n)
    return RoughnessSurface(float(x0), float(dx), track_y, z, lanes, float(track_gap), seed)


# ---------------------------------------------------------------------------
# Interpolation
# ---------------------------------------------------------------------------


def _bracket(grid_start, step, count, q, what):
    s = (np.asarray(q, dtype=float) - grid_start) / step
    if np.any(s < -1e-9) or np.any(s > count - 1 + 1e-9):
        raise FieldDomainError(f"{what} outside field domain")
    s = np.clip(s, 0.0, count - 1)
    i = np.minimum(np.floor(s).astype(int), count - 2)
    return i, s - i


def sample_wind(field_: WindField, x, t, component: str = "u"):
    """Linear interpolation in station position and time."""
    data = field_.component(component)
    xs = field_.station_x
    x = np.asarray(x, dtype=float)
    if np.any(x < xs[0] - 1e-9) or np.any(x > xs[-1] + 1e-9):
        raise FieldDomainError("position outside wind station range")
    it, wt = _bracket(0.0, field_.dt, field_.n_samples, t, "time")
    j = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
    wx = (x - xs[j]) / (xs[j + 1] - xs[j])
    lo = (1 - wx) * data[it, j] + wx * data[it, j + 1]
    hi = (1 - wx) * data[it + 1, j] + wx * data[it + 1, j + 1]
    out = (1 - wt) * lo + wt * hi
    return out if np.ndim(out) else float(out)


def sample_roughness(surface: RoughnessSurface, track: int, x):
    i, w = _bracket(surface.x0, surface.dx, surface.z.shape[1], x, "position")
    z = surface.z[track]
    out = (1 - w) * z[i] + w * z[i + 1]
    return out if np.ndim(out) else float(out)


def roughness_slope(surface: RoughnessSurface, track, x):
    """dz/dx of the piecewise-linear profile (vectorised over track and x)."""
    i, _ = _bracket(surface.x0, surface.dx, surface.z.shape[1], x, "position")
    z = surface.z
    return (z[track, i + 1] - z[track, i]) / surface.dx


def sample_field(field_, position, coord, component: str = "u"):
    """Query a wind field at (x, t) or a roughness track at x.

    For a :class:`WindField`, ``position`` is the span coordinate and
    ``coord`` the time. For a :class:`RoughnessSurface`, ``position`` is the
    track index and ``coord`` the longitudinal coordinate.
    """
    if isinstance(field_, WindField):
        return sample_wind(field_, position, coord, component)
    return sample_roughness(field_, int(position), coord)


# ---------------------------------------------------------------------------
# CSV export / import
# ---------------------------------------------------------------------------


def export_wind_csv(field_: WindField, path) -> None:
    """Columns: t [s], then u/v/w [m/s] per station, named ``<comp>@<x>``."""
    header = ["t"] + [f"{c}@{x:.12g}" for c in COMPONENTS for x in field_.station_x]
    data = np.column_stack([field_.time, field_.u, field_.v, field_.w])
    _write_csv(path, header, data, ["# wind turbulence, t in s, velocities in m/s",
                                    f"# mean_speed_U={field_.mean_speed_U!r} dt={field_.dt!r}"])


def import_wind_csv(path) -> WindField:
    header, data, meta = _read_csv(path)
    ns = (len(header) - 1) // 3
    xs = np.array([float(h.split("@", 1)[1]) for h in header[1:ns + 1]])
    dt = float(meta.get("dt", data[1, 0] - data[0, 0]))
    U = float(meta.get("mean_speed_U", 0.0))
    u, v, w = (np.ascontiguousarray(data[:, 1 + k * ns:1 + (k + 1) * ns]) for k in range(3))
    return WindField(xs, dt, data.shape[0] * dt, u, v, w, None, U)


def export_roughness_csv(surface: RoughnessSurface, path) -> None:
    """Columns: x [m], then elevation z [m] per track, named ``z@<y>``."""
    header = ["x"] + [f"z@{y:.12g}" for y in surface.track_y]
    data = np.column_stack([surface.x, surface.z.T])
    _write_csv(path, header, data, ["# road roughness, x and z in m, tracks named by lateral offset y in m",
                                    f"# track_gap={surface.track_gap!r} dx={surface.dx!r}"])


def import_roughness_csv(path) -> RoughnessSurface:
    header, data, meta = _read_csv(path)
    track_y = np.array([float(h.split("@", 1)[1]) for h in header[1:]])
    gap = float(meta.get("track_gap", abs(track_y[0] - track_y[1])))
    dx = float(meta.get("dx", data[1, 0] - data[0, 0]))
    lanes = 0.5 * (track_y[0::2] + track_y[1::2])
    return RoughnessSurface(float(data[0, 0]), dx, track_y, np.ascontiguousarray(data[:, 1:].T), lanes, gap)


def _write_csv(path, header, data, comments):
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(c + "\n")
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def _read_csv(path):
    meta = {}
    header = None
    with open(path) as fh:
        while True:
            pos = fh.tell()
            line = fh.readline()
            if not line.startswith("#"):
                fh.seek(pos)
                break
            for token in line[1:].split():
                if "=" in token:
                    k, v = token.split("=", 1)
                    meta[k] = v
        header = next(csv.reader([fh.readline()]))
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data, meta

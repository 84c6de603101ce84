"""Closed-form reference solutions used to check the simulator.

These are independent of the time integrator: analytic SDOF responses and
the classical modal solution for constant forces crossing a simply supported
span.
"""

from __future__ import annotations

import math

import numpy as np

from .bridge_model import ModalBridge


def sdof_steady_amplitude(m: float, c: float, k: float, force_amplitude: float, omega: float) -> float:
    """Steady-state displacement amplitude under ``F0 sin(omega t)``."""
    return force_amplitude / math.hypot(k - m * omega**2, c * omega)


def sdof_sine_from_rest(omega_n: float, zeta: float, force_per_mass: float, Omega: float, tau):
    """Response and velocity of ``x'' + 2 zeta w x' + w^2 x = a sin(W t)`` from rest."""
    tau = np.asarray(tau, dtype=float)
    wd = omega_n * math.sqrt(1 - zeta**2)
    D = (omega_n**2 - Omega**2) ** 2 + (2 * zeta * omega_n * Omega) ** 2
    A = force_per_mass * (omega_n**2 - Omega**2) / D
    B = -force_per_mass * 2 * zeta * omega_n * Omega / D
    C1 = -B
    C2 = (zeta * omega_n * C1 - A * Omega) / wd
    e = np.exp(-zeta * omega_n * tau)
    x = A * np.sin(Omega * tau) + B * np.cos(Omega * tau) + e * (C1 * np.cos(wd * tau) + C2 * np.sin(wd * tau))
    v = (A * Omega * np.cos(Omega * tau) - B * Omega * np.sin(Omega * tau)
         + e * ((-zeta * omega_n * C1 + wd * C2) * np.cos(wd * tau) + (-zeta * omega_n * C2 - wd * C1) * np.sin(wd * tau)))
    return x, v


def sdof_free(omega_n: float, zeta: float, x0, v0, s):
    wd = omega_n * math.sqrt(1 - zeta**2)
    s = np.asarray(s, dtype=float)
    return np.exp(-zeta * omega_n * s) * (x0 * np.cos(wd * s) + (v0 + zeta * omega_n * x0) / wd * np.sin(wd * s))


def moving_loads_midspan(bridge: ModalBridge, loads, offsets, speed: float, t_entry: float, t) -> np.ndarray:
    """Main-span midspan deflection (upward positive) under constant downward loads.

    ``loads[i]`` [N] trails the reference point by ``offsets[i]`` [m]; the
    reference point reaches x = 0 at ``t_entry`` and moves toward +x. Each
    vertical mode is taken as ``sin(n pi xi)`` over the main span, as for a
    simply supported beam, and forced by ``-P sin(n pi v t' / L)`` while the
    load is on the span, with free damped vibration afterwards.
    """
    t = np.asarray(t, dtype=float)
    a = bridge.main_span_start
    Lm = bridge.main_span
    out = np.zeros_like(t)
    for mode in bridge.modes_of_kind("vertical"):
        shape = mode.shape
        # half-wave number from the sign changes of the main-span shape
        on = (bridge.node_grid > a) & (bridge.node_grid < a + Lm)
        n = int(np.count_nonzero(np.diff(np.sign(shape[on][np.abs(shape[on]) > 1e-9])) != 0)) + 1
        w = mode.omega
        z = mode.damping_ratio
        Omega = n * math.pi * speed / Lm
        phi_mid = math.sin(n * math.pi * 0.5)
        q = np.zeros_like(t)
        for P, d in zip(loads, offsets):
            t_on = t_entry + (a + d) / speed
            t_off = t_on + Lm / speed
            f = -P / mode.modal_mass
            during = (t >= t_on) & (t <= t_off)
            x, _ = sdof_sine_from_rest(w, z, f, Omega, t[during] - t_on)
            q[during] += x
            after = t > t_off
            xe, ve = sdof_sine_from_rest(w, z, f, Omega, np.array([Lm / speed]))
            q[after] += sdof_free(w, z, xe[0], ve[0], t[after] - t_off)
        out += phi_mid * q
    return out


def log_decrement_damping(signal, dt: float) -> float:
    """Damping ratio from successive positive peaks of a free decay."""
    x = np.asarray(signal, dtype=float)
    i = np.flatnonzero((x[1:-1] > x[:-2]) & (x[1:-1] >= x[2:]) & (x[1:-1] > 0)) + 1
    if i.size < 3:
        raise ValueError("need at least three peaks")
    delta = np.log(x[i[0]] / x[i[-1]]) / (i.size - 1)
    return delta / math.sqrt(4 * math.pi**2 + delta**2)


# ---------------------------------------------------------------------------
# Oracle suite for the command line
# ---------------------------------------------------------------------------


def _check_sdof():
    from .coupled_solver import simulate_modal

    m, zeta, fn = 1.0, 0.005, 0.1
    w = 2 * math.pi * fn
    T = 1 / fn
    dt = T / 200
    n = int(round(400 * T / dt))
    t = np.arange(n) * dt
    q = simulate_modal([m], [2 * zeta * w * m], [w**2 * m], np.sin(w * t)[:, None], dt)[:, 0]
    amp = np.abs(q[-int(round(10 * T / dt)):]).max()
    ref = sdof_steady_amplitude(m, 2 * zeta * w * m, w**2 * m, 1.0, w)
    err = amp / ref - 1
    yield "SDOF resonant amplitude", abs(err) < 5e-3, f"relative error {err:+.2e} (limit 5e-3)"

    q = simulate_modal([m], [2 * zeta * w * m], [w**2 * m], np.zeros((int(round(20 * T / dt)), 1)), dt, q0=[1.0])
    z = log_decrement_damping(q[:, 0], dt)
    yield "free-decay damping", abs(z / zeta - 1) < 0.02, f"zeta {z:.6f} vs {zeta} (limit 2%)"


def _check_vehicles():
    from .vehicles import default_catalog_path, load_catalog, natural_frequencies, quarter_car, quarter_car_frequencies
    from .vehicles import static_wheel_loads

    args = (300.0, 40.0, 20000.0, 200000.0)
    ref = np.array(quarter_car_frequencies(*args))
    got = np.sort(natural_frequencies(quarter_car(args[0], args[1], args[2], 0.0, args[3])))
    err = np.max(np.abs(got / ref - 1))
    yield "quarter-car frequencies", err < 1e-9, f"max relative error {err:.1e} (limit 1e-9)"
    worst = 0.0
    for p in load_catalog(default_catalog_path()).values():
        worst = max(worst, abs(static_wheel_loads(p).sum() / p.weight - 1))
    yield "static wheel loads", worst < 1e-9, f"max |sum/weight - 1| {worst:.1e} (limit 1e-9)"


def _check_moving_load(quick: bool):
    from .coupled_solver import SimulationConfig, load_resources, run
    from .traffic import single_vehicle_stream
    from .vehicles import static_wheel_loads

    cfg = SimulationConfig(scenario="T", case=3, duration=200.0, run_up=0.0, record_every=1,
                           roughness_enabled=False)
    bridge, _, catalog = load_resources(cfg)
    prm = catalog["truck3"]
    v = 70 / 3.6
    stream = single_vehicle_stream(prm, v, bridge.total_length, 5.0, 205.0, lane=1, t0=0.0)
    hist = run(cfg, stream=stream, trace_vehicle=0)
    sim = hist.h[:, hist.station_index(bridge.midspan)]
    ref = moving_loads_midspan(bridge, static_wheel_loads(prm), prm.axle_offsets_from_front(), v, 5.0, hist.t)
    err = sim.min() / ref.min() - 1
    yield "moving-load midspan peak", abs(err) < 0.02, f"{sim.min():.5f} m vs {ref.min():.5f} m ({err:+.2e}, limit 2%)"
    mean_force = np.nanmean(hist.trace) / prm.weight - 1
    yield "mean contact force on flexible deck", abs(mean_force) < 5e-3, f"mean/weight - 1 = {mean_force:+.2e}"


def _check_linearity(quick: bool):
    from dataclasses import replace

    from .coupled_solver import SimulationConfig, run, superpose

    duration = 60.0 if quick else 600.0
    base = SimulationConfig(case=3, duration=duration, linear_oracle=True)
    h = {s: run(replace(base, scenario=s)) for s in ("W", "T", "WT")}
    wpt = superpose(h["W"], h["T"])
    worst = 0.0
    for d in ("h", "p", "alpha"):
        a, b = h["WT"].dof(d), wpt.dof(d)
        worst = max(worst, np.abs(a - b).max() / np.abs(b).max())
    yield f"linearity WT = W+T ({duration:.0f} s)", worst < 1e-8, f"max relative difference {worst:.1e} (limit 1e-8)"


def _check_wind(quick: bool):
    from scipy import signal

    from .analysis import band_average
    from .stochastic_fields import TurbulenceSpec, davenport_coherence, generate_wind_field, von_karman_psd

    spec = TurbulenceSpec(20.0)
    R = 20
    fields = [generate_wind_field(spec, [0.0, 20.0, 100.0], 0.05, 600.0, 7000 + r) for r in range(R)]
    worst = 0.0
    for c in "uvw":
        acc = 0.0
        for fld in fields:
            f, p = signal.welch(fld.component(c)[:, 0], fs=20.0, nperseg=2048)
            acc = acc + p / R
        band = (f >= 0.01) & (f <= 1.0)
        fc, est = band_average(f[band], acc[band])
        _, tgt = band_average(f[band], von_karman_psd(f[band], spec, c))
        worst = max(worst, np.max(np.abs(est / tgt - 1)))
    yield "wind PSD (20 realisations)", worst < 0.10, f"max band error {worst:.3f} (limit 0.10)"
    worst = 0.0
    for c in "uvw":
        for j, dx in ((1, 20.0), (2, 100.0)):
            sxy = sxx = syy = 0.0
            for fld in fields:
                x, y = fld.component(c)[:, 0], fld.component(c)[:, j]
                f, a = signal.csd(x, y, fs=20.0, nperseg=2048)
                sxy, sxx, syy = sxy + a, sxx + signal.welch(x, fs=20.0, nperseg=2048)[1], \
                    syy + signal.welch(y, fs=20.0, nperseg=2048)[1]
            band = (f >= 0.02) & (f <= 0.3)
            _, msc = band_average(f[band], np.abs(sxy[band]) ** 2 / (sxx[band] * syy[band]))
            _, tgt = band_average(f[band], davenport_coherence(f[band], dx, 20.0, 10.0) ** 2)
            worst = max(worst, np.max(np.abs(msc - tgt)))
    yield "wind coherence 20 m / 100 m", worst < 0.1, f"max abs error {worst:.3f} (limit 0.1)"


def _check_roughness(quick: bool):
    from scipy import signal

    from .analysis import band_average
    from .stochastic_fields import RoughnessSpec, generate_roughness, iso8608_psd

    spec = RoughnessSpec()
    R = 20
    lanes = [-5.625, -1.875, 1.875, 5.625]
    surfs = [generate_roughness(spec, 2754.0, 0.1, lanes, 1.8, 9000 + r) for r in range(R)]
    acc = 0.0
    for s in surfs:
        f, p = signal.welch(s.z[0], fs=10.0, nperseg=4096)
        acc = acc + p / R
    band = (f >= 0.02) & (f <= 2.0)
    _, est = band_average(f[band], acc[band])
    _, tgt = band_average(f[band], iso8608_psd(f[band], spec))
    err = np.max(np.abs(est / tgt - 1))
    yield "roughness PSD class B", err < 0.15, f"max band error {err:.3f} (limit 0.15)"
    zmax = max(np.abs(s.z).max() for s in surfs) * 100
    yield "roughness extremes", 1.0 <= zmax <= 6.0, f"max |z| {zmax:.2f} cm (range 1-6 cm)"


def _check_traffic(quick: bool):
    from .traffic import TrafficConfig, generate_arrivals

    cfg = TrafficConfig()
    counts = np.array([sum(len(lane) for lane in generate_arrivals(cfg, 600.0, s)) for s in range(50)])
    lam = cfg.daily_volume / 86400 * 600.0  # all four lanes together
    sigma = math.sqrt(lam / counts.size)
    dev = (counts.mean() - lam) / sigma
    yield "traffic arrival counts", abs(dev) < 3, f"mean {counts.mean():.1f} vs {lam:.1f} ({dev:+.2f} sigma)"


def run_oracle_suite(quick: bool = True) -> list[tuple[str, bool, str]]:
    """Evaluate the analytic and statistical oracle checks; returns (name, passed, detail)."""
    results = []
    for gen in (_check_sdof(), _check_vehicles(), _check_moving_load(quick), _check_linearity(quick),
                _check_wind(quick), _check_roughness(quick), _check_traffic(quick)):
        try:
            results.extend(gen)
        except Exception as e:  # report and keep going
            results.append((getattr(gen, "__name__", "oracle"), False, f"error: {e}"))
    return results

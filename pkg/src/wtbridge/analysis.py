"""Envelopes, spectra, scenario comparison and case study outputs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import welch

from .coupled_solver import ResponseHistory, superpose


class AnalysisError(ValueError):
    pass


@dataclass
class Envelope:
    station_x: np.ndarray
    min_h: np.ndarray
    max_h: np.ndarray
    min_alpha: np.ndarray
    max_alpha: np.ndarray
    n_realisations: int
    percentile: float | None = None

    def bounds(self, dof: str) -> tuple[np.ndarray, np.ndarray]:
        if dof == "h":
            return self.min_h, self.max_h
        if dof in ("alpha", "α"):
            return self.min_alpha, self.max_alpha
        raise AnalysisError(f"unknown dof {dof!r}")

    def at(self, x: float) -> int:
        return int(np.argmin(np.abs(self.station_x - x)))


def _check_aligned(histories):
    if not histories:
        raise AnalysisError("no histories given")
    x = histories[0].station_x
    for h in histories[1:]:
        if not np.array_equal(h.station_x, x):
            raise AnalysisError("station grids differ between histories")


def envelope(histories: list[ResponseHistory], percentile: float | None = None) -> Envelope:
    """Per-station min/max of h and alpha over all times and realisations.

    With ``percentile`` (e.g. 99) the bounds are the ``100 - p`` and ``p``
    percentiles of the pooled samples instead.
    """
    _check_aligned(histories)
    out = {}
    for dof in ("h", "alpha"):
        data = [h.dof(dof) for h in histories]
        if percentile is None:
            lo = np.min([d.min(axis=0) for d in data], axis=0)
            hi = np.max([d.max(axis=0) for d in data], axis=0)
        else:
            pooled = np.concatenate(data, axis=0)
            lo, hi = np.percentile(pooled, [100 - percentile, percentile], axis=0)
        out[dof] = (lo, hi)
    return Envelope(histories[0].station_x.copy(), *out["h"], *out["alpha"], len(histories), percentile)


def extreme(values: np.ndarray) -> float:
    """Value of largest magnitude (sign kept)."""
    values = np.asarray(values)
    return float(values.flat[np.argmax(np.abs(values))])


def midspan_extreme(env: Envelope, x_mid: float, dof: str = "h") -> float:
    lo, hi = env.bounds(dof)
    i = env.at(x_mid)
    return float(lo[i]) if abs(lo[i]) >= abs(hi[i]) else float(hi[i])


def width_metric(env: Envelope, dof: str = "h", level: float = 0.9, resolution: int = 20001) -> float:
    """Fraction of the station range where the governing envelope is within ``level`` of its peak.

    The governing side is the bound with the larger peak magnitude; the
    envelope is interpolated linearly between stations.
    """
    lo, hi = env.bounds(dof)
    side = lo if np.max(np.abs(lo)) >= np.max(np.abs(hi)) else hi
    x = env.station_x
    fine = np.linspace(x[0], x[-1], resolution)
    mag = np.abs(np.interp(fine, x, side))
    peak = mag.max()
    if peak == 0:
        return 0.0
    return float(np.mean(mag >= level * peak))


@dataclass
class SpectrumEstimate:
    frequency: np.ndarray
    psd: np.ndarray
    nperseg: int
    noverlap: int
    window: str
    variance: float

    @property
    def df(self) -> float:
        return float(self.frequency[1] - self.frequency[0])

    @property
    def integral(self) -> float:
        return float(np.sum(self.psd) * self.df)

    @property
    def parseval_ratio(self) -> float:
        return self.integral / self.variance if self.variance > 0 else math.nan

    def peak_frequency(self, f_min: float = 0.0, f_max: float = math.inf) -> float:
        band = (self.frequency > f_min) & (self.frequency <= f_max)
        if not band.any():
            raise AnalysisError("no frequency bins in the requested band")
        f = self.frequency[band]
        return float(f[np.argmax(self.psd[band])])


def welch_psd(signal, dt: float, segments: int = 8, overlap: float = 0.5, window: str = "hann") -> SpectrumEstimate:
    """One-sided averaged modified periodogram.

    Segment length defaults to an eighth of the record. The record mean is
    removed once; segments are not detrended individually so slow content
    stays in the lowest bins and the integral matches the variance.
    """
    x = np.asarray(signal, dtype=float)
    nperseg = x.size // segments
    if nperseg < 2 or x.size < 2 * nperseg:
        raise AnalysisError(f"signal of {x.size} samples is too short for {segments} segments")
    x = x - x.mean()
    noverlap = int(nperseg * overlap)
    f, p = welch(x, fs=1.0 / dt, window=window, nperseg=nperseg, noverlap=noverlap, detrend=False)
    return SpectrumEstimate(f, p, nperseg, noverlap, window, float(np.var(x)))


def ensemble_psd(signals, dt: float, **kwargs) -> SpectrumEstimate:
    """Average of :func:`welch_psd` over equally long realisations."""
    ests = [welch_psd(s, dt, **kwargs) for s in signals]
    e = ests[0]
    return SpectrumEstimate(e.frequency, np.mean([s.psd for s in ests], axis=0), e.nperseg, e.noverlap,
                            e.window, float(np.mean([s.variance for s in ests])))


def band_average(f, values, per_decade: int = 10, min_bins: int = 4):
    """Average ``values`` over log-spaced bands holding at least ``min_bins`` bins.

    Returns band centre frequencies (mean of the member bins) and band means.
    Bins at or below zero frequency are ignored.
    """
    f = np.asarray(f, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = f > 0
    f, values = f[keep], values[keep]
    if f.size == 0:
        return np.zeros(0), np.zeros(0)
    df = f[1] - f[0] if f.size > 1 else 1.0
    centres, means = [], []
    i = 0
    ratio = 10 ** (1.0 / per_decade)
    while i < f.size:
        upper = max(f[i] * ratio, f[i] + min_bins * df * (1 - 1e-9))
        j = int(np.searchsorted(f, upper, side="left"))
        j = max(j, i + 1)
        if j - i < min_bins and centres:
            break  # ragged tail
        centres.append(f[i:j].mean())
        means.append(values[i:j].mean())
        i = j
    return np.array(centres), np.array(means)


# ---------------------------------------------------------------------------
# Scenario comparison and case study
# ---------------------------------------------------------------------------


def pair_superpose(W: list[ResponseHistory], T: list[ResponseHistory]) -> list[ResponseHistory]:
    """W+T histories for realisations present in both lists (paired by realisation index)."""
    t_by_r = {h.metadata.get("realisation"): h for h in T}
    return [superpose(w, t_by_r[w.metadata.get("realisation")]) for w in W
            if w.metadata.get("realisation") in t_by_r]


def compare_scenarios(W: Envelope, T: Envelope, WplusT: Envelope, WT: Envelope, x_mid: float,
                      out_dir=None, case: int | str = "") -> dict:
    """Per-station differences WT - (W+T) and summary metrics; optional CSV and SVG."""
    envs = {"W": W, "T": T, "W+T": WplusT, "WT": WT}
    x = WT.station_x
    for name, e in envs.items():
        if not np.array_equal(e.station_x, x):
            raise AnalysisError(f"station grid of {name} differs from WT")
    diff = {f"{k}_{dof}": getattr(WT, f"{k}_{dof}") - getattr(WplusT, f"{k}_{dof}")
            for k in ("min", "max") for dof in ("h", "alpha")}
    scale_h = max(np.max(np.abs(WplusT.min_h)), np.max(np.abs(WplusT.max_h)), 1e-300)
    summary = {
        "case": case,
        "midspan": {name: midspan_extreme(e, x_mid) for name, e in envs.items()},
        "midspan_alpha": {name: midspan_extreme(e, x_mid, "alpha") for name, e in envs.items()},
        "max_abs_difference_h": float(max(np.max(np.abs(diff["min_h"])), np.max(np.abs(diff["max_h"])))),
        "max_abs_difference_alpha": float(max(np.max(np.abs(diff["min_alpha"])), np.max(np.abs(diff["max_alpha"])))),
        "fraction_wt_smaller_h": float(np.mean(np.abs(WT.min_h) <= np.abs(WplusT.min_h))),
    }
    summary["relative_difference_h"] = summary["max_abs_difference_h"] / scale_h
    if out_dir is not None:
        out_dir = Path(out_dir)
        cols = ["x"]
        data = [x]
        for name, e in envs.items():
            for k in ("min_h", "max_h", "min_alpha", "max_alpha"):
                cols.append(f"{name}_{k}")
                data.append(getattr(e, k))
        for k, v in diff.items():
            cols.append(f"diff_{k}")
            data.append(v)
        _write_table(out_dir / f"compare_{case}.csv", cols, np.column_stack(data),
                     ["x [m]; h [m] upward; alpha [rad]; diff = WT - (W+T)"])
        _plot_envelopes(out_dir / f"compare_{case}.svg", envs, f"Case {case}: scenario envelopes")
    return summary


def case_study(envelopes: dict, x_mid: float, cases=None, out_dir=None) -> list[dict]:
    """Midspan extreme and width metric per case, in case order."""
    cases = sorted(envelopes) if cases is None else list(cases)
    missing = [c for c in cases if c not in envelopes]
    if missing:
        raise AnalysisError(f"missing case(s) {missing}")
    if not cases:
        raise AnalysisError("no cases given")
    counts = {envelopes[c].n_realisations for c in cases}
    if len(counts) > 1:
        raise AnalysisError(f"realisation counts differ between cases: {sorted(counts)}")
    rows = [{"case": c, "midspan_extreme_h": midspan_extreme(envelopes[c], x_mid),
             "midspan_extreme_alpha": midspan_extreme(envelopes[c], x_mid, "alpha"),
             "width_metric": width_metric(envelopes[c]), "n_realisations": envelopes[c].n_realisations}
            for c in cases]
    if out_dir is not None:
        out_dir = Path(out_dir)
        _write_table(out_dir / "case_study.csv", ["case", "midspan_extreme_h", "midspan_extreme_alpha",
                                                  "width_metric", "n_realisations"],
                     np.array([[r["case"], r["midspan_extreme_h"], r["midspan_extreme_alpha"], r["width_metric"],
                                r["n_realisations"]] for r in rows]),
                     ["midspan extremes: h [m], alpha [rad]; width: span fraction within 90% of the peak"])
        _plot_envelopes(out_dir / "case_study.svg", {f"Case {c}": envelopes[c] for c in cases},
                        "Scenario WT envelopes per case")
    return rows


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def _write_table(path, columns, data, comments=()):
    with open(path, "w") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        np.savetxt(fh, np.atleast_2d(data), delimiter=",", fmt="%.10g", header=",".join(columns), comments="")


def write_envelope_csv(env: Envelope, path) -> None:
    _write_table(path, ["x", "min_h", "max_h", "min_alpha", "max_alpha"],
                 np.column_stack([env.station_x, env.min_h, env.max_h, env.min_alpha, env.max_alpha]),
                 [f"x [m], h [m] upward, alpha [rad] nose-up; {env.n_realisations} realisation(s)"])


def read_envelope_csv(path) -> Envelope:
    d = np.loadtxt(path, delimiter=",", comments="#", skiprows=2, ndmin=2)
    with open(path) as fh:
        n = int(fh.readline().split(";")[1].split()[0])
    return Envelope(d[:, 0], d[:, 1], d[:, 2], d[:, 3], d[:, 4], n)


def write_psd_csv(est: SpectrumEstimate, path, label: str = "") -> None:
    _write_table(path, ["f", "psd"], np.column_stack([est.frequency, est.psd]),
                 [f"{label} f [Hz], one-sided PSD [unit^2/Hz]; nperseg={est.nperseg} noverlap={est.noverlap} "
                  f"window={est.window}; integral/variance={est.parseval_ratio:.4f}"])


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "wtbridge"
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def _plot_envelopes(path, envs: dict, title: str) -> None:
    plt = _figure()
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for name, e in envs.items():
        line, = axes[0].plot(e.station_x, e.min_h, label=name)
        axes[0].plot(e.station_x, e.max_h, color=line.get_color())
        axes[1].plot(e.station_x, np.degrees(e.min_alpha), color=line.get_color())
        axes[1].plot(e.station_x, np.degrees(e.max_alpha), color=line.get_color())
    axes[0].set_ylabel("h [m]")
    axes[1].set_ylabel("alpha [deg]")
    axes[1].set_xlabel("x [m]")
    axes[0].set_title(title)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_envelope(env: Envelope, path, title: str = "") -> None:
    _plot_envelopes(path, {title or "envelope": env}, title)


def plot_psd(est: SpectrumEstimate, path, title: str = "", marks=()) -> None:
    plt = _figure()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(est.frequency[1:], est.psd[1:])
    for f in marks:
        ax.axvline(f, color="grey", lw=0.8, ls="--")
    ax.set_xlabel("f [Hz]")
    ax.set_ylabel("PSD")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)

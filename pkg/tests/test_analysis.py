import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wtbridge.analysis import (AnalysisError, Envelope, band_average, case_study, compare_scenarios, envelope,
                               ensemble_psd, extreme, midspan_extreme, pair_superpose, plot_psd,
                               read_envelope_csv, welch_psd, width_metric, write_envelope_csv, write_psd_csv)
from wtbridge.coupled_solver import ResponseHistory

X = np.linspace(0.0, 2694.0, 55)


def history(h, alpha=None, scenario="WT", case=3, realisation=0, x=X):
    h = np.atleast_2d(h)
    alpha = np.zeros_like(h) if alpha is None else np.atleast_2d(alpha)
    t = 0.1 * np.arange(h.shape[0])
    return ResponseHistory(t, x, h, np.zeros_like(h), alpha, np.zeros((h.shape[0], 2)), scenario, case,
                           {"realisation": realisation})


def test_envelope_of_constant_history():
    e = envelope([history(np.full((10, X.size), 0.3))])
    np.testing.assert_array_equal(e.min_h, 0.3)
    np.testing.assert_array_equal(e.max_h, 0.3)
    np.testing.assert_array_equal(e.max_alpha, 0.0)
    assert e.n_realisations == 1


@settings(max_examples=40, deadline=None)
@given(arrays(float, (3, 6, 4), elements=st.floats(-5, 5)))
def test_envelope_brute_force(data):
    x = np.arange(4.0)
    hs = [history(d, -d, realisation=r, x=x) for r, d in enumerate(data)]
    e = envelope(hs)
    for j in range(4):
        vals = [data[r, i, j] for r in range(3) for i in range(6)]
        assert e.min_h[j] == min(vals) and e.max_h[j] == max(vals)
        assert e.min_alpha[j] == -max(vals) and e.max_alpha[j] == -min(vals)
    p = envelope(hs, percentile=95)
    assert np.all(p.min_h >= e.min_h) and np.all(p.max_h <= e.max_h)


def test_envelope_rejects_mismatched_grids():
    with pytest.raises(AnalysisError, match="station grids"):
        envelope([history(np.zeros((2, 55))), history(np.zeros((2, 4)), x=np.arange(4.0))])
    with pytest.raises(AnalysisError):
        envelope([])


def test_extreme_keeps_sign():
    assert extreme([0.1, -0.5, 0.4]) == -0.5
    e = Envelope(X, -np.ones(55), 2 * np.ones(55), np.zeros(55), np.zeros(55), 1)
    assert midspan_extreme(e, 1347.0) == 2.0
    with pytest.raises(AnalysisError):
        e.bounds("p")


def test_width_metric_analytic():
    # |h| = sin(pi x / L): within 90 % of the peak on a fraction 1 - 2 asin(0.9)/pi of the span
    x = np.linspace(0, 2694.0, 2001)
    s = -np.sin(np.pi * x / 2694.0)
    e = Envelope(x, s, np.zeros_like(x), s, s, 1)
    assert width_metric(e) == pytest.approx(1 - 2 * np.arcsin(0.9) / np.pi, abs=1e-3)
    flat = Envelope(x, -np.ones_like(x), np.zeros_like(x), s, s, 1)
    assert width_metric(flat) == 1.0
    zero = Envelope(x, np.zeros_like(x), np.zeros_like(x), s, s, 1)
    assert width_metric(zero) == 0.0


def test_width_metric_uses_governing_side():
    x = np.linspace(0, 1, 101)
    lo = -0.5 * np.ones_like(x)
    hi = np.where(x < 0.2, 1.0, 0.1)
    e = Envelope(x, lo, hi, lo, hi, 1)
    assert width_metric(e) == pytest.approx(0.2, abs=0.02)


def test_welch_sinusoid_peak_and_parseval():
    dt = 0.1
    t = np.arange(6000) * dt
    y = 3.0 * np.sin(2 * np.pi * 0.5 * t) + 2.0
    est = welch_psd(y, dt)
    assert est.nperseg == 750 and est.noverlap == 375 and est.window == "hann"
    assert est.peak_frequency() == pytest.approx(0.5, abs=est.df)
    assert est.integral == pytest.approx(4.5, rel=0.02)


def test_welch_white_noise_level():
    rng = np.random.default_rng(0)
    dt = 0.05
    y = rng.normal(0, 2.0, 40000)
    est = welch_psd(y, dt)
    # one-sided white-noise density 2 sigma^2 dt
    assert np.median(est.psd[5:-5]) == pytest.approx(2 * 4.0 * dt, rel=0.05)
    assert est.parseval_ratio == pytest.approx(1.0, abs=0.02)


def test_welch_too_short():
    with pytest.raises(AnalysisError, match="too short"):
        welch_psd(np.zeros(10), 0.1)
    with pytest.raises(AnalysisError):
        welch_psd(np.zeros(800), 0.1).peak_frequency(100, 200)


def test_ensemble_psd_averages():
    rng = np.random.default_rng(1)
    sigs = rng.normal(size=(3, 4000))
    ens = ensemble_psd(sigs, 0.1)
    np.testing.assert_allclose(ens.psd, np.mean([welch_psd(s, 0.1).psd for s in sigs], axis=0))


def test_band_average_constant_and_counts():
    f = np.arange(0, 501) * 0.01
    c, m = band_average(f, np.full(f.size, 7.0))
    np.testing.assert_allclose(m, 7.0)
    assert np.all(np.diff(c) > 0)
    c, m = band_average(f, f)
    np.testing.assert_allclose(m, c)  # linear values average to the band centre
    assert band_average(np.zeros(3), np.ones(3))[0].size == 0


def test_pair_superpose_matches_by_realisation():
    W = [history(np.full((3, 55), float(r)), scenario="W", realisation=r) for r in (0, 1, 2)]
    T = [history(np.full((3, 55), 10.0 * r), scenario="T", realisation=r) for r in (2, 0)]
    out = pair_superpose(W, T)
    assert [o.scenario for o in out] == ["W+T", "W+T"]
    assert sorted(o.h[0, 0] for o in out) == [0.0, 22.0]


def test_compare_zero_difference(tmp_path):
    rng = np.random.default_rng(2)
    W = [history(rng.normal(size=(20, 55)), scenario="W", realisation=r) for r in range(2)]
    T = [history(rng.normal(size=(20, 55)), scenario="T", realisation=r) for r in range(2)]
    wpt = pair_superpose(W, T)
    eW, eT, eS = envelope(W), envelope(T), envelope(wpt)
    s = compare_scenarios(eW, eT, eS, eS, 1347.0, out_dir=tmp_path, case=3)
    assert s["max_abs_difference_h"] == 0.0 and s["relative_difference_h"] == 0.0
    assert s["fraction_wt_smaller_h"] == 1.0
    assert s["midspan"]["WT"] == s["midspan"]["W+T"]
    data = np.genfromtxt(tmp_path / "compare_3.csv", delimiter=",", names=True, skip_header=1)
    np.testing.assert_array_equal(data["diff_min_h"], 0.0)
    assert (tmp_path / "compare_3.svg").read_text().startswith("<?xml")


def test_compare_rejects_grid_mismatch():
    a = envelope([history(np.zeros((2, 55)))])
    b = envelope([history(np.zeros((2, 4)), x=np.arange(4.0))])
    with pytest.raises(AnalysisError, match="differs"):
        compare_scenarios(a, a, b, a, 1347.0)


def test_case_study(tmp_path):
    e1 = envelope([history(-0.5 * np.ones((2, 55)))])
    e3 = envelope([history(-0.8 * np.ones((2, 55)))])
    rows = case_study({3: e3, 1: e1}, 1347.0, out_dir=tmp_path)
    assert [r["case"] for r in rows] == [1, 3]
    assert rows[1]["midspan_extreme_h"] == -0.8
    assert (tmp_path / "case_study.csv").exists() and (tmp_path / "case_study.svg").exists()
    with pytest.raises(AnalysisError, match="missing case"):
        case_study({1: e1}, 1347.0, cases=[1, 3])
    e3b = envelope([history(np.zeros((2, 55))), history(np.zeros((2, 55)))])
    with pytest.raises(AnalysisError, match="realisation counts"):
        case_study({1: e1, 3: e3b}, 1347.0)
    with pytest.raises(AnalysisError, match="no cases"):
        case_study({}, 1347.0)


def test_envelope_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    e = envelope([history(rng.normal(size=(5, 55)), rng.normal(size=(5, 55)))] * 2)
    write_envelope_csv(e, tmp_path / "e.csv")
    g = read_envelope_csv(tmp_path / "e.csv")
    assert g.n_realisations == 2
    for k in ("station_x", "min_h", "max_h", "min_alpha", "max_alpha"):
        np.testing.assert_allclose(getattr(g, k), getattr(e, k), rtol=1e-9)


def test_psd_outputs_deterministic(tmp_path):
    est = welch_psd(np.sin(np.arange(2000) * 0.3), 0.1)
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        write_psd_csv(est, tmp_path / d / "p.csv", "h")
        plot_psd(est, tmp_path / d / "p.svg", "h", marks=[0.1])
    assert (tmp_path / "a" / "p.svg").read_bytes() == (tmp_path / "b" / "p.svg").read_bytes()
    assert "integral/variance=" in (tmp_path / "a" / "p.csv").read_text()

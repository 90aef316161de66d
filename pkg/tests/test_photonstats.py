import numpy as np
import pytest

from qkd_linkbench.montecarlo import generate_timetags
from qkd_linkbench.photonstats import (
    EmitterDynamics,
    FileFormatError,
    Histogram,
    TimeTagStream,
    coincidence_histogram,
    fit_g2_longtime,
    fit_g2_pulsed,
    fit_saturation,
    read_histogram_csv,
    read_timetags,
    saturation_queries,
    write_histogram_csv,
    write_timetags,
)

T_PS = 25_000  # 40 MHz repetition


def periodic_stream(n=2000, offset=T_PS // 2):
    t0 = np.arange(n, dtype=np.int64) * T_PS
    t1 = t0 + offset
    ch = np.concatenate([np.zeros(n, np.int64), np.ones(n, np.int64)])
    t = np.concatenate([t0, t1])
    order = np.argsort(t, kind="stable")
    return TimeTagStream(ch[order], t[order], T_PS)


class TestTimeTagStream:
    def test_validation(self):
        with pytest.raises(ValueError):
            TimeTagStream(np.array([0, 0]), np.array([10, 5]), T_PS)
        with pytest.raises(ValueError):
            TimeTagStream(np.array([0]), np.array([-1]), T_PS)
        with pytest.raises(ValueError):
            TimeTagStream(np.array([0]), np.array([1]), 0)

    def test_file_roundtrip(self, tmp_path):
        stream = periodic_stream(50)
        path = tmp_path / "tags.txt"
        write_timetags(stream, path)
        first = path.read_text().splitlines()[0]
        assert first == f"# timetag v1 rep_period_ps={T_PS}"
        back = read_timetags(path)
        assert np.array_equal(back.channels, stream.channels)
        assert np.array_equal(back.times_ps, stream.times_ps)
        assert back.rep_period_ps == T_PS

    def test_malformed_line_reported(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text(f"# timetag v1 rep_period_ps={T_PS}\n0,100\n1,abc\n")
        with pytest.raises(FileFormatError, match="line 3"):
            read_timetags(path)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "noheader.txt"
        path.write_text("0,100\n")
        with pytest.raises(FileFormatError, match="line 1"):
            read_timetags(path)


class TestCoincidenceHistogram:
    def test_offset_periodic_peaks(self):
        # tags offset by T/2: every coincidence sits half a period from a
        # multiple of T, so counts only appear at centers = T/2 mod T
        h = coincidence_histogram(periodic_stream(), bin_width_ps=500,
                                  window_ps=4 * T_PS, normalization="raw")
        centers = h.bin_centers_ps[h.counts > 0]
        assert len(centers)
        rel = np.abs((centers - T_PS // 2) % T_PS)
        assert np.all((rel < 500) | (rel > T_PS - 500))

    def test_pair_count_and_order_invariance(self):
        stream = periodic_stream(500)
        h = coincidence_histogram(stream, 500, 2 * T_PS, normalization="raw")
        # shuffle the record interleaving; per-channel times stay sorted
        rng = np.random.default_rng(1)
        perm = rng.permutation(len(stream))
        ch, t = stream.channels[perm], stream.times_ps[perm]
        for c in (0, 1):
            idx = np.nonzero(ch == c)[0]
            t[idx] = np.sort(t[idx])
        h2 = coincidence_histogram(TimeTagStream(ch, t, T_PS), 500, 2 * T_PS,
                                   normalization="raw")
        assert np.array_equal(h.counts, h2.counts)
        # total counts equal the number of in-window pairs, counted directly
        brute = 0
        t0 = stream.channel_times(0)
        t1 = stream.channel_times(1)
        for s in t0[:100]:
            brute += int(np.sum((t1 - s >= -2 * T_PS) & (t1 - s < 2 * T_PS)))
        partial = coincidence_histogram(
            TimeTagStream(np.concatenate([np.zeros(100, np.int64), np.ones(len(t1), np.int64)]),
                          np.concatenate([t0[:100], t1]), T_PS),
            500, 2 * T_PS, normalization="raw")
        assert int(partial.counts.sum()) == brute

    def test_precondition_errors(self):
        stream = periodic_stream(100)
        with pytest.raises(ValueError):
            coincidence_histogram(stream, 500, T_PS)  # window below 2 periods
        with pytest.raises(ValueError):
            coincidence_histogram(stream, 7, 2 * T_PS)  # bin does not divide
        empty = TimeTagStream(np.zeros(5, np.int64), np.arange(5, dtype=np.int64) * T_PS, T_PS)
        with pytest.raises(ValueError, match="empty channel"):
            coincidence_histogram(empty, 500, 2 * T_PS)

    def test_antibunched_stream_ratio(self):
        # short lifetime: lateral tails do not leak into the central region
        dyn = EmitterDynamics(tau_c_ns=1.0, g2_zero=0.02, mu=0.1)
        stream = generate_timetags(dyn, duration_s=0.05, rep_period_ns=25.0, seed=2)
        h = coincidence_histogram(stream, 100, 16 * T_PS)
        order = np.round(h.bin_centers_ps / T_PS).astype(int)
        central = h.normalized[order == 0].sum()
        assert central == pytest.approx(0.02, abs=0.01)

    def test_poisson_stream_flat(self):
        # coherent-like stream: same-period coincidences match lateral ones
        rng = np.random.default_rng(8)
        n, mu = 400_000, 0.1
        t0 = np.nonzero(rng.random(n) < mu)[0].astype(np.int64) * T_PS
        t1 = np.nonzero(rng.random(n) < mu)[0].astype(np.int64) * T_PS
        ch = np.concatenate([np.zeros(len(t0), np.int64), np.ones(len(t1), np.int64)])
        stream = TimeTagStream(ch, np.concatenate([t0, t1]), T_PS)
        h = coincidence_histogram(stream, 500, 16 * T_PS)
        order = np.round(h.bin_centers_ps / T_PS).astype(int)
        central = h.normalized[order == 0].sum()
        assert central == pytest.approx(1.0, abs=0.05)

    def test_zero_g2_ratio_vanishes(self):
        dyn = EmitterDynamics(tau_c_ns=1.0, g2_zero=0.0, mu=0.1)
        stream = generate_timetags(dyn, duration_s=0.02, rep_period_ns=25.0, seed=3)
        h = coincidence_histogram(stream, 100, 16 * T_PS)
        order = np.round(h.bin_centers_ps / T_PS).astype(int)
        assert h.normalized[order == 0].sum() == pytest.approx(0.0, abs=3e-3)

    def test_histogram_csv_roundtrip(self, tmp_path):
        stream = periodic_stream(300)
        h = coincidence_histogram(stream, 500, 2 * T_PS, normalization="raw")
        path = tmp_path / "hist.csv"
        write_histogram_csv(h, path)
        back = read_histogram_csv(path)
        assert np.array_equal(back.counts, h.counts)
        assert np.array_equal(back.bin_edges_ps, h.bin_edges_ps)


class TestFitG2Pulsed:
    def _model_histogram(self, g2, tau_c_ps, amp=5000.0, bin_ps=100, window=16 * T_PS):
        edges = np.arange(-window, window + bin_ps, bin_ps, dtype=np.int64)
        centers = 0.5 * (edges[:-1] + edges[1:])
        orders = [n for n in range(-17, 18) if n != 0]
        y = g2 * np.exp(-np.abs(centers) / tau_c_ps)
        for n in orders:
            y = y + np.exp(-np.abs(centers - n * T_PS) / tau_c_ps)
        counts = np.round(amp * y).astype(np.int64)
        return Histogram(edges, counts, rep_period_ps=T_PS)

    def test_exact_model_recovery(self):
        h = self._model_histogram(0.02, 3600.0)
        res = fit_g2_pulsed(h)
        assert res.converged
        assert abs(res["g2_zero"] - 0.02) <= max(res.sigma[0], 1e-4)
        assert abs(res["tau_c_ns"] - 3.6) <= max(res.sigma[1], 1e-3)

    def test_zero_g2_bounded(self):
        h = self._model_histogram(0.0, 3600.0)
        res = fit_g2_pulsed(h)
        assert res["g2_zero"] >= 0.0
        assert res["g2_zero"] <= 1e-3

    def test_rescaling_invariance(self):
        h = self._model_histogram(0.05, 2500.0)
        res1 = fit_g2_pulsed(h)
        scaled = Histogram(h.bin_edges_ps, h.counts * 7, rep_period_ps=T_PS)
        res2 = fit_g2_pulsed(scaled)
        assert res2["g2_zero"] == pytest.approx(res1["g2_zero"], rel=1e-6)

    def test_window_precondition(self):
        h = self._model_histogram(0.02, 3600.0, window=4 * T_PS)
        with pytest.raises(ValueError):
            fit_g2_pulsed(h)

    def test_requires_period(self):
        h = self._model_histogram(0.02, 3600.0)
        h.rep_period_ps = None
        with pytest.raises(ValueError):
            fit_g2_pulsed(h)

    def test_stream_roundtrip_80mhz(self):
        # denser pulse train: peaks overlap more, recovery still inside 0.1 ns
        dyn = EmitterDynamics(tau_c_ns=3.6, g2_zero=0.02, mu=0.2)
        stream = generate_timetags(dyn, duration_s=0.1, rep_period_ns=12.5, seed=21)
        h = coincidence_histogram(stream, 50, 16 * 12_500)
        res = fit_g2_pulsed(h)
        assert res.converged
        assert abs(res["tau_c_ns"] - 3.6) <= 0.1
        assert abs(res["g2_zero"] - 0.02) <= 0.01

    def test_more_events_reduce_error(self):
        # every-cycle emission: event count equals the cycle count
        errs = {}
        for n_cycles in (100_000, 10_000_000):
            dyn = EmitterDynamics(tau_c_ns=3.6, g2_zero=0.05, mu=1.0)
            stream = generate_timetags(dyn, duration_s=n_cycles * 25e-9,
                                       rep_period_ns=25.0, seed=31)
            h = coincidence_histogram(stream, 250, 16 * T_PS)
            res = fit_g2_pulsed(h)
            errs[n_cycles] = abs(res["g2_zero"] - 0.05) + abs(res["tau_c_ns"] - 3.6)
        assert errs[10_000_000] < errs[100_000]


class TestFitG2Longtime:
    def _bunched_histogram(self, amp, tau_trap_ps, base=20000.0, bin_ps=200_000,
                           window=20_000_000):
        edges = np.arange(-window, window + bin_ps, bin_ps, dtype=np.int64)
        centers = np.abs(0.5 * (edges[:-1] + edges[1:]))
        y = base * (1.0 + amp * np.exp(-centers / tau_trap_ps))
        return Histogram(edges, np.round(y).astype(np.int64))

    def test_amplitude_algebra(self):
        h = self._bunched_histogram(0.2987, 2_000_000.0)
        res = fit_g2_longtime(h)
        assert res.converged
        assert res["on_fraction"] == pytest.approx(1.0 / 1.2987, abs=1e-3)
        assert res["on_fraction"] == pytest.approx(0.770, abs=1e-3)

    def test_flat_histogram_full_on(self):
        h = self._bunched_histogram(0.0, 2_000_000.0)
        res = fit_g2_longtime(h)
        assert res["on_fraction"] == pytest.approx(1.0, abs=1e-6)

    def test_blinking_stream_roundtrip(self):
        dyn = EmitterDynamics(tau_c_ns=3.6, g2_zero=0.02, mu=0.1,
                              on_fraction=0.77, tau_trap_ns=2000.0)
        stream = generate_timetags(dyn, duration_s=0.05, rep_period_ns=25.0, seed=5)
        h = coincidence_histogram(stream, 200_000, 20_000_000, normalization="raw")
        res = fit_g2_longtime(h)
        assert res.converged
        assert abs(res["on_fraction"] - 0.77) <= 0.05
        # telegraph decay constant is on_fraction * tau_trap
        assert res["tau_trap_ns"] == pytest.approx(0.77 * 2000.0, rel=0.15)


class TestFitSaturation:
    P = np.linspace(0.05, 8.0, 24)

    def test_noiseless_exact_recovery(self):
        true = np.array([0.02e6, 0.01e6, 10e6, 1.5])
        r = true[0] + true[1] * self.P + true[2] * self.P / (self.P + true[3])
        res = fit_saturation(np.column_stack([self.P, r]))
        assert res.converged
        for got, want in zip(res.params, true):
            assert got == pytest.approx(want, rel=1e-6)

    def test_pure_saturation_half_rate(self):
        r = 10e6 * self.P / (self.P + 1.5)
        res = fit_saturation(np.column_stack([self.P, r]))
        d = res.as_dict()
        assert d["r_inf"] == pytest.approx(10e6, rel=1e-6)
        r_at_psat = d["a"] + d["b"] * d["p_sat"] + d["r_inf"] / 2.0
        assert r_at_psat == pytest.approx(d["r_inf"] / 2.0, rel=1e-4)

    def test_saturation_parameter_query(self):
        r = 10e6 * self.P / (self.P + 1.5)
        res = fit_saturation(np.column_stack([self.P, r]))
        q = saturation_queries(res, 2.0 * res["p_sat"], rep_rate=80e6)
        assert q["s"] == pytest.approx(2.0, rel=1e-9)
        assert q["rate"] / res["r_inf"] == pytest.approx(2.0 / 3.0, rel=1e-6)
        assert q["mu"] == pytest.approx(q["rate"] / 80e6, rel=1e-12)

    def test_power_rescaling_invariance(self):
        rng = np.random.default_rng(9)
        r = 10e6 * self.P / (self.P + 1.5) + rng.normal(0.0, 5e4, len(self.P))
        res1 = fit_saturation(np.column_stack([self.P, r]))
        res2 = fit_saturation(np.column_stack([self.P * 1000.0, r]))
        assert res2.residual_norm == pytest.approx(res1.residual_norm, rel=1e-6)
        assert res2["p_sat"] == pytest.approx(res1["p_sat"] * 1000.0, rel=1e-6)

    def test_needs_six_points(self):
        r = 10e6 * self.P / (self.P + 1.5)
        with pytest.raises(ValueError):
            fit_saturation(np.column_stack([self.P[:5], r[:5]]))

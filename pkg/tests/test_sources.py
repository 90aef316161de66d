import math

import numpy as np
import pytest

from qkd_linkbench.sources import (
    PhotonNumberDist,
    SpsModel,
    WcpModel,
    multi_photon_prob,
    sps_number_dist,
    wcp_number_dist,
)


class TestModels:
    def test_sps_validation(self):
        SpsModel(0.08, 0.02)
        with pytest.raises(ValueError):
            SpsModel(0.0, 0.02)
        with pytest.raises(ValueError):
            SpsModel(1.2, 0.02)
        with pytest.raises(ValueError):
            SpsModel(1.0, 1.0)  # g2 at the open boundary
        with pytest.raises(ValueError):
            SpsModel(0.5, -0.1)

    def test_wcp_validation(self):
        WcpModel(0.5)
        WcpModel(0.5, 0.05)
        with pytest.raises(ValueError):
            WcpModel(0.0)
        with pytest.raises(ValueError):
            WcpModel(0.5, 0.5)
        with pytest.raises(ValueError):
            WcpModel(0.5, 0.0)


class TestMultiPhotonProb:
    def test_reference_values(self):
        assert multi_photon_prob(SpsModel(0.08, 0.02)) == pytest.approx(6.4e-5, rel=1e-12)
        assert multi_photon_prob(SpsModel(0.08, 0.0)) == 0.0
        assert multi_photon_prob(SpsModel(0.5, 0.02)) == pytest.approx(2.5e-3, rel=1e-12)

    def test_monotone_in_both_arguments(self):
        mus = np.linspace(0.01, 1.0, 12)
        g2s = np.linspace(0.0, 0.99, 12)
        for g2 in g2s:
            vals = [multi_photon_prob(SpsModel(m, g2)) for m in mus]
            assert all(b >= a for a, b in zip(vals, vals[1:]))
        for mu in mus:
            vals = [multi_photon_prob(SpsModel(mu, g)) for g in g2s]
            assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestSpsNumberDist:
    def test_reference_distribution(self):
        d = sps_number_dist(SpsModel(0.08, 0.02))
        assert d.probabilities == pytest.approx((0.920064, 0.079872, 0.000064), abs=1e-15)

    def test_pure_source(self):
        d = sps_number_dist(SpsModel(0.08, 0.0))
        assert d.probabilities == pytest.approx((0.92, 0.08, 0.0), abs=1e-15)

    def test_moments_match_exactly(self):
        for mu in (0.04, 0.08, 0.31, 0.5, 1.0):
            for g2 in (0.0, 0.02, 0.3, 0.9):
                sps = SpsModel(mu, g2)
                d = sps_number_dist(sps)
                assert d.mean() == pytest.approx(mu, abs=1e-12)
                if g2 > 0:
                    g2_est = d.second_factorial_moment() / d.mean() ** 2
                    assert g2_est == pytest.approx(g2, abs=1e-12)

    def test_sampling_statistics(self):
        # 1e7 draws: mean and pair-based g2 both within 3 sigma.
        sps = SpsModel(0.08, 0.02)
        d = sps_number_dist(sps)
        n = 10_000_000
        samples = d.sample(np.random.default_rng(123), n)
        mean = samples.mean()
        var = d.probabilities[1] + 4 * d.probabilities[2] - d.mean() ** 2
        assert abs(mean - 0.08) <= 3 * math.sqrt(var / n)
        n2 = int((samples == 2).sum())
        p2 = d.probabilities[2]
        sigma_n2 = math.sqrt(n * p2 * (1 - p2))
        g2_emp = 2 * n2 / (n * mean**2)
        sigma_g2 = 2 * sigma_n2 / (n * mean**2)
        assert abs(g2_emp - 0.02) <= 3 * sigma_g2


class TestWcpNumberDist:
    def test_poisson_head(self):
        d = wcp_number_dist(WcpModel(0.5), n_max=10)
        assert d.probabilities[0] == pytest.approx(0.6065306597126334, rel=1e-12)
        assert sum(d.probabilities[2:]) == pytest.approx(0.09020401043104986, rel=1e-10)

    def test_small_mu_limit(self):
        d = wcp_number_dist(WcpModel(1e-9))
        assert d.probabilities[0] == pytest.approx(1.0, abs=1e-8)

    def test_mean_close_to_mu(self):
        for mu in (0.05, 0.5, 1.0):
            n_max = 12
            d = wcp_number_dist(WcpModel(mu), n_max=n_max)
            bound = math.exp(-mu) * mu**n_max / math.factorial(n_max - 1)
            assert abs(d.mean() - mu) <= bound + 1e-15

    def test_n_max_guard(self):
        with pytest.raises(ValueError):
            wcp_number_dist(WcpModel(0.5), n_max=1)

    def test_sampling_statistics(self):
        wcp = WcpModel(0.5)
        d = wcp_number_dist(wcp)
        n = 10_000_000
        samples = d.sample(np.random.default_rng(7), n)
        # Poisson variance ~ mu
        assert abs(samples.mean() - 0.5) <= 3 * math.sqrt(0.5 / n)


class TestPhotonNumberDist:
    def test_validation(self):
        with pytest.raises(ValueError):
            PhotonNumberDist((0.5, 0.4))  # does not sum to 1
        with pytest.raises(ValueError):
            PhotonNumberDist((1.2, -0.2))

    def test_sample_support(self):
        d = PhotonNumberDist((0.25, 0.5, 0.25))
        s = d.sample(np.random.default_rng(0), 10_000)
        assert set(np.unique(s)) <= {0, 1, 2}

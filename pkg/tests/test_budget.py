import numpy as np
import pytest

from qkd_linkbench.budget import (
    EfficiencyBudget,
    extract_qy,
    extrapolate_mu_ref,
    fidelity,
    ideal_outcome_matrix,
    pump_efficiency,
)


class TestPumpEfficiency:
    def test_reference_value(self):
        assert pump_efficiency(0.75, 2.0) == pytest.approx(0.5, rel=1e-12)

    def test_saturation_limits(self):
        assert pump_efficiency(0.75, 1e12) == pytest.approx(0.75, rel=1e-9)
        assert pump_efficiency(0.75, 0.0) == 0.0

    def test_measured_ratio_override(self):
        assert pump_efficiency(0.75, 2.0, measured_ratio=0.6267) == pytest.approx(
            0.75 * 0.6267, rel=1e-12)

    def test_monotone_in_saturation(self):
        vals = [pump_efficiency(0.75, s) for s in np.linspace(0.0, 10.0, 50)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestQuantumYield:
    def test_reference_extractions(self):
        b1 = EfficiencyBudget(eta_opt_alice=0.54, eta_col=0.74, eta_pump=0.47,
                              on_frac=0.77)
        assert extract_qy(0.08, b1) == pytest.approx(0.5531920425537447, rel=1e-12)
        b2 = EfficiencyBudget(eta_opt_alice=0.54, eta_col=0.44, eta_pump=0.47,
                              on_frac=0.77)
        assert extract_qy(0.08, b2) == pytest.approx(0.9303684352040251, rel=1e-12)

    def test_identity_factors(self):
        b = EfficiencyBudget(eta_opt_alice=1.0, eta_col=1.0, eta_pump=1.0, on_frac=1.0)
        assert extract_qy(0.08, b) == pytest.approx(0.08, rel=1e-15)

    def test_zero_factor_guard(self):
        b = EfficiencyBudget(eta_opt_alice=0.0, eta_col=1.0, eta_pump=1.0, on_frac=1.0)
        with pytest.raises(ValueError):
            extract_qy(0.08, b)


class TestMuRefExtrapolation:
    def test_reference_values(self):
        b1 = EfficiencyBudget(eta_opt_alice=0.90, eta_col=0.99, eta_pump=0.75,
                              on_frac=0.77, qy=0.6)
        assert extrapolate_mu_ref(b1) == pytest.approx(0.3087315, rel=1e-12)
        b2 = EfficiencyBudget(eta_opt_alice=0.90, eta_col=0.99, eta_pump=0.75,
                              on_frac=0.77, qy=0.9)
        assert extrapolate_mu_ref(b2) == pytest.approx(0.46309725, rel=1e-12)

    def test_zero_factor_zero_result(self):
        b = EfficiencyBudget(eta_opt_alice=0.9, eta_col=0.0, eta_pump=0.75,
                             on_frac=0.77, qy=0.5)
        assert extrapolate_mu_ref(b) == 0.0

    def test_requires_qy(self):
        b = EfficiencyBudget(eta_opt_alice=0.9, eta_col=0.99, eta_pump=0.75,
                             on_frac=0.77)
        with pytest.raises(ValueError):
            extrapolate_mu_ref(b)

    def test_extraction_inverts_extrapolation(self):
        rng = np.random.default_rng(55)
        for _ in range(100):
            factors = rng.uniform(0.05, 1.0, 4)
            qy = rng.uniform(0.05, 1.0)
            b = EfficiencyBudget(eta_opt_alice=factors[0], eta_col=factors[1],
                                 eta_pump=factors[2], on_frac=factors[3], qy=qy)
            mu = extrapolate_mu_ref(b)
            assert extract_qy(mu, b) == pytest.approx(qy, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            EfficiencyBudget(eta_opt_alice=1.5, eta_col=1.0, eta_pump=1.0, on_frac=1.0)
        with pytest.raises(ValueError):
            EfficiencyBudget(eta_opt_alice=1.0, eta_col=1.0, eta_pump=1.0,
                             on_frac=1.0, sat_param=-1.0)


class TestFidelity:
    def test_identity_case(self):
        m = ideal_outcome_matrix("apparatus")
        assert fidelity(m, m) == pytest.approx(1.0, abs=1e-15)

    def test_uniform_vs_concentrated(self):
        uniform = np.full((4, 4), 0.25)
        assert fidelity(uniform, ideal_outcome_matrix("sifted")) == pytest.approx(0.5)

    def test_symmetry(self):
        rng = np.random.default_rng(77)
        a = rng.random((4, 4))
        a /= a.sum(axis=1, keepdims=True)
        b = rng.random((4, 4))
        b /= b.sum(axis=1, keepdims=True)
        assert fidelity(a, b) == pytest.approx(fidelity(b, a), abs=1e-15)
        assert 0.0 <= fidelity(a, b) <= 1.0

    def test_one_only_for_identical_rows(self):
        m = ideal_outcome_matrix("apparatus")
        perturbed = m.copy()
        perturbed[0] = [0.49, 0.01, 0.25, 0.25]
        assert fidelity(perturbed, m) < 1.0

    def test_row_sum_validation(self):
        bad = np.full((4, 4), 0.3)
        with pytest.raises(ValueError):
            fidelity(bad, ideal_outcome_matrix("sifted"))
        with pytest.raises(ValueError):
            fidelity(np.full((3, 3), 1 / 3), ideal_outcome_matrix("sifted"))


class TestIdealMatrix:
    def test_sifted_is_identity(self):
        assert np.array_equal(ideal_outcome_matrix("sifted"), np.eye(4))

    def test_apparatus_rows(self):
        m = ideal_outcome_matrix("apparatus", basis_split=0.5)
        assert np.allclose(m.sum(axis=1), 1.0)
        assert np.allclose(m[0], [0.5, 0.0, 0.25, 0.25])
        assert np.allclose(m[2], [0.25, 0.25, 0.5, 0.0])

    def test_unbalanced_split(self):
        m = ideal_outcome_matrix("apparatus", basis_split=0.3)
        # a Z-basis state keeps 70% on its own detector
        assert np.allclose(m[0], [0.7, 0.0, 0.15, 0.15])
        assert np.allclose(m[3], [0.35, 0.35, 0.0, 0.3])

    def test_unknown_convention(self):
        with pytest.raises(ValueError):
            ideal_outcome_matrix("bogus")

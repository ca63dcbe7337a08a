import io
import math

import numpy as np
import pytest

from phaseamp.analytic import AmplifierParams, mu_coherent, success_probability
from phaseamp.errors import HeraldImpossibleError
from phaseamp.fock import coherent_state, displaced_thermal, pure_loss
from phaseamp.pipeline import (
    REPORT_COLUMNS,
    MCConfig,
    _mc_samples,
    acceptance_grid,
    amplify_exact,
    infer_input_amplitude,
    mc_heralded,
    validate_grid,
    validate_point,
)

# frozen from the Fock pipeline
GOLDEN_M2_PS = 0.0023173563937718294
GOLDEN_M2_MU = 0.6059500329839126


class TestAmplifyExact:
    def test_pure_loss_limit(self):
        a, T = 0.48, 0.8
        res = amplify_exact(AmplifierParams(a, 0.0, T, 0.63, 0))
        ref = coherent_state(math.sqrt(T) * a, 40).elements[:res.state.dim, 0]
        # corner coherences scale like sqrt(tail mass), so compare through the overlap instead
        overlap = np.real(ref.conj() @ res.state.elements @ ref) / abs(ref[0])
        assert overlap == pytest.approx(1.0, abs=1e-9)
        assert res.stats.gain == pytest.approx(math.sqrt(T), rel=1e-9)
        assert res.stats.gamma > 1
        assert res.success_prob == pytest.approx(1.0, abs=1e-12)

    def test_golden(self):
        res = amplify_exact(AmplifierParams(0.48, 0.2, 0.8, 0.63, 2))
        assert res.success_prob == pytest.approx(GOLDEN_M2_PS, rel=1e-9)
        assert abs(res.stats.mu) == pytest.approx(GOLDEN_M2_MU, rel=1e-9)

    def test_output_states_valid(self):
        for M in range(5):
            res = amplify_exact(AmplifierParams(0.431, 0.15, 0.8, 0.63, M))
            assert res.state.check() == []

    def test_heralding_brightens(self):
        p = AmplifierParams(0.48, 0.2, 0.8, 0.63, 1)
        res = amplify_exact(p)
        d = res.state.dim
        tapped = pure_loss(displaced_thermal(p.alpha, p.n_th, d), p.T)
        assert res.state.photon_number() >= tapped.photon_number()

    def test_gain_grows_with_noise_and_threshold(self):
        g = [[amplify_exact(AmplifierParams(0.48, n, 0.8, 0.63, M)).stats.gain for n in (0.1, 0.3, 0.6)]
             for M in (1, 2)]
        assert all(np.diff(row).min() > 0 for row in g)
        assert all(b > a for a, b in zip(g[0], g[1]))

    def test_threshold_policy(self):
        with pytest.raises(ValueError):
            amplify_exact(AmplifierParams(0.48, 0.2, 0.8, 0.63, 9))

    def test_vacuum_cannot_herald(self):
        with pytest.raises(HeraldImpossibleError):
            amplify_exact(AmplifierParams(0.0, 0.0, 0.8, 0.63, 1))


class TestMonteCarlo:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            MCConfig(0)
        with pytest.raises(ValueError):
            MCConfig(10, seed=-1)

    def test_noiseless_is_exact(self):
        p = AmplifierParams(0.48, 0.0, 0.8, 0.63, 2)
        ps, mu, amp = mc_heralded(p, MCConfig(1000))
        assert mu.mean == pytest.approx(mu_coherent(math.sqrt(0.8) * 0.48), rel=1e-12)
        assert ps.mean == pytest.approx(success_probability(p), rel=1e-10)
        assert ps.std_error == pytest.approx(0.0, abs=1e-12)
        assert amp.mean == pytest.approx(math.sqrt(0.8) * 0.48, rel=1e-12)

    def test_no_threshold_always_heralds(self):
        ps, _, _ = mc_heralded(AmplifierParams(0.48, 0.3, 0.8, 0.63, 0), MCConfig(5000))
        assert ps.mean == 1.0
        assert ps.std_error == 0.0

    def test_deterministic_and_prefix_stable(self):
        p = AmplifierParams(0.48, 0.2, 0.8, 0.63, 1)
        a = mc_heralded(p, MCConfig(20000, 7))
        b = mc_heralded(p, MCConfig(20000, 7))
        assert a == b
        short = _mc_samples(p, 7, 0, 100)
        long = _mc_samples(p, 7, 0, 200)
        assert np.array_equal(short, long[:100])

    def test_seed_changes_stream(self):
        p = AmplifierParams(0.48, 0.2, 0.8, 0.63, 1)
        assert mc_heralded(p, MCConfig(5000, 1))[0].mean != mc_heralded(p, MCConfig(5000, 2))[0].mean

    def test_agrees_with_oracle_at_moderate_size(self):
        p = AmplifierParams(0.48, 0.2, 0.8, 0.63, 1)
        ps, mu, _ = mc_heralded(p, MCConfig(200000, 3))
        ex = amplify_exact(p)
        assert abs(ps.mean - ex.success_prob) < 4 * ps.std_error
        assert abs(abs(mu.mean) - abs(ex.stats.mu)) < 4 * mu.std_error

    def test_bootstrap_branch_for_rare_heralds(self):
        p = AmplifierParams(0.48, 0.2, 0.8, 0.63, 3)
        ps, mu, _ = mc_heralded(p, MCConfig(2000, 5))
        assert ps.mean * 2000 < 100
        assert ps.std_error > 0 and mu.std_error > 0


class TestInference:
    def test_calibrated_example(self):
        n_in, amp = infer_input_amplitude(0.15, 0.0227, 0.63)
        assert n_in == pytest.approx(0.15 + 0.0227 / 0.63, rel=1e-15)
        assert n_in == pytest.approx(0.186, abs=5e-4)
        assert amp == pytest.approx(math.sqrt(n_in))

    def test_ideal_counter(self):
        assert infer_input_amplitude(0.1, 0.05, 1.0)[0] == pytest.approx(0.15)

    def test_tap_energy_consistency(self):
        # 20% of a 0.186 beam seen by a 0.63-efficient counter, 80% by the homodyne arm
        n = 0.186
        n_in, _ = infer_input_amplitude(0.8 * n, 0.63 * 0.2 * n, 0.63)
        assert n_in == pytest.approx(n, rel=1e-12)

    @pytest.mark.parametrize("args", [(0.1, 0.1, 0.0), (0.1, 0.1, 1.2), (-0.1, 0.1, 0.5)])
    def test_rejects_bad_calibration(self, args):
        with pytest.raises(ValueError):
            infer_input_amplitude(*args)


class TestValidation:
    def test_empty_grid(self):
        with pytest.raises(ValueError):
            validate_grid([])

    def test_acceptance_grid_shape(self):
        grid = acceptance_grid()
        assert len(grid) == 240
        assert len(set(grid)) == 240

    def test_small_grid_report(self):
        grid = [AmplifierParams(0.48, 0.2, 0.8, 0.63, M) for M in (0, 1, 2)]
        report = validate_grid(grid, MCConfig(20000, 1))
        assert report.ok
        assert report.max_gap < 1e-8
        assert report.literal_discrepancy
        text = report.to_csv()
        lines = text.strip().split("\n")
        assert lines[0] == ",".join(REPORT_COLUMNS)
        assert len(lines) == 4
        assert all(len(line.split(",")) == len(REPORT_COLUMNS) for line in lines)
        buf = io.StringIO()
        report.to_csv(buf)
        assert buf.getvalue() == text

    def test_herald_impossible_marker(self):
        row = validate_point(AmplifierParams(0.0, 0.0, 0.8, 0.63, 2))
        assert row.herald_impossible
        vals = row.values()
        assert vals[6:] == ["herald_impossible"] * (len(REPORT_COLUMNS) - 6)

    def test_skip_monte_carlo(self):
        row = validate_point(AmplifierParams(0.2, 0.05, 0.95, 1.0, 1), None)
        assert math.isnan(row.ps_mc)
        assert row.gap_rel < 1e-8

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from sdiqrng.core import (
    SNL_VARIANCE,
    DiscretizationGrid,
    EntropyReport,
    NoiseBudget,
    SampleBlock,
    SlotKind,
    StateKind,
    StateModel,
    bin_index,
    gaussian_bin_probs,
    state_variances,
)


class TestStateModel:
    def test_vacuum_variances(self):
        assert state_variances(StateModel.vacuum()) == (0.5, 0.5)

    def test_squeezed_3p8_db(self):
        vq, vp = state_variances(StateModel.squeezed(3.8))
        assert vq == pytest.approx(0.2084, abs=1e-4)
        assert vp == pytest.approx(1.1994, abs=1e-4)
        assert vq * vp == pytest.approx(0.25, rel=1e-12)

    def test_thermal_unit_excess(self):
        assert state_variances(StateModel.thermal(1.0)) == (1.0, 1.0)

    @pytest.mark.parametrize("db", np.linspace(0.0, 10.0, 11))
    def test_pure_minimum_uncertainty_product(self, db):
        vq, vp = state_variances(StateModel.squeezed(db))
        assert vq * vp == pytest.approx(0.25, rel=1e-12)

    def test_purity_flag(self):
        assert StateModel.squeezed(3.8).is_pure()
        assert not StateModel.squeezed(3.8, 5.0).is_pure()

    def test_field_validation(self):
        with pytest.raises(ValueError):
            StateModel.thermal(-0.1)
        with pytest.raises(ValueError):
            StateModel(StateKind.VACUUM, excess_noise_snl=1.0)
        with pytest.raises(ValueError):
            StateModel(StateKind.SQUEEZED, squeezing_db=-1.0)


class TestGrid:
    def test_default_range_rule(self):
        grid = DiscretizationGrid(delta=0.01536, adc_bits=10)
        assert grid.adc_range == pytest.approx(7.86432, rel=1e-12)
        assert grid.delta == 2.0 * grid.adc_range / grid.bin_count
        assert grid.bin_count == 1024

    def test_inconsistent_range_rejected(self):
        with pytest.raises(ValueError):
            DiscretizationGrid(delta=0.01536, adc_bits=10, adc_range=1.0)

    def test_effective_grid_shares_range(self):
        grid = DiscretizationGrid(delta=0.01536, adc_bits=10)
        eff = grid.effective(6)
        assert eff.adc_range == grid.adc_range
        assert eff.delta == pytest.approx(0.24576, rel=1e-12)
        assert eff.bin_count == 64


class TestBinIndex:
    def test_zero_maps_to_bin_zero(self):
        grid = DiscretizationGrid(delta=0.01536, adc_bits=10)
        assert bin_index(0.0, grid) == (0, False)

    def test_floor_rule(self):
        grid = DiscretizationGrid(delta=0.01536, adc_bits=10)
        assert bin_index(0.0160, grid) == (1, False)

    def test_clamps_above_range_on_6_bit_grid(self):
        grid = DiscretizationGrid(delta=0.01536, adc_bits=6)
        idx, sat = bin_index(grid.adc_range + 1e-9, grid)
        assert (idx, sat) == (31, True)
        idx, sat = bin_index(-grid.adc_range - 1e-9, grid)
        assert (idx, sat) == (-32, True)

    @given(st.floats(min_value=-100.0, max_value=100.0),
           st.floats(min_value=-100.0, max_value=100.0))
    def test_monotone_nondecreasing(self, a, b):
        grid = DiscretizationGrid(delta=0.01536, adc_bits=10)
        lo, hi = sorted((a, b))
        assert bin_index(lo, grid)[0] <= bin_index(hi, grid)[0]

    def test_adjacent_bins_share_one_boundary(self):
        grid = DiscretizationGrid(delta=0.25, adc_bits=4)
        # just below a boundary stays in the lower bin, the boundary itself
        # starts the upper one under the floor rule
        k = 3
        below = np.nextafter(k * grid.delta, -np.inf)
        assert bin_index(below, grid)[0] == k - 1
        assert bin_index(k * grid.delta, grid)[0] == k

    def test_vectorized_matches_scalar(self):
        grid = DiscretizationGrid(delta=0.01536, adc_bits=8)
        values = np.linspace(-3.0, 3.0, 1001)
        idx, sat = bin_index(values, grid)
        for v, i, s in zip(values[::100], idx[::100], sat[::100]):
            assert bin_index(float(v), grid) == (i, s)


class TestGaussianBinProbs:
    def test_total_mass_complements_tails(self):
        # sum over in-range bins + the two tails = 1, against the normal CDF
        grid = DiscretizationGrid(delta=0.5, adc_bits=3)   # range +-2
        var = 1.3
        k, p = gaussian_bin_probs(var, grid.delta)
        in_range = (k >= grid.min_index) & (k <= grid.max_index)
        sigma = np.sqrt(var)
        tail = norm.cdf(-grid.adc_range / sigma) + norm.sf(grid.adc_range / sigma)
        assert p[in_range].sum() + tail == pytest.approx(1.0, abs=1e-12)

    def test_probabilities_sum_to_one(self):
        _, p = gaussian_bin_probs(0.5, 0.01536)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)


def _block(indices, kinds, saturated=None, bits=10):
    indices = np.asarray(indices, dtype=np.int16)
    if saturated is None:
        saturated = np.zeros(len(indices), dtype=bool)
    return SampleBlock(indices=indices, kinds=np.asarray(kinds, dtype=np.uint8),
                       saturated=np.asarray(saturated, dtype=bool),
                       grid=DiscretizationGrid(adc_bits=bits),
                       sample_rate_hz=200e6)


class TestSampleBlock:
    def test_counts_and_selection(self):
        blk = _block([1, 2, 3, 4], [0, 1, 0, 2])
        assert blk.count(SlotKind.DATA) == 2
        assert blk.count(SlotKind.CHECK) == 1
        assert list(blk.bin_indices(SlotKind.DATA)) == [1, 3]

    def test_saturated_excluded_by_default(self):
        blk = _block([1, 2], [0, 0], saturated=[False, True])
        assert list(blk.bin_indices(SlotKind.DATA)) == [1]
        assert blk.saturation_fraction == 0.5

    def test_values_use_bin_midpoints(self):
        blk = _block([0, 2], [0, 0])
        np.testing.assert_allclose(blk.values(SlotKind.DATA),
                                   [0.5 * 0.01536, 2.5 * 0.01536])

    def test_arrays_are_read_only(self):
        blk = _block([1], [0])
        with pytest.raises(ValueError):
            blk.indices[0] = 5


class TestNoiseBudget:
    def test_decomposition_properties(self):
        b = NoiseBudget(var_total_vac=0.53, var_total_squ=0.24, var_total_ant=1.23,
                        var_electronic=0.03, var_lo=0.0)
        assert b.var_snl == pytest.approx(0.50)
        assert b.var_squ == pytest.approx(0.21)
        assert b.electronic_fraction == pytest.approx(0.03 / 0.53)

    def test_unphysical_rejected(self):
        with pytest.raises(ValueError):
            NoiseBudget(var_total_vac=0.02, var_total_squ=0.24, var_total_ant=1.2,
                        var_electronic=0.03, var_lo=0.0)


class TestEntropyReport:
    def test_bound_consistency_enforced(self):
        with pytest.raises(ValueError):
            EntropyReport(h_max=7.0, h_min_plain=7.5, c_incompat=3.75e-5,
                          delta_term=119.0, h_low_smooth=99.0, epsilon=1e-6,
                          n_check=10, n_data=100)

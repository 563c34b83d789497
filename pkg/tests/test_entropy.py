import numpy as np
import pytest
from scipy.stats import chisquare

from sdiqrng.core import (
    DiscretizationGrid,
    EntropyReport,
    NoiseBudget,
    SampleBlock,
    SlotKind,
    StateModel,
    gaussian_bin_probs,
    state_variances,
)
from sdiqrng.entropy import (
    CalibrationError,
    _prolate_radial1_squared,
    calibrate_noise_budget,
    certify_block,
    curve_entropy_vs_noise,
    curve_entropy_vs_resolution,
    delta_correction,
    eup_bound,
    gaussian_max_entropy,
    gaussian_min_entropy,
    histogram,
    incompatibility,
    insecure_fraction,
    max_entropy,
    min_entropy,
    parse_entropy_report,
    format_entropy_report,
    shannon_entropy,
    smooth_min_entropy_lower,
)
from sdiqrng.homodyne import (
    LoModel,
    ProtocolSchedule,
    lo_leakage_variance,
    run_schedule,
    sample_quadrature,
)

DELTA = 0.01536
GRID = DiscretizationGrid(delta=DELTA, adc_bits=10)
GRID6 = GRID.effective(6)


def slepian_lambda0(c: float, nodes: int = 400) -> float:
    """Independent oracle: largest eigenvalue of the sinc-kernel
    concentration operator on [-1, 1] (Nystrom discretization).

    The incompatibility of two width-delta binned quadratures equals this
    eigenvalue at c = dq*dp/4, which pins both the spheroidal-function
    convention and the series evaluation.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    dx = x[:, None] - x[None, :]
    K = np.empty_like(dx)
    nz = dx != 0
    K[nz] = np.sin(c * dx[nz]) / (np.pi * dx[nz])
    K[~nz] = c / np.pi
    sw = np.sqrt(w)
    return float(np.linalg.eigvalsh(sw[:, None] * K * sw[None, :])[-1])


def _block_from_indices(indices, kind=SlotKind.DATA, grid=GRID):
    indices = np.asarray(indices, dtype=np.int16)
    return SampleBlock(indices=indices,
                       kinds=np.full(len(indices), int(kind), dtype=np.uint8),
                       saturated=np.zeros(len(indices), dtype=bool),
                       grid=grid, sample_rate_hz=200e6)


class TestHistogram:
    def test_single_sample(self):
        h = histogram(_block_from_indices([3]), SlotKind.DATA)
        assert list(h.bins) == [3] and list(h.probs) == [1.0]

    def test_two_bins(self):
        h = histogram(_block_from_indices([0, 1]), SlotKind.DATA)
        assert list(h.bins) == [0, 1]
        np.testing.assert_allclose(h.probs, [0.5, 0.5])

    def test_no_usable_samples_raises(self):
        with pytest.raises(ValueError):
            histogram(_block_from_indices([1]), SlotKind.CHECK)

    def test_vacuum_chi2_against_bin_mass_oracle(self):
        n = 1_000_000
        x = sample_quadrature(StateModel.vacuum(), "P", n, rng_seed=42)
        idx = np.floor(x / DELTA).astype(np.int16)
        h = histogram(_block_from_indices(idx), SlotKind.DATA)
        k, p = gaussian_bin_probs(0.5, DELTA)
        expected = dict(zip(k, n * p))
        obs, exp = [], []
        spill_obs = spill_exp = 0.0
        counts = dict(zip(h.bins, h.probs * h.n_used))
        for kk in sorted(set(expected) | set(counts)):
            e = expected.get(kk, 0.0)
            o = counts.get(kk, 0.0)
            if e < 5.0:       # pool sparse tail bins
                spill_obs += o
                spill_exp += e
            else:
                obs.append(o)
                exp.append(e)
        obs.append(spill_obs)
        exp.append(spill_exp)
        exp = np.array(exp) * (sum(obs) / sum(exp))
        _, pval = chisquare(obs, exp)
        assert pval > 0.001

    def test_saturated_counted_separately(self):
        blk = SampleBlock(indices=np.array([1, 2], dtype=np.int16),
                          kinds=np.zeros(2, dtype=np.uint8),
                          saturated=np.array([False, True]),
                          grid=GRID, sample_rate_hz=200e6)
        h = histogram(blk, SlotKind.DATA)
        assert h.n_used == 1 and h.n_saturated == 1


class TestMaxEntropy:
    def test_uniform_two_bins(self):
        assert max_entropy([0.5, 0.5]) == pytest.approx(1.0)

    def test_point_mass(self):
        assert max_entropy([1.0]) == 0.0

    def test_discretized_gaussian_matches_closed_form(self):
        # squeezed check quadrature at the reference precision: the erf-sum
        # agrees with log2(sqrt(8 pi) sigma / delta) within 0.01 bits
        var = 0.5 * 10 ** -0.38
        exact = gaussian_max_entropy(var, DELTA)
        closed = np.log2(np.sqrt(8 * np.pi * var) / DELTA)
        assert closed == pytest.approx(7.22, abs=0.01)
        assert exact == pytest.approx(closed, abs=0.01)

    def test_renyi_ordering(self):
        _, p = gaussian_bin_probs(0.3, 0.05)
        assert max_entropy(p) >= shannon_entropy(p) >= min_entropy(p) >= 0.0


class TestMinEntropy:
    @pytest.mark.parametrize("n", [1, 2, 4, 6])
    def test_uniform_bits(self, n):
        assert min_entropy(np.full(2 ** n, 2.0 ** -n)) == pytest.approx(float(n))

    def test_point_mass(self):
        assert min_entropy([1.0]) == 0.0

    def test_small_delta_central_bin_form(self):
        var = 0.7
        h = gaussian_min_entropy(var, DELTA)
        assert h == pytest.approx(np.log2(np.sqrt(2 * np.pi * var) / DELTA), abs=0.01)


class TestIncompatibility:
    def test_reference_precision_value(self):
        c = incompatibility(DELTA, DELTA)
        assert 3.70e-5 <= c <= 3.81e-5
        assert 14.68 <= -np.log2(c) <= 14.72

    def test_small_argument_limit(self):
        dq = dp = 1e-4
        assert incompatibility(dq, dp) == pytest.approx(dq * dp / (2 * np.pi), rel=1e-12)

    def test_series_agrees_with_small_argument_at_cutoff(self):
        x = 9e-4  # just inside the small-argument regime
        assert _prolate_radial1_squared(x) == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize("c", [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 15.0])
    def test_series_matches_concentration_operator_oracle(self, c):
        series = (2 * c / np.pi) * _prolate_radial1_squared(c)
        assert series == pytest.approx(slepian_lambda0(c), rel=1e-8)

    def test_monotone_in_bin_area(self):
        deltas = np.sqrt(4.0 * np.array([0.01, 0.05, 0.2, 1.0, 3.0, 8.0]))
        cs = [incompatibility(d, d) for d in deltas]
        assert all(a < b for a, b in zip(cs, cs[1:]))
        assert all(0 < c < 1 for c in cs)


class TestEupChain:
    def test_eup_trivial(self):
        assert eup_bound(0.5, 0.0) == pytest.approx(1.0)

    def test_eup_reference_values(self):
        c = incompatibility(DELTA, DELTA)
        assert eup_bound(c, 7.22) == pytest.approx(7.48, abs=0.01)

    def test_eup_saturation(self):
        c = 3.755e-5
        assert eup_bound(c, -np.log2(c)) == pytest.approx(0.0, abs=1e-12)

    def test_delta_closed_form_at_zero(self):
        eps = 1e-6
        expected = 4 * np.sqrt(np.log2(2 / eps ** 2)) * np.log2(3)
        assert delta_correction(eps, 0.0) == pytest.approx(expected, rel=1e-12)

    def test_delta_reference_magnitude(self):
        d = delta_correction(1e-6, 7.23)
        assert d == pytest.approx(119.5, abs=1.0)
        assert d / np.sqrt(2e5) == pytest.approx(0.27, abs=0.01)

    def test_delta_monotonicity(self):
        assert delta_correction(1e-6, 8.0) > delta_correction(1e-6, 7.0)
        assert delta_correction(1e-8, 7.0) > delta_correction(1e-6, 7.0)

    def test_smooth_bound_operating_point_from_simulated_data(self):
        # reference operating point reproduced from simulated check data
        n = 200_000
        x = sample_quadrature(StateModel.squeezed(3.8), "Q", n, rng_seed=77)
        idx = np.floor(x / DELTA).astype(np.int16)
        h = histogram(_block_from_indices(idx), SlotKind.DATA)
        h_max = max_entropy(h)
        c = incompatibility(DELTA, DELTA)
        assert smooth_min_entropy_lower(c, h_max, n, 1e-6) == pytest.approx(7.21, abs=0.1)

    def test_smooth_bound_approaches_eup(self):
        c, h = 3.755e-5, 7.22
        assert smooth_min_entropy_lower(c, h, 10 ** 12, 1e-6) == pytest.approx(
            eup_bound(c, h), abs=1e-3)

    def test_smooth_bound_negative_for_tiny_n(self):
        assert smooth_min_entropy_lower(3.755e-5, 7.22, 100, 1e-6) < 0

    def test_smooth_bound_monotonicities(self):
        c = 3.755e-5
        base = smooth_min_entropy_lower(c, 7.0, 10 ** 5, 1e-6)
        assert smooth_min_entropy_lower(c, 7.5, 10 ** 5, 1e-6) < base
        assert smooth_min_entropy_lower(c, 7.0, 10 ** 6, 1e-6) > base
        assert smooth_min_entropy_lower(c, 7.0, 10 ** 5, 1e-8) < base


class TestEarlyEup:
    @pytest.mark.parametrize("state", [StateModel.vacuum(),
                                       StateModel.squeezed(3.8),
                                       StateModel.squeezed(8.0)])
    def test_shannon_sum_dominates_log_incompatibility(self, state):
        # discretized H(P) + H(Q) >= -log2 c for simulated pure states
        n = 200_000
        hs = []
        for which, seed in (("Q", 101), ("P", 102)):
            x = sample_quadrature(state, which, n, rng_seed=seed)
            idx = np.floor(x / DELTA).astype(np.int64)
            counts = np.bincount(idx - idx.min())
            hs.append(shannon_entropy(counts[counts > 0] / n))
        assert hs[0] + hs[1] >= -np.log2(incompatibility(DELTA, DELTA))


class TestPureStateDuality:
    def test_certified_bound_equals_antisqueezed_min_entropy(self):
        # |eup_bound - H_min(anti-squeezed)| < 0.05 bits across 0-10 dB
        c = incompatibility(DELTA, DELTA)
        for db in np.linspace(0.0, 10.0, 21):
            var_q, var_p = state_variances(StateModel.squeezed(db))
            bound = eup_bound(c, gaussian_max_entropy(var_q, DELTA))
            h_min = gaussian_min_entropy(var_p, DELTA)
            assert abs(bound - h_min) < 0.05, db

    def test_check_noise_never_helps(self):
        # classical excess noise on the check quadrature only lowers the bound
        c = incompatibility(DELTA, DELTA)
        var_q, _ = state_variances(StateModel.squeezed(3.8))
        bounds = [eup_bound(c, gaussian_max_entropy(var_q + w, DELTA))
                  for w in (0.0, 0.05, 0.2, 0.5, 1.0)]
        assert all(a > b for a, b in zip(bounds, bounds[1:]))


def _honest_blocks(lo=None, var_e=0.0305, n_main=200_000, n_vac=100_000,
                   state=StateModel.squeezed(3.8), seed=5150):
    lo = lo or LoModel.balanced()
    vac = run_schedule(StateModel.vacuum(), lo, GRID, ProtocolSchedule(),
                       n_vac, seed, seed + 1, var_electronic=var_e)
    main = run_schedule(state, lo, GRID, ProtocolSchedule(),
                        n_main, seed + 2, seed + 3, var_electronic=var_e)
    return vac, main


class TestCalibration:
    def test_reference_electronic_fraction(self):
        # electronic noise at the reference level is 5.75% of measured vacuum
        var_e = 0.5 * 10 ** (-12.146 / 10)
        vac, main = _honest_blocks(var_e=var_e, n_main=400_000, n_vac=400_000)
        budget = calibrate_noise_budget(vac, main, main, main, LoModel.balanced())
        assert budget.electronic_fraction == pytest.approx(0.0575, abs=0.003)

    def test_honest_lo_fraction_negligible(self):
        vac, main = _honest_blocks()
        budget = calibrate_noise_budget(vac, main, main, main, LoModel.balanced())
        assert budget.lo_fraction < 1e-6

    def test_no_detection_noise_gives_snl_exactly(self):
        vac, main = _honest_blocks(var_e=0.0)
        budget = calibrate_noise_budget(vac, main, main, main, LoModel.balanced())
        assert budget.var_snl == budget.var_total_vac

    def test_unphysical_budget_rejected(self):
        vac, main = _honest_blocks(var_e=0.0305)
        strong_lo = LoModel(0.212, 0.789, excess_noise_db=10.0)  # leak > totals
        with pytest.raises(CalibrationError):
            calibrate_noise_budget(vac, main, main, main, strong_lo)

    def test_too_few_samples_rejected(self):
        vac, main = _honest_blocks(n_main=4000, n_vac=4000)
        with pytest.raises(CalibrationError):
            calibrate_noise_budget(vac, main, main, main, LoModel.balanced(),
                                   min_samples=10 ** 6)


def _analytic_report(grid, var_check=0.5 * 10 ** -0.38, n_p=200_000, eps=1e-6):
    h_max = float(np.log2(np.sqrt(8 * np.pi * var_check) / grid.delta))
    c = incompatibility(grid.delta, grid.delta)
    return EntropyReport(
        h_max=h_max, h_min_plain=h_max + 0.5, c_incompat=c,
        delta_term=delta_correction(eps, h_max),
        h_low_smooth=smooth_min_entropy_lower(c, h_max, n_p, eps),
        epsilon=eps, n_check=n_p, n_data=n_p)


class TestInsecureFraction:
    def test_no_lo_noise_no_insecurity(self):
        report = _analytic_report(GRID6)
        budget = NoiseBudget(0.53, 0.24, 1.23, 0.03, 0.0)
        assert insecure_fraction(report, budget, GRID6) == 0.0

    def test_worked_attack_operating_point(self):
        report = _analytic_report(GRID6)
        var_lo = lo_leakage_variance(LoModel(0.212, 0.789, excess_noise_db=3.0))
        budget = NoiseBudget(0.5 + var_lo, 0.21 + var_lo, 1.2 + var_lo, 0.0, var_lo)
        assert insecure_fraction(report, budget, GRID6) == pytest.approx(0.310, abs=0.015)

    def test_monotone_in_lo_noise(self):
        report = _analytic_report(GRID6)
        fractions = []
        for var_lo in np.linspace(0.0, 0.8, 9):
            budget = NoiseBudget(1.4, 1.1, 2.1, 0.03, var_lo)
            fractions.append(insecure_fraction(report, budget, GRID6))
        assert all(a <= b for a, b in zip(fractions, fractions[1:]))
        assert fractions[0] == 0.0 and fractions[-1] > 0.3


class TestCurves:
    def test_noise_curve_zero_level_degenerate(self):
        t = curve_entropy_vs_noise(GRID, [0.0])
        _, h_min_th, h_low_th, h_low_squ = t.rows[0]
        assert h_low_th == h_low_squ
        assert h_min_th == pytest.approx(h_low_th, abs=0.01)

    def test_noise_curve_monotonicities(self):
        t = curve_entropy_vs_noise(GRID, np.linspace(0.0, 5.0, 11))
        h_min = t.column("h_min_thermal")
        h_low = t.column("h_low_thermal")
        h_squ = t.column("h_low_squeezed")
        assert np.all(np.diff(h_min) > 0)
        assert np.all(np.diff(h_low) < 0)
        assert np.all(np.diff(h_squ) > 0)

    def test_squeezed_tracks_thermal_min_entropy(self):
        dbs = np.linspace(0.0, 10.0, 21)
        t = curve_entropy_vs_noise(GRID, 10 ** (dbs / 10.0) - 1.0)
        gap = np.abs(t.column("h_low_squeezed") - t.column("h_min_thermal"))
        assert gap.max() < 0.05

    def test_thermal_bound_crosses_zero(self):
        t = curve_entropy_vs_noise(GRID, np.logspace(3.5, 4.5, 9))
        h_low = t.column("h_low_thermal")
        assert h_low[0] > 0 > h_low[-1]

    def test_resolution_curve_shape(self):
        states = (StateModel.vacuum(), StateModel.squeezed(3.8), StateModel.squeezed(8.0))
        t = curve_entropy_vs_resolution(states, DELTA, range(1, 17))
        for name in t.columns[1:]:
            col = t.column(name)
            assert col[0] <= 0 and col[1] <= 0      # no yield at 1-2 bits
            slopes = np.diff(col)[-6:]
            assert np.all(np.abs(slopes - 1.0) <= 0.02)

    def test_resolution_curve_state_ordering(self):
        states = (StateModel.vacuum(), StateModel.squeezed(3.8), StateModel.squeezed(8.0))
        t = curve_entropy_vs_resolution(states, DELTA, range(1, 17))
        vac = t.column("h_low_vacuum")
        s38 = t.column(t.columns[2])
        s80 = t.column(t.columns[3])
        assert np.all(vac <= s38 + 1e-12) and np.all(s38 <= s80 + 1e-12)
        # strict once the grid resolves the states (a 1-bit ADC sees only sign)
        assert np.all(vac[1:] < s38[1:]) and np.all(s38[3:] < s80[3:])

    def test_csv_round_trip_is_deterministic(self):
        t1 = curve_entropy_vs_noise(GRID, [0.1, 1.0])
        t2 = curve_entropy_vs_noise(GRID, [0.1, 1.0])
        assert t1.to_csv() == t2.to_csv()
        assert t1.to_csv().splitlines()[0] == \
            "noise_level_snl,h_min_thermal,h_low_thermal,h_low_squeezed"


class TestCertifyBlock:
    def test_effective_grid_certification(self):
        _, main = _honest_blocks(var_e=0.0305)
        nominal = certify_block(main, 5e-7)
        effective = certify_block(main, 5e-7, grid=GRID6)
        assert nominal.h_low_smooth == pytest.approx(7.1, abs=0.2)
        assert effective.h_low_smooth == pytest.approx(3.25, abs=0.15)
        assert effective.h_low_smooth < effective.h_min_plain
        assert nominal.h_low_smooth < nominal.h_min_plain

    def test_report_text_round_trip(self):
        _, main = _honest_blocks(n_main=20_000, n_vac=20_000)
        rep = certify_block(main, 5e-7)
        back = parse_entropy_report(format_entropy_report(rep, prefix="x."), prefix="x.")
        assert back == rep

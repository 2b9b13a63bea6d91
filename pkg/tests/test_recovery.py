"""Recovery tests: spectral estimate, detection, least squares, pursuit."""

import numpy as np
import pytest

from pftcs import (
    DetectedComponent,
    GridPoint,
    KernelParams,
    MeasurementSet,
    ParameterGrid,
    PolyPhaseComponent,
    RankDeficiencyError,
    RecoverConfig,
    ThresholdPolicy,
    amplitude_correction,
    cs_spectral_estimate,
    detect_components,
    kernel_values_at,
    pft,
    recover,
    reconstruct,
    select_measurements,
    sweep,
    synthesize_components,
)
from pftcs.recovery import _best_pair, _detect_bins, _grid_estimates, _kernel_matrix


def direct_estimate(meas, params):
    """Literal double-loop evaluation of the masked spectral estimate."""
    m_len = meas.signal_length
    phi = kernel_values_at(params, meas.positions, m_len)
    out = np.zeros(m_len, dtype=np.complex128)
    for k in range(m_len):
        for pos, val, f in zip(meas.positions, meas.values, phi):
            q = pos - meas.index_origin
            out[k] += val * f * np.exp(-2j * np.pi * k * q / m_len)
    return out * (m_len / meas.count)


def chirp_measurements(length=64, count=24, seed=8, coeffs=(10.0, 24.0),
                       amplitude=1.0, index_origin=0):
    comp = PolyPhaseComponent(amplitude, coeffs)
    samples = synthesize_components([comp], length, index_origin)
    positions = select_measurements(length, count, index_origin, seed)
    return MeasurementSet.from_samples(samples, positions, length, index_origin), comp


class TestSpectralEstimate:
    def test_matches_double_loop(self):
        meas, _ = chirp_measurements(length=32, count=12, index_origin=-16)
        params = KernelParams((24.0,))
        expected = direct_estimate(meas, params)
        got = cs_spectral_estimate(meas, params).coeffs
        np.testing.assert_allclose(got, expected, atol=1e-12 * np.max(np.abs(expected)))

    def test_full_data_equals_transform(self):
        length = 128
        comp = PolyPhaseComponent(1.0 - 0.5j, (12.0, -40.0, 6.0))
        samples = synthesize_components([comp], length)
        meas = MeasurementSet.from_samples(samples, np.arange(length), length)
        params = KernelParams((-40.0, 6.0))
        est = cs_spectral_estimate(meas, params).coeffs
        spec = pft(samples, params).coeffs
        np.testing.assert_allclose(est, spec, atol=1e-12 * np.max(np.abs(spec)))

    def test_fft_batch_matches_direct_estimate(self):
        meas, _ = chirp_measurements(length=64, count=20, index_origin=-32)
        grid = ParameterGrid.single(2, (0.0, 16.0, 24.0))
        points = grid.points()
        kernels = _kernel_matrix(meas, points)
        batch = _grid_estimates(meas, kernels, meas.values)
        for point in points:
            single = cs_spectral_estimate(meas, point.kernel_params).coeffs
            np.testing.assert_allclose(batch[:, point.index], single,
                                       atol=1e-9 * np.max(np.abs(single)))

    def test_unbiased_at_matched_bin(self):
        # with the (M/N) scaling the matched bin reads M * amplitude exactly
        # when every sample is kept
        length = 32
        meas, comp = chirp_measurements(length=length, count=length,
                                        coeffs=(5.0, 12.0), amplitude=2.0)
        est = cs_spectral_estimate(meas, KernelParams((12.0,))).coeffs
        assert abs(est[5]) == pytest.approx(length * 2.0, rel=1e-12)


class TestAtomFactorization:
    """Dictionary columns factor into inverse kernel times Fourier atom."""

    def test_atom_is_kernel_conjugate_times_fourier(self):
        from pftcs.recovery import _atom_matrix

        meas, _ = chirp_measurements(length=64, count=20, index_origin=-32)
        params = KernelParams((-24.0, 8.0))
        comp = DetectedComponent(params, 13, 1.0)
        atoms = _atom_matrix(meas, [comp])
        kernel = kernel_values_at(params, meas.positions, meas.signal_length)
        fourier = np.exp(2j * np.pi * 13 * meas.positions / meas.signal_length)
        np.testing.assert_allclose(atoms[:, 0], np.conj(kernel) * fourier,
                                   atol=1e-12)

    def test_matrix_form(self):
        from pftcs.recovery import _atom_matrix

        meas, _ = chirp_measurements(length=32, count=16)
        params = KernelParams((6.0,))
        comps = [DetectedComponent(params, b, 1.0) for b in (2, 9, 20)]
        atoms = _atom_matrix(meas, comps)
        kernel = kernel_values_at(params, meas.positions, meas.signal_length)
        fourier = np.exp(
            2j * np.pi * np.outer(meas.positions, [2, 9, 20]) / meas.signal_length
        )
        np.testing.assert_allclose(atoms, np.conj(kernel)[:, None] * fourier,
                                   atol=1e-12)


class TestThresholdPolicy:
    def test_relative_threshold(self):
        policy = ThresholdPolicy.relative(0.25)
        assert policy.threshold([1.0, 8.0, 2.0]) == pytest.approx(2.0)

    def test_statistic_threshold_frozen_value(self):
        # median 4.5 over 8 bins at confidence 0.99:
        # sigma = 4.5 / sqrt(2 ln 2), threshold = sigma * sqrt(2 ln(8/0.01))
        policy = ThresholdPolicy.statistic(0.99)
        mags = np.arange(1.0, 9.0)
        assert policy.threshold(mags) == pytest.approx(13.974551436197805, rel=1e-12)

    def test_statistic_scales_with_magnitudes(self):
        policy = ThresholdPolicy.statistic(0.999)
        mags = np.abs(np.random.default_rng(0).normal(size=64)) + 0.1
        assert policy.threshold(3 * mags) == pytest.approx(3 * policy.threshold(mags))

    def test_empty_magnitudes(self):
        assert ThresholdPolicy.relative().threshold([]) == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            ThresholdPolicy("quantile")
        with pytest.raises(ValueError):
            ThresholdPolicy.relative(0.0)
        with pytest.raises(ValueError):
            ThresholdPolicy.statistic(1.0)


class TestDetection:
    def test_strongest_first_and_truncation(self):
        mags = np.array([0.0, 5.0, 9.0, 5.0, 1.0])
        policy = ThresholdPolicy.relative(0.5)
        assert _detect_bins(mags, policy) == [2, 1, 3]
        assert _detect_bins(mags, policy, max_count=2) == [2, 1]

    def test_tie_breaks_to_lower_bin(self):
        mags = np.array([4.0, 0.0, 4.0, 0.0])
        assert _detect_bins(mags, ThresholdPolicy.relative(1.0)) == [0, 2]

    def test_zero_spectrum_detects_nothing(self):
        mags = np.zeros(8)
        assert _detect_bins(mags, ThresholdPolicy.relative(0.5)) == []

    def test_detect_components_wraps_bins(self):
        from pftcs import Spectrum

        spec = Spectrum(np.array([0.0, 3.0, 0.5, 0.0]))
        found = detect_components(spec, ThresholdPolicy.relative(0.5),
                                  params=KernelParams((7.0,)))
        assert len(found) == 1
        assert found[0].freq_bin == 1
        assert found[0].raw_magnitude == pytest.approx(3.0)
        assert found[0].phase_coeffs() == (1.0, 7.0)


class TestParameterGrid:
    def test_from_range_includes_endpoints(self):
        grid = ParameterGrid.from_range(3, -640.0, 640.0, 32.0)
        assert grid.n_points == 41
        points = grid.points()
        assert points[0].values == (-640.0,)
        assert points[40].values == (640.0,)
        # 0-based index 36 carries rate 512, index 28 carries rate 256
        assert points[36].values == (512.0,)
        assert points[28].values == (256.0,)

    def test_kernel_params_negate_rates(self):
        point = GridPoint(0, ((2, 256.0), (3, -32.0)))
        assert point.kernel_params == KernelParams((-256.0, 32.0))

    def test_missing_orders_fill_with_zero(self):
        point = GridPoint(0, ((3, 16.0),))
        assert point.kernel_params == KernelParams((0.0, -16.0))

    def test_cross_product_enumeration(self):
        grid = ParameterGrid(((2, (0.0, 1.0)), (3, (5.0, 6.0, 7.0))))
        assert grid.n_points == 6
        points = grid.points()
        assert points[0].values == (0.0, 5.0)
        assert points[1].values == (0.0, 6.0)
        assert points[5].values == (1.0, 7.0)
        assert [p.index for p in points] == list(range(6))

    def test_validation(self):
        with pytest.raises(ValueError):
            ParameterGrid(())
        with pytest.raises(ValueError):
            ParameterGrid.single(1, (0.0,))
        with pytest.raises(ValueError):
            ParameterGrid.single(2, ())
        with pytest.raises(ValueError):
            ParameterGrid.single(2, (3.0, 1.0))
        with pytest.raises(ValueError):
            ParameterGrid(((2, (0.0,)), (2, (1.0,))))
        with pytest.raises(ValueError):
            ParameterGrid.from_range(2, 0.0, 10.0, -1.0)


class TestAmplitudeCorrection:
    def test_exact_amplitudes_noiseless(self):
        length = 64
        comps = [
            PolyPhaseComponent(1.5 - 0.5j, (10.0, 24.0)),
            PolyPhaseComponent(0.7j, (30.0, -8.0)),
        ]
        samples = synthesize_components(comps, length)
        positions = select_measurements(length, 32, seed=4)
        meas = MeasurementSet.from_samples(samples, positions, length)
        detected = [
            DetectedComponent(KernelParams((24.0,)), 10, 1.0),
            DetectedComponent(KernelParams((-8.0,)), 30, 1.0),
        ]
        amps = amplitude_correction(meas, detected)
        np.testing.assert_allclose(amps, [1.5 - 0.5j, 0.7j], atol=1e-10)

    def test_residual_orthogonal_to_atoms(self):
        from pftcs.recovery import _atom_matrix

        rng = np.random.default_rng(21)
        length = 128
        meas, _ = chirp_measurements(length=length, count=40, seed=3)
        y = rng.normal(size=40) + 1j * rng.normal(size=40)
        meas = MeasurementSet(meas.positions, y, length)
        detected = [
            DetectedComponent(KernelParams((rate,)), b, 1.0)
            for rate, b in [(0.0, 5), (16.0, 40), (-32.0, 90)]
        ]
        amps = amplitude_correction(meas, detected)
        atoms = _atom_matrix(meas, detected)
        residual = y - atoms @ amps
        # least-squares optimality: the residual has no component along
        # any atom
        assert np.max(np.abs(atoms.conj().T @ residual)) < 1e-9 * np.linalg.norm(y)

    def test_matches_qr_least_squares(self):
        from pftcs.recovery import _atom_matrix

        rng = np.random.default_rng(22)
        meas, _ = chirp_measurements(length=64, count=24, seed=9)
        y = rng.normal(size=24) + 1j * rng.normal(size=24)
        meas = MeasurementSet(meas.positions, y, 64)
        detected = [
            DetectedComponent(KernelParams((8.0,)), b, 1.0) for b in (3, 17, 50)
        ]
        amps = amplitude_correction(meas, detected)
        oracle, *_ = np.linalg.lstsq(_atom_matrix(meas, detected), y, rcond=None)
        np.testing.assert_allclose(amps, oracle, atol=1e-9)

    def test_underdetermined_raises(self):
        meas, _ = chirp_measurements(length=32, count=2, seed=5)
        detected = [
            DetectedComponent(KernelParams(), b, 1.0) for b in (1, 2, 3)
        ]
        with pytest.raises(RankDeficiencyError):
            amplitude_correction(meas, detected)

    def test_duplicate_atoms_raise(self):
        meas, _ = chirp_measurements(length=32, count=8, seed=5)
        detected = [DetectedComponent(KernelParams(), 4, 1.0)] * 2
        with pytest.raises(RankDeficiencyError):
            amplitude_correction(meas, detected)

    def test_empty_support(self):
        meas, _ = chirp_measurements()
        assert amplitude_correction(meas, []).size == 0


class TestSweep:
    def grid(self):
        return ParameterGrid.single(2, tuple(float(v) for v in range(-32, 33, 8)))

    def test_matched_point_wins(self):
        meas, comp = chirp_measurements(length=128, count=32, seed=2,
                                        coeffs=(20.0, -24.0))
        points = sweep(meas, self.grid(), ThresholdPolicy.relative(0.5))
        best = max(points, key=lambda p: p.score)
        # rate 24 demodulates the c2 = -24 component
        assert dict(best.coeffs)[2] == pytest.approx(24.0)
        assert best.peak_bin == 20

    def test_scores_scale_linearly_argmax_fixed(self):
        meas, _ = chirp_measurements(length=128, count=32, seed=2,
                                     coeffs=(20.0, -24.0))
        scaled = MeasurementSet(meas.positions, 3.0 * meas.values,
                                meas.signal_length, meas.index_origin)
        for policy in (ThresholdPolicy.relative(0.5), ThresholdPolicy.statistic(0.999)):
            base = sweep(meas, self.grid(), policy)
            other = sweep(scaled, self.grid(), policy)
            assert np.argmax([p.score for p in base]) == np.argmax(
                [p.score for p in other]
            )
            for a, b in zip(base, other):
                assert b.score == pytest.approx(3.0 * a.score, rel=1e-9)
                assert a.peak_bin == b.peak_bin

    def test_no_detection_scores_zero(self):
        meas, _ = chirp_measurements(length=64, count=64, coeffs=(7.0, 16.0))
        points = sweep(meas, ParameterGrid.single(2, (16.0,)),
                       ThresholdPolicy.relative(1.0))
        assert points[0].score > 0
        zero = [p for p in points if p.score == 0.0]
        assert all(p.peak_bin is None for p in zero)


class TestRecover:
    def grid(self):
        return ParameterGrid.single(2, (0.0, 8.0, 16.0, 24.0, 32.0))

    def test_single_component_exact(self):
        meas, comp = chirp_measurements(length=64, count=24, seed=6,
                                        coeffs=(10.0, -24.0), amplitude=2.0 - 1.0j)
        result = recover(meas, self.grid(), ThresholdPolicy.relative(0.5),
                         reference=synthesize_components([comp], 64))
        assert len(result.components) == 1
        found = result.components[0]
        assert found.freq_bin == 10
        assert found.params == KernelParams((-24.0,))
        assert found.corrected_amplitude == pytest.approx(2.0 - 1.0j, abs=1e-10)
        assert result.residual_energy_ratio < 1e-20
        assert result.measurement_residual_ratio < 1e-20
        assert not result.offgrid_suspect

    def test_two_components_joint(self):
        length = 64
        comps = [
            PolyPhaseComponent(1.0, (10.0, -8.0)),
            PolyPhaseComponent(1.0, (40.0, -24.0)),
        ]
        samples = synthesize_components(comps, length)
        positions = select_measurements(length, 32, seed=1)
        meas = MeasurementSet.from_samples(samples, positions, length)
        result = recover(meas, self.grid(), ThresholdPolicy.relative(0.5),
                         reference=samples)
        assert len(result.components) == 2
        bins = sorted(c.freq_bin for c in result.components)
        assert bins == [10, 40]
        np.testing.assert_allclose(result.reconstructed, samples, atol=1e-8)

    def test_exact_pursuit_reaches_zero_residual(self):
        length = 64
        comps = [
            PolyPhaseComponent(1.0, (10.0, -8.0)),
            PolyPhaseComponent(0.05, (41.0, -24.0)),
        ]
        samples = synthesize_components(comps, length)
        positions = select_measurements(length, 40, seed=12)
        meas = MeasurementSet.from_samples(samples, positions, length)
        # the weak component hides below a relative threshold; exact mode
        # keeps pulling candidates until the residual is numerically zero
        config = RecoverConfig(max_components=8, pursuit="exact")
        result = recover(meas, self.grid(), ThresholdPolicy.relative(0.5),
                         config, reference=samples)
        assert result.measurement_residual_ratio < 1e-20
        assert result.residual_energy_ratio < 1e-10

    def test_max_components_cap(self):
        length = 64
        comps = [
            PolyPhaseComponent(1.0, (10.0, -8.0)),
            PolyPhaseComponent(1.0, (40.0, -24.0)),
        ]
        samples = synthesize_components(comps, length)
        positions = select_measurements(length, 32, seed=1)
        meas = MeasurementSet.from_samples(samples, positions, length)
        config = RecoverConfig(max_components=1)
        result = recover(meas, self.grid(), ThresholdPolicy.relative(0.5), config)
        assert len(result.components) == 1

    def test_offgrid_component_flagged(self):
        meas, _ = chirp_measurements(length=64, count=32, seed=7,
                                     coeffs=(10.0, -13.0))
        result = recover(meas, self.grid(), ThresholdPolicy.relative(0.5))
        assert result.offgrid_suspect
        assert result.measurement_residual_ratio > 1e-6

    def test_zero_signal_empty_result(self):
        meas = MeasurementSet(np.arange(8), np.zeros(8, dtype=np.complex128), 16)
        result = recover(meas, self.grid(), ThresholdPolicy.relative(0.5))
        assert result.components == ()
        np.testing.assert_array_equal(result.reconstructed, np.zeros(16))
        assert not result.offgrid_suspect

    def test_components_sorted_by_magnitude(self):
        length = 64
        comps = [
            PolyPhaseComponent(0.5, (10.0, -8.0)),
            PolyPhaseComponent(2.0, (40.0, -24.0)),
        ]
        samples = synthesize_components(comps, length)
        positions = select_measurements(length, 32, seed=1)
        meas = MeasurementSet.from_samples(samples, positions, length)
        result = recover(meas, self.grid(), ThresholdPolicy.relative(0.25))
        mags = [c.raw_magnitude for c in result.components]
        assert mags == sorted(mags, reverse=True)

    def test_centered_signal_recovers(self):
        length = 64
        comp = PolyPhaseComponent(1.0, (10.0, -16.0))
        samples = synthesize_components([comp], length, index_origin=-32)
        positions = select_measurements(length, 24, index_origin=-32, seed=3)
        meas = MeasurementSet.from_samples(samples, positions, length, -32)
        result = recover(meas, self.grid(), ThresholdPolicy.relative(0.5),
                         reference=samples)
        assert result.residual_energy_ratio < 1e-18
        np.testing.assert_allclose(
            reconstruct(result.components, length, -32), samples, atol=1e-9
        )

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RecoverConfig(pursuit="greedy")
        with pytest.raises(ValueError):
            RecoverConfig(max_components=0)
        with pytest.raises(ValueError):
            RecoverConfig(per_round=0)
        with pytest.raises(ValueError):
            RecoverConfig(prune_ratio=1.0)


class TestBestPair:
    def test_finds_true_pair(self):
        length = 64
        comps = [
            PolyPhaseComponent(1.0, (10.0, 0.0)),
            PolyPhaseComponent(1.0, (40.0, -32.0)),
        ]
        samples = synthesize_components(comps, length)
        positions = select_measurements(length, 14, seed=2)
        meas = MeasurementSet.from_samples(samples, positions, length)
        grid = ParameterGrid.single(2, (0.0, 16.0, 32.0))
        points = grid.points()
        kernels = _kernel_matrix(meas, points)
        pair = _best_pair(meas, kernels, points, ThresholdPolicy.relative(0.3))
        assert pair is not None
        got = {(points[pi].values[0], b) for pi, b, _ in pair}
        assert got == {(0.0, 10), (32.0, 40)}

    def test_single_candidate_returns_none(self):
        meas, _ = chirp_measurements(length=32, count=32, coeffs=(5.0,))
        grid = ParameterGrid.single(2, (0.0,))
        points = grid.points()
        kernels = _kernel_matrix(meas, points)
        # ratio 1.0 keeps only the single maximal bin
        assert _best_pair(meas, kernels, points, ThresholdPolicy.relative(1.0)) is None


class TestReconstruct:
    def test_requires_corrected_amplitudes(self):
        comp = DetectedComponent(KernelParams((8.0,)), 3, 1.0)
        with pytest.raises(ValueError):
            reconstruct([comp], 16)

    def test_rebuilds_from_amplitude(self):
        comp = DetectedComponent(KernelParams((-24.0,)), 10, 1.0,
                                 corrected_amplitude=2.0 - 1.0j)
        out = reconstruct([comp], 64)
        expected = synthesize_components(
            [PolyPhaseComponent(2.0 - 1.0j, (10.0, -24.0))], 64
        )
        np.testing.assert_allclose(out, expected, atol=1e-12)

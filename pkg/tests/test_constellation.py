"""Tests for the Y-00 / QNDM constellations and the DSR and masking helpers."""

import math

import numpy as np
import pytest

from qsc_analysis.constellation import (
    DsrConfig,
    OskConfig,
    PhasePoint,
    apply_dsr,
    build_constellation,
    build_qndm,
    build_y00,
    canonical_angle,
    dither_phases,
    encode_phase,
    encode_qndm_phase,
    masking_metrics,
)
from qsc_analysis.errors import InvalidParameterError


class TestCanonicalAngle:
    def test_wraps_into_half_open_range(self):
        assert canonical_angle(2 * math.pi) == 0.0
        assert canonical_angle(-math.pi / 2) == pytest.approx(3 * math.pi / 2)
        assert canonical_angle(5 * math.pi) == pytest.approx(math.pi)

    def test_tiny_negative_angle_does_not_round_to_two_pi(self):
        assert canonical_angle(-1e-18) == 0.0

    def test_vectorised(self):
        values = canonical_angle(np.array([-0.5, 0.5, 7.0]))
        assert isinstance(values, np.ndarray)
        assert np.all((values >= 0) & (values < 2 * math.pi))


class TestPhasePoint:
    def test_canonicalises_theta(self):
        point = PhasePoint(-math.pi, 2.0)
        assert point.theta == pytest.approx(math.pi)
        assert point.complex_amplitude == pytest.approx(-2.0 + 0j)

    @pytest.mark.parametrize("amplitude", [0.0, -1.0, float("inf"), float("nan")])
    def test_rejects_bad_amplitude(self, amplitude):
        with pytest.raises(InvalidParameterError):
            PhasePoint(0.0, amplitude)

    def test_rejects_non_finite_theta(self):
        with pytest.raises(InvalidParameterError):
            PhasePoint(float("nan"), 1.0)


class TestY00Constellation:
    def test_two_m_points_in_angular_order(self):
        constellation = build_y00(2, 1.0)
        assert constellation.n_points == 4
        np.testing.assert_allclose(constellation.thetas, [0, math.pi / 2, math.pi, 3 * math.pi / 2])
        assert constellation.fine_spacing == pytest.approx(math.pi / 2)

    def test_first_phase_is_zero(self):
        assert build_y00(8, 3.0).points[0].theta == 0.0

    @pytest.mark.parametrize("M", [1, 2, 3, 8, 9, 64])
    def test_antipodal_points_carry_opposite_bits(self, M):
        constellation = build_y00(M, 1.0)
        bits = constellation.bits
        for p in range(M):
            assert bits[p] != bits[p + M]
            assert constellation.keys[p] == constellation.keys[p + M]

    @pytest.mark.parametrize("M", [2, 4, 16])
    def test_even_m_alternates_except_at_two_seams(self, M):
        bits = build_y00(M, 1.0).bits
        n = 2 * M
        equal = [p for p in range(n) if bits[p] == bits[(p + 1) % n]]
        assert equal == [M - 1, 2 * M - 1]

    @pytest.mark.parametrize("M", [3, 5, 9])
    def test_odd_m_alternates_all_around(self, M):
        bits = build_y00(M, 1.0).bits
        n = 2 * M
        assert all(bits[p] != bits[(p + 1) % n] for p in range(n))

    @pytest.mark.parametrize("M", [1, 4, 7])
    def test_encode_decode_round_trip(self, M):
        constellation = build_y00(M, 2.0)
        osk = OskConfig(enabled=True)
        for key in range(1, M + 1):
            for bit in (0, 1):
                for osk_bit in (0, 1):
                    point = constellation.encode_phase(key, bit, osk_bit=osk_bit, osk=osk)
                    assert constellation.decode_phase(point.theta, key, osk_bit) == bit

    def test_encoded_phase_is_a_constellation_point_with_that_bit(self):
        constellation = build_y00(4, 1.0)
        for key in range(1, 5):
            for bit in (0, 1):
                point = encode_phase(constellation, key, bit)
                index = int(constellation.nearest_point(point.theta))
                assert constellation.thetas[index] == pytest.approx(point.theta)
                assert constellation.bits[index] == bit
                assert constellation.keys[index] == key

    def test_vectorised_encoder_matches_scalar(self):
        constellation = build_y00(8, 1.0)
        rng = np.random.default_rng(5)
        keys = rng.integers(1, 9, size=50)
        bits = rng.integers(0, 2, size=50)
        vector = constellation.encode_phases(keys, bits)
        scalar = [constellation.encode_phase(int(k), int(b)).theta for k, b in zip(keys, bits)]
        np.testing.assert_allclose(vector, scalar, atol=1e-12)

    def test_reference_phase_carries_bit_zero(self):
        constellation = build_y00(4, 1.0)
        for key in range(1, 5):
            assert constellation.reference_phase(key) == pytest.approx(
                constellation.encode_phase(key, 0).theta
            )

    def test_key_out_of_range(self):
        with pytest.raises(InvalidParameterError):
            build_y00(4, 1.0).encode_phase(5, 0)

    def test_osk_bit_required_when_enabled(self):
        with pytest.raises(InvalidParameterError):
            build_y00(4, 1.0).encode_phase(1, 0, osk=OskConfig(enabled=True))

    def test_osk_makes_the_encoder_non_injective(self):
        constellation = build_y00(8, 2.0)
        osk = OskConfig(enabled=True)
        for key in range(1, 9):
            assert constellation.encode_phase(key, 0, osk_bit=0, osk=osk) == constellation.encode_phase(
                key, 1, osk_bit=1, osk=osk
            )

    def test_osk_bit_rejected_when_disabled(self):
        with pytest.raises(InvalidParameterError):
            build_y00(4, 1.0).encode_phase(1, 0, osk_bit=1, osk=OskConfig(enabled=False))

    def test_adjacent_overlap(self):
        constellation = build_y00(16, 4.0)
        expected = math.exp(-2 * 16.0 * (1 - math.cos(math.pi / 16)))
        assert constellation.adjacent_overlap() == pytest.approx(expected)

    def test_to_dict(self):
        doc = build_y00(2, 1.0).to_dict()
        assert doc["schema"] == "qsc-constellation/1"
        assert doc["kind"] == "y00"
        assert len(doc["points"]) == 4
        assert set(doc["points"][0]) == {"theta", "k1", "bit"}


class TestQndmConstellation:
    def test_two_m_squared_points(self):
        constellation = build_qndm(4, 1.0)
        assert constellation.n_points == 32
        assert constellation.delta == pytest.approx(math.pi / 16)
        assert len(constellation.blocks) == 8

    def test_requires_m_at_least_two(self):
        with pytest.raises(InvalidParameterError):
            build_qndm(1, 1.0)

    @pytest.mark.parametrize("M", [2, 3, 4, 6])
    def test_every_key_pair_lies_in_exactly_one_upper_block(self, M):
        constellation = build_qndm(M, 1.0)
        upper = [constellation.block_labels(block) for block in range(1, M + 1)]
        pairs = [pair for labels in upper for pair in labels]
        assert sorted(pairs) == [(k1, k2) for k1 in range(1, M + 1) for k2 in range(1, M + 1)]
        for block, labels in enumerate(upper, start=1):
            for k1, k2 in labels:
                assert constellation.basis_of(k1, k2) == block

    def test_lower_blocks_repeat_the_labels_with_opposite_bits(self):
        constellation = build_qndm(4, 1.0)
        M = 4
        for block in range(1, M + 1):
            assert constellation.block_labels(block) == constellation.block_labels(block + M)
            upper = np.asarray(constellation.blocks[block - 1])
            lower = np.asarray(constellation.blocks[block - 1 + M])
            assert np.all(constellation.bits[upper] != constellation.bits[lower])

    @pytest.mark.parametrize("M", [2, 4, 8])
    def test_blocks_are_congruent(self, M):
        constellation = build_qndm(M, 1.0)
        offsets = np.arange(M) * constellation.delta
        for block, indices in enumerate(constellation.blocks, start=1):
            indices = np.asarray(indices)
            assert [k1 for k1, _ in constellation.block_labels(block)] == list(range(1, M + 1))
            assert len(set(constellation.bits[indices])) == 1
            start = (block - 1) * constellation.basis_spacing
            np.testing.assert_allclose(constellation.thetas[indices] - start, offsets, atol=1e-12)
        assert np.count_nonzero(constellation.bits) == M * M

    def test_block_of_is_half_open(self):
        constellation = build_qndm(4, 1.0)
        width = math.pi / 4
        assert constellation.block_of(0.0) == 1
        assert constellation.block_of(width) == 2
        assert constellation.block_of(width - 1e-6) == 1
        assert constellation.block_of(2 * math.pi - 1e-6) == 8

    def test_pattern_is_a_cyclic_shift(self):
        constellation = build_qndm(4, 1.0)
        pattern = constellation.pattern(2)
        assert [label for label, _ in pattern] == [2, 3, 4, 1]
        assert pattern[0][1] == pytest.approx(constellation.delta)

    @pytest.mark.parametrize("M", [2, 5])
    def test_encode_decode_round_trip(self, M):
        constellation = build_qndm(M, 3.0)
        osk = OskConfig(enabled=True)
        for k1 in range(1, M + 1):
            for k2 in range(1, M + 1):
                for bit in (0, 1):
                    for osk_bit in (0, 1):
                        point = encode_qndm_phase(constellation, k1, k2, bit, osk_bit, osk)
                        assert constellation.decode_phase(point.theta, k1, k2, osk_bit) == bit

    def test_encoded_point_carries_its_labels(self):
        constellation = build_qndm(4, 1.0)
        for k1 in range(1, 5):
            for k2 in range(1, 5):
                for bit in (0, 1):
                    point = constellation.encode_phase(k1, k2, bit)
                    index = int(constellation.nearest_point(point.theta))
                    assert constellation.k1[index] == k1
                    assert constellation.k2[index] == k2
                    assert constellation.bits[index] == bit

    def test_keys_out_of_range(self):
        with pytest.raises(InvalidParameterError):
            build_qndm(4, 1.0).encode_phase(1, 5, 0)

    def test_to_dict_includes_delta(self):
        doc = build_qndm(4, 1.0).to_dict()
        assert doc["kind"] == "qndm"
        assert doc["delta"] == pytest.approx(math.pi / 16)
        assert len(doc["points"]) == 32
        assert set(doc["points"][0]) == {"theta", "k1", "k2", "bit"}


class TestBuildConstellation:
    def test_dispatch(self):
        assert build_constellation("y00", 4, 1.0).kind == "y00"
        assert build_constellation("qndm", 4, 1.0).kind == "qndm"

    def test_unknown_kind(self):
        with pytest.raises(InvalidParameterError):
            build_constellation("bpsk", 4, 1.0)

    @pytest.mark.parametrize("M", [0, -1, 2.5, True])
    def test_invalid_m(self, M):
        with pytest.raises(InvalidParameterError):
            build_constellation("y00", M, 1.0)


class TestDsr:
    def test_strength_ceiling(self):
        ceiling = math.pi * 4.0 / 2
        DsrConfig(ceiling, 4.0)
        with pytest.raises(InvalidParameterError):
            DsrConfig(ceiling * 1.01, 4.0)

    def test_negative_strength(self):
        with pytest.raises(InvalidParameterError):
            DsrConfig(-0.1, 4.0)

    def test_only_uniform_density(self):
        with pytest.raises(InvalidParameterError):
            DsrConfig(1.0, 4.0, density="gaussian")

    def test_wedge_range(self):
        assert DsrConfig(2.0, 4.0).in_wedge_range
        assert not DsrConfig(0.5, 4.0).in_wedge_range

    def test_apply_dsr_stays_within_half_width(self):
        config = DsrConfig(2.0, 4.0)
        rng = np.random.default_rng(0)
        point = PhasePoint(1.0, 4.0)
        for _ in range(200):
            dithered = apply_dsr(point, config, rng)
            assert abs(dithered.theta - 1.0) <= config.half_width + 1e-12
            assert dithered.amplitude == 4.0

    def test_dither_is_uniform_over_the_wedge(self):
        config = DsrConfig(2.0, 4.0)
        thetas = np.full(20_000, math.pi)
        offsets = dither_phases(thetas, config, np.random.default_rng(1)) - math.pi
        assert offsets.min() >= -0.5 and offsets.max() <= 0.5
        assert offsets.mean() == pytest.approx(0.0, abs=0.01)
        assert offsets.var() == pytest.approx(0.25 / 3, rel=0.05)


class TestMaskingMetrics:
    def test_masked_qndm(self):
        report = masking_metrics(build_qndm(16, 0.9), sigma=1.0, lam=5.0)
        assert report.masked_points == 90
        assert report.masked_blocks == 5
        assert report.condition_met

    def test_unmasked_qndm(self):
        report = masking_metrics(build_qndm(16, 4.0), sigma=1.0, lam=5.0)
        assert report.masked_points == 20
        assert not report.condition_met

    def test_gamma_q(self):
        report = masking_metrics(build_qndm(16, 0.9), sigma=1.0)
        assert report.gamma_q == pytest.approx(16 / (math.pi * 0.9))
        assert report.to_dict()["lambda"] == 5.0

    def test_rejects_non_positive_sigma(self):
        with pytest.raises(InvalidParameterError):
            masking_metrics(build_y00(4, 1.0), sigma=0.0)

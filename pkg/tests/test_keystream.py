"""Tests for the keyed running-key generators."""

import numpy as np
import pytest
from scipy.stats import chisquare

from qsc_analysis.errors import InvalidParameterError
from qsc_analysis.keystream import (
    MAXIMAL_TAPS,
    KeystreamGenerator,
    LfsrBank,
    chunk_bits,
    feedback_mask,
    generate_keystream,
    key_from_seed,
)


def reference_lfsr(key, key_bits, count):
    """Bit-at-a-time Fibonacci LFSR."""
    mask = feedback_mask(key_bits)
    state = key
    out = []
    for _ in range(count):
        out.append(state & 1)
        feedback = bin(state & mask).count("1") & 1
        state = (state >> 1) | (feedback << (key_bits - 1))
    return np.array(out, dtype=np.uint8)


class TestGeneratorValidation:
    def test_zero_lfsr_key_rejected(self):
        with pytest.raises(InvalidParameterError, match="key"):
            KeystreamGenerator(0, 16)

    def test_key_must_fit_register(self):
        with pytest.raises(InvalidParameterError):
            KeystreamGenerator(1 << 16, 16)

    def test_unsupported_register_length(self):
        with pytest.raises(InvalidParameterError, match="key_bits"):
            KeystreamGenerator(1, 40)

    def test_unknown_kind(self):
        with pytest.raises(InvalidParameterError):
            KeystreamGenerator(1, 16, kind="mersenne")

    def test_counter_accepts_zero_key(self):
        assert KeystreamGenerator(0, 128, kind="counter").bits(8).size == 8

    def test_taps_must_start_with_register_length(self):
        with pytest.raises(InvalidParameterError, match="taps"):
            feedback_mask(8, (7, 3))

    def test_keyspace(self):
        assert KeystreamGenerator(1, 10).keyspace == 1023
        assert KeystreamGenerator(1, 10, kind="counter").keyspace == 1024


class TestLfsr:
    @pytest.mark.parametrize("key_bits,key,count", [(5, 19, 40_000), (16, 0xACE1, 70_000)])
    def test_strided_output_matches_reference(self, key_bits, key, count):
        fast = KeystreamGenerator(key, key_bits).bits(count)
        np.testing.assert_array_equal(fast, reference_lfsr(key, key_bits, count))

    @pytest.mark.parametrize("key_bits", range(3, 11))
    def test_register_visits_every_nonzero_state(self, key_bits):
        bank = LfsrBank(key_bits, [1])
        seen = set()
        for _ in range((1 << key_bits) - 1):
            seen.add(int(bank.states[0]))
            bank.step()
        assert len(seen) == (1 << key_bits) - 1
        assert int(bank.states[0]) == 1

    def test_every_table_entry_builds(self):
        for key_bits in MAXIMAL_TAPS:
            assert feedback_mask(key_bits) & 1

    def test_prefix_is_stable(self):
        generator = KeystreamGenerator(777, 12)
        np.testing.assert_array_equal(generator.bits(30_000)[:100], generator.bits(100))

    def test_empty_request(self):
        assert KeystreamGenerator(3, 8).bits(0).size == 0


class TestLfsrBank:
    def test_bank_agrees_with_single_generator(self):
        bank = LfsrBank.all_keys(8)
        assert len(bank) == 255
        chunks = np.array([bank.chunk(4) for _ in range(20)])
        keys = generate_keystream(KeystreamGenerator(173, 8), 20, 16)
        np.testing.assert_array_equal(keys.k1 - 1, chunks[:, 172])

    def test_select_keeps_rows(self):
        bank = LfsrBank.all_keys(4)
        bank.select(np.array([0, 4, 9]))
        np.testing.assert_array_equal(bank.states, [1, 5, 10])


class TestRunningKeys:
    def test_chunk_width(self):
        assert chunk_bits(1) == 0
        assert chunk_bits(2) == 1
        assert chunk_bits(5) == 3
        assert chunk_bits(16) == 4

    def test_keys_are_offset_chunks(self):
        generator = KeystreamGenerator(0x1234, 16)
        bits = generator.bits(4 * 50).reshape(50, 4)
        expected = bits @ np.array([8, 4, 2, 1]) + 1
        np.testing.assert_array_equal(generate_keystream(generator, 50, 16).k1, expected)

    def test_shared_osk_bit_rides_on_the_record(self):
        generator = KeystreamGenerator(0x0F0F, 16)
        keys = generate_keystream(generator, 40, 4, osk=True)
        bits = generator.bits(3 * 40).reshape(40, 3)
        np.testing.assert_array_equal(keys.k1, bits[:, 0] * 2 + bits[:, 1] + 1)
        np.testing.assert_array_equal(keys.osk, bits[:, 2])

    def test_independent_osk_stream(self):
        osk_generator = KeystreamGenerator(99, 16)
        keys = generate_keystream(KeystreamGenerator(5, 16), 64, 8, osk=True, osk_generator=osk_generator)
        np.testing.assert_array_equal(keys.osk, osk_generator.bits(64))

    def test_qndm_second_key(self):
        keys = generate_keystream(KeystreamGenerator(5, 16), 32, 8, second=KeystreamGenerator(6, 16))
        assert keys.k2 is not None
        assert keys.k2.shape == (32,)
        assert keys.osk is None

    def test_single_point_basis(self):
        keys = generate_keystream(KeystreamGenerator(5, 16), 10, 1)
        np.testing.assert_array_equal(keys.k1, np.ones(10))

    def test_rejection_for_non_power_of_two(self):
        keys = generate_keystream(KeystreamGenerator(321, 16), 5000, 5)
        assert keys.k1.min() == 1
        assert keys.k1.max() == 5
        assert set(np.unique(keys.k1)) == {1, 2, 3, 4, 5}

    def test_counter_keys_are_uniform(self):
        keys = generate_keystream(KeystreamGenerator(2024, 64, kind="counter"), 80_000, 8)
        counts = np.bincount(keys.k1, minlength=9)[1:]
        assert chisquare(counts).pvalue > 1e-4

    def test_slicing(self):
        keys = generate_keystream(KeystreamGenerator(5, 16), 20, 8, osk=True)
        head = keys[:5]
        assert len(head) == 5
        np.testing.assert_array_equal(head.osk, keys.osk[:5])

    def test_negative_slot_count(self):
        with pytest.raises(InvalidParameterError):
            generate_keystream(KeystreamGenerator(5, 16), -1, 8)


class TestKeyFromSeed:
    def test_deterministic_and_in_range(self):
        first = key_from_seed(np.random.SeedSequence(5), 16)
        second = key_from_seed(np.random.SeedSequence(5), 16)
        assert first == second
        assert 1 <= first < 1 << 16

    def test_wide_counter_keys(self):
        key = key_from_seed(np.random.SeedSequence(11), 256, kind="counter")
        assert 0 <= key < 1 << 256

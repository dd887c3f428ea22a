import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from privdist.matrix import SeededRng
from privdist.net import ProtocolError, SimNetwork
from privdist.secsum import (
    PrfSchedule,
    RangeError,
    SecSumConfig,
    aggregate,
    check_capacity,
    decode,
    encode,
    float_sum,
    reconstruct,
    secsum,
    secsum_prf,
    setup_prf,
    share,
)

u64 = arrays(np.uint64, st.integers(1, 8), elements=st.integers(0, 2**64 - 1))


def run_secsum(xs, f=31, bound=1.0, mode="fixed", seed=0):
    cfg = SecSumConfig(mode, f, bound)
    with SimNetwork(len(xs), seed=seed) as net:
        out = net.run(lambda p, x: aggregate(p, x, cfg), xs)
        return out, net.message_count


class TestSharing:
    @given(u64, st.integers(1, 6), st.integers(0, 2**32))
    def test_roundtrip(self, x, M, seed):
        np.testing.assert_array_equal(reconstruct(share(x, M, SeededRng(seed))), x)

    @pytest.mark.parametrize("bits", [8, 16, 64])
    def test_wraps_modulo(self, bits):
        top = (1 << bits) - 1
        x = np.array([0, 1, top], dtype=np.uint64)
        s = share(x, 3, SeededRng(1), bits)
        assert all(int(v) <= top for piece in s for v in piece)
        np.testing.assert_array_equal(reconstruct(s, bits), x)

    def test_proper_subset_looks_uniform(self):
        first = share(np.zeros(40000, dtype=np.uint64), 3, SeededRng(5))[0]
        for shift in (0, 8):
            counts = np.bincount(((first >> np.uint64(shift)) & np.uint64(0xFF)).astype(np.int64), minlength=256)
            assert stats.chisquare(counts).pvalue > 1e-4

    def test_reconstruct_rejects_mismatched_shapes(self):
        with pytest.raises(ValueError):
            reconstruct([np.zeros(2, np.uint64), np.zeros(3, np.uint64)])


class TestEncoding:
    @given(arrays(np.float64, 5, elements=st.floats(-1, 1)))
    def test_quantization_error(self, x):
        assert np.max(np.abs(decode(encode(x)) - x)) <= 2.0**-32

    def test_negative_values_roundtrip(self):
        np.testing.assert_array_equal(decode(encode([-0.5, -1.0], 4), 4), [-0.5, -1.0])

    def test_bound_violation(self):
        with pytest.raises(RangeError):
            encode([2.0], bound=1.0)

    def test_nan_rejected(self):
        with pytest.raises(RangeError):
            encode([np.nan])

    def test_capacity(self):
        check_capacity(1.0, 31, 3)
        with pytest.raises(RangeError):
            check_capacity(2.0**31, 31, 2)
        with pytest.raises(RangeError):
            check_capacity(0.0, 31, 2)


class TestSecSum:
    def test_basis_vectors(self):
        xs = [np.eye(3)[m] for m in range(3)]
        out, _ = run_secsum(xs)
        for o in out:
            np.testing.assert_array_equal(o, np.ones(3))

    def test_opposites_cancel(self):
        x = SeededRng(3).uniform(6, -1, 1)
        out, _ = run_secsum([x, -x])
        np.testing.assert_array_equal(out[0], np.zeros(6))

    @given(st.integers(1, 5), st.integers(0, 2**32))
    def test_error_bounded_by_rounding(self, M, seed):
        xs = [SeededRng(seed, m).uniform(4, -1, 1) for m in range(M)]
        out, _ = run_secsum(xs, seed=seed)
        assert np.max(np.abs(out[0] - float_sum(xs))) <= M * 2.0**-32 + 1e-15
        for o in out[1:]:
            np.testing.assert_array_equal(o, out[0])

    def test_order_of_inputs_irrelevant(self):
        xs = [SeededRng(9, m).uniform(4, -1, 1) for m in range(3)]
        a, _ = run_secsum(xs)
        b, _ = run_secsum(xs[::-1])
        np.testing.assert_array_equal(a[0], b[0])

    def test_message_count(self):
        M = 4
        _, count = run_secsum([np.zeros(3)] * M)
        assert count == M * (M - 1) + M

    def test_float_mode_matches_float_sum(self):
        xs = [SeededRng(2, m).uniform(5) for m in range(3)]
        out, count = run_secsum(xs, mode="float")
        np.testing.assert_array_equal(out[0], float_sum(xs))
        assert count == 0

    def test_out_of_capacity_inputs(self):
        with SimNetwork(2) as net:
            with pytest.raises(RangeError):
                net.run(lambda p: secsum(p, [5.0], bound=1.0))

    def test_label_recorded(self):
        with SimNetwork(2) as net:
            net.run(lambda p: secsum(p, [0.25], label="s"))
            np.testing.assert_array_equal(net.parties[1].trace.get("s"), [0.5])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SecSumConfig("carrier")
        with pytest.raises(ValueError):
            SecSumConfig("fixed", f=63)


class TestPrf:
    def test_matches_plain(self):
        xs = [SeededRng(4, m).uniform(7, -1, 1) for m in range(3)]
        plain, _ = run_secsum(xs, mode="fixed")
        prf, _ = run_secsum(xs, mode="prf")
        np.testing.assert_array_equal(prf[0], plain[0])

    def test_one_announcement_per_party(self):
        M, calls = 3, 5
        cfg = SecSumConfig("prf")
        with SimNetwork(M) as net:
            net.run(lambda p: [aggregate(p, np.zeros(2), cfg) for _ in range(calls)])
            assert net.message_count == M * (M - 1) + calls * M

    def test_counter_desync_detected(self):
        with SimNetwork(2, timeout=5) as net:
            def fn(p):
                sched = setup_prf(p)
                if p.id == 1:
                    sched.counter = 1
                return secsum_prf(p, [0.0], sched)

            with pytest.raises(ProtocolError):
                net.run(fn)

    def test_invocations_use_distinct_masks(self):
        key = bytes(range(16))
        a, b = PrfSchedule.derive(key, 0, 64), PrfSchedule.derive(key, 1, 64)
        assert not np.any(a == b)
        np.testing.assert_array_equal(a, PrfSchedule.derive(key, 0, 64))

    def test_keys_pair_up(self):
        with SimNetwork(3) as net:
            sched = net.run(setup_prf)
            for m in range(3):
                for i in sched[m].outgoing:
                    assert sched[m].outgoing[i] == sched[i].incoming[m]

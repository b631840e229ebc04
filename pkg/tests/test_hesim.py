import json

import numpy as np
import pytest

from helr.encoding import plan_layout
from helr.hesim import HeParams, NeedsBootstrap, SimCiphertext, SimContext, ciphertext_size_mb

SMALL = HeParams(log_n=6, log_q=275, log_delta=30, log_delta_c=20)  # 32 slots


@pytest.fixture()
def ctx():
    return SimContext(SMALL)


class TestParams:
    def test_slot_count(self):
        assert HeParams(log_n=16).slots == 32768
        assert SMALL.slots == 32

    def test_validation(self):
        with pytest.raises(ValueError, match="exceed"):
            HeParams(log_q=20, log_delta=30)
        with pytest.raises(ValueError, match="noise_sigma"):
            HeParams(noise_sigma=-1.0)

    def test_from_file(self, tmp_path):
        path = tmp_path / "he.json"
        path.write_text(json.dumps({"logN": 15, "logQ": 300, "logDelta": 40,
                                    "logDeltaC": 25, "noise": 1e-6}))
        p = HeParams.from_file(path)
        assert (p.log_n, p.log_q, p.log_delta, p.log_delta_c) == (15, 300, 40, 25)
        assert p.noise_sigma == 1e-6

    def test_reported_block_size(self):
        # 2 * 2^16 * 275 bits at the stock parameters
        assert ciphertext_size_mb(HeParams(log_n=16, log_q=275)) == pytest.approx(4.5056)


class TestEncDec:
    def test_roundtrip_exact(self, ctx, rng):
        m = rng.normal(size=32) + 1j * rng.normal(size=32)
        ct = ctx.enc(m)
        np.testing.assert_array_equal(ctx.dec(ct), m)

    def test_fresh_level_is_log_q(self, ctx):
        assert ctx.enc([1.0]).level_bits == 275

    def test_zero_padding(self, ctx):
        out = ctx.dec(ctx.enc([1.0, 2.0]))
        np.testing.assert_array_equal(out[2:], np.zeros(30))

    def test_oversize_rejected(self, ctx):
        with pytest.raises(ValueError, match="slots"):
            ctx.enc(np.ones(33))

    def test_noise_bounded(self, rng):
        params = HeParams(log_n=15, noise_sigma=1e-6, seed=42)
        noisy = SimContext(params)
        m = rng.uniform(0.5, 2.0, size=params.slots)
        out = noisy.dec(noisy.enc(m))
        rel = np.abs(out - m) / np.abs(m)
        assert np.max(rel) < 1e-5


class TestArithmetic:
    def test_add(self, ctx):
        out = ctx.add(ctx.enc([1.0, 2.0]), ctx.enc([3.0, 4.0]))
        np.testing.assert_array_equal(ctx.dec(out)[:2], [4.0, 6.0])

    def test_add_identity(self, ctx, rng):
        m = rng.normal(size=32)
        a = ctx.enc(m)
        np.testing.assert_array_equal(ctx.dec(ctx.add(a, ctx.enc(np.zeros(32)))), m)

    def test_add_takes_min_level(self, ctx):
        a = ctx.enc([1.0])
        b = ctx.mul(ctx.enc([1.0]), ctx.enc([1.0]))
        assert ctx.add(a, b).level_bits == b.level_bits == 245

    def test_add_scale_mismatch_rejected(self, ctx):
        a = ctx.enc([1.0])
        weird = SimCiphertext(slots=a.slots, level_bits=275, scale_bits=99)
        with pytest.raises(ValueError, match="scale"):
            ctx.add(a, weird)

    def test_cadd(self, ctx):
        out = ctx.cadd(ctx.enc([1.0, 2.0]), 5.0)
        np.testing.assert_array_equal(ctx.dec(out)[:2], [6.0, 7.0])
        assert out.level_bits == 275

    def test_mul(self, ctx):
        out = ctx.mul(ctx.enc([1.0, 2.0]), ctx.enc([3.0, 4.0]))
        np.testing.assert_array_equal(ctx.dec(out)[:2], [3.0, 8.0])
        assert out.level_bits == 275 - 30
        assert out.scale_bits == 30

    def test_mul_by_ones_preserves_values(self, ctx, rng):
        m = rng.normal(size=32)
        out = ctx.mul(ctx.enc(m), ctx.enc(np.ones(32)))
        np.testing.assert_array_equal(ctx.dec(out), m)
        assert out.level_bits == 245

    def test_mul_chain_budget(self, ctx):
        # 275 / 30: eight products leave 35 >= 30 bits; the ninth cannot.
        ct = ctx.enc(np.ones(32))
        for _ in range(8):
            ct = ctx.mul(ct, ctx.enc(np.ones(32)))
        assert ct.level_bits == 275 - 8 * 30
        with pytest.raises(NeedsBootstrap):
            ctx.mul(ct, ctx.enc(np.ones(32)))

    def test_cmul_level_cost(self, ctx):
        out = ctx.cmul(ctx.enc([2.0]), 3.0)
        assert ctx.dec(out)[0] == 6.0
        assert out.level_bits == 275 - 20

    def test_cmul_by_ones_costs_level(self, ctx, rng):
        m = rng.normal(size=32)
        out = ctx.cmul(ctx.enc(m), np.ones(32))
        np.testing.assert_array_equal(ctx.dec(out), m)
        assert out.level_bits == 255

    def test_imul_twice_negates(self, ctx, rng):
        m = rng.normal(size=32)
        out = ctx.imul(ctx.imul(ctx.enc(m)))
        np.testing.assert_array_equal(ctx.dec(out), -m)
        assert out.level_bits == 275


class TestRotate:
    def test_basic_left_rotation(self, ctx):
        ct = ctx.enc([1.0, 2.0, 3.0])
        out = ctx.dec(ctx.rotate(ct, 1))
        np.testing.assert_array_equal(out[:3], [2.0, 3.0, 0.0])
        assert out[-1] == 1.0

    def test_full_rotation_is_identity(self, ctx, rng):
        m = rng.normal(size=32)
        np.testing.assert_array_equal(ctx.dec(ctx.rotate(ctx.enc(m), 32)), m)

    def test_composition(self, ctx, rng):
        m = rng.normal(size=32)
        a = ctx.rotate(ctx.rotate(ctx.enc(m), 3), 7)
        b = ctx.rotate(ctx.enc(m), 10)
        np.testing.assert_array_equal(ctx.dec(a), ctx.dec(b))

    def test_negative_rotates_right(self, ctx):
        ct = ctx.enc([1.0, 2.0])
        out = ctx.dec(ctx.rotate(ct, -1))
        assert out[1] == 1.0 and out[2] == 2.0


class TestSumColVec:
    def test_two_by_two(self):
        params = HeParams(log_n=3)  # 4 slots
        ctx = SimContext(params)
        layout = plan_layout(2, 1, params, batch_rows=2)
        ct = ctx.enc([1.0, 2.0, 3.0, 4.0])
        out = ctx.dec(ctx.sum_col_vec(ct, layout))
        np.testing.assert_array_equal(np.real(out), [3.0, 3.0, 7.0, 7.0])

    def test_zero_block(self, ctx):
        layout = plan_layout(8, 3, SMALL, batch_rows=8)
        out = ctx.dec(ctx.sum_col_vec(ctx.enc(np.zeros(32)), layout))
        np.testing.assert_array_equal(out, np.zeros(32))

    def test_matches_row_sum_oracle(self, ctx, rng):
        layout = plan_layout(8, 3, SMALL, batch_rows=8)  # 8 x 4 block
        block = rng.normal(size=(8, 4))
        out = ctx.dec(ctx.sum_col_vec(ctx.enc(block.reshape(-1)), layout))
        expect = np.repeat(block.sum(axis=1), 4)
        np.testing.assert_allclose(np.real(out), expect, atol=1e-12)
        assert np.all(out.imag == 0)

    def test_consumes_one_constant_product(self, ctx, rng):
        layout = plan_layout(8, 3, SMALL, batch_rows=8)
        ct = ctx.enc(rng.normal(size=32))
        out = ctx.sum_col_vec(ct, layout)
        assert out.level_bits == 275 - 20

    def test_single_column_layout_is_noop(self):
        params = HeParams(log_n=3)
        ctx = SimContext(params)
        layout = plan_layout(4, 1, params, batch_rows=4)
        assert layout.g == 1
        ct = ctx.enc([1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(ctx.dec(ctx.sum_col_vec(ct, layout)), ctx.dec(ct))


class TestSumRows:
    def test_matches_column_sum_oracle(self, ctx, rng):
        layout = plan_layout(8, 3, SMALL, batch_rows=8)
        block = rng.normal(size=(8, 4))
        out = ctx.dec(ctx.sum_rows(ctx.enc(block.reshape(-1)), layout))
        expect = np.tile(block.sum(axis=0), 8)
        np.testing.assert_allclose(np.real(out), expect, atol=1e-12)

    def test_costs_no_level(self, ctx, rng):
        layout = plan_layout(8, 3, SMALL, batch_rows=8)
        out = ctx.sum_rows(ctx.enc(rng.normal(size=32)), layout)
        assert out.level_bits == 275


class TestBootstrap:
    def test_restores_budget_and_slots(self, ctx, rng):
        m = rng.normal(size=32)
        low = SimCiphertext(slots=np.asarray(m, dtype=np.complex128), level_bits=15, scale_bits=30)
        out = ctx.bootstrap(low)
        assert out.level_bits == 275
        assert out.boot_count == 1
        np.testing.assert_array_equal(ctx.dec(out), ctx.dec(low))

    def test_count_accumulates(self, ctx):
        ct = ctx.enc([1.0])
        ct = ctx.bootstrap(ctx.bootstrap(ct))
        assert ct.boot_count == 2


class TestHomomorphismAndLedger:
    def test_random_chains_match_plaintext_and_level_arithmetic(self, rng):
        # Single-threaded random op chains: slots must track the plaintext
        # mirror exactly (noise off) and the level must equal
        # log_q - muls * log_delta - cmuls * log_delta_c since the last
        # refresh, never dipping below log_delta.
        ctx = SimContext(SMALL)
        for _ in range(100):
            vec = rng.normal(size=32)
            ct = ctx.enc(vec)
            mirror = np.asarray(vec, dtype=np.complex128)
            spent = 0
            boots = 0
            for _ in range(int(rng.integers(1, 12))):
                op = rng.choice(["add", "cadd", "mul", "cmul", "imul", "rotate", "bootstrap"])
                if op == "add":
                    other = rng.normal(size=32)
                    ct = ctx.add(ct, ctx.enc(other))
                    mirror = mirror + other
                elif op == "cadd":
                    c = float(rng.normal())
                    ct = ctx.cadd(ct, c)
                    mirror = mirror + c
                elif op == "mul":
                    other = rng.normal(size=32)
                    try:
                        ct = ctx.mul(ct, ctx.enc(other))
                    except NeedsBootstrap:
                        continue
                    mirror = mirror * other
                    spent += 30
                elif op == "cmul":
                    c = rng.normal(size=32)
                    try:
                        ct = ctx.cmul(ct, c)
                    except NeedsBootstrap:
                        continue
                    mirror = mirror * c
                    spent += 20
                elif op == "imul":
                    ct = ctx.imul(ct)
                    mirror = mirror * 1j
                elif op == "rotate":
                    k = int(rng.integers(0, 32))
                    ct = ctx.rotate(ct, k)
                    mirror = np.roll(mirror, -k)
                else:
                    ct = ctx.bootstrap(ct)
                    boots += 1
                    spent = 0
                np.testing.assert_array_equal(ct.slots, mirror)
                assert ct.level_bits == 275 - spent
                assert ct.level_bits >= 30
            assert ct.boot_count == boots


class TestCounters:
    def test_op_counting(self, ctx):
        a = ctx.enc([1.0])
        b = ctx.enc([2.0])
        ctx.reset_counters()
        ctx.mul(a, b)
        ctx.add(a, b)
        ctx.rotate(a, 1)
        ctx.rotate(a, 2)
        counts = ctx.reset_counters()
        assert counts["mul"] == 1 and counts["add"] == 1 and counts["rotate"] == 2
        assert ctx.counters["mul"] == 0

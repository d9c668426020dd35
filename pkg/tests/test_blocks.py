import numpy as np
import pytest

from mapnet import tensor as T
from mapnet.blocks import (
    AttentionSqueeze,
    ConvBlock,
    DownsampleBlock,
    GenBlock,
    ResidualBlock,
    SpatialPoolEnhance,
    UpsampleHead,
)
from mapnet.errors import ConfigError, ShapeError
from mapnet.gradcheck import finite_diff_check
from mapnet.rng import SplitMix64
from mapnet.tensor import Tensor


def rng():
    return SplitMix64(99)


def zero_params(block):
    for key, p in block.named_params("b").items():
        if not key.endswith(("gamma",)):
            p.data[:] = 0.0


def rand_input(shape, seed=0, dtype=np.float32):
    return Tensor(np.random.default_rng(seed).normal(size=shape), dtype=dtype)


class TestDownsampleBlock:
    def test_shape_contract(self):
        block = DownsampleBlock(64, rng=rng())
        out = block(rand_input((1, 3, 512 // 8, 512 // 8)))
        assert out.data.shape == (1, 64, 16, 16)

    def test_64_input(self):
        block = DownsampleBlock(64, rng=rng())
        out = block(rand_input((1, 3, 64, 64)))
        assert out.data.shape == (1, 64, 16, 16)

    def test_zero_weights_zero_output(self):
        block = DownsampleBlock(32, rng=rng())
        zero_params(block)
        out = block(rand_input((1, 3, 32, 32)))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_non_multiple_of_16_rejected(self):
        block = DownsampleBlock(32, rng=rng())
        with pytest.raises(ConfigError):
            block(rand_input((1, 3, 40, 40)))

    def test_skip_is_half_resolution(self):
        block = DownsampleBlock(64, rng=rng())
        out, skip = block(rand_input((1, 3, 64, 64)), return_skip=True)
        assert skip.data.shape == (1, 64, 32, 32)


class TestResidualBlock:
    def test_zero_branch_is_identity(self):
        block = ResidualBlock(16, rng=rng())
        zero_params(block)
        x = rand_input((1, 16, 8, 8))
        out = block(x)
        np.testing.assert_array_equal(out.data, x.data)

    def test_shape_preserved(self):
        block = ResidualBlock(64, rng=rng())
        out = block(rand_input((1, 64, 32, 32)))
        assert out.data.shape == (1, 64, 32, 32)

    def test_indivisible_channels_rejected(self):
        with pytest.raises(ConfigError):
            ResidualBlock(6, rng=rng())

    def test_param_count_by_enumeration(self):
        c, mid = 64, 16
        block = ResidualBlock(c, rng=rng())
        # enumerate-and-count oracle over the parameter keys
        expected = (
            (c * mid * 1 * 1 + mid)          # 1x1 down
            + (mid * mid * 3 * 3 + mid)      # 3x3
            + (mid * mid * 3 * 3 + mid)      # 3x3
            + (mid * c * 1 * 1 + c)          # 1x1 up
            + 2 * c + 3 * 2 * mid            # four BN gamma/beta pairs
        )
        total = sum(p.data.size for p in block.named_params("r").values())
        assert total == expected


class TestConvBlock:
    def test_zero_weights_identity(self):
        block = ConvBlock(16, 4, rng=rng())
        zero_params(block)
        x = rand_input((1, 16, 8, 8))
        np.testing.assert_array_equal(block(x).data, x.data)

    def test_dims_preserved(self):
        block = ConvBlock(32, 3, rng=rng())
        out = block(rand_input((2, 32, 16, 16)))
        assert out.data.shape == (2, 32, 16, 16)

    def test_out_of_range_n_blocks(self):
        with pytest.raises(ConfigError):
            ConvBlock(16, 7, rng=rng())
        with pytest.raises(ConfigError):
            ConvBlock(16, 2, rng=rng())

    def test_param_count_additivity(self):
        single = sum(
            p.data.size for p in ResidualBlock(32, rng=rng()).named_params("r").values()
        )
        for n in (3, 4, 5):
            block = ConvBlock(32, n, rng=rng())
            total = sum(p.data.size for p in block.named_params("c").values())
            assert total == n * single


class TestGenBlock:
    def test_doubles_channels_halves_resolution(self):
        block = GenBlock(64, rng=rng())
        out = block(rand_input((1, 64, 128, 128)))
        assert out.data.shape == (1, 128, 64, 64)

    def test_second_transition(self):
        block = GenBlock(128, rng=rng())
        out = block(rand_input((1, 128, 64, 64)))
        assert out.data.shape == (1, 256, 32, 32)

    def test_zero_conv_zero_output(self):
        block = GenBlock(8, rng=rng())
        zero_params(block)
        out = block(Tensor(np.full((1, 8, 4, 4), 2.5)))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_odd_dims_rejected(self):
        block = GenBlock(8, rng=rng())
        with pytest.raises(ConfigError):
            block(rand_input((1, 8, 5, 4)))


class TestAttentionSqueeze:
    def test_zero_dense_gives_half_gates(self):
        att = AttentionSqueeze(12, rng=rng())
        zero_params(att)
        x = rand_input((2, 12, 4, 4))
        out, gates = att(x)
        np.testing.assert_allclose(gates.data, 0.5)
        np.testing.assert_allclose(out.data, 0.5 * x.data)

    def test_gates_in_unit_interval(self):
        att = AttentionSqueeze(12, rng=rng())
        _, gates = att(rand_input((1, 12, 8, 8), seed=5))
        assert ((gates.data > 0) & (gates.data < 1)).all()

    def test_param_count_matches_squeeze_design(self):
        att = AttentionSqueeze(448, rng=rng())
        total = sum(p.data.size for p in att.named_params("a").values())
        assert total == 448 * 448 + 448 == 201_152

    def test_channel_mismatch(self):
        att = AttentionSqueeze(12, rng=rng())
        with pytest.raises(ShapeError):
            att(rand_input((1, 8, 4, 4)))


class TestSpatialPoolEnhance:
    def test_zero_weights_is_identity(self):
        spe = SpatialPoolEnhance(16, rng=rng())
        zero_params(spe)
        x = rand_input((1, 16, 16, 16))
        np.testing.assert_array_equal(spe(x).data, x.data)

    def test_dims_preserved(self):
        spe = SpatialPoolEnhance(28, rng=rng())
        out = spe(rand_input((2, 28, 8, 8)))
        assert out.data.shape == (2, 28, 8, 8)

    def test_param_count_matches_branch_design(self):
        spe = SpatialPoolEnhance(448, rng=rng())
        total = sum(p.data.size for p in spe.named_params("s").values())
        assert total == 4 * (448 * 112 + 112) + (448 * 448 + 448) == 402_304

    def test_indivisible_dims_rejected(self):
        spe = SpatialPoolEnhance(16, rng=rng())
        with pytest.raises(ConfigError):
            spe(rand_input((1, 16, 12, 12)))


class TestUpsampleHead:
    def test_output_full_resolution_in_unit_interval(self):
        head = UpsampleHead(28, 4, rng=rng())
        out = head(rand_input((1, 28, 16, 16)))
        assert out.data.shape == (1, 1, 64, 64)
        assert ((out.data > 0) & (out.data < 1)).all()

    def test_zero_final_conv_gives_half(self):
        head = UpsampleHead(12, 4, rng=rng())
        head.conv3.w.data[:] = 0.0
        head.conv3.b.data[:] = 0.0
        out = head(rand_input((1, 12, 4, 4)))
        np.testing.assert_allclose(out.data, 0.5)

    def test_skip_variant_has_more_params(self):
        plain = UpsampleHead(28, 4, rng=rng())
        skip = UpsampleHead(28, 4, with_skip=True, rng=rng())
        count = lambda h: sum(p.data.size for p in h.named_params("h").values())
        assert count(skip) > count(plain)

    def test_skip_shape_enforced(self):
        head = UpsampleHead(12, 4, with_skip=True, rng=rng())
        x = rand_input((1, 12, 4, 4))
        with pytest.raises(ShapeError):
            head(x, rand_input((1, 4, 4, 4)))
        out = head(x, rand_input((1, 4, 8, 8)))
        assert out.data.shape == (1, 1, 16, 16)


class TestBlockGradients:
    """End-to-end finite-difference checks at toy dims in double precision."""

    def _check(self, closure, inputs, tol=1e-4):
        report = finite_diff_check(closure, inputs, tolerance=tol)
        assert report.passed, f"max_rel_err {report.max_rel_err}"

    def test_residual_block(self):
        block = ResidualBlock(8, rng=rng(), dtype=np.float64)
        x = Tensor(np.random.default_rng(0).normal(size=(1, 8, 4, 4)),
                   requires_grad=True, dtype=np.float64)
        params = list(block.named_params("r").values())
        self._check(lambda x_, *ps: T.tensor_sum(T.sigmoid(block(x_))),
                    [x] + params)

    def test_gen_block(self):
        block = GenBlock(4, rng=rng(), dtype=np.float64)
        x = Tensor(np.random.default_rng(1).normal(size=(1, 4, 4, 4)),
                   requires_grad=True, dtype=np.float64)
        params = list(block.named_params("g").values())
        self._check(lambda x_, *ps: T.tensor_sum(T.sigmoid(block(x_))),
                    [x] + params)

    def test_attention_squeeze(self):
        att = AttentionSqueeze(8, rng=rng(), dtype=np.float64)
        x = Tensor(np.random.default_rng(2).normal(size=(1, 8, 4, 4)),
                   requires_grad=True, dtype=np.float64)
        params = list(att.named_params("a").values())
        self._check(lambda x_, *ps: T.tensor_sum(att(x_)[0]), [x] + params)

    def test_spatial_pool_enhance(self):
        spe = SpatialPoolEnhance(8, rng=rng(), dtype=np.float64)
        x = Tensor(np.random.default_rng(3).normal(size=(1, 8, 8, 8)),
                   requires_grad=True, dtype=np.float64)
        params = list(spe.named_params("s").values())
        self._check(lambda x_, *ps: T.tensor_sum(T.sigmoid(spe(x_))), [x] + params)

    def test_upsample_head(self):
        head = UpsampleHead(8, 4, rng=rng(), dtype=np.float64)
        x = Tensor(np.random.default_rng(4).normal(size=(1, 8, 4, 4)),
                   requires_grad=True, dtype=np.float64)
        params = list(head.named_params("h").values())
        self._check(lambda x_, *ps: T.tensor_sum(head(x_)), [x] + params)

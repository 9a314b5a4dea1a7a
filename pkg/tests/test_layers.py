"""
Tests for network layers: coupling blocks, invertible resampling,
basic ops and the parameter container.
"""
import pytest
import numpy as np

from src.autodiff import Context, Parameter, check_op
from src.layers import (
    Conv3d,
    CouplingBlock,
    GaussianSample,
    Initializer,
    InstanceNorm,
    InvertibleDownsample,
    InvertibleUpsample,
    MaxPool3d,
    NonInvertibleWeightError,
    ParameterFormatError,
    ResidualBlock,
    TrilinearUpsample,
    assign_parameters,
    interpolation_matrix,
    load_parameters,
    save_parameters,
)
from src.tensor import Precision, ShapeError, conv3d


@pytest.fixture
def init():
    return Initializer(3, Precision.F64)


def _lerp_taps(i, size, factor):
    s = min(max((i + 0.5) / factor - 0.5, 0.0), size - 1.0)
    lo = int(np.floor(s))
    hi = min(lo + 1, size - 1)
    t = s - lo
    return [(lo, 1.0 - t), (hi, t)]


def _trilinear_reference(x, factor):
    n, c, d, h, w = x.shape
    out = np.zeros((n, c, d * factor, h * factor, w * factor))
    for i in range(d * factor):
        for j in range(h * factor):
            for k in range(w * factor):
                for a, wa in _lerp_taps(i, d, factor):
                    for b, wb in _lerp_taps(j, h, factor):
                        for e, we in _lerp_taps(k, w, factor):
                            out[:, :, i, j, k] += wa * wb * we * x[:, :, a, b, e]
    return out


# ============================================
# Coupling
# ============================================

class TestCouplingBlock:
    def test_zero_init_is_identity(self, init, rng):
        block = CouplingBlock("c", 4, init, zero_init=True)
        x = rng.standard_normal((1, 4, 4, 4, 4))
        assert np.array_equal(block(x), x)

    @pytest.mark.parametrize("depth", [1, 3])
    def test_inverse_round_trip(self, init, rng, depth):
        block = CouplingBlock("c", 6, init, depth=depth, zero_init=False)
        x = rng.standard_normal((2, 6, 4, 2, 4))
        y = block(x)
        assert not np.allclose(y, x)
        assert np.max(np.abs(block.inverse(y) - x)) < 1e-11

    def test_reverse_backward_matches_backward(self, init, rng):
        block = CouplingBlock("c", 4, init, zero_init=False)
        x = rng.standard_normal((1, 4, 3, 3, 3))
        g = rng.standard_normal(x.shape)

        ctx = Context()
        y = block.forward(ctx, x)
        expected = block.backward(ctx, g)
        expected_params = [p.grad.copy() for p in block.parameters()]

        for p in block.parameters():
            p.zero_grad()
        (rebuilt,), (grad,) = block.reverse_backward(Context(), (y,), (g,))
        assert np.allclose(rebuilt, x, atol=1e-12)
        assert np.allclose(grad, expected, atol=1e-12)
        for p, ref in zip(block.parameters(), expected_params):
            assert np.allclose(p.grad, ref, atol=1e-12)

    def test_odd_channels_rejected(self, init):
        with pytest.raises(ShapeError):
            CouplingBlock("c", 5, init)

    def test_wrong_input_channels(self, init, rng):
        block = CouplingBlock("c", 4, init)
        with pytest.raises(ShapeError):
            block(rng.standard_normal((1, 6, 2, 2, 2)))


# ============================================
# Invertible resampling
# ============================================

class TestInvertibleResampling:
    def test_downsample_shape_and_inverse(self, init, rng):
        down = InvertibleDownsample("d", 2, init)
        x = rng.standard_normal((1, 2, 4, 4, 6))
        y = down(x)
        assert y.shape == (1, 16, 2, 2, 3)
        assert np.max(np.abs(down.inverse(y) - x)) < 1e-11

    def test_upsample_undoes_downsample_with_shared_weight(self, init, rng):
        down = InvertibleDownsample("d", 2, init)
        up = InvertibleUpsample("u", 2, init)
        up.weight.assign(down.weight.data)
        x = rng.standard_normal((1, 2, 4, 4, 4))
        assert np.max(np.abs(up(down(x)) - x)) < 1e-11

    def test_identity_mixing_is_pure_shuffle(self, init, rng):
        from src.tensor import pixel_unshuffle3d

        down = InvertibleDownsample("d", 1, init, identity=True)
        x = rng.standard_normal((1, 1, 2, 2, 2))
        assert np.array_equal(down(x), pixel_unshuffle3d(x))

    def test_orthogonal_init(self, init):
        down = InvertibleDownsample("d", 2, init)
        w = down.weight.data
        assert np.allclose(w @ w.T, np.eye(16), atol=1e-12)

    def test_singular_weight_rejected(self, init):
        down = InvertibleDownsample("d", 1, init)
        down.weight.assign(np.zeros((8, 8)))
        with pytest.raises(NonInvertibleWeightError):
            down.validate()

    def test_odd_extent(self, init, rng):
        with pytest.raises(ShapeError):
            InvertibleDownsample("d", 1, init)(rng.standard_normal((1, 1, 3, 4, 4)))

    @pytest.mark.parametrize("cls,channels,shape", [
        (InvertibleDownsample, 1, (1, 1, 2, 2, 4)),
        (InvertibleUpsample, 1, (1, 8, 1, 2, 1)),
    ])
    def test_gradients(self, init, rng, cls, channels, shape):
        op = cls("r", channels, init)
        results = check_op(op, [rng.standard_normal(shape)])
        assert all(r.passed for r in results), [(r.name, r.rel_error) for r in results]


# ============================================
# Basic ops
# ============================================

class TestBasicOps:
    def test_maxpool_routes_gradient_to_argmax(self):
        x = np.zeros((1, 1, 2, 2, 2))
        x[0, 0, 1, 0, 1] = 5.0
        pool = MaxPool3d()
        ctx = Context()
        y = pool.forward(ctx, x)
        assert y.shape == (1, 1, 1, 1, 1) and y.item() == 5.0
        g = pool.backward(ctx, np.ones_like(y))
        assert g[0, 0, 1, 0, 1] == 1.0 and g.sum() == 1.0

    def test_maxpool_saves_compact_index(self, rng):
        ctx = Context()
        MaxPool3d().forward(ctx, rng.standard_normal((1, 2, 4, 4, 4)))
        assert ctx["index"].dtype == np.uint8

    def test_interpolation_rows_sum_to_one(self):
        m = interpolation_matrix(5, 2)
        assert m.shape == (10, 5)
        assert np.allclose(m.sum(axis=1), 1.0)

    def test_trilinear_preserves_constants(self):
        x = np.full((1, 2, 2, 3, 2), 3.5)
        y = TrilinearUpsample()(x)
        assert y.shape == (1, 2, 4, 6, 4)
        assert np.allclose(y, 3.5)

    def test_instance_norm_statistics(self, init, rng):
        norm = InstanceNorm("n", 3, init)
        y = norm(rng.standard_normal((2, 3, 4, 4, 4)) * 5 + 2)
        assert np.allclose(y.mean(axis=(2, 3, 4)), 0.0, atol=1e-10)
        assert np.allclose(y.var(axis=(2, 3, 4)), 1.0, atol=1e-3)

    def test_gaussian_sample_eval_returns_mean(self, rng):
        mu = rng.standard_normal((2, 4))
        logvar = rng.standard_normal((2, 4))
        z = GaussianSample(0)(mu, logvar, training=False)
        assert np.array_equal(z, mu)

    def test_gaussian_sample_is_seeded(self, rng):
        mu = rng.standard_normal((2, 4))
        logvar = np.zeros((2, 4))
        a = GaussianSample(5)(mu, logvar, training=True)
        b = GaussianSample(5)(mu, logvar, training=True)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, mu)

    def test_instance_norm_ignores_shift_and_scale(self, init, rng):
        norm = InstanceNorm("n", 3, init)
        norm.gamma.data[...] = [0.5, 2.0, -1.0]
        norm.beta.data[...] = [0.1, 0.0, 3.0]
        x = rng.standard_normal((2, 3, 4, 4, 4))
        scale = rng.uniform(0.5, 4.0, size=(2, 3, 1, 1, 1))
        shift = rng.uniform(-5.0, 5.0, size=(2, 3, 1, 1, 1))
        assert np.allclose(norm(scale * x + shift), norm(x), atol=1e-4)

    def test_trilinear_matches_nested_loops(self, rng):
        x = rng.standard_normal((1, 2, 2, 3, 2))
        y = TrilinearUpsample()(x)
        assert np.allclose(y, _trilinear_reference(x, 2), atol=1e-12)

    def test_trilinear_half_pixel_values(self):
        x = np.array([0.0, 1.0]).reshape(1, 1, 2, 1, 1)
        y = TrilinearUpsample()(x)
        assert y[0, 0, :, 0, 0] == pytest.approx([0.0, 0.25, 0.75, 1.0])

    def test_gaussian_sample_moments(self):
        draws = 10_000
        mu = np.tile([0.5, -1.0], (draws, 1))
        logvar = np.tile(np.log([4.0, 0.25]), (draws, 1))
        z = GaussianSample(11)(mu, logvar, training=True)
        assert z.mean(axis=0) == pytest.approx([0.5, -1.0], abs=0.08)
        assert z.var(axis=0) == pytest.approx([4.0, 0.25], rel=0.06)


class TestConvBias:
    def test_conv_without_bias(self, init, rng):
        conv = Conv3d("c", 2, 3, init, bias=False)
        assert [p.name for p in conv.parameters()] == ["c.weight"]
        x = rng.standard_normal((1, 2, 4, 4, 4))
        assert np.allclose(conv(x), conv3d(x, conv.weight.data, None, 1, 1))
        assert all(r.passed for r in check_op(conv, [x]))

    def test_convs_feeding_norms_have_no_bias(self, init):
        names = {p.name for p in CouplingBlock("c", 4, init, depth=2).parameters()}
        assert "c.n1.conv0.bias" not in names and "c.n1.conv1.bias" not in names
        assert "c.n1.conv2.bias" in names
        residual = {p.name for p in ResidualBlock("r", 2, init).parameters()}
        assert not any(name.endswith("conv0.bias") or name.endswith("conv1.bias") for name in residual)

    @pytest.mark.parametrize("make, channels", [
        (lambda init: CouplingBlock("c", 4, init, depth=2, zero_init=False), 4),
        (lambda init: ResidualBlock("r", 2, init), 2),
    ])
    def test_every_parameter_passes_finite_differences(self, init, rng, make, channels):
        op = make(init)
        x = rng.standard_normal((1, channels, 3, 3, 3))
        failures = [(r.name, r.rel_error) for r in check_op(op, [x]) if not r.passed]
        assert not failures


# ============================================
# Initialization and parameter container
# ============================================

class TestParameters:
    def test_init_is_keyed_by_name(self):
        a = Initializer(1, Precision.F64)
        b = Initializer(1, Precision.F64)
        b.he_normal("other", (4, 4), fan_in=4)
        assert np.array_equal(a.he_normal("w", (3, 3), 3).data, b.he_normal("w", (3, 3), 3).data)
        assert not np.array_equal(
            a.he_normal("w", (3, 3), 3).data, Initializer(2, Precision.F64).he_normal("w", (3, 3), 3).data
        )

    def test_save_load_assign(self, tmp_path, init):
        conv = Conv3d("c", 2, 3, init)
        path = save_parameters(conv.parameters(), tmp_path / "conv.ivparams")
        tensors = load_parameters(path)
        assert set(tensors) == {"c.weight", "c.bias"}
        assert tensors["c.weight"].dtype == np.float64

        fresh = Conv3d("c", 2, 3, Initializer(99, Precision.F64))
        assert assign_parameters(fresh.parameters(), tensors) == 2
        assert np.array_equal(fresh.weight.data, conv.weight.data)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ivparams"
        path.write_bytes(b"NOPE\x00\x00\x00\x00")
        with pytest.raises(ParameterFormatError, match="magic"):
            load_parameters(path)

    def test_truncated(self, tmp_path, init):
        path = save_parameters([init.ones("w", (4, 4))], tmp_path / "w.ivparams")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ParameterFormatError, match="truncated"):
            load_parameters(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_parameters(tmp_path / "absent.ivparams")

    def test_header_byte_flips_are_rejected(self, tmp_path, rng, init):
        path = save_parameters([init.ones("w", (3, 4))], tmp_path / "w.ivparams")
        clean = path.read_bytes()
        # magic, count, name length, dtype, rank and extents; the name byte at 10 is skipped
        fields = [*range(0, 10), *range(11, 21)]
        for _ in range(200):
            raw = bytearray(clean)
            raw[fields[int(rng.integers(0, len(fields)))]] ^= int(rng.integers(1, 256))
            path.write_bytes(bytes(raw))
            with pytest.raises(ParameterFormatError):
                load_parameters(path)

    def test_non_utf8_name(self, tmp_path, init):
        path = save_parameters([init.ones("w", (2,))], tmp_path / "w.ivparams")
        raw = bytearray(path.read_bytes())
        raw[10] = 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ParameterFormatError, match="utf-8"):
            load_parameters(path)

    def test_assign_shape_mismatch(self):
        with pytest.raises(ParameterFormatError, match="shape"):
            assign_parameters([Parameter("w", np.zeros(3))], {"w": np.zeros(4)})

    def test_assign_missing_strict(self):
        with pytest.raises(ParameterFormatError, match="missing"):
            assign_parameters([Parameter("w", np.zeros(3))], {})
        assert assign_parameters([Parameter("w", np.zeros(3))], {}, strict=False) == 0

import math

import numpy as np
import pytest

from backend.app.core.errors import NonFiniteError, ShapeError
from backend.app.engine import Tensor, backward, precision, recording
from backend.app.engine import ops


def naive_conv(x: np.ndarray, w: np.ndarray, b=None, stride: int = 1, pad: int = 0, groups: int = 1) -> np.ndarray:
    n, cin, h, wd = x.shape
    cout, cg, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    og = cout // groups
    out = np.zeros((n, cout, ho, wo))
    for ni in range(n):
        for co in range(cout):
            g = co // og
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(cg):
                        for p in range(kh):
                            for q in range(kw):
                                acc += xp[ni, g * cg + ci, i * stride + p, j * stride + q] * w[co, ci, p, q]
                    out[ni, co, i, j] = acc + (0.0 if b is None else b[0, co, 0, 0])
    return out


def naive_bilinear(x: np.ndarray, factor: int) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.zeros((n, c, h * factor, w * factor))

    def coords(dst: int, size: int) -> tuple[int, int, float]:
        src = max((dst + 0.5) / factor - 0.5, 0.0)
        i0 = min(int(math.floor(src)), size - 1)
        return i0, min(i0 + 1, size - 1), src - i0

    for p in range(h * factor):
        y0, y1, ly = coords(p, h)
        for q in range(w * factor):
            x0, x1, lx = coords(q, w)
            out[:, :, p, q] = (
                (1 - ly) * (1 - lx) * x[:, :, y0, x0]
                + (1 - ly) * lx * x[:, :, y0, x1]
                + ly * (1 - lx) * x[:, :, y1, x0]
                + ly * lx * x[:, :, y1, x1]
            )
    return out


def naive_shift(x: np.ndarray, dx: int, dy: int) -> np.ndarray:
    out = np.zeros_like(x)
    h, w = x.shape[2:]
    for i in range(h):
        for j in range(w):
            si, sj = i - dy, j - dx
            if 0 <= si < h and 0 <= sj < w:
                out[:, :, i, j] = x[:, :, si, sj]
    return out


def t64(data) -> Tensor:
    with precision("float64"):
        return Tensor(np.asarray(data, dtype=np.float64))


def test_tensor_rejects_non_4d() -> None:
    with pytest.raises(ShapeError):
        Tensor(np.zeros((2, 3)))


def test_conv2d_scalar_and_identity_kernels() -> None:
    out = ops.conv2d(Tensor(np.ones((1, 1, 2, 2))), Tensor([[[[2.0]]]]))
    assert np.all(out.data == 2.0)

    x = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
    ident = np.zeros((1, 1, 3, 3), dtype=np.float32)
    ident[0, 0, 1, 1] = 1.0
    out = ops.conv2d(Tensor(x), Tensor(ident), padding=1)
    np.testing.assert_array_equal(out.data, x)


@pytest.mark.parametrize("stride,pad,groups", [(1, 0, 1), (1, 1, 1), (2, 1, 1), (1, 1, 2), (2, 0, 2)])
def test_conv2d_matches_nested_loop_oracle(stride: int, pad: int, groups: int) -> None:
    rng = np.random.default_rng(stride * 10 + pad + groups)
    for _ in range(5):
        x = rng.standard_normal((1, 2, 4, 4)) if groups == 1 else rng.standard_normal((2, 4, 5, 5))
        cin = x.shape[1]
        w = rng.standard_normal((6 if groups == 2 else 3, cin // groups, 3, 3))
        b = rng.standard_normal((1, w.shape[0], 1, 1))
        with precision("float64"):
            out = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad, groups=groups)
        np.testing.assert_allclose(out.data, naive_conv(x, w, b, stride, pad, groups), atol=1e-10)


def test_conv2d_depthwise_matches_oracle(rng: np.random.Generator) -> None:
    x = rng.standard_normal((2, 4, 6, 6))
    w = rng.standard_normal((4, 1, 7, 7))
    with precision("float64"):
        out = ops.conv2d(Tensor(x), Tensor(w), padding=3, groups=4)
    np.testing.assert_allclose(out.data, naive_conv(x, w, pad=3, groups=4), atol=1e-10)


def test_conv2d_rejects_bad_groups() -> None:
    with pytest.raises(ShapeError):
        ops.conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((2, 1, 3, 3))), groups=2)


def test_depthwise_separable_identity_and_oracle(rng: np.random.Generator) -> None:
    x = rng.standard_normal((1, 3, 5, 5))
    dw = np.zeros((3, 1, 3, 3))
    dw[:, 0, 1, 1] = 1.0
    pw = np.eye(3).reshape(3, 3, 1, 1)
    with precision("float64"):
        out = ops.depthwise_separable(Tensor(x), Tensor(dw), Tensor(pw))
    np.testing.assert_allclose(out.data, x, atol=1e-12)

    dw = rng.standard_normal((3, 1, 3, 3))
    pw = rng.standard_normal((2, 3, 1, 1))
    with precision("float64"):
        out = ops.depthwise_separable(Tensor(x), Tensor(dw), Tensor(pw))
    expected = naive_conv(naive_conv(x, dw, pad=1, groups=3), pw)
    np.testing.assert_allclose(out.data, expected, atol=1e-10)


def test_depthwise_separable_single_channel_is_scaled_conv(rng: np.random.Generator) -> None:
    x = rng.standard_normal((1, 1, 4, 4))
    dw = rng.standard_normal((1, 1, 3, 3))
    with precision("float64"):
        out = ops.depthwise_separable(Tensor(x), Tensor(dw), Tensor([[[[2.5]]]]))
    np.testing.assert_allclose(out.data, 2.5 * naive_conv(x, dw, pad=1), atol=1e-10)


def test_instance_norm_examples(rng: np.random.Generator) -> None:
    x = np.array([1.0, 3.0, 1.0, 3.0]).reshape(1, 1, 2, 2)
    one, zero = np.ones((1, 1, 1, 1)), np.zeros((1, 1, 1, 1))
    with precision("float64"):
        out = ops.instance_norm(Tensor(x), Tensor(one), Tensor(zero), eps=0.0)
    np.testing.assert_allclose(out.data.ravel(), [-1.0, 1.0, -1.0, 1.0])

    with precision("float64"):
        out = ops.instance_norm(Tensor(np.full((1, 2, 3, 3), 4.0)), Tensor(np.ones((1, 2, 1, 1))), Tensor(np.full((1, 2, 1, 1), 0.7)))
    np.testing.assert_allclose(out.data, 0.7)

    x = rng.standard_normal((2, 4, 5, 5)) * 3 + 1
    gamma = rng.uniform(0.5, 2.0, size=(1, 4, 1, 1))
    beta = rng.standard_normal((1, 4, 1, 1))
    with precision("float64"):
        out = ops.instance_norm(Tensor(x), Tensor(gamma), Tensor(beta))
    np.testing.assert_allclose(out.data.mean(axis=(2, 3)), np.broadcast_to(beta[:, :, 0, 0], (2, 4)), atol=1e-10)
    var = x.var(axis=(2, 3), keepdims=True)
    expected_var = gamma**2 * var / (var + 1e-5)
    np.testing.assert_allclose(out.data.var(axis=(2, 3), keepdims=True), np.broadcast_to(expected_var, (2, 4, 1, 1)), rtol=1e-9)


def test_activations_at_known_points() -> None:
    with precision("float64"):
        assert ops.gelu(Tensor(np.zeros((1, 1, 1, 1)))).item() == 0.0
        assert ops.sigmoid(Tensor(np.zeros((1, 1, 1, 1)))).item() == 0.5
        assert abs(ops.gelu(Tensor(np.full((1, 1, 1, 1), 10.0))).item() - 10.0) < 1e-6
        assert ops.sigmoid(Tensor(np.full((1, 1, 1, 1), 40.0))).item() == pytest.approx(1.0)


def test_bilinear_upsample(rng: np.random.Generator) -> None:
    const = ops.bilinear_upsample(Tensor(np.full((1, 2, 3, 3), 0.25)), 4)
    np.testing.assert_allclose(const.data, 0.25, atol=1e-7)

    x = rng.standard_normal((1, 2, 3, 4))
    with precision("float64"):
        np.testing.assert_array_equal(ops.bilinear_upsample(Tensor(x), 1).data, x)
        small = ops.bilinear_upsample(Tensor(np.array([[0.0, 1.0], [2.0, 3.0]]).reshape(1, 1, 2, 2)), 2)
    expected = naive_bilinear(np.array([[0.0, 1.0], [2.0, 3.0]]).reshape(1, 1, 2, 2), 2)
    np.testing.assert_allclose(small.data, expected, atol=1e-12)
    np.testing.assert_allclose(small.data[0, 0, 0], [0.0, 0.25, 0.75, 1.0])

    for factor in (2, 4, 8):
        x = rng.standard_normal((2, 3, 4, 5))
        with precision("float64"):
            out = ops.bilinear_upsample(Tensor(x), factor)
        np.testing.assert_allclose(out.data, naive_bilinear(x, factor), atol=1e-6)


def test_pixel_shuffle_convention_and_permutation(rng: np.random.Generator) -> None:
    out = ops.pixel_shuffle(Tensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1, 1)), 2)
    np.testing.assert_array_equal(out.data[0, 0], [[1.0, 2.0], [3.0, 4.0]])

    x = rng.standard_normal((2, 8, 3, 3))
    with precision("float64"):
        shuffled = ops.pixel_shuffle(Tensor(x), 2)
        restored = ops.pixel_unshuffle(shuffled, 2)
    np.testing.assert_array_equal(restored.data, x)
    np.testing.assert_array_equal(np.sort(shuffled.data.ravel()), np.sort(x.ravel()))
    for c in range(2):
        for h in range(3):
            for w in range(3):
                for i in range(2):
                    for j in range(2):
                        assert shuffled.data[1, c, h * 2 + i, w * 2 + j] == x[1, c * 4 + i * 2 + j, h, w]


def test_spatial_shift(rng: np.random.Generator) -> None:
    x = np.zeros((1, 1, 3, 3))
    x[0, 0, 1, 1] = 1.0
    out = ops.spatial_shift(t64(x), 1, 0)
    assert out.data[0, 0, 1, 2] == 1.0 and out.data.sum() == 1.0

    big = ops.spatial_shift(t64(rng.standard_normal((1, 2, 4, 4))), 4, 0)
    assert not big.data.any()

    for dx, dy in [(2, -1), (-3, 2), (0, 1), (1, 1)]:
        x = rng.standard_normal((2, 3, 6, 7))
        np.testing.assert_array_equal(ops.spatial_shift(t64(x), dx, dy).data, naive_shift(x, dx, dy))
        back = ops.spatial_shift(ops.spatial_shift(t64(x), dx, dy), -dx, -dy).data
        h, w = x.shape[2:]
        rows = slice(max(0, -dy), h - max(0, dy))
        cols = slice(max(0, -dx), w - max(0, dx))
        np.testing.assert_array_equal(back[:, :, rows, cols], x[:, :, rows, cols])


def test_pooling(rng: np.random.Generator) -> None:
    grid = t64(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
    assert ops.global_avg_pool(grid).item() == 2.5
    assert ops.max_pool2d(grid).item() == 4.0
    assert ops.max_pool2d(t64(np.full((1, 1, 4, 4), 0.3))).data.ravel().tolist() == [0.3] * 4

    x = rng.standard_normal((2, 8, 16, 16))
    out = ops.max_pool2d(t64(x)).data
    for i in range(8):
        for j in range(8):
            np.testing.assert_array_equal(out[:, :, i, j], x[:, :, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max(axis=(2, 3)))


def test_max_pool_routes_ties_to_first_element() -> None:
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    with recording() as tape:
        loss = ops.sum_all(ops.max_pool2d(x))
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])


def test_concat_split_round_trip(rng: np.random.Generator) -> None:
    x = t64(rng.standard_normal((1, 8, 3, 3)))
    np.testing.assert_array_equal(ops.concat_channels(ops.split_channels(x, 8)).data, x.data)
    a, b = t64(np.zeros((1, 2, 3, 3))), t64(np.ones((1, 3, 3, 3)))
    joined = ops.concat_channels([a, b])
    assert joined.shape == (1, 5, 3, 3)
    assert joined.data[0, :2].sum() == 0 and joined.data[0, 2:].min() == 1
    with pytest.raises(ShapeError):
        ops.split_channels(x, 3)


def test_l1_loss(rng: np.random.Generator) -> None:
    t = rng.standard_normal((2, 3, 4, 4))
    assert ops.l1_loss(t64(t), t64(t)).item() == 0.0
    assert ops.l1_loss(t64(t + 0.5), t64(t)).item() == pytest.approx(0.5)

    p = rng.standard_normal((2, 3, 4, 4))
    with precision("float64"):
        pred = Tensor(p, requires_grad=True)
        with recording() as tape:
            loss = ops.l1_loss(pred, Tensor(t))
        tape.backward(loss)
    assert loss.item() == pytest.approx(np.mean(np.abs(p - t)), abs=1e-12)
    np.testing.assert_allclose(pred.grad, np.sign(p - t) / p.size)


def naive_max_pool(x: np.ndarray, kernel: int = 2, stride: int = 2) -> np.ndarray:
    n, c, h, w = x.shape
    ho, wo = (h - kernel) // stride + 1, (w - kernel) // stride + 1
    out = np.zeros((n, c, ho, wo))
    for i in range(ho):
        for j in range(wo):
            out[:, :, i, j] = x[:, :, i * stride : i * stride + kernel, j * stride : j * stride + kernel].max(axis=(2, 3))
    return out


def naive_avg_pool(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.zeros((n, c, 1, 1))
    for i in range(h):
        for j in range(w):
            out[:, :, 0, 0] += x[:, :, i, j]
    return out / (h * w)


def naive_pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.zeros((n, c // (r * r), h * r, w * r))
    for co in range(c // (r * r)):
        for i in range(r):
            for j in range(r):
                out[:, co, i::r, j::r] = x[:, co * r * r + i * r + j]
    return out


@pytest.mark.parametrize("seed", range(100))
def test_ops_match_oracles_on_random_inputs(seed: int) -> None:
    rng = np.random.default_rng(1000 + seed)

    groups = int(rng.integers(1, 3))
    cin, cout = groups * int(rng.integers(1, 3)), groups * int(rng.integers(1, 3))
    k = int(rng.choice([1, 3, 5]))
    stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, k // 2 + 1))
    x = rng.standard_normal((int(rng.integers(1, 3)), cin, int(rng.integers(k, 8)), int(rng.integers(k, 8))))
    w = rng.standard_normal((cout, cin // groups, k, k))
    b = rng.standard_normal((1, cout, 1, 1)) if rng.random() < 0.5 else None
    with precision("float64"):
        out = ops.conv2d(Tensor(x), Tensor(w), None if b is None else Tensor(b), stride=stride, padding=pad, groups=groups)
    np.testing.assert_allclose(out.data, naive_conv(x, w, b, stride, pad, groups), atol=1e-10)

    x = rng.standard_normal((int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(2, 10)), int(rng.integers(2, 10))))
    np.testing.assert_array_equal(ops.max_pool2d(t64(x)).data, naive_max_pool(x))
    np.testing.assert_allclose(ops.global_avg_pool(t64(x)).data, naive_avg_pool(x), atol=1e-12)

    factor = int(rng.choice([1, 2, 4, 8]))
    x = rng.standard_normal((1, int(rng.integers(1, 3)), int(rng.integers(1, 6)), int(rng.integers(1, 6))))
    with precision("float64"):
        up = ops.bilinear_upsample(Tensor(x), factor)
    np.testing.assert_allclose(up.data, naive_bilinear(x, factor), atol=1e-10)

    r = int(rng.integers(1, 4))
    x = rng.standard_normal((int(rng.integers(1, 3)), r * r * int(rng.integers(1, 3)), int(rng.integers(1, 5)), int(rng.integers(1, 5))))
    shuffled = ops.pixel_shuffle(t64(x), r).data
    np.testing.assert_array_equal(shuffled, naive_pixel_shuffle(x, r))
    np.testing.assert_array_equal(ops.pixel_unshuffle(t64(shuffled), r).data, x)

    x = rng.standard_normal((1, int(rng.integers(1, 4)), int(rng.integers(1, 8)), int(rng.integers(1, 8))))
    dx, dy = (int(v) for v in rng.integers(-8, 9, size=2))
    np.testing.assert_array_equal(ops.spatial_shift(t64(x), dx, dy).data, naive_shift(x, dx, dy))


def test_backward_sum_and_disconnected_parameter() -> None:
    x = Tensor(np.ones((1, 2, 2, 2)), requires_grad=True)
    unused = Tensor(np.ones((1, 2, 1, 1)), requires_grad=True)
    with recording():
        loss = ops.sum_all(x)
    backward(loss)
    np.testing.assert_array_equal(x.grad, np.ones((1, 2, 2, 2)))
    assert unused.grad is None or not unused.grad.any()


def test_backward_accumulates_until_zeroed() -> None:
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    for _ in range(2):
        with recording() as tape:
            loss = ops.sum_all(ops.scale(x, 3.0))
        tape.backward(loss)
    np.testing.assert_array_equal(x.grad, 6.0)
    x.zero_grad()
    assert x.grad is None or not x.grad.any()


def test_backward_requires_scalar_on_tape() -> None:
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    with recording() as tape:
        y = ops.scale(x, 2.0)
    with pytest.raises(ShapeError):
        tape.backward(y)


def test_ops_outside_recording_do_not_track() -> None:
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    y = ops.gelu(x)
    assert y.tape is None and not y.requires_grad


def test_non_finite_output_raises() -> None:
    x = Tensor(np.array([np.inf]).reshape(1, 1, 1, 1))
    with pytest.raises(NonFiniteError, match="gelu"):
        ops.gelu(x)


def test_broadcast_limited_to_channel_vectors() -> None:
    a = Tensor(np.ones((1, 2, 3, 3)))
    ops.mul(a, Tensor(np.ones((1, 2, 1, 1))))
    with pytest.raises(ShapeError):
        ops.add(a, Tensor(np.ones((1, 2, 3, 1))))


def test_engine_is_deterministic(rng: np.random.Generator) -> None:
    x = rng.standard_normal((2, 4, 8, 8)).astype(np.float32)
    w = rng.standard_normal((4, 1, 3, 3)).astype(np.float32)
    a = ops.gelu(ops.conv2d(Tensor(x), Tensor(w), padding=1, groups=4)).data
    b = ops.gelu(ops.conv2d(Tensor(x), Tensor(w), padding=1, groups=4)).data
    assert a.tobytes() == b.tobytes()


def test_matches_torch_reference(rng: np.random.Generator) -> None:
    torch = pytest.importorskip("torch")
    F = torch.nn.functional
    x = rng.standard_normal((2, 8, 16, 16))
    w = rng.standard_normal((8, 4, 3, 3))
    with precision("float64"):
        conv = ops.conv2d(Tensor(x), Tensor(w), stride=2, padding=1, groups=2).data
        up = ops.bilinear_upsample(Tensor(x), 2).data
        shuffled = ops.pixel_shuffle(Tensor(x), 2).data
    tx, tw = torch.from_numpy(x), torch.from_numpy(w)
    np.testing.assert_allclose(conv, F.conv2d(tx, tw, stride=2, padding=1, groups=2).numpy(), atol=1e-10)
    np.testing.assert_allclose(up, F.interpolate(tx, scale_factor=2, mode="bilinear", align_corners=False).numpy(), atol=1e-10)
    np.testing.assert_array_equal(shuffled, F.pixel_shuffle(tx, 2).numpy())

import numpy as np
import pytest

from conftest import crandn
from msmri.denoiser import (Architecture, backward, denoise_image, forward, forward_with_cache, init_model,
                            load_model, pack, save_model, unpack, zero_body)
from msmri.exceptions import FormatError

PROBE = Architecture(levels=2, base_channels=4, n_phases=2)


def probe_model(seed=0):
    """Tiny model with small random biases so every bias gradient is exercised."""
    model = init_model(PROBE, seed)
    rng = np.random.default_rng(seed + 100)
    for layer in model.layers:
        layer.bias[...] = 0.1 * rng.standard_normal(layer.bias.shape)
    return model


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_default_architecture_size():
    model = init_model()
    assert model.arch.io_channels == 8
    assert len(model.layers) == 8
    assert model.n_params == 53176


def test_init_is_deterministic_with_zero_biases():
    a, b = init_model(seed=3), init_model(seed=3)
    assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))
    assert a.checksum() == b.checksum() != init_model(seed=4).checksum()
    assert all(np.all(layer.bias == 0) for layer in a.layers)


def test_init_weight_scale():
    model = init_model(seed=0)
    for layer in model.layers:
        fan_in = layer.weight.shape[1] * 9
        if fan_in >= 144:
            assert abs(layer.weight.std() / np.sqrt(2.0 / fan_in) - 1) <= 0.2


def test_zero_body_is_identity(rng):
    model = zero_body(init_model(seed=1))
    x = rng.standard_normal((2, 8, 16, 16))
    assert np.array_equal(forward(model, x), x)
    img = crandn(rng, 12, 20, 4)
    assert np.array_equal(denoise_image(model, img), img)


def test_zero_input_gives_zero_output():
    assert np.all(forward(init_model(seed=2), np.zeros((1, 8, 8, 8))) == 0)


def test_forward_is_deterministic(rng):
    model = init_model(Architecture(2, 4, 1), seed=0)
    x = rng.standard_normal((1, 2, 8, 8))
    assert np.array_equal(forward(model, x), forward(model, x))


def test_input_validation(rng):
    model = init_model(PROBE)
    with pytest.raises(ValueError, match="divisible by 4"):
        forward(model, rng.standard_normal((1, 4, 6, 8)))
    with pytest.raises(ValueError, match="channels"):
        forward(model, rng.standard_normal((1, 3, 8, 8)))
    with pytest.raises(ValueError, match="phases"):
        denoise_image(model, crandn(rng, 8, 8, 3))


def test_zero_upstream_gradient():
    model = probe_model()
    x = np.random.default_rng(0).standard_normal((1, 4, 8, 8))
    grads, gx = backward(model, x, np.zeros_like(x))
    assert all(np.all(g == 0) for g in grads) and np.all(gx == 0)


def test_final_bias_gradient_counts_pixels():
    model = probe_model()
    x = np.random.default_rng(1).standard_normal((1, 4, 8, 8))
    grads, _ = backward(model, x, np.ones_like(x))
    assert np.allclose(grads[-1], 8 * 8, rtol=0, atol=1e-12)


def test_backward_matches_finite_differences():
    model = probe_model()
    rng = np.random.default_rng(5)
    x = rng.standard_normal((1, 4, 8, 8))
    r = rng.standard_normal(x.shape)

    def objective(m, inp):
        return float(np.sum(forward(m, inp) * r))

    grads, gx = backward(model, x, r)
    h = 1e-5
    for p, g in zip(model.parameters(), grads):
        fd = np.empty_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = objective(model, x)
            p[idx] = old - h
            down = objective(model, x)
            p[idx] = old
            fd[idx] = (up - down) / (2 * h)
        assert rel(g, fd) <= 1e-4
    fdx = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        fdx[idx] = (objective(model, xp) - objective(model, xm)) / (2 * h)
    assert rel(gx, fdx) <= 1e-4


def test_backward_rejects_mismatched_shapes():
    model = probe_model()
    x = np.zeros((1, 4, 8, 8))
    _, cache = forward_with_cache(model, x)
    with pytest.raises(ValueError):
        backward(model, x, np.zeros((1, 4, 16, 16)), cache)


def test_odd_shapes_are_preserved(rng):
    model = init_model(seed=0)
    img = crandn(rng, 63, 61, 4)
    assert denoise_image(model, img).shape == (63, 61, 4)


def test_pack_unpack_round_trip(rng):
    img = crandn(rng, 5, 6, 3)
    t = pack(img)
    assert t.shape == (6, 5, 6)
    assert np.array_equal(t[2], img[:, :, 1].real) and np.array_equal(t[3], img[:, :, 1].imag)
    assert np.array_equal(unpack(t), img)


def test_save_load_round_trip(tmp_path):
    model = init_model(seed=9)
    for layer in model.layers:
        layer.bias[...] = np.float32(0.25)
    path = tmp_path / "m.msn"
    save_model(model, path)
    back = load_model(path)
    assert back.arch == model.arch
    assert all(np.array_equal(p, q) for p, q in zip(model.parameters(), back.parameters()))
    assert path.stat().st_size == 12 + 20 * len(model.layers) + 4 * model.n_params


@pytest.mark.parametrize("damage", ["magic", "version", "truncate", "extra"])
def test_corrupted_model_rejected(tmp_path, damage):
    path = tmp_path / "m.msn"
    save_model(init_model(PROBE), path)
    raw = bytearray(path.read_bytes())
    if damage == "magic":
        raw[:4] = b"XXXX"
    elif damage == "version":
        raw[4] = 7
    elif damage == "truncate":
        raw = raw[:-3]
    else:
        raw += b"\0\0\0\0"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_model(path)

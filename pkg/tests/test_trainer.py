import numpy as np
import pytest

from conftest import SYNTHETIC_EPOCH1_LOSS, SYNTHETIC_EPOCH50_LOSS, crandn, noisy_constant
from msmri.denoiser import Architecture, denoise_image, init_model, zero_body
from msmri.exceptions import DivergenceError
from msmri.trainer import TrainConfig, build_training_set, evaluate_denoiser, train

SMALL = Architecture(2, 4, 1)


def small_pairs(seed=0, subjects=1):
    return build_training_set([noisy_constant(seed + s, size=16) for s in range(subjects)], 2)


@pytest.mark.parametrize("bad", [dict(lr=-1.0), dict(epochs=0), dict(batch_size=0), dict(factor_n=1),
                                 dict(optimizer="rmsprop"), dict(loss="huber")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        TrainConfig(**bad)


def test_pair_counts(rng):
    eight = build_training_set([crandn(rng, 8, 8, 2) for _ in range(8)], 2)
    assert len(eight) == 96
    assert len(build_training_set([crandn(rng, 9, 9, 1)], 3)) == 72
    assert all(a.shape == b.shape == (4, 4, 2) for a, b in eight)
    with pytest.raises(ValueError):
        build_training_set([], 2)


def test_zero_learning_rate_keeps_parameters():
    model = init_model(SMALL, seed=0)
    trained, report = train(model, small_pairs(), TrainConfig(epochs=3, lr=0.0))
    assert all(np.array_equal(p, q) for p, q in zip(model.parameters(), trained.parameters()))
    assert report.epoch_losses[0] == report.epoch_losses[1] == report.epoch_losses[2]
    assert report.checksum == model.checksum()


def test_identity_model_on_identical_pairs_has_zero_loss():
    img = noisy_constant(0, size=8)
    model = zero_body(init_model(SMALL, seed=0))
    trained, report = train(model, [(img, img)] * 4, TrainConfig(epochs=2, batch_size=2))
    assert report.epoch_losses == [0.0, 0.0]
    assert all(np.array_equal(p, q) for p, q in zip(model.parameters(), trained.parameters()))


def test_training_does_not_mutate_input_model():
    model = init_model(SMALL, seed=0)
    before = model.checksum()
    train(model, small_pairs(), TrainConfig(epochs=1))
    assert model.checksum() == before


def test_training_is_deterministic():
    pairs = small_pairs(subjects=2)
    cfg = TrainConfig(epochs=2, batch_size=4, seed=3)
    _, a = train(init_model(SMALL, 0), pairs, cfg)
    _, b = train(init_model(SMALL, 0), pairs, cfg)
    _, c = train(init_model(SMALL, 0), pairs, TrainConfig(epochs=2, batch_size=4, seed=4))
    assert a.checksum == b.checksum != c.checksum
    assert a.epoch_losses == b.epoch_losses


@pytest.mark.parametrize("optimizer,loss", [("sgd", "l2"), ("adam", "l1"), ("sgd", "l1")])
def test_other_optimizers_and_losses_reduce_loss(optimizer, loss):
    lr = 0.05 if optimizer == "sgd" else 1e-3
    _, report = train(init_model(SMALL, 0), small_pairs(subjects=2),
                      TrainConfig(epochs=10, lr=lr, optimizer=optimizer, loss=loss))
    assert report.epoch_losses[-1] < report.epoch_losses[0]


def test_divergence_is_reported():
    with pytest.raises(DivergenceError) as info:
        train(init_model(SMALL, 0), small_pairs(), TrainConfig(epochs=5, lr=1e6, optimizer="sgd"))
    assert isinstance(info.value.step, tuple)


def test_shape_mismatch_rejected(rng):
    with pytest.raises(ValueError):
        train(init_model(SMALL, 0), [(crandn(rng, 8, 8, 1), crandn(rng, 4, 4, 1))], TrainConfig(epochs=1))


def test_log_text_format():
    _, report = train(init_model(SMALL, 0), small_pairs(), TrainConfig(epochs=2))
    lines = report.log_text().splitlines()
    assert lines[0] == "# training pairs: 12"
    body = [ln for ln in lines if not ln.startswith("#")]
    assert [int(ln.split("\t")[0]) for ln in body] == [1, 2]
    assert float(body[-1].split("\t")[1]) == report.final_loss


def test_synthetic_task_halves_loss(synthetic_run):
    _, _, report = synthetic_run
    losses = report.epoch_losses
    assert len(losses) == 50 and report.n_pairs == 48
    assert losses[0] == pytest.approx(SYNTHETIC_EPOCH1_LOSS, rel=1e-6)
    assert losses[-1] == pytest.approx(SYNTHETIC_EPOCH50_LOSS, rel=1e-6)
    assert losses[-1] < 0.5 * losses[0]


def test_trained_model_beats_untrained(synthetic_run):
    model0, model, _ = synthetic_run
    noisy = noisy_constant(99)
    clean = np.full_like(noisy, 0.5)
    assert evaluate_denoiser(model, noisy, clean).psnr_db > evaluate_denoiser(model0, noisy, clean).psnr_db


def test_trained_model_reduces_variance(synthetic_run):
    _, model, _ = synthetic_run
    noisy = noisy_constant(99)
    assert np.var(denoise_image(model, noisy)) < np.var(noisy)


def test_evaluate_identical_is_capped():
    img = noisy_constant(0, size=8)
    assert evaluate_denoiser(zero_body(init_model(SMALL, 0)), img, img).psnr_db == 99.0

"""Noise schedule identities, codec behavior, fd/rd gradients."""
import numpy as np
import pytest

from alignedit.corpus import Corpus, generate_corpus
from alignedit.diffusion import (LatentCodec, NoiseSchedule, ScheduleError,
                                 fd, fd_batch, rd, rd_batch_graph, train_codec)
from alignedit.numerics import ParamStore, RngStream, Tensor, fd_check
from alignedit.numerics import tensor as T


@pytest.fixture(scope="module")
def schedule():
    return NoiseSchedule.linear()


def test_schedule_monotonicity(schedule):
    assert schedule.alpha_bar[0] == 1.0
    assert np.all(np.diff(schedule.alpha_bar) < 0)
    assert np.all(np.diff(schedule.betas) > 0)
    assert np.all((schedule.betas > 0) & (schedule.betas < 1))


def test_schedule_rejects_bad_betas():
    with pytest.raises(ScheduleError):
        NoiseSchedule.from_betas([0.3, 0.2, 0.5])
    with pytest.raises(ScheduleError):
        NoiseSchedule.from_betas([0.1, 0.5, 1.2])


def test_fd_at_zero_is_identity(schedule):
    rng = RngStream(0, "fd")
    latent = rng.normal((8, 8, 4))
    noise = rng.normal((8, 8, 4))
    out = fd(latent, noise, 0, schedule)
    assert out.k == 0
    assert np.array_equal(out.latent, latent)


def test_fd_quarter_alpha_bar_arithmetic():
    # alpha_bar = 0.25 -> 0.5 L + sqrt(0.75) N
    sched = NoiseSchedule.from_betas([0.5, 0.75])  # abar = [1, 0.5, 0.125]
    sched.alpha_bar = np.array([1.0, 0.25, 0.1])
    latent = np.ones((4, 4, 2), dtype=np.float32)
    noise = np.full((4, 4, 2), 2.0, dtype=np.float32)
    out = fd(latent, noise, 1, sched)
    expected = 0.5 * latent + 0.8660254 * noise
    assert np.allclose(out.latent, expected, atol=1e-6)


def test_fd_terminal_step_decorrelates(schedule):
    rng = RngStream(1, "corr")
    corrs = []
    for _ in range(1000):
        latent = rng.normal((64,))
        noise = rng.normal((64,))
        out = fd(latent, noise, schedule.T, schedule)
        corrs.append(np.corrcoef(out.latent, latent)[0, 1])
    assert abs(np.mean(corrs)) < 0.05


def test_fd_variance_preservation(schedule):
    rng = RngStream(2, "var")
    draws = 1000
    latents = rng.normal((draws, 256))
    noises = rng.normal((draws, 256))
    for k in range(schedule.T + 1):
        ks = np.full(draws, k)
        out = fd_batch(latents, noises, ks, schedule)
        assert abs(out.var() - 1.0) < 0.05, f"variance broken at k={k}"


def test_fd_rejects_bad_inputs(schedule):
    rng = RngStream(3, "bad")
    latent = rng.normal((8, 8, 4))
    with pytest.raises(ScheduleError):
        fd(latent, rng.normal((8, 8, 2)), 1, schedule)
    with pytest.raises(ScheduleError):
        fd(latent, rng.normal((8, 8, 4)), schedule.T + 1, schedule)


def test_rd_arithmetic_example():
    sched = NoiseSchedule.linear()
    sched.alpha_bar = sched.alpha_bar.copy()
    sched.alpha_bar[2] = 0.25
    sched.alpha_bar[1] = 0.64
    rng = RngStream(4, "rd")
    latent = rng.normal((8, 8, 4))
    noise = rng.normal((8, 8, 4))
    state = fd(latent, noise, 2, sched)
    out = rd(state, noise, sched)
    assert out.k == 1
    assert np.allclose(out.latent, 0.8 * latent + 0.6 * noise, atol=1e-5)


def test_rd_with_oracle_noise_telescopes_to_clean(schedule):
    rng = RngStream(5, "tele")
    latent = rng.normal((8, 8, 4))
    noise = rng.normal((8, 8, 4))
    for k in range(1, schedule.T + 1):
        stepped = rd(fd(latent, noise, k, schedule), noise, schedule)
        ref = fd(latent, noise, k - 1, schedule)
        assert np.abs(stepped.latent - ref.latent).max() <= 1e-5
    state = fd(latent, noise, schedule.T, schedule)
    for k in range(schedule.T, 0, -1):
        state = rd(state, noise, schedule)
    assert np.abs(state.latent - latent).max() <= 1e-5


def test_rd_refuses_step_below_clean(schedule):
    rng = RngStream(6, "rd0")
    state = fd(rng.normal((8, 8, 4)), rng.normal((8, 8, 4)), 0, schedule)
    with pytest.raises(ScheduleError):
        rd(state, rng.normal((8, 8, 4)), schedule)


def test_rd_gradient_wrt_predicted_noise(schedule):
    rng = RngStream(7, "rdgrad")
    latent = rng.normal((2, 8, 8, 4)).astype(np.float64)
    target = rng.normal((2, 8, 8, 4)).astype(np.float64)
    p = ParamStore()
    p.add("noise", rng.spawn("n").normal((2, 8, 8, 4)))
    ks = np.array([5, 30])

    def loss_fn(P):
        out = rd_batch_graph(Tensor(latent), P["noise"], ks, ks - 1, schedule)
        return T.mse(out, Tensor(target))

    errs = fd_check(loss_fn, p, h=1e-3, max_coords=12)
    assert max(errs.values()) <= 1e-4


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("codec-corpus")
    generate_corpus(root, seed=21, count=150, corruption_rate=0.2)
    return Corpus(root)


def test_codec_trains_and_freezes(small_corpus):
    codec, report = train_codec(small_corpus, seed=3, steps=250)
    assert codec.frozen
    assert report["holdout_mse"] < 0.05
    images = small_corpus.images([0, 1], "original")
    z1, z2 = codec.encode(images), codec.encode(images)
    assert np.array_equal(z1, z2)
    assert z1.shape == (2, 8, 8, 4)


def test_codec_constant_corpus_near_zero_error(tmp_path):
    # degenerate data: all renders identical
    from alignedit.corpus import scenes, write_manifest, CorpusRecord
    from alignedit.numerics import save_tensor
    (tmp_path / "tensors").mkdir()
    img = scenes.render(scenes.SceneSpec(2, ()))
    records = []
    for i in range(40):
        for suffix in ("o", "e"):
            save_tensor(tmp_path / "tensors" / f"{i:06d}_{suffix}.ict", img)
        records.append(CorpusRecord(i, f"tensors/{i:06d}_o.ict", f"tensors/{i:06d}_e.ict",
                                    (1, 2, 0, 0, 0, 0, 0, 0), (1, 2, 0, 0, 0, 0, 0, 0), False))
    write_manifest(tmp_path / "manifest.tsv", records)
    codec, report = train_codec(Corpus(tmp_path), seed=1, steps=160, holdout=20)
    assert report["holdout_mse"] < 1e-3


def test_codec_checkpoint_roundtrip(small_corpus, tmp_path):
    codec, _ = train_codec(small_corpus, seed=5, steps=40)
    from alignedit.numerics import load_checkpoint, save_checkpoint
    path = tmp_path / "codec.ckpt"
    save_checkpoint(path, codec.state_arrays())
    loaded = LatentCodec.from_arrays(load_checkpoint(path))
    assert loaded.frozen == codec.frozen
    assert loaded.latent_scale == pytest.approx(codec.latent_scale)
    images = small_corpus.images([3], "edited")
    assert np.array_equal(loaded.encode(images), codec.encode(images))

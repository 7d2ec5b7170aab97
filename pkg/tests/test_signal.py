import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saesense.dft import idft
from saesense.signal import (H0, H1, ChannelTaps, FrameBatch, ImpairmentScenario, OfdmConfig,
                             gen_bpsk_ofdm_stream, gen_channel, power_delay_profile,
                             synthesize_batch, synthesize_frame)

CFG = OfdmConfig()


def test_config_invariants():
    assert CFG.frame_len == 144
    for bad in (dict(n_d=0), dict(n_c=65), dict(m=0), dict(l_p=0), dict(l_p=73)):
        with pytest.raises(ValueError):
            OfdmConfig(**bad)


def test_scenario_invariants():
    with pytest.raises(ValueError):
        ImpairmentScenario(f_q=1.5)
    with pytest.raises(ValueError):
        ImpairmentScenario(eta_db=-1)
    with pytest.raises(ValueError):
        synthesize_frame(CFG, ImpairmentScenario(delta=72), H1, np.random.default_rng(0))


def test_stream_has_cyclic_prefix_on_every_block():
    s = gen_bpsk_ofdm_stream(CFG, 1000, np.random.default_rng(1)).reshape(1000, CFG.block_len)
    np.testing.assert_array_equal(s[:, :CFG.n_c], s[:, CFG.n_d:CFG.n_d + CFG.n_c])


def test_stream_unit_power():
    s = gen_bpsk_ofdm_stream(CFG, 100_000 // CFG.block_len + 1, np.random.default_rng(2))
    assert np.mean(np.abs(s[:100_000]) ** 2) == pytest.approx(1.0, abs=0.01)


def test_all_plus_one_symbols_give_scaled_impulse():
    body = idft(np.ones(4))
    np.testing.assert_allclose(body, [2.0, 0, 0, 0], atol=1e-15)


def test_channel_single_tap_and_determinism():
    assert power_delay_profile(1) == pytest.approx([1.0])
    cfg4 = OfdmConfig(l_p=4)
    a = gen_channel(cfg4, np.random.default_rng(7)).taps
    b = gen_channel(cfg4, np.random.default_rng(7)).taps
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        ChannelTaps([np.nan])


def test_channel_average_power_is_one():
    rng = np.random.default_rng(3)
    p = [gen_channel(CFG, rng).power for _ in range(10_000)]
    assert np.mean(p) == pytest.approx(1.0, abs=0.02)


def test_h0_frame_is_white_noise_at_noise_var():
    f = synthesize_batch(CFG, ImpairmentScenario(snr_db=-5), np.zeros(2000), np.random.default_rng(4))
    assert abs(f.samples.mean()) < 0.05 * np.sqrt(f.noise_var[0])
    assert np.var(f.samples) == pytest.approx(f.noise_var[0], rel=0.02)


def test_high_snr_frame_matches_clean_stream():
    cfg = OfdmConfig(l_p=1)
    fr = synthesize_frame(cfg, ImpairmentScenario(snr_db=60), H1, np.random.default_rng(5),
                          taps=ChannelTaps([1.0]))
    # rebuild the clean stream from the same draws: block 1..m of the (m+1)-block stream
    rng = np.random.default_rng(5)
    clean = gen_bpsk_ofdm_stream(cfg, cfg.m + 1, rng)[cfg.block_len:]
    rms = np.sqrt(np.mean(np.abs(clean) ** 2))
    assert np.max(np.abs(fr.samples - clean)) < 1e-2 * rms


def test_monte_carlo_snr_audit():
    sc = ImpairmentScenario(snr_db=-10)
    rng = np.random.default_rng(6)
    n = 10_000
    noisy = synthesize_batch(CFG, sc, np.ones(n), rng)
    # same seed, H0: identical noise draws, so the difference is the signal component
    noise_only = synthesize_batch(CFG, sc, np.zeros(n), np.random.default_rng(6))
    sig = noisy.samples - noise_only.samples
    ratio = np.mean(np.sum(np.abs(sig) ** 2, 1)) / np.mean(np.sum(np.abs(noise_only.samples) ** 2, 1))
    assert ratio == pytest.approx(0.1, rel=0.05)


def test_per_realisation_snr_is_exact_without_tap_normalisation():
    rng = np.random.default_rng(8)
    f = synthesize_batch(CFG, ImpairmentScenario(snr_db=-7), np.ones(50), rng, normalize_taps=False)
    h = synthesize_batch(CFG, ImpairmentScenario(snr_db=-7), np.ones(50), np.random.default_rng(8),
                         normalize_taps=False)
    assert np.all(f.noise_var == h.noise_var)
    # noise_var = sum|h|^2 / snr varies with the drawn taps
    assert np.std(f.noise_var) > 0
    rng = np.random.default_rng(8)
    rng.integers(0, 2, size=(50, CFG.m + 1, CFG.n_d))
    g = rng.standard_normal((50, CFG.l_p, 2))
    taps = np.sqrt(power_delay_profile(CFG.l_p) / 2) * (g[..., 0] + 1j * g[..., 1])
    np.testing.assert_allclose(np.sum(np.abs(taps) ** 2, 1) / f.noise_var, 10 ** (-0.7), rtol=1e-12)


def test_zero_cfo_is_identity_and_cfo_is_pure_rotation():
    base = ImpairmentScenario(snr_db=300, delta=5)
    a = synthesize_batch(CFG, base, np.ones(3), np.random.default_rng(9))
    b = synthesize_batch(CFG, ImpairmentScenario(snr_db=300, delta=5, f_q=0.0), np.ones(3),
                         np.random.default_rng(9))
    np.testing.assert_array_equal(a.samples, b.samples)
    c = synthesize_batch(CFG, ImpairmentScenario(snr_db=300, delta=5, f_q=0.7), np.ones(3),
                         np.random.default_rng(9))
    np.testing.assert_allclose(np.abs(c.samples), np.abs(a.samples), rtol=1e-9)


def test_delay_shifts_stream_with_history():
    cfg = OfdmConfig(l_p=1)
    d0 = synthesize_frame(cfg, ImpairmentScenario(snr_db=300), H1, np.random.default_rng(10))
    d5 = synthesize_frame(cfg, ImpairmentScenario(snr_db=300, delta=5), H1, np.random.default_rng(10))
    np.testing.assert_allclose(d5.samples[5:], d0.samples[:-5], atol=1e-12)
    assert np.all(np.abs(d5.samples[:5]) > 0)


@settings(max_examples=20, deadline=None)
@given(fq=st.floats(0, 1), delta=st.integers(0, 71), seed=st.integers(0, 2 ** 32 - 1))
def test_h0_frames_ignore_cfo_and_delay(fq, delta, seed):
    ref = synthesize_batch(CFG, ImpairmentScenario(snr_db=-3), np.zeros(2), np.random.default_rng(seed))
    got = synthesize_batch(CFG, ImpairmentScenario(snr_db=-3, f_q=fq, delta=delta), np.zeros(2),
                           np.random.default_rng(seed))
    np.testing.assert_array_equal(ref.samples, got.samples)


@settings(max_examples=20, deadline=None)
@given(eta=st.floats(0, 3), seed=st.integers(0, 2 ** 32 - 1))
def test_noise_estimate_error_is_bounded(eta, seed):
    f = synthesize_batch(CFG, ImpairmentScenario(eta_db=eta), np.arange(20) % 2, np.random.default_rng(seed))
    r = f.est_noise_var / f.noise_var
    assert np.all(r >= 10 ** (-eta / 10) * (1 - 1e-12))
    assert np.all(r <= 10 ** (eta / 10) * (1 + 1e-12))


def test_uniform_delay_mode_draws_per_frame():
    f = synthesize_batch(CFG, ImpairmentScenario(delta_mode="uniform"), np.ones(500), np.random.default_rng(11))
    assert f.delta.min() >= 0 and f.delta.max() <= 71
    assert np.unique(f.delta).size > 50


def test_frame_file_round_trip(tmp_path):
    sc = ImpairmentScenario(snr_db=-12, delta=3, f_q=0.5, eta_db=1.0)
    f = synthesize_batch(CFG, sc, np.arange(10) % 2, np.random.default_rng(12))
    f.save(tmp_path / "frames.bin")
    g = FrameBatch.load(tmp_path / "frames.bin")
    assert g.cfg == CFG and g.scenario == sc
    np.testing.assert_array_equal(g.samples, f.samples)
    np.testing.assert_array_equal(g.labels, f.labels)
    np.testing.assert_array_equal(g.est_noise_var, f.est_noise_var)
    f.to_csv(tmp_path / "frames.csv")
    lines = (tmp_path / "frames.csv").read_text().splitlines()
    assert len(lines) == 11 and len(lines[0].split(",")) == 3 + 2 * CFG.frame_len
    with pytest.raises(ValueError):
        FrameBatch.from_bytes(b"garbage")

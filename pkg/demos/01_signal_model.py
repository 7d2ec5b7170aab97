"""
The received OFDM signal model
==============================

Frames are BPSK-OFDM blocks with a cyclic prefix, passed through a
Rayleigh multipath channel and observed in complex Gaussian noise.
"""

import numpy as np

from saesense.signal import (H0, H1, ImpairmentScenario, OfdmConfig, gen_bpsk_ofdm_stream,
                             power_delay_profile, synthesize_batch)

cfg = OfdmConfig()
print(f"{cfg.m} blocks of {cfg.n_d} samples plus a {cfg.n_c}-sample prefix: {cfg.frame_len} samples per frame")

# Every block starts with a copy of its own tail.
rng = np.random.default_rng(0)
blocks = gen_bpsk_ofdm_stream(cfg, 1000, rng).reshape(1000, cfg.block_len)
print("prefix equals tail in all 1000 blocks:", np.array_equal(blocks[:, :cfg.n_c], blocks[:, -cfg.n_c:]))

# The channel's average tap powers decay exponentially.
print("power delay profile:", np.round(power_delay_profile(cfg.l_p), 3))

# The signal has unit power and the noise variance is 1/snr.
for snr in (-10.0, 0.0):
    sc = ImpairmentScenario(snr_db=snr)
    h0 = synthesize_batch(cfg, sc, np.full(5000, H0), rng)
    h1 = synthesize_batch(cfg, sc, np.full(5000, H1), rng)
    p0 = np.mean(np.abs(h0.samples) ** 2)
    p1 = np.mean(np.abs(h1.samples) ** 2)
    print(f"SNR {snr:+.0f} dB: noise power {p0:.3f}, measured SNR {10 * np.log10(p1 / p0 - 1):+.2f} dB")

# Impairments: random frame offset, carrier frequency offset and a
# noise-power estimate that is wrong by up to eta dB.
sc = ImpairmentScenario(snr_db=-10, delta_mode="uniform", f_q=0.5, eta_db=1.0)
f = synthesize_batch(cfg, sc, np.ones(5), rng)
print("true noise variance     :", np.round(f.noise_var, 4))
print("estimated noise variance:", np.round(f.est_noise_var, 4))

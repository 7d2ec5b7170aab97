import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saesense.baselines import (DetectorThreshold, calibrate_baseline, calibrate_threshold, cm_statistic,
                                cp_statistic, decide, detect, ed_statistic, statistic_fn)
from saesense.signal import H0, H1, ImpairmentScenario, OfdmConfig, synthesize_batch

CFG = OfdmConfig()


def unit_modulus_cp_frame(cfg, delta, rng):
    """Unit-modulus blocks with a cyclic prefix, windowed so a CP starts at ``delta``."""
    T = cfg.block_len
    body = np.exp(2j * np.pi * rng.random((cfg.m + 1, cfg.n_d)))
    stream = np.concatenate([body[:, -cfg.n_c:], body], axis=1).ravel()
    return stream[T - delta:T - delta + cfg.frame_len]


def test_ed_examples():
    assert ed_statistic(np.zeros(144, complex)) == 0
    assert ed_statistic(np.exp(1j * np.arange(144))) == pytest.approx(1.0)
    f = synthesize_batch(CFG, ImpairmentScenario(snr_db=0), np.zeros(10_000), np.random.default_rng(0))
    stats = ed_statistic(f.samples * np.sqrt(2))
    assert np.mean(stats) == pytest.approx(2.0, rel=0.02)
    with pytest.raises(ValueError):
        ed_statistic(np.zeros(0, complex))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), c=st.floats(0.01, 100))
def test_ed_cm_scale_linearly_and_ed_ignores_phase(seed, c):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(144) + 1j * rng.standard_normal(144)
    rot = np.exp(2j * np.pi * rng.random(144))
    assert ed_statistic(y * rot) == pytest.approx(ed_statistic(y), rel=1e-12)
    assert ed_statistic(np.sqrt(c) * y) == pytest.approx(c * ed_statistic(y), rel=1e-12)
    assert cm_statistic(np.sqrt(c) * y, CFG) == pytest.approx(c * cm_statistic(y, CFG), rel=1e-12)


def test_cp_examples():
    assert cp_statistic(np.zeros(144, complex), CFG, 1.0) == 0
    for delta in (0, 5, 30, 71):
        y = unit_modulus_cp_frame(CFG, delta, np.random.default_rng(delta))
        assert cp_statistic(y, CFG, 1.0) == pytest.approx(CFG.n_c * CFG.m / 2)
    with pytest.raises(ValueError):
        cp_statistic(np.zeros(128, complex), OfdmConfig(n_c=0), 1.0)
    with pytest.raises(ValueError):
        statistic_fn("cp", OfdmConfig(n_c=0), 0.0)


@settings(max_examples=25, deadline=None)
@given(delta=st.integers(0, 71), seed=st.integers(0, 2 ** 32 - 1))
def test_cp_peak_at_true_delay(delta, seed):
    y = unit_modulus_cp_frame(CFG, delta, np.random.default_rng(seed))
    rho = 0.5
    a, b = y[:-CFG.n_d], y[CFG.n_d:]
    contrib = 2 * rho * np.real(a * b.conj()) - rho ** 2 * (np.abs(a) ** 2 + np.abs(b) ** 2)
    n = np.arange(len(contrib))
    per_d = []
    for d in range(CFG.block_len):
        sel = ((n - d) % CFG.block_len) < CFG.n_c
        per_d.append(contrib[sel].sum() * CFG.m * CFG.n_c / sel.sum())
    assert int(np.argmax(per_d)) == delta
    assert cp_statistic(y, CFG, 1.0) == pytest.approx(max(per_d))


def test_cp_per_frame_snr_matches_scalar():
    f = synthesize_batch(CFG, ImpairmentScenario(snr_db=-3), np.arange(6) % 2, np.random.default_rng(1))
    np.testing.assert_allclose(cp_statistic(f, CFG, np.full(6, 0.5)), cp_statistic(f, CFG, 0.5))


def test_cm_examples():
    cfg = OfdmConfig(n_d=2, n_c=0, m=2, l_p=1)
    # both post-CP time blocks transform to (1, 1)
    blk = np.array([np.sqrt(2), 0])
    assert cm_statistic(np.concatenate([blk, blk]), cfg) == pytest.approx(np.sqrt(2))
    # time blocks constant => frequency vector is a canonical basis multiple
    y = np.concatenate([np.zeros(CFG.n_c), np.ones(CFG.n_d)] * CFG.m).astype(complex)
    assert cm_statistic(y, CFG) == pytest.approx(0.0, abs=1e-12)


def test_monte_carlo_separation():
    rng = np.random.default_rng(2)
    h0 = synthesize_batch(CFG, ImpairmentScenario(snr_db=-5), np.zeros(1000), rng)
    h1 = synthesize_batch(CFG, ImpairmentScenario(snr_db=-5), np.ones(1000), rng)
    snr = 10 ** -0.5
    assert cp_statistic(h1, CFG, snr).mean() > cp_statistic(h0, CFG, snr).mean()
    h0 = synthesize_batch(CFG, ImpairmentScenario(snr_db=0), np.zeros(1000), rng)
    h1 = synthesize_batch(CFG, ImpairmentScenario(snr_db=0), np.ones(1000), rng)
    assert cm_statistic(h1, CFG).mean() > cm_statistic(h0, CFG).mean()


@pytest.mark.parametrize("name", ["ed", "cp", "cm"])
def test_calibrated_pfa_holds_on_fresh_h0(name):
    sc = ImpairmentScenario(snr_db=-10)
    thr = calibrate_baseline(name, CFG, sc, 0.05, 10_000, np.random.default_rng(3), assumed_snr_db=-10)
    # fresh frames at a different noise power, thresholds scaled by the true noise variance
    fresh = synthesize_batch(CFG, sc.with_snr(-4), np.zeros(10_000), np.random.default_rng(4))
    stats = statistic_fn(name, CFG, -10)(fresh)
    pfa = decide(stats, thr, fresh.noise_var).mean()
    assert pfa == pytest.approx(0.05, abs=0.01)


def test_calibration_monotone_and_median():
    rng_seed = 5
    fn = statistic_fn("ed", CFG)
    thr = [calibrate_threshold(fn, CFG, ImpairmentScenario(), p, 2000, np.random.default_rng(rng_seed)).unit_threshold
           for p in (0.01, 0.05, 0.2, 0.5)]
    assert all(a > b for a, b in zip(thr, thr[1:]))
    sym = calibrate_threshold(lambda f: f.samples[:, 0].real, CFG, ImpairmentScenario(), 0.5, 20_000,
                              np.random.default_rng(6))
    assert sym.unit_threshold == pytest.approx(0.0, abs=0.03)
    with pytest.raises(ValueError):
        calibrate_threshold(fn, CFG, ImpairmentScenario(), 0.05, 999, np.random.default_rng(0))


def test_threshold_invariants_and_file(tmp_path):
    with pytest.raises(ValueError):
        DetectorThreshold(1.0, target_pfa=0.0)
    with pytest.raises(ValueError):
        DetectorThreshold(1.0, trials=10)
    t = DetectorThreshold(1.2345678901234567, "linear", 0.05, 10_000, "cp", -12.0)
    t.save(tmp_path / "thr.txt")
    assert DetectorThreshold.load(tmp_path / "thr.txt") == t
    assert "detector=cp" in (tmp_path / "thr.txt").read_text()
    assert DetectorThreshold.loads(DetectorThreshold(2.0, "none").dumps()).scaling == "none"


def test_detect_rules():
    thr = DetectorThreshold(1.0)
    assert detect(0.0, thr, 0.3).decision == H0
    r = detect(2.0, thr, 1.5)
    assert r.decision == H1 and r.threshold == 1.5
    assert detect(1.5, thr, 1.5).decision == H0
    assert detect(5.0, DetectorThreshold(6.0, "none"), 0.001).decision == H0


def test_ed_scale_equivariance_of_decision():
    rng = np.random.default_rng(7)
    f = synthesize_batch(CFG, ImpairmentScenario(snr_db=-8), np.arange(200) % 2, rng)
    thr = DetectorThreshold(1.1)
    a = decide(ed_statistic(f), thr, f.noise_var)
    b = decide(ed_statistic(f.samples * np.sqrt(2)), thr, 2 * f.noise_var)
    np.testing.assert_array_equal(a, b)


def test_noise_overestimate_raises_ed_miss_rate():
    thr = calibrate_baseline("ed", CFG, ImpairmentScenario(), 0.05, 10_000, np.random.default_rng(8))
    h1 = synthesize_batch(CFG, ImpairmentScenario(snr_db=-10), np.ones(10_000), np.random.default_rng(9))
    s = ed_statistic(h1)
    pm_exact = 1 - decide(s, thr, h1.noise_var).mean()
    pm_inflated = 1 - decide(s, thr, h1.noise_var * 10 ** 0.1).mean()
    assert pm_inflated > pm_exact


@pytest.mark.parametrize("name", ["ed", "cm"])
def test_calibration_holds_pfa_under_noise_uncertainty(name):
    sc = ImpairmentScenario(eta_db=1.0)
    thr = calibrate_baseline(name, CFG, sc, 0.05, 10_000, np.random.default_rng(10))
    fresh = synthesize_batch(CFG, sc.with_snr(-6), np.zeros(10_000), np.random.default_rng(11))
    pfa = decide(statistic_fn(name, CFG)(fresh), thr, fresh.est_noise_var).mean()
    assert pfa == pytest.approx(0.05, abs=0.01)
    # a perfectly known noise power needs a lower threshold
    exact = calibrate_baseline(name, CFG, ImpairmentScenario(), 0.05, 10_000, np.random.default_rng(10))
    assert exact.unit_threshold < thr.unit_threshold

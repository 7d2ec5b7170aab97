import numpy as np
import pytest

from saesense import baselines
from saesense.experiment import (COMPLEXITY_METHODS, DEFAULT_SNRS, BaselineDetector, ComplexityParams,
                                 Metrics, ModelBank, SweepSpec, TrainingSetup, complexity_real_mults,
                                 evaluate, gen_dataset, make_test_set, pooled_dataset, read_results,
                                 results_csv, stream, sweep, train_ts1, train_ts2, write_results)
from saesense.neuralnet import TrainConfig
from saesense.signal import H0, H1, ImpairmentScenario, OfdmConfig

CFG = OfdmConfig()
QUICK = TrainingSetup(TrainConfig(n_pr=200, n_f=300), hidden=(20, 10), n_train=2000, n_val=2000)


def test_dataset_balance_and_determinism(tmp_path):
    d = gen_dataset(CFG, ImpairmentScenario(snr_db=-6), 1000, stream(1, "x"))
    assert np.sum(d.labels == H0) == 500 and np.sum(d.labels == H1) == 500
    d.save(tmp_path / "a.bin")
    gen_dataset(CFG, ImpairmentScenario(snr_db=-6), 1000, stream(1, "x")).save(tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    with pytest.raises(ValueError):
        gen_dataset(CFG, ImpairmentScenario(), 7, stream(1))


def test_streams_are_keyed():
    a = stream(3, "train", -10.0).random(4)
    np.testing.assert_array_equal(a, stream(3, "train", -10.0).random(4))
    assert not np.array_equal(a, stream(3, "train", -12.0).random(4))
    assert not np.array_equal(a, stream(4, "train", -10.0).random(4))


def test_ed_passes_h1_far_more_often_at_0db():
    d = gen_dataset(CFG, ImpairmentScenario(snr_db=0), 2000, stream(2))
    stats = baselines.ed_statistic(d)
    passing = stats > 1.5 * d.est_noise_var
    assert passing[d.labels == H1].mean() > 5 * passing[d.labels == H0].mean()


def test_pooled_dataset_equal_shares():
    d = pooled_dataset(CFG, ImpairmentScenario(), (-10.0, -8.0), 1000, 0, "p")
    assert len(d) == 1000
    for snr in (-10.0, -8.0):
        sel = d.snr_db == snr
        assert sel.sum() == 500 and d.labels[sel].sum() == 250


def test_oracle_and_constant_detectors():
    test = make_test_set(CFG, ImpairmentScenario(), -10.0, 1000, 0)
    m = evaluate(lambda b: b.labels, test, "oracle")
    assert (m.pfa, m.pm) == (0.0, 0.0)
    m = evaluate(lambda b: np.zeros(len(b)), test, "never")
    assert (m.pfa, m.pm) == (0.0, 1.0)
    # PFA only sees H0 rows, PM only sees H1 rows
    m = evaluate(lambda b: 1 - b.labels, test, "inverted")
    assert (m.pfa, m.pm) == (1.0, 1.0)
    with pytest.raises(ValueError):
        Metrics("x", 0.0, "perfect", 1.2, 0.0, 10, 0.0)


def test_ed_high_snr_sanity():
    det = BaselineDetector("ed", CFG)
    det.calibrate(ImpairmentScenario(), 0.0, 0.05, 10_000, 0)
    m = evaluate(det, make_test_set(CFG, ImpairmentScenario(), 0.0, 20_000, 0), "ed")
    assert m.pm < 0.05
    assert m.pfa == pytest.approx(0.05, abs=0.01)


@pytest.mark.parametrize("name", [
    "ed", "cm",
    pytest.param("cp", marks=pytest.mark.xfail(strict=True, reason=(
        "with rho = snr/(snr+1) the CP surrogate has zero mean under H1 at every SNR, "
        "so amplitude jitter keeps PM well above 0.01 even at +10 dB"))),
])
def test_baselines_detect_at_plus_10db(name):
    det = BaselineDetector(name, CFG)
    det.calibrate(ImpairmentScenario(), 10.0, 0.05, 10_000, 0)
    m = evaluate(det, make_test_set(CFG, ImpairmentScenario(), 10.0, 20_000, 1), name)
    assert m.pm < 0.01


def test_sae_detects_at_plus_10db():
    setup = TrainingSetup(TrainConfig(n_pr=300, n_f=1000), n_train=4000, n_val=4000)
    bank = train_ts1(CFG, ImpairmentScenario(), (10.0,), "ss", setup, seed=0)
    m = evaluate(bank, make_test_set(CFG, ImpairmentScenario(), 10.0, 10_000, 1), "sae-ss")
    assert m.pm < 0.01 and m.pfa == pytest.approx(0.05, abs=0.015)


def test_bank_shapes_and_interfaces():
    snrs = (-12.0, -10.0, -8.0)
    ts1 = train_ts1(CFG, ImpairmentScenario(), snrs, "ss", QUICK, seed=0)
    assert len(ts1) == 3 and ts1.models[-10.0].snr_bin == -10.0
    # with exact noise knowledge every frame lands in its own bin
    t = make_test_set(CFG, ImpairmentScenario(), -10.0, 1000, 0)
    np.testing.assert_array_equal(ts1.select(t.est_noise_var), -10.0)
    with pytest.raises(ValueError):
        ts1.decide_features(np.zeros((2, 288)))
    ts2 = train_ts2(CFG, ImpairmentScenario(), snrs, "ss", QUICK, seed=0)
    assert len(ts2) == 1
    assert ts2.decide_features(np.zeros((2, 288))).shape == (2,)
    with pytest.raises(ValueError):
        ModelBank(dict(ts1.models), "ts2", "ss")


def test_ts2_is_immune_to_noise_uncertainty():
    snrs = (-10.0, -8.0)
    ts2 = train_ts2(CFG, ImpairmentScenario(), snrs, "ss", QUICK, seed=0)
    exact = evaluate(ts2, make_test_set(CFG, ImpairmentScenario(), -8.0, 4000, 5))
    noisy = evaluate(ts2, make_test_set(CFG, ImpairmentScenario(eta_db=1.0), -8.0, 4000, 5))
    assert abs(exact.pm - noisy.pm) <= 0.02


def test_sweep_rows_determinism_and_csv(tmp_path):
    spec = SweepSpec(snrs=(-4.0, 0.0, 4.0), methods=("ed", "cm", "cp"), n_test=4000, n_calib=2000)
    rows = sweep(spec, seed=7)
    assert len(rows) == 9
    assert [r.method for r in rows] == ["ed"] * 3 + ["cm"] * 3 + ["cp"] * 3
    for method in ("ed", "cm", "cp"):
        pms = [r.pm for r in rows if r.method == method]
        assert all(b <= a + 0.02 for a, b in zip(pms, pms[1:]))
    text = results_csv(rows)
    assert text == results_csv(sweep(spec, seed=7))
    assert text.splitlines()[0] == ("method,variant,strategy,scenario,eta_db,fq,delta_mode,snr_db,"
                                    "trials,pfa,pm,threshold,seed")
    write_results(rows, tmp_path / "r.csv")
    assert read_results(tmp_path / "r.csv") == rows


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(methods=("ed", "wavelet"))
    with pytest.raises(ValueError):
        SweepSpec(n_test=100)
    with pytest.raises(ValueError):
        SweepSpec(snrs=())
    assert SweepSpec().snrs == DEFAULT_SNRS


def test_complexity_table_values():
    assert complexity_real_mults("sae-ss") == 33850
    assert complexity_real_mults("sae-tf") == pytest.approx(66202, abs=2)
    assert complexity_real_mults("cm") == 43392
    assert complexity_real_mults("cnn") == 18170
    # the CP prose total is reproduced with six delay candidates
    assert complexity_real_mults("cp", ComplexityParams(n_s=6)) == 53568
    with pytest.raises(ValueError):
        complexity_real_mults("cp", ComplexityParams(n_c=0))
    with pytest.raises(ValueError):
        complexity_real_mults("music")


@pytest.mark.parametrize("n_c,n_d,m,hidden", [(8, 64, 2, (100, 50)), (0, 32, 1, (10,)), (16, 128, 4, (7, 5, 3))])
def test_ss_cheaper_than_tf(n_c, n_d, m, hidden):
    p = ComplexityParams(n_c=n_c, n_d=n_d, m=m, hidden=hidden)
    assert complexity_real_mults("sae-ss", p) < complexity_real_mults("sae-tf", p)
    assert set(COMPLEXITY_METHODS) >= {"sae-ss", "sae-tf", "cp", "cm"}

"""
One network per SNR or one network for all
===========================================

TS-1 trains a network per SNR bin and routes each frame by its estimated
noise power. TS-2 trains a single network on frames pooled over the SNR
grid and never looks at the noise estimate, so noise uncertainty cannot
touch it.
"""

from saesense.experiment import TrainingSetup, evaluate, make_test_set, train_ts1, train_ts2
from saesense.neuralnet import TrainConfig
from saesense.signal import ImpairmentScenario, OfdmConfig

cfg = OfdmConfig()
snrs = (-6.0, -4.0)
setup = TrainingSetup(TrainConfig(n_pr=500, n_f=800), hidden=(40, 20), n_train=4000, n_val=4000)
ts1 = train_ts1(cfg, ImpairmentScenario(), snrs, "ss", setup, seed=5)
ts2 = train_ts2(cfg, ImpairmentScenario(), snrs, "ss", setup, seed=5)

for eta in (0.0, 1.0):
    sc = ImpairmentScenario(eta_db=eta)
    for snr in snrs:
        test = make_test_set(cfg, sc, snr, 4000, seed=5)
        print(f"eta {eta:.1f} dB, SNR {snr:+.0f} dB: TS-1 PM {evaluate(ts1, test).pm:.3f}, "
              f"TS-2 PM {evaluate(ts2, test).pm:.3f}")

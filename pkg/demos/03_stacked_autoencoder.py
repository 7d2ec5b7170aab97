"""
Learning a detector with a stacked autoencoder
==============================================

Frames are turned into real feature vectors (time samples only, or time
and frequency samples), each autoencoder layer is pretrained greedily,
and a softmax head is fine-tuned on labelled frames. The decision
threshold on the posterior is set for a 5% false-alarm rate.
"""

from saesense.experiment import BaselineDetector, TrainingSetup, evaluate, make_test_set, train_ts1
from saesense.features import feature_length
from saesense.neuralnet import TrainConfig
from saesense.signal import ImpairmentScenario, OfdmConfig

cfg = OfdmConfig()
sc = ImpairmentScenario()
snr = -4.0
print("input widths:", {v: feature_length(v, cfg) for v in ("ss", "tf", "ss-af")})

# A reduced schedule keeps the demo under a minute.
setup = TrainingSetup(TrainConfig(n_pr=1000, n_f=1000), n_train=4000, n_val=4000)
test = make_test_set(cfg, sc, snr, 4000, seed=3)

ed = BaselineDetector("ed", cfg)
ed.calibrate(sc, snr, 0.05, 4000, seed=3)
m = evaluate(ed, test)
print(f"ed     PFA {m.pfa:.3f}  PM {m.pm:.3f}")

for variant in ("ss", "tf"):
    bank = train_ts1(cfg, sc, (snr,), variant, setup, seed=3)
    m = evaluate(bank, test)
    print(f"sae-{variant} PFA {m.pfa:.3f}  PM {m.pm:.3f}")

"""
Online cost of each detector
============================

Real multiplications per sensing decision, counted from the structure of
each method: correlations and delay search for CP, covariance estimation
and a DFT for CM, matrix-vector products for the networks.
"""

from dataclasses import replace

from saesense.experiment import COMPLEXITY_METHODS, ComplexityParams, complexity_real_mults

p = ComplexityParams()
for method in COMPLEXITY_METHODS:
    print(f"{method:7s} {complexity_real_mults(method, p):>7d}")

# Doubling the hidden layers roughly doubles the network cost.
wide = replace(p, hidden=(200, 100))
print("sae-ss with (200, 100) hidden units:", complexity_real_mults("sae-ss", wide))

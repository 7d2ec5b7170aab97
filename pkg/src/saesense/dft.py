"""Unitary discrete Fourier transforms.

Both directions carry a 1/sqrt(N) factor so that Parseval holds with
equality. Power-of-two lengths go through an iterative radix-2
decimation-in-time FFT; any other length is evaluated directly from the
DFT matrix, which is cheap at the frame sizes used here (N of a few
hundred at most).

All functions transform along the last axis and accept stacked input.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = ["dft", "idft", "direct_dft", "fft_radix2", "is_power_of_two"]


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=32)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=32)
def _dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    # reduce k*n mod N before the exponential to keep the phases exact
    return np.exp(-2j * np.pi * (np.outer(k, k) % n) / n)


def fft_radix2(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unnormalised radix-2 FFT along the last axis (length must be 2**k)."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"radix-2 FFT needs a power-of-two length, got {n}")
    sign = 1.0 if inverse else -1.0
    lead = x.shape[:-1]
    y = x[..., _bit_reversal(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        y = y.reshape(*lead, n // size, size)
        even = y[..., :half]
        odd = y[..., half:] * twiddle
        y = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return y.reshape(*lead, n)


def direct_dft(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unnormalised O(N^2) DFT along the last axis, any length."""
    x = np.asarray(x, dtype=complex)
    mat = _dft_matrix(x.shape[-1])
    if inverse:
        mat = mat.conj()
    return x @ mat.T


def dft(x: np.ndarray) -> np.ndarray:
    """Unitary forward DFT along the last axis."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if n < 1:
        raise ValueError("DFT of an empty vector")
    out = fft_radix2(x) if is_power_of_two(n) else direct_dft(x)
    return out / np.sqrt(n)


def idft(x: np.ndarray) -> np.ndarray:
    """Unitary inverse DFT along the last axis."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if n < 1:
        raise ValueError("DFT of an empty vector")
    out = fft_radix2(x, inverse=True) if is_power_of_two(n) else direct_dft(x, inverse=True)
    return out / np.sqrt(n)

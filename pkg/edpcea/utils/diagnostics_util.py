"""
Chain diagnostics for scalar MCMC output.
"""
import math

import numpy as np


def autocorrelations(values):
    """Empirical autocorrelations at lags 0..N-1 via a zero-padded FFT."""
    values = np.asarray(values, dtype=float)
    N = len(values)
    z = values - values.mean()
    size = 2 ** math.ceil(math.log2(2 * N))
    spectrum = np.abs(np.fft.rfft(z, size)) ** 2
    acov = np.fft.irfft(spectrum, size)[:N]
    return acov / acov[0]


def integrated_autocorrelation_time(values):
    """
    Geyer's initial monotone sequence estimate of tau.
    Returns inf for a constant chain.
    """
    values = np.asarray(values, dtype=float)
    N = len(values)
    if N < 4 or np.var(values) < 1e-300:
        return math.inf
    rhos = autocorrelations(values)
    pairs = (N - 1) // 2
    pair_sums = rhos[0:2 * pairs:2] + rhos[1:2 * pairs + 1:2]
    total = 0.0
    previous = pair_sums[0]
    for p in range(pairs):
        current = pair_sums[p]
        if current < 0:
            break
        current = min(current, previous)
        total += current
        previous = current
    # tau = -1 + 2 * sum of pair sums
    return max(-1.0 + 2.0 * total, 1.0 / N)


def effective_sample_size(values):
    """N / tau; NaN when the chain is constant."""
    values = np.asarray(values, dtype=float)
    tau = integrated_autocorrelation_time(values)
    if not math.isfinite(tau):
        return float("nan")
    return float(len(values) / tau)

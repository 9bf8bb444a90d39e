"""MCMC convergence diagnostics."""

import numpy as np

__all__ = ["effective_sample_size", "split_rhat"]


def _autocov(x):
    n = x.size
    x = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    return np.fft.irfft(f * np.conj(f), m)[:n] / n


def effective_sample_size(x) -> float:
    """ESS of a 1-d chain via Geyer's initial monotone positive sequence."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    acov = _autocov(x)
    if acov[0] <= 0:
        return float(n)
    rho = acov / acov[0]
    pairs = rho[: n - n % 2].reshape(-1, 2).sum(axis=1)
    k = np.argmax(pairs <= 0) if np.any(pairs <= 0) else pairs.size
    pairs = np.minimum.accumulate(pairs[:k]) if k else pairs[:0]
    tau = -1.0 + 2.0 * pairs.sum()
    return float(n / max(tau, 1.0 / np.log10(max(n, 10))))


def split_rhat(chains) -> float:
    """Split potential scale reduction for ``chains`` of shape ``(m, n)`` or ``(n,)``."""
    c = np.atleast_2d(np.asarray(chains, dtype=float))
    n = c.shape[1] // 2
    if n < 2:
        return float("nan")
    halves = np.concatenate([c[:, :n], c[:, -n:]])
    w = halves.var(axis=1, ddof=1).mean()
    b = n * halves.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else float("inf")
    var_plus = (n - 1) / n * w + b / n
    return float(np.sqrt(var_plus / w))

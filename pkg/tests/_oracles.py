"""Slow, obviously-correct references used by the unit and acceptance tests."""

import numpy as np


def ssim_naive(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Per-window SSIM with an explicit 2-D Gaussian, averaged over windows and channels."""
    a = np.atleast_3d(np.asarray(a, dtype=np.float64))
    b = np.atleast_3d(np.asarray(b, dtype=np.float64))
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = k1 ** 2, k2 ** 2
    h, wd, ch = a.shape
    vals = []
    for c in range(ch):
        for i in range(h - size + 1):
            for j in range(wd - size + 1):
                pa = a[i:i + size, j:j + size, c]
                pb = b[i:i + size, j:j + size, c]
                ma, mb = (w * pa).sum(), (w * pb).sum()
                va = (w * (pa - ma) ** 2).sum()
                vb = (w * (pb - mb) ** 2).sum()
                cov = (w * (pa - ma) * (pb - mb)).sum()
                vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def psnr_direct(a, b):
    total = 0.0
    n = 0
    for x, y in zip(np.ravel(a), np.ravel(b)):
        total += (float(x) - float(y)) ** 2
        n += 1
    return 10 * np.log10(1.0 / (total / n))


def dft2_naive(x):
    """O(N^4) 2-D DFT over the first two axes."""
    h, w = x.shape[:2]
    out = np.zeros(x.shape, dtype=complex)
    for u in range(h):
        for v in range(w):
            acc = 0
            for i in range(h):
                for j in range(w):
                    acc = acc + x[i, j] * np.exp(-2j * np.pi * (u * i / h + v * j / w))
            out[u, v] = acc
    return out

"""Orthonormal blockwise DCT-II used by the adapter and the JPEG simulator."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

BLOCK = 8


@lru_cache(maxsize=None)
def _basis(B: int) -> np.ndarray:
    k = np.arange(B)[:, None]
    i = np.arange(B)[None, :]
    alpha = np.full((B, 1), np.sqrt(2.0 / B))
    alpha[0] = np.sqrt(1.0 / B)
    D = alpha * np.cos(np.pi / (2 * B) * (2 * i + 1) * k)
    D.setflags(write=False)
    return D


def dct_basis(B: int = BLOCK) -> np.ndarray:
    """``B x B`` DCT-II matrix ``D`` with rows as basis vectors; ``D @ D.T == I``."""
    if B < 1:
        raise ValueError(f"block size must be >= 1, got {B}")
    return _basis(int(B)).copy()


def pad_to_multiple(x: np.ndarray, m: int) -> np.ndarray:
    """Edge-replicate the first two axes up to multiples of ``m``."""
    h, w = x.shape[:2]
    ph, pw = -h % m, -w % m
    if not (ph or pw):
        return x
    pad = [(0, ph), (0, pw)] + [(0, 0)] * (x.ndim - 2)
    return np.pad(x, pad, mode="edge")


def _as_blocks(x: np.ndarray, B: int) -> np.ndarray:
    h, w = x.shape[:2]
    return x.reshape((h // B, B, w // B, B) + x.shape[2:])


def block_dct(x: np.ndarray, B: int = BLOCK) -> np.ndarray:
    """Per-block ``Y = D X D^T``. Input spatial dims must be multiples of ``B``.

    The result has the block layout ``(H/B, B, W/B, B, ...)``.
    """
    D = _basis(B)
    return np.einsum("ki,aibj...,lj->akbl...", D, _as_blocks(x, B), D, optimize=True)


def block_idct(y: np.ndarray) -> np.ndarray:
    """Inverse of :func:`block_dct`; returns the image layout ``(H, W, ...)``."""
    B = y.shape[1]
    D = _basis(B)
    x = np.einsum("ki,akbl...,lj->aibj...", D, y, D, optimize=True)
    hb, _, wb, _ = x.shape[:4]
    return x.reshape((hb * B, wb * B) + x.shape[4:])

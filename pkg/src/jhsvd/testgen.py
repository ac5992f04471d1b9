"""Test factors with prescribed spectra and the reconstruction error metric.

Spectra come in four families (a pinned-plus-normal pair and a uniform pair,
each in a definite and an indefinite flavor).  A factor G is built directly
as Q * diag(sqrt|lambda|) with Q a product of random Householder
reflectors, so G J G^T has exactly the prescribed eigenvalues (up to the
rounding of Q's application) and the singular values of G are known without
running any factorization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blockkernel import Signature


@dataclass(frozen=True)
class SpectrumSpec:
    type: int
    n: int
    seed: int

    def __post_init__(self):
        if self.type not in (1, 2, 3, 4):
            raise ValueError("spectrum type must be 1, 2, 3 or 4")
        if self.type in (1, 2) and self.n < 16:
            raise ValueError("types 1 and 2 pin the first 16 entries; need n >= 16")
        if self.n < 1:
            raise ValueError("spectrum length must be positive")


def _scale_parameter(n: int) -> float:
    # ties the uniform families' upper end to the order
    return max(n / 1024.0, 1.0)


def _nonzero_normal(rng, size, scale):
    out = rng.normal(0.0, scale, size)
    while True:
        zeros = out == 0.0
        if not zeros.any():
            return out
        out[zeros] = rng.normal(0.0, scale, int(zeros.sum()))


def gen_spectrum(spec: SpectrumSpec) -> np.ndarray:
    """Pseudorandom eigenvalue vector; deterministic for a fixed seed."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = spec.n
    k = _scale_parameter(n)
    if spec.type in (1, 2):
        lam = np.empty(n)
        lam[:16] = 0.5
        lam[16:] = _nonzero_normal(rng, n - 16, 0.1)
        if spec.type == 2:
            lam = 1.0 + lam
            if not (lam > 0.0).all():
                raise AssertionError("type-2 spectrum must be strictly positive")
        return lam
    magnitudes = rng.uniform(1e-7, 10.0 * k, n)
    if spec.type == 4:
        return magnitudes
    signs = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    return signs * magnitudes


def canonical_sort(lam: np.ndarray) -> tuple[np.ndarray, int]:
    """Positives first (descending), then negatives by magnitude descending;
    returns the sorted vector and the count of positive entries."""
    lam = np.asarray(lam, dtype=np.float64)
    if (lam == 0.0).any():
        raise ValueError("eigenvalues must be nonzero")
    plus = np.sort(lam[lam > 0.0])[::-1]
    minus = np.sort(lam[lam < 0.0])  # ascending = |.| descending
    return np.concatenate((plus, minus)), plus.size


def _apply_reflectors(rng, g: np.ndarray, count: int) -> None:
    # g <- Q g with Q a product of `count` random Householder reflectors
    n = g.shape[0]
    for _ in range(count):
        v = rng.normal(size=n)
        v /= np.linalg.norm(v)
        g -= 2.0 * np.outer(v, v @ g)


def _mix_j_orthogonal(rng, g: np.ndarray, n_plus: int, tanh_max: float) -> None:
    """g <- g W^T for a J-orthogonal W: dense orthogonal mixing inside each
    signature class plus a modest-condition layer of hyperbolic rotations
    across the boundary.  Keeps the hyperbolic singular values of g exact."""
    n = g.shape[0]
    for lo, hi in ((0, n_plus), (n_plus, n)):
        width = hi - lo
        if width < 2:
            continue
        block = np.asfortranarray(g[:, lo:hi].T)
        _apply_reflectors(rng, block, width)
        g[:, lo:hi] = block.T
    if 0 < n_plus < n:
        for _ in range(2 * n):
            i = int(rng.integers(0, n_plus))
            j = int(rng.integers(n_plus, n))
            th = tanh_max * (2.0 * rng.random() - 1.0)
            ch = 1.0 / math.sqrt(1.0 - th * th)
            gi = g[:, i].copy()
            gj = g[:, j].copy()
            g[:, i] = ch * (gi + th * gj)
            g[:, j] = ch * (th * gi + gj)


def gen_factor(lam, seed: int, tanh_max: float = 0.1) -> tuple[np.ndarray, Signature]:
    """Factor G whose hyperbolic singular values are sqrt|lam| with the
    signature J matching the signs of lam (sorted canonically).

    G = Q diag(sqrt|lam_sorted|) W^T with Q a product of n random
    Householder reflectors and W J-orthogonal, so G J G^T has eigenvalues
    lam exactly in exact arithmetic.  W mixes the columns thoroughly
    (without it G would already be column-orthogonal and there would be
    nothing for a solver to do); its hyperbolic layer is kept at modest
    condition via tanh_max.
    """
    lam_sorted, n_plus = canonical_sort(lam)
    n = lam_sorted.size
    rng = np.random.Generator(np.random.PCG64(seed))
    g = np.zeros((n, n), order="F")
    np.fill_diagonal(g, np.sqrt(np.abs(lam_sorted)))
    _apply_reflectors(rng, g, n)
    _mix_j_orthogonal(rng, g, n_plus, tanh_max)
    return np.asfortranarray(g), Signature(n, n_plus)


def relative_error(sigma, signature: Signature, lam) -> float:
    """max_i |sigma_i**2 j_i - lambda_i| / |lambda_i| with both sides in the
    canonical (positives-first, magnitude-descending) order."""
    sigma = np.asarray(sigma, dtype=np.float64)
    lam_sorted, n_plus = canonical_sort(lam)
    if sigma.size != lam_sorted.size:
        raise ValueError("sigma and lambda lengths differ")
    if n_plus != signature.n_plus:
        raise ValueError("signature does not match the signs of lambda")
    implied = sigma ** 2 * signature.as_vector()
    return float(np.max(np.abs(implied - lam_sorted) / np.abs(lam_sorted)))

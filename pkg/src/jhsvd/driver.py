"""Single-node two-level blocked one-sided Jacobi (H)SVD.

The matrix is split into an even number of block-columns; each p-step of the
outer strategy pairs them off into independent tasks (shorten, pointwise
Jacobi, postmultiply).  A block sweep visits every block pair once; the
process stops when a sweep applies no *proper* rotation (cosine != 1) or the
sweep limit is reached.  Tasks touch disjoint columns and counters are
merged by integer addition, so the outcome is bitwise identical for any
worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from numba import njit

from ._fp import NJIT_OPTS, fma
from .blockkernel import (
    BlockTaskResult,
    RankDeficiencyError,
    Signature,
    cholesky_in_place,
    gram,
    inner_jacobi,
    postmultiply,
    qr_peeloff,
)
from .robustnorm import norm2, safe_bounds
from .strategy import PStrategy, make_strategy

FULL_BLOCK = "full-block"
BLOCK_ORIENTED = "block-oriented"
VARIANTS = (FULL_BLOCK, BLOCK_ORIENTED)
SHORTENINGS = ("cholesky", "qr")


class UnsafeScalingError(ValueError):
    """Column norms outside the safe range; rescale the input first."""


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the blocked solver.

    block_width is the order of the shortened factor a task works on (each
    block-column is half that wide); the matrix order must be a multiple of
    it.  The block-oriented variant caps the inner Jacobi at one sweep per
    task; the full-block variant lets it run to convergence (at most
    max_inner_sweeps).
    """

    block_width: int = 32
    variant: str = FULL_BLOCK
    max_block_sweeps: int = 30
    max_inner_sweeps: int = 30
    outer_strategy: str = "rrow"
    inner_strategy: str = "rrow"
    accumulate_v: bool = True
    solve_v: bool = False
    shortening: str = "cholesky"
    eps_factor: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.shortening not in SHORTENINGS:
            raise ValueError(f"shortening must be one of {SHORTENINGS}")
        if self.block_width < 2 or self.block_width % 2:
            raise ValueError("block_width must be an even number >= 2")
        if self.max_block_sweeps < 1 or self.max_inner_sweeps < 1:
            raise ValueError("sweep limits must be at least 1")

    @property
    def inner_sweep_limit(self) -> int:
        return 1 if self.variant == BLOCK_ORIENTED else self.max_inner_sweeps


@dataclass(frozen=True)
class HsvdResult:
    sigma: np.ndarray
    u: np.ndarray
    v: Optional[np.ndarray]
    signature: Signature
    stats: tuple[tuple[int, int], ...]  # per sweep: (rotations, proper)
    block_sweeps: int
    converged: bool

    @property
    def eigenvalues(self) -> np.ndarray:
        """sigma_i**2 * j_i, the implicit eigenvalues of G J G^T."""
        return self.sigma ** 2 * self.signature.as_vector()


def check_column_scaling(g: np.ndarray) -> None:
    """Reject inputs whose column norms could over- or underflow the Gram
    formation; such factors must be rescaled by the caller first."""
    n = g.shape[0]
    mu_tilde, nu_hat = safe_bounds(n)
    hi_lim = math.sqrt(nu_hat)
    for i in range(g.shape[1]):
        js, sigma = norm2(g[:, i])
        nrm = math.ldexp(sigma, -js) if sigma else 0.0
        if nrm < mu_tilde or nrm > hi_lim:
            raise UnsafeScalingError(
                f"column {i + 1} has norm {nrm:.3e} outside the safe range "
                f"[{mu_tilde:.3e}, {hi_lim:.3e}]; rescale the input factor"
            )


def _shorten(gpair: np.ndarray, how: str) -> np.ndarray:
    if how == "cholesky":
        return cholesky_in_place(gram(gpair))
    return qr_peeloff(gpair)


def _block_cols(block: int, bw: int) -> slice:
    return slice((block - 1) * bw, block * bw)


def run_block_jacobi_inplace(
    g: np.ndarray,
    v: Optional[np.ndarray],
    signature: Signature,
    cfg: SolverConfig,
    workers: int = 1,
    outer: Optional[PStrategy] = None,
    inner: Optional[PStrategy] = None,
    early_stop: Optional[Callable[[], bool]] = None,
) -> tuple[list[tuple[int, int]], bool]:
    """Sweep loop of the blocked Jacobi; g (and v, when given) are updated
    in place.  Returns (per-sweep stats, converged)."""
    n = g.shape[1]
    w = cfg.block_width
    if g.shape[0] != n:
        raise ValueError("the working factor must be square")
    if n % w or n < w:
        raise ValueError(f"order {n} must be a positive multiple of block_width {w}")
    bw = w // 2
    b = n // bw
    if outer is None:
        outer = make_strategy(cfg.outer_strategy, b)
    if inner is None:
        inner = make_strategy(cfg.inner_strategy, w)
    if outer.n != b or inner.n != w:
        raise ValueError("strategy orders do not match the blocking")
    inner_limit = cfg.inner_sweep_limit

    def task(pq: tuple[int, int]) -> tuple[int, int]:
        p, q = pq
        sp, sq = _block_cols(p, bw), _block_cols(q, bw)
        gpair = np.asfortranarray(np.hstack((g[:, sp], g[:, sq])))
        r = _shorten(gpair, cfg.shortening)
        colmap = np.concatenate(
            (np.arange(sp.start + 1, sp.stop + 1), np.arange(sq.start + 1, sq.stop + 1))
        )
        res = inner_jacobi(
            r, colmap, signature, inner, max_sweeps=inner_limit,
            eps_factor=cfg.eps_factor,
        )
        if res.rotations:
            gnew = postmultiply(gpair, res.v_acc)
            g[:, sp] = gnew[:, :bw]
            g[:, sq] = gnew[:, bw:]
            if v is not None:
                vpair = np.asfortranarray(np.hstack((v[:, sp], v[:, sq])))
                vnew = postmultiply(vpair, res.v_acc)
                v[:, sp] = vnew[:, :bw]
                v[:, sq] = vnew[:, bw:]
        return res.rotations, res.proper_rotations

    stats: list[tuple[int, int]] = []
    converged = False
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for _ in range(cfg.max_block_sweeps):
            rot_sweep = 0
            proper_sweep = 0
            for step in outer.steps:
                if pool is not None:
                    results = list(pool.map(task, step))
                else:
                    results = [task(pq) for pq in step]
                for rot, proper in results:
                    rot_sweep += rot
                    proper_sweep += proper
            stats.append((rot_sweep, proper_sweep))
            if proper_sweep == 0:
                converged = True
                break
            if early_stop is not None and early_stop():
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return stats, converged


@njit(**NJIT_OPTS)
def _back_substitute(r, w, out):
    n = r.shape[0]
    for j in range(w.shape[1]):
        for i in range(n - 1, -1, -1):
            acc = w[i, j]
            for k in range(i + 1, n):
                acc = fma(-r[i, k], out[k, j], acc)
            out[i, j] = acc / r[i, i]


def solve_for_v(r: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Solve the upper-triangular system R V = W column by column."""
    r = np.asfortranarray(r, dtype=np.float64)
    w = np.asfortranarray(w, dtype=np.float64)
    n = r.shape[0]
    if r.shape != (n, n) or w.shape[0] != n:
        raise ValueError("shape mismatch in triangular solve")
    diag = np.diag(r)
    if np.any(diag == 0.0):
        bad = int(np.nonzero(diag == 0.0)[0][0]) + 1
        raise ZeroDivisionError(f"zero diagonal entry at index {bad}")
    out = np.empty_like(w)
    _back_substitute(r, w, out)
    return out


def extract_sigma(g: np.ndarray) -> np.ndarray:
    """Robust column norms of the transformed factor."""
    sigma = np.empty(g.shape[1])
    for i in range(g.shape[1]):
        js, s = norm2(g[:, i])
        if s == 0.0:
            raise RankDeficiencyError(f"column {i + 1} of the factor is zero", i + 1)
        sigma[i] = math.ldexp(s, -js)
    return sigma


def _class_sort_order(sigma: np.ndarray, n_plus: int) -> np.ndarray:
    """Non-increasing within the + class, then within the - class."""
    order = np.arange(sigma.size)
    plus = order[:n_plus]
    minus = order[n_plus:]
    plus = plus[np.argsort(-sigma[plus], kind="stable")]
    minus = minus[np.argsort(-sigma[minus], kind="stable")]
    return np.concatenate((plus, minus))


def block_jacobi(
    g,
    signature: Optional[Signature] = None,
    cfg: SolverConfig = SolverConfig(),
    workers: int = 1,
) -> HsvdResult:
    """Blocked one-sided Jacobi (H)SVD of a square full-rank factor.

    Returns singular values sorted non-increasingly inside each signature
    class (the + class first), with U (and V, when accumulated or solved
    for) permuted consistently.  With the default signature J = I this is
    the ordinary SVD: g = U diag(sigma) V^T.
    """
    g0 = np.asfortranarray(g, dtype=np.float64)
    n = g0.shape[0]
    if g0.ndim != 2 or g0.shape[1] != n:
        raise ValueError("the input factor must be square")
    if not np.all(np.isfinite(g0)):
        raise ValueError("the input factor contains NaN or infinity")
    if signature is None:
        signature = Signature(n, n)
    if signature.n != n:
        raise ValueError("signature order does not match the matrix")
    check_column_scaling(g0)

    work = g0.copy(order="F")
    keep_input = None
    if cfg.solve_v:
        if np.any(np.tril(g0, -1) != 0.0):
            raise ValueError(
                "solving for V needs an upper-triangular input factor; "
                "accumulate V instead"
            )
        keep_input = g0.copy(order="F")
    v = np.eye(n, order="F") if cfg.accumulate_v else None

    stats, converged = run_block_jacobi_inplace(
        work, v, signature, cfg, workers=workers
    )

    if cfg.solve_v:
        v = solve_for_v(keep_input, work)

    sigma = extract_sigma(work)
    u = np.empty_like(work)
    for i in range(n):
        u[:, i] = work[:, i] / sigma[i]

    order = _class_sort_order(sigma, signature.n_plus)
    sigma = sigma[order]
    u = np.asfortranarray(u[:, order])
    if v is not None:
        v = np.asfortranarray(v[:, order])

    return HsvdResult(
        sigma=sigma,
        u=u,
        v=v,
        signature=signature,
        stats=tuple(stats),
        block_sweeps=len(stats),
        converged=converged,
    )

"""One block-pair task: shorten, orthogonalize, accumulate.

A task receives two tall block-columns, shortens them to a small square
factor with the same Gram matrix (Cholesky of the Gram matrix, or a QR
built from per-chunk Householder factorizations merged by Givens
"peel-off" stages), orthogonalizes the factor by a pointwise one-sided
Jacobi sweep loop, and reports the accumulated local transformation
together with rotation counters.  All floating-point kernels accumulate
through fused multiply-adds and run in a fixed order, so results do not
depend on how tasks are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._fp import NJIT_OPTS, fma
from .robustnorm import EPS, norm2_unscaled
from .rotation import _rotation_core
from .strategy import PStrategy, validate_pstrategy

#: row-chunk height for the Gram accumulation
GRAM_CHUNK = 64


class RankDeficiencyError(ArithmeticError):
    """A pivot column (or Cholesky pivot) signalled numerical rank loss."""

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


class JDefinitenessError(ArithmeticError):
    """A hyperbolic pivot pair lost J-definiteness."""


@dataclass(frozen=True)
class Signature:
    """J = diag(I, -I) encoded by the number of +1 entries."""

    n: int
    n_plus: int

    def __post_init__(self):
        if not (0 <= self.n_plus <= self.n):
            raise ValueError("n_plus must lie in [0, n]")

    def sign(self, column: int) -> int:
        """Sign of J for a 1-based global column index."""
        return 1 if column <= self.n_plus else -1

    def as_vector(self) -> np.ndarray:
        j = np.ones(self.n)
        j[self.n_plus :] = -1.0
        return j


@dataclass(frozen=True)
class BlockTaskResult:
    r_out: np.ndarray
    v_acc: np.ndarray
    rotations: int
    proper_rotations: int
    inner_sweeps: int


# ---------------------------------------------------------------------------
# Shortening kernels.


@njit(**NJIT_OPTS)
def _gram_kernel(g, h):
    # h[x, y] = g[:, x]^T g[:, y], accumulated chunk by chunk with fma;
    # lower triangle computed, then mirrored (exact copies)
    m, c = g.shape
    for y in range(c):
        for x in range(y, c):
            h[x, y] = 0.0
    c0 = 0
    while c0 < m:
        c1 = min(c0 + GRAM_CHUNK, m)
        for y in range(c):
            for x in range(y, c):
                acc = h[x, y]
                for i in range(c0, c1):
                    acc = fma(g[i, x], g[i, y], acc)
                h[x, y] = acc
        c0 = c1
    for y in range(c):
        for x in range(y + 1, c):
            h[y, x] = h[x, y]


def gram(gpair: np.ndarray) -> np.ndarray:
    """Gram matrix of a tall block-column pair (m x c, m >= c)."""
    g = np.asfortranarray(gpair, dtype=np.float64)
    m, c = g.shape
    if m < c:
        raise ValueError(f"need at least as many rows as columns, got {m}x{c}")
    h = np.zeros((c, c), order="F")
    _gram_kernel(g, h)
    return h


@njit(**NJIT_OPTS)
def _cholesky_kernel(h):
    # forward-looking in place: lower triangle becomes L; 0 on success,
    # else 1-based index of the nonpositive pivot
    c = h.shape[0]
    for k in range(c):
        d = h[k, k]
        if not (d > 0.0) or not math.isfinite(d):
            return k + 1
        l = math.sqrt(d)
        h[k, k] = l
        for x in range(k + 1, c):
            h[x, k] = h[x, k] / l
        for j in range(k + 1, c):
            ljk = h[j, k]
            for x in range(j, c):
                h[x, j] = fma(-h[x, k], ljk, h[x, j])
    return 0


def cholesky_in_place(h: np.ndarray) -> np.ndarray:
    """Factor H = L L^T (forward-looking, reads the lower triangle) and
    return R = L^T with the strict lower triangle zeroed."""
    hf = np.asfortranarray(h, dtype=np.float64).copy(order="F")
    info = _cholesky_kernel(hf)
    if info:
        raise RankDeficiencyError(
            f"nonpositive Cholesky pivot at index {info}: "
            "the block-pair is numerically rank deficient",
            index=info,
        )
    r = np.zeros_like(hf)
    c = hf.shape[0]
    for j in range(c):
        r[: j + 1, j] = hf[j, : j + 1]
    return r


@njit(**NJIT_OPTS)
def _hypot2(a, b):
    aa = abs(a)
    ab = abs(b)
    big = aa if aa >= ab else ab
    if big == 0.0:
        return 0.0
    _, e = math.frexp(big)
    as_ = math.ldexp(aa, -e)
    bs = math.ldexp(ab, -e)
    return math.ldexp(math.sqrt(fma(as_, as_, bs * bs)), e)


@njit(**NJIT_OPTS)
def _householder_qr(a):
    # reduce a (c x c) to upper triangular by c-1 reflectors
    # H_k = I - tau w w^T, w = [0..0, 1, v]; Q is discarded
    c = a.shape[0]
    for k in range(c - 1):
        alpha = a[k, k]
        xnorm = norm2_unscaled(a[k + 1 :, k])
        if xnorm == 0.0:
            continue
        nr = _hypot2(alpha, xnorm)
        beta = -nr if alpha >= 0.0 else nr
        tau = (beta - alpha) / beta
        denom = alpha - beta
        for i in range(k + 1, c):
            a[i, k] = a[i, k] / denom
        a[k, k] = beta
        for j in range(k + 1, c):
            z = a[k, j]
            for i in range(k + 1, c):
                z = fma(a[i, k], a[i, j], z)
            tz = tau * z
            a[k, j] = a[k, j] - tz
            for i in range(k + 1, c):
                a[i, j] = fma(-tz, a[i, k], a[i, j])
    for j in range(c):
        for i in range(j + 1, c):
            a[i, j] = 0.0


@njit(**NJIT_OPTS)
def _givens(a, b):
    # c, s with [c s; -s c] [a; b] = [r; 0]; scaled so r = 2**e * d > 0
    aa = abs(a)
    ab = abs(b)
    big = aa if aa >= ab else ab
    _, e = math.frexp(big)
    as_ = math.ldexp(a, -e)
    bs = math.ldexp(b, -e)
    d = math.sqrt(fma(as_, as_, bs * bs))
    return as_ / d, bs / d


@njit(**NJIT_OPTS)
def _peel_combine(r0, r1):
    # stage k annihilates the k-th (super)diagonal of r1 against r0's
    # diagonal; the row pairs within a stage are disjoint
    c = r0.shape[0]
    for k in range(c):
        for x in range(k, c):
            xr = x - k
            b = r1[xr, x]
            if b == 0.0:
                continue
            cc, ss = _givens(r0[x, x], b)
            for j in range(x, c):
                v0 = r0[x, j]
                v1 = r1[xr, j]
                r0[x, j] = fma(ss, v1, cc * v0)
                r1[xr, j] = fma(cc, v1, -(ss * v0))


def qr_peeloff(gpair: np.ndarray) -> np.ndarray:
    """Upper-triangular factor of a tall block-column pair via per-chunk
    Householder QRs merged by Givens peel-off stages.

    The row count must be a multiple of the column count; the returned R has
    a nonnegative diagonal (row sign flips are absorbed into the discarded
    Q).
    """
    g = np.asfortranarray(gpair, dtype=np.float64)
    m, c = g.shape
    if m % c or m < c:
        raise ValueError(f"row count {m} must be a positive multiple of {c}")
    r0 = g[:c].copy(order="F")
    _householder_qr(r0)
    for start in range(c, m, c):
        r1 = g[start : start + c].copy(order="F")
        _householder_qr(r1)
        _peel_combine(r0, r1)
    for i in range(c):
        if r0[i, i] < 0.0:
            r0[i, i:] = -r0[i, i:]
    return r0


# ---------------------------------------------------------------------------
# Pointwise one-sided Jacobi on the shortened factor.


@njit(**NJIT_OPTS)
def _apply_rotation(mat, p, q, cs, tn, hyp):
    c = mat.shape[0]
    s = tn if hyp else -tn
    if cs != 1.0:
        for i in range(c):
            gp = mat[i, p]
            gq = mat[i, q]
            mat[i, p] = fma(s, gq, gp) * cs
            mat[i, q] = fma(tn, gp, gq) * cs
    else:
        for i in range(c):
            gp = mat[i, p]
            gq = mat[i, q]
            mat[i, p] = fma(s, gq, gp)
            mat[i, q] = fma(tn, gp, gq)


@njit(**NJIT_OPTS)
def _swap_columns(mat, p, q):
    c = mat.shape[0]
    for i in range(c):
        tmp = mat[i, p]
        mat[i, p] = mat[i, q]
        mat[i, q] = tmp


@njit(**NJIT_OPTS)
def _inner_jacobi_kernel(r, v, steps, signs, tol_c, max_sweeps):
    """Sweep loop of the pointwise Jacobi (H)SVD on r, accumulating into v.

    Returns (rotations, proper_rotations, sweeps, status, bad_index);
    status 0 = clean, 1 = zero column norm, 2 = hyperbolic domain failure.
    """
    c = r.shape[0]
    total_rot = 0
    total_proper = 0
    sweeps = 0
    for _ in range(max_sweeps):
        a_r = 0
        b_r = 0
        for si in range(steps.shape[0]):
            for pi in range(steps.shape[1]):
                p = steps[si, pi, 0]
                q = steps[si, pi, 1]
                hpp = 0.0
                hqq = 0.0
                hpq = 0.0
                for i in range(c):
                    gp = r[i, p]
                    gq = r[i, q]
                    hpp = fma(gp, gp, hpp)
                    hqq = fma(gq, gq, hqq)
                    hpq = fma(gp, gq, hpq)
                if hpp == 0.0:
                    return total_rot, total_proper, sweeps, 1, p
                if hqq == 0.0:
                    return total_rot, total_proper, sweeps, 1, q
                if abs(hpq) < tol_c * math.sqrt(hpp) * math.sqrt(hqq):
                    continue  # relatively orthogonal: no rotation
                a_r += 1
                hyp = signs[p] > 0 and signs[q] < 0
                t = -1.0 if hyp else 1.0
                cs, tn, ok = _rotation_core(hpp, hqq, hpq, t)
                if not ok:
                    return total_rot, total_proper, sweeps, 2, p
                if cs != 1.0:
                    b_r += 1
                _apply_rotation(r, p, q, cs, tn, hyp)
                _apply_rotation(v, p, q, cs, tn, hyp)
                if not hyp:
                    # keep the implicit eigenvalues sorted: non-increasing in
                    # the + block, non-decreasing (by magnitude) in the - one
                    h1 = fma(-tn, hpq, hpp)
                    h2 = fma(tn, hpq, hqq)
                    if (signs[p] > 0 and h1 < h2) or (signs[p] < 0 and h1 > h2):
                        _swap_columns(r, p, q)
                        _swap_columns(v, p, q)
        sweeps += 1
        total_rot += a_r
        total_proper += b_r
        if a_r == 0:
            break
    return total_rot, total_proper, sweeps, 0, -1


def _steps_array(strategy: PStrategy) -> np.ndarray:
    steps = np.empty((len(strategy.steps), strategy.n // 2, 2), dtype=np.int64)
    for si, step in enumerate(strategy.steps):
        for pi, (p, q) in enumerate(step):
            steps[si, pi, 0] = p - 1
            steps[si, pi, 1] = q - 1
    return steps


def inner_jacobi(
    r: np.ndarray,
    colmap,
    signature: Signature,
    strategy: PStrategy,
    max_sweeps: int,
    eps_factor: float = 1.0,
) -> BlockTaskResult:
    """Orthogonalize the square factor r by pointwise Jacobi rotations.

    colmap holds the 1-based global column indices behind r's columns; a
    pair is rotated hyperbolically exactly when it straddles the signature
    boundary.  The relative-orthogonality tolerance is
    eps * sqrt(order) * eps_factor.  Stops after a rotation-free sweep or
    max_sweeps, whichever comes first.
    """
    r = np.asfortranarray(r, dtype=np.float64).copy(order="F")
    c = r.shape[0]
    if r.shape != (c, c):
        raise ValueError("the shortened factor must be square")
    if strategy.n != c:
        raise ValueError(f"strategy order {strategy.n} != factor order {c}")
    violations = validate_pstrategy(strategy)
    if violations:
        raise ValueError("invalid inner strategy: " + violations[0])
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be at least 1")
    colmap = np.asarray(colmap, dtype=np.int64)
    if colmap.shape != (c,):
        raise ValueError("colmap must list one global index per local column")
    if np.any(np.diff(colmap) <= 0):
        raise ValueError("colmap must be strictly increasing (keeps J partitioned)")
    signs = np.array([signature.sign(int(g)) for g in colmap], dtype=np.int8)
    v = np.eye(c, order="F")
    tol_c = EPS * math.sqrt(c) * eps_factor
    rot, proper, sweeps, status, bad = _inner_jacobi_kernel(
        r, v, _steps_array(strategy), signs, tol_c, max_sweeps
    )
    if status == 1:
        raise RankDeficiencyError(
            f"zero column norm at local column {bad + 1} "
            f"(global {int(colmap[bad])})",
            index=bad + 1,
        )
    if status == 2:
        raise JDefinitenessError(
            f"hyperbolic pivot at local column {bad + 1} has |coth 2phi| < 1"
        )
    return BlockTaskResult(
        r_out=r,
        v_acc=v,
        rotations=int(rot),
        proper_rotations=int(proper),
        inner_sweeps=int(sweeps),
    )


# ---------------------------------------------------------------------------
# Postmultiplication of tall block-columns by the local transformation.


@njit(**NJIT_OPTS)
def _postmultiply_kernel(a, vacc, out):
    # out = a @ vacc with per-entry fma accumulation over ascending k
    m, c = a.shape
    for j in range(c):
        for i in range(m):
            out[i, j] = 0.0
        for k in range(c):
            w = vacc[k, j]
            for i in range(m):
                out[i, j] = fma(a[i, k], w, out[i, j])


def postmultiply(apair: np.ndarray, vacc: np.ndarray) -> np.ndarray:
    """apair @ vacc, blocked with fused multiply-add accumulation."""
    a = np.asfortranarray(apair, dtype=np.float64)
    v = np.asfortranarray(vacc, dtype=np.float64)
    if a.shape[1] != v.shape[0] or v.shape[0] != v.shape[1]:
        raise ValueError(f"shape mismatch: {a.shape} @ {v.shape}")
    out = np.empty_like(a)
    _postmultiply_kernel(a, v, out)
    return out

"""Multi-worker simulation of the outer blocking level.

g long-lived worker threads each own two block-columns of G (and of V).
An outer block step shortens the local pair (Gram + Cholesky), runs the
single-node blocked Jacobi on the shortened factor, postmultiplies the local
block-columns, and then exchanges one updated block-column per worker
according to a precomputed mapping; two barriers separate local compute from
the exchange.  A sweep ends after 2g-1 steps with a summed proper-rotation
counter deciding termination.

Communication is simulated by in-process queues carrying serialized
block-columns; the mapping is chosen to maximize the number of exchange
phases that travel only over fast links (worker i talks to worker i xor 1
faster than to the rest).
"""

from __future__ import annotations

import functools
import itertools
import queue
import threading
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .blockkernel import Signature, cholesky_in_place, gram
from .driver import (
    BLOCK_ORIENTED,
    HsvdResult,
    SolverConfig,
    _class_sort_order,
    block_jacobi,
    check_column_scaling,
    extract_sigma,
    run_block_jacobi_inplace,
    solve_for_v,
)
from .strategy import PStrategy, make_strategy

FAST = "fast"
SLOW = "slow"


@dataclass(frozen=True)
class Topology:
    """Two-speed link classification between workers."""

    g: int

    def link_class(self, i: int, j: int) -> str:
        if i == j or not (0 <= i < self.g and 0 <= j < self.g):
            raise ValueError(f"invalid link ({i}, {j}) for {self.g} workers")
        return FAST if j == i ^ 1 else SLOW


@dataclass(frozen=True)
class ColumnMapping:
    """Worker assignments of pivot block-pairs for every step of a sweep.

    assignments[s][i] is the (p, q) block pair (1-based, p < q) worker i
    processes in step s.  moves[s][i] = (src, col) says worker i receives
    block-column col from worker src in the exchange after step s (the
    transition is cyclic: the last step hands over to the first).
    fast_exchanges counts the transitions whose moves all ride fast links.
    """

    g: int
    assignments: tuple[tuple[tuple[int, int], ...], ...]
    moves: tuple[tuple[tuple[int, int], ...], ...]
    fast_exchanges: int


class MappingError(ValueError):
    pass


def _holder_of(assignment, col: int) -> int:
    for i, (p, q) in enumerate(assignment):
        if col == p or col == q:
            return i
    raise MappingError(f"block-column {col} is not held by any worker")


def _transition_moves(cur, nxt, topology: Topology):
    """Per-worker (src, received column) for one exchange, or None if some
    worker would have to replace both of its block-columns."""
    g = topology.g
    moves = []
    all_fast = True
    for i in range(g):
        kept = set(cur[i]) & set(nxt[i])
        if len(kept) != 1:
            return None, False
        incoming = (set(nxt[i]) - kept).pop()
        src = _holder_of(cur, incoming)
        moves.append((src, incoming))
        if topology.link_class(src, i) != FAST:
            all_fast = False
    return tuple(moves), all_fast


def _assignment_options(cur, next_step_pairs):
    """All bijections pairs->workers for the next step in which every worker
    keeps exactly one of its block-columns."""
    g = len(cur)
    options = []
    per_worker = []
    for i in range(g):
        own = set(cur[i])
        cands = [pq for pq in next_step_pairs if len(own & set(pq)) == 1]
        per_worker.append(cands)

    chosen: list[tuple[int, int]] = []
    used: set[tuple[int, int]] = set()

    def rec(i):
        if i == g:
            options.append(tuple(chosen))
            return
        for pq in per_worker[i]:
            if pq in used:
                continue
            used.add(pq)
            chosen.append(pq)
            rec(i + 1)
            chosen.pop()
            used.remove(pq)

    rec(0)
    return options


@functools.lru_cache(maxsize=64)
def optimize_mapping(strategy: PStrategy, topology: Topology) -> ColumnMapping:
    """Assign pivot block-pairs to workers, maximizing the number of
    all-fast exchange transitions per sweep (the transition wrapping from
    the last step back to the first is included, since sweeps repeat).

    Exhaustive search; ties resolved toward the lexicographically smallest
    assignment table, so reruns reproduce the same mapping.
    """
    g = topology.g
    if strategy.n != 2 * g:
        raise MappingError(f"strategy order {strategy.n} != 2g = {2 * g}")
    steps = [tuple(sorted(step)) for step in strategy.steps]
    nsteps = len(steps)
    if g == 1:
        assignments = tuple((pq,) for pq in strategy.steps)
        return ColumnMapping(1, assignments, ((),) * nsteps, 0)

    best: Optional[tuple] = None  # ((-count, assignments), assignments, moves)

    def transitions_score(assignments):
        count = 0
        moves = []
        for s in range(nsteps):
            mv, fast = _transition_moves(
                assignments[s], assignments[(s + 1) % nsteps], topology
            )
            if mv is None:
                return None, None
            moves.append(mv)
            count += fast
        return count, tuple(moves)

    def rec(assignments):
        nonlocal best
        if len(assignments) == nsteps:
            count, moves = transitions_score(assignments)
            if count is None:
                return
            key = (-count, tuple(assignments))
            if best is None or key < best[0]:
                best = (key, tuple(assignments), moves)
            return
        for opt in sorted(_assignment_options(assignments[-1], steps[len(assignments)])):
            assignments.append(opt)
            rec(assignments)
            assignments.pop()

    for initial in sorted(itertools.permutations(steps[0])):
        rec([tuple(initial)])

    if best is None:
        raise MappingError("no exchange-compatible worker assignment exists")
    _, assignments, moves = best
    count = -best[0][0]
    return ColumnMapping(g, assignments, moves, count)


# ---------------------------------------------------------------------------
# The simulator.


@dataclass
class _WorkerState:
    gx: np.ndarray                      # n x 2bw local block-columns of G
    vx: Optional[np.ndarray]            # n x 2bw local block-columns of V
    inbox: "queue.SimpleQueue"
    proper: int = 0
    rotations: int = 0


@dataclass(frozen=True)
class ExchangeRecord:
    sweep: int
    step: int
    worker: int
    column: int
    dest: int
    link: str


def run_distributed(
    g_matrix,
    signature: Optional[Signature],
    g: int,
    cfg: SolverConfig = SolverConfig(),
    hybrid_early_stop: bool = False,
    collect_trace: bool = False,
) -> tuple[HsvdResult, list[ExchangeRecord]]:
    """Blocked Jacobi (H)SVD over g simulated workers.

    With g = 1 this degenerates to the single-node driver (bitwise).  For
    g >= 2 each worker runs phases: Gram, Cholesky, a nested single-node
    solve of the shortened factor (accumulating the local transformation or
    recovering it by a triangular solve), postmultiplication, and one
    block-column exchange, with barriers between compute and communication.
    """
    gm = np.asfortranarray(g_matrix, dtype=np.float64)
    n = gm.shape[0]
    if gm.ndim != 2 or gm.shape[1] != n:
        raise ValueError("the input factor must be square")
    if signature is None:
        signature = Signature(n, n)
    if g < 1:
        raise ValueError("need at least one worker")
    if g == 1:
        result = block_jacobi(gm, signature, cfg)
        return result, []

    if n % (2 * g):
        raise ValueError(f"order {n} must be divisible by 2g = {2 * g}")
    bw = n // (2 * g)          # block-column width
    local_n = 2 * bw           # columns owned by one worker
    if local_n % cfg.block_width or local_n < cfg.block_width:
        raise ValueError(
            f"per-worker width {local_n} must be a multiple of "
            f"block_width {cfg.block_width}"
        )
    if not np.all(np.isfinite(gm)):
        raise ValueError("the input factor contains NaN or infinity")
    check_column_scaling(gm)

    outer = make_strategy(cfg.outer_strategy, 2 * g)
    topology = Topology(g)
    mapping = optimize_mapping(outer, topology)
    nsteps = len(mapping.assignments)

    local_cfg = replace(
        cfg,
        accumulate_v=not cfg.solve_v,
        solve_v=False,
        max_block_sweeps=1 if cfg.variant == BLOCK_ORIENTED else cfg.max_block_sweeps,
    )

    def block_slice(block: int) -> slice:
        return slice((block - 1) * bw, block * bw)

    want_v = cfg.accumulate_v or cfg.solve_v
    workers = []
    for i in range(g):
        p, q = mapping.assignments[0][i]
        gx = np.asfortranarray(np.hstack((gm[:, block_slice(p)], gm[:, block_slice(q)])))
        vx = None
        if want_v:
            vx = np.zeros((n, local_n), order="F")
            vx[block_slice(p), :bw] = np.eye(bw)
            vx[block_slice(q), bw:] = np.eye(bw)
        workers.append(_WorkerState(gx=gx, vx=vx, inbox=queue.SimpleQueue()))

    barrier = threading.Barrier(g)
    sweep_proper = [0] * g
    sweep_rot = [0] * g
    stats: list[tuple[int, int]] = []
    stop_flag = threading.Event()
    converged_flag = threading.Event()
    traces: list[list[ExchangeRecord]] = [[] for _ in range(g)]
    errors: list[BaseException] = []
    finish_events = [
        threading.Event() for _ in range(cfg.max_block_sweeps * nsteps)
    ]

    def worker_loop(i: int):
        try:
            st = workers[i]
            for sweep in range(cfg.max_block_sweeps):
                st.proper = 0
                st.rotations = 0
                for s in range(nsteps):
                    p, q = mapping.assignments[s][i]
                    # (0)+(1): shorten the local pair
                    r = cholesky_in_place(gram(st.gx))
                    sig_local = _local_signature_pair(signature, p, q, bw)
                    # (2): nested single-node solve of the shortened factor
                    work = r.copy(order="F")
                    vhat = np.eye(local_n, order="F") if not cfg.solve_v else None
                    event = finish_events[sweep * nsteps + s]
                    early = event.is_set if hybrid_early_stop else None
                    local_stats, _ = run_block_jacobi_inplace(
                        work,
                        vhat,
                        sig_local,
                        local_cfg,
                        workers=1,
                        early_stop=early,
                    )
                    if hybrid_early_stop:
                        event.set()
                    if cfg.solve_v:
                        vhat = solve_for_v(r, work)
                    st.rotations += sum(a for a, _ in local_stats)
                    st.proper += sum(b for _, b in local_stats)
                    # (3): postmultiply the local tall block-columns
                    if any(a for a, _ in local_stats):
                        st.gx = _postmul(st.gx, vhat)
                        if st.vx is not None:
                            st.vx = _postmul(st.vx, vhat)
                    # (4): all locals done
                    barrier.wait()
                    # (5): send one block-column, keep the other
                    nxt_p, nxt_q = mapping.assignments[(s + 1) % nsteps][i]
                    kept = ({p, q} & {nxt_p, nxt_q}).pop()
                    sent = p if kept == q else q
                    dst = _holder_next(mapping.assignments[(s + 1) % nsteps], sent)
                    buf_g = _column_block(st.gx, sent == q).tobytes(order="F")
                    buf_v = (
                        _column_block(st.vx, sent == q).tobytes(order="F")
                        if st.vx is not None
                        else b""
                    )
                    workers[dst].inbox.put((sent, buf_g, buf_v))
                    if collect_trace:
                        traces[i].append(
                            ExchangeRecord(
                                sweep + 1, s + 1, i, sent, dst,
                                topology.link_class(i, dst),
                            )
                        )
                    incoming, in_g, in_v = st.inbox.get()
                    new_g = np.empty_like(st.gx)
                    new_v = np.empty_like(st.vx) if st.vx is not None else None
                    _place_pair(
                        new_g, new_v, st, kept == q, in_g, in_v,
                        (nxt_p, nxt_q), kept, n, bw,
                    )
                    st.gx = new_g
                    st.vx = new_v
                    # (6): exchange complete
                    barrier.wait()
                # sweep end: +-reduce the proper-rotation counters
                sweep_proper[i] = st.proper
                sweep_rot[i] = st.rotations
                barrier.wait()
                if i == 0:
                    stats.append((sum(sweep_rot), sum(sweep_proper)))
                    if sum(sweep_proper) == 0:
                        converged_flag.set()
                        stop_flag.set()
                    elif sweep + 1 == cfg.max_block_sweeps:
                        stop_flag.set()
                barrier.wait()
                if stop_flag.is_set():
                    return
        except BaseException as exc:  # propagate to the caller
            errors.append(exc)
            barrier.abort()

    threads = [
        threading.Thread(target=worker_loop, args=(i,), name=f"dist-worker-{i}")
        for i in range(g)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]

    # gather: after the final exchange every worker holds its step-0 pair
    g_final = np.empty_like(gm)
    v_final = np.empty((n, n), order="F") if want_v else None
    for i in range(g):
        p, q = mapping.assignments[0][i]
        g_final[:, block_slice(p)] = workers[i].gx[:, :bw]
        g_final[:, block_slice(q)] = workers[i].gx[:, bw:]
        if v_final is not None:
            v_final[:, block_slice(p)] = workers[i].vx[:, :bw]
            v_final[:, block_slice(q)] = workers[i].vx[:, bw:]

    sigma = extract_sigma(g_final)
    u = np.empty_like(g_final)
    for c in range(n):
        u[:, c] = g_final[:, c] / sigma[c]
    order = _class_sort_order(sigma, signature.n_plus)
    sigma = sigma[order]
    u = np.asfortranarray(u[:, order])
    if v_final is not None:
        v_final = np.asfortranarray(v_final[:, order])

    result = HsvdResult(
        sigma=sigma,
        u=u,
        v=v_final,
        signature=signature,
        stats=tuple(stats),
        block_sweeps=len(stats),
        converged=converged_flag.is_set(),
    )
    trace = [rec for wt in traces for rec in wt]
    trace.sort(key=lambda r: (r.sweep, r.step, r.worker))
    return result, trace


def _local_signature_pair(signature: Signature, p: int, q: int, bw: int) -> Signature:
    lo_p, hi_p = (p - 1) * bw, p * bw
    lo_q, hi_q = (q - 1) * bw, q * bw
    n_plus_local = max(0, min(signature.n_plus, hi_p) - lo_p) + max(
        0, min(signature.n_plus, hi_q) - lo_q
    )
    return Signature(2 * bw, n_plus_local)


def _column_block(arr: np.ndarray, second_half: bool) -> np.ndarray:
    bw = arr.shape[1] // 2
    return arr[:, bw:] if second_half else arr[:, :bw]


def _holder_next(assignment, col: int) -> int:
    for i, (p, q) in enumerate(assignment):
        if col == p or col == q:
            return i
    raise MappingError(f"block-column {col} unassigned in the next step")


def _place_pair(new_g, new_v, st, kept_is_second, buf_g, buf_v,
                nxt_pair, kept, n, bw):
    nxt_p, nxt_q = nxt_pair
    kept_g = _column_block(st.gx, kept_is_second)
    in_g = np.frombuffer(buf_g, dtype=np.float64).reshape((n, bw), order="F")
    if kept == nxt_p:
        new_g[:, :bw] = kept_g
        new_g[:, bw:] = in_g
    else:
        new_g[:, :bw] = in_g
        new_g[:, bw:] = kept_g
    if new_v is not None:
        kept_v = _column_block(st.vx, kept_is_second)
        in_v = np.frombuffer(buf_v, dtype=np.float64).reshape((n, bw), order="F")
        if kept == nxt_p:
            new_v[:, :bw] = kept_v
            new_v[:, bw:] = in_v
        else:
            new_v[:, :bw] = in_v
            new_v[:, bw:] = kept_v


def _postmul(tall: np.ndarray, vhat: np.ndarray) -> np.ndarray:
    from .blockkernel import postmultiply

    return postmultiply(tall, vhat)

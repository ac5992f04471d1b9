"""Cyclic and perfectly-parallel pivot orderings for one-sided Jacobi.

A *p-strategy* for an even order n is a sequence of n-1 p-steps, each a set
of n/2 pairwise disjoint pivot pairs, that together cover every index pair
(i, j), 1 <= i < j <= n, exactly once.  The central construction here is the
p-strategy *closest* to a sequential reference ordering (row- or
column-cyclic): the lexicographic minimum, over all p-strategies, of the
sequence of reference positions of the flattened pivot pairs.  Closest
strategies for large orders are produced by searching a small core order and
repeatedly doubling it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

Pair = tuple[int, int]

#: default cap on the order accepted by the backtracking search
DEFAULT_SEARCH_CAP = 16

#: default cap on backtracking nodes before giving up
DEFAULT_NODE_BUDGET = 2_000_000

KINDS = (
    "row-closest",
    "col-closest",
    "reversed-row",
    "reversed-col",
    "brent-luk",
    "modified-modulus",
    "custom",
)


class StrategyError(ValueError):
    """A strategy request violates its preconditions."""


class SearchBudgetExceeded(StrategyError):
    """The closest-strategy search ran out of budget; expand a smaller core."""


@dataclass(frozen=True)
class SequentialOrdering:
    """All tau = n(n-1)/2 pivot pairs of order n in one annihilation order."""

    n: int
    pairs: tuple[Pair, ...]

    def index_of(self) -> dict[Pair, int]:
        return {pq: k for k, pq in enumerate(self.pairs, start=1)}


@dataclass(frozen=True)
class PStrategy:
    """A perfectly parallel strategy: n-1 steps of n/2 disjoint pairs."""

    n: int
    steps: tuple[tuple[Pair, ...], ...]
    kind: str = "custom"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise StrategyError(f"unknown strategy kind {self.kind!r}")

    def flattened(self) -> tuple[Pair, ...]:
        return tuple(pq for step in self.steps for pq in step)

    @property
    def num_steps(self) -> int:
        return len(self.steps)


def row_cyclic(n: int) -> SequentialOrdering:
    """Row-major upper-triangle order: (1,2),(1,3),...,(1,n),(2,3),..."""
    if n < 2:
        raise StrategyError("order must be at least 2")
    pairs = tuple((i, j) for i in range(1, n) for j in range(i + 1, n + 1))
    return SequentialOrdering(n, pairs)


def column_cyclic(n: int) -> SequentialOrdering:
    """Column-major upper-triangle order: (1,2),(1,3),(2,3),(1,4),..."""
    if n < 2:
        raise StrategyError("order must be at least 2")
    pairs = tuple((i, j) for j in range(2, n + 1) for i in range(1, j))
    return SequentialOrdering(n, pairs)


def validate_pstrategy(strat: PStrategy) -> list[str]:
    """Return a list of violation descriptions; empty means valid."""
    n = strat.n
    violations = []
    if n < 2 or n % 2:
        violations.append(f"order {n} is not an even number >= 2")
        return violations
    t = n // 2
    if len(strat.steps) != n - 1:
        violations.append(f"expected {n - 1} steps, found {len(strat.steps)}")
    seen: dict[Pair, int] = {}
    for si, step in enumerate(strat.steps, start=1):
        if len(step) != t:
            violations.append(f"step {si} has {len(step)} pairs, expected {t}")
        used = set()
        for (p, q) in step:
            if not (1 <= p < q <= n):
                violations.append(f"step {si}: pair ({p},{q}) out of range")
                continue
            if p in used or q in used:
                violations.append(f"step {si}: pair ({p},{q}) collides within the step")
            used.update((p, q))
            if (p, q) in seen:
                violations.append(
                    f"pair ({p},{q}) appears in steps {seen[(p, q)]} and {si}"
                )
            else:
                seen[(p, q)] = si
    expected = {(i, j) for i in range(1, n) for j in range(i + 1, n + 1)}
    missing = expected - set(seen)
    if missing:
        violations.append(f"{len(missing)} pairs never visited, e.g. {sorted(missing)[:3]}")
    return violations


def _require_valid(strat: PStrategy):
    violations = validate_pstrategy(strat)
    if violations:
        raise StrategyError("invalid p-strategy: " + "; ".join(violations[:4]))


def index_permutation(reference: SequentialOrdering, strat: PStrategy) -> tuple[int, ...]:
    """Positions, in the reference ordering, of the strategy's flattened pairs."""
    if reference.n != strat.n:
        raise StrategyError("reference and strategy orders differ")
    _require_valid(strat)
    index = reference.index_of()
    return tuple(index[pq] for pq in strat.flattened())


def closer_to(reference: SequentialOrdering, a: PStrategy, b: PStrategy) -> str:
    """Compare two strategies by closeness to the reference: 'a-closer',
    'equal', or 'b-closer' (lexicographic order of index permutations)."""
    pa = index_permutation(reference, a)
    pb = index_permutation(reference, b)
    if pa < pb:
        return "a-closer"
    if pa > pb:
        return "b-closer"
    return "equal"


def step_equivalent(a: PStrategy, b: PStrategy) -> bool:
    """True when the i-th steps agree as sets for every i."""
    if a.n != b.n:
        raise StrategyError("strategies have different orders")
    if len(a.steps) != len(b.steps):
        return False
    return all(set(sa) == set(sb) for sa, sb in zip(a.steps, b.steps))


# ---------------------------------------------------------------------------
# Closest-strategy search.


def _reference(kind: str, n: int) -> SequentialOrdering:
    if kind == "row":
        return row_cyclic(n)
    if kind == "col":
        return column_cyclic(n)
    raise StrategyError(f"reference kind must be 'row' or 'col', got {kind!r}")


def _matching_covers(n: int, adj: list[int], target: int) -> bool:
    """Whether a perfect matching on the vertices of `target` exists.

    Blossom-contraction search on bitmask adjacency; exact for general
    graphs, so the strategy search never descends into a dead branch.
    """
    match = [-1] * n
    tv = target
    while tv:  # cheap greedy seed
        v = (tv & -tv).bit_length() - 1
        tv &= tv - 1
        if match[v] < 0:
            cand = adj[v]
            while cand:
                w = (cand & -cand).bit_length() - 1
                cand &= cand - 1
                if match[w] < 0:
                    match[v] = w
                    match[w] = v
                    break

    parent = [-1] * n
    base = list(range(n))
    used = [False] * n

    def lowest_common_base(a: int, b: int) -> int:
        seen = [False] * n
        while True:
            a = base[a]
            seen[a] = True
            if match[a] < 0:
                break
            a = parent[match[a]]
        while True:
            b = base[b]
            if seen[b]:
                return b
            b = parent[match[b]]

    def augment_from(root: int) -> bool:
        for i in range(n):
            used[i] = False
            parent[i] = -1
            base[i] = i
        used[root] = True
        queue = [root]
        head = 0
        while head < len(queue):
            v = queue[head]
            head += 1
            cand = adj[v]
            while cand:
                to = (cand & -cand).bit_length() - 1
                cand &= cand - 1
                if base[v] == base[to] or match[v] == to:
                    continue
                if to == root or (match[to] >= 0 and parent[match[to]] >= 0):
                    # odd cycle: contract the blossom
                    cur = lowest_common_base(v, to)
                    in_blossom = [False] * n
                    for x, child in ((v, to), (to, v)):
                        while base[x] != cur:
                            in_blossom[base[x]] = True
                            in_blossom[base[match[x]]] = True
                            parent[x] = child
                            child = match[x]
                            x = parent[match[x]]
                    for i in range(n):
                        if (target >> i) & 1 and in_blossom[base[i]]:
                            base[i] = cur
                            if not used[i]:
                                used[i] = True
                                queue.append(i)
                elif parent[to] < 0:
                    parent[to] = v
                    if match[to] < 0:
                        u = to
                        while u >= 0:
                            pv = parent[u]
                            nxt = match[pv]
                            match[u] = pv
                            match[pv] = u
                            u = nxt
                        return True
                    used[match[to]] = True
                    queue.append(match[to])
        return False

    tv = target
    while tv:
        v = (tv & -tv).bit_length() - 1
        tv &= tv - 1
        if match[v] < 0 and not augment_from(v):
            return False
    return True


def closest_pstrategy(
    kind: str,
    n: int,
    search_cap: int = DEFAULT_SEARCH_CAP,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> PStrategy:
    """The unique p-strategy closest to the row- or column-cyclic ordering.

    Depth-first backtracking over candidate p-steps, generated in
    lexicographic order of their reference-ordering indices; the first
    complete strategy found is the closest one.  Exponential in the worst
    case, hence the order cap; callers beyond the cap should search a small
    core and duplicate it with :func:`expand_pstrategy`.
    """
    if n < 2 or n % 2:
        raise StrategyError("closest p-strategies are defined for even n >= 2")
    if n > search_cap:
        raise SearchBudgetExceeded(
            f"order {n} exceeds the search cap {search_cap}; "
            "use expand_pstrategy on a smaller core"
        )
    reference = _reference(kind, n)
    pairs = reference.pairs
    tau = len(pairs)
    t = n // 2

    # pair index -> bitmask of its two (0-based) vertices
    pmask = [(1 << (p - 1)) | (1 << (q - 1)) for (p, q) in pairs]
    # vertex -> bitmask over pair indices containing it
    vert_pairs = [0] * n
    for k, (p, q) in enumerate(pairs):
        vert_pairs[p - 1] |= 1 << k
        vert_pairs[q - 1] |= 1 << k
    collide = [vert_pairs[p - 1] | vert_pairs[q - 1] for (p, q) in pairs]

    all_vertices = (1 << n) - 1
    nodes = 0

    def extendable(candidates: int, covered: int) -> bool:
        # exact feasibility: the uncovered vertices must admit a perfect
        # matching among the still-selectable pairs
        adj = [0] * n
        m = candidates
        while m:
            k = (m & -m).bit_length() - 1
            m &= m - 1
            p, q = pairs[k]
            adj[p - 1] |= 1 << (q - 1)
            adj[q - 1] |= 1 << (p - 1)
        return _matching_covers(n, adj, all_vertices & ~covered)

    def matchings(remaining: int):
        # yield perfect matchings (index tuples, strictly increasing) lazily,
        # in lexicographic order
        chosen: list[int] = []

        def rec(candidates: int, covered: int):
            nonlocal nodes
            if len(chosen) == t:
                yield tuple(chosen)
                return
            nodes += 1
            if nodes > node_budget:
                raise SearchBudgetExceeded(
                    f"search for order {n} exceeded {node_budget} nodes"
                )
            if not extendable(candidates, covered):
                return
            m = candidates
            while m:
                k = (m & -m).bit_length() - 1
                m &= m - 1
                chosen.append(k)
                # future picks keep increasing indices and avoid collisions
                yield from rec(m & ~collide[k], covered | pmask[k])
                chosen.pop()

        yield from rec(remaining, 0)

    steps: list[tuple[int, ...]] = []

    def search(remaining: int) -> bool:
        if remaining == 0:
            return True
        for step in matchings(remaining):
            steps.append(step)
            rem = remaining
            for k in step:
                rem &= ~(1 << k)
            if search(rem):
                return True
            steps.pop()
        return False

    if not search((1 << tau) - 1):
        raise StrategyError(f"no p-strategy exists for order {n}")

    kind_tag = "row-closest" if kind == "row" else "col-closest"
    return PStrategy(
        n,
        tuple(tuple(pairs[k] for k in step) for step in steps),
        kind=kind_tag,
    )


def expand_pstrategy(strat: PStrategy, kind: str) -> PStrategy:
    """Double the order of a p-strategy.

    Each input pair (p, q) names a 2x2 block of the doubled matrix; an input
    step expands to two output steps, one taking the block's NW/SE corners
    and one the NE/SW corners (appended in NE,SW order for a row-derived
    strategy and SW,NE for a column-derived one).  The doubled strategy opens
    with the forced first step ((2k-1, 2k)).
    """
    _require_valid(strat)
    if kind not in ("row", "col"):
        raise StrategyError(f"expansion kind must be 'row' or 'col', got {kind!r}")
    n = strat.n
    steps: list[tuple[Pair, ...]] = [tuple((2 * k - 1, 2 * k) for k in range(1, n + 1))]
    for i in range(2, 2 * n):
        src = strat.steps[i // 2 - 1]
        out: list[Pair] = []
        for (p, q) in src:
            if i % 2 == 0:
                out.append((2 * p - 1, 2 * q - 1))  # NW
                out.append((2 * p, 2 * q))          # SE
            else:
                ne = (2 * p - 1, 2 * q)
                sw = (2 * p, 2 * q - 1)
                out.extend((ne, sw) if kind == "row" else (sw, ne))
        steps.append(tuple(out))
    kind_tag = "row-closest" if kind == "row" else "col-closest"
    return PStrategy(2 * n, tuple(steps), kind=kind_tag)


def reverse_pstrategy(strat: PStrategy) -> PStrategy:
    """Reverse the flattened pair sequence and re-chunk into p-steps."""
    _require_valid(strat)
    flat = strat.flattened()[::-1]
    t = strat.n // 2
    steps = tuple(tuple(flat[i : i + t]) for i in range(0, len(flat), t))
    reverse_kind = {
        "row-closest": "reversed-row",
        "col-closest": "reversed-col",
        "reversed-row": "row-closest",
        "reversed-col": "col-closest",
    }.get(strat.kind, "custom")
    return PStrategy(strat.n, steps, kind=reverse_kind)


# ---------------------------------------------------------------------------
# Baseline strategies.


def brent_luk(n: int) -> PStrategy:
    """Round-robin tournament ordering (caterpillar rotation, slot 1 fixed)."""
    if n < 2 or n % 2:
        raise StrategyError("Brent-Luk strategy requires even n >= 2")
    t = n // 2
    top = list(range(1, n, 2))
    bottom = list(range(2, n + 1, 2))
    steps = []
    for _ in range(n - 1):
        steps.append(tuple(tuple(sorted((a, b))) for a, b in zip(top, bottom)))
        # rotate every label except top[0] one position clockwise
        new_top = [top[0], bottom[0]] + top[1 : t - 1]
        new_bottom = bottom[1:] + [top[t - 1]]
        top, bottom = new_top, new_bottom
    return PStrategy(n, tuple(steps), kind="brent-luk")


def modified_modulus(n: int) -> PStrategy:
    """Modulus ordering for n-1 indices with the leftover paired to n."""
    if n < 2 or n % 2:
        raise StrategyError("modified modulus strategy requires even n >= 2")
    m = n - 1
    steps = []
    for k in range(1, m + 1):
        step: list[Pair] = []
        leftover = None
        for i in range(1, m + 1):
            j = (k - i) % m
            j = m if j == 0 else j
            if i == j:
                leftover = i
            elif i < j:
                step.append((i, j))
        assert leftover is not None
        step.append((leftover, n))
        steps.append(tuple(step))
    return PStrategy(n, tuple(steps), kind="modified-modulus")


# ---------------------------------------------------------------------------
# Arbitrary even orders: search a core, then duplicate.


def _odd_part(n: int) -> tuple[int, int]:
    k = 0
    while n % 2 == 0:
        n //= 2
        k += 1
    return n, k


def make_strategy(
    kind: str,
    n: int,
    search_cap: int = DEFAULT_SEARCH_CAP,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> PStrategy:
    """Build a strategy of any supported kind for an even order n.

    kind is one of 'row', 'col' (closest), 'rrow', 'rcol' (their reverses),
    'bl' (Brent-Luk), 'mm' (modified modulus).  Closest strategies whose
    order exceeds the search cap are produced by searching the core order
    2*odd_part(n) and doubling it as many times as needed.
    """
    if n < 2 or n % 2:
        raise StrategyError("strategies are defined for even n >= 2")
    if kind == "bl":
        return brent_luk(n)
    if kind == "mm":
        return modified_modulus(n)
    if kind in ("rrow", "rcol"):
        return reverse_pstrategy(make_strategy(kind[1:], n, search_cap, node_budget))
    if kind not in ("row", "col"):
        raise StrategyError(f"unknown strategy kind {kind!r}")
    odd, k = _odd_part(n)
    base = 2 if odd == 1 else 2 * odd
    doublings = k - 1
    if n <= search_cap and doublings > 0 and base < n:
        # small enough for a direct search; keeps the two routes comparable
        base, doublings = n, 0
    strat = closest_pstrategy(kind, base, search_cap=search_cap, node_budget=node_budget)
    for _ in range(doublings):
        strat = expand_pstrategy(strat, kind)
    return strat


# ---------------------------------------------------------------------------
# Text serialization: line 1 "n s t", then s lines of t "p:q" entries.


def dump_strategy(strat: PStrategy) -> str:
    _require_valid(strat)
    lines = [f"{strat.n} {len(strat.steps)} {strat.n // 2}"]
    for step in strat.steps:
        lines.append(" ".join(f"{p}:{q}" for (p, q) in step))
    return "\n".join(lines) + "\n"


def parse_strategy(text: str, kind: str = "custom") -> PStrategy:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise StrategyError("empty strategy file")
    try:
        n, s, t = (int(tok) for tok in lines[0].split())
    except ValueError as exc:
        raise StrategyError(f"malformed header line {lines[0]!r}") from exc
    if len(lines) - 1 != s:
        raise StrategyError(f"expected {s} step lines, found {len(lines) - 1}")
    steps = []
    for ln in lines[1:]:
        step = []
        for tok in ln.split():
            try:
                p, q = (int(x) for x in tok.split(":"))
            except ValueError as exc:
                raise StrategyError(f"malformed pair token {tok!r}") from exc
            step.append((p, q))
        if len(step) != t:
            raise StrategyError(f"step line {ln!r} has {len(step)} pairs, expected {t}")
        steps.append(tuple(step))
    strat = PStrategy(n, tuple(steps), kind=kind)
    _require_valid(strat)
    return strat

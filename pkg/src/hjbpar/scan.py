"""Generic associative scan engine.

Computes all prefix (or suffix) combinations under a caller-supplied
associative operator. Both backends evaluate exactly the same combination
tree, so their outputs are bitwise identical; "parallel" only changes who
executes the combines.

When the operator has an identity, the engine pads to a power of two and
runs a work-efficient Blelloch up/down-sweep. Without an identity it falls
back to a fixed balanced divide-and-conquer tree.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, TypeVar

E = TypeVar("E")
Combine = Callable[[E, E], E]


@dataclass
class ScanStats:
    """Execution counters for one scan invocation."""

    combines: int = 0
    upsweep_levels: int = 0
    downsweep_levels: int = 0


@dataclass(frozen=True)
class ScanPlan:
    length: int
    direction: str = "forward"  # forward | reverse
    backend: str = "sequential"  # sequential | parallel
    workers: Optional[int] = None

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("scan length must be >= 1")
        if self.direction not in ("forward", "reverse"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.backend not in ("sequential", "parallel"):
            raise ValueError(f"unknown backend {self.backend!r}")


def scan_depth(T: int) -> int:
    """Critical-path combine depth of the parallel backend (one sweep)."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return math.ceil(math.log2(T)) if T > 1 else 0


def scan_sweeps(T: int) -> int:
    """Total sweep levels: up-sweep plus down-sweep."""
    return 2 * scan_depth(T)


class _Runner:
    """Executes batches of independent combines serially or on a pool."""

    def __init__(self, backend: str, workers: Optional[int]):
        self.pool = ThreadPoolExecutor(max_workers=workers) if backend == "parallel" else None

    def map(self, fn, items):
        if self.pool is None:
            return [fn(it) for it in items]
        return list(self.pool.map(fn, items))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def _blelloch_scan(elements, combine, identity, runner, stats):
    n = len(elements)
    n_pad = 1 << max(0, math.ceil(math.log2(n))) if n > 1 else 1
    a = list(elements) + [identity] * (n_pad - n)

    def comb(pair):
        x, y = pair
        return combine(x, y)

    # Up-sweep: build subtree totals in place.
    stride = 1
    while stride < n_pad:
        idx = list(range(0, n_pad, 2 * stride))
        pairs = [(a[i + stride - 1], a[i + 2 * stride - 1]) for i in idx]
        stats.combines += len(pairs)
        results = runner.map(comb, pairs)
        for i, res in zip(idx, results):
            a[i + 2 * stride - 1] = res
        stride *= 2
        stats.upsweep_levels += 1

    # Down-sweep: convert totals into exclusive prefixes.
    a[n_pad - 1] = identity
    stride = n_pad // 2
    while stride >= 1:
        idx = list(range(0, n_pad, 2 * stride))
        incoming = [a[i + 2 * stride - 1] for i in idx]
        left_tot = [a[i + stride - 1] for i in idx]
        stats.combines += len(idx)
        results = runner.map(comb, list(zip(incoming, left_tot)))
        for i, inc, res in zip(idx, incoming, results):
            a[i + stride - 1] = inc
            a[i + 2 * stride - 1] = res
        stride //= 2
        stats.downsweep_levels += 1

    # Inclusive output: exclusive prefix combined with the element itself.
    stats.combines += n
    out = runner.map(comb, [(a[i], elements[i]) for i in range(n)])
    # The first exclusive prefix is the identity, for which the combine is
    # exact; return the element itself to keep out[0] bit-identical.
    out[0] = elements[0]
    return out


def _tree_scan(elements, combine, runner, stats):
    n = len(elements)
    if n == 1:
        return [elements[0]]
    mid = n // 2
    left = _tree_scan(elements[:mid], combine, runner, stats)
    right = _tree_scan(elements[mid:], combine, runner, stats)
    total = left[-1]
    stats.combines += len(right)
    return left + runner.map(lambda r: combine(total, r), right)


def inclusive_scan(
    elements: Sequence[E],
    combine: Combine,
    plan: ScanPlan,
    identity: Optional[E] = None,
    stats: Optional[ScanStats] = None,
) -> list[E]:
    """All-prefix (or all-suffix) combinations of ``elements``.

    forward: out[k] = e[0] * e[1] * ... * e[k]
    reverse: out[k] = e[k] * e[k+1] * ... * e[-1]
    """
    elements = list(elements)
    if not elements:
        raise ValueError("inclusive_scan requires at least one element")
    if len(elements) != plan.length:
        raise ValueError(f"plan.length={plan.length} != len(elements)={len(elements)}")
    if stats is None:
        stats = ScanStats()

    comb = combine
    if plan.direction == "reverse":
        elements = elements[::-1]
        comb = lambda x, y: combine(y, x)
        identity = identity  # identity of a flipped associative op is unchanged

    runner = _Runner(plan.backend, plan.workers)
    try:
        if identity is not None:
            out = _blelloch_scan(elements, comb, identity, runner, stats)
        else:
            out = _tree_scan(elements, comb, runner, stats)
    finally:
        runner.close()

    if plan.direction == "reverse":
        out = out[::-1]
    return out

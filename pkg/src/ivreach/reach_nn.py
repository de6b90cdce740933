"""Simulation-guided output range estimation for MLPs.

The estimator samples the network to build an envelope box around observed
outputs, then adaptively bisects the input box: sub-boxes whose interval
extension already fits inside the envelope are kept as-is (they cannot
stick out of the true range by more than the envelope does), everything
else is split until the input width tolerance is reached.  The union of
collected output boxes always contains the exact output set; the envelope
only steers where refinement effort goes.

A uniform power-of-two partition at the same tolerance serves as the
non-adaptive baseline for cost comparisons.
"""

from __future__ import annotations

import heapq
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List

import numpy as np

from .interval import Box, DimensionMismatch
from .nn import MlpNetwork, _mlp_bounds, mlp_eval, mlp_interval_ext


class InvalidTolerance(ValueError):
    """Refinement tolerance must be strictly positive."""


@dataclass(frozen=True)
class WorkItem:
    """An input sub-box paired with its freshly computed output extension."""

    input: Box
    output: Box

    @classmethod
    def make(cls, net: MlpNetwork, box: Box) -> "WorkItem":
        return cls(box, mlp_interval_ext(net, box))


@dataclass
class ReachStats:
    interval_count: int
    bisection_count: int
    elapsed: float  # wall-clock seconds, informational only


@dataclass
class ReachNnResult:
    """Union-of-boxes output estimate plus the simulation envelope."""

    boxes: List[Box]
    envelope: Box
    stats: ReachStats

    def hull(self) -> Box:
        """Tightest single box covering the union (what one-box consumers use)."""
        return Box.hull(self.boxes)


def simulate(net: MlpNetwork, box: Box, n: int, seed: int) -> np.ndarray:
    """n network outputs for inputs drawn from the box.

    Half the points come from a deterministic grid (endpoints included),
    half from a seeded uniform generator, so small n still touches the
    box faces.  Fixed seed gives an identical point list.
    """
    if n < 1:
        raise ValueError(f"need at least one simulation, got {n}")
    if len(box) != net.input_dim:
        raise DimensionMismatch(f"box has {len(box)} dims, network expects {net.input_dim}")
    d = len(box)
    n_rand = n // 2
    n_grid = n - n_rand
    per_axis = max(1, math.ceil(n_grid ** (1.0 / d)))
    while per_axis**d < n_grid:
        per_axis += 1
    axes = [np.linspace(box.lo[i], box.hi[i], per_axis) for i in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)[:n_grid]
    pts = grid
    if n_rand:
        rng = np.random.default_rng(seed)
        rand = box.lo + rng.random((n_rand, d)) * (box.hi - box.lo)
        pts = np.vstack([grid, rand])
    return mlp_eval(net, pts)


def sim_envelope(points) -> Box:
    """Componentwise hull of simulation outputs."""
    return Box.hull(np.asarray(points, dtype=float))


def reach_mlp(
    net: MlpNetwork,
    box: Box,
    eps: float,
    n_sims: int,
    seed: int,
    *,
    threads: int = 1,
) -> ReachNnResult:
    """Simulation-guided refinement of the output range over an input box.

    The work queue is ordered by input width, widest first.  An item whose
    output extension fits in the simulation envelope is finished; otherwise
    it is bisected while its input is wider than eps.  When the widest
    remaining item is already at tolerance, refinement stops and all
    remaining output boxes are kept, so the union stays a sound cover.
    """
    if eps <= 0:
        raise InvalidTolerance(f"tolerance must be positive, got {eps}")
    if len(box) != net.input_dim:
        raise DimensionMismatch(f"box has {len(box)} dims, network expects {net.input_dim}")
    t0 = time.perf_counter()
    env = sim_envelope(simulate(net, box, n_sims, seed))

    seq = 0
    root = WorkItem.make(net, box)
    heap = [(-box.width(), seq, root)]
    boxes: List[Box] = []
    bisections = 0
    workers = max(1, int(threads))
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while heap:
            # drain the frontier in width order; the extension of every child
            # is then computed in one vectorized batch
            popped = [heapq.heappop(heap) for _ in range(len(heap))]
            to_split: List[WorkItem] = []
            stop = False
            for key, order, item in popped:
                if item.output.issubset(env):
                    boxes.append(item.output)
                elif item.input.width() > eps:
                    to_split.append(item)
                elif to_split:
                    # wider items still refine first; revisit once they have
                    heapq.heappush(heap, (key, order, item))
                else:
                    # widest remaining is at tolerance: keep every leftover cover
                    boxes.append(item.output)
                    stop = True
            if stop:
                while heap:
                    boxes.append(heapq.heappop(heap)[2].output)
                break
            if not to_split:
                continue
            halves: List[Box] = []
            for item in to_split:
                left, right = item.input.bisect()
                bisections += 1
                halves.extend((left, right))
            for child in _extend_batch(net, halves, pool, workers):
                seq += 1
                heapq.heappush(heap, (-child.input.width(), seq, child))
    finally:
        if pool is not None:
            pool.shutdown()

    stats = ReachStats(len(boxes), bisections, time.perf_counter() - t0)
    return ReachNnResult(boxes, env, stats)


def _extend_batch(net: MlpNetwork, inputs: List[Box], pool, workers: int) -> List[WorkItem]:
    lo = np.stack([b.lo for b in inputs])
    hi = np.stack([b.hi for b in inputs])
    if pool is not None and len(inputs) >= 2 * workers:
        parts = np.array_split(np.arange(len(inputs)), workers)
        results = list(pool.map(lambda idx: _mlp_bounds(net, lo[idx], hi[idx]), parts))
        out_lo = np.concatenate([r[0] for r in results])
        out_hi = np.concatenate([r[1] for r in results])
    else:
        out_lo, out_hi = _mlp_bounds(net, lo, hi)
    return [
        WorkItem(box, Box(l, h)) for box, l, h in zip(inputs, out_lo, out_hi)
    ]


def _cell_edges(lo: float, hi: float, splits: int) -> np.ndarray:
    # recursive halving so edges are bit-identical with repeated bisection
    edges = [lo, hi]
    for _ in range(splits):
        refined = [edges[0]]
        for a, b in zip(edges, edges[1:]):
            refined.extend((0.5 * (a + b), b))
        edges = refined
    return np.asarray(edges)


def uniform_partition_mlp(net: MlpNetwork, box: Box, eps: float) -> ReachNnResult:
    """Non-adaptive baseline: halve every dimension until cells reach eps.

    Each dimension of positive width is split into 2**k equal cells with k
    minimal such that the cell width is at most eps, then the extension is
    evaluated on every cell.  Cell boundaries coincide bitwise with the
    bisection midpoints used by the guided method, so both methods refine
    on the same grid.  The reported envelope is the hull of all cell
    outputs (there are no simulations here).
    """
    if eps <= 0:
        raise InvalidTolerance(f"tolerance must be positive, got {eps}")
    if len(box) != net.input_dim:
        raise DimensionMismatch(f"box has {len(box)} dims, network expects {net.input_dim}")
    t0 = time.perf_counter()
    d = len(box)
    all_edges = []
    for i in range(d):
        width = float(box.hi[i] - box.lo[i])
        k = 0
        while width / (1 << k) > eps:
            k += 1
        all_edges.append(_cell_edges(float(box.lo[i]), float(box.hi[i]), k))
    lo_axes = [e[:-1] for e in all_edges]
    hi_axes = [e[1:] for e in all_edges]
    lo_mesh = np.meshgrid(*lo_axes, indexing="ij")
    hi_mesh = np.meshgrid(*hi_axes, indexing="ij")
    cell_lo = np.stack([m.ravel() for m in lo_mesh], axis=1)
    cell_hi = np.stack([m.ravel() for m in hi_mesh], axis=1)

    boxes: List[Box] = []
    chunk = 8192
    for start in range(0, cell_lo.shape[0], chunk):
        out_lo, out_hi = _mlp_bounds(net, cell_lo[start : start + chunk], cell_hi[start : start + chunk])
        boxes.extend(Box(l, h) for l, h in zip(out_lo, out_hi))
    stats = ReachStats(len(boxes), 0, time.perf_counter() - t0)
    return ReachNnResult(boxes, Box.hull(boxes), stats)

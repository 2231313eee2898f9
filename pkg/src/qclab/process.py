"""Coupled routing processes over block-structured decision trees.

A tree over n*m variables is walked block by block: while a block is
undecided, branch probabilities are shared between the block's two
conditional distributions and the walk defers committing; when the
uniform draw lands strictly between the two conditional probabilities the
block "conflicts", the outer bit z_i is consulted, and the block routes
from its own conditional thereafter.

Two views are implemented: an exact forward sweep over (node, undecided
set) states with rational arithmetic, and a vectorized Monte Carlo engine
whose randomness is a counter-based array indexed by (run, block, draw),
so results are bit-for-bit reproducible for a given master seed no matter
how runs are chunked across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .conflict import DistributionPair
from .core import InputDistribution, Number, Subcube, marginal_bit
from .dtree import Leaf, Tree, depth as tree_depth, validate
from .errors import BudgetError, ParseError, QclabError, ZeroMassError

STATE_SPACE_MAX_BLOCKS = 16
_MIN_DRAW = 2.0**-60


@dataclass(frozen=True)
class BlockContext:
    """Instance data for a process run: n blocks of m bits and the outer bits."""

    n: int
    pair: DistributionPair
    z: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ParseError(f"block count must be >= 1, got {self.n}")
        if self.z is not None:
            if len(self.z) != self.n:
                raise ParseError(f"z must have length {self.n}, got {len(self.z)}")
            if any(b not in (0, 1) for b in self.z):
                raise ParseError("z must be a 0/1 sequence")

    @property
    def m(self) -> int:
        return self.pair.g.m

    @property
    def total_bits(self) -> int:
        return self.n * self.m

    def mu(self, b: int) -> InputDistribution:
        return self.pair.mu1 if b else self.pair.mu0


@dataclass(frozen=True)
class ProcessTranscript:
    """Record of a single run."""

    path: tuple[tuple[int, int], ...]  # (global variable, outcome) per step
    nq_final: tuple[bool, ...]
    conflict_counts: tuple[int, ...]
    z_queries: tuple[int, ...]
    total_block_queries: tuple[int, ...] | None
    output: int | str | None


# ---------------------------------------------------------------------------
# exact state sweep
# ---------------------------------------------------------------------------


def _block_var(var: int, m: int) -> tuple[int, int]:
    return var // m, var % m


def p_reach_probability_exact(
    tree: Tree, ctx: BlockContext
) -> dict[tuple[int, ...], Number]:
    """Exact probability that the process visits each node of the tree.

    Forward sweep over joint states (node, set of still-undecided blocks);
    the returned map is keyed by outcome path and holds the marginal reach
    probability of every node.  Exact when the pair is exact.
    """
    if ctx.z is None:
        raise ParseError("process needs the outer bits z")
    if ctx.n > STATE_SPACE_MAX_BLOCKS:
        raise BudgetError(
            f"state sweep is guarded to n <= {STATE_SPACE_MAX_BLOCKS} blocks"
        )
    validate(tree, ctx.total_bits)
    m = ctx.m
    out: dict[tuple[int, ...], Number] = {}

    def visit(
        node: Tree,
        path: tuple[int, ...],
        cubes: tuple[Subcube, ...],
        states: dict[frozenset[int], Number],
    ) -> None:
        out[path] = sum(states.values(), start=Fraction(0))
        if isinstance(node, Leaf):
            return
        i, j = _block_var(node.var, m)
        cube = cubes[i]
        pz: Number | None = None
        both: tuple[Number, Number] | None = None
        st0: dict[frozenset[int], Number] = {}
        st1: dict[frozenset[int], Number] = {}

        def add(d: dict, key: frozenset[int], p: Number) -> None:
            if p != 0:
                d[key] = d.get(key, Fraction(0)) + p

        for S, pr in states.items():
            if pr == 0:
                continue
            if pz is None:
                pz = marginal_bit(ctx.mu(ctx.z[i]), j, cube)
            if i in S:
                if both is None:
                    both = ctx.pair.marginals(cube, j)
                low, high = min(both), max(both)
                add(st0, S, pr * low)
                add(st1, S, pr * (1 - high))
                done = S - {i}
                add(st0, done, pr * (pz - low))
                add(st1, done, pr * (high - pz))
            else:
                add(st0, S, pr * pz)
                add(st1, S, pr * (1 - pz))

        for b, child, st in ((0, node.c0, st0), (1, node.c1, st1)):
            child_cubes = tuple(
                c.child(j, b) if k == i else c for k, c in enumerate(cubes)
            )
            visit(child, path + (b,), child_cubes, st)

    root_states = {frozenset(range(ctx.n)): Fraction(1)}
    visit(tree, (), tuple(Subcube.full(m) for _ in range(ctx.n)), root_states)
    return out


def gamma_reach_probability(
    tree: Tree, ctx: BlockContext
) -> dict[tuple[int, ...], Number]:
    """Reach probability of every node when blocks are drawn independently
    from the conditional matching their outer bit (the product law)."""
    if ctx.z is None:
        raise ParseError("product reach needs the outer bits z")
    validate(tree, ctx.total_bits)
    m = ctx.m
    out: dict[tuple[int, ...], Number] = {}

    def visit(node: Tree, path: tuple[int, ...], cubes: tuple[Subcube, ...], mass: Number) -> None:
        out[path] = mass
        if isinstance(node, Leaf):
            return
        i, j = _block_var(node.var, m)
        if mass == 0:
            # zero-mass subtrees still get entries, computed from scratch
            for b, child in ((0, node.c0), (1, node.c1)):
                child_cubes = tuple(
                    c.child(j, b) if k == i else c for k, c in enumerate(cubes)
                )
                visit(child, path + (b,), child_cubes, Fraction(0))
            return
        pz = marginal_bit(ctx.mu(ctx.z[i]), j, cubes[i])
        for b, child in ((0, node.c0), (1, node.c1)):
            child_cubes = tuple(
                c.child(j, b) if k == i else c for k, c in enumerate(cubes)
            )
            branch = pz if b == 0 else 1 - pz
            visit(child, path + (b,), child_cubes, mass * branch)

    visit(tree, (), tuple(Subcube.full(m) for _ in range(ctx.n)), Fraction(1))
    return out


def verify_reach_equivalence(
    tree: Tree, ctx: BlockContext, tol: Number = Fraction(1, 10**9)
) -> dict:
    """Compare the process reach law against the product law node by node."""
    process = p_reach_probability_exact(tree, ctx)
    product = gamma_reach_probability(tree, ctx)
    assert set(process) == set(product)
    max_disc = max(abs(process[p] - product[p]) for p in process)
    return {
        "nodes": len(process),
        "max_discrepancy": max_disc,
        "exact_zero": max_disc == 0,
        "pass": max_disc <= tol,
    }


# ---------------------------------------------------------------------------
# vectorized Monte Carlo engine
# ---------------------------------------------------------------------------


class _CompiledTree:
    """Array form of a block tree with per-node conditional probabilities.

    Nodes are preorder-indexed.  p0/p1 hold the branch-0 probability under
    each side's conditional on the node's block subcube, NaN where that
    conditional has no mass there (such nodes are unreachable in the state
    that would need the value; NaN comparisons then route harmlessly).
    """

    def __init__(self, tree: Tree, ctx: BlockContext):
        validate(tree, ctx.total_bits)
        m = ctx.m
        rows: list[tuple] = []  # (block, var, leaf, label, p0, p1)
        children: list[list[int]] = []
        per_block_max = [0] * ctx.n
        labels: list = []
        label_ids: dict = {}

        def prob(mu: InputDistribution, j: int, cube: Subcube) -> float:
            try:
                return float(marginal_bit(mu, j, cube))
            except ZeroMassError:
                return float("nan")

        def walk(node: Tree, cubes: tuple[Subcube, ...], counts: tuple[int, ...]) -> int:
            idx = len(rows)
            rows.append(None)
            children.append([-1, -1])
            if isinstance(node, Leaf):
                if node.label not in label_ids:
                    label_ids[node.label] = len(labels)
                    labels.append(node.label)
                rows[idx] = (0, -1, True, label_ids[node.label], np.nan, np.nan)
                for i in range(ctx.n):
                    per_block_max[i] = max(per_block_max[i], counts[i])
                return idx
            i, j = _block_var(node.var, m)
            p0 = prob(ctx.pair.mu0, j, cubes[i])
            p1 = prob(ctx.pair.mu1, j, cubes[i])
            rows[idx] = (i, node.var, False, -1, p0, p1)
            new_counts = tuple(
                c + 1 if k == i else c for k, c in enumerate(counts)
            )
            for b, child in ((0, node.c0), (1, node.c1)):
                child_cubes = tuple(
                    c.child(j, b) if k == i else c for k, c in enumerate(cubes)
                )
                children[idx][b] = walk(child, child_cubes, new_counts)
            return idx

        walk(tree, tuple(Subcube.full(m) for _ in range(ctx.n)), (0,) * ctx.n)

        self.n = ctx.n
        self.depth = tree_depth(tree)
        self.block = np.array([r[0] for r in rows], dtype=np.int32)
        self.var = np.array([r[1] for r in rows], dtype=np.int32)
        self.is_leaf = np.array([r[2] for r in rows], dtype=bool)
        self.label_idx = np.array([r[3] for r in rows], dtype=np.int32)
        self.p0 = np.array([r[4] for r in rows], dtype=np.float64)
        self.p1 = np.array([r[5] for r in rows], dtype=np.float64)
        with np.errstate(invalid="ignore"):
            self.pmin = np.minimum(self.p0, self.p1)
            self.pmax = np.maximum(self.p0, self.p1)
        self.c0 = np.array([c[0] for c in children], dtype=np.int32)
        self.c1 = np.array([c[1] for c in children], dtype=np.int32)
        self.labels = labels
        self.max_block_queries = max(per_block_max) if per_block_max else 0


def draw_array(seed: int, runs: int, blocks: int, draws: int) -> np.ndarray:
    """Uniform draws on (0,1), one counter-based stream per (run, block).

    Generated in one deterministic pass from a Philox generator keyed by
    the master seed; exact zeros are nudged to 2^-60 so a draw never ties
    the closed end of a branch interval.
    """
    gen = np.random.Generator(np.random.Philox(seed))
    u = gen.random((runs, blocks, max(draws, 1)))
    u[u == 0.0] = _MIN_DRAW
    return u


@dataclass
class BatchResult:
    """Arrays over runs from one batch of process simulations."""

    ctx: BlockContext
    runs: int
    conflict_counts: np.ndarray  # (runs, n) N_i
    query_counts: np.ndarray  # (runs, n) block queries in the tree walk
    nq_final: np.ndarray  # (runs, n) True where the block never conflicted
    conflict_steps: np.ndarray  # (runs, n) walk step of the conflict, -1 if none
    y: np.ndarray  # (runs,) number of conflicts = outer-bit queries
    leaf_nodes: np.ndarray  # (runs,)
    path_nodes: np.ndarray  # (runs, depth) visited internal nodes, -1 pad
    labels: list
    label_idx: np.ndarray  # (runs,) index into labels at the reached leaf
    zbits: np.ndarray  # (runs, n)
    phase2_counts: np.ndarray | None = None  # (runs, n) queries of the cleanup walks
    _compiled: _CompiledTree | None = None

    @property
    def outputs(self) -> list:
        return [self.labels[i] for i in self.label_idx]

    @property
    def x_blocks(self) -> np.ndarray:
        if self.phase2_counts is None:
            raise ParseError("total query counts exist only for the two-phase process")
        return self.query_counts + self.phase2_counts

    @property
    def x(self) -> np.ndarray:
        return self.x_blocks.sum(axis=1)

    def transcript(self, r: int) -> ProcessTranscript:
        comp = self._compiled
        steps = []
        for s in range(self.path_nodes.shape[1]):
            node = self.path_nodes[r, s]
            if node < 0:
                break
            nxt = self.path_nodes[r, s + 1] if s + 1 < self.path_nodes.shape[1] else -1
            if nxt < 0:
                nxt = self.leaf_nodes[r]
            out = 0 if comp.c0[node] == nxt else 1
            steps.append((int(comp.var[node]), int(out)))
        order = [
            int(i)
            for i in np.argsort(self.conflict_steps[r], kind="stable")
            if self.conflict_steps[r, i] >= 0
        ]
        total = None
        if self.phase2_counts is not None:
            total = tuple(int(v) for v in self.x_blocks[r])
        return ProcessTranscript(
            path=tuple(steps),
            nq_final=tuple(bool(v) for v in self.nq_final[r]),
            conflict_counts=tuple(int(v) for v in self.conflict_counts[r]),
            z_queries=tuple(order),
            total_block_queries=total,
            output=self.labels[self.label_idx[r]],
        )


def _walk_batch(
    comp: _CompiledTree,
    zbits: np.ndarray,
    U: np.ndarray,
    nq: np.ndarray,
    qcount: np.ndarray,
    N: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance every run through the tree; mutates nq/qcount/N in place."""
    runs = zbits.shape[0]
    cur = np.zeros(runs, dtype=np.int32)
    conflict_steps = np.full((runs, comp.n), -1, dtype=np.int32)
    path_nodes = np.full((runs, max(comp.depth, 1)), -1, dtype=np.int32)
    for step in range(comp.depth):
        active = ~comp.is_leaf[cur]
        if not active.any():
            break
        rows = np.nonzero(active)[0]
        node = cur[rows]
        path_nodes[rows, step] = node
        blk = comp.block[node]
        k = qcount[rows, blk]
        u = U[rows, blk, k]
        qcount[rows, blk] = k + 1
        z = zbits[rows, blk]
        pz = np.where(z == 0, comp.p0[node], comp.p1[node])
        pre = nq[rows, blk]
        with np.errstate(invalid="ignore"):
            go0_pre = pre & (u <= comp.pmin[node])
            go1_pre = pre & (u >= comp.pmax[node])
            conf = pre & ~go0_pre & ~go1_pre
            go0 = np.where(pre, go0_pre | (conf & (u <= pz)), u <= pz)
        N[rows, blk] += pre
        conflict_steps[rows[conf], blk[conf]] = step
        nq[rows[conf], blk[conf]] = False
        cur[rows] = np.where(go0, comp.c0[node], comp.c1[node])
    return cur, conflict_steps, path_nodes


def _cleanup_until_conflict(
    comp: _CompiledTree, U2: np.ndarray, nq: np.ndarray
) -> np.ndarray:
    """Fresh single-block walks until conflict for still-undecided blocks.

    The walk of a tree computing g conflicts before reaching a leaf with
    probability one; draws are strictly inside (0,1), so a leaf cannot be
    reached here and the loop bound is the tree depth.
    """
    runs, n = nq.shape
    counts = np.zeros((runs, n), dtype=np.int32)
    for i in range(n):
        rows = np.nonzero(nq[:, i])[0]
        if rows.size == 0:
            continue
        cur = np.zeros(rows.size, dtype=np.int32)
        live = np.ones(rows.size, dtype=bool)
        for step in range(comp.depth):
            if not live.any():
                break
            idx = np.nonzero(live)[0]
            node = cur[idx]
            if comp.is_leaf[node].any():
                raise QclabError("cleanup walk reached a leaf without conflicting")
            u = U2[rows[idx], i, step]
            with np.errstate(invalid="ignore"):
                go0 = u <= comp.pmin[node]
                go1 = u >= comp.pmax[node]
                conf = ~go0 & ~go1
            counts[rows[idx], i] += 1
            live[idx[conf]] = False
            walk_on = idx[~conf]
            node_on = cur[walk_on]
            u_on = u[~conf]
            cur[walk_on] = np.where(
                u_on <= comp.pmin[node_on], comp.c0[node_on], comp.c1[node_on]
            )
        if live.any():
            raise QclabError("cleanup walk failed to conflict within tree depth")
    return counts


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit argument, else QCLAB_WORKERS, else 1."""
    if workers is None:
        import os

        workers = int(os.environ.get("QCLAB_WORKERS", "1"))
    if workers < 1:
        raise ParseError(f"worker count must be >= 1, got {workers}")
    return workers


def simulate_batch(
    tree: Tree,
    ctx: BlockContext,
    zbits: np.ndarray,
    seed: int,
    cleanup_tree: Tree | None = None,
    workers: int | None = None,
) -> BatchResult:
    """Run the routing process for every row of zbits.

    With cleanup_tree given, blocks still undecided after the main walk
    are driven to a conflict on fresh walks of that tree (it must compute
    g) and total per-block query counts are recorded.  Runs are chunked
    across workers; every run consumes only its own rows of the draw
    array, so results are independent of the worker count.
    """
    runs = zbits.shape[0]
    workers = resolve_workers(workers)
    comp = _CompiledTree(tree, ctx)
    U = draw_array(seed, runs, ctx.n, comp.max_block_queries)
    nq = np.ones((runs, ctx.n), dtype=bool)
    qcount = np.zeros((runs, ctx.n), dtype=np.int32)
    N = np.zeros((runs, ctx.n), dtype=np.int32)
    leaf_nodes = np.zeros(runs, dtype=np.int32)
    conflict_steps = np.full((runs, ctx.n), -1, dtype=np.int32)
    path_nodes = np.full((runs, max(comp.depth, 1)), -1, dtype=np.int32)

    comp_b = None
    U2 = None
    phase2 = None
    if cleanup_tree is not None:
        ctx1 = BlockContext(1, ctx.pair, None)
        comp_b = _CompiledTree(cleanup_tree, ctx1)
        if not comp_b.depth:
            raise ParseError("cleanup tree must make at least one query")
        # the cleanup phase draws from its own stream, keyed off seed + 1
        U2 = draw_array(seed + 1, runs, ctx.n, comp_b.depth)
        phase2 = np.zeros((runs, ctx.n), dtype=np.int32)

    def run_chunk(lo: int, hi: int) -> None:
        sl = slice(lo, hi)
        leaf, confl, paths = _walk_batch(
            comp, zbits[sl], U[sl], nq[sl], qcount[sl], N[sl]
        )
        leaf_nodes[sl] = leaf
        conflict_steps[sl] = confl
        path_nodes[sl] = paths
        if comp_b is not None:
            phase2[sl] = _cleanup_until_conflict(comp_b, U2[sl], nq[sl].copy())

    if workers == 1 or runs < 2 * workers:
        run_chunk(0, runs)
    else:
        from concurrent.futures import ThreadPoolExecutor

        bounds = np.linspace(0, runs, workers + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(run_chunk, int(bounds[w]), int(bounds[w + 1]))
                for w in range(workers)
            ]
            for fut in futures:
                fut.result()

    y = (~nq).sum(axis=1).astype(np.int32)
    return BatchResult(
        ctx=ctx,
        runs=runs,
        conflict_counts=N,
        query_counts=qcount,
        nq_final=nq,
        conflict_steps=conflict_steps,
        y=y,
        leaf_nodes=leaf_nodes,
        path_nodes=path_nodes,
        labels=comp.labels,
        label_idx=comp.label_idx[leaf_nodes],
        zbits=zbits,
        phase2_counts=phase2,
        _compiled=comp,
    )


def _tile_z(ctx: BlockContext, runs: int) -> np.ndarray:
    if ctx.z is None:
        raise ParseError("simulation needs the outer bits z")
    return np.tile(np.array(ctx.z, dtype=np.int8), (runs, 1))


def simulate_p(
    tree: Tree, ctx: BlockContext, runs: int, seed: int, workers: int | None = None
) -> BatchResult:
    """Monte Carlo batch of the deferred-commit routing process."""
    return simulate_batch(tree, ctx, _tile_z(ctx, runs), seed, workers=workers)


def simulate_t(
    tree: Tree, ctx: BlockContext, runs: int, seed: int, workers: int | None = None
) -> BatchResult:
    """Same walk viewed as a query algorithm on z: each conflict reads one
    outer bit (y counts them) and the reached leaf's label is the output."""
    result = simulate_p(tree, ctx, runs, seed, workers=workers)
    if any(label is None for label in result.labels):
        raise ParseError("output simulation needs a fully labeled tree")
    return result


def simulate_q(
    tree: Tree,
    cleanup_tree: Tree,
    ctx: BlockContext,
    runs: int,
    seed: int,
    workers: int | None = None,
) -> BatchResult:
    """Main walk plus fresh conflict-forcing walks for undecided blocks."""
    from .dtree import computes

    if not computes(cleanup_tree, ctx.pair.g):
        raise ParseError("cleanup tree must compute g")
    return simulate_batch(
        tree, ctx, _tile_z(ctx, runs), seed, cleanup_tree=cleanup_tree, workers=workers
    )

"""Expected queries until the coupled routing process is forced to commit.

Given distributions mu0, mu1 supported on the two sides of a partial
function g, a tree that computes g is walked with branch probabilities
shared between the two conditionals; a step "conflicts" when the two
conditional branch probabilities disagree and the uniform draw lands
between them.  This module computes the expected number of queries until
conflict exactly for a fixed tree, minimizes it over trees by dynamic
programming on subcubes, and searches for distribution pairs that make
the minimum large.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .core import (
    InputDistribution,
    Number,
    PartialFn,
    Subcube,
    marginal_bit,
)
from .dtree import Leaf, Node, Tree, computes, depth
from .errors import ParseError, QclabError, TreeError, ZeroMassError


@dataclass(frozen=True)
class DistributionPair:
    """Distributions with disjoint supports inside the two preimages of g."""

    g: PartialFn
    mu0: InputDistribution
    mu1: InputDistribution

    def __post_init__(self) -> None:
        for b, mu in ((0, self.mu0), (1, self.mu1)):
            if mu.bits != self.g.m:
                raise ParseError(
                    f"mu{b} is over {mu.bits} bits but g has m={self.g.m}"
                )
            pre = set(self.g.preimage(b))
            if not pre:
                raise ParseError(f"g has no {b}-inputs; conflict pair undefined")
            outside = [x for x in mu.support() if x not in pre]
            if outside:
                raise ParseError(
                    f"mu{b} puts mass outside g^-1({b}), e.g. on input {outside[0]}"
                )

    def marginals(self, cube: Subcube, j: int) -> tuple[Number, Number]:
        """Branch-0 probabilities of both conditionals on the subcube."""
        try:
            p0 = marginal_bit(self.mu0, j, cube)
        except ZeroMassError as exc:
            raise ZeroMassError(f"0-side has no mass on {cube}") from exc
        try:
            p1 = marginal_bit(self.mu1, j, cube)
        except ZeroMassError as exc:
            raise ZeroMassError(f"1-side has no mass on {cube}") from exc
        return p0, p1


def anchor_pair(g: PartialFn) -> DistributionPair:
    """Uniform-on-each-preimage pair, the default starting point."""
    return DistributionPair(
        g,
        InputDistribution.uniform(g.m, g.preimage(0)),
        InputDistribution.uniform(g.m, g.preimage(1)),
    )


def delta_at(pair: DistributionPair, cube: Subcube, j: int) -> Number:
    """Absolute difference of the two conditional branch probabilities.

    Raises ZeroMassError when either conditional is undefined on the
    subcube; the terminated-branch convention (delta = 1) is applied by
    callers that walk whole trees.
    """
    p0, p1 = pair.marginals(cube, j)
    return abs(p0 - p1)


def expected_conflict_queries(tree: Tree, pair: DistributionPair) -> Number:
    """Exact expected number of queries until the walk conflicts.

    Forward sweep of the not-yet-conflicted mass: a node querying j with
    conditional branch-0 probabilities p0, p1 keeps min(p0, p1) of its
    mass on branch 0 and 1 - max(p0, p1) on branch 1, and the expectation
    is the total mass summed over internal nodes (the conflicting query
    itself is counted).
    """
    g = pair.g
    if not computes(tree, g):
        raise TreeError("tree does not compute g")
    total = Fraction(0)

    def sweep(node: Tree, cube: Subcube, mass: Number) -> None:
        nonlocal total
        if isinstance(node, Leaf) or mass == 0:
            return
        total += mass
        p0, p1 = pair.marginals(cube, node.var)
        low, high = min(p0, p1), max(p0, p1)
        if low > 0:
            sweep(node.c0, cube.child(node.var, 0), mass * low)
        if high < 1:
            sweep(node.c1, cube.child(node.var, 1), mass * (1 - high))

    sweep(tree, Subcube.full(g.m), Fraction(1))
    return total


@dataclass(frozen=True)
class ConflictResult:
    value: Number
    optimal_tree: Tree
    dp_table: dict[Subcube, tuple[Number, int]]


def _completion(g: PartialFn, cube: Subcube) -> Tree:
    """Any tree computing g on the subcube; used below conflict-certain nodes."""
    seen = g.values_on(cube.members())
    if len(seen) <= 1:
        return Leaf(next(iter(seen), 0))
    j = cube.free_vars()[0]
    return Node(j, _completion(g, cube.child(j, 0)), _completion(g, cube.child(j, 1)))


def chi_star(g: PartialFn, pair: DistributionPair) -> ConflictResult:
    """Minimum over trees computing g of the expected queries to conflict.

    Dynamic program on subcubes where both conditionals have positive
    mass: the value of a subcube is 1 plus the best mass-weighted value of
    the children, where a child's term is dropped when its coefficient is
    zero (the walk cannot reach it unconflicted).  Tie-break is the lowest
    variable index.  The extracted tree completes zero-coefficient
    branches with any subtree computing g, which leaves the value intact.
    """
    if pair.g != g:
        raise ParseError("pair was built for a different function")
    memo: dict[Subcube, tuple[Number, int]] = {}

    def solve(cube: Subcube) -> Number:
        if cube in memo:
            return memo[cube][0]
        free = cube.free_vars()
        if not free:
            raise QclabError(
                f"subcube {cube} has both-sided mass but no free variable"
            )
        best: Number | None = None
        best_var = -1
        for j in free:
            p0, p1 = pair.marginals(cube, j)
            low, high = min(p0, p1), max(p0, p1)
            val: Number = Fraction(1)
            if low > 0:
                val += low * solve(cube.child(j, 0))
            if high < 1:
                val += (1 - high) * solve(cube.child(j, 1))
            if best is None or val < best:
                best, best_var = val, j
        memo[cube] = (best, best_var)
        return best

    def extract(cube: Subcube) -> Tree:
        _, j = memo[cube]
        p0, p1 = pair.marginals(cube, j)
        low, high = min(p0, p1), max(p0, p1)
        c0 = extract(cube.child(j, 0)) if low > 0 else _completion(g, cube.child(j, 0))
        c1 = (
            extract(cube.child(j, 1))
            if high < 1
            else _completion(g, cube.child(j, 1))
        )
        return Node(j, c0, c1)

    root = Subcube.full(g.m)
    value = solve(root)
    tree = extract(root)
    return ConflictResult(value=value, optimal_tree=tree, dp_table=dict(memo))


def _random_rational_distribution(
    rng: np.random.Generator, bits: int, support: tuple[int, ...]
) -> InputDistribution:
    weights = {x: Fraction(int(rng.integers(1, 16))) for x in support}
    return InputDistribution.from_weights(bits, weights)


def chi_lower_bound_search(
    g: PartialFn,
    restarts: int = 64,
    max_passes: int = 20,
    seed: int = 0,
    callback: Callable[[int, Number], None] | None = None,
) -> tuple[DistributionPair, Number, list[tuple[int, str]]]:
    """Best distribution pair found by restarts plus coordinate ascent.

    Every candidate pair is rational and scored exactly, so the returned
    value is a certified lower bound on the max-min conflict complexity;
    the maximization itself is heuristic.  The uniform pair is always the
    first restart; ascent moves mass toward one atom at a time with a
    shrinking rational step.  History records (restart, value) improvements.
    """
    if not g.two_sided:
        raise ParseError("conflict complexity needs both function values present")
    pre0, pre1 = g.preimage(0), g.preimage(1)
    rng = np.random.default_rng(seed)
    steps = (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8), Fraction(1, 16))

    def score(pair: DistributionPair) -> Number:
        return chi_star(g, pair).value

    def ascend(pair: DistributionPair) -> tuple[DistributionPair, Number]:
        best = score(pair)
        for _ in range(max_passes):
            improved = False
            for side in (0, 1):
                support = pre1 if side else pre0
                for atom in support:
                    for step in steps:
                        mu = pair.mu1 if side else pair.mu0
                        mass = [p * (1 - step) for p in mu.mass]
                        mass[atom] += step
                        cand_mu = InputDistribution(mu.bits, tuple(mass))
                        cand = DistributionPair(
                            g,
                            cand_mu if side == 0 else pair.mu0,
                            cand_mu if side == 1 else pair.mu1,
                        )
                        val = score(cand)
                        if val > best:
                            best, pair, improved = val, cand, True
            if not improved:
                break
        return pair, best

    best_pair = anchor_pair(g)
    best_pair, best_value = ascend(best_pair)
    history: list[tuple[int, str]] = [(0, str(best_value))]
    if callback:
        callback(0, best_value)
    for r in range(1, restarts):
        start = DistributionPair(
            g,
            _random_rational_distribution(rng, g.m, pre0),
            _random_rational_distribution(rng, g.m, pre1),
        )
        pair, value = ascend(start)
        if value > best_value:
            best_pair, best_value = pair, value
            history.append((r, str(value)))
            if callback:
                callback(r, value)
    return best_pair, best_value, history

"""Seeded random instance generators for verification commands and tests.

Everything draws from a caller-supplied numpy Generator so instance
streams are reproducible from a master seed.  Distributions are always
rational (small integer weights) so downstream checks can be exact.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .conflict import DistributionPair
from .core import InputDistribution, PartialFn, Subcube
from .dtree import Tree, random_tree
from .process import BlockContext


def random_partial_fn(
    rng: np.random.Generator, m: int, undefined_prob: float = 0.2
) -> PartialFn:
    """Random two-sided partial function on m bits."""
    while True:
        vals = tuple(
            None if rng.random() < undefined_prob else int(rng.integers(2))
            for _ in range(1 << m)
        )
        try:
            fn = PartialFn(m, vals)
        except Exception:  # all-undefined table, resample
            continue
        if fn.two_sided:
            return fn


def random_rational_distribution(
    rng: np.random.Generator,
    bits: int,
    support: tuple[int, ...],
    max_weight: int = 9,
    keep_prob: float = 0.7,
) -> InputDistribution:
    """Random rational distribution on a random nonempty sub-support."""
    chosen = [x for x in support if rng.random() < keep_prob]
    if not chosen:
        chosen = [support[int(rng.integers(len(support)))]]
    weights = {x: Fraction(int(rng.integers(1, max_weight + 1))) for x in chosen}
    return InputDistribution.from_weights(bits, weights)


def random_pair(rng: np.random.Generator, g: PartialFn) -> DistributionPair:
    return DistributionPair(
        g,
        random_rational_distribution(rng, g.m, g.preimage(0)),
        random_rational_distribution(rng, g.m, g.preimage(1)),
    )


def random_valid_distribution(
    rng: np.random.Generator, g: PartialFn, max_weight: int = 9
) -> InputDistribution:
    """Random rational distribution on valid inputs with both values hit."""
    while True:
        mu = random_rational_distribution(rng, g.m, g.valid_inputs(), max_weight)
        values = {g.value(x) for x in mu.support()}
        if values == {0, 1}:
            return mu


def random_subcube_with_mass(
    rng: np.random.Generator, mu: InputDistribution, keep_free: int = 1
) -> Subcube:
    """Random subcube with positive mass and at least keep_free free bits,
    built by fixing a random prefix of the bits of a random support atom."""
    support = mu.support()
    atom = support[int(rng.integers(len(support)))]
    max_fixed = mu.bits - keep_free
    k = int(rng.integers(0, max_fixed + 1))
    vars_ = rng.permutation(mu.bits)[:k]
    cube = Subcube.full(mu.bits)
    for j in vars_:
        cube = cube.child(int(j), (atom >> (mu.bits - 1 - int(j))) & 1)
    return cube


def random_process_instance(
    rng: np.random.Generator,
    m_max: int = 3,
    n_max: int = 2,
    depth_max: int = 4,
) -> tuple[BlockContext, Tree]:
    """Random (context, unlabeled tree) for reach-equivalence checks."""
    m = int(rng.integers(1, m_max + 1))
    n = int(rng.integers(1, n_max + 1))
    g = random_partial_fn(rng, m)
    pair = random_pair(rng, g)
    z = tuple(int(b) for b in rng.integers(0, 2, size=n))
    tree = random_tree(rng, n * m, depth_max)
    return BlockContext(n, pair, z), tree

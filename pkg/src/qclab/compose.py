"""Relations, block composition, and end-to-end composition experiments.

A relation on n bits maps every input to a nonempty set of acceptable
output labels.  Composing it with an m-bit partial function g yields a
relation on n*m bits: an output is acceptable at x when some bit vector
b, blockwise consistent with g on x, makes it acceptable for the outer
relation.  Invalid g-inputs are consistent with both bits.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .conflict import DistributionPair, chi_star
from .core import InputDistribution, Number, PartialFn, bits_of_index, index_of_bits
from .dtree import Tree, depth as tree_depth, evaluate
from .errors import ParseError
from .process import BlockContext, simulate_batch

COMPOSED_BITS_GUARD = 16


@dataclass(frozen=True)
class Relation:
    """Total relation on {0,1}^n with opaque string output labels."""

    n: int
    outputs: tuple[frozenset[str], ...]

    def __post_init__(self) -> None:
        if len(self.outputs) != 1 << self.n:
            raise ParseError(
                f"relation needs {1 << self.n} output sets, got {len(self.outputs)}"
            )
        if any(not s for s in self.outputs):
            raise ParseError("every input needs at least one acceptable output")

    @classmethod
    def from_partial_fn(cls, fn: PartialFn) -> "Relation":
        """Function as a relation; undefined inputs accept both labels."""
        outs = tuple(
            frozenset({"0", "1"}) if v is None else frozenset({str(v)})
            for v in fn.values
        )
        return cls(fn.m, outs)

    def contains(self, z: int, s: str) -> bool:
        return s in self.outputs[z]

    def alphabet(self) -> frozenset[str]:
        return frozenset(itertools.chain.from_iterable(self.outputs))

    def to_json(self) -> dict:
        keys = {
            format(z, f"0{self.n}b"): sorted(self.outputs[z])
            for z in range(1 << self.n)
        }
        return {"n": self.n, "outputs": keys}

    @classmethod
    def from_json(cls, obj: dict) -> "Relation":
        if not isinstance(obj, dict) or "n" not in obj or "outputs" not in obj:
            raise ParseError("relation file must be an object with 'n' and 'outputs'")
        n = obj["n"]
        if not isinstance(n, int):
            raise ParseError(f"'n' must be an integer, got {n!r}")
        outs = [frozenset()] * (1 << n)
        for key, vals in obj["outputs"].items():
            if len(key) != n or any(c not in "01" for c in key):
                raise ParseError(f"output key must be an n-bit string: {key!r}")
            outs[int(key, 2)] = frozenset(str(v) for v in vals)
        return cls(n, tuple(outs))


def load_relation(source: Union[str, dict]) -> Relation:
    if isinstance(source, str):
        try:
            with open(source, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read relation file {source!r}: {exc}") from exc
    else:
        obj = source
    return Relation.from_json(obj)


@dataclass(frozen=True)
class ComposedRelation:
    """Blockwise composition of an outer relation with an inner function."""

    base: Relation
    inner: PartialFn
    n: int

    def __post_init__(self) -> None:
        if self.base.n != self.n:
            raise ParseError(
                f"outer relation is on {self.base.n} bits but arity is {self.n}"
            )

    @property
    def m(self) -> int:
        return self.inner.m

    @property
    def domain_bits(self) -> int:
        return self.n * self.m

    def blocks_of(self, x: int) -> tuple[int, ...]:
        """Split a composed input into its per-block m-bit values."""
        bits = bits_of_index(x, self.domain_bits)
        return tuple(
            index_of_bits(bits[i * self.m : (i + 1) * self.m]) for i in range(self.n)
        )

    def _allowed_bits(self, block_value: int) -> tuple[int, ...]:
        v = self.inner.value(block_value)
        return (0, 1) if v is None else (v,)

    def valid_outputs(self, x: int) -> frozenset[str]:
        """Union of outer outputs over the bit vectors consistent with x."""
        per_block = [self._allowed_bits(y) for y in self.blocks_of(x)]
        outs: set[str] = set()
        for bvec in itertools.product(*per_block):
            outs |= self.base.outputs[index_of_bits(bvec)]
        return frozenset(outs)

    def contains(self, x: int, s: str) -> bool:
        per_block = [self._allowed_bits(y) for y in self.blocks_of(x)]
        return any(
            s in self.base.outputs[index_of_bits(bvec)]
            for bvec in itertools.product(*per_block)
        )


def compose(f: Relation, g: PartialFn, n: int) -> ComposedRelation:
    """Composed relation on n*m bits; arity must match the outer relation."""
    if f.n != n:
        raise ParseError(f"arity mismatch: relation is on {f.n} bits, n={n}")
    if n * g.m > COMPOSED_BITS_GUARD:
        raise ParseError(
            f"composed domain of {n * g.m} bits exceeds the {COMPOSED_BITS_GUARD}-bit guard"
        )
    return ComposedRelation(base=f, inner=g, n=n)


def splice_blocks(blocks: tuple[int, ...], m: int) -> int:
    """Composed input index from per-block m-bit values."""
    bits: list[int] = []
    for y in blocks:
        bits.extend(bits_of_index(y, m))
    return index_of_bits(bits)


def sample_gamma(
    pair: DistributionPair,
    n: int,
    seed: int,
    runs: int = 1,
    z: tuple[int, ...] | None = None,
    eta: InputDistribution | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample (z, x) with blocks drawn independently from the conditional
    matching each outer bit; z is fixed or drawn from eta first.

    Returns (zbits, blocks): shape (runs, n) arrays of outer bits and of
    per-block atom indices.
    """
    if (z is None) == (eta is None):
        raise ParseError("provide exactly one of z or eta")
    rng = np.random.Generator(np.random.Philox(seed))
    if z is not None:
        zbits = np.tile(np.array(z, dtype=np.int8), (runs, 1))
    else:
        if eta.bits != n:
            raise ParseError(f"eta is over {eta.bits} bits, expected {n}")
        zmass = np.array([float(p) for p in eta.mass])
        zidx = rng.choice(len(zmass), size=runs, p=zmass / zmass.sum())
        zbits = np.array(
            [[(v >> (n - 1 - i)) & 1 for i in range(n)] for v in zidx], dtype=np.int8
        )
    cdf = [
        np.cumsum([float(p) for p in mu.mass])
        for mu in (pair.mu0, pair.mu1)
    ]
    u = rng.random((runs, n))
    blocks = np.empty((runs, n), dtype=np.int64)
    for b in (0, 1):
        mask = zbits == b
        blocks[mask] = np.searchsorted(cdf[b], u[mask], side="right")
    return zbits, blocks


def exact_success(
    composed: ComposedRelation, pair: DistributionPair, eta: InputDistribution, tree: Tree
) -> Number:
    """Probability that the tree's answer is acceptable when blocks are
    drawn from the conditionals of outer bits distributed as eta; exact."""
    if eta.bits != composed.n:
        raise ParseError(f"eta is over {eta.bits} bits, expected {composed.n}")
    total = Fraction(0)
    supports = (pair.mu0.support(), pair.mu1.support())
    for z in eta.support():
        zb = bits_of_index(z, composed.n)
        for blocks in itertools.product(*(supports[b] for b in zb)):
            mass = eta.mass[z]
            for i, y in enumerate(blocks):
                mass *= pair.mu1.mass[y] if zb[i] else pair.mu0.mass[y]
            x = splice_blocks(blocks, composed.m)
            _, label = evaluate(tree, x, composed.domain_bits)
            if label is not None and composed.contains(x, str(label)):
                total += mass
    return total


def composition_experiment(
    f: Relation,
    g: PartialFn,
    pair: DistributionPair,
    eta: InputDistribution,
    aprime: Tree,
    runs: int,
    seed: int,
    truncation_factor: int = 9,
    workers: int | None = None,
) -> dict:
    """End-to-end composition experiment.

    Reports the tree's worst-case query count t, the conflict cost d of
    the pair, the exact acceptable-answer probability of the tree under
    the block product law, Monte Carlo estimates of the outer algorithm's
    success and of its expected outer-bit queries, the bound check
    E[Y] <= t/d, and the success remaining after stopping the outer
    algorithm at ceil(truncation_factor * t / d) outer-bit queries
    (truncated runs count as failures).
    """
    composed = compose(f, g, f.n)
    if pair.g != g:
        raise ParseError("pair must be built for the inner function")
    t = tree_depth(aprime)
    d = chi_star(g, pair).value
    success_exact = exact_success(composed, pair, eta, aprime)
    warning = None
    if success_exact < Fraction(2, 3):
        warning = (
            f"tree succeeds with probability {success_exact} < 2/3; "
            "experiment runs anyway"
        )
    cap = math.ceil(Fraction(truncation_factor) * Fraction(t) / Fraction(d))

    rng = np.random.Generator(np.random.Philox(seed))
    zmass = np.array([float(p) for p in eta.mass])
    zidx = rng.choice(len(zmass), size=runs, p=zmass / zmass.sum())
    n = f.n
    zbits = ((zidx[:, None] >> (n - 1 - np.arange(n))) & 1).astype(np.int8)

    ctx = BlockContext(n, pair, None)
    batch = simulate_batch(aprime, ctx, zbits, seed, workers=workers)
    label_ok = np.array(
        [
            [
                label is not None and f.contains(z, str(label))
                for label in batch.labels
            ]
            for z in range(1 << n)
        ],
        dtype=bool,
    )
    success_runs = label_ok[zidx, batch.label_idx]
    truncated = batch.y > cap
    success_rate = success_runs.mean()
    success_se = success_runs.std(ddof=1) / math.sqrt(runs) if runs > 1 else 0.0
    y_mean = batch.y.mean()
    y_se = batch.y.std(ddof=1) / math.sqrt(runs) if runs > 1 else 0.0
    truncated_success = (success_runs & ~truncated).mean()
    bound = Fraction(t) / Fraction(d)
    return {
        "n": n,
        "m": g.m,
        "runs": runs,
        "seed": seed,
        "t": t,
        "d": d,
        "exact_tree_success": success_exact,
        "precondition_ok": success_exact >= Fraction(2, 3),
        "warning": warning,
        "mc_success": success_rate,
        "mc_success_se": success_se,
        "y_mean": y_mean,
        "y_se": y_se,
        "y_bound": bound,
        "y_bound_ok": y_mean <= float(bound) + 3 * y_se,
        "truncation_cap": cap,
        "truncated_fraction": truncated.mean(),
        "truncated_success": truncated_success,
        "per_run": {
            "y": batch.y,
            "success": success_runs,
            "truncated": truncated,
        },
    }

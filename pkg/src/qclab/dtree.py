"""Decision trees as explicit immutable binary trees.

Internal nodes query one variable and branch on the outcome; leaves carry
an optional output label (0/1 for Boolean functions, strings for relation
answers, None for pure query procedures).  Complexity is always counted in
queries, i.e. the number of internal nodes traversed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Hashable, Iterator, Union

import numpy as np

from .core import InputDistribution, Number, PartialFn, Subcube, bit_of
from .errors import BudgetError, ParseError, TreeError

Label = Union[int, str, None]


@dataclass(frozen=True)
class Leaf:
    label: Label = None


@dataclass(frozen=True)
class Node:
    var: int
    c0: "Tree"
    c1: "Tree"


Tree = Union[Leaf, Node]

ENUMERATION_BUDGET = 10**7


def is_leaf(tree: Tree) -> bool:
    return isinstance(tree, Leaf)


def depth(tree: Tree) -> int:
    """Maximum number of queries on any root-to-leaf path."""
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(depth(tree.c0), depth(tree.c1))


def validate(tree: Tree, m: int, _taken: frozenset[int] = frozenset()) -> None:
    """Check variable ranges and the no-repeat-along-a-path invariant."""
    if isinstance(tree, Leaf):
        return
    if not 0 <= tree.var < m:
        raise TreeError(f"queried variable {tree.var} out of range for m={m}")
    if tree.var in _taken:
        raise TreeError(f"variable {tree.var} queried twice along a path")
    taken = _taken | {tree.var}
    validate(tree.c0, m, taken)
    validate(tree.c1, m, taken)


def evaluate(tree: Tree, x: int, m: int) -> tuple[tuple[int, ...], Label]:
    """Follow the queries on input x; returns (outcome path, leaf label)."""
    path: list[int] = []
    node = tree
    while isinstance(node, Node):
        b = bit_of(x, node.var, m)
        path.append(b)
        node = node.c1 if b else node.c0
    return tuple(path), node.label


def computes(tree: Tree, g: PartialFn) -> bool:
    """True iff the tree outputs g(x) on every valid input x."""
    for x in g.valid_inputs():
        _, label = evaluate(tree, x, g.m)
        if label is None:
            raise TreeError("tree has an unlabeled leaf on a valid input")
        if label != g.value(x):
            return False
    return True


def nodes(tree: Tree) -> Iterator[tuple[tuple[int, ...], Tree]]:
    """Preorder traversal yielding (outcome path from root, node)."""
    stack: list[tuple[tuple[int, ...], Tree]] = [((), tree)]
    while stack:
        path, node = stack.pop()
        yield path, node
        if isinstance(node, Node):
            stack.append((path + (1,), node.c1))
            stack.append((path + (0,), node.c0))


def node_at(tree: Tree, path: tuple[int, ...]) -> Tree:
    node = tree
    for b in path:
        if isinstance(node, Leaf):
            raise TreeError(f"path {path} walks past a leaf")
        node = node.c1 if b else node.c0
    return node


def subcube_at(tree: Tree, path: tuple[int, ...], m: int) -> Subcube:
    """Subcube of inputs whose computation reaches the node at the path."""
    cube = Subcube.full(m)
    node = tree
    for b in path:
        if isinstance(node, Leaf):
            raise TreeError(f"path {path} walks past a leaf")
        cube = cube.child(node.var, b)
        node = node.c1 if b else node.c0
    return cube


def reach_probability(tree: Tree, mu: InputDistribution, path: tuple[int, ...]) -> Number:
    """Probability that the computation on x ~ mu reaches the node."""
    return mu.prob(subcube_at(tree, path, mu.bits))


def count_canonical_trees(free: int, cap: int) -> int:
    """Number of canonical labeled trees on `free` variables, depth <= cap.

    Canonical means no repeated variable on a path and no node whose two
    child subtrees are structurally identical.
    """
    if cap <= 0 or free <= 0:
        return 2
    below = count_canonical_trees(free - 1, cap - 1)
    return 2 + free * below * (below - 1)


def enumerate_trees(
    m: int,
    depth_cap: int,
    g: PartialFn | None = None,
    budget: int = ENUMERATION_BUDGET,
) -> Iterator[Tree]:
    """Stream every canonical labeled tree on m variables, depth <= cap.

    When g is given, only trees computing g are produced (generation is
    pruned on subcubes rather than post-filtered, which is equivalent).
    The unfiltered canonical count is checked against the budget first.
    """
    projected = count_canonical_trees(m, depth_cap)
    if projected > budget:
        raise BudgetError(
            f"enumeration of ~{projected} trees exceeds the budget of {budget}"
        )

    def gen(cube: Subcube, cap: int) -> Iterator[Tree]:
        if g is None:
            allowed_leaves = (0, 1)
        else:
            seen = g.values_on(cube.members())
            allowed_leaves = tuple(b for b in (0, 1) if seen <= {b})
        for b in allowed_leaves:
            yield Leaf(b)
        if cap <= 0:
            return
        for j in cube.free_vars():
            for c0 in gen(cube.child(j, 0), cap - 1):
                for c1 in gen(cube.child(j, 1), cap - 1):
                    if c0 != c1:
                        yield Node(j, c0, c1)

    return gen(Subcube.full(m), depth_cap)


def full_tree(m: int, labeler: Callable[[int], Hashable], order: tuple[int, ...] | None = None) -> Tree:
    """Complete depth-m tree querying every variable, leaves labeled per input."""
    if order is None:
        order = tuple(range(m))
    if sorted(order) != list(range(m)):
        raise ParseError(f"order must be a permutation of 0..{m - 1}")

    def build(cube: Subcube, level: int) -> Tree:
        if level == m:
            (x,) = cube.members()
            return Leaf(labeler(x))
        j = order[level]
        return Node(j, build(cube.child(j, 0), level + 1), build(cube.child(j, 1), level + 1))

    return build(Subcube.full(m), 0)


def full_tree_for_fn(g: PartialFn, order: tuple[int, ...] | None = None) -> Tree:
    """Complete tree computing g; undefined inputs get label 0."""
    return full_tree(g.m, lambda x: g.value(x) if g.value(x) is not None else 0, order)


def random_tree(
    rng: np.random.Generator,
    m: int,
    max_depth: int,
    leaf_prob: float = 0.3,
    labels: tuple[Label, ...] | None = None,
) -> Tree:
    """Random no-repeat tree, used by randomized verification commands.

    With labels=None the leaves are unlabeled (a pure query procedure).
    The root is never a leaf so every tree makes at least one query.
    """

    def gen(free: tuple[int, ...], cap: int, at_root: bool) -> Tree:
        if not free or cap == 0 or (not at_root and rng.random() < leaf_prob):
            label = None if labels is None else labels[rng.integers(len(labels))]
            return Leaf(label)
        j = free[rng.integers(len(free))]
        rest = tuple(v for v in free if v != j)
        return Node(j, gen(rest, cap - 1, False), gen(rest, cap - 1, False))

    return gen(tuple(range(m)), max_depth, True)


def tree_to_json(tree: Tree) -> dict:
    if isinstance(tree, Leaf):
        return {"leaf": tree.label}
    return {"query": tree.var, "c0": tree_to_json(tree.c0), "c1": tree_to_json(tree.c1)}


def tree_from_json(obj: dict) -> Tree:
    if not isinstance(obj, dict):
        raise ParseError(f"tree node must be an object, got {obj!r}")
    if "leaf" in obj:
        label = obj["leaf"]
        if label is not None and not isinstance(label, (int, str)):
            raise ParseError(f"leaf label must be 0/1, a string, or null: {label!r}")
        return Leaf(label)
    if "query" in obj:
        if not isinstance(obj["query"], int):
            raise ParseError(f"'query' must be a variable index: {obj['query']!r}")
        if "c0" not in obj or "c1" not in obj:
            raise ParseError("internal tree node needs 'c0' and 'c1'")
        return Node(obj["query"], tree_from_json(obj["c0"]), tree_from_json(obj["c1"]))
    raise ParseError(f"tree node needs 'leaf' or 'query': {obj!r}")


def load_tree(source: Union[str, dict], m: int | None = None) -> Tree:
    if isinstance(source, str):
        try:
            with open(source, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read tree file {source!r}: {exc}") from exc
    else:
        obj = source
    tree = tree_from_json(obj)
    if m is not None:
        validate(tree, m)
    return tree

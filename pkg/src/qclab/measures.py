"""Distributional and randomized query complexity on explicit truth tables.

The distributional side is a memoized dynamic program over subcubes; the
randomized side solves the associated zero-sum game either exactly over
all canonical trees (full-lp) or by best-response column generation
(double-oracle).  Exact arithmetic throughout when the inputs are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .core import InputDistribution, Number, PartialFn, Subcube
from .dtree import Leaf, Node, Tree, count_canonical_trees, enumerate_trees, evaluate
from .errors import BudgetError, ConvergenceError, ParseError
from .games import solve_matrix_game

FULL_LP_TREE_GUARD = 5000
DOUBLE_ORACLE_MAX_BITS = 4
DOUBLE_ORACLE_ITERATION_CAP = 1000


def _wrong_masses(g: PartialFn, mu: InputDistribution, cube: Subcube) -> tuple[Number, Number]:
    """Unnormalized error mass of guessing 0 resp. 1 on the subcube."""
    wrong0 = Fraction(0)
    wrong1 = Fraction(0)
    for x in cube.members():
        v = g.value(x)
        if v == 1:
            wrong0 += mu.mass[x]
        elif v == 0:
            wrong1 += mu.mass[x]
    return wrong0, wrong1


def dist_error_tree(
    g: PartialFn, mu: InputDistribution, k: int
) -> tuple[Number, Tree]:
    """Minimum error achievable by a deterministic tree of <= k queries.

    Returns (error, argmin tree).  Ties prefer stopping over querying,
    then the lowest variable index; leaf guesses tie toward 0.  Zero-mass
    branches contribute zero error.
    """
    if k < 0:
        raise ParseError(f"depth budget must be >= 0, got {k}")
    memo: dict[tuple[Subcube, int], tuple[Number, Tree]] = {}

    def solve(cube: Subcube, budget: int) -> tuple[Number, Tree]:
        key = (cube, budget)
        if key in memo:
            return memo[key]
        wrong0, wrong1 = _wrong_masses(g, mu, cube)
        best: Number = wrong1 if wrong1 < wrong0 else wrong0
        best_tree: Tree = Leaf(0 if wrong0 <= wrong1 else 1)
        if budget > 0 and best > 0:
            for j in cube.free_vars():
                e0, t0 = solve(cube.child(j, 0), budget - 1)
                e1, t1 = solve(cube.child(j, 1), budget - 1)
                if e0 + e1 < best:
                    best = e0 + e1
                    best_tree = Node(j, t0, t1)
        memo[key] = (best, best_tree)
        return best, best_tree

    return solve(Subcube.full(g.m), k)


def dist_error_dp(g: PartialFn, mu: InputDistribution, k: int) -> Number:
    """Minimum error under mu of any deterministic tree of <= k queries."""
    return dist_error_tree(g, mu, k)[0]


def dist_complexity(g: PartialFn, mu: InputDistribution, eps: Number) -> int:
    """Smallest depth budget whose best achievable error is <= eps."""
    if not 0 <= eps < Fraction(1, 2):
        raise ParseError(f"error threshold must be in [0, 1/2), got {eps}")
    for k in range(g.m + 1):
        if dist_error_dp(g, mu, k) <= eps:
            return k
    raise AssertionError("full tree should reach error 0")  # pragma: no cover


def zero_error_depth(g: PartialFn) -> int:
    """Worst-case queries of the best deterministic tree computing g."""
    memo: dict[Subcube, int] = {}

    def solve(cube: Subcube) -> int:
        if cube in memo:
            return memo[cube]
        if len(g.values_on(cube.members())) <= 1:
            memo[cube] = 0
            return 0
        best = min(
            1 + max(solve(cube.child(j, 0)), solve(cube.child(j, 1)))
            for j in cube.free_vars()
        )
        memo[cube] = best
        return best

    return solve(Subcube.full(g.m))


def majority_amplify(err: Number, k: int) -> Number:
    """Failure probability of a k-wise majority vote of independent trials."""
    if k % 2 != 1 or k < 1:
        raise ParseError(f"repetition count must be odd and positive, got {k}")
    if not 0 <= err < Fraction(1, 2):
        raise ParseError(f"error must be in [0, 1/2), got {err}")
    need = k // 2 + 1
    one = Fraction(1) if isinstance(err, (Fraction, int)) else 1.0
    return sum(
        math.comb(k, i) * err**i * (one - err) ** (k - i) for i in range(need, k + 1)
    )


@dataclass(frozen=True)
class GameSolution:
    """Solution of the error game at one depth budget.

    value is the least worst-case error any depth-budgeted randomized
    algorithm can guarantee; algorithm is its probability-weighted tree
    mixture and certificate the hardest input distribution found.
    """

    depth_budget: int
    value: Number
    algorithm: tuple[tuple[Number, Tree], ...]
    certificate: InputDistribution
    gap: Number
    iterations: int
    method: str


def _error_entry(tree: Tree, g: PartialFn, x: int) -> Fraction:
    _, label = evaluate(tree, x, g.m)
    return Fraction(0) if label == g.value(x) else Fraction(1)


def _certificate_distribution(
    g: PartialFn, valid: tuple[int, ...], weights: tuple[Fraction, ...]
) -> InputDistribution:
    mass = [Fraction(0)] * (1 << g.m)
    for x, w in zip(valid, weights):
        mass[x] = w
    return InputDistribution(g.m, tuple(mass))


def _solve_full_lp(g: PartialFn, k: int) -> GameSolution:
    projected = count_canonical_trees(g.m, k)
    if projected > FULL_LP_TREE_GUARD:
        raise BudgetError(
            f"full-lp would enumerate ~{projected} trees (> {FULL_LP_TREE_GUARD}); "
            "use the double-oracle method"
        )
    trees = list(enumerate_trees(g.m, k))
    valid = g.valid_inputs()
    matrix = [[_error_entry(t, g, x) for x in valid] for t in trees]
    sol = solve_matrix_game(matrix)
    algorithm = tuple(
        (p, t) for p, t in zip(sol.row_strategy, trees) if p > 0
    )
    certificate = _certificate_distribution(g, valid, sol.col_strategy)
    return GameSolution(
        depth_budget=k,
        value=sol.value,
        algorithm=algorithm,
        certificate=certificate,
        gap=Fraction(0),
        iterations=1,
        method="full-lp",
    )


def _solve_double_oracle(g: PartialFn, k: int, tol: Number = Fraction(0)) -> GameSolution:
    if g.m > DOUBLE_ORACLE_MAX_BITS:
        raise BudgetError(
            f"double-oracle is guarded to m <= {DOUBLE_ORACLE_MAX_BITS}, got m={g.m}"
        )
    valid = g.valid_inputs()
    pool: list[Tree] = [Leaf(0), Leaf(1)]
    for iteration in range(1, DOUBLE_ORACLE_ITERATION_CAP + 1):
        matrix = [[_error_entry(t, g, x) for x in valid] for t in pool]
        sol = solve_matrix_game(matrix)
        certificate = _certificate_distribution(g, valid, sol.col_strategy)
        lower, reply = dist_error_tree(g, certificate, k)
        gap = sol.value - lower
        if gap <= tol:
            algorithm = tuple(
                (p, t) for p, t in zip(sol.row_strategy, pool) if p > 0
            )
            return GameSolution(
                depth_budget=k,
                value=sol.value,
                algorithm=algorithm,
                certificate=certificate,
                gap=gap,
                iterations=iteration,
                method="double-oracle",
            )
        pool.append(reply)
    raise ConvergenceError(
        f"double-oracle did not converge in {DOUBLE_ORACLE_ITERATION_CAP} iterations "
        f"(last gap {gap})"
    )


def game_solution(g: PartialFn, k: int, method: str = "full-lp") -> GameSolution:
    """Solve the depth-k error game for g with the requested method."""
    if method == "full-lp":
        return _solve_full_lp(g, k)
    if method == "double-oracle":
        return _solve_double_oracle(g, k)
    raise ParseError(f"unknown game method {method!r}")


def randomized_complexity(
    g: PartialFn, eps: Number, method: str = "full-lp"
) -> tuple[int, dict[int, GameSolution]]:
    """Smallest depth whose game value is <= eps, with per-depth solutions.

    The game value at depth k is the best guaranteed error of any
    randomized algorithm making at most k queries, so the returned depth
    is the randomized query complexity at error eps for this truth table.
    """
    if not 0 <= eps < Fraction(1, 2):
        raise ParseError(f"error threshold must be in [0, 1/2), got {eps}")
    solutions: dict[int, GameSolution] = {}
    for k in range(g.m + 1):
        sol = game_solution(g, k, method)
        solutions[k] = sol
        if sol.value <= eps:
            return k, solutions
    raise AssertionError("game value must reach 0 at full depth")  # pragma: no cover

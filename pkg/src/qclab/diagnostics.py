"""Information-theoretic checks and the truncate-and-guess construction.

Probabilities are exact rationals; entropies and mutual information are
evaluated in floats from those exact probabilities (nats internally, bits
on display).  The per-query information bound is checked with a default
constant of 8 in nats, which is what Pinsker's inequality yields for the
four-cell L1 decomposition here; the stronger constant 32 sometimes
quoted for this bound is evaluated and reported but never asserted, since
it fails at a balanced fully-revealing vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from .conflict import DistributionPair, chi_star
from .core import InputDistribution, Number, PartialFn, Subcube, bit_of, split_by_value
from .dtree import Leaf, Node, Tree, computes, depth as tree_depth
from .errors import ParseError, TreeError, ZeroMassError

BALANCE_THRESHOLD = Fraction(1, 9)
_MI_TOL = 1e-12


def _cells(
    g: PartialFn, mu: InputDistribution, cube: Subcube, j: int
) -> tuple[dict[tuple[int, int], Number], Number]:
    """Joint masses of (function value, bit j) on the subcube, valid inputs only."""
    cells: dict[tuple[int, int], Number] = {
        (0, 0): Fraction(0),
        (0, 1): Fraction(0),
        (1, 0): Fraction(0),
        (1, 1): Fraction(0),
    }
    total = Fraction(0)
    for x in cube.members():
        v = g.value(x)
        if v is None:
            continue
        p = mu.mass[x]
        cells[(v, bit_of(x, j, g.m))] += p
        total += p
    return cells, total


def mutual_information_nats(joint: dict[tuple[int, int], Number]) -> float:
    """MI of a finite pair distribution given by exact joint probabilities."""
    pa: dict[int, float] = {}
    pb: dict[int, float] = {}
    for (a, b), p in joint.items():
        pa[a] = pa.get(a, 0.0) + float(p)
        pb[b] = pb.get(b, 0.0) + float(p)
    total = 0.0
    for (a, b), p in joint.items():
        fp = float(p)
        if fp > 0:
            total += fp * math.log(fp / (pa[a] * pb[b]))
    return max(total, 0.0)


@dataclass(frozen=True)
class InfoReport:
    mi_nats: float
    mi_bits: float
    balance: Number
    delta: Number
    constant: Number
    rhs: float
    holds: bool
    constant_alt: Number
    rhs_alt: float
    holds_alt: bool


def info_bound_check(
    g: PartialFn,
    mu: InputDistribution,
    cube: Subcube,
    j: int,
    c: Number = Fraction(8),
    c_alt: Number = Fraction(32),
) -> InfoReport:
    """Check MI(g(x); x_j) >= c * (balance * delta)^2 on the subcube.

    balance is the product of the two conditional function-value
    probabilities; delta the gap between the branch probabilities of the
    value-conditioned distributions.  One-sided subcubes have balance 0,
    so the bound holds trivially (delta reports 1, the decided-vertex
    convention).
    """
    cells, total = _cells(g, mu, cube, j)
    if total == 0:
        raise ZeroMassError("subcube has no valid mass under the distribution")
    mass0 = cells[(0, 0)] + cells[(0, 1)]
    mass1 = cells[(1, 0)] + cells[(1, 1)]
    p0 = mass0 / total
    p1 = mass1 / total
    balance = p0 * p1
    if mass0 == 0 or mass1 == 0:
        delta: Number = Fraction(1)
        mi = 0.0
    else:
        delta = abs(cells[(0, 0)] / mass0 - cells[(1, 0)] / mass1)
        joint = {k: v / total for k, v in cells.items()}
        mi = mutual_information_nats(joint)
    rhs = float(c) * float(balance * delta) ** 2
    rhs_alt = float(c_alt) * float(balance * delta) ** 2
    return InfoReport(
        mi_nats=mi,
        mi_bits=mi / math.log(2),
        balance=balance,
        delta=delta,
        constant=c,
        rhs=rhs,
        holds=mi >= rhs - _MI_TOL,
        constant_alt=c_alt,
        rhs_alt=rhs_alt,
        holds_alt=mi >= rhs_alt - _MI_TOL,
    )


@dataclass(frozen=True)
class PathRecord:
    """One root-to-leaf path of a tree run: outcomes, nodes, and mass."""

    outcomes: tuple[int, ...]
    vars: tuple[int, ...]
    subcubes: tuple[Subcube, ...]  # length len(outcomes) + 1, root first
    label: int | str | None
    mass: Number

    @property
    def query_count(self) -> int:
        return len(self.outcomes)


def _paths(tree: Tree, mu: InputDistribution) -> list[PathRecord]:
    records: list[PathRecord] = []

    def walk(node: Tree, outcomes: tuple[int, ...], vars_: tuple[int, ...], cubes: tuple[Subcube, ...]) -> None:
        if isinstance(node, Leaf):
            records.append(
                PathRecord(outcomes, vars_, cubes, node.label, mu.prob(cubes[-1]))
            )
            return
        for b, child in ((0, node.c0), (1, node.c1)):
            walk(
                child,
                outcomes + (b,),
                vars_ + (node.var,),
                cubes + (cubes[-1].child(node.var, b),),
            )

    walk(tree, (), (), (Subcube.full(mu.bits),))
    return records


def _balance(g: PartialFn, mu: InputDistribution, cube: Subcube) -> Number:
    mass0 = sum((mu.mass[x] for x in cube.members() if g.value(x) == 0), start=Fraction(0))
    mass1 = sum((mu.mass[x] for x in cube.members() if g.value(x) == 1), start=Fraction(0))
    total = mass0 + mass1
    if total == 0:
        return Fraction(0)
    return (mass0 / total) * (mass1 / total)


def _delta_or_decided(pair: DistributionPair, cube: Subcube, j: int) -> Number:
    """Branch-probability gap, or 1 when either conditional has no mass
    (the vertex is decided; same convention as a terminated branch)."""
    try:
        p0, p1 = pair.marginals(cube, j)
    except ZeroMassError:
        return Fraction(1)
    return abs(p0 - p1)


def make_unbiased_running_filter(
    g: PartialFn,
    mu: InputDistribution,
    budget: int,
    threshold: Number = BALANCE_THRESHOLD,
) -> Callable[[PathRecord], bool]:
    """Filter keeping runs that neither stop nor reach a low-balance vertex
    within the query budget (the complement of the stop/biased events)."""

    def accept(record: PathRecord) -> bool:
        if record.query_count <= budget:
            return False
        for cube in record.subcubes[: budget + 1]:
            if _balance(g, mu, cube) <= threshold:
                return False
        return True

    return accept


def delta_sum_profile(
    tree: Tree,
    g: PartialFn,
    mu: InputDistribution,
    horizon: int,
    event_filter: Callable[[PathRecord], bool] | None = None,
    d: Number | None = None,
) -> dict:
    """Per-step expectations of the branch-probability gap along a run.

    Step t reports E[delta at the vertex making the t-th query | filter],
    with delta = 1 for runs already terminated (and at decided vertices).
    When the per-pair conflict cost d is supplied, partial sums are
    checked against the thresholds 13i/20 at steps ceil(10*d*i).
    """
    if not computes(tree, g):
        raise TreeError("tree does not compute g")
    if horizon < 1:
        raise ParseError(f"horizon must be >= 1, got {horizon}")
    mu0, mu1 = split_by_value(mu, g)
    pair = DistributionPair(g, mu0, mu1)
    records = _paths(tree, mu)
    accepted = [r for r in records if event_filter is None or event_filter(r)]
    filter_mass = sum((r.mass for r in accepted), start=Fraction(0))
    if filter_mass == 0:
        raise ZeroMassError("event filter has zero probability")
    delta_cache: dict[tuple[Subcube, int], Number] = {}

    def delta_at_vertex(cube: Subcube, j: int) -> Number:
        key = (cube, j)
        if key not in delta_cache:
            delta_cache[key] = _delta_or_decided(pair, cube, j)
        return delta_cache[key]

    profile: list[Number] = []
    for t in range(1, horizon + 1):
        acc = Fraction(0)
        for r in accepted:
            if r.mass == 0:
                continue
            if t <= r.query_count:
                acc += r.mass * delta_at_vertex(r.subcubes[t - 1], r.vars[t - 1])
            else:
                acc += r.mass  # terminated: delta = 1
        profile.append(acc / filter_mass)
    partial_sums: list[Number] = []
    acc = Fraction(0)
    for v in profile:
        acc += v
        partial_sums.append(acc)
    thresholds = []
    if d is not None:
        i = 1
        while True:
            step = math.ceil(10 * Fraction(d) * i)
            if step > horizon:
                break
            thresholds.append(
                {
                    "i": i,
                    "step": step,
                    "partial_sum": partial_sums[step - 1],
                    "required": Fraction(13 * i, 20),
                    "holds": partial_sums[step - 1] >= Fraction(13 * i, 20),
                }
            )
            i += 1
    return {
        "horizon": horizon,
        "profile": profile,
        "partial_sums": partial_sums,
        "filter_probability": filter_mass,
        "hypothesis_met": filter_mass >= Fraction(3, 4),
        "thresholds": thresholds,
    }


@dataclass(frozen=True)
class TruncationReport:
    budget: int
    stop_mass: Number  # runs ending at a natural leaf within the budget
    budget_mass: Number  # runs cut off at the budget
    biased_fraction: Number  # mass reaching a low-balance vertex within budget
    error: Number
    depth: int


def default_truncation_budget(d: Number) -> int:
    """Query budget ceil(10 * d^2) used by the truncate-and-guess tree."""
    return math.ceil(10 * Fraction(d) * Fraction(d))


def truncate_and_guess(
    g: PartialFn, mu: InputDistribution, budget: int
) -> tuple[Tree, TruncationReport]:
    """Budgeted tree: walk the conflict-optimal tree for mu's value split,
    stop at a natural leaf or after the budget, then output the likelier
    function value on the current subcube.  Error is computed exactly.
    """
    if budget < 0:
        raise ParseError(f"budget must be >= 0, got {budget}")
    mu0, mu1 = split_by_value(mu, g)
    pair = DistributionPair(g, mu0, mu1)
    base = chi_star(g, pair).optimal_tree

    stop_mass = Fraction(0)
    budget_mass = Fraction(0)
    error = Fraction(0)

    def wrong_mass(cube: Subcube, guess: int) -> Number:
        return sum(
            (mu.mass[x] for x in cube.members() if g.value(x) == 1 - guess),
            start=Fraction(0),
        )

    def build(node: Tree, cube: Subcube, used: int) -> Tree:
        nonlocal stop_mass, budget_mass, error
        if isinstance(node, Leaf):
            stop_mass += mu.prob(cube)
            error += wrong_mass(cube, node.label if node.label in (0, 1) else 0)
            return node
        if used == budget:
            w0 = wrong_mass(cube, 0)
            w1 = wrong_mass(cube, 1)
            guess = 0 if w0 <= w1 else 1
            budget_mass += mu.prob(cube)
            error += min(w0, w1)
            return Leaf(guess)
        return Node(
            node.var,
            build(node.c0, cube.child(node.var, 0), used + 1),
            build(node.c1, cube.child(node.var, 1), used + 1),
        )

    truncated = build(base, Subcube.full(g.m), 0)

    biased = Fraction(0)

    def first_hit(node: Tree, cube: Subcube, used: int) -> None:
        nonlocal biased
        mass = mu.prob(cube)
        if mass == 0:
            return
        if _balance(g, mu, cube) <= BALANCE_THRESHOLD:
            biased += mass
            return
        if isinstance(node, Leaf) or used == budget:
            return
        first_hit(node.c0, cube.child(node.var, 0), used + 1)
        first_hit(node.c1, cube.child(node.var, 1), used + 1)

    first_hit(base, Subcube.full(g.m), 0)

    report = TruncationReport(
        budget=budget,
        stop_mass=stop_mass,
        budget_mass=budget_mass,
        biased_fraction=biased,
        error=error,
        depth=tree_depth(truncated),
    )
    return truncated, report


def transcript_information(
    tree: Tree, g: PartialFn, mu: InputDistribution, horizon: int
) -> tuple[list[float], float]:
    """Stepwise conditional MI of query answers about the function value,
    and the direct MI of the horizon-truncated transcript; the two agree
    by the chain rule, which makes a good consistency check."""
    records = _paths(tree, mu)
    steps: list[float] = []
    for t in range(1, horizon + 1):
        seen: set[Subcube] = set()
        acc = 0.0
        for r in records:
            if t <= r.query_count:
                cube = r.subcubes[t - 1]
                if cube in seen:
                    continue
                seen.add(cube)
                mass = mu.prob(cube)
                if mass == 0:
                    continue
                cells, total = _cells(g, mu, cube, r.vars[t - 1])
                if total == 0:
                    continue
                joint = {k: v / total for k, v in cells.items()}
                acc += float(mass) * mutual_information_nats(joint)
        steps.append(acc)
    # direct MI between the truncated transcript and the value; distinct
    # nodes of a no-repeat tree have distinct subcubes, so the subcube
    # reached after min(horizon, path length) queries identifies the
    # truncated transcript
    cut_cubes = {r.subcubes[min(horizon, r.query_count)] for r in records}
    joint: dict[tuple[int, int], Number] = {}
    for idx, cube in enumerate(sorted(cut_cubes, key=lambda c: c.fixed)):
        for x in cube.members():
            v = g.value(x)
            if v is None:
                continue
            key = (idx, v)
            joint[key] = joint.get(key, Fraction(0)) + mu.mass[x]
    direct = mutual_information_nats(joint)
    return steps, direct

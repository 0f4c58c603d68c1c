"""Evaluation of closed distribution terms into finite-support rational
distributions over closed state terms.

A `Distribution` never stores zero-probability entries, so structural
equality is canonical.  Sub-distributions (total mass < 1) reuse the same
type; the missing mass is the implicit bottom element used by schedulers.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import product
from typing import Iterable, Iterator

from .terms import (
    Apply,
    Convex,
    Dirac,
    DistVar,
    Sort,
    StateVar,
    Term,
    is_closed,
    render_term,
)


class EvalError(Exception):
    """A distribution term cannot be evaluated (open, ill-sorted, ...)."""


class Distribution:
    """Finite-support map from closed state terms to positive rationals."""

    __slots__ = ("_items", "_table", "_total")

    def __init__(self, items: Iterable[tuple[Term, Fraction]]):
        table: dict[Term, Fraction] = {}
        for term, p in items:
            p = Fraction(p)
            if p < 0:
                raise EvalError(f"negative probability {p} for {render_term(term)}")
            if p == 0:
                continue
            table[term] = table.get(term, Fraction(0)) + p
        total = sum(table.values(), Fraction(0))
        if total > 1:
            raise EvalError(f"total mass {total} exceeds 1")
        self._table = table
        self._items = tuple(sorted(table.items(), key=lambda kv: render_term(kv[0])))
        self._total = total

    @staticmethod
    def dirac(term: Term) -> "Distribution":
        return Distribution([(term, Fraction(1))])

    @property
    def support(self) -> tuple[Term, ...]:
        return tuple(t for t, _ in self._items)

    @property
    def total_mass(self) -> Fraction:
        return self._total

    @property
    def is_full(self) -> bool:
        return self._total == 1

    def items(self) -> tuple[tuple[Term, Fraction], ...]:
        return self._items

    def get(self, term: Term) -> Fraction:
        return self._table.get(term, Fraction(0))

    def __iter__(self) -> Iterator[Term]:
        return iter(self.support)

    def __len__(self) -> int:
        return len(self._items)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Distribution) and self._items == other._items

    def __hash__(self) -> int:
        return hash(self._items)

    def __repr__(self) -> str:
        body = ", ".join(f"{render_term(t)}: {p}" for t, p in self._items)
        return "{" + body + "}"


def mass(d: Distribution, terms: Iterable[Term]) -> Fraction:
    """Summed probability of a set of state terms."""
    return sum((d.get(t) for t in set(terms)), Fraction(0))


def convex_combine(pairs: Iterable[tuple[Fraction, Distribution]]) -> Distribution:
    """Pointwise weighted sum; weights must be positive and sum to at most 1."""
    pairs = [(Fraction(p), d) for p, d in pairs]
    for p, _ in pairs:
        if p <= 0:
            raise EvalError(f"nonpositive weight {p} in convex combination")
    if sum(p for p, _ in pairs) > 1:
        raise EvalError("convex combination weights exceed 1")
    items: list[tuple[Term, Fraction]] = []
    for p, d in pairs:
        for t, q in d.items():
            items.append((t, p * q))
    return Distribution(items)


def evaluate(theta: Term) -> Distribution:
    """Semantics of a closed distribution term.

    Dirac is a point mass; oplus is the weighted sum; a lifted operator ^f
    assigns to f(xi_1..xi_n) the product of the argument probabilities over
    f's state-sorted positions, with the dist-sorted positions required to
    equal the corresponding arguments of ^f syntactically (empty product = 1).
    """
    if isinstance(theta, (StateVar, DistVar)):
        raise EvalError(f"cannot evaluate open term {render_term(theta)}")
    if isinstance(theta, Dirac):
        if not is_closed(theta.inner):
            raise EvalError(f"cannot evaluate open term {render_term(theta)}")
        return Distribution.dirac(theta.inner)
    if isinstance(theta, Convex):
        return convex_combine([(w, evaluate(a)) for w, a in zip(theta.weights, theta.args)])
    if isinstance(theta, Apply):
        sym = theta.symbol
        if not sym.is_lifted:
            raise EvalError(f"{sym.name} is not a distribution operator")
        origin = sym.origin
        assert origin is not None
        state_pos = [i for i, s in enumerate(origin.arg_sorts) if s is Sort.STATE]
        arg_dists = {i: evaluate(theta.args[i]) for i in state_pos}
        for j, s in enumerate(origin.arg_sorts):
            if s is Sort.DIST and not is_closed(theta.args[j]):
                raise EvalError(f"cannot evaluate open term {render_term(theta)}")
        items: list[tuple[Term, Fraction]] = []
        for combo in product(*(arg_dists[i].items() for i in state_pos)):
            picked = dict(zip(state_pos, combo))
            args = tuple(
                picked[i][0] if i in picked else theta.args[i] for i in range(origin.rank)
            )
            p = Fraction(1)
            for _, q in combo:
                p *= q
            items.append((Apply(origin, args), p))
        result = Distribution(items)
        if not result.is_full:
            raise EvalError(f"evaluation of {render_term(theta)} lost mass")
        return result
    raise EvalError(f"not a distribution term: {theta!r}")

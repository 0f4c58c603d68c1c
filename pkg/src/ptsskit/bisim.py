"""Branching bisimulations on finite probabilistic transition systems.

Three deciders plus supporting machinery:

* `branching_bisim` — scheduler-free characterization: a challenge either is
  an inert tau-step (target supported inside the pair's classes) or is matched
  by a concrete execution of inert tau-steps followed by an equally labelled
  step whose target is lifting-related to the challenge target.
* `prob_branching_bisim` — the combined variant: matching goes through an
  allowed weak tau-transition (restricted to the branching-preserving set)
  followed by a one-step convex combination of equally labelled transitions;
  decided by exact-rational linear feasibility.
* `branching_bisim_scheduler_oracle` — brute force over deterministic
  schedulers of bounded length; a cross-check for the scheduler-free decider.

All three compute the greatest symmetric relation by deleting violating pairs
from the full relation.  Relation lifting is decided by exact max-flow.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence, Union

from .distributions import Distribution
from .engine import PTS, PtsTransition
from .lp import LinearSystem, max_flow
from .terms import Term, render_term

EPSILON = "eps"

RelationLike = Union["StateRelation", Iterable[tuple[Term, Term]], Mapping[Term, set]]


class BudgetExceededError(Exception):
    pass


class StateRelation:
    """A set of state pairs with constant-time membership."""

    def __init__(self, states: Sequence[Term], pairs: Iterable[tuple[Term, Term]]):
        self.states = tuple(states)
        self.pairs = frozenset(pairs)
        self._by_left: dict[Term, set[Term]] = {}
        for s, t in self.pairs:
            self._by_left.setdefault(s, set()).add(t)

    def related(self, s: Term, t: Term) -> bool:
        return (s, t) in self.pairs

    def partners(self, s: Term) -> set[Term]:
        return self._by_left.get(s, set())

    def is_symmetric(self) -> bool:
        return all((t, s) in self.pairs for s, t in self.pairs)

    def is_equivalence(self) -> bool:
        if not all((s, s) in self.pairs for s in self.states):
            return False
        if not self.is_symmetric():
            return False
        for s, t in self.pairs:
            if not self._by_left.get(t, set()) <= self._by_left.get(s, set()):
                return False
        return True

    def classes(self) -> tuple[tuple[Term, ...], ...]:
        seen: set[Term] = set()
        out: list[tuple[Term, ...]] = []
        for s in sorted(self.states, key=render_term):
            if s in seen:
                continue
            block = sorted(self.partners(s) | {s}, key=render_term)
            seen.update(block)
            out.append(tuple(block))
        return tuple(out)

    def __contains__(self, pair: tuple[Term, Term]) -> bool:
        return pair in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)


def _partners_map(rel: RelationLike) -> Mapping[Term, set]:
    if isinstance(rel, StateRelation):
        return rel._by_left
    if isinstance(rel, Mapping):
        return rel
    table: dict[Term, set] = {}
    for s, t in rel:
        table.setdefault(s, set()).add(t)
    return table


def lift_check(relation: RelationLike, d1: Distribution, d2: Distribution) -> bool:
    """Does a weight function exist with marginals d1/d2 supported on related
    pairs?  Exact max-flow feasibility on the bipartite support graph."""
    if d1.total_mass != 1 or d2.total_mass != 1:
        raise ValueError("lifting is defined on full distributions")
    table = _partners_map(relation)
    left = d1.support
    right = d2.support
    l_index = {t: 1 + i for i, t in enumerate(left)}
    r_index = {t: 1 + len(left) + i for i, t in enumerate(right)}
    sink = 1 + len(left) + len(right)
    edges: list[tuple[int, int, Fraction]] = []
    for t in left:
        edges.append((0, l_index[t], d1.get(t)))
        partners = table.get(t, set())
        for u in right:
            if u in partners:
                edges.append((l_index[t], r_index[u], Fraction(1)))
    for u in right:
        edges.append((r_index[u], sink, d2.get(u)))
    return max_flow(sink + 1, edges, 0, sink) == 1


# ---------------------------------------------------------------------------
# Explicit schedulers, cones, weak combined transitions

Fragment = tuple  # alternating state, action, state, ... (odd length)


@dataclass(frozen=True)
class Scheduler:
    """Explicit finite scheduler: fragments map to sub-distributions over the
    outgoing transitions of the fragment's last state; missing fragments stop."""

    choices: Mapping[Fragment, Mapping[PtsTransition, Fraction]]

    def at(self, frag: Fragment) -> Mapping[PtsTransition, Fraction]:
        return self.choices.get(frag, {})

    def stop_mass(self, frag: Fragment) -> Fraction:
        return Fraction(1) - sum(self.at(frag).values(), Fraction(0))

    def is_deterministic(self) -> bool:
        for dist in self.choices.values():
            total = sum(dist.values(), Fraction(0))
            if total not in (0, 1) or (total == 1 and len(dist) != 1):
                return False
        return True


def _check_scheduler(pts: PTS, sched: Scheduler) -> None:
    for frag, dist in sched.choices.items():
        last = frag[-1]
        total = Fraction(0)
        for tr, p in dist.items():
            if tr.source != last:
                raise ValueError("scheduler picks a transition not outgoing from the fragment end")
            if p < 0:
                raise ValueError("scheduler probabilities must be nonnegative")
            total += p
        if total > 1:
            raise ValueError("scheduler choice exceeds probability 1")


def cone_probability(pts: PTS, sched: Scheduler, s: Term, frag: Fragment) -> Fraction:
    """Probability of the cone of `frag` under the scheduler started at `s`."""
    if len(frag) == 1:
        return Fraction(1) if frag[0] == s else Fraction(0)
    prefix, action, last = frag[:-2], frag[-2], frag[-1]
    base = cone_probability(pts, sched, s, prefix)
    if base == 0:
        return base
    choice = sched.at(prefix)
    step = Fraction(0)
    for tr in pts.outgoing(prefix[-1], action):
        step += choice.get(tr, Fraction(0)) * tr.target.get(last)
    return base * step


def execution_probability(pts: PTS, sched: Scheduler, s: Term, frag: Fragment) -> Fraction:
    """Probability of executing exactly `frag` (reach it, then stop)."""
    return cone_probability(pts, sched, s, frag) * sched.stop_mass(frag)


def trace_of(frag: Fragment) -> tuple[str, ...]:
    return tuple(a for a in frag[1::2] if a != "tau")


def _reachable_fragments(pts: PTS, sched: Scheduler, s: Term) -> Iterator[tuple[Fragment, Fraction]]:
    frontier: list[tuple[Fragment, Fraction]] = [((s,), Fraction(1))]
    while frontier:
        frag, p = frontier.pop()
        yield frag, p
        choice = sched.at(frag)
        for tr, q in choice.items():
            if q == 0:
                continue
            for target, mass in tr.target.items():
                frontier.append((frag + (tr.label, target), p * q * mass))


def scheduler_weak_transition(
    pts: PTS, sched: Scheduler, s: Term, a: str
) -> Optional[Distribution]:
    """Endpoint distribution if the scheduler induces a weak combined
    transition for `a` (or EPSILON) from `s`; None otherwise."""
    _check_scheduler(pts, sched)
    want: tuple[str, ...] = () if a in (EPSILON, "tau") else (a,)
    stopped: list[tuple[Term, Fraction]] = []
    total = Fraction(0)
    for frag, cone in _reachable_fragments(pts, sched, s):
        stop = sched.stop_mass(frag) * cone
        if stop > 0:
            if trace_of(frag) != want:
                return None
            stopped.append((frag[-1], stop))
            total += stop
    if total != 1:
        return None
    return Distribution(stopped)


def weak_combined_reachable(
    pts: PTS,
    s: Term,
    a: Optional[str],
    target: Distribution,
    allowed: Optional[Iterable[PtsTransition]] = None,
) -> bool:
    """Is there a scheduler taking `s` to `target` executing exactly the trace
    of `a` (empty for EPSILON/tau) with probability 1?

    Decided by exact linear feasibility over per-transition occupation
    variables, split into a before-`a` and an after-`a` phase for visible `a`.
    """
    if not pts.has_state(s):
        raise ValueError(f"not a state of the PTS: {render_term(s)}")
    if target.total_mass != 1:
        raise ValueError("weak transitions target full distributions")
    for u in target.support:
        if not pts.has_state(u):
            raise ValueError(f"target mentions a foreign state: {render_term(u)}")
    if allowed is None:
        allowed_set = set(pts.transitions)
    else:
        allowed_set = set(allowed)
        if not allowed_set <= set(pts.transitions):
            raise ValueError("allowed set must be a subset of the PTS transitions")

    taus = [tr for tr in pts.transitions if tr.label == "tau" and tr in allowed_set]
    sys = LinearSystem()
    if a in (None, EPSILON, "tau"):
        for u in pts.states:
            coeffs: dict = {}
            for tr in taus:
                c = Fraction(0)
                if tr.source == u:
                    c += 1
                c -= tr.target.get(u)
                if c != 0:
                    coeffs[("x", tr)] = c
            rhs = (Fraction(1) if u == s else Fraction(0)) - target.get(u)
            sys.add_equation(coeffs, rhs)
        return sys.is_feasible()

    visibles = [tr for tr in pts.transitions if tr.label == a and tr in allowed_set]
    for u in pts.states:
        coeffs = {}
        for tr in taus:
            c = Fraction(0)
            if tr.source == u:
                c += 1
            c -= tr.target.get(u)
            if c != 0:
                coeffs[("x", tr)] = c
        for tr in visibles:
            if tr.source == u:
                coeffs[("y", tr)] = Fraction(1)
        sys.add_equation(coeffs, Fraction(1) if u == s else Fraction(0))
    for u in pts.states:
        coeffs = {}
        for tr in taus:
            c = Fraction(0)
            if tr.source == u:
                c += 1
            c -= tr.target.get(u)
            if c != 0:
                coeffs[("z", tr)] = c
        for tr in visibles:
            p = tr.target.get(u)
            if p:
                coeffs[("y", tr)] = coeffs.get(("y", tr), Fraction(0)) - p
        sys.add_equation(coeffs, -target.get(u))
    return sys.is_feasible()


# ---------------------------------------------------------------------------
# Greatest-fixpoint computation shared by the three deciders

def _full_pairs(states: Sequence[Term]) -> set[tuple[Term, Term]]:
    return {(s, t) for s in states for t in states}


def _refine(
    pts: PTS,
    make_check: Callable[[Mapping[Term, set]], Callable[[tuple[Term, Term]], bool]],
) -> StateRelation:
    states = sorted(pts.states, key=render_term)
    pairs = _full_pairs(states)
    while True:
        table: dict[Term, set] = {}
        for s, t in pairs:
            table.setdefault(s, set()).add(t)
        check = make_check(table)
        verdict: dict[tuple[Term, Term], bool] = {}
        for pair in sorted(pairs, key=lambda p: (render_term(p[0]), render_term(p[1]))):
            verdict[pair] = check(pair)
        new_pairs = {
            (s, t) for (s, t) in pairs if verdict[(s, t)] and verdict[(t, s)]
        }
        if new_pairs == pairs:
            return StateRelation(states, pairs)
        pairs = new_pairs


def _inert(rel: Mapping[Term, set], s: Term, t: Term, tr: PtsTransition) -> bool:
    # branching-preserving challenge, anchored at both members of the pair
    members = rel.get(s, set()) & rel.get(t, set())
    return tr.label == "tau" and set(tr.target.support) <= members


def _preserving_set(pts: PTS, rel: Mapping[Term, set]) -> list[PtsTransition]:
    return [
        tr
        for tr in pts.transitions
        if tr.label == "tau" and set(tr.target.support) <= rel.get(tr.source, set())
    ]


# -- scheduler-free branching bisimulation ----------------------------------

def _cached_lift(rel: Mapping[Term, set]) -> Callable[[Distribution, Distribution], bool]:
    # the relation table is fixed within one refinement sweep
    cache: dict[tuple[Distribution, Distribution], bool] = {}

    def check(d1: Distribution, d2: Distribution) -> bool:
        key = (d1, d2)
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = lift_check(rel, d1, d2)
        return hit

    return check


def branching_bisim(pts: PTS) -> StateRelation:
    """Greatest branching bisimulation, computed without schedulers."""

    def make_check(rel: Mapping[Term, set]) -> Callable[[tuple[Term, Term]], bool]:
        lift = _cached_lift(rel)

        def ok(pair: tuple[Term, Term]) -> bool:
            s, t = pair
            for tr in pts.outgoing(s):
                if _inert(rel, s, t, tr):
                    continue
                if not _execution_match(pts, rel, s, tr, t, lift):
                    return False
            return True

        return ok

    return _refine(pts, make_check)


def _execution_match(
    pts: PTS,
    rel: Mapping[Term, set],
    s: Term,
    challenge: PtsTransition,
    t: Term,
    lift: Optional[Callable[[Distribution, Distribution], bool]] = None,
) -> bool:
    """Search a concrete execution from `t`: inert tau-steps whose supports
    stay related to `s`, ending in a `challenge.label` step with lifted-related
    target."""
    if lift is None:
        lift = _cached_lift(rel)
    related_to_s = rel.get(s, set())
    seen = {t}
    queue = [t]
    while queue:
        u = queue.pop(0)
        for tr in pts.outgoing(u, challenge.label):
            if lift(challenge.target, tr.target):
                return True
        for tr in pts.outgoing(u, "tau"):
            if set(tr.target.support) <= related_to_s:
                for v in tr.target.support:
                    if v not in seen:
                        seen.add(v)
                        queue.append(v)
    return False


# -- probabilistic branching bisimulation ------------------------------------

def prob_branching_bisim(pts: PTS) -> StateRelation:
    """Greatest probabilistic branching bisimulation: combined matching via an
    allowed weak tau-step followed by a one-step convex combination."""

    def make_check(rel: Mapping[Term, set]) -> Callable[[tuple[Term, Term]], bool]:
        preserving = _preserving_set(pts, rel)
        cache: dict[tuple[Distribution, str, Term], bool] = {}

        def ok(pair: tuple[Term, Term]) -> bool:
            s, t = pair
            for tr in pts.outgoing(s):
                if _inert(rel, s, t, tr):
                    continue
                key = (tr.target, tr.label, t)
                hit = cache.get(key)
                if hit is None:
                    hit = cache[key] = _combined_match(pts, rel, preserving, tr, t)
                if not hit:
                    return False
            return True

        return ok

    return _refine(pts, make_check)


def _combined_match(
    pts: PTS,
    rel: Mapping[Term, set],
    preserving: Sequence[PtsTransition],
    challenge: PtsTransition,
    t: Term,
) -> bool:
    """One linear feasibility question: does some weak tau-step of `t` inside
    the preserving set reach an intermediate distribution whose one-step
    `label`-combination is lifting-related to the challenge target?"""
    label = challenge.label
    pi_s = challenge.target
    steps = [tr for tr in pts.transitions if tr.label == label]
    if not steps:
        return False
    sys = LinearSystem()
    # weak tau phase: occupation x over preserving transitions, sigma = stop mass
    for u in pts.states:
        coeffs: dict = {("sigma", u): Fraction(1)}
        for tr in preserving:
            c = Fraction(0)
            if tr.source == u:
                c += 1
            c -= tr.target.get(u)
            if c != 0:
                coeffs[("x", tr)] = c
        sys.add_equation(coeffs, Fraction(1) if u == t else Fraction(0))
    # every stopped unit takes exactly one label-step (convex per state)
    for u in pts.states:
        coeffs = {("sigma", u): Fraction(-1)}
        for tr in steps:
            if tr.source == u:
                coeffs[("y", tr)] = Fraction(1)
        sys.add_equation(coeffs, Fraction(0))
    # lifting of pi_s against the resulting distribution
    table = rel
    for p in pi_s.support:
        coeffs = {}
        for v in pts.states:
            if v in table.get(p, set()):
                coeffs[("w", p, v)] = Fraction(1)
        sys.add_equation(coeffs, pi_s.get(p))
    for v in pts.states:
        coeffs = {}
        for p in pi_s.support:
            if v in table.get(p, set()):
                coeffs[("w", p, v)] = Fraction(1)
        for tr in steps:
            q = tr.target.get(v)
            if q:
                coeffs[("y", tr)] = coeffs.get(("y", tr), Fraction(0)) - q
        sys.add_equation(coeffs, Fraction(0))
    return sys.is_feasible()


# -- deterministic-scheduler oracle ------------------------------------------

def branching_bisim_scheduler_oracle(
    pts: PTS, max_len: int = 6, budget: int = 200_000
) -> StateRelation:
    """Brute-force scheduler-based branching bisimulation: weak tau prefixes
    and final steps range over deterministic schedulers of length <= max_len.
    Intended as an independent cross-check on small systems."""

    def make_check(rel: Mapping[Term, set]) -> Callable[[tuple[Term, Term]], bool]:
        preserving = _preserving_set(pts, rel)
        by_source: dict[Term, list[PtsTransition]] = {}
        for tr in preserving:
            by_source.setdefault(tr.source, []).append(tr)
        memo: dict = {}
        counter = [0]
        lift = _cached_lift(rel)

        def ok(pair: tuple[Term, Term]) -> bool:
            s, t = pair
            for tr in pts.outgoing(s):
                if _inert(rel, s, t, tr):
                    continue
                if not _oracle_match(
                    pts, by_source, tr, t, max_len, budget, memo, counter, lift
                ):
                    return False
            return True

        return ok

    return _refine(pts, make_check)


def _det_endpoints(
    pts: PTS,
    preserving_by_source: Mapping[Term, list[PtsTransition]],
    u: Term,
    depth: int,
    memo: dict,
    counter: list[int],
    budget: int,
) -> list[Distribution]:
    key = (u, depth)
    hit = memo.get(key)
    if hit is not None:
        return hit
    results = {Distribution.dirac(u)}
    if depth > 0:
        for tr in preserving_by_source.get(u, ()):  # deterministic choice of one tau
            support = tr.target.items()
            branch_endpoints = [
                _det_endpoints(pts, preserving_by_source, v, depth - 1, memo, counter, budget)
                for v, _ in support
            ]
            for combo in product(*branch_endpoints):
                items: list[tuple[Term, Fraction]] = []
                for (v, p), endpoint in zip(support, combo):
                    for w, q in endpoint.items():
                        items.append((w, p * q))
                results.add(Distribution(items))
                counter[0] += 1
                if counter[0] > budget:
                    raise BudgetExceededError("scheduler search budget exceeded")
    ordered = sorted(results, key=repr)
    memo[key] = ordered
    return ordered


def _one_step_products(
    pts: PTS, pi_tilde: Distribution, label: str, counter: list[int], budget: int
) -> Iterator[Distribution]:
    options = []
    for u in pi_tilde.support:
        outs = pts.outgoing(u, label)
        if not outs:
            return
        options.append(outs)
    for combo in product(*options):
        items: list[tuple[Term, Fraction]] = []
        for (u, p), tr in zip(pi_tilde.items(), combo):
            for v, q in tr.target.items():
                items.append((v, p * q))
        counter[0] += 1
        if counter[0] > budget:
            raise BudgetExceededError("scheduler search budget exceeded")
        yield Distribution(items)


def _oracle_match(
    pts: PTS,
    preserving_by_source: Mapping[Term, list[PtsTransition]],
    challenge: PtsTransition,
    t: Term,
    max_len: int,
    budget: int,
    memo: dict,
    counter: list[int],
    lift: Callable[[Distribution, Distribution], bool],
) -> bool:
    for pi_tilde in _det_endpoints(pts, preserving_by_source, t, max_len, memo, counter, budget):
        for pi_t in _one_step_products(pts, pi_tilde, challenge.label, counter, budget):
            if lift(challenge.target, pi_t):
                return True
    return False


# -- rooted branching bisimulation -------------------------------------------

def rooted_branching_bisim(
    pts: PTS, s: Term, t: Term, bb: Optional[StateRelation] = None
) -> bool:
    """Initial transitions must match strictly (equal labels, single steps)
    with branching-bisimulation-lifted targets."""
    if not pts.has_state(s) or not pts.has_state(t):
        raise ValueError("both states must belong to the PTS")
    if bb is None:
        bb = branching_bisim(pts)
    for x, y in ((s, t), (t, s)):
        for tr in pts.outgoing(x):
            if not any(
                lift_check(bb, tr.target, other.target)
                for other in pts.outgoing(y, tr.label)
            ):
                return False
    return True


# -- witnesses for negative answers -------------------------------------------

def distinguishing_challenge(
    pts: PTS, kind: str, s: Term, t: Term
) -> Optional[tuple[Term, PtsTransition]]:
    """A transition certifying s and t are not `kind`-related, if they are not.

    The certificate is a challenge that fails even when the queried pair is
    added to the computed greatest relation.
    """
    if kind == "rooted":
        bb = branching_bisim(pts)
        for x, y in ((s, t), (t, s)):
            for tr in pts.outgoing(x):
                if not any(
                    lift_check(bb, tr.target, other.target)
                    for other in pts.outgoing(y, tr.label)
                ):
                    return x, tr
        return None

    rel = branching_bisim(pts) if kind == "branching" else prob_branching_bisim(pts)
    if rel.related(s, t):
        return None
    table = {u: set(rel.partners(u)) for u in pts.states}
    table.setdefault(s, set()).add(t)
    table.setdefault(t, set()).add(s)
    preserving = _preserving_set(pts, table)
    for x, y in ((s, t), (t, s)):
        for tr in pts.outgoing(x):
            if _inert(table, x, y, tr):
                continue
            if kind == "branching":
                if not _execution_match(pts, table, x, tr, y):
                    return x, tr
            else:
                if not _combined_match(pts, table, preserving, tr, y):
                    return x, tr
    return None

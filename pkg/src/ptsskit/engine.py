"""Least 3-valued stable models over a finite reachable term domain, and
extraction of the associated probabilistic transition system.

The certain/possible pair (CT, PT) is iterated from (empty, everything):
each step re-derives all transitions bottom-up, checking negative premises
against the opposite component of the previous step.  The initial "possible
everything" relation is never materialized; a negative literal holds in it
only when no rule conclusion could ever produce a matching transition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional

from .distributions import Distribution, evaluate
from .parser import PTSS, Diagnostic, ParseFailure, Rule
from .terms import (
    FunctionSymbol,
    Sort,
    Term,
    Apply,
    is_closed,
    match,
    render_term,
    state_subterms,
    substitute,
    term_depth,
    term_sort,
)


class DomainBoundError(Exception):
    def __init__(self, term: Term, reason: str):
        self.term = term
        self.reason = reason
        super().__init__(f"{reason}: {render_term(term)}")


class RuleInstantiationError(Exception):
    """A rule cannot be instantiated effectively (unbound variables)."""


class NotConvergedError(Exception):
    pass


class IncompleteError(Exception):
    """The spec has no associated PTS because its stable model is 3-valued."""


@dataclass(frozen=True)
class SymbolicTransition:
    source: Term
    label: str
    target: Term

    def __repr__(self) -> str:
        return f"{render_term(self.source)} --{self.label}-> {render_term(self.target)}"


@dataclass(frozen=True)
class DomainBound:
    roots: tuple[Term, ...]
    max_depth: int = 8
    max_states: int = 512
    max_iterations: int = 64

    def __post_init__(self) -> None:
        if self.max_depth <= 0 or self.max_states <= 0 or self.max_iterations <= 0:
            raise ValueError("domain bounds must be positive")


@dataclass(frozen=True)
class ThreeValuedModel:
    ct: frozenset[SymbolicTransition]
    pt: frozenset[SymbolicTransition]
    iterations: int
    converged: bool
    history: tuple[tuple[frozenset[SymbolicTransition], frozenset[SymbolicTransition]], ...]

    @property
    def is_two_valued(self) -> bool:
        return self.ct == self.pt


@dataclass(frozen=True)
class PtsTransition:
    source: Term
    label: str
    target: Distribution

    def __repr__(self) -> str:
        return f"{render_term(self.source)} --{self.label}-> {self.target!r}"


@dataclass(frozen=True)
class PTS:
    states: tuple[Term, ...]
    actions: tuple[str, ...]
    transitions: tuple[PtsTransition, ...]
    _outgoing: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self) -> None:
        out: dict[Term, list[PtsTransition]] = {s: [] for s in self.states}
        for tr in self.transitions:
            out[tr.source].append(tr)
        self._outgoing.update(out)

    def outgoing(self, state: Term, label: Optional[str] = None) -> tuple[PtsTransition, ...]:
        trs = self._outgoing.get(state, ())
        if label is None:
            return tuple(trs)
        return tuple(tr for tr in trs if tr.label == label)

    def tau_transitions(self) -> tuple[PtsTransition, ...]:
        return tuple(tr for tr in self.transitions if tr.label == "tau")

    def has_state(self, state: Term) -> bool:
        return state in self._outgoing


# ---------------------------------------------------------------------------
# Rule instantiation

def _solve_positives(
    rho: dict[str, Term],
    premises: tuple[tuple[Term, str, Term], ...],
    by_label: dict[str, list[tuple[Term, Term]]],
) -> list[dict[str, Term]]:
    solutions = [rho]
    for psrc, label, ptgt in premises:
        grown: list[dict[str, Term]] = []
        for sub in solutions:
            src_pat = substitute(sub, psrc)
            tgt_pat = substitute(sub, ptgt)
            for u, theta in by_label.get(label, ()):  # derived so far
                m1 = match(src_pat, u)
                if m1 is None:
                    continue
                m2 = match(substitute(m1, tgt_pat), theta)
                if m2 is None:
                    continue
                merged = dict(sub)
                merged.update(m1)
                merged.update(m2)
                grown.append(merged)
        solutions = grown
        if not solutions:
            break
    return solutions


def _rule_instances(
    rule: Rule,
    universe: list[Term],
    by_label: dict[str, list[tuple[Term, Term]]],
    neg_holds: Callable[[Term, str], bool],
    max_depth: int,
) -> Iterable[SymbolicTransition]:
    for src in universe:
        rho0 = match(rule.source, src)
        if rho0 is None:
            continue
        for rho in _solve_positives(rho0, rule.pos_premises, by_label):
            ok = True
            for nsrc, nlabel in rule.neg_premises:
                inst = substitute(rho, nsrc)
                if not is_closed(inst):
                    raise RuleInstantiationError(
                        f"rule {rule.name}: negative premise source {render_term(inst)} "
                        f"has unbound variables"
                    )
                if not neg_holds(inst, nlabel):
                    ok = False
                    break
            if not ok:
                continue
            target = substitute(rho, rule.target)
            if not is_closed(target):
                raise RuleInstantiationError(
                    f"rule {rule.name}: conclusion target {render_term(target)} "
                    f"has unbound variables"
                )
            if term_depth(target) > max_depth:
                raise DomainBoundError(target, "conclusion target exceeds max depth")
            yield SymbolicTransition(src, rule.label, target)


def _derive(
    rules: tuple[Rule, ...],
    universe: list[Term],
    neg_holds: Callable[[Term, str], bool],
    max_depth: int,
) -> frozenset[SymbolicTransition]:
    trans: set[SymbolicTransition] = set()
    by_label: dict[str, list[tuple[Term, Term]]] = {}
    changed = True
    while changed:
        changed = False
        for rule in rules:
            for tr in list(_rule_instances(rule, universe, by_label, neg_holds, max_depth)):
                if tr not in trans:
                    trans.add(tr)
                    by_label.setdefault(tr.label, []).append((tr.source, tr.target))
                    changed = True
    return frozenset(trans)


def _pt0_neg_holds(rules: tuple[Rule, ...]) -> Callable[[Term, str], bool]:
    # Against the unmaterialized "possibly everything" start: a negative
    # literal can only be granted when no rule conclusion could match at all.
    def holds(t: Term, a: str) -> bool:
        return not any(r.label == a and match(r.source, t) is not None for r in rules)

    return holds


def _holds_against(trs: frozenset[SymbolicTransition]) -> Callable[[Term, str], bool]:
    present = {(tr.source, tr.label) for tr in trs}

    def holds(t: Term, a: str) -> bool:
        return (t, a) not in present

    return holds


# ---------------------------------------------------------------------------
# Domain closure and the stable-model iteration

def _check_and_collect(term: Term, universe: set[Term], bound: DomainBound) -> None:
    for sub in state_subterms(term):
        if term_depth(sub) > bound.max_depth:
            raise DomainBoundError(sub, "term exceeds max depth")
        if sub not in universe:
            universe.add(sub)
            if len(universe) > bound.max_states:
                raise DomainBoundError(sub, "domain exceeds max states")


def _closed_universe(p: PTSS, bound: DomainBound) -> list[Term]:
    universe: set[Term] = set()
    for root in bound.roots:
        if not is_closed(root) or term_sort(root) is not Sort.STATE:
            raise ValueError(f"root must be a closed state term: {render_term(root)}")
        _check_and_collect(root, universe, bound)
    while True:
        ordered = sorted(universe, key=render_term)
        trs = _derive(p.rules, ordered, lambda t, a: True, bound.max_depth)
        before = len(universe)
        for tr in trs:
            for s in evaluate(tr.target).support:
                _check_and_collect(s, universe, bound)
        if len(universe) == before:
            return ordered


def stable_model(p: PTSS, bound: DomainBound) -> ThreeValuedModel:
    """Iterate the certain/possible pair to its least fixed point over the
    domain generated by the roots (closed under rule targets and subterms)."""
    universe = _closed_universe(p, bound)
    ct = _derive(p.rules, universe, _pt0_neg_holds(p.rules), bound.max_depth)
    pt = _derive(p.rules, universe, lambda t, a: True, bound.max_depth)
    history = [(ct, pt)]
    iterations = 1
    converged = False
    while iterations < bound.max_iterations:
        ct_next = _derive(p.rules, universe, _holds_against(pt), bound.max_depth)
        pt_next = _derive(p.rules, universe, _holds_against(ct), bound.max_depth)
        iterations += 1
        history.append((ct_next, pt_next))
        if ct_next == ct and pt_next == pt:
            converged = True
            break
        ct, pt = ct_next, pt_next
    return ThreeValuedModel(ct, pt, iterations, converged, tuple(history))


def is_complete(p: PTSS, bound: DomainBound) -> tuple[bool, ThreeValuedModel]:
    model = stable_model(p, bound)
    if not model.converged:
        raise NotConvergedError(
            f"stable model did not converge within {bound.max_iterations} iterations"
        )
    return model.is_two_valued, model


def reachable_pts(p: PTSS, bound: DomainBound) -> PTS:
    """The concrete PTS reachable from the roots; requires a complete spec.
    Symbolic transitions with equal evaluated targets are merged."""
    complete, model = is_complete(p, bound)
    if not complete:
        raise IncompleteError("no associated PTS: the least stable model is not 2-valued")
    by_source: dict[Term, list[SymbolicTransition]] = {}
    for tr in model.ct:
        by_source.setdefault(tr.source, []).append(tr)

    states: set[Term] = set()
    transitions: set[tuple[Term, str, Distribution]] = set()
    frontier = sorted(set(bound.roots), key=render_term)
    for root in frontier:
        states.add(root)
    while frontier:
        nxt: list[Term] = []
        for s in frontier:
            for tr in by_source.get(s, ()):  # derived transitions from s
                pi = evaluate(tr.target)
                key = (s, tr.label, pi)
                if key in transitions:
                    continue
                transitions.add(key)
                for u in pi.support:
                    if u not in states:
                        states.add(u)
                        nxt.append(u)
        frontier = sorted(nxt, key=render_term)
    ordered_states = tuple(sorted(states, key=render_term))
    ordered_trans = tuple(
        PtsTransition(s, l, d)
        for s, l, d in sorted(
            transitions, key=lambda k: (render_term(k[0]), k[1], repr(k[2]))
        )
    )
    return PTS(ordered_states, tuple(p.signature.actions), ordered_trans)


# ---------------------------------------------------------------------------
# Line-oriented PTS text format (export and direct input)

def export_pts(pts: PTS) -> str:
    lines = [f"state {render_term(s)}" for s in sorted(pts.states, key=render_term)]
    for tr in sorted(
        pts.transitions, key=lambda t: (render_term(t.source), t.label, repr(t.target))
    ):
        body = ", ".join(f"{render_term(u)}: {p}" for u, p in tr.target.items())
        lines.append(f"trans {render_term(tr.source)} --{tr.label}-> {{ {body} }}")
    return "\n".join(lines) + "\n"


def opaque_state(name: str) -> Term:
    return Apply(FunctionSymbol(name, (), Sort.STATE), ())


def _split_balanced(text: str, sep: str) -> list[str]:
    parts: list[str] = []
    depth = 0
    start = 0
    for i, ch in enumerate(text):
        if ch in "({":
            depth += 1
        elif ch in ")}":
            depth -= 1
        elif ch == sep and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return parts


def load_pts(text: str) -> PTS:
    """Read the line-oriented PTS format; state names are opaque."""
    diags: list[Diagnostic] = []
    states: dict[str, Term] = {}
    order: list[Term] = []
    transitions: list[PtsTransition] = []
    labels: set[str] = set()

    def err(message: str, line_no: int) -> None:
        diags.append(Diagnostic("error", message, line_no, 1))

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("state "):
            name = line[len("state "):].strip()
            if not name:
                err("empty state name", line_no)
            elif name in states:
                err(f"duplicate state {name}", line_no)
            else:
                states[name] = opaque_state(name)
                order.append(states[name])
        elif line.startswith("trans "):
            rest = line[len("trans "):]
            if "--" not in rest:
                err("expected '--<label>->'", line_no)
                continue
            src_text, after = rest.split("--", 1)
            if "->" not in after:
                err("expected '->' after the label", line_no)
                continue
            label, dist_text = after.split("->", 1)
            src_text, label, dist_text = src_text.strip(), label.strip(), dist_text.strip()
            if src_text not in states:
                err(f"undeclared state {src_text}", line_no)
                continue
            if not (dist_text.startswith("{") and dist_text.endswith("}")):
                err("expected a '{ term: p/q, ... }' distribution", line_no)
                continue
            items: list[tuple[Term, Fraction]] = []
            bad = False
            for chunk in _split_balanced(dist_text[1:-1], ","):
                chunk = chunk.strip()
                if not chunk:
                    continue
                pieces = _split_balanced(chunk, ":")
                if len(pieces) != 2:
                    err(f"malformed distribution entry {chunk!r}", line_no)
                    bad = True
                    break
                tname, ptext = pieces[0].strip(), pieces[1].strip()
                if tname not in states:
                    err(f"undeclared state {tname}", line_no)
                    bad = True
                    break
                try:
                    prob = Fraction(ptext)
                except (ValueError, ZeroDivisionError):
                    err(f"bad probability {ptext!r}", line_no)
                    bad = True
                    break
                items.append((states[tname], prob))
            if bad:
                continue
            dist = Distribution(items)
            if not dist.is_full:
                err(f"distribution mass is {dist.total_mass}, expected 1", line_no)
                continue
            labels.add(label)
            transitions.append(PtsTransition(states[src_text], label, dist))
        else:
            err(f"unknown line {line.split()[0]!r}", line_no)
    if diags:
        raise ParseFailure(diags)
    actions = tuple(sorted(labels | {"tau"}))
    ordered_states = tuple(sorted(order, key=render_term))
    ordered_trans = tuple(
        sorted(
            set(transitions),
            key=lambda t: (render_term(t.source), t.label, repr(t.target)),
        )
    )
    return PTS(ordered_states, actions, ordered_trans)

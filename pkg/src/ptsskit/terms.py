"""Two-sorted term algebra: signatures, state/distribution terms, substitution, matching.

States and distributions over states live in separate sorts.  Every state
operator `f` comes with a lifted distribution operator `^f` of the same rank
whose arguments are all distribution-sorted; Dirac (`delta(t)`) and finite
convex combinations (`oplus{p1: t1, ...}`) are dedicated node kinds rather
than ordinary operators because their weights/arities are fixed.  All values
are immutable and weights are exact rationals.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, Optional, Union


class Sort(enum.Enum):
    STATE = "s"
    DIST = "d"

    def __repr__(self) -> str:
        return f"Sort.{self.name}"


class SortError(Exception):
    """A term or substitution violates the sort discipline."""


@dataclass(frozen=True)
class FunctionSymbol:
    """An operator of the two-sorted signature.

    `origin` is set on lifted symbols and points at the state operator being
    lifted; `prefix_action` is set on action-prefix operators (surface syntax
    `a.t`) and carries the action label.
    """

    name: str
    arg_sorts: tuple[Sort, ...]
    result_sort: Sort
    origin: Optional["FunctionSymbol"] = None
    prefix_action: Optional[str] = None

    @property
    def rank(self) -> int:
        return len(self.arg_sorts)

    @property
    def is_lifted(self) -> bool:
        return self.origin is not None

    @property
    def lifted_of(self) -> Optional[str]:
        return self.origin.name if self.origin is not None else None

    def __repr__(self) -> str:
        return f"FunctionSymbol({self.name!r})"


def prefix_symbol(action: str) -> FunctionSymbol:
    return FunctionSymbol(f"{action}.", (Sort.DIST,), Sort.STATE, prefix_action=action)


def lift_symbol(f: FunctionSymbol) -> FunctionSymbol:
    """The probabilistic lifting of a state operator: same rank, all-dist arguments."""
    if f.result_sort is not Sort.STATE:
        raise SortError(f"only state operators can be lifted, got {f.name}")
    return FunctionSymbol(
        f"^{f.name}",
        (Sort.DIST,) * f.rank,
        Sort.DIST,
        origin=f,
        prefix_action=f.prefix_action,
    )


@dataclass(frozen=True)
class StateVar:
    name: str


@dataclass(frozen=True)
class DistVar:
    name: str


@dataclass(frozen=True)
class Apply:
    symbol: FunctionSymbol
    args: tuple["Term", ...] = ()

    def __post_init__(self) -> None:
        if len(self.args) != self.symbol.rank:
            raise SortError(
                f"{self.symbol.name} expects {self.symbol.rank} arguments, got {len(self.args)}"
            )
        for arg, want in zip(self.args, self.symbol.arg_sorts):
            if term_sort(arg) is not want:
                raise SortError(
                    f"argument {render_term(arg)} of {self.symbol.name} has sort "
                    f"{term_sort(arg).value}, expected {want.value}"
                )


@dataclass(frozen=True)
class Dirac:
    inner: "Term"

    def __post_init__(self) -> None:
        if term_sort(self.inner) is not Sort.STATE:
            raise SortError(f"delta takes a state term, got {render_term(self.inner)}")


@dataclass(frozen=True)
class Convex:
    weights: tuple[Fraction, ...]
    args: tuple["Term", ...]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.args) or not self.args:
            raise SortError("oplus needs one weight per branch and at least one branch")
        if any(w <= 0 for w in self.weights):
            raise SortError("oplus weights must be positive")
        total = sum(self.weights)
        if total != 1:
            raise SortError(f"oplus weights sum to {total}, expected 1")
        for arg in self.args:
            if term_sort(arg) is not Sort.DIST:
                raise SortError(f"oplus branches must be distribution terms, got {render_term(arg)}")


Term = Union[StateVar, DistVar, Apply, Dirac, Convex]

Substitution = Mapping[str, Term]


def term_sort(t: Term) -> Sort:
    if isinstance(t, StateVar):
        return Sort.STATE
    if isinstance(t, DistVar):
        return Sort.DIST
    if isinstance(t, Apply):
        return t.symbol.result_sort
    if isinstance(t, (Dirac, Convex)):
        return Sort.DIST
    raise TypeError(f"not a term: {t!r}")


def render_term(t: Term) -> str:
    """Canonical compact text form; `parse_term` inverts it."""
    if isinstance(t, (StateVar, DistVar)):
        return t.name
    if isinstance(t, Apply):
        sym = t.symbol
        if sym.prefix_action is not None:
            hat = "^" if sym.is_lifted else ""
            return f"{hat}{sym.prefix_action}.{render_term(t.args[0])}"
        if not t.args:
            return sym.name
        return f"{sym.name}({','.join(render_term(a) for a in t.args)})"
    if isinstance(t, Dirac):
        return f"delta({render_term(t.inner)})"
    if isinstance(t, Convex):
        parts = ",".join(f"{w}:{render_term(a)}" for w, a in zip(t.weights, t.args))
        return "oplus{" + parts + "}"
    raise TypeError(f"not a term: {t!r}")


def variables(t: Term) -> set[str]:
    out: set[str] = set()
    _collect_vars(t, out)
    return out


def _collect_vars(t: Term, out: set[str]) -> None:
    if isinstance(t, (StateVar, DistVar)):
        out.add(t.name)
    elif isinstance(t, Apply):
        for a in t.args:
            _collect_vars(a, out)
    elif isinstance(t, Dirac):
        _collect_vars(t.inner, out)
    elif isinstance(t, Convex):
        for a in t.args:
            _collect_vars(a, out)


def is_closed(t: Term) -> bool:
    return not variables(t)


def subterms(t: Term) -> Iterator[Term]:
    """All subterms including `t` itself, pre-order."""
    yield t
    if isinstance(t, Apply):
        for a in t.args:
            yield from subterms(a)
    elif isinstance(t, Dirac):
        yield from subterms(t.inner)
    elif isinstance(t, Convex):
        for a in t.args:
            yield from subterms(a)


def state_subterms(t: Term) -> Iterator[Term]:
    for s in subterms(t):
        if term_sort(s) is Sort.STATE:
            yield s


def term_depth(t: Term) -> int:
    if isinstance(t, (StateVar, DistVar)):
        return 1
    if isinstance(t, Apply):
        return 1 + max((term_depth(a) for a in t.args), default=0)
    if isinstance(t, Dirac):
        return 1 + term_depth(t.inner)
    if isinstance(t, Convex):
        return 1 + max(term_depth(a) for a in t.args)
    raise TypeError(f"not a term: {t!r}")


def substitute(rho: Substitution, t: Term) -> Term:
    """Replace variable occurrences; unmapped variables stay.  Sort-checked."""
    if isinstance(t, StateVar):
        if t.name in rho:
            rep = rho[t.name]
            if term_sort(rep) is not Sort.STATE:
                raise SortError(
                    f"state variable {t.name} bound to distribution term {render_term(rep)}"
                )
            return rep
        return t
    if isinstance(t, DistVar):
        if t.name in rho:
            rep = rho[t.name]
            if term_sort(rep) is not Sort.DIST:
                raise SortError(
                    f"distribution variable {t.name} bound to state term {render_term(rep)}"
                )
            return rep
        return t
    if isinstance(t, Apply):
        return Apply(t.symbol, tuple(substitute(rho, a) for a in t.args))
    if isinstance(t, Dirac):
        return Dirac(substitute(rho, t.inner))
    if isinstance(t, Convex):
        return Convex(t.weights, tuple(substitute(rho, a) for a in t.args))
    raise TypeError(f"not a term: {t!r}")


def match(pattern: Term, subject: Term) -> Optional[dict[str, Term]]:
    """Most general substitution rho with rho(pattern) == subject, or None.

    Repeated pattern variables require syntactically equal matched subterms.
    """
    binding: dict[str, Term] = {}
    if _match_into(pattern, subject, binding):
        return binding
    return None


def _match_into(pattern: Term, subject: Term, binding: dict[str, Term]) -> bool:
    if isinstance(pattern, (StateVar, DistVar)):
        want = Sort.STATE if isinstance(pattern, StateVar) else Sort.DIST
        if term_sort(subject) is not want:
            return False
        seen = binding.get(pattern.name)
        if seen is not None:
            return seen == subject
        binding[pattern.name] = subject
        return True
    if isinstance(pattern, Apply):
        return (
            isinstance(subject, Apply)
            and pattern.symbol == subject.symbol
            and all(_match_into(p, s, binding) for p, s in zip(pattern.args, subject.args))
        )
    if isinstance(pattern, Dirac):
        return isinstance(subject, Dirac) and _match_into(pattern.inner, subject.inner, binding)
    if isinstance(pattern, Convex):
        return (
            isinstance(subject, Convex)
            and pattern.weights == subject.weights
            and all(_match_into(p, s, binding) for p, s in zip(pattern.args, subject.args))
        )
    raise TypeError(f"not a term: {pattern!r}")


@dataclass(frozen=True, eq=True)
class Signature:
    """Action labels plus state operators and their liftings.

    `actions` keeps declaration order (rendering is order-preserving); `tau`
    must be among them.  `dist_ops` holds exactly the liftings of `state_ops`.
    `has_prefix_family` records that the per-action prefix operators came from
    a single `pre<A>` family declaration.
    """

    actions: tuple[str, ...]
    state_ops: tuple[FunctionSymbol, ...]
    dist_ops: tuple[FunctionSymbol, ...]
    has_prefix_family: bool = False

    def state_op(self, name: str) -> Optional[FunctionSymbol]:
        for f in self.state_ops:
            if f.name == name:
                return f
        return None

    def dist_op(self, name: str) -> Optional[FunctionSymbol]:
        for f in self.dist_ops:
            if f.name == name:
                return f
        return None

    def op(self, name: str) -> Optional[FunctionSymbol]:
        return self.state_op(name) or self.dist_op(name)

    def lifted(self, f: FunctionSymbol) -> FunctionSymbol:
        g = self.dist_op(f"^{f.name}")
        if g is None:
            raise KeyError(f"no lifting declared for {f.name}")
        return g

    def prefix(self, action: str) -> Optional[FunctionSymbol]:
        return self.state_op(f"{action}.")


def build_signature(
    actions: list[str] | tuple[str, ...],
    state_ops: list[FunctionSymbol],
    prefix_family: bool = False,
) -> Signature:
    """Assemble a signature, generating prefix operators per action when asked
    and one lifting per state operator."""
    ops = list(state_ops)
    if prefix_family:
        ops.extend(prefix_symbol(a) for a in actions)
    return Signature(
        actions=tuple(actions),
        state_ops=tuple(ops),
        dist_ops=tuple(lift_symbol(f) for f in ops),
        has_prefix_family=prefix_family,
    )


def validate_signature(sig: Signature) -> list[str]:
    """Diagnostics for every violated signature invariant; empty means valid."""
    out: list[str] = []
    if "tau" not in sig.actions:
        out.append("missing action: tau must be declared")
    seen_actions: set[str] = set()
    for a in sig.actions:
        if a in seen_actions:
            out.append(f"duplicate action: {a}")
        seen_actions.add(a)
    names: set[str] = set()
    for f in list(sig.state_ops) + list(sig.dist_ops):
        if f.name in names:
            out.append(f"duplicate name: {f.name}")
        names.add(f.name)
    for f in sig.state_ops:
        if f.result_sort is not Sort.STATE:
            out.append(f"state operator {f.name} has result sort {f.result_sort.value}")
        lifted = [g for g in sig.dist_ops if g.lifted_of == f.name]
        if not lifted:
            out.append(f"missing lifting: state operator {f.name} has no ^{f.name}")
        elif len(lifted) > 1:
            out.append(f"multiple liftings for {f.name}")
        else:
            g = lifted[0]
            if g.rank != f.rank or any(s is not Sort.DIST for s in g.arg_sorts):
                out.append(f"lifting ^{f.name} must have rank {f.rank} with all-dist arguments")
            if g.result_sort is not Sort.DIST:
                out.append(f"lifting ^{f.name} must map to sort d")
        if f.prefix_action is not None and f.prefix_action not in sig.actions:
            out.append(f"prefix operator {f.name} uses undeclared action {f.prefix_action}")
    for g in sig.dist_ops:
        if g.origin is None:
            out.append(f"distribution operator {g.name} is not the lifting of a state operator")
        elif sig.state_op(g.origin.name) != g.origin:
            out.append(f"lifting {g.name} refers to undeclared state operator {g.lifted_of}")
    return out


def sort_of(t: Term, sig: Signature) -> Sort:
    """Sort of a term well-formed over `sig`; raises SortError naming the
    innermost offending node otherwise."""
    if isinstance(t, Apply):
        for a in t.args:
            sort_of(a, sig)
        if sig.op(t.symbol.name) != t.symbol:
            raise SortError(f"operator {t.symbol.name} is not declared in the signature")
        return t.symbol.result_sort
    if isinstance(t, Dirac):
        sort_of(t.inner, sig)
        return Sort.DIST
    if isinstance(t, Convex):
        for a in t.args:
            sort_of(a, sig)
        return Sort.DIST
    return term_sort(t)


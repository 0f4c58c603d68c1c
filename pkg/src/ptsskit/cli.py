"""Command-line front end.

Subcommands: check-format, stable-model, pts, bisim, probe-congruence,
corpus-run.  Exit codes: 0 affirmative (format passes, states related, no
probe violations, all expectations met), 1 negative, 2 usage or parse errors,
3 bound or convergence failures.  All output is deterministically ordered.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .bisim import (
    branching_bisim,
    distinguishing_challenge,
    prob_branching_bisim,
    rooted_branching_bisim,
)
from .engine import (
    PTS,
    DomainBound,
    DomainBoundError,
    IncompleteError,
    NotConvergedError,
    RuleInstantiationError,
    export_pts,
    is_complete,
    load_pts,
    opaque_state,
    reachable_pts,
    stable_model,
)
from .format_check import ProbeError, check_format, congruence_probe
from .parser import PTSS, ParseFailure, parse_term, try_parse_spec
from .terms import Term, render_term

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_USAGE = 2
EXIT_BOUNDS = 3

KINDS = ("branching", "pbranching", "rooted")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_file(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_USAGE)


def _load_spec(path: str) -> PTSS:
    spec, diags = try_parse_spec(_read_file(path))
    if spec is None:
        messages = "\n".join(f"{path}:{d}" for d in diags if d.severity == "error")
        raise CliError(messages or f"{path}: parse failed", EXIT_USAGE)
    return spec


def _parse_terms(spec: PTSS, texts: list[str], path: str) -> list[Term]:
    out = []
    for text in texts:
        try:
            out.append(parse_term(text, spec.signature))
        except ParseFailure as exc:
            msgs = "\n".join(f"{path}:{d}" for d in exc.diagnostics)
            raise CliError(msgs or f"bad term {text!r}", EXIT_USAGE)
    return out


def _bound(args: argparse.Namespace, roots: tuple[Term, ...]) -> DomainBound:
    return DomainBound(
        roots,
        max_depth=args.max_depth,
        max_states=args.max_states,
        max_iterations=args.max_iterations,
    )


def _add_bound_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--max-depth", type=int, default=8)
    sub.add_argument("--max-states", type=int, default=512)
    sub.add_argument("--max-iterations", type=int, default=64)


def _emit(text: str) -> None:
    sys.stdout.write(text)
    if not text.endswith("\n"):
        sys.stdout.write("\n")


# ---------------------------------------------------------------------------
# Subcommands

def _cmd_check_format(args: argparse.Namespace) -> int:
    spec = _load_spec(args.spec)
    report = check_format(spec)
    _emit(report.to_json() if args.json else report.render_text())
    return EXIT_OK if report.overall else EXIT_NEGATIVE


def _cmd_stable_model(args: argparse.Namespace) -> int:
    spec = _load_spec(args.spec)
    roots = tuple(_parse_terms(spec, args.root, args.spec))
    if not roots:
        raise CliError("stable-model needs at least one --root", EXIT_USAGE)
    model = stable_model(spec, _bound(args, roots))
    complete = model.converged and model.is_two_valued
    if args.json:
        _emit(
            json.dumps(
                {
                    "certain": sorted(repr(tr) for tr in model.ct),
                    "possible_only": sorted(repr(tr) for tr in model.pt - model.ct),
                    "iterations": model.iterations,
                    "converged": model.converged,
                    "complete": complete,
                },
                indent=2,
                sort_keys=True,
            )
        )
    else:
        lines = [f"certain: {tr!r}" for tr in sorted(model.ct, key=repr)]
        lines += [f"possible-only: {tr!r}" for tr in sorted(model.pt - model.ct, key=repr)]
        lines.append(f"iterations: {model.iterations}")
        lines.append(f"converged: {'yes' if model.converged else 'no'}")
        lines.append(f"complete: {'yes' if complete else 'no'}")
        _emit("\n".join(lines))
    if not model.converged:
        return EXIT_BOUNDS
    return EXIT_OK if complete else EXIT_NEGATIVE


def _cmd_pts(args: argparse.Namespace) -> int:
    spec = _load_spec(args.spec)
    roots = tuple(_parse_terms(spec, args.root, args.spec))
    if not roots:
        raise CliError("pts needs at least one --root", EXIT_USAGE)
    pts = reachable_pts(spec, _bound(args, roots))
    text = export_pts(pts)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        _emit(f"wrote {len(pts.states)} states, {len(pts.transitions)} transitions to {args.out}")
    else:
        _emit(text)
    return EXIT_OK


def _relation_for(kind: str, pts: PTS):
    if kind == "branching":
        return branching_bisim(pts)
    if kind == "pbranching":
        return prob_branching_bisim(pts)
    raise CliError(f"unknown kind {kind}", EXIT_USAGE)


def _cmd_bisim(args: argparse.Namespace) -> int:
    path = args.path
    if path.endswith(".pts"):
        try:
            pts = load_pts(_read_file(path))
        except ParseFailure as exc:
            msgs = "\n".join(f"{path}:{d}" for d in exc.diagnostics)
            raise CliError(msgs, EXIT_USAGE)
        s, t = opaque_state(args.s), opaque_state(args.t)
        if not pts.has_state(s) or not pts.has_state(t):
            raise CliError(f"{path}: unknown state {args.s!r} or {args.t!r}", EXIT_USAGE)
    else:
        spec = _load_spec(path)
        s, t = _parse_terms(spec, [args.s, args.t], path)
        roots = tuple(_parse_terms(spec, args.root, path)) + (s, t)
        pts = reachable_pts(spec, _bound(args, roots))

    if args.kind == "rooted":
        related = rooted_branching_bisim(pts, s, t)
        partition = None
    else:
        rel = _relation_for(args.kind, pts)
        related = rel.related(s, t)
        partition = rel.classes()

    witness = None if related else distinguishing_challenge(pts, args.kind, s, t)
    if args.json:
        payload = {
            "kind": args.kind,
            "left": render_term(s),
            "right": render_term(t),
            "related": related,
        }
        if partition is not None:
            payload["classes"] = [[render_term(u) for u in block] for block in partition]
        if witness is not None:
            state, tr = witness
            payload["witness"] = {"state": render_term(state), "challenge": repr(tr)}
        _emit(json.dumps(payload, indent=2, sort_keys=True))
    else:
        lines = []
        if partition is not None:
            lines += ["class: " + " ".join(render_term(u) for u in block) for block in partition]
        verdict = "YES" if related else "NO"
        lines.append(f"{args.kind}: {render_term(s)} ~ {render_term(t)}: {verdict}")
        if witness is not None:
            state, tr = witness
            lines.append(f"witness: unmatched challenge {tr!r}")
        _emit("\n".join(lines))
    return EXIT_OK if related else EXIT_NEGATIVE


def _cmd_probe(args: argparse.Namespace) -> int:
    spec = _load_spec(args.spec)
    pair_lines = [
        line.strip()
        for line in _read_file(args.pairs).splitlines()
        if line.strip() and not line.strip().startswith("#")
    ]
    pairs = []
    for line in pair_lines:
        parts = line.split()
        if len(parts) != 2:
            raise CliError(f"{args.pairs}: expected '<term> <term>' per line", EXIT_USAGE)
        u, v = _parse_terms(spec, parts, args.pairs)
        pairs.append((u, v))
    context_lines = [
        line.strip()
        for line in _read_file(args.contexts).splitlines()
        if line.strip() and not line.strip().startswith("#")
    ]
    contexts = _parse_terms(spec, context_lines, args.contexts)
    violations = congruence_probe(spec, pairs, contexts, _bound(args, ()), kind=args.kind)
    if args.json:
        _emit(
            json.dumps(
                {
                    "kind": args.kind,
                    "violations": [
                        {
                            "context": render_term(v.context),
                            "left": render_term(v.left),
                            "right": render_term(v.right),
                        }
                        for v in violations
                    ],
                },
                indent=2,
                sort_keys=True,
            )
        )
    else:
        if violations:
            _emit("\n".join(f"violation: {v}" for v in violations))
        else:
            _emit("no violations")
    return EXIT_OK if not violations else EXIT_NEGATIVE


# ---------------------------------------------------------------------------
# Corpus expectations

@dataclass
class Expectation:
    line: int
    kind: str
    detail: str
    expected: str


@dataclass
class FileOutcome:
    path: str
    rows: list[tuple[Expectation, str, bool]]
    error: Optional[str] = None
    error_code: int = EXIT_NEGATIVE


def _parse_expectations(text: str, path: str) -> tuple[list[Expectation], list[str]]:
    expectations: list[Expectation] = []
    roots: list[str] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("# roots:"):
            roots.extend(stripped[len("# roots:"):].split())
        elif stripped.startswith("# expect "):
            body = stripped[len("# expect "):]
            if ":" not in body:
                raise CliError(f"{path}:{line_no}: malformed expectation (missing ':')", EXIT_USAGE)
            head, expected = body.rsplit(":", 1)
            head = head.strip()
            expected = expected.strip()
            if not head or not expected:
                raise CliError(f"{path}:{line_no}: malformed expectation", EXIT_USAGE)
            kind = head.split()[0]
            detail = head[len(kind):].strip()
            if kind not in ("format", "violation", "complete", "bisim", "probe"):
                raise CliError(f"{path}:{line_no}: unknown expectation {kind!r}", EXIT_USAGE)
            if kind == "violation":
                # payload sits after the colon: `# expect violation: <rule> <cond>`
                detail, expected = expected, "present"
            expectations.append(Expectation(line_no, kind, detail, expected))
    return expectations, roots


def _run_pts_expectations(path: str, text: str, expectations: list[Expectation]) -> FileOutcome:
    pts = load_pts(text)
    rows: list[tuple[Expectation, str, bool]] = []
    for exp in expectations:
        if exp.kind != "bisim":
            raise CliError(f"{path}:{exp.line}: only bisim expectations apply to .pts files", EXIT_USAGE)
        try:
            kind, sname, tname = exp.detail.split()
        except ValueError:
            raise CliError(f"{path}:{exp.line}: expected 'bisim <kind> <s> <t>'", EXIT_USAGE)
        s, t = opaque_state(sname), opaque_state(tname)
        if kind == "rooted":
            related = rooted_branching_bisim(pts, s, t)
        else:
            related = _relation_for(kind, pts).related(s, t)
        actual = "yes" if related else "no"
        rows.append((exp, actual, actual == exp.expected))
    return FileOutcome(path, rows)


def _run_spec_expectations(
    path: str, text: str, expectations: list[Expectation], root_texts: list[str]
) -> FileOutcome:
    spec, diags = try_parse_spec(text)
    if spec is None:
        messages = "; ".join(str(d) for d in diags if d.severity == "error")
        raise CliError(f"{path}: {messages}", EXIT_USAGE)
    roots = tuple(_parse_terms(spec, root_texts, path))
    rows: list[tuple[Expectation, str, bool]] = []
    report = None
    for exp in expectations:
        if exp.kind == "format":
            report = report or check_format(spec)
            actual = "pass" if report.overall else "fail"
        elif exp.kind == "violation":
            report = report or check_format(spec)
            try:
                rule, cond = exp.detail.split()
            except ValueError:
                raise CliError(f"{path}:{exp.line}: expected 'violation: <rule> <cond>'", EXIT_USAGE)
            hit = any(v.rule == rule and v.condition == cond for v in report.all_violations())
            actual = "present" if hit else "absent"
            rows.append((exp, actual, actual == exp.expected))
            continue
        elif exp.kind == "complete":
            if not roots:
                raise CliError(f"{path}:{exp.line}: complete expectation needs '# roots:'", EXIT_USAGE)
            complete, _ = is_complete(spec, DomainBound(roots))
            actual = "yes" if complete else "no"
        elif exp.kind == "bisim":
            try:
                kind, stext, ttext = exp.detail.split()
            except ValueError:
                raise CliError(f"{path}:{exp.line}: expected 'bisim <kind> <s> <t>'", EXIT_USAGE)
            s, t = _parse_terms(spec, [stext, ttext], path)
            pts = reachable_pts(spec, DomainBound(roots + (s, t), max_depth=10))
            if kind == "rooted":
                related = rooted_branching_bisim(pts, s, t)
            else:
                related = _relation_for(kind, pts).related(s, t)
            actual = "yes" if related else "no"
        elif exp.kind == "probe":
            try:
                kind, ctext, utext, vtext = exp.detail.split()
            except ValueError:
                raise CliError(
                    f"{path}:{exp.line}: expected 'probe <kind> <context> <u> <v>'", EXIT_USAGE
                )
            context, u, v = _parse_terms(spec, [ctext, utext, vtext], path)
            violations = congruence_probe(
                spec, [(u, v)], [context], DomainBound((), max_depth=10), kind=kind
            )
            actual = "ok" if not violations else "fail"
        else:  # pragma: no cover - guarded by _parse_expectations
            raise CliError(f"{path}:{exp.line}: unknown expectation", EXIT_USAGE)
        rows.append((exp, actual, actual == exp.expected))
    return FileOutcome(path, rows)


def _run_corpus_file(path: Path) -> FileOutcome:
    text = path.read_text(encoding="utf-8")
    expectations, roots = _parse_expectations(text, str(path))
    try:
        if path.suffix == ".pts":
            return _run_pts_expectations(str(path), text, expectations)
        return _run_spec_expectations(str(path), text, expectations, roots)
    except ParseFailure as exc:
        msgs = "; ".join(str(d) for d in exc.diagnostics)
        raise CliError(f"{path}: {msgs}", EXIT_USAGE)


def corpus_run(directory: str, threads: Optional[int] = None) -> tuple[list[FileOutcome], int]:
    base = Path(directory)
    if not base.is_dir():
        raise CliError(f"not a directory: {directory}", EXIT_USAGE)
    files = sorted(p for p in base.iterdir() if p.suffix in (".ptss", ".pts"))
    if threads is None:
        env = os.environ.get("PTSS_KIT_THREADS")
        threads = max(1, int(env)) if env else min(4, max(1, len(files)))
    outcomes: list[FileOutcome] = []
    usage_error = False
    if files:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [(p, pool.submit(_run_corpus_file, p)) for p in files]
            for p, future in futures:
                try:
                    outcomes.append(future.result())
                except CliError as exc:
                    usage_error = True
                    outcomes.append(FileOutcome(str(p), [], error=str(exc), error_code=exc.code))
                except (DomainBoundError, NotConvergedError, IncompleteError, ProbeError,
                        RuleInstantiationError) as exc:
                    outcomes.append(
                        FileOutcome(str(p), [], error=str(exc), error_code=EXIT_BOUNDS)
                    )
    mismatches = any(
        outcome.error is not None or any(not ok for _, _, ok in outcome.rows)
        for outcome in outcomes
    )
    if usage_error:
        code = EXIT_USAGE
    elif mismatches:
        code = EXIT_NEGATIVE
    else:
        code = EXIT_OK
    return outcomes, code


def _cmd_corpus_run(args: argparse.Namespace) -> int:
    outcomes, code = corpus_run(args.directory, threads=args.threads)
    total = 0
    failed = 0
    lines = []
    for outcome in sorted(outcomes, key=lambda o: o.path):
        if outcome.error is not None:
            lines.append(f"{outcome.path}: ERROR: {outcome.error}")
            failed += 1
            continue
        for exp, actual, ok in outcome.rows:
            total += 1
            if not ok:
                failed += 1
            status = "PASS" if ok else "FAIL"
            desc = f"{exp.kind} {exp.detail}".strip()
            lines.append(
                f"{outcome.path}:{exp.line}: {desc}: expected {exp.expected}, got {actual}: {status}"
            )
    lines.append(f"summary: {total} expectations, {failed} failed")
    if args.json:
        payload = {
            "files": [
                {
                    "path": o.path,
                    "error": o.error,
                    "expectations": [
                        {
                            "line": e.line,
                            "kind": e.kind,
                            "detail": e.detail,
                            "expected": e.expected,
                            "actual": actual,
                            "ok": ok,
                        }
                        for e, actual, ok in o.rows
                    ],
                }
                for o in sorted(outcomes, key=lambda o: o.path)
            ],
            "failed": failed,
            "total": total,
        }
        _emit(json.dumps(payload, indent=2, sort_keys=True))
    else:
        _emit("\n".join(lines))
    return code


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptsskit",
        description="Probabilistic transition system specifications: parse, solve, compare, check.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-format", help="decide membership in the safe rule format")
    p.add_argument("spec")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_check_format)

    p = sub.add_parser("stable-model", help="compute the least 3-valued stable model")
    p.add_argument("spec")
    p.add_argument("--root", action="append", default=[])
    p.add_argument("--json", action="store_true")
    _add_bound_flags(p)
    p.set_defaults(fn=_cmd_stable_model)

    p = sub.add_parser("pts", help="export the reachable PTS of a complete spec")
    p.add_argument("spec")
    p.add_argument("--root", action="append", default=[])
    p.add_argument("-o", "--out")
    _add_bound_flags(p)
    p.set_defaults(fn=_cmd_pts)

    p = sub.add_parser("bisim", help="decide a bisimulation query")
    p.add_argument("path", help=".ptss spec or .pts automaton")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("s")
    p.add_argument("t")
    p.add_argument("--root", action="append", default=[])
    p.add_argument("--json", action="store_true")
    _add_bound_flags(p)
    p.set_defaults(fn=_cmd_bisim)

    p = sub.add_parser("probe-congruence", help="wrap related pairs in contexts and re-check")
    p.add_argument("spec")
    p.add_argument("--pairs", required=True, help="file with '<term> <term>' lines")
    p.add_argument("--contexts", required=True, help="file with one-hole contexts, one per line")
    p.add_argument("--kind", choices=KINDS, default="rooted")
    p.add_argument("--json", action="store_true")
    _add_bound_flags(p)
    p.set_defaults(fn=_cmd_probe)

    p = sub.add_parser("corpus-run", help="run expectation headers across a directory")
    p.add_argument("directory")
    p.add_argument("--threads", type=int)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_corpus_run)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(exc, file=sys.stderr)
        return exc.code
    except ProbeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainBoundError, NotConvergedError, IncompleteError, RuleInstantiationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BOUNDS
    except ParseFailure as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""A small declarative language for donor strategies.

Programs describe a first-round donation fraction, a rule combining the
observed trace entries into a base fraction for later rounds, threshold
adjustments, periodic drift, seeded jitter, optional punishment, and
hard caps. Evaluation is pure: the same program, context and stream
always produce the same fraction. The grammar is documented in
docs/grammar.md; the bundled corpus encodes reference strategies, one
program per file.

Trace entries are addressed t1 (the recipient's most recent donor
action) through tN (further back in the chain). When fewer entries are
available than a rule references, weights renormalize over the entries
that exist.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field, replace
from importlib import resources


class DslSyntaxError(Exception):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class DslSemanticError(Exception):
    pass


# --- program representation ---

@dataclass(frozen=True)
class Expr:
    """Weighted combination of trace entries plus a constant offset."""

    weights: tuple = ()   # (entry_index, weight) pairs, ascending index
    offset: float = 0.0


@dataclass(frozen=True)
class Condition:
    subject: str          # "entry" | "avg" | "any" | "all"
    lo: int
    hi: int
    op: str               # "<" | "<=" | ">" | ">="
    threshold: float


@dataclass(frozen=True)
class ThresholdRule:
    condition: Condition
    mode: str             # "set" | "add"
    expr: Expr | None = None
    delta: float = 0.0
    local_min: float | None = None
    local_max: float | None = None


@dataclass(frozen=True)
class Drift:
    delta: float
    every: int


@dataclass(frozen=True)
class PunishRule:
    condition: Condition
    spend_fraction: float


@dataclass(frozen=True)
class FinalRule:
    """A rule over the last fraction of rounds. Agents never know the
    horizon, so this clause parses and prints but never fires."""

    window: float
    mode: str
    expr: Expr | None = None
    delta: float = 0.0
    local_min: float | None = None
    local_max: float | None = None


@dataclass(frozen=True)
class StrategyProgram:
    initial_fraction: float
    trace_rule: Expr | None = None
    caps: tuple = (0.0, 1.0)
    threshold_rules: tuple = ()
    periodic_drift: Drift | None = None
    jitter: float = 0.0
    punish_rule: PunishRule | None = None
    final_rule: FinalRule | None = None

    def to_source(self) -> str:
        return _print_program(self)


@dataclass
class EvalContext:
    round: int
    trace: tuple
    donor_resources: float
    rng: random.Random = field(default_factory=lambda: random.Random(0))


# --- tokenizer ---

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t]+)"
    r"|(?P<comment>#[^\n]*)"
    r"|(?P<newline>\n)"
    r"|(?P<entry>t\d+)"
    r"|(?P<word>[a-zA-Z_]+)"
    r"|(?P<number>\d+(?:\.\d+)?)"
    r"|(?P<range>\.\.)"
    r"|(?P<op><=|>=|<|>)"
    r"|(?P<sym>[;%*+\-()])"
)

_KEYWORDS = {
    "init", "later", "cap", "if", "then", "set", "add", "min", "max",
    "drift", "every", "rounds", "jitter", "punish", "spend", "final",
    "avg", "any", "all",
}


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(source: str):
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise DslSyntaxError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "newline":
            line += 1
            col = 1
        elif kind not in ("ws", "comment"):
            if kind == "word" and text not in _KEYWORDS:
                raise DslSyntaxError(f"unknown keyword {text!r}", line, col)
            tokens.append(_Token(kind, text, line, col))
            col += len(text)
        else:
            col += len(text)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


# --- parser (recursive descent over the token list) ---

class _Parser:
    def __init__(self, tokens, max_trace_depth: int):
        self.tokens = tokens
        self.pos = 0
        self.max_depth = max_trace_depth

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, message: str):
        tok = self.peek()
        raise DslSyntaxError(message, tok.line, tok.column)

    def expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            self.fail(f"expected {want!r}, found {tok.text or tok.kind!r}")
        return self.next()

    def accept(self, kind: str, text: str | None = None) -> _Token | None:
        tok = self.peek()
        if tok.kind == kind and (text is None or tok.text == text):
            return self.next()
        return None

    # numbers and fractions

    def number(self) -> float:
        tok = self.expect("number")
        return float(tok.text)

    def fraction(self) -> float:
        """A number, interpreted as a percentage when followed by '%'."""
        value = self.number()
        if self.accept("sym", "%"):
            return value / 100.0
        return value

    def signed_fraction(self) -> float:
        sign = 1.0
        if self.accept("sym", "-"):
            sign = -1.0
        elif self.accept("sym", "+"):
            pass
        return sign * self.fraction()

    def entry_index(self) -> int:
        tok = self.expect("entry")
        index = int(tok.text[1:])
        if index < 1 or index > self.max_depth:
            raise DslSemanticError(
                f"trace entry {tok.text} out of range 1..{self.max_depth}"
            )
        return index

    # grammar productions

    def parse_program(self) -> StrategyProgram:
        clauses = {}
        thresholds = []
        while self.peek().kind != "eof":
            tok = self.peek()
            if tok.kind != "word":
                self.fail(f"expected a clause keyword, found {tok.text!r}")
            name = tok.text
            if name == "if":
                thresholds.append(self.parse_threshold())
            else:
                if name in clauses:
                    raise DslSemanticError(f"duplicate {name!r} clause")
                parser = getattr(self, f"parse_{name}", None)
                if parser is None:
                    self.fail(f"{name!r} cannot start a clause")
                clauses[name] = parser()
            if not self.accept("sym", ";") and self.peek().kind != "eof":
                self.fail("expected ';' between clauses")
        if "init" not in clauses:
            raise DslSemanticError("program must declare an 'init' clause")
        program = StrategyProgram(
            initial_fraction=clauses["init"],
            trace_rule=clauses.get("later"),
            caps=clauses.get("cap", (0.0, 1.0)),
            threshold_rules=tuple(thresholds),
            periodic_drift=clauses.get("drift"),
            jitter=clauses.get("jitter", 0.0),
            punish_rule=clauses.get("punish"),
            final_rule=clauses.get("final"),
        )
        _validate(program)
        return program

    def parse_init(self) -> float:
        self.expect("word", "init")
        return self.fraction()

    def parse_later(self) -> Expr:
        self.expect("word", "later")
        return self.parse_expr()

    def parse_cap(self) -> tuple:
        self.expect("word", "cap")
        lo = self.fraction()
        hi = self.fraction()
        return (lo, hi)

    def parse_jitter(self) -> float:
        self.expect("word", "jitter")
        return self.fraction()

    def parse_drift(self) -> Drift:
        self.expect("word", "drift")
        delta = self.signed_fraction()
        self.expect("word", "every")
        every_tok = self.expect("number")
        every = int(float(every_tok.text))
        if every < 1:
            raise DslSemanticError("drift period must be >= 1 round")
        self.expect("word", "rounds")
        return Drift(delta=delta, every=every)

    def parse_punish(self) -> PunishRule:
        self.expect("word", "punish")
        condition = self.parse_condition()
        self.expect("word", "spend")
        return PunishRule(condition=condition, spend_fraction=self.fraction())

    def parse_final(self) -> FinalRule:
        self.expect("word", "final")
        window = self.fraction()
        self.expect("word", "rounds")
        mode, expr, delta, lo, hi = self.parse_action()
        return FinalRule(window=window, mode=mode, expr=expr, delta=delta,
                         local_min=lo, local_max=hi)

    def parse_threshold(self) -> ThresholdRule:
        self.expect("word", "if")
        condition = self.parse_condition()
        self.expect("word", "then")
        mode, expr, delta, lo, hi = self.parse_action()
        return ThresholdRule(condition=condition, mode=mode, expr=expr,
                             delta=delta, local_min=lo, local_max=hi)

    def parse_action(self):
        if self.accept("word", "set"):
            mode, expr, delta = "set", self.parse_expr(), 0.0
        elif self.accept("word", "add"):
            mode, expr, delta = "add", None, self.signed_fraction()
        else:
            self.fail("expected 'set' or 'add'")
        local_min = self.fraction() if self.accept("word", "min") else None
        local_max = self.fraction() if self.accept("word", "max") else None
        return mode, expr, delta, local_min, local_max

    def parse_condition(self) -> Condition:
        tok = self.peek()
        if tok.kind == "word" and tok.text in ("avg", "any", "all"):
            subject = self.next().text
            self.expect("sym", "(")
            lo = self.entry_index()
            self.expect("range")
            hi = self.entry_index()
            self.expect("sym", ")")
            if hi < lo:
                raise DslSemanticError(f"empty entry range t{lo}..t{hi}")
        elif tok.kind == "entry":
            subject = "entry"
            lo = hi = self.entry_index()
        else:
            self.fail("expected a trace entry or avg/any/all(...)")
        op_tok = self.expect("op")
        return Condition(subject=subject, lo=lo, hi=hi, op=op_tok.text,
                         threshold=self.fraction())

    def parse_expr(self) -> Expr:
        weights: dict[int, float] = {}
        offset = 0.0
        sign = 1.0
        while True:
            term_weights, term_offset = self.parse_term()
            for index, w in term_weights:
                weights[index] = weights.get(index, 0.0) + sign * w
            offset += sign * term_offset
            if self.accept("sym", "+"):
                sign = 1.0
            elif self.accept("sym", "-"):
                sign = -1.0
            else:
                break
        return Expr(weights=tuple(sorted(weights.items())), offset=offset)

    def parse_term(self):
        tok = self.peek()
        if tok.kind == "word" and tok.text == "avg":
            self.next()
            self.expect("sym", "(")
            lo = self.entry_index()
            self.expect("range")
            hi = self.entry_index()
            self.expect("sym", ")")
            if hi < lo:
                raise DslSemanticError(f"empty entry range t{lo}..t{hi}")
            span = hi - lo + 1
            return [(k, 1.0 / span) for k in range(lo, hi + 1)], 0.0
        if tok.kind == "entry":
            return [(self.entry_index(), 1.0)], 0.0
        if tok.kind == "number":
            value = self.number()
            if self.accept("sym", "%"):
                return [], value / 100.0
            # a bare number here is a weight and must multiply an entry
            self.expect("sym", "*")
            return [(self.entry_index(), value)], 0.0
        self.fail("expected a term (entry, weight*entry, avg(...) or percent)")


def _validate(program: StrategyProgram) -> None:
    lo, hi = program.caps
    if not (0.0 <= lo <= hi <= 1.0):
        raise DslSemanticError(f"caps must satisfy 0 <= min <= max <= 1, got {lo} {hi}")
    if not (lo <= program.initial_fraction <= hi):
        raise DslSemanticError(
            f"initial fraction {program.initial_fraction} falls outside caps [{lo}, {hi}]"
        )
    if program.jitter < 0:
        raise DslSemanticError("jitter half-width must be >= 0")
    if program.punish_rule is not None and not (0.0 <= program.punish_rule.spend_fraction <= 1.0):
        raise DslSemanticError("punish spend fraction must lie in [0, 1]")
    for expr in _exprs_of(program):
        for _, w in expr.weights:
            if w != w or w in (float("inf"), float("-inf")):
                raise DslSemanticError("weights must be finite")


def _exprs_of(program: StrategyProgram):
    if program.trace_rule is not None:
        yield program.trace_rule
    for rule in program.threshold_rules:
        if rule.expr is not None:
            yield rule.expr
    if program.final_rule is not None and program.final_rule.expr is not None:
        yield program.final_rule.expr


def parse_strategy(source: str, *, max_trace_depth: int = 3) -> StrategyProgram:
    return _Parser(_tokenize(source), max_trace_depth).parse_program()


# --- evaluation ---

def _eval_expr(expr: Expr, fractions) -> float:
    available = [(k, w) for k, w in expr.weights if k <= len(fractions)]
    total = sum(w for _, w in available)
    value = expr.offset
    if available and total != 0.0:
        value += sum(w * fractions[k - 1] for k, w in available) / total
    return value


_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def _eval_condition(cond: Condition, fractions) -> bool:
    op = _OPS[cond.op]
    values = [fractions[k - 1] for k in range(cond.lo, cond.hi + 1) if k <= len(fractions)]
    if not values:
        return False
    if cond.subject in ("entry", "any"):
        if cond.subject == "entry" and cond.hi > len(fractions):
            return False
        return any(op(v, cond.threshold) for v in values)
    if cond.subject == "all":
        return all(op(v, cond.threshold) for v in values)
    return op(sum(values) / len(values), cond.threshold)


def evaluate(program: StrategyProgram, ctx: EvalContext) -> float:
    """Donation fraction for one decision; always lands inside the
    program caps intersected with [0, 1]. An empty trace yields exactly
    the initial fraction (jitter suppressed)."""

    if not ctx.trace:
        return program.initial_fraction
    fractions = [entry.fraction for entry in ctx.trace]
    if program.trace_rule is not None:
        value = _eval_expr(program.trace_rule, fractions)
    else:
        value = program.initial_fraction
    for rule in program.threshold_rules:
        if not _eval_condition(rule.condition, fractions):
            continue
        if rule.mode == "set":
            value = _eval_expr(rule.expr, fractions)
        else:
            value = value + rule.delta
        if rule.local_min is not None:
            value = max(value, rule.local_min)
        if rule.local_max is not None:
            value = min(value, rule.local_max)
    if program.periodic_drift is not None:
        value += program.periodic_drift.delta * ((ctx.round - 1) // program.periodic_drift.every)
    if program.jitter > 0.0:
        value += ctx.rng.uniform(-program.jitter, program.jitter)
    lo, hi = program.caps
    return min(max(value, max(lo, 0.0)), min(hi, 1.0))


def evaluate_punishment(program: StrategyProgram, ctx: EvalContext) -> float:
    """Fraction of resources to spend on punishment, 0 when the program
    has no punish rule or its condition does not hold."""

    if program.punish_rule is None or not ctx.trace:
        return 0.0
    fractions = [entry.fraction for entry in ctx.trace]
    if _eval_condition(program.punish_rule.condition, fractions):
        return program.punish_rule.spend_fraction
    return 0.0


# --- canonical printing ---

def _fmt_fraction(value: float) -> str:
    """Shortest percent form that parses back to exactly this value,
    else a bare decimal fraction."""

    scaled = value * 100.0
    candidates = [f"{scaled:.0f}", f"{scaled:.1f}", f"{scaled:.2f}", f"{scaled:.4f}", repr(scaled)]
    for text in candidates:
        if text.endswith(".0"):
            text = text[:-2]
        if "." in text:
            text = text.rstrip("0").rstrip(".")
        if float(text) / 100.0 == value:
            return f"{text}%"
    return repr(value)


def _fmt_signed(value: float) -> str:
    text = _fmt_fraction(abs(value))
    return f"-{text}" if value < 0 else text


def _fmt_weight(value: float) -> str:
    text = repr(value)
    return text[:-2] if text.endswith(".0") else text


def _uniform_run(weights) -> tuple | None:
    """Detect weights that desugar from avg(tlo..thi)."""

    if not weights:
        return None
    indices = [k for k, _ in weights]
    lo, hi = indices[0], indices[-1]
    if indices != list(range(lo, hi + 1)):
        return None
    span = hi - lo + 1
    if all(w == 1.0 / span for _, w in weights):
        return lo, hi
    return None


def _fmt_expr(expr: Expr) -> str:
    parts = []
    run = _uniform_run(expr.weights)
    if run is not None:
        lo, hi = run
        parts.append(f"t{lo}" if lo == hi else f"avg(t{lo}..t{hi})")
    else:
        for index, weight in expr.weights:
            term = f"t{index}" if weight == 1.0 else f"{_fmt_weight(abs(weight))}*t{index}"
            if not parts:
                parts.append(term if weight > 0 else f"-{term}")
            else:
                parts.append(f"+ {term}" if weight > 0 else f"- {term}")
    if expr.offset != 0.0 or not parts:
        text = _fmt_fraction(abs(expr.offset))
        if not parts:
            parts.append(text if expr.offset >= 0 else f"-{text}")
        else:
            parts.append(f"+ {text}" if expr.offset > 0 else f"- {text}")
    return " ".join(parts)


def _fmt_condition(cond: Condition) -> str:
    if cond.subject == "entry":
        subject = f"t{cond.lo}"
    else:
        subject = f"{cond.subject}(t{cond.lo}..t{cond.hi})"
    return f"{subject} {cond.op} {_fmt_fraction(cond.threshold)}"


def _fmt_action(mode: str, expr, delta, local_min, local_max) -> str:
    if mode == "set":
        text = f"set {_fmt_expr(expr)}"
    else:
        text = f"add {_fmt_signed(delta)}"
    if local_min is not None:
        text += f" min {_fmt_fraction(local_min)}"
    if local_max is not None:
        text += f" max {_fmt_fraction(local_max)}"
    return text


def _print_program(program: StrategyProgram) -> str:
    clauses = [f"init {_fmt_fraction(program.initial_fraction)}"]
    if program.trace_rule is not None:
        clauses.append(f"later {_fmt_expr(program.trace_rule)}")
    for rule in program.threshold_rules:
        clauses.append(
            f"if {_fmt_condition(rule.condition)} then "
            + _fmt_action(rule.mode, rule.expr, rule.delta, rule.local_min, rule.local_max)
        )
    if program.periodic_drift is not None:
        clauses.append(
            f"drift {_fmt_signed(program.periodic_drift.delta)} every {program.periodic_drift.every} rounds"
        )
    if program.jitter > 0.0:
        clauses.append(f"jitter {_fmt_fraction(program.jitter)}")
    if program.punish_rule is not None:
        clauses.append(
            f"punish {_fmt_condition(program.punish_rule.condition)} "
            f"spend {_fmt_fraction(program.punish_rule.spend_fraction)}"
        )
    if program.final_rule is not None:
        fr = program.final_rule
        clauses.append(
            f"final {_fmt_fraction(fr.window)} rounds "
            + _fmt_action(fr.mode, fr.expr, fr.delta, fr.local_min, fr.local_max)
        )
    if program.caps != (0.0, 1.0):
        lo, hi = program.caps
        clauses.append(f"cap {_fmt_fraction(lo)} {_fmt_fraction(hi)}")
    return "; ".join(clauses)


# --- mutation (scripted-mode stand-in for sampling variation) ---

def perturb_program(program: StrategyProgram, rng: random.Random, scale: float = 0.05) -> StrategyProgram:
    """Copy a program with the initial fraction and trace-rule offset
    shifted by up to +/- scale (absolute), clamped into the caps. Values
    are quantized to 4 decimals so printed sources stay readable."""

    lo, hi = program.caps
    init = program.initial_fraction + rng.uniform(-scale, scale)
    init = round(min(max(init, max(lo, 0.0)), min(hi, 1.0)), 4)
    updated = replace(program, initial_fraction=init)
    if program.trace_rule is not None:
        offset = program.trace_rule.offset + rng.uniform(-scale, scale)
        offset = round(min(max(offset, -1.0), 1.0), 4)
        updated = replace(updated, trace_rule=replace(program.trace_rule, offset=offset))
    return updated


# --- bundled corpus ---

def corpus_names() -> list:
    root = resources.files("donorgame").joinpath("corpus")
    return sorted(p.name[: -len(".strategy")] for p in root.iterdir() if p.name.endswith(".strategy"))


def corpus_source(name: str) -> str:
    path = resources.files("donorgame").joinpath("corpus").joinpath(f"{name}.strategy")
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise KeyError(f"no corpus strategy named {name!r}") from None


def corpus_load() -> list:
    """All bundled strategies as (name, program) pairs; raises if any
    corpus file fails to parse."""

    out = []
    for name in corpus_names():
        try:
            out.append((name, parse_strategy(corpus_source(name))))
        except (DslSyntaxError, DslSemanticError) as exc:
            raise DslSemanticError(f"corpus entry {name!r} is corrupt: {exc}") from exc
    return out

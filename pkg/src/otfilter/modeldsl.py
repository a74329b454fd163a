"""A small arithmetic expression language for model matrix entries.

Grammar (``^`` binds tighter than unary minus, and is right associative)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

``FUNC`` is one of ``exp``, ``log``, ``sqrt``, ``abs``. Expressions are
compiled to closures once and then evaluated against a name -> value map.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Union

from .exceptions import ConfigError, EvalError, ParseError, UnboundParameter

FUNCTIONS = ("exp", "log", "sqrt", "abs")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Name:
    id: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Name, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.peek()
        if val != value or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {found}", pos)
        self.take()

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        kind, val, pos = self.peek()
        if kind == "num":
            self.take()
            return Num(float(val))
        if kind == "name":
            self.take()
            if self.peek()[:2] == ("op", "("):
                if val not in FUNCTIONS:
                    raise ParseError(f"unknown function {val!r}", pos)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val in FUNCTIONS:
                raise ParseError(f"function {val!r} requires an argument", pos)
            return Name(val)
        if (kind, val) == ("op", "("):
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"expected an operand, found {found}", pos)


def parse_expr(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    if not isinstance(text, str):
        raise ParseError(f"expected a string, got {type(text).__name__}", 0)
    return _Parser(text).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Num) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3
    return 5


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v)) if v != 0 else "0"
    return repr(v)


def to_string(e: Expr) -> str:
    """Canonical printer using the minimal number of parentheses."""

    def wrap(sub, cond):
        s = to_string(sub)
        return f"({s})" if cond else s

    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    if isinstance(e, Neg):
        return "-" + wrap(e.operand, _prec(e.operand) < 3)
    p = _PREC[e.op]
    if e.op == "^":
        return f"{wrap(e.left, _prec(e.left) < 5)}^{wrap(e.right, _prec(e.right) < 3)}"
    left = wrap(e.left, _prec(e.left) < p)
    right = wrap(e.right, _prec(e.right) <= p)
    return f"{left}{e.op}{right}" if p == 2 else f"{left} {e.op} {right}"


def free_names(e: Expr) -> set:
    if isinstance(e, Name):
        return {e.id}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return free_names(e.operand)
    if isinstance(e, Call):
        return free_names(e.arg)
    return free_names(e.left) | free_names(e.right)


def _checked(v: float, what: str) -> float:
    if not math.isfinite(v):
        raise EvalError(f"{what} produced a non-finite value")
    return v


def _log(x):
    if x <= 0:
        raise EvalError(f"log of non-positive value {x}")
    return math.log(x)


def _sqrt(x):
    if x < 0:
        raise EvalError(f"sqrt of negative value {x}")
    return math.sqrt(x)


def _exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        raise EvalError(f"exp overflow at {x}") from None


_FUNCS = {"exp": _exp, "log": _log, "sqrt": _sqrt, "abs": abs}


def _div(a, b):
    if b == 0:
        raise EvalError("division by zero")
    return _checked(a / b, "division")


def _pow(a, b):
    if a == 0 and b < 0:
        raise EvalError("zero raised to a negative power")
    if a < 0 and not float(b).is_integer():
        raise EvalError(f"negative base {a} with non-integer exponent {b}")
    try:
        return _checked(float(a) ** float(b), "power")
    except OverflowError:
        raise EvalError(f"overflow in {a}^{b}") from None


_BINOPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
    "^": _pow,
}


def compile_expr(e: Expr) -> Callable[[Mapping[str, float]], float]:
    """Compile an expression tree to a closure ``f(params) -> float``."""
    if isinstance(e, Num):
        v = float(e.value)
        return lambda p: v
    if isinstance(e, Name):
        key = e.id

        def name(p):
            try:
                return float(p[key])
            except KeyError:
                raise UnboundParameter(f"unbound parameter {key!r}") from None

        return name
    if isinstance(e, Neg):
        f = compile_expr(e.operand)
        return lambda p: -f(p)
    if isinstance(e, Call):
        g = _FUNCS[e.func]
        f = compile_expr(e.arg)
        return lambda p: g(f(p))
    op = _BINOPS[e.op]
    fl, fr = compile_expr(e.left), compile_expr(e.right)
    return lambda p: op(fl(p), fr(p))


def eval_expr(e: Union[Expr, str], params: Mapping[str, float]) -> float:
    """Evaluate an expression; domain violations raise :class:`EvalError`."""
    if isinstance(e, str):
        e = parse_expr(e)
    v = compile_expr(e)(params)
    return _checked(float(v), "expression")


# -- parameters and priors ---------------------------------------------------

PRIOR_FAMILIES = ("none", "uniform", "normal", "gamma", "beta", "invgamma")
_LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class Prior:
    """A prior family parameterized by mean and standard deviation."""

    family: str = "none"
    mean: Optional[float] = None
    sd: Optional[float] = None

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        if fam not in PRIOR_FAMILIES:
            raise ConfigError(f"unknown prior family {self.family!r}")
        if fam in ("none", "uniform"):
            return
        if self.mean is None or self.sd is None:
            raise ConfigError(f"{fam} prior needs mean and sd")
        m, s = float(self.mean), float(self.sd)
        if not s > 0:
            raise ConfigError(f"{fam} prior needs sd > 0")
        if fam in ("gamma", "invgamma") and not m > 0:
            raise ConfigError(f"{fam} prior needs mean > 0")
        if fam == "beta":
            if not 0 < m < 1:
                raise ConfigError("beta prior mean must lie in (0, 1)")
            if s * s >= m * (1 - m):
                raise ConfigError("beta prior sd too large for its mean")
        if fam == "invgamma":
            a, _ = self.natural()
            if a - 2 < 0.05:
                warnings.warn(
                    f"inverse-gamma prior (mean={m}, sd={s}) has shape {a:.4f}, "
                    "barely above 2; the tail is extremely heavy",
                    RuntimeWarning,
                    stacklevel=3,
                )

    def natural(self):
        """Natural parameters: (mu, sigma), (shape, rate), (a, b) or (shape, scale)."""
        m, s = float(self.mean), float(self.sd)
        fam = self.family
        if fam == "normal":
            return m, s
        if fam == "gamma":
            return (m / s) ** 2, m / s**2
        if fam == "beta":
            c = m * (1 - m) / s**2 - 1
            return m * c, (1 - m) * c
        if fam == "invgamma":
            a = 2 + (m / s) ** 2
            return a, m * (a - 1)
        raise ConfigError(f"{fam} prior has no natural parameters")

    def logpdf(self, x: float) -> float:
        fam = self.family
        if fam in ("none", "uniform"):
            return 0.0
        p1, p2 = self.natural()
        if fam == "normal":
            return -0.5 * _LOG_2PI - math.log(p2) - 0.5 * ((x - p1) / p2) ** 2
        if fam == "gamma":
            if x <= 0:
                return -math.inf
            return p1 * math.log(p2) - math.lgamma(p1) + (p1 - 1) * math.log(x) - p2 * x
        if fam == "beta":
            if not 0 < x < 1:
                return -math.inf
            lb = math.lgamma(p1) + math.lgamma(p2) - math.lgamma(p1 + p2)
            return (p1 - 1) * math.log(x) + (p2 - 1) * math.log1p(-x) - lb
        if x <= 0:
            return -math.inf
        return p1 * math.log(p2) - math.lgamma(p1) - (p1 + 1) * math.log(x) - p2 / x

    def center(self) -> Optional[float]:
        return None if self.family in ("none", "uniform") else float(self.mean)


@dataclass(frozen=True)
class ParamSpec:
    """A named parameter with box bounds and an optional prior."""

    name: str
    lower: float = -math.inf
    upper: float = math.inf
    prior: Prior = Prior()

    def __post_init__(self):
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", self.name) or self.name in FUNCTIONS:
            raise ConfigError(f"invalid parameter name {self.name!r}")
        lo, hi = float(self.lower), float(self.upper)
        if not lo < hi:
            raise ConfigError(f"parameter {self.name!r}: lower bound must be < upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if isinstance(self.prior, Mapping):
            object.__setattr__(self, "prior", Prior(**self.prior))

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper

    def start(self) -> float:
        """Default starting value: prior mean if inside the box, else the box midpoint."""
        c = self.prior.center()
        if c is not None and self.lower < c < self.upper:
            return c
        lo, hi = self.lower, self.upper
        if math.isfinite(lo) and math.isfinite(hi):
            return 0.5 * (lo + hi)
        if math.isfinite(lo):
            return lo + 1.0
        if math.isfinite(hi):
            return hi - 1.0
        return 0.0


def log_prior(spec: ParamSpec, value: float) -> float:
    """Log prior density; ``-inf`` outside the parameter bounds."""
    if not spec.contains(value):
        return -math.inf
    return spec.prior.logpdf(float(value))

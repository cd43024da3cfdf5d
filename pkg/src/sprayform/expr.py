"""Expression DSL: parsing, exact symbolic derivatives, and coefficient fields.

All user-supplied coefficient functions (bivector components, anchor entries,
structure functions, form coefficients) are trees of this module's ``Expr``
nodes.  Derivatives are taken symbolically on the tree, so residual checks
downstream are limited only by evaluation roundoff.  The only rewriting done
at construction time is constant folding (including 0/1 absorption); there is
no canonical form, and correctness is always established by evaluation.

Grammar (EBNF)::

    expression := term {("+" | "-") term}
    term       := power {("*" | "/") power}
    power      := unary ["^" exponent]
    unary      := "-" unary | atom
    atom       := NUMBER | IDENT | IDENT "(" expression ")" | "(" expression ")"
    exponent   := ["-"] INTEGER

Precedence, tightest first: unary minus, "^", "*" and "/", "+" and "-";
binary operators associate to the left.  "^" takes a literal integer
exponent and does not chain ("x^2^3" is a syntax error).  The callable
functions are exactly sin, cos, exp, log, sqrt; every other identifier must
be a declared variable.

Expressions are immutable after construction and safe to share between
threads.
"""

from __future__ import annotations

import itertools
import math
import re

import numpy as np

from .errors import (
    ArityError,
    DimensionError,
    EvalDomainError,
    ExprSyntaxError,
    UnknownIdentifierError,
)

__all__ = [
    "Expr", "Const", "Var", "Add", "Sub", "Mul", "Div", "Neg", "Pow", "Call",
    "parse", "partial", "subst", "to_source", "compile_exprs",
    "ScalarField", "VectorField", "BivectorField", "FormField",
    "PolyVectorField", "schouten", "wedge_vector_bivector",
    "exterior_derivative", "interior_product", "lie_derivative",
    "ZERO", "ONE", "const", "var",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


# ---------------------------------------------------------------------------
# Expression trees


class Expr:
    """Immutable expression tree node."""

    __slots__ = ()

    def eval(self, env):
        raise NotImplementedError

    def diff(self, name):
        raise NotImplementedError

    def variables(self):
        out = set()
        self._collect(out)
        return out

    def _collect(self, out):
        pass

    def __eq__(self, other):
        return type(self) is type(other) and self._key() == other._key()

    def __hash__(self):
        return hash((type(self).__name__,) + self._key())

    def _key(self):
        return ()

    def __repr__(self):
        return f"Expr({to_source(self)!r})"

    @property
    def is_zero(self):
        return isinstance(self, Const) and self.value == 0.0

    @property
    def is_one(self):
        return isinstance(self, Const) and self.value == 1.0


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        object.__setattr__(self, "value", float(value))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def eval(self, env):
        return self.value

    def diff(self, name):
        return ZERO

    def _key(self):
        return (self.value,)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name):
        object.__setattr__(self, "name", name)

    __setattr__ = Const.__setattr__

    def eval(self, env):
        return env[self.name]

    def diff(self, name):
        return ONE if name == self.name else ZERO

    def _collect(self, out):
        out.add(self.name)

    def _key(self):
        return (self.name,)


class _Binary(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    __setattr__ = Const.__setattr__

    def _collect(self, out):
        self.a._collect(out)
        self.b._collect(out)

    def _key(self):
        return (self.a, self.b)


class Add(_Binary):
    __slots__ = ()

    def eval(self, env):
        return self.a.eval(env) + self.b.eval(env)

    def diff(self, name):
        return add(self.a.diff(name), self.b.diff(name))


class Sub(_Binary):
    __slots__ = ()

    def eval(self, env):
        return self.a.eval(env) - self.b.eval(env)

    def diff(self, name):
        return sub(self.a.diff(name), self.b.diff(name))


class Mul(_Binary):
    __slots__ = ()

    def eval(self, env):
        return self.a.eval(env) * self.b.eval(env)

    def diff(self, name):
        return add(mul(self.a.diff(name), self.b), mul(self.a, self.b.diff(name)))


class Div(_Binary):
    __slots__ = ()

    def eval(self, env):
        den = self.b.eval(env)
        if den == 0.0:
            raise EvalDomainError("division by zero")
        return self.a.eval(env) / den

    def diff(self, name):
        # (a/b)' = a'/b - a b'/b^2
        return sub(div(self.a.diff(name), self.b),
                   div(mul(self.a, self.b.diff(name)), mul(self.b, self.b)))


class Neg(Expr):
    __slots__ = ("a",)

    def __init__(self, a):
        object.__setattr__(self, "a", a)

    __setattr__ = Const.__setattr__

    def eval(self, env):
        return -self.a.eval(env)

    def diff(self, name):
        return neg(self.a.diff(name))

    def _collect(self, out):
        self.a._collect(out)

    def _key(self):
        return (self.a,)


class Pow(Expr):
    """Integer power.  The exponent is part of the node, not a subtree."""

    __slots__ = ("a", "n")

    def __init__(self, a, n):
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "n", int(n))

    __setattr__ = Const.__setattr__

    def eval(self, env):
        base = self.a.eval(env)
        if base == 0.0 and self.n < 0:
            raise EvalDomainError("zero raised to a negative power")
        return base ** self.n

    def diff(self, name):
        da = self.a.diff(name)
        return mul(mul(Const(self.n), pow_int(self.a, self.n - 1)), da)

    def _collect(self, out):
        self.a._collect(out)

    def _key(self):
        return (self.a, self.n)


_CALL_EVAL = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
}


class Call(Expr):
    __slots__ = ("fn", "a")

    def __init__(self, fn, a):
        object.__setattr__(self, "fn", fn)
        object.__setattr__(self, "a", a)

    __setattr__ = Const.__setattr__

    def eval(self, env):
        x = self.a.eval(env)
        try:
            return _CALL_EVAL[self.fn](x)
        except (ValueError, OverflowError) as exc:
            raise EvalDomainError(f"{self.fn}({x!r}): {exc}") from exc

    def diff(self, name):
        da = self.a.diff(name)
        if self.fn == "sin":
            outer = Call("cos", self.a)
        elif self.fn == "cos":
            outer = neg(Call("sin", self.a))
        elif self.fn == "exp":
            outer = self
        elif self.fn == "log":
            return div(da, self.a)
        elif self.fn == "sqrt":
            return div(da, mul(Const(2.0), self))
        else:  # pragma: no cover
            raise ArityError(f"unknown function {self.fn}")
        return mul(outer, da)

    def _collect(self, out):
        self.a._collect(out)

    def _key(self):
        return (self.fn, self.a)


ZERO = Const(0.0)
ONE = Const(1.0)


def const(value):
    return Const(value)


def var(name):
    return Var(name)


# Smart constructors: constant folding only (including 0/1 absorption, which
# keeps symbolic derivatives from ballooning).  No other rewriting.

def add(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    return Add(a, b)


def sub(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if b.is_zero:
        return a
    if a.is_zero:
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if a.is_zero or b.is_zero:
        return ZERO
    if a.is_one:
        return b
    if b.is_one:
        return a
    return Mul(a, b)


def div(a, b):
    if isinstance(b, Const):
        if b.value == 0.0:
            raise EvalDomainError("division by constant zero")
        if isinstance(a, Const):
            return Const(a.value / b.value)
        if b.value == 1.0:
            return a
    if a.is_zero:
        return ZERO
    return Div(a, b)


def neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def pow_int(a, n):
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Const):
        return Const(a.value ** n)
    return Pow(a, n)


def partial(e, name):
    """Exact symbolic partial derivative of ``e`` with respect to ``name``."""
    return e.diff(name)


def subst(e, mapping):
    """Substitute expressions for variables; ``mapping`` maps name -> Expr."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Neg):
        return neg(subst(e.a, mapping))
    if isinstance(e, Pow):
        return pow_int(subst(e.a, mapping), e.n)
    if isinstance(e, Call):
        return Call(e.fn, subst(e.a, mapping))
    ctor = {Add: add, Sub: sub, Mul: mul, Div: div}[type(e)]
    return ctor(subst(e.a, mapping), subst(e.b, mapping))


# ---------------------------------------------------------------------------
# Printing

_PREC = {"add": 1, "mul": 2, "pow": 3, "neg": 4, "atom": 5}


def _print(e):
    """Return (source, precedence)."""
    if isinstance(e, Const):
        v = e.value
        if v < 0:
            return f"-{_fmt_const(-v)}", _PREC["neg"]
        return _fmt_const(v), _PREC["atom"]
    if isinstance(e, Var):
        return e.name, _PREC["atom"]
    if isinstance(e, Add):
        sa, pa = _print(e.a)
        sb, pb = _print(e.b)
        if pb <= _PREC["add"]:
            sb = f"({sb})"
        if pa < _PREC["add"]:
            sa = f"({sa})"
        return f"{sa} + {sb}", _PREC["add"]
    if isinstance(e, Sub):
        sa, pa = _print(e.a)
        sb, pb = _print(e.b)
        if pb <= _PREC["add"]:
            sb = f"({sb})"
        if pa < _PREC["add"]:
            sa = f"({sa})"
        return f"{sa} - {sb}", _PREC["add"]
    if isinstance(e, Mul):
        sa, pa = _print(e.a)
        sb, pb = _print(e.b)
        if pa < _PREC["mul"]:
            sa = f"({sa})"
        if pb <= _PREC["mul"]:
            sb = f"({sb})"
        return f"{sa}*{sb}", _PREC["mul"]
    if isinstance(e, Div):
        sa, pa = _print(e.a)
        sb, pb = _print(e.b)
        if pa < _PREC["mul"]:
            sa = f"({sa})"
        if pb <= _PREC["mul"]:
            sb = f"({sb})"
        return f"{sa}/{sb}", _PREC["mul"]
    if isinstance(e, Neg):
        sa, pa = _print(e.a)
        if pa < _PREC["neg"]:
            sa = f"({sa})"
        return f"-{sa}", _PREC["neg"]
    if isinstance(e, Pow):
        sa, pa = _print(e.a)
        if pa < _PREC["atom"]:
            sa = f"({sa})"
        if e.n < 0:
            return f"{sa}^-{-e.n}", _PREC["pow"]
        return f"{sa}^{e.n}", _PREC["pow"]
    if isinstance(e, Call):
        sa, _ = _print(e.a)
        return f"{e.fn}({sa})", _PREC["atom"]
    raise TypeError(type(e))


def _fmt_const(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_source(e):
    """Print an expression so that it parses back into an equal tree."""
    return _print(e)[0]


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<num>\d+(\.\d*)?([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[()+\-*/^])
  | (?P<ws>\s+)
  | (?P<bad>.)
    """,
    re.VERBOSE,
)


def _tokenize(source):
    tokens = []
    line, col = 1, 1
    for m in _TOKEN_RE.finditer(source):
        kind = m.lastgroup
        text = m.group()
        if kind == "bad":
            raise ExprSyntaxError(f"unexpected character {text!r}", line, col)
        if kind != "ws":
            tokens.append((kind, text, line, col))
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
    tokens.append(("end", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens, variables):
        self.tokens = tokens
        self.pos = 0
        self.variables = frozenset(variables)

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, text, line, col = self.peek()
        if kind != "op" or text != op:
            raise ExprSyntaxError(f"expected {op!r}, found {text or 'end of input'!r}",
                                  line, col)
        return self.advance()

    def expression(self):
        node = self.term()
        while True:
            kind, text, _, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                rhs = self.term()
                node = add(node, rhs) if text == "+" else sub(node, rhs)
            else:
                return node

    def term(self):
        node = self.power()
        while True:
            kind, text, _, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                rhs = self.power()
                node = mul(node, rhs) if text == "*" else div(node, rhs)
            else:
                return node

    def power(self):
        base = self.unary()
        kind, text, _, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            n = self.exponent()
            return pow_int(base, n)
        return base

    def exponent(self):
        kind, text, line, col = self.advance()
        sign = 1
        if kind == "op" and text == "-":
            sign = -1
            kind, text, line, col = self.advance()
        if kind != "num" or any(c in text for c in ".eE"):
            raise ExprSyntaxError("exponent must be a literal integer", line, col)
        return sign * int(text)

    def unary(self):
        kind, text, _, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return neg(self.unary())
        return self.atom()

    def atom(self):
        kind, text, line, col = self.advance()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            nk, ntext, _, _ = self.peek()
            if nk == "op" and ntext == "(":
                if text not in FUNCTIONS:
                    raise UnknownIdentifierError(f"unknown function {text!r}",
                                                 line, col)
                self.advance()
                arg = self.expression()
                self.expect_op(")")
                return Call(text, arg)
            if text in FUNCTIONS:
                raise ArityError(f"{text} requires one parenthesized argument",
                                 line, col)
            if text not in self.variables:
                raise UnknownIdentifierError(f"unknown identifier {text!r}",
                                             line, col)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expression()
            self.expect_op(")")
            return node
        raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", line, col)


def parse(source, variables):
    """Parse ``source`` into an Expr over the declared ``variables``."""
    parser = _Parser(_tokenize(source), variables)
    node = parser.expression()
    kind, text, line, col = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected trailing {text!r}", line, col)
    return node


# ---------------------------------------------------------------------------
# Compilation to vectorized numpy code

_CODEGEN_FNS = {"sin": "np.sin", "cos": "np.cos", "exp": "np.exp",
                "log": "np.log", "sqrt": "np.sqrt"}


def _codegen(e, names):
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return names[e.name]
    if isinstance(e, Add):
        return f"({_codegen(e.a, names)} + {_codegen(e.b, names)})"
    if isinstance(e, Sub):
        return f"({_codegen(e.a, names)} - {_codegen(e.b, names)})"
    if isinstance(e, Mul):
        return f"({_codegen(e.a, names)} * {_codegen(e.b, names)})"
    if isinstance(e, Div):
        return f"({_codegen(e.a, names)} / {_codegen(e.b, names)})"
    if isinstance(e, Neg):
        return f"(-{_codegen(e.a, names)})"
    if isinstance(e, Pow):
        return f"({_codegen(e.a, names)} ** {e.n})"
    if isinstance(e, Call):
        return f"{_CODEGEN_FNS[e.fn]}({_codegen(e.a, names)})"
    raise TypeError(type(e))


def compile_exprs(exprs, variables):
    """Compile expressions into one vectorized function of a point batch.

    The result maps an array ``Z`` of shape ``(..., len(variables))`` to an
    array of shape ``(..., len(exprs))``.  Domain violations (division by
    zero, log/sqrt outside their domain, overflow) raise EvalDomainError
    instead of producing silent non-finite values.
    """
    variables = list(variables)
    names = {v: f"v{i}" for i, v in enumerate(variables)}
    used = set()
    for e in exprs:
        used |= e.variables()
    unknown = used - set(variables)
    if unknown:
        raise UnknownIdentifierError(f"expressions use undeclared {sorted(unknown)}")

    lines = ["def _generated(Z, np=np):"]
    for i, v in enumerate(variables):
        if v in used:
            lines.append(f"    {names[v]} = Z[..., {i}]")
    lines.append(f"    out = np.zeros(Z.shape[:-1] + ({len(exprs)},), dtype=np.float64)")
    for j, e in enumerate(exprs):
        if e.is_zero:
            continue  # out starts zeroed
        lines.append(f"    out[..., {j}] = {_codegen(e, names)}")
    lines.append("    return out")
    namespace = {"np": np}
    exec(compile("\n".join(lines), "<sprayform-expr>", "exec"), namespace)
    fn = namespace["_generated"]

    def wrapped(Z):
        Z = np.asarray(Z, dtype=np.float64)
        try:
            with np.errstate(divide="raise", invalid="raise", over="raise"):
                return fn(Z)
        except FloatingPointError as exc:
            raise EvalDomainError(f"domain violation during evaluation: {exc}") from exc

    wrapped.n_inputs = len(variables)
    wrapped.n_outputs = len(exprs)
    return wrapped


# ---------------------------------------------------------------------------
# Multi-index helpers (strictly increasing tuples)


def increasing_indices(dim, degree):
    return list(itertools.combinations(range(dim), degree))


def merge_indices(I, J):
    """Merge disjoint increasing tuples; return (sign, merged) or (0, None)."""
    merged = I + J
    if len(set(merged)) != len(merged):
        return 0, None
    order = sorted(range(len(merged)), key=merged.__getitem__)
    # parity of the sorting permutation
    seen = [False] * len(order)
    sign = 1
    for i in range(len(order)):
        if seen[i]:
            continue
        j = i
        length = 0
        while not seen[j]:
            seen[j] = True
            j = order[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign, tuple(sorted(merged))


def insert_index(i, I):
    """Sign and result of inserting i into increasing tuple I (i not in I)."""
    if i in I:
        return 0, None
    pos = sum(1 for j in I if j < i)
    return (-1) ** pos, tuple(sorted(I + (i,)))


def remove_index(i, I):
    """Sign convention for interior product: position of i inside I."""
    pos = I.index(i)
    return (-1) ** pos, I[:pos] + I[pos + 1:]


# ---------------------------------------------------------------------------
# Coefficient fields


class ScalarField:
    """A single expression over named variables."""

    def __init__(self, variables, expr):
        self.variables = tuple(variables)
        self.expr = expr

    def at(self, point):
        env = dict(zip(self.variables, point))
        return self.expr.eval(env)


class VectorField:
    """Vector field with one Expr component per variable."""

    def __init__(self, variables, components):
        self.variables = tuple(variables)
        self.components = list(components)
        if len(self.components) != len(self.variables):
            raise DimensionError("vector field needs one component per variable")

    @property
    def dim(self):
        return len(self.variables)

    def at(self, point):
        env = dict(zip(self.variables, point))
        return np.array([c.eval(env) for c in self.components])

    def apply_to(self, f):
        """Directional derivative X(f) as an Expr."""
        out = ZERO
        for v, c in zip(self.variables, self.components):
            out = add(out, mul(c, partial(f, v)))
        return out


class FormField:
    """Differential form with Expr coefficients on increasing multi-indices.

    Missing indices are zero.  Degree 0 is allowed (a scalar stored under the
    empty index).
    """

    def __init__(self, variables, degree, components=None):
        self.variables = tuple(variables)
        self.degree = int(degree)
        if self.degree < 0:
            raise DimensionError(f"degree {degree} out of range")
        # degree > dim is allowed and is identically zero
        comps = {}
        if components:
            for I, e in components.items():
                I = tuple(I)
                if (len(I) != self.degree or list(I) != sorted(set(I))
                        or (I and not 0 <= I[-1] < len(self.variables))):
                    raise DimensionError(f"bad multi-index {I} for degree {degree}")
                if not (isinstance(e, Const) and e.value == 0.0):
                    comps[I] = e
        self.components = comps

    @property
    def dim(self):
        return len(self.variables)

    def component(self, I):
        return self.components.get(tuple(I), ZERO)

    def map(self, fn):
        return FormField(self.variables, self.degree,
                         {I: fn(e) for I, e in self.components.items()})

    def scale(self, factor):
        if not isinstance(factor, Expr):
            factor = Const(factor)
        return self.map(lambda e: mul(factor, e))

    def __add__(self, other):
        if (other.variables != self.variables or other.degree != self.degree):
            raise DimensionError("form mismatch in addition")
        comps = dict(self.components)
        for I, e in other.components.items():
            comps[I] = add(comps.get(I, ZERO), e)
        return FormField(self.variables, self.degree, comps)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def d(self):
        """Exterior derivative, taken symbolically."""
        comps = {}
        for I, e in self.components.items():
            for j, name in enumerate(self.variables):
                de = partial(e, name)
                if de.is_zero:
                    continue
                sign, J = insert_index(j, I)
                if sign == 0:
                    continue
                term = mul(Const(sign), de)
                comps[J] = add(comps.get(J, ZERO), term)
        return FormField(self.variables, self.degree + 1, comps)

    def interior(self, X):
        """Interior product with a VectorField over the same variables."""
        if self.degree == 0:
            raise DimensionError("interior product needs degree >= 1")
        if X.variables != self.variables:
            raise DimensionError("vector field over different variables")
        comps = {}
        for I, e in self.components.items():
            for i in I:
                sign, J = remove_index(i, I)
                term = mul(Const(sign), mul(X.components[i], e))
                comps[J] = add(comps.get(J, ZERO), term)
        return FormField(self.variables, self.degree - 1, comps)

    def wedge(self, other):
        if other.variables != self.variables:
            raise DimensionError("wedge over different variables")
        comps = {}
        for I, a in self.components.items():
            for J, b in other.components.items():
                sign, K = merge_indices(I, J)
                if sign == 0:
                    continue
                term = mul(Const(sign), mul(a, b))
                comps[K] = add(comps.get(K, ZERO), term)
        return FormField(self.variables, self.degree + other.degree, comps)

    def lie(self, X):
        """Lie derivative via the Cartan formula: d(i_X w) + i_X(dw)."""
        out = self.d().interior(X)
        if self.degree > 0:
            out = out + self.interior(X).d()
        return out

    def at(self, point):
        """Dense component vector on increasing indices at a point."""
        env = dict(zip(self.variables, point))
        idx = increasing_indices(self.dim, self.degree)
        return np.array([self.components.get(I, ZERO).eval(env) for I in idx])

    def exprs_dense(self):
        """Dense list of component Exprs in increasing-index order."""
        idx = increasing_indices(self.dim, self.degree)
        return [self.components.get(I, ZERO) for I in idx]

    def max_abs_at(self, point):
        vals = self.at(point)
        return float(np.max(np.abs(vals))) if vals.size else 0.0


class BivectorField:
    """Antisymmetric contravariant 2-tensor; stores only i < j components."""

    def __init__(self, dim, components=None, variables=None):
        self.dim = int(dim)
        self.variables = tuple(variables) if variables else tuple(
            f"x{i+1}" for i in range(dim))
        comps = {}
        if components:
            for (i, j), e in components.items():
                if not 0 <= i < j < dim:
                    raise DimensionError(f"bivector index ({i},{j}) must have i<j")
                if not (isinstance(e, Const) and e.value == 0.0):
                    comps[(i, j)] = e
        self.components = comps

    def entry(self, i, j):
        """Full antisymmetric entry pi^{ij} as an Expr."""
        if i == j:
            return ZERO
        if i < j:
            return self.components.get((i, j), ZERO)
        return neg(self.components.get((j, i), ZERO))

    def matrix_exprs(self):
        return [[self.entry(i, j) for j in range(self.dim)] for i in range(self.dim)]

    def at(self, point):
        env = dict(zip(self.variables, point))
        P = np.zeros((self.dim, self.dim))
        for (i, j), e in self.components.items():
            v = e.eval(env)
            P[i, j] = v
            P[j, i] = -v
        return P


class PolyVectorField:
    """Antisymmetric contravariant k-tensor with Expr components (k <= 3)."""

    def __init__(self, dim, degree, components=None, variables=None):
        self.dim = int(dim)
        self.degree = int(degree)
        self.variables = tuple(variables) if variables else tuple(
            f"x{i+1}" for i in range(dim))
        self.components = dict(components or {})

    def at(self, point):
        env = dict(zip(self.variables, point))
        idx = increasing_indices(self.dim, self.degree)
        return np.array([self.components.get(I, ZERO).eval(env) for I in idx])

    def max_abs_at(self, point):
        vals = self.at(point)
        return float(np.max(np.abs(vals))) if vals.size else 0.0


def exterior_derivative(w):
    """Symbolic exterior derivative of a FormField (d o d = 0 identically)."""
    return w.d()


def interior_product(X, w):
    return w.interior(X)


def lie_derivative(X, w):
    return w.lie(X)


# ---------------------------------------------------------------------------
# Schouten brackets
#
# Conventions, fixed once here and used verbatim by every compatibility test:
#   * brackets of functions:      {f,g} = pi(df,dg) = sum_ij pi^{ij} d_i f d_j g
#   * bivector-bivector bracket:  [pi,pi](df,dg,dh) = 2 * sum_cyc {f,{g,h}},
#     in components  [pi,pi]^{ikl} =
#         2 sum_j (pi^{ij} d_j pi^{kl} + pi^{kj} d_j pi^{li} + pi^{lj} d_j pi^{ik})
#   * bivector-vector bracket:    [pi, R] = -L_R pi
#   * wedge of vector and bivector (determinant convention):
#         (R ^ pi)(a,b,c) = a(R) pi(b,c) + b(R) pi(c,a) + c(R) pi(a,b)
# With these choices the Jacobi identity of the bracket
#   {u,v} = pi(du,dv) + <R,du> v - u <R,dv>
# is equivalent to  [pi,pi] = 2 R ^ pi  and  [pi,R] = 0, which is what the
# jacobi builder checks verbatim.


def schouten(p, q):
    """Schouten-Nijenhuis bracket [p, q].

    p is a BivectorField; q is a BivectorField (result: trivector field) or a
    VectorField (result: bivector field, equal to -L_q p).
    """
    if isinstance(q, BivectorField):
        if q.dim != p.dim:
            raise DimensionError("dimension mismatch in schouten bracket")
        n = p.dim
        xs = p.variables
        comps = {}
        for (i, k, l) in itertools.combinations(range(n), 3):
            total = ZERO
            for j in range(n):
                t1 = mul(p.entry(i, j), partial(q.entry(k, l), xs[j]))
                t2 = mul(p.entry(k, j), partial(q.entry(l, i), xs[j]))
                t3 = mul(p.entry(l, j), partial(q.entry(i, k), xs[j]))
                total = add(total, add(t1, add(t2, t3)))
                t1 = mul(q.entry(i, j), partial(p.entry(k, l), xs[j]))
                t2 = mul(q.entry(k, j), partial(p.entry(l, i), xs[j]))
                t3 = mul(q.entry(l, j), partial(p.entry(i, k), xs[j]))
                total = add(total, add(t1, add(t2, t3)))
            comps[(i, k, l)] = total
        return PolyVectorField(n, 3, comps, xs)
    if isinstance(q, VectorField):
        if len(q.components) != p.dim:
            raise DimensionError("dimension mismatch in schouten bracket")
        n = p.dim
        xs = p.variables
        comps = {}
        for (i, k) in itertools.combinations(range(n), 2):
            # (L_R pi)^{ik} = R(pi^{ik}) - pi^{jk} d_j R^i - pi^{ij} d_j R^k
            lie = q.apply_to(p.entry(i, k))
            for j in range(n):
                lie = sub(lie, mul(p.entry(j, k), partial(q.components[i], xs[j])))
                lie = sub(lie, mul(p.entry(i, j), partial(q.components[k], xs[j])))
            comps[(i, k)] = neg(lie)
        return PolyVectorField(n, 2, comps, xs)
    raise DimensionError(f"unsupported schouten argument {type(q)}")


def wedge_vector_bivector(R, p):
    """R ^ pi as a trivector field (determinant convention)."""
    n = p.dim
    xs = p.variables
    comps = {}
    for (i, k, l) in itertools.combinations(range(n), 3):
        t = add(mul(R.components[i], p.entry(k, l)),
                add(mul(R.components[k], p.entry(l, i)),
                    mul(R.components[l], p.entry(i, k))))
        comps[(i, k, l)] = t
    return PolyVectorField(n, 3, comps, xs)

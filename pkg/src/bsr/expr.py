"""Expression trees: AST nodes, parser, printer, evaluation and structure accounting."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

# symbol -> arity for every operator the engine knows about
OPERATOR_ARITY = {
    "+": 2,
    "-": 2,
    "*": 2,
    "/": 2,
    "pow": 2,
    "exp": 1,
    "log": 1,
    "sin": 1,
    "cos": 1,
    "sqrt": 1,
    "abs": 1,
    "neg": 1,
}

# default per-run basis; pow/exp/log/trig cover the canned experiments
DEFAULT_BASIS = ("+", "-", "*", "/", "pow", "exp", "log", "sin", "cos", "sqrt")

BINARY_INFIX = {"+", "-", "*", "/"}


class ExpressionError(ValueError):
    pass


class ExpressionSyntaxError(ExpressionError):
    """Raised on malformed expression text; position is 1-based."""

    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


@dataclass(frozen=True)
class Op:
    symbol: str
    children: tuple

    def __post_init__(self):
        arity = OPERATOR_ARITY.get(self.symbol)
        if arity is None:
            raise ExpressionError(f"unknown operator {self.symbol!r}")
        if arity != len(self.children):
            raise ExpressionError(
                f"operator {self.symbol!r} expects {arity} children, got {len(self.children)}"
            )


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class ParamVector:
    """Named parameter values plus the noise scale carried alongside."""

    values: dict
    sigma: float = 0.0

    def __getitem__(self, name):
        return self.values[name]

    def keys(self):
        return self.values.keys()


def _walk(node):
    yield node
    if isinstance(node, Op):
        for child in node.children:
            yield from _walk(child)


def _depth(node):
    if isinstance(node, Op):
        return 1 + max(_depth(c) for c in node.children)
    return 0


class ExprTree:
    """Immutable expression tree with cached structural quantities.

    param_count counts *distinct* parameter names (shared names are one
    parameter); operator_counts maps symbol -> occurrences.
    """

    def __init__(self, root, n_features):
        self.root = root
        self.n_features = int(n_features)
        names = []
        counts = Counter()
        n_nodes = 0
        for node in _walk(root):
            n_nodes += 1
            if isinstance(node, Param):
                if node.name not in names:
                    names.append(node.name)
            elif isinstance(node, Op):
                counts[node.symbol] += 1
            elif isinstance(node, Var):
                if node.index < 0 or node.index >= self.n_features:
                    raise ExpressionError(
                        f"variable x{node.index} out of range (n_features={n_features})"
                    )
        self.param_names = tuple(names)
        self.param_count = len(names)
        self.operator_counts = dict(counts)
        self.n_nodes = n_nodes
        self.depth = _depth(root)

    def __eq__(self, other):
        return (
            isinstance(other, ExprTree)
            and self.root == other.root
            and self.n_features == other.n_features
        )

    def __hash__(self):
        return hash((self.root, self.n_features))

    def __repr__(self):
        return f"ExprTree({print_expression(self)!r}, n_features={self.n_features})"


# ---------------------------------------------------------------------------
# printing

def _print_node(node):
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Const):
        return repr(node.value)
    if node.symbol in BINARY_INFIX:
        a, b = node.children
        return f"({_print_node(a)} {node.symbol} {_print_node(b)})"
    args = ", ".join(_print_node(c) for c in node.children)
    return f"{node.symbol}({args})"


def print_expression(tree):
    """Canonical fully-parenthesized string; parse(print(t)) == t."""
    return _print_node(tree.root)


COMMUTATIVE = {"+", "*"}


def strict_signature(tree):
    """Like structure_signature but order-preserving: only parameters are
    renamed. Used where a key must identify one concrete tree shape, e.g.
    fit caching (commuted forms assign parameter roles differently)."""
    mapping = {}

    def go(node):
        if isinstance(node, Var):
            return f"x{node.index}"
        if isinstance(node, Param):
            if node.name not in mapping:
                mapping[node.name] = f"p{len(mapping)}"
            return mapping[node.name]
        if isinstance(node, Const):
            return repr(node.value)
        if node.symbol in BINARY_INFIX:
            a, b = node.children
            return f"({go(a)} {node.symbol} {go(b)})"
        args = ", ".join(go(c) for c in node.children)
        return f"{node.symbol}({args})"

    return go(tree.root)


def structure_signature(tree):
    """Canonical identifier, invariant to parameter renaming and to the
    argument order of commutative operators.

    Two passes: first the shape is canonicalized with parameter leaves
    anonymized (so renaming cannot influence commutative ordering), then
    parameters are numbered left-to-right in the canonical shape.
    """

    def shape(node):
        if isinstance(node, Var):
            return f"x{node.index}"
        if isinstance(node, Param):
            return "?"
        if isinstance(node, Const):
            return repr(node.value)
        parts = [shape(c) for c in node.children]
        if node.symbol in COMMUTATIVE:
            parts.sort()
        if node.symbol in BINARY_INFIX:
            return f"({parts[0]} {node.symbol} {parts[1]})"
        return f"{node.symbol}({', '.join(parts)})"

    sig = shape(tree.root)
    # number anonymous parameter slots left to right
    out = []
    count = 0
    for ch in sig:
        if ch == "?":
            out.append(f"p{count}")
            count += 1
        else:
            out.append(ch)
    return "".join(out)


def canonicalize_params(tree, prefix="th"):
    """Rename distinct parameters to prefix0, prefix1, ... left-to-right."""
    mapping = {}

    def go(node):
        if isinstance(node, Param):
            if node.name not in mapping:
                mapping[node.name] = Param(f"{prefix}{len(mapping)}")
            return mapping[node.name]
        if isinstance(node, Op):
            return Op(node.symbol, tuple(go(c) for c in node.children))
        return node

    return ExprTree(go(tree.root), tree.n_features)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<punct>[()+\-*/,]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ExpressionSyntaxError(
                f"unexpected character {text[pos]!r}", pos + 1
            )
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    tokens.append(("end", "", len(text) + 1))
    return tokens


_VAR_RE = re.compile(r"x(\d+)$")
_PARAM_RE = re.compile(r"th(\d+)$")


class _Parser:
    def __init__(self, tokens, n_features):
        self.tokens = tokens
        self.i = 0
        self.n_features = n_features

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.peek()
        if val != value:
            raise ExpressionSyntaxError(f"expected {value!r}", pos)
        return self.advance()

    def parse_expr(self):
        node = self.parse_term()
        while self.peek()[1] in ("+", "-"):
            op = self.advance()[1]
            node = Op(op, (node, self.parse_term()))
        return node

    def parse_term(self):
        node = self.parse_factor()
        while self.peek()[1] in ("*", "/"):
            op = self.advance()[1]
            node = Op(op, (node, self.parse_factor()))
        return node

    def parse_factor(self):
        kind, val, pos = self.peek()
        if val == "(":
            self.advance()
            node = self.parse_expr()
            self.expect(")")
            return node
        if kind == "num":
            self.advance()
            return Const(float(val))
        if kind == "ident":
            self.advance()
            if self.peek()[1] == "(":
                arity = OPERATOR_ARITY.get(val)
                if arity is None:
                    raise ExpressionSyntaxError(f"unknown operator {val!r}", pos)
                self.advance()
                args = [self.parse_expr()]
                while self.peek()[1] == ",":
                    self.advance()
                    args.append(self.parse_expr())
                self.expect(")")
                if len(args) != arity:
                    raise ExpressionSyntaxError(
                        f"operator {val!r} expects {arity} arguments, got {len(args)}",
                        pos,
                    )
                return Op(val, tuple(args))
            m = _VAR_RE.match(val)
            if m:
                idx = int(m.group(1))
                if idx >= self.n_features:
                    raise ExpressionSyntaxError(
                        f"variable x{idx} out of range (n_features={self.n_features})",
                        pos,
                    )
                return Var(idx)
            if _PARAM_RE.match(val):
                return Param(val)
            raise ExpressionSyntaxError(f"unknown identifier {val!r}", pos)
        raise ExpressionSyntaxError("expected expression", pos)


def parse_expression(text, n_features):
    """Parse an expression string into a validated ExprTree."""
    tokens = _tokenize(text)
    parser = _Parser(tokens, n_features)
    root = parser.parse_expr()
    kind, _, pos = parser.peek()
    if kind != "end":
        raise ExpressionSyntaxError("unexpected trailing input", pos)
    return ExprTree(root, n_features)


# ---------------------------------------------------------------------------
# evaluation

def _eval_node(node, params, X):
    if isinstance(node, Var):
        return X[:, node.index]
    if isinstance(node, Param):
        try:
            return np.full(X.shape[0], params[node.name], dtype=float)
        except KeyError:
            raise ExpressionError(f"missing parameter {node.name!r}") from None
    if isinstance(node, Const):
        return np.full(X.shape[0], node.value, dtype=float)
    sym = node.symbol
    if sym == "+":
        return _eval_node(node.children[0], params, X) + _eval_node(node.children[1], params, X)
    if sym == "-":
        return _eval_node(node.children[0], params, X) - _eval_node(node.children[1], params, X)
    if sym == "*":
        return _eval_node(node.children[0], params, X) * _eval_node(node.children[1], params, X)
    if sym == "/":
        return _eval_node(node.children[0], params, X) / _eval_node(node.children[1], params, X)
    if sym == "pow":
        return np.power(
            _eval_node(node.children[0], params, X),
            _eval_node(node.children[1], params, X),
        )
    a = _eval_node(node.children[0], params, X)
    if sym == "exp":
        return np.exp(a)
    if sym == "log":
        return np.log(a)
    if sym == "sin":
        return np.sin(a)
    if sym == "cos":
        return np.cos(a)
    if sym == "sqrt":
        return np.sqrt(a)
    if sym == "abs":
        return np.abs(a)
    if sym == "neg":
        return -a
    raise ExpressionError(f"unknown operator {sym!r}")


def evaluate_batch(tree, params, X):
    """Evaluate the tree on an N x d feature matrix.

    Domain violations (log of non-positive, 0/0, ...) come back as nan/inf
    entries rather than raising.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    with np.errstate(all="ignore"):
        out = _eval_node(tree.root, params, X)
    return np.asarray(out, dtype=float)


def evaluate(tree, params, x):
    """Evaluate at a single feature row; non-finite marks a domain violation."""
    return float(evaluate_batch(tree, params, np.atleast_2d(x))[0])

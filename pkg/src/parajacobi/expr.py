"""Tiny arithmetic expression language used by "custom" family configs.

Grammar (classic recursive descent, right-associative '^'):

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'n' | NAME '(' expr (',' expr)* ')' | '(' expr ')'

The only variable is ``n``; supported functions are pow, sqrt, log, exp.
``compile_expression`` returns a vectorized callable n -> float array.
"""

import re

import numpy as np

from .errors import ConfigError

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)

_FUNCTIONS = {
    "sqrt": np.sqrt,
    "log": np.log,
    "exp": np.exp,
    "pow": np.power,
}
_ARITY = {"sqrt": 1, "log": 1, "exp": 1, "pow": 2}


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ConfigError("bad character %r at position %d in %r" % (text[pos], pos, text))
        if m.group("num") is not None:
            tokens.append(("num", float(m.group(0))))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name")))
        else:
            tokens.append(("op", m.group("op")))
        pos = m.end()
    tokens.append(("end", None))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.k = 0

    def peek(self):
        return self.tokens[self.k]

    def take(self, kind=None, value=None):
        tok = self.tokens[self.k]
        if kind is not None and tok[0] != kind:
            raise ConfigError("expected %s, got %r in %r" % (kind, tok[1], self.text))
        if value is not None and tok[1] != value:
            raise ConfigError("expected %r, got %r in %r" % (value, tok[1], self.text))
        self.k += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ConfigError("trailing input %r in %r" % (self.peek()[1], self.text))
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = ("+" if op == "+" else "-", node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = (op, node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        kind, value = self.peek()
        if kind == "num":
            self.take()
            return ("num", value)
        if kind == "name":
            self.take()
            if value == "n":
                return ("var",)
            if value in _FUNCTIONS:
                self.take("op", "(")
                args = [self.expr()]
                while self.peek() == ("op", ","):
                    self.take()
                    args.append(self.expr())
                self.take("op", ")")
                if len(args) != _ARITY[value]:
                    raise ConfigError(
                        "%s takes %d argument(s), got %d in %r"
                        % (value, _ARITY[value], len(args), self.text)
                    )
                return ("call", value, args)
            raise ConfigError("unknown name %r in %r" % (value, self.text))
        if (kind, value) == ("op", "("):
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        raise ConfigError("unexpected %r in %r" % (value, self.text))


def _evaluate(node, n):
    op = node[0]
    if op == "num":
        return node[1]
    if op == "var":
        return n
    if op == "neg":
        return -_evaluate(node[1], n)
    if op == "call":
        return _FUNCTIONS[node[1]](*[_evaluate(arg, n) for arg in node[2]])
    lhs = _evaluate(node[1], n)
    rhs = _evaluate(node[2], n)
    if op == "+":
        return lhs + rhs
    if op == "-":
        return lhs - rhs
    if op == "*":
        return lhs * rhs
    if op == "/":
        return lhs / rhs
    if op == "^":
        return np.power(lhs, rhs)
    raise AssertionError("unreachable node %r" % (node,))


def compile_expression(text):
    """Compile an expression string into a vectorized callable of n."""
    if not isinstance(text, str):
        raise ConfigError("expression must be a string, got %r" % (text,))
    tree = _Parser(text).parse()

    def fn(n):
        return _evaluate(tree, np.asarray(n, dtype=float))

    fn.source = text
    return fn

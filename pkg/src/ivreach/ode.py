"""Plant models as a small expression language, plus a first-order validated
interval integrator.

A model declares state and input variables, one derivative expression per
state, and named output expressions.  Expressions are evaluated either on
floats (for reference simulation) or on intervals (natural interval
extension, used for rigorous bounds).

Integration is interval Euler with a Picard-style a priori enclosure per
substep: a box B is found with X + [0, h] * f(B, U) inside B, which proves B
contains every solution over the substep; the state box then advances by
h * f(B, U).  First order keeps the stepper small; tightness is managed by
the substep count.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .interval import Box, DimensionMismatch, Interval, iv_arith, iv_func_ext


class ModelSyntaxError(ValueError):
    """Model text failed to parse; carries line and column."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class UndeclaredVariable(ValueError):
    """Expression references a name that was never declared."""


class DuplicateDeclaration(ValueError):
    """A name was declared twice (or a state has two derivatives)."""


class IncompleteModel(ValueError):
    """A declared state has no derivative expression."""


class UnboundVariable(KeyError):
    """Evaluation environment is missing a required variable."""


class EnclosureFailure(RuntimeError):
    """Picard iteration failed to certify an enclosure; shrink the step."""

    def __init__(self, message: str, substep: Optional[int] = None):
        super().__init__(message)
        self.substep = substep


# ---------------------------------------------------------------------------
# expressions

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # neg sin cos tanh exp sqr
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # add sub mul div
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Unary, Binary]

_FUNCTIONS = ("sin", "cos", "tanh", "exp", "sqr")

_POINT_FN = {
    "sin": math.sin,
    "cos": math.cos,
    "tanh": math.tanh,
    "exp": math.exp,
    "sqr": lambda v: v * v,
}

_POINT_OP = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
}


def expr_eval_interval(e: Expr, env: Mapping[str, Interval]) -> Interval:
    """Natural interval extension of the expression over the environment.

    Each variable occurrence is bounded independently, so repeated
    occurrences widen the result (x - x over [0,1] gives [-1,1], not 0).
    """
    if isinstance(e, Const):
        return Interval(e.value, e.value)
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Unary):
        arg = expr_eval_interval(e.arg, env)
        if e.op == "neg":
            return -arg
        return iv_func_ext(e.op, arg)
    if isinstance(e, Binary):
        return iv_arith(e.op, expr_eval_interval(e.left, env), expr_eval_interval(e.right, env))
    raise TypeError(f"not an expression node: {e!r}")


def expr_eval_point(e: Expr, env: Mapping[str, float]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Unary):
        v = expr_eval_point(e.arg, env)
        return -v if e.op == "neg" else _POINT_FN[e.op](v)
    if isinstance(e, Binary):
        return _POINT_OP[e.op](expr_eval_point(e.left, env), expr_eval_point(e.right, env))
    raise TypeError(f"not an expression node: {e!r}")


def expr_variables(e: Expr) -> set:
    if isinstance(e, Const):
        return set()
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Unary):
        return expr_variables(e.arg)
    return expr_variables(e.left) | expr_variables(e.right)


def expr_diff(e: Expr, var: str) -> Expr:
    """Symbolic partial derivative, used for mean-value interval bounds."""
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0) if e.name == var else Const(0.0)
    if isinstance(e, Unary):
        inner = expr_diff(e.arg, var)
        if e.op == "neg":
            return Unary("neg", inner)
        if e.op == "sin":
            outer = Unary("cos", e.arg)
        elif e.op == "cos":
            outer = Unary("neg", Unary("sin", e.arg))
        elif e.op == "tanh":
            outer = Binary("sub", Const(1.0), Unary("sqr", Unary("tanh", e.arg)))
        elif e.op == "exp":
            outer = Unary("exp", e.arg)
        elif e.op == "sqr":
            outer = Binary("mul", Const(2.0), e.arg)
        else:
            raise ValueError(f"cannot differentiate {e.op!r}")
        return _simplify_mul(outer, inner)
    if isinstance(e, Binary):
        da, db = expr_diff(e.left, var), expr_diff(e.right, var)
        if e.op == "add":
            return _simplify_add(da, db)
        if e.op == "sub":
            return _simplify_sub(da, db)
        if e.op == "mul":
            return _simplify_add(_simplify_mul(da, e.right), _simplify_mul(e.left, db))
        # quotient rule: (da*b - a*db) / b^2
        num = _simplify_sub(_simplify_mul(da, e.right), _simplify_mul(e.left, db))
        return Binary("div", num, Unary("sqr", e.right))
    raise TypeError(f"not an expression node: {e!r}")


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


def _simplify_add(a: Expr, b: Expr) -> Expr:
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return Binary("add", a, b)


def _simplify_sub(a: Expr, b: Expr) -> Expr:
    if _is_zero(b):
        return a
    if _is_zero(a):
        return Unary("neg", b)
    return Binary("sub", a, b)


def _simplify_mul(a: Expr, b: Expr) -> Expr:
    if _is_zero(a) or _is_zero(b):
        return Const(0.0)
    if isinstance(a, Const) and a.value == 1.0:
        return b
    if isinstance(b, Const) and b.value == 1.0:
        return a
    return Binary("mul", a, b)


_PRECEDENCE = {"add": 1, "sub": 1, "mul": 2, "div": 2}


def expr_to_str(e: Expr) -> str:
    def render(node: Expr, parent_prec: int) -> str:
        if isinstance(node, Const):
            return repr(node.value)
        if isinstance(node, Var):
            return node.name
        if isinstance(node, Unary):
            if node.op == "neg":
                return f"-{render(node.arg, 3)}"
            return f"{node.op}({render(node.arg, 0)})"
        prec = _PRECEDENCE[node.op]
        sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[node.op]
        left = render(node.left, prec)
        # right operand of - and / needs parens at equal precedence
        right = render(node.right, prec + (1 if node.op in ("sub", "div") else 0))
        text = f"{left} {sym} {right}"
        return f"({text})" if prec < parent_prec else text

    return render(e, 0)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[()+\-*/=]))"
)


def _tokenize(text: str, line_no: int) -> List[Tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if not m or m.start() != pos:
            raise ModelSyntaxError(f"unexpected character {text[pos]!r}", line_no, pos + 1)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    return tokens


class _ExprParser:
    def __init__(self, tokens, line_no):
        self.tokens = tokens
        self.line = line_no
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def advance(self):
        tok = self.peek()
        if tok is None:
            raise ModelSyntaxError("unexpected end of expression", self.line, 0)
        self.i += 1
        return tok

    def expect_op(self, symbol):
        tok = self.advance()
        if tok[0] != "op" or tok[1] != symbol:
            raise ModelSyntaxError(f"expected {symbol!r}, got {tok[1]!r}", self.line, tok[2])

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ModelSyntaxError(f"trailing input {tok[1]!r}", self.line, tok[2])
        return e

    def expr(self) -> Expr:
        node = self.term()
        while (tok := self.peek()) and tok[0] == "op" and tok[1] in "+-":
            self.advance()
            node = Binary("add" if tok[1] == "+" else "sub", node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while (tok := self.peek()) and tok[0] == "op" and tok[1] in "*/":
            self.advance()
            node = Binary("mul" if tok[1] == "*" else "div", node, self.unary())
        return node

    def unary(self) -> Expr:
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] == "-":
            self.advance()
            return Unary("neg", self.unary())
        if tok and tok[0] == "op" and tok[1] == "+":
            self.advance()
            return self.unary()
        return self.primary()

    def primary(self) -> Expr:
        tok = self.advance()
        kind, text, col = tok
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            nxt = self.peek()
            if nxt and nxt[0] == "op" and nxt[1] == "(":
                if text not in _FUNCTIONS:
                    raise ModelSyntaxError(f"unknown function {text!r}", self.line, col)
                self.advance()
                inner = self.expr()
                self.expect_op(")")
                return Unary(text, inner)
            return Var(text)
        if kind == "op" and text == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise ModelSyntaxError(f"unexpected token {text!r}", self.line, col)


@dataclass(frozen=True)
class PlantModel:
    """Parsed plant: derivative field over states/inputs, named outputs."""

    state_vars: Tuple[str, ...]
    input_vars: Tuple[str, ...]
    derivs: Tuple[Expr, ...]  # aligned with state_vars
    outputs: Dict[str, Expr]

    @property
    def n_states(self) -> int:
        return len(self.state_vars)

    @property
    def n_inputs(self) -> int:
        return len(self.input_vars)


def parse_model(text: str) -> PlantModel:
    """Parse the line-oriented model language; see the package docs."""
    states: List[str] = []
    inputs: List[str] = []
    deriv_exprs: Dict[str, Expr] = {}
    deriv_lines: Dict[str, int] = {}
    outputs: Dict[str, Expr] = {}
    declared_at: Dict[str, int] = {}

    def declare(name: str, line_no: int, col: int):
        if name in _FUNCTIONS:
            raise ModelSyntaxError(f"{name!r} is a reserved function name", line_no, col)
        if name in declared_at or name in outputs:
            raise DuplicateDeclaration(f"line {line_no}: {name!r} already declared")
        declared_at[name] = line_no

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        tokens = _tokenize(line, line_no)
        if not tokens:
            continue
        kind, keyword, col = tokens[0]
        if kind != "name" or keyword not in ("state", "input", "deriv", "output"):
            raise ModelSyntaxError(
                f"expected a declaration keyword, got {keyword!r}", line_no, col
            )
        if keyword in ("state", "input"):
            names = tokens[1:]
            if not names:
                raise ModelSyntaxError(f"{keyword} needs at least one name", line_no, col)
            for nk, name, ncol in names:
                if nk != "name":
                    raise ModelSyntaxError(f"expected a name, got {name!r}", line_no, ncol)
                declare(name, line_no, ncol)
                (states if keyword == "state" else inputs).append(name)
            continue
        # deriv / output: NAME '=' expr
        if len(tokens) < 3 or tokens[1][0] != "name":
            raise ModelSyntaxError(f"{keyword} needs a name and '='", line_no, col)
        _, target, tcol = tokens[1]
        if tokens[2][0] != "op" or tokens[2][1] != "=":
            raise ModelSyntaxError("expected '='", line_no, tokens[2][2])
        expr = _ExprParser(tokens[3:], line_no).parse()
        if keyword == "deriv":
            if target in deriv_exprs:
                raise DuplicateDeclaration(
                    f"line {line_no}: state {target!r} already has a derivative"
                )
            deriv_exprs[target] = expr
            deriv_lines[target] = line_no
        else:
            if target in outputs or target in declared_at:
                raise DuplicateDeclaration(f"line {line_no}: {target!r} already declared")
            if target in _FUNCTIONS:
                raise ModelSyntaxError(f"{target!r} is a reserved function name", line_no, tcol)
            outputs[target] = expr

    known = set(states) | set(inputs)
    for target, line_no in deriv_lines.items():
        if target not in states:
            raise UndeclaredVariable(f"line {line_no}: derivative for undeclared state {target!r}")
    for name, expr in list(deriv_exprs.items()) + list(outputs.items()):
        for var in sorted(expr_variables(expr)):
            if var not in known:
                raise UndeclaredVariable(f"{var!r} referenced in the definition of {name!r}")
    missing = [s for s in states if s not in deriv_exprs]
    if missing:
        raise IncompleteModel(f"states without a derivative: {missing}")
    if not states:
        raise IncompleteModel("model declares no state variables")

    return PlantModel(
        state_vars=tuple(states),
        input_vars=tuple(inputs),
        derivs=tuple(deriv_exprs[s] for s in states),
        outputs=dict(outputs),
    )


def unparse_model(model: PlantModel) -> str:
    lines = []
    if model.state_vars:
        lines.append("state " + " ".join(model.state_vars))
    if model.input_vars:
        lines.append("input " + " ".join(model.input_vars))
    for name, expr in zip(model.state_vars, model.derivs):
        lines.append(f"deriv {name} = {expr_to_str(expr)}")
    for name, expr in model.outputs.items():
        lines.append(f"output {name} = {expr_to_str(expr)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# evaluation over boxes

def _interval_env(model: PlantModel, X: Box, U: Optional[Box]) -> Dict[str, Interval]:
    if len(X) != model.n_states:
        raise DimensionMismatch(f"state box has {len(X)} dims, model has {model.n_states} states")
    env = {name: X[i] for i, name in enumerate(model.state_vars)}
    if U is not None:
        if len(U) != model.n_inputs:
            raise DimensionMismatch(f"input box has {len(U)} dims, model has {model.n_inputs} inputs")
        env.update({name: U[i] for i, name in enumerate(model.input_vars)})
    # with U absent, input-dependent expressions raise UnboundVariable on use
    return env


def deriv_interval(model: PlantModel, X: Box, U: Optional[Box]) -> List[Interval]:
    env = _interval_env(model, X, U)
    return [expr_eval_interval(e, env) for e in model.derivs]


def deriv_point(model: PlantModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    env = {name: float(x[i]) for i, name in enumerate(model.state_vars)}
    env.update({name: float(u[i]) for i, name in enumerate(model.input_vars)})
    return np.array([expr_eval_point(e, env) for e in model.derivs])


def reach_odey(model: PlantModel, X: Box, U_opt: Optional[Box] = None) -> Dict[str, Interval]:
    """Interval bounds for every named output over a state box."""
    env = _interval_env(model, X, U_opt)
    return {name: expr_eval_interval(e, env) for name, e in model.outputs.items()}


# ---------------------------------------------------------------------------
# validated integration

@dataclass(frozen=True)
class FlowpipeSegment:
    """State enclosure valid for the whole time span [t_lo, t_hi]."""

    t_lo: float
    t_hi: float
    states: Box

    def __post_init__(self):
        if not self.t_lo < self.t_hi:
            raise ValueError(f"segment needs t_lo < t_hi, got [{self.t_lo}, {self.t_hi}]")

    def shifted(self, offset: float) -> "FlowpipeSegment":
        return FlowpipeSegment(self.t_lo + offset, self.t_hi + offset, self.states)


def _inflate(box: Box, rel: float) -> Box:
    pad = 0.5 * rel * box.widths()
    return Box(box.lo - pad, box.hi + pad)


_MAX_PICARD_ROUNDS = 50


def apriori_enclosure(model: PlantModel, X: Box, U: Optional[Box], h: float) -> Box:
    """Box proven to contain all solutions from X over [0, h] under inputs U.

    Iterates the Picard map B -> X + [0,h] * f(B, U) from a 5 percent
    widening of X, inflating by 10 percent whenever the map fails to
    contract, for at most 50 rounds.  The returned box P satisfies
    X + [0,h] * f(P, U) inside P, checkable after the fact.
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    _interval_env(model, X, U)  # dimension validation up front
    span = Interval(0.0, h)
    B = _inflate(X, 0.05)
    for _ in range(_MAX_PICARD_ROUNDS):
        try:
            f_box = deriv_interval(model, B, U)
            P = Box.from_intervals([X[i] + span * f_box[i] for i in range(len(X))])
        except (ValueError, ArithmeticError) as exc:
            # candidate box blew up to non-finite values or hit a division
            # by an interval straddling zero: no enclosure at this step
            raise EnclosureFailure(f"iteration diverged at step {h}: {exc}") from None
        if P.issubset(B):
            return P
        B = _inflate(Box.hull([B, P]), 0.10)
    raise EnclosureFailure(
        f"no enclosure after {_MAX_PICARD_ROUNDS} Picard rounds at step {h}; reduce the step size"
    )


def _jacobian_exprs(model: PlantModel) -> List[List[Expr]]:
    return [[expr_diff(d, s) for s in model.state_vars] for d in model.derivs]


def _jacobian_interval(
    model: PlantModel, jac: List[List[Expr]], X: Box, U: Optional[Box]
) -> List[List[Interval]]:
    env = _interval_env(model, X, U)
    return [[expr_eval_interval(e, env) for e in row] for row in jac]


def _advance_state(
    model: PlantModel,
    jac: List[List[Expr]],
    X: Box,
    B: Box,
    U: Optional[Box],
    delta: float,
) -> Box:
    # Centered first-order step.  For a constant u, Taylor with Lagrange
    # remainder gives x(d) = x0 + d*f(x0,u) + d^2/2 * (Jf)(x(z),u) with x(z)
    # in the enclosure B, and the mean value theorem turns f(x0,u) into
    # f(c,u) + J(xi,u)(x0-c) with xi in X.  Grouping the diagonal as
    # (1 + d*J_ii)*r_i keeps contractive dynamics contractive, which naive
    # interval Euler cannot do (it widens even stable systems exponentially).
    n = len(X)
    c = X.midpoint()
    step = Interval(delta, delta)
    half_sq = Interval(0.5 * delta * delta, 0.5 * delta * delta)
    f_c = deriv_interval(model, Box.point(c), U)
    J_X = _jacobian_interval(model, jac, X, U)
    J_B = _jacobian_interval(model, jac, B, U)
    f_B = deriv_interval(model, B, U)
    r = [Interval(float(X.lo[i] - c[i]), float(X.hi[i] - c[i])) for i in range(n)]
    new_dims = []
    for i in range(n):
        lin = (Interval.point(1.0) + step * J_X[i][i]) * r[i]
        for j in range(n):
            if j != i:
                lin = lin + step * J_X[i][j] * r[j]
        rem = Interval(0.0, 0.0)
        for j in range(n):
            rem = rem + J_B[i][j] * f_B[j]
        new_dims.append(Interval.point(float(c[i])) + step * f_c[i] + lin + half_sq * rem)
    return Box.from_intervals(new_dims)


def reach_odex(
    model: PlantModel,
    U: Optional[Box],
    X_k: Box,
    h: float,
    m: int = 10,
) -> Tuple[List[FlowpipeSegment], Box]:
    """Validated flow of the state box over [0, h] under constant inputs U.

    Splits [0, h] into m substeps; each substep contributes one segment
    whose box is the substep's a priori enclosure, and the state box then
    advances by a centered first-order step around the box midpoint with
    interval Jacobians bounding both the mean-value linearization and the
    Taylor remainder over the enclosure.  Every exact solution starting in
    X_k stays inside the segment union and ends in the returned box.
    """
    if h <= 0:
        raise ValueError(f"horizon must be positive, got {h}")
    if m < 1:
        raise ValueError(f"need at least one substep, got {m}")
    delta = h / m
    jac = _jacobian_exprs(model)
    X = X_k
    segments: List[FlowpipeSegment] = []
    for j in range(m):
        try:
            B = apriori_enclosure(model, X, U, delta)
            t_lo = j * delta
            t_hi = h if j == m - 1 else (j + 1) * delta
            segments.append(FlowpipeSegment(t_lo, t_hi, B))
            X = _advance_state(model, jac, X, B, U, delta)
        except EnclosureFailure as exc:
            raise EnclosureFailure(f"substep {j}: {exc}", substep=j) from None
    return segments, X


def simulate_ode(
    model: PlantModel,
    x0: np.ndarray,
    u: np.ndarray,
    h: float,
    steps: int,
) -> np.ndarray:
    """Reference fixed-step RK4 trajectory under constant input; (steps+1, n)."""
    x = np.asarray(x0, dtype=float).copy()
    u = np.asarray(u, dtype=float)
    dt = h / steps
    out = np.empty((steps + 1, x.size))
    out[0] = x
    for i in range(steps):
        k1 = deriv_point(model, x, u)
        k2 = deriv_point(model, x + 0.5 * dt * k1, u)
        k3 = deriv_point(model, x + 0.5 * dt * k2, u)
        k4 = deriv_point(model, x + dt * k3, u)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = x
    return out

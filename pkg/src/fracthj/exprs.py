"""Closed-form data expressions for experiment configs.

Expressions are restricted Python arithmetic over the names ``x``, ``y``,
``t``, ``pi``, ``beta``, ``sigma`` and the functions ``cos``, ``sin``,
``exp``, ``sqrt``.  The syntax is whitelisted with :mod:`ast` before sympy
builds the symbolic form, so configs cannot execute arbitrary code.

Manufactured solutions must be sums of ``c(x, y) * t**g`` terms; for those
the Caputo derivative is exact via the power rule.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .errors import ConfigError

__all__ = ["Expr", "parse_expr", "caputo_of_monomials"]

X, Y, T = sp.symbols("x y t", real=True)
_FUNCS = {"cos": sp.cos, "sin": sp.sin, "exp": sp.exp, "sqrt": sp.sqrt}
_CONSTS = {"pi": sp.pi}
_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)


def _validate(text: str, names: set[str]) -> ast.Expression:
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(f"expression {text!r}: {type(node).__name__} is not allowed")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"expression {text!r}: only numeric literals are allowed")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise ConfigError(f"expression {text!r}: only {sorted(_FUNCS)} may be called")
            if len(node.args) != 1:
                raise ConfigError(f"expression {text!r}: functions take one argument")
        if isinstance(node, ast.Name) and node.id not in names and node.id not in _FUNCS:
            raise ConfigError(f"expression {text!r}: unknown name {node.id!r}")
    return tree


def _to_sympy(node: ast.AST, env: dict):
    if isinstance(node, ast.Expression):
        return _to_sympy(node.body, env)
    if isinstance(node, ast.Constant):
        return sp.nsimplify(node.value) if isinstance(node.value, int) else sp.Float(node.value, 17)
    if isinstance(node, ast.Name):
        return env[node.id]
    if isinstance(node, ast.UnaryOp):
        val = _to_sympy(node.operand, env)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](_to_sympy(node.args[0], env))
    a, b = _to_sympy(node.left, env), _to_sympy(node.right, env)
    op = node.op
    if isinstance(op, ast.Add):
        return a + b
    if isinstance(op, ast.Sub):
        return a - b
    if isinstance(op, ast.Mult):
        return a * b
    if isinstance(op, ast.Div):
        return a / b
    return a**b


@dataclass(frozen=True)
class Expr:
    """A parsed expression with numeric evaluation and symbolic derivatives."""

    text: str
    sym: sp.Expr

    def depends_on_time(self) -> bool:
        return T in self.sym.free_symbols

    def evaluate(self, coords, t=None) -> np.ndarray:
        """Values on coordinate arrays; ``t`` (1-D nodes) adds a leading time axis."""
        coords = tuple(np.asarray(c, dtype=float) for c in coords)
        f = sp.lambdify((X, Y, T), self.sym, modules="numpy")
        y = coords[1] if len(coords) > 1 else np.zeros_like(coords[0])
        if t is None:
            if self.depends_on_time():
                raise ConfigError(f"expression {self.text!r} must not depend on t here")
            return np.broadcast_to(np.asarray(f(coords[0], y, 0.0), dtype=float), coords[0].shape).copy()
        t = np.asarray(t, dtype=float)
        tt = t.reshape((-1,) + (1,) * coords[0].ndim)
        out = np.asarray(f(coords[0][None], y[None], tt), dtype=float)
        return np.broadcast_to(out, (t.size,) + coords[0].shape).copy()

    def diff(self, var: str) -> Expr:
        sym = {"x": X, "y": Y, "t": T}[var]
        return Expr(f"d/d{var}({self.text})", sp.diff(self.sym, sym))

    def laplacian(self, dim: int) -> Expr:
        lap = sp.diff(self.sym, X, 2) + (sp.diff(self.sym, Y, 2) if dim == 2 else 0)
        return Expr(f"lap({self.text})", lap)

    def at_time_zero(self) -> Expr:
        # t**g with g > 0 vanishes at 0; evaluate as a limit to avoid 0**g issues
        return Expr(f"({self.text})|t=0", sp.limit(self.sym, T, 0, "+"))


def parse_expr(text, beta: float | None = None, sigma: float | None = None, dim: int = 1) -> Expr:
    """Parse ``text`` (a string or number) into an :class:`Expr`."""
    if isinstance(text, (int, float)):
        text = repr(float(text))
    if not isinstance(text, str) or not text.strip():
        raise ConfigError(f"expression must be a non-empty string, got {text!r}")
    names = {"x", "t", "pi"} | ({"y"} if dim == 2 else set())
    env = {"x": X, "y": Y, "t": T, **_CONSTS}
    if beta is not None:
        names.add("beta")
        env["beta"] = sp.Float(beta, 17)
    if sigma is not None:
        names.add("sigma")
        env["sigma"] = sp.Float(sigma, 17)
    tree = _validate(text, names)
    return Expr(text, _to_sympy(tree, env))


def caputo_of_monomials(e: Expr, beta: float) -> Expr:
    """Caputo derivative of a sum of c(x, y) t**g terms, g = 0 or g > 0.

    Uses d^beta t^g = Gamma(g+1)/Gamma(g+1-beta) t^(g-beta); constants in t
    map to zero.
    """
    total = sp.Integer(0)
    for term in sp.Add.make_args(sp.expand(e.sym)):
        coeff, tpart = term.as_independent(T, as_Add=False)
        if tpart == 1:
            continue
        if tpart == T:
            g = sp.Integer(1)
        elif tpart.is_Pow and tpart.base == T and not tpart.exp.has(T):
            g = tpart.exp
        else:
            raise ConfigError(f"manufactured solution term {term} is not of the form c(x) t**g")
        g_val = float(g)
        if not g_val > 0:
            raise ConfigError(f"time exponent must be positive, got {g_val}")
        factor = sp.gamma(g + 1) / sp.gamma(g + 1 - sp.Float(beta, 17))
        total += coeff * factor * T ** (g - sp.Float(beta, 17))
    return Expr(f"caputo({e.text})", total)

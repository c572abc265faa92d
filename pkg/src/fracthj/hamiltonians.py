"""Hamiltonians H(x, p) = Phi(h(x), p) and checks of their structural conditions.

Momenta ``p`` carry the component axis first, shape ``(d, ...)``; the
coefficient ``h`` (values of h(x)) broadcasts against ``p.shape[1:]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog
from scipy.stats import qmc

__all__ = [
    "Hamiltonian",
    "make_hamiltonian",
    "ConditionReport",
    "AssumptionReport",
    "check_structural_assumptions",
]

Coefficient = Callable[..., np.ndarray]


def _constant(value: float) -> Coefficient:
    def h(*coords):
        return np.full(np.shape(coords[0]), float(value))

    return h


@dataclass(frozen=True)
class Hamiltonian:
    """Convex Hamiltonian with an x-dependent positive coefficient.

    ``kind`` is ``"quadratic"`` (h |p|^2), ``"power"``
    (h ((1+|p|^2)^{gamma/2} - 1)) or ``"custom"``, in which case
    ``custom_value(p, h)`` is required and ``custom_grad(p, h)`` optional
    (centered differences are used without it).
    """

    kind: str
    gamma: float
    coefficient: Coefficient
    custom_value: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    custom_grad: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    fd_step: float = 1e-6

    def coefficient_on(self, coords) -> np.ndarray:
        """h evaluated at coordinate arrays ``(x,)`` or ``(x, y)``."""
        coords = tuple(np.asarray(c, dtype=float) for c in coords)
        return np.broadcast_to(np.asarray(self.coefficient(*coords), dtype=float), coords[0].shape)

    def value(self, p: np.ndarray, h) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.kind == "quadratic":
            return h * np.sum(p**2, axis=0)
        if self.kind == "power":
            return h * ((1.0 + np.sum(p**2, axis=0)) ** (0.5 * self.gamma) - 1.0)
        return np.asarray(self.custom_value(p, h), dtype=float)

    def grad_p(self, p: np.ndarray, h) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.kind == "quadratic":
            return 2.0 * h * p
        if self.kind == "power":
            return h * self.gamma * (1.0 + np.sum(p**2, axis=0)) ** (0.5 * self.gamma - 1.0) * p
        if self.custom_grad is not None:
            return np.asarray(self.custom_grad(p, h), dtype=float)
        return self._fd_grad(p, h)

    def _fd_grad(self, p, h):
        out = np.empty_like(p)
        for j in range(p.shape[0]):
            e = np.zeros_like(p)
            e[j] = self.fd_step
            out[j] = (self.value(p + e, h) - self.value(p - e, h)) / (2 * self.fd_step)
        return out

    def hess_pp(self, p: np.ndarray, h) -> np.ndarray:
        """D_pp H by centered differences of the gradient, shape ``(d, d, ...)``."""
        p = np.asarray(p, dtype=float)
        d = p.shape[0]
        step = 1e-5
        out = np.empty((d, d) + p.shape[1:])
        for j in range(d):
            e = np.zeros_like(p)
            e[j] = step
            out[:, j] = (self.grad_p(p + e, h) - self.grad_p(p - e, h)) / (2 * step)
        return 0.5 * (out + np.swapaxes(out, 0, 1))

    def value_at(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        """H at points ``x`` (shape ``(d, ...)``) and momenta ``p``."""
        return self.value(p, self.coefficient_on(tuple(x)))

    def grad_x(self, x: np.ndarray, p: np.ndarray, step: float = 1e-6) -> np.ndarray:
        """D_x H by centered differences in x."""
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for j in range(x.shape[0]):
            e = np.zeros_like(x)
            e[j] = step
            out[j] = (self.value_at(x + e, p) - self.value_at(x - e, p)) / (2 * step)
        return out


def make_hamiltonian(spec: dict) -> Hamiltonian:
    """Build a Hamiltonian from ``{"kind", "gamma", "coefficient", ...}``.

    ``coefficient`` is a positive number or a callable of the coordinates.
    Quadratic Hamiltonians have ``gamma = 2``.
    """
    kind = spec.get("kind", "quadratic")
    if kind not in ("quadratic", "power", "custom"):
        raise ValueError(f"unknown Hamiltonian kind {kind!r}")
    gamma = float(spec.get("gamma", 2.0))
    if kind == "quadratic" and gamma != 2.0:
        raise ValueError("a quadratic Hamiltonian has gamma = 2")
    if not gamma > 1.0:
        raise ValueError(f"gamma must exceed 1, got {gamma}")
    coef = spec.get("coefficient", 1.0)
    if not callable(coef):
        if not float(coef) > 0:
            raise ValueError(f"coefficient must be strictly positive, got {coef}")
        coef = _constant(coef)
    else:
        probe = np.linspace(0.0, 1.0, 257)[:-1]
        grids = np.meshgrid(probe, probe, indexing="ij")
        try:
            values = np.asarray(coef(*grids), dtype=float)
        except TypeError:
            values = np.asarray(coef(probe), dtype=float)
        if not np.all(values > 0):
            raise ValueError("coefficient field must be strictly positive")
    if kind == "custom" and spec.get("value") is None:
        raise ValueError("custom Hamiltonian needs a 'value' callable")
    return Hamiltonian(kind, gamma, coef, spec.get("value"), spec.get("grad"))


# -- structural conditions ----------------------------------------------------------

#: Reference radius: lower-bound conditions must be coercive for |p| >= R0.
R0 = 1.0
#: Offsets may absorb at most this fraction of the leading term at |p| = R0.
OFFSET_FRACTION = 0.5
_POSITIVE = 1e-9


@dataclass
class ConditionReport:
    """Fitted constants and worst sampled margin for one condition.

    ``lower=True`` conditions read L >= C a - c, the others L <= C a + c.
    """

    name: str
    lower: bool
    C: float
    c: float
    margin: float

    @property
    def satisfied(self) -> bool:
        return self.margin >= -1e-9 and (not self.lower or self.C > _POSITIVE)


@dataclass
class AssumptionReport:
    gamma: float
    sample_count: int
    conditions: dict[str, ConditionReport] = field(default_factory=dict)

    @property
    def all_satisfied(self) -> bool:
        return all(c.satisfied for c in self.conditions.values())

    def violated(self) -> list[str]:
        return [k for k, c in self.conditions.items() if not c.satisfied]


def _fit_upper(L: np.ndarray, a: np.ndarray) -> tuple[float, float, float]:
    # min C + c  s.t.  C a_i + c >= L_i,  C, c >= 0
    res = linprog([1.0, 1.0], A_ub=np.column_stack([-a, -np.ones_like(a)]), b_ub=-L, bounds=[(0, None)] * 2)
    C, c = (res.x if res.success else (0.0, float(np.max(L))))
    margin = float(np.min((C * a + c - L) / (1.0 + a)))
    return float(C), float(c), margin


def _fit_lower(L: np.ndarray, a: np.ndarray, a_ref: float) -> tuple[float, float, float]:
    # max C - 2c  s.t.  C a_i - c <= L_i,  0 <= c <= OFFSET_FRACTION C a_ref
    A = np.vstack([np.column_stack([a, -np.ones_like(a)]), [-OFFSET_FRACTION * a_ref, 1.0]])
    b = np.concatenate([L, [0.0]])
    res = linprog([-1.0, 2.0], A_ub=A, b_ub=b, bounds=[(0, 1e6), (0, None)])
    C, c = (float(res.x[0]), float(res.x[1])) if res.success else (0.0, 0.0)
    if C <= _POSITIVE:
        # report how far unit constants are from holding
        C_ref, c_ref = 1.0, OFFSET_FRACTION * a_ref
        return C, c, float(np.min((L - C_ref * a + c_ref) / (1.0 + a)))
    return C, c, float(np.min((L - C * a + c) / (1.0 + a)))


def _samples(dim: int, count: int, seed: int, p_max: float) -> tuple[np.ndarray, np.ndarray]:
    u = qmc.Sobol(d=2 * dim, scramble=True, seed=seed).random(count)
    x = u[:, :dim].T
    if dim == 1:
        p = (p_max * (2.0 * u[:, 1] - 1.0))[None]
    else:
        r, ang = p_max * u[:, 2], 2 * np.pi * u[:, 3]
        p = np.vstack([r * np.cos(ang), r * np.sin(ang)])
    return x, p


def check_structural_assumptions(
    H: Hamiltonian, sample_count: int = 512, dim: int = 1, seed: int = 0, p_max: float = 10.0
) -> AssumptionReport:
    """Sample H1..H5 on quasi-random (x, p) with |p| <= p_max and fit constants.

    H1  D_pH.p - H        >= C |p|^g - c
    H2  |D_pH|            <= C |p|^(g-1) + c
    H3  |D_xx H|          <= C |p|^g + c
    H4  |D_px H|          <= C |p|^(g-1) + c
    H5  min eig D_pp H    >= C |p|^(g-2) - c

    Each condition gets its own constants (the smallest admissible by a
    linear program over the samples); violations are reported, not raised.
    """
    if sample_count < 100:
        raise ValueError("sample_count must be at least 100")
    g = H.gamma
    x, p = _samples(dim, sample_count, seed, p_max)
    h = H.coefficient_on(tuple(x))
    r = np.sqrt(np.sum(p**2, axis=0))
    val = H.value(p, h)
    grad = H.grad_p(p, h)

    step = 1e-4
    dxx = np.empty((dim, dim, sample_count))
    dpx = np.empty((dim, dim, sample_count))
    for i in range(dim):
        ei = np.zeros_like(x)
        ei[i] = step
        dxx[i, i] = (H.value_at(x + ei, p) - 2 * val + H.value_at(x - ei, p)) / step**2
        dpx[:, i] = (H.grad_p(p, H.coefficient_on(tuple(x + ei))) - H.grad_p(p, H.coefficient_on(tuple(x - ei)))) / (
            2 * step
        )
        for j in range(i + 1, dim):
            ej = np.zeros_like(x)
            ej[j] = step
            mixed = (
                H.value_at(x + ei + ej, p)
                - H.value_at(x + ei - ej, p)
                - H.value_at(x - ei + ej, p)
                + H.value_at(x - ei - ej, p)
            ) / (4 * step**2)
            dxx[i, j] = dxx[j, i] = mixed
    hpp = H.hess_pp(p, h)

    def opnorm(m):
        return np.linalg.norm(np.moveaxis(m, -1, 0), ord=2, axis=(1, 2))

    with np.errstate(divide="ignore"):
        a_g2 = np.where(r > 0, r ** (g - 2.0), np.inf if g < 2 else (1.0 if g == 2 else 0.0))
    a_g2 = np.minimum(a_g2, 1e12)
    min_eig = np.linalg.eigvalsh(np.moveaxis(hpp, -1, 0))[:, 0]

    report = AssumptionReport(g, sample_count)
    rows = {
        "H1": (True, np.sum(grad * p, axis=0) - val, r**g),
        "H2": (False, np.sqrt(np.sum(grad**2, axis=0)), r ** (g - 1)),
        "H3": (False, opnorm(dxx), r**g),
        "H4": (False, opnorm(dpx), r ** (g - 1)),
        "H5": (True, min_eig, a_g2),
    }
    for name, (lower, L, a) in rows.items():
        if lower:
            C, c, m = _fit_lower(L, a, R0 ** (g if name == "H1" else g - 2))
        else:
            C, c, m = _fit_upper(L, a)
        report.conditions[name] = ConditionReport(name, lower, C, c, m)
    return report

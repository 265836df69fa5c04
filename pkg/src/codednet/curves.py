"""Utility and cost curves attached to sessions and nodes.

Each curve knows its value, its derivative and how to solve the scalar
problem that appears in the rate and node-power subproblems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

_ROOT_TOL = 1e-10


def _solve_foc(deriv: Callable[[float], float], weight: float, lo: float, hi: float) -> float:
    # Maximizer of g(v) - weight*v over [lo, hi] for concave g with derivative deriv.
    if deriv(hi) >= weight:
        return hi
    if deriv(lo) <= weight:
        return lo
    return brentq(lambda v: deriv(v) - weight, lo, hi, xtol=_ROOT_TOL, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True)
class Utility:
    """Concave increasing session utility.

    ``kind`` is ``"log"`` (``ln a``) or ``"alpha"`` (alpha-fair,
    ``a**(1-alpha)/(1-alpha)`` with ``alpha > 0``, ``alpha != 1``).
    """

    kind: str = "log"
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("log", "alpha"):
            raise ValueError(f"unknown utility kind {self.kind!r}")
        if self.kind == "alpha" and (self.alpha <= 0 or self.alpha == 1):
            raise ValueError("alpha-fair utility needs alpha > 0 and alpha != 1")

    def value(self, a):
        a = np.asarray(a, dtype=float)
        if self.kind == "log":
            return np.log(a)
        return a ** (1.0 - self.alpha) / (1.0 - self.alpha)

    def deriv(self, a):
        a = np.asarray(a, dtype=float)
        if self.kind == "log":
            return 1.0 / a
        return a ** (-self.alpha)

    def argmax_linear(self, price: float, lo: float, hi: float) -> float:
        """Maximize ``U(a) - price*a`` over ``[lo, hi]``."""
        if price <= 0.0:
            return hi
        if self.kind == "log":
            return min(max(1.0 / price, lo), hi)
        return _solve_foc(lambda v: float(self.deriv(v)), price, lo, hi)

    def to_dict(self) -> dict:
        return {"kind": self.kind} if self.kind == "log" else {"kind": self.kind, "alpha": self.alpha}


@dataclass(frozen=True)
class Cost:
    """Convex nondecreasing node power cost ``coef * p**exponent`` (exponent >= 1)."""

    coef: float = 10.0
    exponent: float = 2.0

    def __post_init__(self):
        if self.coef < 0 or self.exponent < 1:
            raise ValueError("power cost needs coef >= 0 and exponent >= 1")

    @property
    def is_quadratic(self) -> bool:
        return self.exponent == 2.0

    def value(self, p):
        return self.coef * np.asarray(p, dtype=float) ** self.exponent

    def deriv(self, p):
        p = np.asarray(p, dtype=float)
        return self.coef * self.exponent * p ** (self.exponent - 1.0)

    def argmax_linear(self, price: float, hi: float) -> float:
        """Maximize ``price*p - V(p)`` over ``[0, hi]``."""
        if price <= 0.0:
            return 0.0
        if self.coef == 0.0:
            return hi
        if self.exponent == 1.0:
            return hi if price > self.coef else 0.0
        if self.is_quadratic:
            return min(price / (2.0 * self.coef), hi)
        # -V is concave; reuse the FOC solver on g(v) = -V(v) with weight -price.
        return _solve_foc(lambda v: -float(self.deriv(v)), -price, 0.0, hi)

    def to_dict(self) -> dict:
        return {"kind": "power", "coef": self.coef, "exponent": self.exponent}


def utility_from_dict(spec: dict) -> Utility:
    kind = spec.get("kind", "log")
    return Utility(kind=kind, alpha=float(spec.get("alpha", 1.0)))


def cost_from_dict(spec: dict) -> Cost:
    kind = spec.get("kind", "quadratic")
    if kind == "quadratic":
        return Cost(coef=float(spec.get("coef", 10.0)), exponent=2.0)
    if kind == "power":
        return Cost(coef=float(spec.get("coef", 10.0)), exponent=float(spec.get("exponent", 2.0)))
    raise ValueError(f"unknown cost kind {kind!r}")


LN2 = math.log(2.0)

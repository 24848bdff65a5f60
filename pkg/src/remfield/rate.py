"""Legendre-transform machinery shared by the asymptotic and empirical cumulants.

A cumulant provider maps t to (psi, psi', psi'') and exposes m_abs, the
supremum of psi'. The same solvers serve psi(t) = E[log cosh t h] and its
finite-N analogue psi_N(t) = (1/N) sum log cosh t h_i.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from remfield.errors import ConvergenceError, DomainError
from remfield.models import CumulantEvaluation, EntropyPoint, RatePoint

log = logging.getLogger(__name__)

LOG2 = math.log(2.0)

ROOT_RTOL = 1e-12
MAX_ITER = 200
MAX_DOUBLINGS = 60


def log_cosh(x: np.ndarray | float) -> np.ndarray:
    """log cosh x as |x| + log(1 + exp(-2|x|)) - log 2, safe for |x| > 700."""
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - LOG2


def sech2(x: np.ndarray | float) -> np.ndarray:
    """1/cosh^2 x without overflow."""
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


@runtime_checkable
class CumulantProvider(Protocol):
    """Anything that evaluates a convex cumulant function and knows sup psi'."""

    @property
    def m_abs(self) -> float: ...

    def evaluate(self, t: float) -> CumulantEvaluation: ...


class DiscreteCumulant:
    """Cumulant of a law given by nodes and probability weights.

    psi(t) = sum_k w_k log cosh(t x_k). Discrete field laws are exact in this
    form, continuous laws enter through their quadrature rule and an empirical
    field is the uniform law on its sample.
    """

    def __init__(self, nodes: np.ndarray, weights: np.ndarray):
        self.nodes = np.asarray(nodes, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self._m_abs = float(np.dot(self.weights, np.abs(self.nodes)))

    @property
    def m_abs(self) -> float:
        return self._m_abs

    def expect(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """E[fn(h)] under the node law."""
        return float(np.dot(self.weights, fn(self.nodes)))

    def evaluate(self, t: float) -> CumulantEvaluation:
        if not math.isfinite(t):
            raise DomainError(f"t must be finite, got {t!r}")
        a = t * self.nodes
        x = self.nodes
        w = self.weights
        psi = float(np.dot(w, log_cosh(a)))
        psi_prime = float(np.dot(w, x * np.tanh(a)))
        psi_double_prime = float(np.dot(w, x * x * sech2(a)))
        return CumulantEvaluation(
            t=float(t),
            psi=psi,
            psi_prime=psi_prime,
            psi_double_prime=psi_double_prime,
        )


def safeguarded_newton(
    fdf: Callable[[float], tuple[float, float]],
    lo: float,
    hi: float,
    ftol: float,
    maxiter: int = MAX_ITER,
) -> float:
    """Root of an increasing function bracketed by [lo, hi].

    Newton steps are taken when they stay inside the bracket and shrink fast
    enough, bisection otherwise. fdf returns (f(x), f'(x)).
    """
    flo, _ = fdf(lo)
    fhi, _ = fdf(hi)
    if abs(flo) <= ftol:
        return lo
    if abs(fhi) <= ftol:
        return hi
    if flo > 0.0 or fhi < 0.0:
        raise ConvergenceError(f"Root not bracketed: f({lo})={flo}, f({hi})={fhi}")

    x = 0.5 * (lo + hi)
    dx_old = hi - lo
    dx = dx_old
    f, df = fdf(x)
    for _ in range(maxiter):
        if abs(f) <= ftol:
            return _polish(fdf, x, f, df, lo, hi)
        if f < 0.0:
            lo = x
        else:
            hi = x
        newton_out = df <= 0.0 or not (lo < x - f / df < hi)
        if newton_out or abs(2.0 * f) > abs(dx_old * df):
            dx_old = dx
            dx = 0.5 * (hi - lo)
            x = lo + dx
        else:
            dx_old = dx
            dx = f / df
            x = x - dx
        if hi - lo <= 4.0 * np.finfo(float).eps * max(1.0, abs(x)):
            # bracket at machine resolution, the residual cannot shrink further
            f, df = fdf(x)
            return x
        f, df = fdf(x)
    raise ConvergenceError(f"No convergence in {maxiter} iterations (|f|={abs(f):.3e})")


def _polish(fdf, x: float, f: float, df: float, lo: float, hi: float) -> float:
    # one extra Newton step: the residual test alone leaves x off by ftol/f'
    if df <= 0.0 or f == 0.0:
        return x
    x_new = x - f / df
    if not lo <= x_new <= hi:
        return x
    f_new, _ = fdf(x_new)
    return x_new if abs(f_new) <= abs(f) else x


def conjugate(provider: CumulantProvider, y: float) -> RatePoint:
    """Solve psi'(t) = y and return (y, t, I(y) = t*y - psi(t))."""
    m_abs = provider.m_abs
    if not math.isfinite(y) or abs(y) >= m_abs:
        raise DomainError(f"|y|={abs(y):g} outside the open domain (-{m_abs:g}, {m_abs:g})")

    T = 1.0
    for _ in range(MAX_DOUBLINGS):
        if provider.evaluate(-T).psi_prime <= y <= provider.evaluate(T).psi_prime:
            break
        T *= 2.0
    else:
        raise DomainError(f"y={y:g} is numerically at the boundary of the domain")

    def fdf(t: float) -> tuple[float, float]:
        ev = provider.evaluate(t)
        return ev.psi_prime - y, ev.psi_double_prime

    t = safeguarded_newton(fdf, -T, T, ROOT_RTOL * max(1.0, abs(y)))
    psi = provider.evaluate(t).psi
    return RatePoint(y=float(y), t=t, I=t * y - psi)


def rate_I(provider: CumulantProvider, y: float) -> float:
    """I(y) = sup_t {y*t - psi(t)}."""
    return conjugate(provider, y).I


def entropy_point(provider: CumulantProvider, E: float) -> EntropyPoint:
    """max_y {log 2 - (E - y)^2 / 2 - I(y)} via the stationarity condition.

    The maximiser satisfies E = t + psi'(t) with y* = psi'(t*). The map
    t -> t + psi'(t) is strictly increasing and |psi'| <= m_abs, so the root
    lies in [E - m_abs, E + m_abs].
    """
    if not math.isfinite(E):
        raise DomainError(f"E must be finite, got {E!r}")
    m_abs = provider.m_abs

    def fdf(t: float) -> tuple[float, float]:
        ev = provider.evaluate(t)
        return t + ev.psi_prime - E, 1.0 + ev.psi_double_prime

    if m_abs == 0.0:
        t = float(E)
    else:
        t = safeguarded_newton(fdf, E - m_abs, E + m_abs, 1e-13 * max(1.0, abs(E)))
    ev = provider.evaluate(t)
    y = ev.psi_prime
    rate = t * y - ev.psi
    S = LOG2 - 0.5 * (E - y) ** 2 - rate
    return EntropyPoint(E=float(E), S=S, y_star=y, t_star=t)


def critical_point(provider: CumulantProvider) -> float:
    """Positive root of g(t) = t^2/2 + t psi'(t) - psi(t) - log 2.

    g(0) = -log 2 and g'(t) = t (1 + psi''(t)) > 0 for t > 0. Since
    t psi'(t) - psi(t) >= 0, g(sqrt(2 log 2)) >= 0 closes the bracket.
    """

    def fdf(t: float) -> tuple[float, float]:
        ev = provider.evaluate(t)
        g = 0.5 * t * t + t * ev.psi_prime - ev.psi - LOG2
        return g, t * (1.0 + ev.psi_double_prime)

    hi = math.sqrt(2.0 * LOG2)
    root = safeguarded_newton(fdf, 0.0, hi, ROOT_RTOL)
    log.debug("critical point t=%.15g", root)
    return root

"""Asymptotic thermodynamics of the REM in a random field.

Everything is derived from the cumulant psi of the field law:

* S(E) = max_y {log 2 - (E - y)^2/2 - I(y)}, positive on (E_min, E_max);
* beta_c, the positive root of g(b) = b^2/2 + b psi'(b) - psi(b) - log 2;
* f(beta) = log 2 + beta^2/2 + psi(beta) below beta_c and beta E_max above;
* q = E[tanh^2(beta_c h)] and C = (2 pi (1 + psi''(beta_c)))^(-1/2).
"""

from __future__ import annotations

import logging
import math
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from remfield.errors import ConvergenceError, DomainError
from remfield.field import FieldModel
from remfield.models import EntropyPoint, GibbsPoint, ThermoSolution
from remfield.rate import LOG2, MAX_DOUBLINGS, critical_point, entropy_point, safeguarded_newton

log = logging.getLogger(__name__)

EDGE_XTOL = 1e-14
BOUND_FTOL = 1e-13


def _require_positive(beta: float) -> None:
    if not (math.isfinite(beta) and beta > 0.0):
        raise DomainError(f"beta must be positive and finite, got {beta!r}")


def entropy_S(model: FieldModel, E: float) -> EntropyPoint:
    """S(E) with its maximiser y* and conjugate t*."""
    return entropy_point(model.cumulant, E)


def _edge(model: FieldModel, start: float, direction: float) -> float:
    # root of S on one side of its peak at E[h], bracket grown by doubling
    def S(E: float) -> float:
        return entropy_point(model.cumulant, E).S

    inner = start
    step = 1.0
    for _ in range(MAX_DOUBLINGS):
        outer = start + direction * step
        if S(outer) < 0.0:
            break
        inner = outer
        step *= 2.0
    else:
        raise ConvergenceError(f"S(E) keeps its sign beyond E={outer:g}")
    lo, hi = sorted((inner, outer))
    try:
        return brentq(S, lo, hi, xtol=EDGE_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (RuntimeError, ValueError) as e:
        raise ConvergenceError(f"band edge search failed on [{lo:g}, {hi:g}]: {e}") from e


def band_edges(model: FieldModel) -> tuple[float, float]:
    """(E_min, E_max), the zeros of S on either side of E = E[h].

    S is even in E with its peak log 2 at E = psi'(0) = 0. When E[h] lies
    outside the band (a strong deterministic field) the search starts from
    the peak instead.
    """
    start = model.mean_value()
    if entropy_point(model.cumulant, start).S <= 0.0:
        start = 0.0
    return _edge(model, start, -1.0), _edge(model, start, 1.0)


def solve_beta_c(model: FieldModel) -> float:
    """Critical inverse temperature."""
    return critical_point(model.cumulant)


def overlap_q(model: FieldModel) -> float:
    """q = E[tanh^2(beta_c h)], the off-diagonal overlap atom."""
    beta_c = solve_beta_c(model)
    return model.expect(lambda x: np.tanh(beta_c * x) ** 2)


def intensity_constant(model: FieldModel) -> float:
    """C = 1 / sqrt(2 pi (1 + psi''(beta_c)))."""
    beta_c = solve_beta_c(model)
    return 1.0 / math.sqrt(2.0 * math.pi * (1.0 + model.evaluate(beta_c).psi_double_prime))


@lru_cache(maxsize=64)
def solve(model: FieldModel) -> ThermoSolution:
    """All asymptotic constants of a field law."""
    beta_c = solve_beta_c(model)
    e_min, e_max = band_edges(model)
    at_edge = entropy_point(model.cumulant, e_max)
    solution = ThermoSolution(
        beta_c=beta_c,
        e_max=e_max,
        e_min=e_min,
        q=overlap_q(model),
        c_intensity=intensity_constant(model),
        y_star=at_edge.y_star,
        t_star=at_edge.t_star,
        model=model,
    )
    log.debug("%s: beta_c=%.12g e_max=%.12g q=%.6g", model.label, beta_c, e_max, solution.q)
    return solution


def annealed_free_energy(model: FieldModel, beta: float) -> float:
    """log 2 + beta^2/2 + psi(beta), the high-temperature branch at any beta."""
    _require_positive(beta)
    return LOG2 + 0.5 * beta * beta + model.evaluate(beta).psi


def free_energy(model: FieldModel, beta: float) -> float:
    """Limiting free energy f(beta)."""
    _require_positive(beta)
    sol = solve(model)
    if beta <= sol.beta_c:
        return annealed_free_energy(model, beta)
    return beta * sol.e_max


def gibbs_maximizer(model: FieldModel, beta: float) -> GibbsPoint:
    """Maximiser E*(beta) of beta E + S(E) over [E_min, E_max].

    Inside the band the maximiser solves t*(E) = beta, i.e.
    E* = beta + psi'(beta). Above beta_c it freezes at E_max.
    """
    _require_positive(beta)
    sol = solve(model)
    if beta >= sol.beta_c:
        e_star = sol.e_max
        frozen = True
    else:
        e_star = beta + model.evaluate(beta).psi_prime
        frozen = False
    point = entropy_point(model.cumulant, e_star)
    return GibbsPoint(
        beta=beta,
        value=beta * e_star + point.S,
        e_star=e_star,
        t_star=point.t_star,
        y_star=point.y_star,
        frozen=frozen,
    )


def gibbs_variational(model: FieldModel, beta: float) -> float:
    """max over the band of beta E + S(E)."""
    return gibbs_maximizer(model, beta).value


def _bound(model: FieldModel, beta: float, m: float) -> float:
    return 0.5 * beta * beta * m + LOG2 / m + model.evaluate(beta * m).psi / m


def fractional_bound(model: FieldModel, beta: float) -> tuple[float, float]:
    """inf over m in (0, 1] of beta^2 m/2 + log 2/m + psi(beta m)/m.

    Returns (value, m_star). B'(m) m^2 = g(beta m), so a golden-section
    estimate is refined by a bracketed Newton solve of g(beta m) = 0.
    """
    _require_positive(beta)

    def g(m: float) -> tuple[float, float]:
        b = beta * m
        ev = model.evaluate(b)
        return 0.5 * b * b + b * ev.psi_prime - ev.psi - LOG2, beta * b * (1.0 + ev.psi_double_prime)

    if g(1.0)[0] <= 0.0:
        m_star = 1.0
    else:
        coarse = minimize_scalar(
            lambda m: _bound(model, beta, m),
            bounds=(1e-6, 1.0),
            method="bounded",
            options={"xatol": 1e-6},
        )
        width = 1e-3
        lo = max(0.0, coarse.x - width)
        hi = min(1.0, coarse.x + width)
        if not (g(lo)[0] < 0.0 < g(hi)[0]):
            lo, hi = 0.0, 1.0
        m_star = safeguarded_newton(g, lo, hi, BOUND_FTOL)
    return _bound(model, beta, m_star), m_star


def free_energy_curve(model: FieldModel, betas) -> list[dict]:
    """Rows of f, the annealed branch and the variational maximiser per beta."""
    rows = []
    for beta in betas:
        point = gibbs_maximizer(model, beta)
        rows.append(
            {
                "beta": beta,
                "free_energy": free_energy(model, beta),
                "annealed": annealed_free_energy(model, beta),
                "gibbs_variational": point.value,
                "e_star": point.e_star,
                "y_star": point.y_star,
                "frozen": point.frozen,
            }
        )
    return rows


def fractional_curve(model: FieldModel, betas) -> list[dict]:
    """Rows of the fractional-moment bound against f per beta."""
    rows = []
    for beta in betas:
        value, m_star = fractional_bound(model, beta)
        f = free_energy(model, beta)
        rows.append({"beta": beta, "bound": value, "m_star": m_star, "free_energy": f, "gap": value - f})
    return rows

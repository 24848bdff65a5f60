"""Finite-N constants of one disorder realisation.

For a sampled field h = (h_1, ..., h_N) the empirical cumulant
psi_N(t) = (1/N) sum log cosh(t h_i) plays the role of psi. The upper band
edge c1 of S_N, its log-correction c2 and the recentering r(N, h) follow from
the positive root t*_N of

    g_N(t) = t^2/2 + t psi_N'(t) - psi_N(t) - log 2,

with y*_N = psi_N'(t*_N), c1 = t*_N + y*_N, c2 = 1/(2 t*_N) and
r = c1 N - c2 log N.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.special import expit

from remfield.errors import ConfigError, DomainError
from remfield.models import RecenteringConstants, ThermoSolution
from remfield.rate import DiscreteCumulant, critical_point, entropy_point

log = logging.getLogger(__name__)

# tilted draws per batch; keeps the Bernoulli matrix near 20 MB at N = 10^4
TILT_BATCH = 256


class EmpiricalField(DiscreteCumulant):
    """One disorder realisation h_1..h_N with its empirical cumulant psi_N."""

    def __init__(self, h):
        h = np.asarray(h, dtype=float).ravel()
        if h.size == 0:
            raise ConfigError("an empirical field needs at least one site")
        if not np.all(np.isfinite(h)):
            raise ConfigError("field values must be finite")
        super().__init__(h, np.full(h.size, 1.0 / h.size))
        self.h = h
        self.n = int(h.size)
        self.sum_abs = float(np.abs(h).sum())

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"EmpiricalField(n={self.n}, sum_abs={self.sum_abs:.6g})"


def recentering_constants(field: EmpiricalField) -> RecenteringConstants:
    """t*_N, y*_N, c1, c2 and r(N, h) of a sampled field."""
    t_star = critical_point(field)
    ev = field.evaluate(t_star)
    y_star = ev.psi_prime
    n = field.n
    c1 = t_star + y_star
    c2 = 1.0 / (2.0 * t_star)
    q_n = float(np.mean(np.tanh(t_star * field.h) ** 2))
    constants = RecenteringConstants(
        n=n,
        t_star=t_star,
        y_star=y_star,
        c1=c1,
        c2=c2,
        r=c1 * n - c2 * math.log(n),
        rate_at_y_star=t_star * y_star - ev.psi,
        psi_pp=ev.psi_double_prime,
        q_n=q_n,
    )
    log.debug("recentering N=%d t*=%.12g y*=%.12g r=%.12g", n, t_star, y_star, constants.r)
    return constants


def c1_from_rate(constants: RecenteringConstants) -> float:
    """sqrt(2 (log 2 - I_N(y*_N))) + y*_N, the second form of c1."""
    return math.sqrt(2.0 * (math.log(2.0) - constants.rate_at_y_star)) + constants.y_star


def sn_direct(field: EmpiricalField, E: float) -> float:
    """S_N(E) = max_y {log 2 - (E - y)^2/2 - I_N(y)}."""
    return entropy_point(field, E).S


def tilted_spin_probabilities(field: EmpiricalField, t: float) -> np.ndarray:
    """P(sigma_i = +1) = e^{t h_i} / (2 cosh t h_i) under the tilted measure."""
    if not math.isfinite(t):
        raise DomainError(f"t must be finite, got {t!r}")
    return expit(2.0 * t * field.h)


def sample_tilted_y(field: EmpiricalField, t: float, draws: int, seed: int) -> np.ndarray:
    """Field energy densities y_N(sigma) = (1/N) sum h_i sigma_i of tilted configurations."""
    if draws < 1:
        raise ConfigError(f"draws must be >= 1, got {draws}")
    p = tilted_spin_probabilities(field, t)
    rng = np.random.default_rng(seed)
    h = field.h
    total = h.sum()
    out = np.empty(draws)
    for start in range(0, draws, TILT_BATCH):
        stop = min(start + TILT_BATCH, draws)
        up = (rng.random((stop - start, field.n)) < p).astype(float)
        # sum h_i sigma_i with sigma = 2*up - 1
        out[start:stop] = 2.0 * (up @ h) - total
    return out / field.n


def deterministic_recentering(thermo: ThermoSolution, n: int) -> float:
    """E_max N - log N / (2 beta_c), the shift that ignores the sampled field."""
    return thermo.e_max * n - math.log(n) / (2.0 * thermo.beta_c)

"""Random-field laws and the cumulant function psi(t) = E[log cosh t h]."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np
from numpy.polynomial.legendre import leggauss

from remfield.errors import ConfigError, QuadratureAccuracyWarning
from remfield.models import CumulantEvaluation
from remfield.rate import DiscreteCumulant

if TYPE_CHECKING:
    from remfield.recentering import EmpiricalField

DEFAULT_QUADRATURE_ORDER = 64
QUADRATURE_TOL = 1e-10
# standard deviations kept on each side of a Gaussian; the tail mass beyond is ~1e-33
GAUSSIAN_SPAN = 12.0
CHECK_GRID = np.linspace(-5.0, 5.0, 41)


class FieldKind(Enum):
    """Supported laws of a single field variable."""

    ZERO = "zero"
    POINT_MASS = "point_mass"
    RADEMACHER = "rademacher"
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    DISCRETE = "discrete"

    @property
    def is_continuous(self) -> bool:
        return self in (FieldKind.GAUSSIAN, FieldKind.UNIFORM)


_KIND_ALIASES = {
    "pointmass": FieldKind.POINT_MASS,
    "point": FieldKind.POINT_MASS,
    "deterministic": FieldKind.POINT_MASS,
    "normal": FieldKind.GAUSSIAN,
    "table": FieldKind.DISCRETE,
    "discrete_table": FieldKind.DISCRETE,
}


@dataclass(frozen=True)
class FieldModel:
    """Law of h_1.

    Build instances with the named constructors (FieldModel.rademacher(...))
    or FieldModel.from_dict on a tagged record such as
    {"kind": "rademacher", "p": 0.5, "a": 1.0}.
    """

    kind: FieldKind
    h: float = 0.0  # point mass location
    p: float = 0.5  # Rademacher P(h = +a)
    a: float = 1.0  # Rademacher magnitude
    mean: float = 0.0
    stddev: float = 1.0
    lo: float = -1.0
    hi: float = 1.0
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    quadrature_order: int = DEFAULT_QUADRATURE_ORDER

    def __post_init__(self):
        if not isinstance(self.quadrature_order, int) or self.quadrature_order < 1:
            raise ConfigError("quadrature_order must be a positive integer")
        params = (self.h, self.p, self.a, self.mean, self.stddev, self.lo, self.hi)
        if not all(math.isfinite(v) for v in params):
            raise ConfigError("field parameters must be finite")
        if self.kind is FieldKind.RADEMACHER:
            if not 0.0 < self.p < 1.0:
                raise ConfigError(f"Rademacher p must lie in (0, 1), got {self.p}")
            if self.a <= 0.0:
                raise ConfigError(f"Rademacher magnitude must be positive, got {self.a}")
        elif self.kind is FieldKind.GAUSSIAN:
            if self.stddev < 0.0:
                raise ConfigError(f"stddev must be >= 0, got {self.stddev}")
        elif self.kind is FieldKind.UNIFORM:
            if not self.lo < self.hi:
                raise ConfigError(f"Uniform needs lo < hi, got [{self.lo}, {self.hi}]")
        elif self.kind is FieldKind.DISCRETE:
            if not self.values or len(self.values) != len(self.probs):
                raise ConfigError("discrete law needs matching, non-empty values and probs")
            if any(p < 0.0 for p in self.probs):
                raise ConfigError("discrete probabilities must be non-negative")
            if abs(math.fsum(self.probs) - 1.0) > 1e-12:
                raise ConfigError(f"discrete probabilities sum to {math.fsum(self.probs)!r}")
            if not all(math.isfinite(v) for v in self.values):
                raise ConfigError("discrete values must be finite")

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls) -> FieldModel:
        return cls(FieldKind.ZERO)

    @classmethod
    def point_mass(cls, h: float) -> FieldModel:
        return cls(FieldKind.POINT_MASS, h=float(h))

    @classmethod
    def rademacher(cls, p: float = 0.5, a: float = 1.0) -> FieldModel:
        return cls(FieldKind.RADEMACHER, p=float(p), a=float(a))

    @classmethod
    def gaussian(cls, mean: float = 0.0, stddev: float = 1.0, order: int = DEFAULT_QUADRATURE_ORDER) -> FieldModel:
        return cls(FieldKind.GAUSSIAN, mean=float(mean), stddev=float(stddev), quadrature_order=order)

    @classmethod
    def uniform(cls, lo: float = -1.0, hi: float = 1.0, order: int = DEFAULT_QUADRATURE_ORDER) -> FieldModel:
        return cls(FieldKind.UNIFORM, lo=float(lo), hi=float(hi), quadrature_order=order)

    @classmethod
    def discrete(cls, values, probs) -> FieldModel:
        return cls(
            FieldKind.DISCRETE,
            values=tuple(float(v) for v in values),
            probs=tuple(float(p) for p in probs),
        )

    @classmethod
    def from_dict(cls, data: dict) -> FieldModel:
        """Build a model from its tagged-record form."""
        if not isinstance(data, dict) or "kind" not in data:
            raise ConfigError(f"field model must be a record with a 'kind' key, got {data!r}")
        name = str(data["kind"]).strip().lower()
        try:
            kind = _KIND_ALIASES.get(name) or FieldKind(name)
        except ValueError:
            known = ", ".join(k.value for k in FieldKind)
            raise ConfigError(f"unknown field kind {name!r} (known: {known})") from None

        extra = {}
        try:
            if "quadrature_order" in data:
                extra["quadrature_order"] = int(data["quadrature_order"])
            if kind is FieldKind.ZERO:
                return cls(kind, **extra)
            if kind is FieldKind.POINT_MASS:
                return cls(kind, h=float(data.get("h", 0.0)), **extra)
            if kind is FieldKind.RADEMACHER:
                return cls(kind, p=float(data.get("p", 0.5)), a=float(data.get("a", 1.0)), **extra)
            if kind is FieldKind.GAUSSIAN:
                return cls(
                    kind,
                    mean=float(data.get("mean", 0.0)),
                    stddev=float(data.get("stddev", data.get("std", 1.0))),
                    **extra,
                )
            if kind is FieldKind.UNIFORM:
                return cls(kind, lo=float(data.get("lo", -1.0)), hi=float(data.get("hi", 1.0)), **extra)
            return cls(
                kind,
                values=tuple(float(v) for v in data.get("values", ())),
                probs=tuple(float(p) for p in data.get("probs", ())),
                **extra,
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid field model {data!r}: {e}") from e

    def to_dict(self) -> dict:
        """Tagged-record form, inverse of from_dict."""
        data: dict = {"kind": self.kind.value}
        if self.kind is FieldKind.POINT_MASS:
            data["h"] = self.h
        elif self.kind is FieldKind.RADEMACHER:
            data.update(p=self.p, a=self.a)
        elif self.kind is FieldKind.GAUSSIAN:
            data.update(mean=self.mean, stddev=self.stddev)
        elif self.kind is FieldKind.UNIFORM:
            data.update(lo=self.lo, hi=self.hi)
        elif self.kind is FieldKind.DISCRETE:
            data.update(values=list(self.values), probs=list(self.probs))
        if self.kind.is_continuous and self.quadrature_order != DEFAULT_QUADRATURE_ORDER:
            data["quadrature_order"] = self.quadrature_order
        return data

    @property
    def label(self) -> str:
        """Short human-readable name."""
        k = self.kind
        if k is FieldKind.ZERO:
            return "Zero"
        if k is FieldKind.POINT_MASS:
            return f"PointMass(h={self.h:g})"
        if k is FieldKind.RADEMACHER:
            return f"Rademacher(p={self.p:g}, a={self.a:g})"
        if k is FieldKind.GAUSSIAN:
            return f"Gaussian({self.mean:g}, {self.stddev:g})"
        if k is FieldKind.UNIFORM:
            return f"Uniform({self.lo:g}, {self.hi:g})"
        return f"Discrete({len(self.values)} atoms)"

    @property
    def has_random_modulus(self) -> bool:
        """True when |h| is not almost surely constant.

        Only then does the empirical cumulant of a sampled field differ from
        psi, so the field-dependent and the deterministic recentering differ.
        """
        k = self.kind
        if k in (FieldKind.ZERO, FieldKind.POINT_MASS, FieldKind.RADEMACHER):
            return False
        if k is FieldKind.GAUSSIAN:
            return self.stddev > 0.0
        if k is FieldKind.UNIFORM:
            return True
        moduli = {abs(v) for v, p in zip(self.values, self.probs) if p > 0.0}
        return len(moduli) > 1

    # -- cumulant ---------------------------------------------------------

    def nodes(self, order: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Support points and probability weights of the (quadrature) law."""
        order = order or self.quadrature_order
        k = self.kind
        if k is FieldKind.ZERO:
            return np.zeros(1), np.ones(1)
        if k is FieldKind.POINT_MASS:
            return np.array([self.h]), np.ones(1)
        if k is FieldKind.RADEMACHER:
            return np.array([self.a, -self.a]), np.array([self.p, 1.0 - self.p])
        if k is FieldKind.DISCRETE:
            return np.array(self.values), np.array(self.probs)
        if k is FieldKind.GAUSSIAN:
            if self.stddev == 0.0:
                return np.array([self.mean]), np.ones(1)
            z_lo, z_hi = -GAUSSIAN_SPAN, GAUSSIAN_SPAN
            z, w = _split_legendre(z_lo, z_hi, -self.mean / self.stddev, order)
            w = w * np.exp(-0.5 * z * z)
            return self.mean + self.stddev * z, w / w.sum()
        x, w = _split_legendre(self.lo, self.hi, 0.0, order)
        return x, w / w.sum()

    @cached_property
    def cumulant(self) -> DiscreteCumulant:
        nodes, weights = self.nodes()
        if self.kind.is_continuous:
            check_quadrature(self)
        return DiscreteCumulant(nodes, weights)

    @property
    def m_abs(self) -> float:
        """E|h_1|, the supremum of psi'."""
        return self.cumulant.m_abs

    def evaluate(self, t: float) -> CumulantEvaluation:
        return self.cumulant.evaluate(t)

    def expect(self, fn) -> float:
        """E[fn(h_1)] with the model's exact or quadrature expectation."""
        return self.cumulant.expect(fn)

    def mean_value(self) -> float:
        return self.expect(lambda x: x)

    def second_moment(self) -> float:
        return self.expect(lambda x: x * x)


def _split_legendre(lo: float, hi: float, cut: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Legendre panels on [lo, hi], split at `cut` when it lies inside
    u, wu = leggauss(order)
    edges = [lo, cut, hi] if lo < cut < hi else [lo, hi]
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        xs.append(0.5 * (a + b) + half * u)
        ws.append(half * wu)
    return np.concatenate(xs), np.concatenate(ws)


def check_quadrature(model: FieldModel, grid: np.ndarray = CHECK_GRID) -> float:
    """Largest change in psi on the grid when the quadrature order is doubled.

    Emits QuadratureAccuracyWarning above QUADRATURE_TOL.
    """
    if not model.kind.is_continuous:
        return 0.0
    base = DiscreteCumulant(*model.nodes())
    fine = DiscreteCumulant(*model.nodes(2 * model.quadrature_order))
    drift = max(abs(base.evaluate(t).psi - fine.evaluate(t).psi) for t in grid)
    if drift >= QUADRATURE_TOL:
        warnings.warn(
            f"{model.label}: doubling the quadrature order moves psi by {drift:.2e}",
            QuadratureAccuracyWarning,
            stacklevel=2,
        )
    return drift


def psi(model: FieldModel, t: float) -> CumulantEvaluation:
    """psi(t), psi'(t) and psi''(t) for the law of h_1."""
    return model.evaluate(t)


def mean_abs(model: FieldModel) -> float:
    """E|h_1|, the endpoint of the rate-function domain."""
    return model.m_abs


def sample_field(model: FieldModel, n: int, seed: int) -> EmpiricalField:
    """n IID draws of h_1, a deterministic function of (model, n, seed)."""
    from remfield.recentering import EmpiricalField

    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    k = model.kind
    if k is FieldKind.ZERO:
        h = np.zeros(n)
    elif k is FieldKind.POINT_MASS:
        h = np.full(n, model.h)
    elif k is FieldKind.RADEMACHER:
        h = np.where(rng.random(n) < model.p, model.a, -model.a)
    elif k is FieldKind.GAUSSIAN:
        h = rng.normal(model.mean, model.stddev, n)
    elif k is FieldKind.UNIFORM:
        h = rng.uniform(model.lo, model.hi, n)
    else:
        h = rng.choice(np.array(model.values), size=n, p=np.array(model.probs))
    return EmpiricalField(h)

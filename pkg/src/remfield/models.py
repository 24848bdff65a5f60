"""Data models for remfield."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from remfield.field import FieldModel


@dataclass(frozen=True)
class CumulantEvaluation:
    """psi(t) = E[log cosh t h] and its first two derivatives at t."""

    t: float
    psi: float
    psi_prime: float
    psi_double_prime: float


@dataclass(frozen=True)
class RatePoint:
    """A point of the rate function together with its Legendre conjugate."""

    y: float
    t: float
    I: float  # noqa: E741


@dataclass(frozen=True)
class EntropyPoint:
    """Entropy at energy density E and its energy partition.

    t_star is the REM energy density and y_star the field energy density,
    with E = t_star + y_star.
    """

    E: float
    S: float
    y_star: float
    t_star: float


@dataclass(frozen=True)
class GibbsPoint:
    """Maximiser of beta*E + S(E) over the band."""

    beta: float
    value: float
    e_star: float
    t_star: float
    y_star: float
    frozen: bool


@dataclass
class ThermoSolution:
    """Asymptotic constants of the model."""

    beta_c: float
    e_max: float
    e_min: float
    q: float
    c_intensity: float
    y_star: float  # y*(E_max)
    t_star: float  # t*(E_max), equals beta_c
    model: FieldModel | None = field(default=None, repr=False, compare=False)

    @property
    def gumbel_scale(self) -> float:
        """C / beta_c, the mean number of extremal points above level 0."""
        return self.c_intensity / self.beta_c

    def to_dict(self) -> dict:
        """Flat JSON record."""
        data = {
            "beta_c": self.beta_c,
            "e_max": self.e_max,
            "e_min": self.e_min,
            "q": self.q,
            "c_intensity": self.c_intensity,
            "y_star": self.y_star,
            "t_star": self.t_star,
        }
        if self.model is not None:
            data["model"] = self.model.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> ThermoSolution:
        from remfield.field import FieldModel

        model = FieldModel.from_dict(data["model"]) if "model" in data else None
        return cls(
            beta_c=float(data["beta_c"]),
            e_max=float(data["e_max"]),
            e_min=float(data["e_min"]),
            q=float(data["q"]),
            c_intensity=float(data["c_intensity"]),
            y_star=float(data["y_star"]),
            t_star=float(data["t_star"]),
            model=model,
        )


@dataclass(frozen=True)
class RecenteringConstants:
    """Finite-N constants of one disorder realisation."""

    n: int
    t_star: float
    y_star: float
    c1: float
    c2: float
    r: float  # c1*N - c2*log N
    rate_at_y_star: float  # I_N(y*_N)
    psi_pp: float  # psi''_N(t*_N), variance of the tilted CLT
    q_n: float  # (1/N) sum tanh^2(t*_N h_i)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> RecenteringConstants:
        return cls(
            n=int(data["n"]),
            t_star=float(data["t_star"]),
            y_star=float(data["y_star"]),
            c1=float(data["c1"]),
            c2=float(data["c2"]),
            r=float(data["r"]),
            rate_at_y_star=float(data["rate_at_y_star"]),
            psi_pp=float(data["psi_pp"]),
            q_n=float(data["q_n"]),
        )


@dataclass(frozen=True)
class TopEntry:
    """A retained extremal configuration."""

    energy: float
    recentered: float
    pattern: int  # bit i set means sigma_i = +1


@dataclass
class ReplicaRecord:
    """Per-replica enumeration summary."""

    replica: int
    n: int
    seed_field: int
    seed_energy: int
    constants: RecenteringConstants
    max_energy: float
    recentered_max: float
    top: list[TopEntry]
    betas: list[float]
    log_z: list[float]
    top_mass: list[float]  # fraction of Z(beta) held by the top list
    delta: float
    window_count: int
    gibbs_top_weights: list[list[float]]
    overlap_samples: list[list[tuple[float, float]]]
    entropy_grid: list[float]
    entropy_counts: list[int]

    @property
    def max_pattern(self) -> int:
        return self.top[0].pattern

    def beta_index(self, beta: float) -> int:
        """Position of beta in the record's beta list."""
        for i, b in enumerate(self.betas):
            if abs(b - beta) <= 1e-12 * max(1.0, abs(beta)):
                return i
        raise KeyError(beta)

    def to_dict(self) -> dict:
        return {
            "replica": self.replica,
            "n": self.n,
            "seed_field": self.seed_field,
            "seed_energy": self.seed_energy,
            "constants": self.constants.to_dict(),
            "max_energy": self.max_energy,
            "recentered_max": self.recentered_max,
            "top": [[e.energy, e.recentered, e.pattern] for e in self.top],
            "betas": list(self.betas),
            "log_z": list(self.log_z),
            "top_mass": list(self.top_mass),
            "delta": self.delta,
            "window_count": self.window_count,
            "gibbs_top_weights": [list(w) for w in self.gibbs_top_weights],
            "overlap_samples": [[[r, w] for r, w in s] for s in self.overlap_samples],
            "entropy_grid": list(self.entropy_grid),
            "entropy_counts": list(self.entropy_counts),
        }

    @classmethod
    def from_dict(cls, data: dict) -> ReplicaRecord:
        return cls(
            replica=int(data["replica"]),
            n=int(data["n"]),
            seed_field=int(data["seed_field"]),
            seed_energy=int(data["seed_energy"]),
            constants=RecenteringConstants.from_dict(data["constants"]),
            max_energy=float(data["max_energy"]),
            recentered_max=float(data["recentered_max"]),
            top=[TopEntry(float(e), float(r), int(p)) for e, r, p in data["top"]],
            betas=[float(b) for b in data["betas"]],
            log_z=[float(v) for v in data["log_z"]],
            top_mass=[float(v) for v in data["top_mass"]],
            delta=float(data["delta"]),
            window_count=int(data["window_count"]),
            gibbs_top_weights=[[float(w) for w in ws] for ws in data["gibbs_top_weights"]],
            overlap_samples=[
                [(float(r), float(w)) for r, w in s] for s in data["overlap_samples"]
            ],
            entropy_grid=[float(e) for e in data["entropy_grid"]],
            entropy_counts=[int(c) for c in data["entropy_counts"]],
        )


@dataclass
class ReferenceProcess:
    """One realisation of the Poisson process with intensity C exp(-beta_c z) dz."""

    points: list[float]  # sorted descending
    floor: float

    @property
    def maximum(self) -> float:
        """Largest point, or -inf for an empty realisation."""
        return self.points[0] if self.points else float("-inf")

    def count_in(self, a: float, b: float) -> int:
        return sum(1 for z in self.points if a <= z <= b)


@dataclass
class GumbelReport:
    """KS comparison of recentered maxima with the Gumbel law."""

    ks_distance: float
    n_replicas: int
    location_check: float
    critical_5: float
    critical_1: float
    p_value: float

    @property
    def passed(self) -> bool:
        return self.ks_distance < self.critical_1


@dataclass
class PoissonReport:
    """Counts of recentered energies in a window."""

    window: tuple[float, float]
    mean_count: float
    var_count: float
    dispersion: float
    predicted_mean: float
    standard_error: float
    n_replicas: int

    @property
    def mean_z(self) -> float:
        """Deviation of the mean from the prediction in standard errors."""
        if self.standard_error == 0:
            return 0.0 if self.mean_count == self.predicted_mean else float("inf")
        return (self.mean_count - self.predicted_mean) / self.standard_error


@dataclass
class PDReport:
    """Poisson-Dirichlet moments of the Gibbs weights at one beta."""

    beta: float
    mean_sum_sq: float
    predicted: float
    mean_sum_cube: float
    predicted_cube: float
    sum_sq_stderr: float
    n_replicas: int


@dataclass
class OverlapReport:
    """Weighted overlap mass near the two atoms at one beta."""

    beta: float
    q: float
    tol: float
    mass_near_q: float
    mass_near_1: float
    predicted_q: float
    predicted_1: float

    @property
    def mass_on_atoms(self) -> float:
        return self.mass_near_q + self.mass_near_1


@dataclass
class TruncationReport:
    """Top-list partition function against a deeper recomputation of the same replicas."""

    top_k: int
    reference_top_k: int
    betas: list[float]
    min_fraction: float  # smallest Z_top_k / Z_reference_top_k
    n_replicas: int

    @property
    def deficit(self) -> float:
        return 1.0 - self.min_fraction


@dataclass
class ExtremalReport:
    """All limit-law tests of one run."""

    gumbel: GumbelReport
    poisson: PoissonReport
    pd: list[PDReport] = field(default_factory=list)
    overlap: list[OverlapReport] = field(default_factory=list)
    control: GumbelReport | None = None
    truncation: TruncationReport | None = None

    def to_dict(self) -> dict:
        data = {
            "gumbel": asdict(self.gumbel),
            "poisson": asdict(self.poisson),
            "pd": [asdict(p) for p in self.pd],
            "overlap": [asdict(o) for o in self.overlap],
        }
        if self.control is not None:
            data["control"] = asdict(self.control)
        if self.truncation is not None:
            data["truncation"] = asdict(self.truncation)
        return data


@dataclass
class Criterion:
    """One PASS/FAIL line of an analysis."""

    name: str
    passed: bool
    detail: str


@dataclass
class AnalysisResult:
    """Everything cmd_analyze produces."""

    report: ExtremalReport
    criteria: list[Criterion]
    entropy_rows: list[dict] = field(default_factory=list)
    free_energy_rows: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "criteria": [asdict(c) for c in self.criteria],
            "extremal": self.report.to_dict(),
            "entropy": self.entropy_rows,
            "free_energy": self.free_energy_rows,
        }

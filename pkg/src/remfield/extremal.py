"""Limit-law tests over many replica records.

Each test has an array-level core that works on plain sequences (so the
reference sampler can feed it directly) and a wrapper that pulls the same
quantities out of ReplicaRecords.
"""

from __future__ import annotations

import logging
import math
import warnings
from typing import Sequence

import numpy as np
from scipy import stats

from remfield.errors import BetaBelowCritical, DomainError, InsufficientReplicas, TruncationWarning
from remfield.models import (
    ExtremalReport,
    GumbelReport,
    OverlapReport,
    PDReport,
    PoissonReport,
    ReferenceProcess,
    ReplicaRecord,
    ThermoSolution,
    TruncationReport,
)
from remfield.recentering import deterministic_recentering

log = logging.getLogger(__name__)

MIN_REPLICAS = 100
KS_COEFF_5 = 1.36
KS_COEFF_1 = 1.63
DEFAULT_OVERLAP_TOL = 0.1
REFERENCE_POINTS = 20_000
PD_REFERENCE_DRAWS = 2000
PD_REFERENCE_POINTS = 2000
STICK_LENGTH = 20_000
TRUNCATION_BETA_FACTOR = 1.5


def gumbel_cdf(x, thermo: ThermoSolution):
    """P(max <= x) for a Poisson process with intensity C exp(-beta_c z)."""
    return np.exp(-thermo.gumbel_scale * np.exp(-thermo.beta_c * np.asarray(x, dtype=float)))


def _need(have: int, need: int) -> None:
    if have < need:
        raise InsufficientReplicas(have, need)


def _require_frozen(beta: float, thermo: ThermoSolution) -> float:
    if not beta > thermo.beta_c:
        raise BetaBelowCritical(beta, thermo.beta_c)
    return thermo.beta_c / beta


# -- Gumbel --------------------------------------------------------------------


def gumbel_statistic(maxima: Sequence[float], thermo: ThermoSolution) -> GumbelReport:
    """KS distance of recentered maxima from the Gumbel law of the limit process."""
    values = np.asarray(maxima, dtype=float)
    _need(values.size, MIN_REPLICAS)
    result = stats.kstest(values, lambda x: gumbel_cdf(x, thermo))
    # the law is Gumbel with scale 1/beta_c and mode log(C/beta_c)/beta_c
    mode = math.log(thermo.gumbel_scale) / thermo.beta_c
    location = float(values.mean()) - np.euler_gamma / thermo.beta_c - mode
    root = math.sqrt(values.size)
    return GumbelReport(
        ks_distance=float(result.statistic),
        n_replicas=int(values.size),
        location_check=float(location),
        critical_5=KS_COEFF_5 / root,
        critical_1=KS_COEFF_1 / root,
        p_value=float(result.pvalue),
    )


def gumbel_test(records: Sequence[ReplicaRecord], thermo: ThermoSolution) -> GumbelReport:
    """Gumbel test on the randomly recentered maxima max H - r(N, h)."""
    return gumbel_statistic([r.recentered_max for r in records], thermo)


def deterministic_control(records: Sequence[ReplicaRecord], thermo: ThermoSolution) -> tuple[GumbelReport, float]:
    """Gumbel test with the field-blind shift E_max N - log N/(2 beta_c).

    Returns the report and the standard deviation of max H minus that shift.
    With a random field this stream is expected to fail the test.
    """
    shifted = np.array([r.max_energy - deterministic_recentering(thermo, r.n) for r in records])
    report = gumbel_statistic(shifted, thermo)
    return report, float(shifted.std(ddof=1))


# -- Poisson window ------------------------------------------------------------


def predicted_window_mean(thermo: ThermoSolution, window: tuple[float, float]) -> float:
    a, b = window
    return thermo.gumbel_scale * (math.exp(-thermo.beta_c * a) - math.exp(-thermo.beta_c * b))


def poisson_statistic(counts: Sequence[int], thermo: ThermoSolution, window: tuple[float, float]) -> PoissonReport:
    """Mean, variance and dispersion of extremal counts in a window."""
    a, b = window
    if not a < b:
        raise DomainError(f"window needs a < b, got [{a}, {b}]")
    values = np.asarray(counts, dtype=float)
    _need(values.size, MIN_REPLICAS)
    mean = float(values.mean())
    var = float(values.var(ddof=1))
    predicted = predicted_window_mean(thermo, window)
    spread = var if var > 0.0 else predicted
    return PoissonReport(
        window=(float(a), float(b)),
        mean_count=mean,
        var_count=var,
        dispersion=var / mean if mean > 0.0 else float("nan"),
        predicted_mean=predicted,
        standard_error=math.sqrt(spread / values.size),
        n_replicas=int(values.size),
    )


def window_counts(records: Sequence[ReplicaRecord], window: tuple[float, float]) -> list[int]:
    """Per-record number of recentered energies in the window.

    The stored window count is used when the window is the record's own
    [-delta, delta]; otherwise energies are counted from the top list.
    """
    a, b = window
    counts = []
    truncated = False
    for rec in records:
        if math.isclose(a, -rec.delta) and math.isclose(b, rec.delta):
            counts.append(rec.window_count)
            continue
        if len(rec.top) < (1 << rec.n) and rec.top[-1].recentered >= a:
            truncated = True
        counts.append(sum(1 for e in rec.top if a <= e.recentered <= b))
    if truncated:
        warnings.warn(
            f"window [{a:g}, {b:g}] reaches below the retained top list; counts are lower bounds",
            TruncationWarning,
            stacklevel=2,
        )
    return counts


def poisson_window_test(
    records: Sequence[ReplicaRecord],
    thermo: ThermoSolution,
    window: tuple[float, float] | None = None,
) -> PoissonReport:
    """Poisson test of extremal counts, by default in [-delta, delta]."""
    _need(len(records), MIN_REPLICAS)
    if window is None:
        window = (-records[0].delta, records[0].delta)
    return poisson_statistic(window_counts(records, window), thermo, window)


# -- Poisson-Dirichlet -----------------------------------------------------------


def reference_floor(thermo: ThermoSolution, points: int) -> float:
    """Level above which the limit process has `points` points on average."""
    return (math.log(thermo.gumbel_scale) - math.log(points)) / thermo.beta_c


def sample_reference_process(
    thermo: ThermoSolution,
    seed,
    floor: float | None = None,
    points: int = REFERENCE_POINTS,
) -> ReferenceProcess:
    """One realisation of the Poisson process with intensity C exp(-beta_c z) above floor."""
    if floor is None:
        floor = reference_floor(thermo, points)
    if not math.isfinite(floor):
        raise DomainError(f"floor must be finite, got {floor!r}")
    rng = np.random.default_rng(seed)
    mean = thermo.gumbel_scale * math.exp(-thermo.beta_c * floor)
    count = rng.poisson(mean)
    z = floor + rng.exponential(1.0 / thermo.beta_c, size=count)
    return ReferenceProcess(points=np.sort(z)[::-1].tolist(), floor=float(floor))


def sample_pd_weights(alpha: float, seed, method: str = "poisson", size: int | None = None) -> np.ndarray:
    """Weights of a PD(alpha, 0) draw, sorted descending.

    "poisson" normalises exp(eta_i / alpha) over a unit exponential Poisson
    process truncated to `size` expected points. "stick" is GEM
    stick-breaking with V_j ~ Beta(1 - alpha, j alpha), truncated after
    `size` sticks and not renormalised.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    rng = np.random.default_rng(seed)
    if method == "poisson":
        size = size or PD_REFERENCE_POINTS
        eta = -math.log(size) + rng.exponential(1.0, size=rng.poisson(size))
        if eta.size == 0:
            return np.ones(1)
        scaled = (eta - eta.max()) / alpha
        w = np.exp(scaled)
        w /= w.sum()
    elif method == "stick":
        size = size or STICK_LENGTH
        v = rng.beta(1.0 - alpha, alpha * np.arange(1, size + 1))
        w = v * np.concatenate([[1.0], np.cumprod(1.0 - v[:-1])])
    else:
        raise DomainError(f"unknown PD sampling method {method!r}")
    return np.sort(w)[::-1]


def pd_reference_cube(alpha: float, seed=0, draws: int = PD_REFERENCE_DRAWS) -> float:
    """Monte Carlo E[sum xi^3] under PD(alpha, 0)."""
    seeds = np.random.SeedSequence(seed).spawn(draws)
    return float(np.mean([np.sum(sample_pd_weights(alpha, s) ** 3) for s in seeds]))


def pd_statistic(
    weights: Sequence[Sequence[float]],
    thermo: ThermoSolution,
    beta: float,
    reference_seed=0,
) -> PDReport:
    """Second and third moments of the Gibbs weights against PD(beta_c/beta)."""
    alpha = _require_frozen(beta, thermo)
    _need(len(weights), 2)
    sq = np.array([np.sum(np.square(w)) for w in weights])
    cube = np.array([np.sum(np.power(w, 3)) for w in weights])
    return PDReport(
        beta=beta,
        mean_sum_sq=float(sq.mean()),
        predicted=1.0 - alpha,
        mean_sum_cube=float(cube.mean()),
        predicted_cube=pd_reference_cube(alpha, reference_seed),
        sum_sq_stderr=float(sq.std(ddof=1) / math.sqrt(sq.size)),
        n_replicas=int(sq.size),
    )


def pd_moment_test(records: Sequence[ReplicaRecord], thermo: ThermoSolution, beta: float) -> PDReport:
    """PD moment test on the truncated Gibbs weights of each record."""
    _require_frozen(beta, thermo)
    return pd_statistic([r.gibbs_top_weights[r.beta_index(beta)] for r in records], thermo, beta)


# -- overlaps ----------------------------------------------------------------------


def overlap_statistic(
    histograms: Sequence[Sequence[tuple[float, float]]],
    thermo: ThermoSolution,
    beta: float,
    tol: float = DEFAULT_OVERLAP_TOL,
) -> OverlapReport:
    """Average weighted overlap mass within tol of q and of 1."""
    alpha = _require_frozen(beta, thermo)
    _need(len(histograms), 1)
    near_q, near_1 = [], []
    for hist in histograms:
        near_q.append(sum(w for r, w in hist if abs(r - thermo.q) <= tol))
        near_1.append(sum(w for r, w in hist if abs(r - 1.0) <= tol))
    return OverlapReport(
        beta=beta,
        q=thermo.q,
        tol=tol,
        mass_near_q=float(np.mean(near_q)),
        mass_near_1=float(np.mean(near_1)),
        predicted_q=alpha,
        predicted_1=1.0 - alpha,
    )


def overlap_atoms_test(
    records: Sequence[ReplicaRecord],
    thermo: ThermoSolution,
    beta: float,
    tol: float = DEFAULT_OVERLAP_TOL,
) -> OverlapReport:
    """Two-atom overlap test on the records' weighted overlap histograms."""
    _require_frozen(beta, thermo)
    return overlap_statistic([r.overlap_samples[r.beta_index(beta)] for r in records], thermo, beta, tol)


# -- checks and summaries ----------------------------------------------------------


def truncation_mass_check(
    records: Sequence[ReplicaRecord],
    references: Sequence[ReplicaRecord],
    thermo: ThermoSolution,
    factor: float = TRUNCATION_BETA_FACTOR,
) -> TruncationReport:
    """Compare each record's top-list Z with a deeper rerun of the same replica.

    Both runs share the full log Z, so Z_K / Z_ref = top_mass / reference
    top_mass at each beta >= factor * beta_c.
    """
    if len(records) != len(references):
        raise DomainError(f"{len(records)} records but {len(references)} reference runs")
    _need(len(records), 1)
    threshold = factor * thermo.beta_c * (1.0 - 1e-12)
    betas = [b for b in records[0].betas if b >= threshold]
    if not betas:
        raise BetaBelowCritical(max(records[0].betas), factor * thermo.beta_c)
    fractions = []
    for rec, ref in zip(records, references):
        if (rec.replica, rec.n) != (ref.replica, ref.n):
            raise DomainError(f"replica {rec.replica} (n={rec.n}) compared with replica {ref.replica} (n={ref.n})")
        for beta in betas:
            i, j = rec.beta_index(beta), ref.beta_index(beta)
            fractions.append(rec.top_mass[i] / ref.top_mass[j])
    return TruncationReport(
        top_k=len(records[0].top),
        reference_top_k=len(references[0].top),
        betas=betas,
        min_fraction=float(min(fractions)),
        n_replicas=len(records),
    )


def analyze(
    records: Sequence[ReplicaRecord],
    thermo: ThermoSolution,
    window: tuple[float, float] | None = None,
    pd_betas: Sequence[float] = (),
    overlap_tol: float = DEFAULT_OVERLAP_TOL,
    control: bool = False,
) -> ExtremalReport:
    """Run every limit-law test that the records support."""
    report = ExtremalReport(
        gumbel=gumbel_test(records, thermo),
        poisson=poisson_window_test(records, thermo, window),
    )
    for beta in pd_betas:
        report.pd.append(pd_moment_test(records, thermo, beta))
        report.overlap.append(overlap_atoms_test(records, thermo, beta, overlap_tol))
    if control:
        report.control, spread = deterministic_control(records, thermo)
        log.info("deterministic recentering: spread of max - r_N is %.4f", spread)
    return report


def self_consistency(
    thermo: ThermoSolution,
    meta_trials: int = 20,
    replicas: int = 400,
    seed=0,
    window: tuple[float, float] = (-2.0, 2.0),
    beta_factor: float = 2.0,
    points: int = PD_REFERENCE_POINTS,
) -> dict[str, int]:
    """Feed every test with reference-sampler data; count passing meta-trials."""
    beta = beta_factor * thermo.beta_c
    alpha = 1.0 / beta_factor
    floor = reference_floor(thermo, points)
    passes = {"gumbel": 0, "poisson": 0, "pd": 0, "overlap": 0}
    for trial in range(meta_trials):
        seeds = np.random.SeedSequence([seed, trial]).spawn(replicas)
        maxima, counts, weights, hists = [], [], [], []
        for s in seeds:
            process = sample_reference_process(thermo, s, floor=floor)
            eta = np.asarray(process.points)
            maxima.append(process.maximum)
            counts.append(process.count_in(*window))
            w = np.exp(beta * (eta - eta[0])) if eta.size else np.ones(1)
            w /= w.sum()
            weights.append(w)
            # distinct points are distinct states: overlap 1 on the diagonal, q off it
            s2 = float(np.sum(w * w))
            hists.append([(thermo.q, 1.0 - s2), (1.0, s2)])

        g = gumbel_statistic(maxima, thermo)
        passes["gumbel"] += g.ks_distance < g.critical_5
        p = poisson_statistic(counts, thermo, window)
        passes["poisson"] += 0.8 <= p.dispersion <= 1.2 and abs(p.mean_z) <= 3.0
        d = pd_statistic(weights, thermo, beta, reference_seed=[seed, trial])
        passes["pd"] += abs(d.mean_sum_sq - d.predicted) <= 3.0 * d.sum_sq_stderr
        o = overlap_statistic(hists, thermo, beta)
        passes["overlap"] += abs(o.mass_near_q - alpha) <= 0.07 and abs(o.mass_near_1 - (1.0 - alpha)) <= 0.07
    log.info("self-consistency over %d meta-trials: %s", meta_trials, passes)
    return passes

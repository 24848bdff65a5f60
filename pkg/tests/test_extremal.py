"""Tests for the extremal limit-law statistics."""

import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from remfield.enumeration import ReplicaSpec, run_replica
from remfield.errors import BetaBelowCritical, DomainError, InsufficientReplicas, TruncationWarning
from remfield.extremal import (
    analyze,
    deterministic_control,
    gumbel_cdf,
    gumbel_statistic,
    gumbel_test,
    overlap_atoms_test,
    overlap_statistic,
    pd_moment_test,
    pd_reference_cube,
    pd_statistic,
    poisson_statistic,
    poisson_window_test,
    predicted_window_mean,
    reference_floor,
    sample_pd_weights,
    sample_reference_process,
    self_consistency,
    truncation_mass_check,
    window_counts,
)
from remfield.field import FieldModel
from remfield.models import RecenteringConstants, ReplicaRecord, TopEntry
from remfield.thermo import solve

THERMO = solve(FieldModel.rademacher(0.5, 1.0))


def gumbel_draws(thermo, size, seed):
    """Exact draws of the maximum of the limit process."""
    u = np.random.default_rng(seed).random(size)
    return (math.log(thermo.gumbel_scale) - np.log(-np.log(u))) / thermo.beta_c


def fake_record(recentered, betas=(), top_mass=(), weights=(), overlaps=(), delta=2.0, n=20, replica=0):
    """A record whose top list holds the given recentered energies, with r = 0."""
    recentered = sorted(recentered, reverse=True) or [float("-inf")]
    constants = RecenteringConstants(
        n=n, t_star=1.0, y_star=0.0, c1=1.0, c2=0.5, r=0.0, rate_at_y_star=0.0, psi_pp=0.0, q_n=0.0
    )
    return ReplicaRecord(
        replica=replica,
        n=n,
        seed_field=0,
        seed_energy=0,
        constants=constants,
        max_energy=recentered[0],
        recentered_max=recentered[0],
        top=[TopEntry(z, z, i) for i, z in enumerate(recentered)],
        betas=list(betas),
        log_z=[0.0] * len(betas),
        top_mass=list(top_mass) or [1.0] * len(betas),
        delta=delta,
        window_count=sum(1 for z in recentered if -delta <= z <= delta),
        gibbs_top_weights=[list(w) for w in weights],
        overlap_samples=[list(o) for o in overlaps],
        entropy_grid=[],
        entropy_counts=[],
    )


def reference_records(thermo, replicas, beta, seed=0, points=500):
    """Records filled from the limit process itself."""
    records = []
    for i, s in enumerate(np.random.SeedSequence(seed).spawn(replicas)):
        eta = np.asarray(sample_reference_process(thermo, s, points=points).points)
        w = np.exp(beta * (eta - eta[0]))
        w /= w.sum()
        s2 = float(np.sum(w * w))
        records.append(
            fake_record(
                eta.tolist(),
                betas=[beta],
                weights=[w.tolist()],
                overlaps=[[(thermo.q, 1.0 - s2), (1.0, s2)]],
                replica=i,
            )
        )
    return records


class TestGumbel:
    """Tests for the Gumbel KS statistic."""

    def test_cdf_limits(self):
        """The CDF rises from 0 to 1."""
        values = gumbel_cdf([-20.0, 0.0, 40.0], THERMO)
        assert values[0] < 1e-6
        assert 0.0 < values[1] < 1.0
        assert values[2] == pytest.approx(1.0)
        assert values[1] == pytest.approx(math.exp(-THERMO.gumbel_scale))

    def test_exact_draws_pass(self):
        """Exact Gumbel draws stay below the 1% critical value."""
        report = gumbel_statistic(gumbel_draws(THERMO, 400, 1), THERMO)
        assert report.passed
        assert report.n_replicas == 400
        assert report.critical_1 == pytest.approx(1.63 / 20)
        sd = math.pi / (THERMO.beta_c * math.sqrt(6 * 400))
        assert abs(report.location_check) < 4 * sd

    def test_shifted_draws_fail(self):
        """A unit shift is detected."""
        report = gumbel_statistic(gumbel_draws(THERMO, 400, 2) + 1.0, THERMO)
        assert not report.passed
        assert report.location_check == pytest.approx(1.0, abs=0.3)

    def test_too_few_replicas(self):
        """Fewer than 100 maxima raise InsufficientReplicas."""
        with pytest.raises(InsufficientReplicas):
            gumbel_statistic(gumbel_draws(THERMO, 99, 3), THERMO)

    def test_reference_maxima(self):
        """Maxima of sampled reference processes follow the Gumbel law."""
        seeds = np.random.SeedSequence(4).spawn(400)
        maxima = [sample_reference_process(THERMO, s, points=200).maximum for s in seeds]
        assert gumbel_statistic(maxima, THERMO).passed

    def test_record_wrappers(self):
        """gumbel_test reads recentered maxima; the control reads raw maxima."""
        records = [fake_record([z]) for z in gumbel_draws(THERMO, 150, 5)]
        assert gumbel_test(records, THERMO).n_replicas == 150
        control, spread = deterministic_control(records, THERMO)
        assert control.n_replicas == 150
        assert spread > 0.0


class TestPoisson:
    """Tests for window counts and their dispersion."""

    def test_predicted_mean(self):
        """Mean count is (C/beta_c)(e^{-beta_c a} - e^{-beta_c b})."""
        b = THERMO.beta_c
        expected = THERMO.c_intensity / b * (math.exp(2 * b) - math.exp(-2 * b))
        assert predicted_window_mean(THERMO, (-2.0, 2.0)) == pytest.approx(expected)

    def test_poisson_counts(self):
        """Poisson counts give dispersion near 1 and a small mean deviation."""
        window = (-2.0, 2.0)
        lam = predicted_window_mean(THERMO, window)
        counts = np.random.default_rng(6).poisson(lam, size=1000)
        report = poisson_statistic(counts, THERMO, window)
        assert 0.8 <= report.dispersion <= 1.2
        assert abs(report.mean_z) < 4.0

    def test_all_zero_counts(self):
        """A zero mean gives an undefined dispersion."""
        report = poisson_statistic([0] * 100, THERMO, (5.0, 6.0))
        assert math.isnan(report.dispersion)

    def test_bad_window(self):
        """a >= b raises DomainError."""
        with pytest.raises(DomainError):
            poisson_statistic([1] * 100, THERMO, (1.0, 1.0))

    def test_stored_count_used_for_own_window(self):
        """The record's own [-delta, delta] count is used as is."""
        record = fake_record([3.0, 1.5, 0.2, -1.0, -2.5])
        record.window_count = 7
        assert window_counts([record], (-2.0, 2.0)) == [7]

    def test_top_list_counts(self):
        """Other windows are counted from the top list."""
        record = fake_record([3.0, 1.5, 0.2, -1.0, -2.5])
        with warnings.catch_warnings():
            warnings.simplefilter("error", TruncationWarning)
            assert window_counts([record], (0.0, 2.0)) == [2]

    def test_truncation_warning(self):
        """A window below the last retained energy warns."""
        record = fake_record([3.0, 1.5, 0.2])
        with pytest.warns(TruncationWarning):
            window_counts([record], (0.0, 4.0))

    def test_window_defaults_to_delta(self):
        """poisson_window_test uses [-delta, delta] by default."""
        records = reference_records(THERMO, 120, 2 * THERMO.beta_c, seed=7)
        report = poisson_window_test(records, THERMO)
        assert report.window == (-2.0, 2.0)
        assert report.n_replicas == 120


class TestReferenceProcess:
    """Tests for the limit-process sampler."""

    def test_points_above_floor(self):
        """Points are sorted descending above the floor."""
        process = sample_reference_process(THERMO, 8, floor=-3.0)
        assert process.points == sorted(process.points, reverse=True)
        assert all(z >= -3.0 for z in process.points)
        assert process.floor == -3.0

    def test_default_floor(self):
        """The default floor holds the requested mean number of points."""
        floor = reference_floor(THERMO, 1000)
        assert THERMO.gumbel_scale * math.exp(-THERMO.beta_c * floor) == pytest.approx(1000)

    def test_window_mean(self):
        """Counts in a window average to the predicted mean."""
        window = (-1.0, 1.0)
        lam = predicted_window_mean(THERMO, window)
        seeds = np.random.SeedSequence(9).spawn(2000)
        counts = [sample_reference_process(THERMO, s, floor=-2.0).count_in(*window) for s in seeds]
        assert abs(np.mean(counts) - lam) < 5 * math.sqrt(lam / 2000)

    def test_count_above_zero(self):
        """Over 10^4 realisations the mean count above 0 is C / beta_c within 3 standard errors."""
        lam = THERMO.gumbel_scale
        seeds = np.random.SeedSequence(11).spawn(10_000)
        counts = [sample_reference_process(THERMO, s, floor=-1.0).count_in(0.0, math.inf) for s in seeds]
        assert abs(np.mean(counts) - lam) <= 3 * math.sqrt(lam / 10_000)

    def test_top_spacing_is_exponential(self):
        """The gap between the two largest points is Exp(beta_c)."""
        floor = reference_floor(THERMO, 200)
        gaps = []
        for s in np.random.SeedSequence(12).spawn(2000):
            points = sample_reference_process(THERMO, s, floor=floor).points
            if len(points) >= 2:
                gaps.append(points[0] - points[1])
        assert len(gaps) >= 1990
        result = stats.kstest(gaps, "expon", args=(0.0, 1.0 / THERMO.beta_c))
        assert result.pvalue > 0.001

    def test_empty_realisation(self):
        """A floor far above the points can give an empty realisation."""
        process = sample_reference_process(THERMO, 10, floor=50.0)
        assert process.points == []
        assert process.maximum == float("-inf")

    def test_non_finite_floor(self):
        """A non-finite floor raises DomainError."""
        with pytest.raises(DomainError):
            sample_reference_process(THERMO, 1, floor=float("-inf"))


class TestPoissonDirichlet:
    """Tests for PD(alpha, 0) sampling and moments."""

    @pytest.mark.parametrize("method", ["poisson", "stick"])
    def test_weights(self, method):
        """Weights are non-negative, sorted and sum to at most 1."""
        w = sample_pd_weights(0.5, 11, method=method)
        assert np.all(w >= 0.0)
        assert np.all(np.diff(w) <= 0.0)
        assert w.sum() == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize("method", ["poisson", "stick"])
    def test_second_moment(self, method):
        """E[sum xi^2] = 1 - alpha."""
        alpha = 0.5
        seeds = np.random.SeedSequence(12).spawn(1000)
        s2 = np.array([np.sum(sample_pd_weights(alpha, s, method=method, size=2000) ** 2) for s in seeds])
        assert abs(s2.mean() - (1 - alpha)) < 5 * s2.std() / math.sqrt(s2.size)

    def test_third_moment(self):
        """E[sum xi^3] = (2 - alpha)(1 - alpha)/2."""
        alpha = 0.5
        assert pd_reference_cube(alpha, seed=13, draws=1000) == pytest.approx((2 - alpha) * (1 - alpha) / 2, abs=0.03)

    @pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
    def test_alpha_range(self, alpha):
        """alpha outside (0, 1) raises DomainError."""
        with pytest.raises(DomainError):
            sample_pd_weights(alpha, 1)

    def test_unknown_method(self):
        """Unknown sampling methods raise DomainError."""
        with pytest.raises(DomainError):
            sample_pd_weights(0.5, 1, method="chinese-restaurant")

    def test_statistic_on_pd_draws(self):
        """PD draws match their own predicted moments."""
        beta = 2 * THERMO.beta_c
        seeds = np.random.SeedSequence(14).spawn(300)
        weights = [sample_pd_weights(0.5, s) for s in seeds]
        report = pd_statistic(weights, THERMO, beta, reference_seed=15)
        assert report.predicted == pytest.approx(0.5)
        assert abs(report.mean_sum_sq - report.predicted) < 4 * report.sum_sq_stderr
        assert report.n_replicas == 300

    def test_requires_frozen_phase(self):
        """beta <= beta_c raises BetaBelowCritical."""
        with pytest.raises(BetaBelowCritical):
            pd_statistic([[1.0], [1.0]], THERMO, THERMO.beta_c)

    def test_requires_two_replicas(self):
        """One weight vector has no standard error."""
        with pytest.raises(InsufficientReplicas):
            pd_statistic([[1.0]], THERMO, 2 * THERMO.beta_c)

    def test_record_wrapper(self):
        """pd_moment_test reads the weights stored for beta."""
        beta = 2 * THERMO.beta_c
        records = reference_records(THERMO, 100, beta, seed=16)
        report = pd_moment_test(records, THERMO, beta)
        assert abs(report.mean_sum_sq - 0.5) < 4 * report.sum_sq_stderr


class TestOverlaps:
    """Tests for the two-atom overlap statistic."""

    def test_masses(self):
        """Masses near q and near 1 are averaged over replicas."""
        beta = 2 * THERMO.beta_c
        hists = [[(THERMO.q, 0.4), (1.0, 0.6)], [(THERMO.q + 0.05, 0.6), (0.0, 0.1), (1.0, 0.3)]]
        report = overlap_statistic(hists, THERMO, beta)
        assert report.mass_near_q == pytest.approx(0.5)
        assert report.mass_near_1 == pytest.approx(0.45)
        assert report.predicted_q == pytest.approx(0.5)
        assert report.predicted_1 == pytest.approx(0.5)
        assert report.mass_on_atoms == pytest.approx(0.95)

    def test_tolerance(self):
        """Mass outside tol is not counted."""
        beta = 2 * THERMO.beta_c
        report = overlap_statistic([[(THERMO.q + 0.2, 1.0)]], THERMO, beta, tol=0.1)
        assert report.mass_near_q == 0.0

    def test_requires_frozen_phase(self):
        """beta <= beta_c raises BetaBelowCritical."""
        with pytest.raises(BetaBelowCritical):
            overlap_atoms_test([], THERMO, 0.5 * THERMO.beta_c)


class TestAnalyze:
    """Tests for the combined analysis."""

    def test_reference_records_pass(self):
        """Records drawn from the limit process pass every test."""
        beta = 2 * THERMO.beta_c
        records = reference_records(THERMO, 400, beta, seed=17)
        report = analyze(records, THERMO, pd_betas=[beta], control=True)
        assert report.gumbel.passed
        assert 0.7 <= report.poisson.dispersion <= 1.3
        assert abs(report.pd[0].mean_sum_sq - report.pd[0].predicted) < 4 * report.pd[0].sum_sq_stderr
        assert report.overlap[0].mass_on_atoms == pytest.approx(1.0)
        assert report.control is not None
        data = report.to_dict()
        assert set(data) == {"gumbel", "poisson", "pd", "overlap", "control"}

    def truncation_pair(self, replica, top_k=64, betas=(0.5, 1.5 * THERMO.beta_c, 2 * THERMO.beta_c)):
        spec = ReplicaSpec(
            model=FieldModel.rademacher(0.5, 1.0),
            n=12,
            seed_field=300 + replica,
            seed_energy=400 + replica,
            betas=betas,
            top_k=top_k,
            replica=replica,
        )
        return run_replica(spec), run_replica(replace(spec, top_k=4096))

    def test_truncation_mass(self):
        """A short top list is compared with a full rerun of the same replica."""
        records, references = zip(*(self.truncation_pair(r) for r in range(3)))
        report = truncation_mass_check(records, references, THERMO)
        # 4096 states at n = 12: the reference list holds all of Z
        assert all(m == pytest.approx(1.0, abs=1e-12) for ref in references for m in ref.top_mass)
        expected = min(m for rec in records for m in rec.top_mass[1:])
        assert report.min_fraction == pytest.approx(expected, rel=1e-12)
        assert report.betas == list(records[0].betas[1:])
        assert (report.top_k, report.reference_top_k, report.n_replicas) == (64, 4096, 3)
        assert 0.0 < report.deficit < 1.0

    def test_truncation_mass_full_list(self):
        """Keeping every state leaves no deficit."""
        record, reference = self.truncation_pair(0, top_k=4096)
        report = truncation_mass_check([record], [reference], THERMO)
        assert report.deficit == pytest.approx(0.0, abs=1e-12)

    def test_truncation_mass_needs_deep_beta(self):
        """Without a beta >= 1.5 beta_c the check cannot run."""
        record, reference = self.truncation_pair(0, betas=(0.5, THERMO.beta_c))
        with pytest.raises(BetaBelowCritical):
            truncation_mass_check([record], [reference], THERMO)

    def test_truncation_mass_mismatched_replicas(self):
        """References must be reruns of the same replicas."""
        record, _ = self.truncation_pair(0)
        _, other = self.truncation_pair(1)
        with pytest.raises(DomainError):
            truncation_mass_check([record], [other], THERMO)
        with pytest.raises(DomainError):
            truncation_mass_check([record], [], THERMO)

    @pytest.mark.slow
    def test_self_consistency(self):
        """Reference-sampler data passes each test in most meta-trials."""
        passes = self_consistency(THERMO, meta_trials=5, replicas=400, seed=18)
        assert set(passes) == {"gumbel", "poisson", "pd", "overlap"}
        assert all(count >= 4 for count in passes.values())

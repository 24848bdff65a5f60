"""Experiment orchestration behind the CLI subcommands.

Output layout under the experiment's output_dir:

    experiment.json   resolved configuration
    thermo.json       ThermoSolution
    records.jsonl     one ReplicaRecord per line, in replica order
    report.json       analysis report with PASS/FAIL criteria
    tables/*.csv      plot-ready tables
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from remfield import extremal
from remfield.config import (
    EXPERIMENT_FILE,
    RECORDS_FILE,
    REPORT_FILE,
    TABLES_DIR,
    THERMO_FILE,
    ExperimentConfig,
    save_config,
    split_seed,
)
from remfield.enumeration import MAX_TOP_K, ReplicaSpec, empirical_entropy, empirical_free_energy, run_replica
from remfield.errors import EmptyBin, InsufficientReplicas
from remfield.field import sample_field
from remfield.models import (
    AnalysisResult,
    Criterion,
    RecenteringConstants,
    ReplicaRecord,
    ThermoSolution,
    TruncationReport,
)
from remfield.recentering import c1_from_rate, recentering_constants
from remfield.store import RecordStore
from remfield.thermo import entropy_S, fractional_curve, free_energy, free_energy_curve, solve

log = logging.getLogger(__name__)

# acceptance thresholds of the analysis
ENTROPY_TOL = 0.05
FREE_ENERGY_TOL = 0.1
PD_TOL = 0.05
OVERLAP_MASS_MIN = 0.9
OVERLAP_ATOM_TOL = 0.07
DISPERSION_RANGE = (0.8, 1.2)
MEAN_Z_MAX = 3.0
CONTROL_FACTOR = 3.0
# top-list Z against a MAX_TOP_K rerun of the first replicas, only for n <= TRUNCATION_MAX_N
TRUNCATION_TOL = 2e-3
TRUNCATION_MAX_N = 20
TRUNCATION_REPLICAS = 5

ProgressCallback = Callable[[int, int], None]


def write_csv(path: Path, rows: Sequence[dict]) -> None:
    """Write rows of a table; the header is the first row's keys."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        if not rows:
            return
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


def load_or_solve(experiment: ExperimentConfig) -> ThermoSolution:
    """thermo.json of the output directory when it matches the model, else a fresh solve."""
    path = experiment.output_dir / THERMO_FILE
    if path.exists():
        try:
            stored = ThermoSolution.from_dict(json.loads(path.read_text()))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            stored = None
        if stored is not None and stored.model == experiment.model:
            return stored
    return solve(experiment.model)


# -- thermo / bound --------------------------------------------------------------


def cmd_thermo(experiment: ExperimentConfig) -> ThermoSolution:
    """Solve the model; write thermo.json and the f(beta) and bound curves."""
    thermo = solve(experiment.model)
    out = experiment.output_dir
    _write_json(out / THERMO_FILE, thermo.to_dict())
    betas = experiment.beta_grid_values(thermo)
    write_csv(out / TABLES_DIR / "free_energy.csv", free_energy_curve(experiment.model, betas))
    write_csv(out / TABLES_DIR / "fractional_bound.csv", fractional_curve(experiment.model, betas))
    log.info("%s: beta_c=%.10f E_max=%.10f", experiment.model.label, thermo.beta_c, thermo.e_max)
    return thermo


def cmd_bound(experiment: ExperimentConfig) -> list[dict]:
    """Fractional-moment bound against f on the beta grid."""
    thermo = solve(experiment.model)
    rows = fractional_curve(experiment.model, experiment.beta_grid_values(thermo))
    write_csv(experiment.output_dir / TABLES_DIR / "fractional_bound.csv", rows)
    return rows


# -- recenter ----------------------------------------------------------------------


def cmd_recenter(experiment: ExperimentConfig, replica: int = 0) -> tuple[RecenteringConstants, ThermoSolution]:
    """Finite-N constants of replica `replica`'s sampled field at size n."""
    seed_field, _ = split_seed(experiment.master_seed, replica)
    field = sample_field(experiment.model, experiment.n, seed_field)
    constants = recentering_constants(field)
    drift = abs(constants.c1 - c1_from_rate(constants))
    log.debug("c1 representations differ by %.3e", drift)
    return constants, solve(experiment.model)


# -- simulate ------------------------------------------------------------------------


def _run_spec(spec: ReplicaSpec) -> ReplicaRecord:
    return run_replica(spec)


def simulate_into(
    experiment: ExperimentConfig,
    thermo: ThermoSolution,
    out: Path,
    n: int,
    progress: ProgressCallback | None = None,
) -> Path:
    """Run the missing replicas of size n and append them to out/records.jsonl."""
    store = RecordStore(out / RECORDS_FILE)
    done = store.recover()
    todo = [r for r in range(experiment.replicas) if r not in done]
    if done:
        log.info("resuming: %d of %d replicas already in %s", len(done), experiment.replicas, store.path)
    specs = [experiment.replica_spec(r, thermo, n=n) for r in todo]

    finished = len(done)
    if progress:
        progress(finished, experiment.replicas)
    if experiment.workers <= 1 or len(specs) <= 1:
        results = map(_run_spec, specs)
        for record in results:
            store.append(record)
            finished += 1
            if progress:
                progress(finished, experiment.replicas)
    else:
        with ProcessPoolExecutor(max_workers=experiment.workers) as pool:
            # map yields in submission order, so the file stays in replica order
            for record in pool.map(_run_spec, specs):
                store.append(record)
                finished += 1
                if progress:
                    progress(finished, experiment.replicas)
    return store.path


def cmd_simulate(
    experiment: ExperimentConfig,
    n_sweep: Sequence[int] = (),
    progress: ProgressCallback | None = None,
) -> list[Path]:
    """Run all replicas; with an n-sweep each size gets its own subdirectory."""
    out = experiment.output_dir
    out.mkdir(parents=True, exist_ok=True)
    save_config(experiment.to_dict(), out / EXPERIMENT_FILE)
    thermo = solve(experiment.model)
    _write_json(out / THERMO_FILE, thermo.to_dict())

    if not n_sweep:
        return [simulate_into(experiment, thermo, out, experiment.n, progress)]
    paths = []
    for n in n_sweep:
        log.info("n-sweep: n=%d", n)
        paths.append(simulate_into(experiment, thermo, out / f"n{n}", n, progress))
    return paths


# -- analyze -------------------------------------------------------------------------


def _wants_control(experiment: ExperimentConfig, records: Sequence[ReplicaRecord]) -> bool:
    # with a constant |h| both recenterings coincide and the control cannot fail
    if not experiment.model.has_random_modulus:
        log.info("%s has a constant |h|; skipping the deterministic-recentering control", experiment.model.label)
        return False
    return len(records) >= extremal.MIN_REPLICAS


def truncation_report(
    experiment: ExperimentConfig,
    thermo: ThermoSolution,
    records: Sequence[ReplicaRecord],
) -> TruncationReport | None:
    """Rerun the first replicas with a MAX_TOP_K list and compare their top-list Z.

    Only for n <= TRUNCATION_MAX_N and when some beta is at least
    1.5 beta_c; otherwise None.
    """
    n = records[0].n
    if n > TRUNCATION_MAX_N:
        return None
    threshold = extremal.TRUNCATION_BETA_FACTOR * thermo.beta_c * (1.0 - 1e-12)
    if not any(b >= threshold for b in records[0].betas):
        return None
    sample = list(records[:TRUNCATION_REPLICAS])
    references = []
    for rec in sample:
        spec = replace(experiment.replica_spec(rec.replica, thermo, n=rec.n), top_k=MAX_TOP_K)
        references.append(run_replica(spec))
    report = extremal.truncation_mass_check(sample, references, thermo)
    log.info(
        "top %d of %d states hold %.8f of the top-%d partition function",
        report.top_k,
        1 << n,
        report.min_fraction,
        report.reference_top_k,
    )
    return report


def entropy_table(records: Sequence[ReplicaRecord], thermo: ThermoSolution) -> list[dict]:
    """Mean empirical entropy per grid point against S(E)."""
    if not records:
        return []
    model = thermo.model
    rows = []
    for E in records[0].entropy_grid:
        values = []
        for rec in records:
            try:
                values.append(empirical_entropy(rec, rec.n, E))
            except EmptyBin:
                continue
        S = entropy_S(model, E).S
        mean = float(np.mean(values)) if values else float("nan")
        rows.append({"E": E, "empirical": mean, "S": S, "diff": mean - S, "replicas": len(values)})
    return rows


def free_energy_table(records: Sequence[ReplicaRecord], thermo: ThermoSolution) -> list[dict]:
    """Mean (1/n) log Z per beta against f(beta)."""
    if not records:
        return []
    rows = []
    for beta in records[0].betas:
        values = [empirical_free_energy(rec, rec.n, beta) for rec in records]
        f = free_energy(thermo.model, beta)
        mean = float(np.mean(values))
        rows.append({"beta": beta, "empirical": mean, "f": f, "diff": mean - f})
    return rows


def replica_table(records: Sequence[ReplicaRecord], thermo: ThermoSolution) -> list[dict]:
    """One row per replica for external plotting."""
    rows = []
    for rec in records:
        row = {
            "replica": rec.replica,
            "n": rec.n,
            "c1": rec.constants.c1,
            "r": rec.constants.r,
            "max_energy": rec.max_energy,
            "recentered_max": rec.recentered_max,
            "window_count": rec.window_count,
        }
        for beta, weights, mass in zip(rec.betas, rec.gibbs_top_weights, rec.top_mass):
            if beta > thermo.beta_c:
                row[f"sum_sq@{beta:.4g}"] = float(np.sum(np.square(weights)))
                row[f"top_mass@{beta:.4g}"] = mass
        rows.append(row)
    return rows


def _criteria(result_report, entropy_rows, free_rows) -> list[Criterion]:
    criteria = []
    g = result_report.gumbel
    criteria.append(
        Criterion("gumbel", g.ks_distance < g.critical_1, f"KS={g.ks_distance:.4f} (1% critical {g.critical_1:.4f})")
    )
    p = result_report.poisson
    lo, hi = DISPERSION_RANGE
    ok = lo <= p.dispersion <= hi and abs(p.mean_z) <= MEAN_Z_MAX
    criteria.append(
        Criterion(
            "poisson",
            bool(ok),
            f"window {list(p.window)}: mean={p.mean_count:.3f} predicted={p.predicted_mean:.3f} "
            f"z={p.mean_z:.2f} dispersion={p.dispersion:.3f}",
        )
    )
    for d in result_report.pd:
        criteria.append(
            Criterion(
                f"pd@{d.beta:.4g}",
                abs(d.mean_sum_sq - d.predicted) <= PD_TOL,
                f"mean sum xi^2={d.mean_sum_sq:.4f} predicted={d.predicted:.4f}",
            )
        )
    for o in result_report.overlap:
        ok = (
            o.mass_on_atoms >= OVERLAP_MASS_MIN
            and abs(o.mass_near_q - o.predicted_q) <= OVERLAP_ATOM_TOL
            and abs(o.mass_near_1 - o.predicted_1) <= OVERLAP_ATOM_TOL
        )
        criteria.append(
            Criterion(
                f"overlap@{o.beta:.4g}",
                bool(ok),
                f"near q={o.q:.3f}: {o.mass_near_q:.3f} (pred {o.predicted_q:.3f}), "
                f"near 1: {o.mass_near_1:.3f} (pred {o.predicted_1:.3f})",
            )
        )
    if result_report.control is not None:
        c = result_report.control
        criteria.append(
            Criterion(
                "deterministic-recentering-rejected",
                c.ks_distance >= CONTROL_FACTOR * c.critical_1,
                f"KS={c.ks_distance:.4f} (needs >= {CONTROL_FACTOR * c.critical_1:.4f})",
            )
        )
    if result_report.truncation is not None:
        t = result_report.truncation
        criteria.append(
            Criterion(
                "truncation-mass",
                t.deficit <= TRUNCATION_TOL,
                f"Z_{t.top_k}/Z_{t.reference_top_k} >= {t.min_fraction:.6f} over {t.n_replicas} replicas",
            )
        )
    diffs = [abs(r["diff"]) for r in entropy_rows if not math.isnan(r["diff"])]
    if diffs:
        worst = max(diffs)
        criteria.append(Criterion("entropy", worst <= ENTROPY_TOL, f"max |S_N - S| = {worst:.4f}"))
    if free_rows:
        worst = max(abs(r["diff"]) for r in free_rows)
        criteria.append(Criterion("free-energy", worst <= FREE_ENERGY_TOL, f"max |f_N - f| = {worst:.4f}"))
    return criteria


def cmd_analyze(experiment: ExperimentConfig, records_path: Path | None = None) -> AnalysisResult:
    """Run every test on a records file and write report.json and tables."""
    out = experiment.output_dir
    path = Path(records_path) if records_path else out / RECORDS_FILE
    records = RecordStore(path).load()
    if not records:
        raise InsufficientReplicas(0, extremal.MIN_REPLICAS)
    thermo = load_or_solve(experiment)
    if thermo.model is None:
        thermo.model = experiment.model

    pd_betas = [b for b in experiment.resolved_pd_betas(thermo) if _in_records(records, b)]
    report = extremal.analyze(
        records,
        thermo,
        window=experiment.window,
        pd_betas=pd_betas,
        overlap_tol=experiment.overlap_tol,
        control=_wants_control(experiment, records),
    )
    report.truncation = truncation_report(experiment, thermo, records)
    entropy_rows = entropy_table(records, thermo)
    free_rows = free_energy_table(records, thermo)
    result = AnalysisResult(
        report=report,
        criteria=_criteria(report, entropy_rows, free_rows),
        entropy_rows=entropy_rows,
        free_energy_rows=free_rows,
    )

    _write_json(out / REPORT_FILE, result.to_dict())
    tables = out / TABLES_DIR
    write_csv(tables / "replicas.csv", replica_table(records, thermo))
    write_csv(tables / "entropy.csv", entropy_rows)
    write_csv(tables / "empirical_free_energy.csv", free_rows)
    return result


def _in_records(records: Sequence[ReplicaRecord], beta: float) -> bool:
    try:
        records[0].beta_index(beta)
        return True
    except KeyError:
        log.warning("beta=%.6g is not among the simulated betas; skipping its PD and overlap tests", beta)
        return False

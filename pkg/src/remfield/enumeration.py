"""Exact enumeration of H_N(sigma) = X_N(sigma) + sum h_i sigma_i for one replica.

A configuration is identified by its spin pattern word: bit i set means
sigma_i = +1. The sweep visits patterns in Gray-code order. The Gray rank of a
pattern is the counter position of its Gaussian energy, so X_N can be
recomputed for any single configuration without replaying the sweep.

The sweep is vectorised per chunk rather than incremental: a chunk's field
energies are looked up from subset-sum tables over the low and high spin
blocks, not updated by +-2 h_i along the Gray path. Gray order only fixes
which counter block feeds which pattern.

The rank range is cut into chunks of CHUNK_BITS bits that do not depend on the
worker count, and chunk summaries are merged in chunk order. Records are
therefore bit-identical for any number of workers.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, ndtri

from remfield.errors import EmptyBin, InvalidSpec, ResourceError
from remfield.field import FieldModel, sample_field
from remfield.models import ReplicaRecord, TopEntry
from remfield.recentering import EmpiricalField, recentering_constants

log = logging.getLogger(__name__)

MAX_N = 30
MIN_N = 4
MAX_TOP_K = 4096
DEFAULT_TOP_K = 1024
DEFAULT_DELTA = 2.0
CHUNK_BITS = 16
NAIVE_MAX_N = 16

_ONE = np.uint64(1)
_MANTISSA_SHIFT = np.uint64(11)


# -- Gray code ---------------------------------------------------------------


def to_gray(rank: int) -> int:
    """Pattern visited at position `rank` of the Gray-code sweep."""
    return rank ^ (rank >> 1)


def from_gray(pattern: int) -> int:
    """Position of `pattern` in the Gray-code sweep."""
    rank, shift = pattern, 1
    while pattern >> shift:
        rank ^= pattern >> shift
        shift += 1
    return rank


def gray_patterns(start: int, size: int) -> np.ndarray:
    """Patterns at sweep positions start .. start+size-1."""
    ranks = np.arange(start, start + size, dtype=np.uint64)
    return ranks ^ (ranks >> _ONE)


# -- replica specification ---------------------------------------------------


@dataclass(frozen=True)
class ReplicaSpec:
    """Everything that determines one replica's record."""

    model: FieldModel
    n: int
    seed_field: int
    seed_energy: int
    betas: tuple[float, ...]
    top_k: int = DEFAULT_TOP_K
    delta: float = DEFAULT_DELTA
    entropy_grid: tuple[float, ...] = ()
    replica: int = 0

    def __post_init__(self):
        if self.n > MAX_N:
            raise ResourceError(f"n={self.n} exceeds the enumeration limit of {MAX_N}")
        if self.n < MIN_N:
            raise InvalidSpec(f"n must be at least {MIN_N}, got {self.n}")
        if not self.betas:
            raise InvalidSpec("betas must not be empty")
        if any(not (math.isfinite(b) and b > 0.0) for b in self.betas):
            raise InvalidSpec(f"betas must be positive, got {list(self.betas)}")
        if not 1 <= self.top_k <= MAX_TOP_K:
            raise InvalidSpec(f"top_k must lie in [1, {MAX_TOP_K}], got {self.top_k}")
        if not self.delta > 0.0:
            raise InvalidSpec(f"delta must be positive, got {self.delta}")
        for name in ("seed_field", "seed_energy"):
            value = getattr(self, name)
            if not 0 <= value < 2**64:
                raise InvalidSpec(f"{name} must be an unsigned 64-bit integer, got {value}")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "entropy_grid", tuple(float(e) for e in self.entropy_grid))

    @property
    def size(self) -> int:
        return 1 << self.n

    @property
    def chunk_size(self) -> int:
        return 1 << min(CHUNK_BITS, self.n)

    def sample_field(self) -> EmpiricalField:
        return sample_field(self.model, self.n, self.seed_field)


# -- energies ----------------------------------------------------------------


def gaussian_block(seed_energy: int, start: int, size: int, n: int) -> np.ndarray:
    """X_N at sweep positions start .. start+size-1; start must be a multiple of 4.

    Philox4x64 emits four words per counter value, so position k reads word
    k % 4 of counter block k // 4.
    """
    bitgen = np.random.Philox(key=seed_energy, counter=start // 4)
    words = bitgen.random_raw(size)
    u = ((words >> _MANTISSA_SHIFT).astype(np.float64) + 0.5) * 2.0**-53
    return math.sqrt(n) * ndtri(u)


class FieldTables:
    """Subset sums of h over the low and high halves of a pattern word."""

    def __init__(self, h: np.ndarray):
        self.n = h.size
        self.low_bits = self.n // 2
        self.mask = np.uint64((1 << self.low_bits) - 1)
        self.shift = np.uint64(self.low_bits)
        self.total = float(h.sum())
        self.low = _subset_sums(h[: self.low_bits])
        self.high = _subset_sums(h[self.low_bits :])

    def energy(self, patterns: np.ndarray) -> np.ndarray:
        """sum h_i sigma_i = -sum h + 2 * (sum of h over up spins)."""
        return -self.total + 2.0 * (self.low[patterns & self.mask] + self.high[patterns >> self.shift])


def _subset_sums(h: np.ndarray) -> np.ndarray:
    # table[j] = sum of h_i over the set bits of j, filled one site at a time
    table = np.zeros(1 << h.size)
    for i, hi in enumerate(h):
        width = 1 << i
        table[width : 2 * width] = table[:width] + hi
    return table


def energy_at(spec: ReplicaSpec, config_index: int) -> float:
    """H_N of one configuration, identical to the value the sweep assigns."""
    if not 0 <= config_index < spec.size:
        raise IndexError(f"configuration index {config_index} outside [0, 2^{spec.n})")
    tables = FieldTables(spec.sample_field().h)
    rank = from_gray(config_index)
    offset = rank % 4
    x = gaussian_block(spec.seed_energy, rank - offset, 4, spec.n)[offset : offset + 1]
    y = tables.energy(np.array([config_index], dtype=np.uint64))
    return float((x + y)[0])


# -- sweep -------------------------------------------------------------------


@dataclass
class ChunkSummary:
    """Streaming accumulators of a contiguous range of sweep positions."""

    count: int
    top_energy: np.ndarray
    top_pattern: np.ndarray
    lse_max: np.ndarray  # per beta
    lse_sum: np.ndarray  # per beta, sum of exp(beta H - lse_max)
    window_count: int
    entropy_counts: np.ndarray

    def merge(self, other: ChunkSummary, top_k: int) -> ChunkSummary:
        energy = np.concatenate([self.top_energy, other.top_energy])
        pattern = np.concatenate([self.top_pattern, other.top_pattern])
        top_energy, top_pattern = _select_top(energy, pattern, top_k)
        m = np.maximum(self.lse_max, other.lse_max)
        s = self.lse_sum * np.exp(self.lse_max - m) + other.lse_sum * np.exp(other.lse_max - m)
        return ChunkSummary(
            count=self.count + other.count,
            top_energy=top_energy,
            top_pattern=top_pattern,
            lse_max=m,
            lse_sum=s,
            window_count=self.window_count + other.window_count,
            entropy_counts=self.entropy_counts + other.entropy_counts,
        )


def _select_top(energy: np.ndarray, pattern: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    # k largest energies, descending; equal energies ordered by pattern
    if energy.size > k:
        keep = np.argpartition(-energy, k - 1)[:k]
        energy, pattern = energy[keep], pattern[keep]
    order = np.lexsort((pattern, -energy))
    return energy[order], pattern[order]


@dataclass
class _Sweep:
    spec: ReplicaSpec
    tables: FieldTables
    r: float
    betas: np.ndarray = field(init=False)
    bins: list[tuple[float, float]] = field(init=False)

    def __post_init__(self):
        self.betas = np.asarray(self.spec.betas)
        width = math.sqrt(self.spec.n)
        self.bins = [(e * self.spec.n, e * self.spec.n + width) for e in self.spec.entropy_grid]

    def chunk(self, index: int) -> ChunkSummary:
        spec = self.spec
        size = spec.chunk_size
        start = index * size
        patterns = gray_patterns(start, size)
        H = gaussian_block(spec.seed_energy, start, size, spec.n) + self.tables.energy(patterns)

        top_energy, top_pattern = _select_top(H, patterns, spec.top_k)
        scaled = self.betas[:, None] * H[None, :]
        lse_max = scaled.max(axis=1)
        lse_sum = np.exp(scaled - lse_max[:, None]).sum(axis=1)
        lo, hi = self.r - spec.delta, self.r + spec.delta
        window = int(np.count_nonzero((H >= lo) & (H <= hi)))

        ordered = np.sort(H)
        counts = np.array(
            [np.searchsorted(ordered, b, side="right") - np.searchsorted(ordered, a, side="left") for a, b in self.bins],
            dtype=np.int64,
        )
        return ChunkSummary(
            count=size,
            top_energy=top_energy,
            top_pattern=top_pattern,
            lse_max=lse_max,
            lse_sum=lse_sum,
            window_count=window,
            entropy_counts=counts,
        )


def spin_matrix(patterns: np.ndarray, n: int) -> np.ndarray:
    """Rows of +-1 spins for each pattern word."""
    bits = (patterns[:, None] >> np.arange(n, dtype=np.uint64)[None, :]) & _ONE
    return 2 * bits.astype(np.int64) - 1


def _gibbs_and_overlaps(spec: ReplicaSpec, top_energy: np.ndarray, top_pattern: np.ndarray, log_z: np.ndarray):
    spins = spin_matrix(top_pattern, spec.n).astype(np.float32)
    # dot products of +-1 vectors of length <= 30 are exact in float32
    dots = np.rint(spins @ spins.T).astype(np.int64)
    bins = ((dots + spec.n) // 2).ravel()
    lattice = (2.0 * np.arange(spec.n + 1) - spec.n) / spec.n

    weights, masses, overlaps = [], [], []
    for beta, lz in zip(spec.betas, log_z):
        scaled = beta * (top_energy - top_energy[0])
        w = np.exp(scaled)
        total = w.sum()
        w = w / total
        weights.append(w.tolist())
        top_log_z = beta * top_energy[0] + math.log(total)
        masses.append(min(1.0, math.exp(top_log_z - lz)))
        hist = np.bincount(bins, weights=np.outer(w, w).ravel(), minlength=spec.n + 1)
        overlaps.append([(float(lattice[j]), float(hist[j])) for j in np.flatnonzero(hist)])
    return weights, masses, overlaps


def _record(spec, constants, top_energy, top_pattern, log_z, window_count, entropy_counts) -> ReplicaRecord:
    weights, masses, overlaps = _gibbs_and_overlaps(spec, top_energy, top_pattern, log_z)
    r = constants.r
    top = [TopEntry(float(e), float(e - r), int(p)) for e, p in zip(top_energy, top_pattern)]
    return ReplicaRecord(
        replica=spec.replica,
        n=spec.n,
        seed_field=spec.seed_field,
        seed_energy=spec.seed_energy,
        constants=constants,
        max_energy=top[0].energy,
        recentered_max=top[0].recentered,
        top=top,
        betas=list(spec.betas),
        log_z=[float(v) for v in log_z],
        top_mass=masses,
        delta=spec.delta,
        window_count=int(window_count),
        gibbs_top_weights=weights,
        overlap_samples=overlaps,
        entropy_grid=list(spec.entropy_grid),
        entropy_counts=[int(c) for c in entropy_counts],
    )


def run_replica(spec: ReplicaSpec, workers: int = 1) -> ReplicaRecord:
    """Sweep all 2^n configurations of one replica and summarise them."""
    h = spec.sample_field()
    constants = recentering_constants(h)
    sweep = _Sweep(spec, FieldTables(h.h), constants.r)
    n_chunks = spec.size // spec.chunk_size

    summary: ChunkSummary | None = None
    if workers <= 1:
        parts = map(sweep.chunk, range(n_chunks))
        for part in parts:
            summary = part if summary is None else summary.merge(part, spec.top_k)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(sweep.chunk, range(n_chunks)):
                summary = part if summary is None else summary.merge(part, spec.top_k)

    assert summary is not None and summary.count == spec.size
    log_z = summary.lse_max + np.log(summary.lse_sum)
    log.debug("replica %d: n=%d max=%.6f r=%.6f", spec.replica, spec.n, summary.top_energy[0], constants.r)
    return _record(
        spec,
        constants,
        summary.top_energy,
        summary.top_pattern,
        log_z,
        summary.window_count,
        summary.entropy_counts,
    )


def naive_records(spec: ReplicaSpec) -> ReplicaRecord:
    """Full-materialisation oracle: every energy held in memory at once."""
    if spec.n > NAIVE_MAX_N:
        raise ResourceError(f"naive enumeration is limited to n <= {NAIVE_MAX_N}")
    h = spec.sample_field()
    constants = recentering_constants(h)
    patterns = np.arange(spec.size, dtype=np.uint64)
    ranks = np.array([from_gray(int(p)) for p in patterns], dtype=np.int64)
    x = gaussian_block(spec.seed_energy, 0, spec.size, spec.n)[ranks]
    H = x + spin_matrix(patterns, spec.n).astype(float) @ h.h

    order = np.lexsort((patterns, -H))[: spec.top_k]
    log_z = np.array([logsumexp(beta * H) for beta in spec.betas])
    r = constants.r
    window = np.count_nonzero(np.abs(H - r) <= spec.delta)
    width = math.sqrt(spec.n)
    counts = [np.count_nonzero((H >= e * spec.n) & (H <= e * spec.n + width)) for e in spec.entropy_grid]
    return _record(spec, constants, H[order], patterns[order], log_z, window, counts)


# -- record readers ----------------------------------------------------------


def empirical_free_energy(record: ReplicaRecord, n: int, beta: float) -> float:
    """(1/n) log Z_n(beta) of the replica."""
    return record.log_z[record.beta_index(beta)] / n


def empirical_entropy(record: ReplicaRecord, n: int, E: float) -> float:
    """(1/n) log #{sigma : H(sigma) in [E n, E n + sqrt(n)]}."""
    for e, count in zip(record.entropy_grid, record.entropy_counts):
        if abs(e - E) <= 1e-12 * max(1.0, abs(E)):
            if count == 0:
                raise EmptyBin(E)
            return math.log(count) / n
    raise KeyError(E)

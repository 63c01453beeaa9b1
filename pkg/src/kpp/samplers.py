"""Local sampling backends and sample postprocessing.

Backends: geometric-schedule simulated annealing (the default optimizer and
sampler), fixed-temperature Metropolis (a true Boltzmann sampler), and exact
enumeration (the brute-force oracle, capped at 24 spins).  All of them emit
:class:`SampleSet`, the de-duplicated unit of sampler output.

Determinism: every backend is a pure function of (problem, config, seed).
Randomness is drawn from named streams `PCG64(SeedSequence((seed, index)))`
where `index` is the read index (annealing), 0 (the single Metropolis chain),
or a reserved probe index (schedule auto-scaling).  Each stream's first `n`
uniforms set the initial state (u < 0.5 means spin -1), and each proposed
flip consumes exactly one uniform.  Reads therefore parallelize across any
number of workers without changing the output bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import _kernels
from .errors import (
    ConfigError,
    DomainError,
    EmptyProblemError,
    EmptySampleError,
    ParseError,
    SizeLimitError,
)
from .ising import IsingProblem, ising_energies

ENUMERATION_CAP = 24

# Reserved stream index for the schedule auto-scaling probe; read streams use
# indices 0..reads-1 and can never collide with it.
_PROBE_STREAM = 2**63

# Memory budget for pre-drawn per-read uniforms; larger jobs run in chunks of
# reads (chunking cannot change results because streams are per-read).
_UNIFORM_BUDGET_BYTES = 512 * 1024 * 1024


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, index))))


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric cooling ladder from t_initial down to t_final."""

    t_initial: float
    t_final: float = 0.05
    decay: float = 0.98
    sweeps_per_stage: int = 4

    def __post_init__(self):
        if not (self.t_initial > 0 and self.t_final > 0):
            raise ConfigError("temperatures must be positive")
        if self.t_final > self.t_initial:
            raise ConfigError("t_final must not exceed t_initial")
        if not 0.0 < self.decay < 1.0:
            raise ConfigError("decay must lie strictly inside (0, 1)")
        if self.sweeps_per_stage < 1:
            raise ConfigError("sweeps_per_stage must be positive")

    def temperatures(self) -> np.ndarray:
        temps = []
        t = self.t_initial
        while t > self.t_final:
            temps.append(t)
            t *= self.decay
        temps.append(self.t_final)
        return np.asarray(temps)


@dataclass(frozen=True)
class SamplerConfig:
    """Annealing-run configuration; `seed` is mandatory.

    `top_k=None` disables Top-K filtering; a value above `reads` is capped at
    `reads` (filtering beyond the pool is the identity).  `read_output`
    selects what each read reports: its best-visited state ("best", the
    optimizer semantic) or its final chain state ("final", an approximate
    Boltzmann sample at the schedule's end temperature).
    """

    seed: int
    reads: int = 2000
    schedule: AnnealSchedule | None = None  # None -> auto-scaled default
    top_k: int | None = 100
    read_output: str = "best"

    def __post_init__(self):
        if self.reads < 1:
            raise ConfigError("reads must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.read_output not in ("best", "final"):
            raise ConfigError(f"unknown read_output {self.read_output!r}")
        if self.top_k is not None:
            if self.top_k < 1:
                raise ConfigError("top_k must be >= 1")
            object.__setattr__(self, "top_k", min(self.top_k, self.reads))


@dataclass(frozen=True)
class FixedTempConfig:
    """Fixed-temperature Metropolis chain configuration."""

    seed: int
    beta: float
    sweeps: int
    burn_in: int = 0
    thin: int = 1

    def __post_init__(self):
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.sweeps < 1 or self.thin < 1 or self.burn_in < 0:
            raise ConfigError("sweeps >= 1, thin >= 1, burn_in >= 0 required")


@dataclass(frozen=True)
class ExactConfig:
    """Exact-enumeration backend configuration."""

    beta: float = 1.0
    reads: int = 2000

    def __post_init__(self):
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.reads < 1:
            raise ConfigError("reads must be >= 1")


@dataclass(frozen=True)
class SampleEntry:
    spins: tuple[int, ...]
    energy: float
    multiplicity: int


@dataclass(frozen=True)
class SampleSet:
    """Distinct spin configurations with exact energies and read counts.

    Entries are sorted ascending by energy, ties broken lexicographically by
    spins (-1 sorts before +1).  Multiplicities sum to the raw reads retained.
    """

    n: int
    entries: tuple[SampleEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def total_reads(self) -> int:
        return sum(e.multiplicity for e in self.entries)

    @property
    def best(self) -> SampleEntry:
        if not self.entries:
            raise EmptySampleError("empty sample set")
        return self.entries[0]

    def spins_matrix(self) -> np.ndarray:
        return np.array([e.spins for e in self.entries], dtype=np.float64).reshape(
            len(self.entries), self.n
        )

    def energies(self) -> np.ndarray:
        return np.array([e.energy for e in self.entries])

    def multiplicities(self) -> np.ndarray:
        return np.array([e.multiplicity for e in self.entries])


def build_sample_set(p: IsingProblem, raw_spins: np.ndarray, multiplicities=None) -> SampleSet:
    """De-duplicate raw +-1 rows, re-evaluate energies exactly, and sort."""
    raw_spins = np.asarray(raw_spins)
    if raw_spins.size == 0:
        return SampleSet(n=p.n, entries=())
    if multiplicities is None:
        uniq, counts = np.unique(raw_spins.astype(np.int8), axis=0, return_counts=True)
    else:
        # caller-supplied counts aligned with raw rows (already distinct)
        if len(raw_spins) != len(multiplicities):
            raise DomainError("multiplicities must align with rows")
        uniq = raw_spins.astype(np.int8)
        counts = np.asarray(multiplicities)
    energies = ising_energies(p, uniq.astype(np.float64))
    items = sorted(
        (float(e), tuple(int(v) for v in row), int(c))
        for e, row, c in zip(energies, uniq, counts)
    )
    entries = tuple(SampleEntry(spins=s, energy=e, multiplicity=c) for e, s, c in items)
    return SampleSet(n=p.n, entries=entries)


# ---------------------------------------------------------------------------
# Simulated annealing
# ---------------------------------------------------------------------------


def default_schedule(p: IsingProblem, seed: int) -> AnnealSchedule:
    """Auto-scaled schedule: t_initial = max(1, largest |single-flip dE|)
    measured from one random start drawn on a reserved stream."""
    rng = _stream(seed, _PROBE_STREAM)
    s = np.where(rng.random(p.n) < 0.5, -1.0, 1.0)
    local = p.coupling_matrix() @ s + p.field
    t_init = max(1.0, float(np.max(np.abs(2.0 * s * local)))) if p.n else 1.0
    return AnnealSchedule(t_initial=t_init)


def simulated_anneal(p: IsingProblem, cfg: SamplerConfig) -> SampleSet:
    """Run `reads` independent annealing chains and pool per-read states.

    By default each read reports the best configuration visited (not the
    final state), so pooled reads act as low-energy samples; configure
    `read_output="final"` to pool final chain states instead, which
    approximate Boltzmann samples at the schedule's end temperature.
    Results are de-duplicated with multiplicities and Top-K filtered when
    `top_k` is set.
    """
    if p.n == 0:
        raise EmptyProblemError("cannot sample a zero-variable problem")
    schedule = cfg.schedule or default_schedule(p, cfg.seed)
    temps = schedule.temperatures()
    n = p.n
    draws_per_read = n + len(temps) * schedule.sweeps_per_stage * n
    Jsym = p.coupling_matrix()
    h = np.ascontiguousarray(p.field)

    chunk = max(1, min(cfg.reads, _UNIFORM_BUDGET_BYTES // (8 * draws_per_read)))
    rows = []
    for start in range(0, cfg.reads, chunk):
        count = min(chunk, cfg.reads - start)
        inits = np.empty((count, n))
        uniforms = np.empty((count, draws_per_read - n))
        for r in range(count):
            u = _stream(cfg.seed, start + r).random(draws_per_read)
            inits[r] = np.where(u[:n] < 0.5, -1.0, 1.0)
            uniforms[r] = u[n:]
        best, _, final = _kernels.anneal_reads(
            Jsym, h, temps, schedule.sweeps_per_stage, inits, uniforms
        )
        rows.append(best if cfg.read_output == "best" else final)
    result = build_sample_set(p, np.vstack(rows))
    if cfg.top_k is not None:
        result = postprocess_topk(result, cfg.top_k)
    return result


def metropolis_fixed_temperature(
    p: IsingProblem,
    beta: float,
    sweeps: int,
    burn_in: int = 0,
    thin: int = 1,
    seed: int = 0,
) -> SampleSet:
    """Single-site Metropolis chain at fixed inverse temperature beta.

    The stationary distribution is Boltzmann(beta) for this module's energy
    convention.  Sites are proposed uniformly at random; after `burn_in`
    sweeps the chain state after every `thin`-th single-site step is retained
    (a sweep is n steps, so `sweeps` sweeps retain sweeps * n // thin states).
    """
    if p.n == 0:
        raise EmptyProblemError("cannot sample a zero-variable problem")
    cfg = FixedTempConfig(seed=seed, beta=beta, sweeps=sweeps, burn_in=burn_in, thin=thin)
    if cfg.sweeps * p.n // cfg.thin < 1:
        raise ConfigError("thin retains no states for this sweep count")
    n = p.n
    rng = _stream(cfg.seed, 0)
    u = rng.random(n + (cfg.burn_in + cfg.sweeps) * n * 2)
    init = np.where(u[:n] < 0.5, -1.0, 1.0)
    kept = _kernels.metropolis_chain(
        p.coupling_matrix(),
        np.ascontiguousarray(p.field),
        cfg.beta,
        cfg.sweeps,
        cfg.burn_in,
        cfg.thin,
        init,
        u[n:],
    )
    return build_sample_set(p, kept)


# ---------------------------------------------------------------------------
# Exact enumeration (brute-force oracle)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactDistribution:
    """Boltzmann distribution over all 2^n spin configurations.

    Configuration k has spin +1 at site i iff bit i of k is set.
    """

    n: int
    beta: float
    probabilities: np.ndarray
    log_partition: float

    def moments(self) -> "MomentEstimates":
        spins = all_spin_configs(self.n)
        first = self.probabilities @ spins
        second = spins.T @ (spins * self.probabilities[:, None])
        np.fill_diagonal(second, 1.0)
        return MomentEstimates(first=first, second=second)


def all_spin_configs(n: int) -> np.ndarray:
    """(2^n, n) matrix of +-1 rows; row k follows the bit convention above."""
    if n > ENUMERATION_CAP:
        raise SizeLimitError(f"n={n} exceeds enumeration cap {ENUMERATION_CAP}")
    idx = np.arange(1 << n, dtype=np.int64)
    return np.where((idx[:, None] >> np.arange(n)) & 1, 1.0, -1.0)


def enumerate_energies(p: IsingProblem) -> np.ndarray:
    """Energies of all 2^n configurations, without materializing the configs."""
    if p.n > ENUMERATION_CAP:
        raise SizeLimitError(f"n={p.n} exceeds enumeration cap {ENUMERATION_CAP}")
    if p.n == 0:
        raise EmptyProblemError("cannot enumerate a zero-variable problem")
    idx = np.arange(1 << p.n, dtype=np.int64)
    energies = np.full(idx.shape, p.offset)
    cols = {}

    def col(i: int) -> np.ndarray:
        if i not in cols:
            cols[i] = ((idx >> i) & 1).astype(np.float64) * 2.0 - 1.0
        return cols[i]

    for i in range(p.n):
        if p.field[i] != 0.0:
            energies += p.field[i] * col(i)
    for (i, j), c in p.coupling.items():
        energies += c * (col(i) * col(j))
    return energies


def exact_enumerate(p: IsingProblem, beta: float) -> ExactDistribution:
    """Exact Boltzmann probabilities and log Z via stable log-sum-exp."""
    if beta <= 0:
        raise DomainError("beta must be positive")
    energies = enumerate_energies(p)
    logits = -beta * energies
    m = float(np.max(logits))
    log_z = m + float(np.log(np.sum(np.exp(logits - m))))
    probs = np.exp(logits - log_z)
    return ExactDistribution(n=p.n, beta=beta, probabilities=probs, log_partition=log_z)


def exact_sample_set(p: IsingProblem, beta: float, reads: int) -> SampleSet:
    """Exact distribution rendered as a SampleSet of `reads` total reads.

    Multiplicities follow largest-remainder apportionment of the Boltzmann
    probabilities; configurations apportioned zero reads are dropped.
    """
    dist = exact_enumerate(p, beta)
    target = dist.probabilities * reads
    counts = np.floor(target).astype(np.int64)
    deficit = reads - int(counts.sum())
    if deficit > 0:
        order = np.argsort(-(target - counts), kind="stable")
        counts[order[:deficit]] += 1
    keep = counts > 0
    spins = all_spin_configs(p.n)[keep]
    return build_sample_set(p, spins, multiplicities=counts[keep])


def spins_to_index(spins) -> int:
    """Inverse of the ExactDistribution bit convention."""
    return int(sum(1 << i for i, s in enumerate(spins) if s > 0))


def empirical_probabilities(s: SampleSet) -> np.ndarray:
    """Multiplicity-weighted empirical distribution over all 2^n configs."""
    if s.n > ENUMERATION_CAP:
        raise SizeLimitError(f"n={s.n} exceeds enumeration cap {ENUMERATION_CAP}")
    probs = np.zeros(1 << s.n)
    total = s.total_reads
    for e in s.entries:
        probs[spins_to_index(e.spins)] = e.multiplicity / total
    return probs


def total_variation(s: SampleSet, dist: ExactDistribution) -> float:
    """TV distance between a sample set's empirical law and an exact one."""
    return 0.5 * float(np.abs(empirical_probabilities(s) - dist.probabilities).sum())


# ---------------------------------------------------------------------------
# Postprocessing
# ---------------------------------------------------------------------------


def postprocess_topk(raw: SampleSet, k: int) -> SampleSet:
    """Keep the k lowest-energy distinct configurations (lexicographic ties)."""
    if k < 1:
        raise DomainError("k must be >= 1")
    return SampleSet(n=raw.n, entries=raw.entries[:k])


@dataclass(frozen=True)
class MomentEstimates:
    """First and second spin moments; `second` is symmetric with unit diagonal."""

    first: np.ndarray
    second: np.ndarray


def estimate_moments(
    s: SampleSet, weighting: Literal["multiplicity", "uniform"] = "multiplicity"
) -> MomentEstimates:
    """Weighted empirical moments of a sample set.

    `multiplicity` weights configurations by read counts; `uniform` weights
    the distinct configurations equally.
    """
    if len(s.entries) == 0:
        raise EmptySampleError("cannot estimate moments from an empty sample set")
    if weighting not in ("multiplicity", "uniform"):
        raise ConfigError(f"unknown weighting {weighting!r}")
    spins = s.spins_matrix()
    if weighting == "multiplicity":
        w = s.multiplicities().astype(np.float64)
    else:
        w = np.ones(len(s.entries))
    w = w / w.sum()
    first = w @ spins
    second = spins.T @ (spins * w[:, None])
    np.fill_diagonal(second, 1.0)
    return MomentEstimates(first=first, second=second)


# ---------------------------------------------------------------------------
# Uniform dispatch
# ---------------------------------------------------------------------------

Backend = Literal["sa", "fixed_temp", "exact", "cim_remote"]


def sample(backend: str, p: IsingProblem, cfg, client_config=None) -> SampleSet:
    """Dispatch to a sampling backend; all backends return a SampleSet."""
    if backend == "sa":
        _expect(cfg, SamplerConfig, backend)
        return simulated_anneal(p, cfg)
    if backend == "fixed_temp":
        _expect(cfg, FixedTempConfig, backend)
        return metropolis_fixed_temperature(
            p, cfg.beta, cfg.sweeps, cfg.burn_in, cfg.thin, cfg.seed
        )
    if backend == "exact":
        _expect(cfg, ExactConfig, backend)
        return exact_sample_set(p, cfg.beta, cfg.reads)
    if backend == "cim_remote":
        _expect(cfg, SamplerConfig, backend)
        from .client import ClientConfig, sample_remote

        client_config = client_config or ClientConfig.from_env()
        return sample_remote(client_config, p, cfg)
    raise ConfigError(f"unknown backend {backend!r}")


def _expect(cfg, cls, backend: str):
    if not isinstance(cfg, cls):
        raise ConfigError(f"backend {backend!r} requires a {cls.__name__}")


# ---------------------------------------------------------------------------
# SampleSet text format: `# n=<n> reads=<reads> seed=<seed>` header, then one
# `energy multiplicity spins` line per entry with spins as a +- string.
# ---------------------------------------------------------------------------


def sampleset_to_text(s: SampleSet, seed: int) -> str:
    lines = [f"# n={s.n} reads={s.total_reads} seed={seed}"]
    for e in s.entries:
        spins = "".join("+" if v > 0 else "-" for v in e.spins)
        lines.append(f"{e.energy!r} {e.multiplicity} {spins}")
    return "\n".join(lines) + "\n"


def sampleset_from_text(text: str) -> SampleSet:
    n = None
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if n is None:
                fields = dict(
                    part.split("=", 1) for part in line[1:].split() if "=" in part
                )
                if "n" not in fields:
                    raise ParseError("header must carry n=<n>", lineno)
                n = int(fields["n"])
            continue
        if n is None:
            raise ParseError("entry before header", lineno)
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"malformed entry {line!r}", lineno)
        try:
            energy = float(parts[0])
            mult = int(parts[1])
        except ValueError:
            raise ParseError(f"malformed entry {line!r}", lineno) from None
        if set(parts[2]) - {"+", "-"} or len(parts[2]) != n:
            raise ParseError(f"bad spin string {parts[2]!r}", lineno)
        spins = tuple(1 if ch == "+" else -1 for ch in parts[2])
        entries.append(SampleEntry(spins=spins, energy=energy, multiplicity=mult))
    if n is None:
        raise ParseError("missing header")
    return SampleSet(n=n, entries=tuple(entries))
